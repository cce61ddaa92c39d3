//! Long-time averages of the reduced state approach the diagonal ensemble.

use std::sync::Arc;

use qme_core::diagnostics::trace_distance;
use qme_core::dynamics::QuenchSetup;
use qme_core::hilbert::{build_basis, BasisKind, Bipartition, SubsystemMap};
use qme_core::models::{build_random_model, RandomModelParams};
use qme_core::spectral::eig_hermitian;
use qme_core::states::uniform_product_state;

fn distance_after_window(j_h: f64, t0: f64, t1: f64, theta: f64, phi: f64) -> f64 {
    let n = 8;
    let b = Arc::new(build_basis(n, BasisKind::Full).unwrap());
    let h = build_random_model(&b, &RandomModelParams { seed: 1, j_h, ..Default::default() }).unwrap();
    let q = QuenchSetup::new(Arc::new(eig_hermitian(&h).unwrap()), &uniform_product_state(&b, theta, phi).unwrap())
        .unwrap();
    let map = SubsystemMap::new(&b, Bipartition::left_half(n)).unwrap();
    trace_distance(&q.window_average(&map, t0, t1).unwrap(), q.diagonal_ensemble(&map).unwrap().reduced()).unwrap()
}

// Without the Heisenberg term the spectrum has no near-degenerate multiplets
// and a window of 10⁴ dephases to well below 1e-3.
#[test]
fn dephasing_without_heisenberg_coupling() {
    for (theta, phi) in [(1.0, 0.5), (2.0, 3.0)] {
        let d = distance_after_window(0.0, 100.0, 10_100.0, theta, phi);
        assert!(d < 1e-3, "θ = {theta}: {d}");
    }
}

#[test]
fn longer_windows_dephase_further() {
    let d = [1_000.0, 10_000.0, 100_000.0].map(|t| distance_after_window(-4.0, 100.0, 100.0 + t, 1.0, 0.5));
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
}
