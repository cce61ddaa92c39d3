//! Reference implementations shared by the oracle and acceptance targets.
#![allow(dead_code)]

use std::sync::Arc;

use faer::{Mat, MatRef, Side};
use qme_core::c64;
use qme_core::diagnostics::{entanglement_asymmetry, trace_distance, von_neumann_entropy};
use qme_core::dynamics::{QuenchSetup, TimeGrid};
use qme_core::hilbert::{build_basis, BasisKind, Bipartition, SpinBasis, SubsystemMap};
use qme_core::models::{build_mfim, build_xxz_nnn, MfimParams, XxzNnnParams};
use qme_core::spectral::{eig_hermitian, r_statistic};
use qme_core::states::{tilted_fm, uniform_product_state, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `acc += s · m`
pub fn add_scaled(acc: &mut Mat<c64>, m: MatRef<'_, c64>, s: c64) {
    for j in 0..acc.ncols() {
        for i in 0..acc.nrows() {
            acc[(i, j)] += m[(i, j)] * s;
        }
    }
}

pub fn max_diff(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring with a 30-term Taylor series.
pub fn expm(a: &Mat<c64>) -> Mat<c64> {
    let d = a.nrows();
    let norm: f64 = (0..d).map(|i| (0..d).map(|j| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let scaled = Mat::from_fn(d, d, |i, j| a[(i, j)] * 0.5f64.powi(s));
    let mut result = Mat::<c64>::identity(d, d);
    let mut term = Mat::<c64>::identity(d, d);
    for k in 1..30 {
        let next = &term * &scaled;
        term = Mat::zeros(d, d);
        add_scaled(&mut term, next.as_ref(), c64::new(1.0 / k as f64, 0.0));
        result = &result + &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// `Tr_B |u⟩⟨v|` for `A` = the lowest `n_a` bits, in natural label order.
pub fn partial_trace_outer(u: &[c64], v: &[c64], n_a: usize) -> Mat<c64> {
    let d_a = 1usize << n_a;
    let d_b = u.len() / d_a;
    Mat::from_fn(d_a, d_a, |a, a2| (0..d_b).map(|b| u[a + b * d_a] * v[a2 + b * d_a].conj()).sum())
}

pub fn trace_norm_half(m: &Mat<c64>) -> f64 {
    let vals = m.self_adjoint_eigenvalues(Side::Lower).unwrap();
    0.5 * vals.iter().map(|x| x.abs()).sum::<f64>()
}

fn full(n: usize) -> Arc<SpinBasis> {
    Arc::new(build_basis(n, BasisKind::Full).unwrap())
}

/// Largest amplitude error of eigenbasis evolution against `exp(−iHt)ψ`
/// for the golden mixed-field chain at N = 6.
pub fn evolution_oracle_error() -> f64 {
    let b = full(6);
    let h = build_mfim(&b, &MfimParams::default()).unwrap();
    let hm = h.matrix().to_complex();
    let psi = uniform_product_state(&b, 1.1, 0.4).unwrap();
    let q = QuenchSetup::new(Arc::new(eig_hermitian(&h).unwrap()), &psi).unwrap();
    [0.3, 2.7, 9.4]
        .iter()
        .map(|&t| {
            let u = expm(&Mat::from_fn(64, 64, |i, j| hm[(i, j)] * c64::new(0.0, -t)));
            let reference: Vec<c64> = (0..64).map(|i| (0..64).map(|j| u[(i, j)] * psi.amplitudes()[j]).sum()).collect();
            max_diff(q.evolve(t).unwrap().amplitudes(), &reference)
        })
        .fold(0.0, f64::max)
}

/// Largest gap between the library trace distance to the diagonal ensemble
/// and half the trace norm of the off-diagonal eigenpair sum, N = 6.
pub fn dephasing_oracle_error() -> f64 {
    let n = 6;
    let b = full(n);
    let h = build_mfim(&b, &MfimParams::default()).unwrap();
    let eig = Arc::new(eig_hermitian(&h).unwrap());
    let psi = uniform_product_state(&b, 2.0, 0.0).unwrap();
    let q = QuenchSetup::new(eig.clone(), &psi).unwrap();
    let map = SubsystemMap::new(&b, Bipartition::left_half(n)).unwrap();
    let de = q.diagonal_ensemble(&map).unwrap();
    let c = q.overlaps();
    let v = eig.vectors();
    let cols: Vec<Vec<c64>> = (0..64).map(|k| (0..64).map(|i| v[(i, k)]).collect()).collect();
    let pair_traces: Vec<Vec<Mat<c64>>> =
        (0..64).map(|m| (0..64).map(|k| partial_trace_outer(&cols[m], &cols[k], 3)).collect()).collect();
    let times = [0.0, 1.5, 4.0];
    let series = q.reduced_series(&map, &TimeGrid::from_times(times.to_vec(), false).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for (ti, &t) in times.iter().enumerate() {
        let mut off = Mat::<c64>::zeros(8, 8);
        for m in 0..64 {
            for k in 0..64 {
                if m == k {
                    continue;
                }
                let phase = c64::from_polar(1.0, -(eig.values()[m] - eig.values()[k]) * t);
                add_scaled(&mut off, pair_traces[m][k].as_ref(), c[m] * c[k].conj() * phase);
            }
        }
        let got = trace_distance(&series[ti], de.reduced()).unwrap();
        worst = worst.max((got - trace_norm_half(&off)).abs());
    }
    worst
}

fn entropy_of(x: &Mat<c64>) -> f64 {
    x.self_adjoint_eigenvalues(Side::Lower).unwrap().iter().filter(|&&l| l > 1e-14).map(|&l| -l * l.ln()).sum()
}

/// Largest gap between the library entanglement asymmetry and one built from
/// explicit charge projectors, XXZ chain at N = 10 with |A| = 5. The second
/// value is the same comparison for the plain entropy.
pub fn asymmetry_oracle_error() -> (f64, f64) {
    let n = 10;
    let b = full(n);
    let h = build_xxz_nnn(&b, &XxzNnnParams::default()).unwrap();
    let psi = tilted_fm(&b, Axis::Y, 0.6).unwrap();
    let q = QuenchSetup::new(Arc::new(eig_hermitian(&h).unwrap()), &psi).unwrap();
    let map = SubsystemMap::new(&b, Bipartition::left(n, 5).unwrap()).unwrap();
    let grid = TimeGrid::from_times(vec![0.0, 0.8, 3.0], false).unwrap();
    let (mut asym, mut ent): (f64, f64) = (0.0, 0.0);
    for rho in q.reduced_series(&map, &grid).unwrap() {
        let d = rho.dim();
        let m = rho.matrix();
        let q_of = |i: usize| 5 - 2 * rho.labels()[i].count_ones() as i32;
        let mut dephased = Mat::<c64>::zeros(d, d);
        for charge in (-5..=5).step_by(2) {
            let p =
                Mat::from_fn(
                    d,
                    d,
                    |i, j| {
                        if i == j && q_of(i) == charge {
                            c64::new(1.0, 0.0)
                        } else {
                            c64::new(0.0, 0.0)
                        }
                    },
                );
            dephased = &dephased + &p * m * &p;
        }
        let s = entropy_of(&m.to_owned());
        asym = asym.max((entanglement_asymmetry(&rho).unwrap() - (entropy_of(&dephased) - s)).abs());
        ent = ent.max((von_neumann_entropy(&rho).unwrap() - s).abs());
    }
    (asym, ent)
}

/// ⟨r⟩ of sampled GOE matrices and of Poisson levels, through the same
/// window and merge rules as the library.
pub fn sampled_r_references(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, samples) = (400, 30);
    let mut goe = 0.0;
    let mut poisson = 0.0;
    for _ in 0..samples {
        let mut a = Mat::<f64>::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let x: f64 = rng.sample(StandardNormal);
                let x = if i == j { x * 2f64.sqrt() } else { x };
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        let vals = a.self_adjoint_eigenvalues(Side::Lower).unwrap();
        goe += r_statistic(&vals, 0.6).unwrap() / samples as f64;
        let mut levels: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        levels.sort_by(f64::total_cmp);
        poisson += r_statistic(&levels, 0.6).unwrap() / samples as f64;
    }
    (goe, poisson)
}
