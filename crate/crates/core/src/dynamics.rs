//! Exact quench dynamics in the eigenbasis and the diagonal ensemble.

use std::sync::Arc;

use faer::Mat;

use crate::c64;
use crate::error::{QmeError, Result};
use crate::hilbert::{DensityMatrix, PureState, SubsystemMap};
use crate::spectral::{EigenSystem, SpectrumKind};

/// Strictly increasing evaluation times. Floquet grids hold integer periods.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    floquet: bool,
}

impl TimeGrid {
    /// `t0, t0 + dt, …` up to `t_max` inclusive (within rounding of `dt`).
    pub fn uniform(t0: f64, t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !t0.is_finite() || !t_max.is_finite() || t_max < t0 {
            return Err(QmeError::param("time grid", "need finite t0 <= t_max and dt > 0"));
        }
        let steps = ((t_max - t0) / dt + 1e-9).floor() as usize;
        Ok(TimeGrid { times: (0..=steps).map(|k| t0 + k as f64 * dt).collect(), floquet: false })
    }

    /// Stroboscopic grid `k0, k0 + step, …, ≤ k_max` in Floquet periods.
    pub fn periods(k0: u64, k_max: u64, step: u64) -> Result<Self> {
        if step == 0 || k_max < k0 {
            return Err(QmeError::param("time grid", "need k0 <= k_max and a positive step"));
        }
        Ok(TimeGrid { times: (k0..=k_max).step_by(step as usize).map(|k| k as f64).collect(), floquet: true })
    }

    pub fn from_times(times: Vec<f64>, floquet: bool) -> Result<Self> {
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QmeError::param("time grid", "times must be non-empty and strictly increasing"));
        }
        if floquet && times.iter().any(|t| t.fract() != 0.0) {
            return Err(QmeError::param("time grid", "Floquet times must be integer periods"));
        }
        Ok(TimeGrid { times, floquet })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_floquet(&self) -> bool {
        self.floquet
    }
}

/// An eigensystem together with the overlaps `c_n = ⟨E_n|Ψ⟩` of an initial state.
#[derive(Clone, Debug)]
pub struct QuenchSetup {
    eigen: Arc<EigenSystem>,
    overlaps: Vec<c64>,
    weights: Vec<f64>,
}

impl QuenchSetup {
    pub fn new(eigen: Arc<EigenSystem>, initial: &PureState) -> Result<Self> {
        let (eb, sb) = (eigen.basis(), initial.basis());
        if eb.kind() != sb.kind() || eb.n_sites() != sb.n_sites() || eb.dim() != sb.dim() {
            return Err(QmeError::BasisMismatch("initial state and eigensystem live on different bases".into()));
        }
        let norm = initial.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QmeError::param("initial state", format!("norm {norm} is not 1")));
        }
        let overlaps = eigen.overlaps(initial.amplitudes())?;
        let weights: Vec<f64> = overlaps.iter().map(|c| c.norm_sqr()).collect();
        Ok(QuenchSetup { eigen, overlaps, weights })
    }

    pub fn eigensystem(&self) -> &Arc<EigenSystem> {
        &self.eigen
    }

    pub fn overlaps(&self) -> &[c64] {
        &self.overlaps
    }

    /// `w_n = |c_n|²`
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn phase(&self, n: usize, t: f64) -> c64 {
        match self.eigen.kind() {
            SpectrumKind::Energies => c64::cis(-self.eigen.values()[n] * t),
            SpectrumKind::Phases => c64::cis(self.eigen.values()[n] * t),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(QmeError::param("t", "time must be finite"));
        }
        if self.eigen.kind() == SpectrumKind::Phases && t.fract() != 0.0 {
            return Err(QmeError::param("t", format!("{t} is not an integer number of Floquet periods")));
        }
        Ok(())
    }

    /// `|Ψ(t)⟩ = Σ_n c_n e^{-iE_n t} |E_n⟩`, or `Σ_n c_n e^{ikθ_n} |v_n⟩` after `k` periods.
    pub fn evolve(&self, t: f64) -> Result<PureState> {
        let m = self.evolve_batch(&[t])?;
        PureState::new(self.eigen.basis().clone(), m.col_as_slice(0).to_vec())
    }

    /// States at all `times` as the columns of one matrix.
    pub fn evolve_batch(&self, times: &[f64]) -> Result<Mat<c64>> {
        for &t in times {
            self.check_time(t)?;
        }
        let d = self.eigen.dim();
        let coeffs = Mat::from_fn(d, times.len(), |n, j| self.overlaps[n] * self.phase(n, times[j]));
        Ok(self.eigen.vectors() * coeffs)
    }

    /// Reduced matrices `ρ_A(t)` over a time grid, evaluated in memory-bounded chunks.
    pub fn reduced_series(&self, map: &SubsystemMap, grid: &TimeGrid) -> Result<Vec<DensityMatrix>> {
        if grid.is_floquet() != (self.eigen.kind() == SpectrumKind::Phases) {
            return Err(QmeError::param("time grid", "Floquet grids pair with unitary eigensystems only"));
        }
        let d = self.eigen.dim().max(1);
        // about 32 MiB of complex amplitudes per chunk
        let chunk = ((1usize << 21) / d).clamp(1, 512);
        let mut out = Vec::with_capacity(grid.len());
        for times in grid.times().chunks(chunk) {
            let states = self.evolve_batch(times)?;
            out.extend(map.reduce_columns(states.as_ref())?);
        }
        Ok(out)
    }

    /// Exact average of `ρ^A(t)` over `[t0, t1]`: off-diagonal terms integrate to
    /// `(e^{-iω t1} − e^{-iω t0}) / (−iω (t1 − t0))` with `ω = E_m − E_n`.
    pub fn window_average(&self, map: &SubsystemMap, t0: f64, t1: f64) -> Result<DensityMatrix> {
        if self.eigen.kind() != SpectrumKind::Energies {
            return Err(QmeError::param("spectrum", "continuous window averages need a Hamiltonian"));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(QmeError::param("window", "need finite t0 < t1"));
        }
        let e = self.eigen.values();
        let c = &self.overlaps;
        let span = t1 - t0;
        let g = Mat::from_fn(e.len(), e.len(), |m, n| {
            let w = e[m] - e[n];
            let f = if w.abs() * span < 1e-9 {
                c64::cis(-w * 0.5 * (t0 + t1))
            } else {
                (c64::cis(-w * t1) - c64::cis(-w * t0)) / c64::new(0.0, -w * span)
            };
            c[m] * c[n].conj() * f
        });
        let v = self.eigen.vectors();
        let avg = v * &g * v.adjoint();
        // a time average of pure states is PSD, so its eigenvectors form a mixture
        let herm = Mat::from_fn(avg.nrows(), avg.ncols(), |i, j| (avg[(i, j)] + avg[(j, i)].conj()) * 0.5);
        let eig = herm
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|err| QmeError::Numerical(format!("window average did not diagonalize: {err:?}")))?;
        let weights: Vec<f64> = (0..herm.nrows()).map(|i| eig.S()[i].re).collect();
        map.reduce_mixture(eig.U(), &weights)
    }

    /// `ρ_DE^A = Σ_n w_n Tr_B |E_n⟩⟨E_n|`.
    pub fn diagonal_ensemble(&self, map: &SubsystemMap) -> Result<DiagonalEnsemble> {
        let rho = map.reduce_mixture(self.eigen.vectors(), &self.weights)?;
        Ok(DiagonalEnsemble { weights: self.weights.clone(), rho_a: rho })
    }
}

#[derive(Clone, Debug)]
pub struct DiagonalEnsemble {
    weights: Vec<f64>,
    rho_a: DensityMatrix,
}

impl DiagonalEnsemble {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn reduced(&self) -> &DensityMatrix {
        &self.rho_a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_basis, BasisKind, Bipartition, SpinBasis};
    use crate::models::{build_kicked_ising, build_mfim, KickedIsingParams, MfimParams};
    use crate::spectral::{eig_hermitian, eig_unitary};
    use crate::states::uniform_product_state;

    fn full(n: usize) -> Arc<SpinBasis> {
        Arc::new(build_basis(n, BasisKind::Full).unwrap())
    }

    #[test]
    fn grid_shapes() {
        let g = TimeGrid::uniform(0.0, 20.0, 0.05).unwrap();
        assert_eq!(g.len(), 401);
        assert!((g.times()[400] - 20.0).abs() < 1e-12);
        assert_eq!(TimeGrid::periods(0, 150, 1).unwrap().len(), 151);
        assert!(TimeGrid::from_times(vec![0.0, 0.0], false).is_err());
        assert!(TimeGrid::from_times(vec![0.5], true).is_err());
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let b = full(5);
        let h = build_mfim(&b, &MfimParams::default()).unwrap();
        let eig = Arc::new(eig_hermitian(&h).unwrap());
        let psi = uniform_product_state(&b, 0.9, 0.4).unwrap();
        let q = QuenchSetup::new(eig, &psi).unwrap();
        let back = q.evolve(0.0).unwrap();
        for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floquet_matches_repeated_application() {
        let b = full(6);
        let u = build_kicked_ising(&b, &KickedIsingParams::default()).unwrap();
        let eig = Arc::new(eig_unitary(&u).unwrap());
        let psi = uniform_product_state(&b, 0.3, 0.0).unwrap();
        let q = QuenchSetup::new(eig, &psi).unwrap();
        let mut v = Mat::from_fn(b.dim(), 1, |i, _| psi.amplitudes()[i]);
        for _ in 0..7 {
            v = u.matrix() * &v;
        }
        let k7 = q.evolve(7.0).unwrap();
        for i in 0..b.dim() {
            assert!((k7.amplitudes()[i] - v[(i, 0)]).norm() < 1e-10);
        }
        assert!(q.evolve(1.5).is_err());
    }

    #[test]
    fn uniform_weights_give_maximally_mixed_ensemble() {
        let b = full(6);
        let h = build_mfim(&b, &MfimParams::default()).unwrap();
        let eig = eig_hermitian(&h).unwrap();
        let map = SubsystemMap::new(&b, Bipartition::left_half(6)).unwrap();
        let w = vec![1.0 / 64.0; 64];
        let rho = map.reduce_mixture(eig.vectors(), &w).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let target = if i == j { 0.125 } else { 0.0 };
                assert!((rho.matrix()[(i, j)] - c64::new(target, 0.0)).norm() < 1e-12);
            }
        }
    }
}
