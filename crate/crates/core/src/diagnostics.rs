//! Scalar diagnostics of reduced density matrices and energy-basis overlaps.

use faer::{Mat, MatRef, Side};

use crate::c64;
use crate::error::{QmeError, Result};
use crate::hilbert::DensityMatrix;

/// Eigenvalues below this are treated as exact zeros in entropies.
pub const EIGENVALUE_FLOOR: f64 = 1e-14;

fn hermitian_eigenvalues(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    let d = m.nrows();
    // symmetrize to remove rounding-level anti-Hermitian parts
    let h = Mat::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let vals = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| QmeError::Numerical(format!("eigenvalues did not converge: {e:?}")))?;
    Ok(vals)
}

fn check_pair(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if !rho.same_layout(sigma) {
        return Err(QmeError::BasisMismatch(format!(
            "density matrices have different layouts ({} vs {})",
            rho.dim(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// `½ ‖ρ − σ‖₁`
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    let diff = rho.matrix() - sigma.matrix();
    let vals = hermitian_eigenvalues(diff.as_ref())?;
    Ok((0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()).clamp(0.0, 1.0))
}

fn tr_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let d = a.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// `sqrt(1 − min(1, 2 Tr[ρσ] / Tr[ρ² + σ²]))`
pub fn frobenius_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    let (r, s) = (rho.matrix(), sigma.matrix());
    let cross = tr_product(r, s);
    let denom = tr_product(r, r) + tr_product(s, s);
    if !(denom > 0.0) {
        return Err(QmeError::Numerical("zero purity in Frobenius distance".into()));
    }
    Ok((1.0 - (2.0 * cross / denom).min(1.0)).max(0.0).sqrt())
}

fn entropy_of(vals: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &p in vals {
        if p < -1e-10 {
            return Err(QmeError::Numerical(format!("density matrix has eigenvalue {p:.3e}")));
        }
        if p > EIGENVALUE_FLOOR {
            s -= p * p.ln();
        }
    }
    Ok(s.max(0.0))
}

/// `−Tr ρ ln ρ` (natural log).
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_of(&hermitian_eigenvalues(rho.matrix())?)
}

/// `Tr ρ (ln ρ − ln σ)`; `f64::INFINITY` when `ρ` has weight outside the support of `σ`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    let d = sigma.dim();
    let s = sigma.matrix();
    let sh = Mat::from_fn(d, d, |i, j| (s[(i, j)] + s[(j, i)].conj()) * 0.5);
    let e = sh
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| QmeError::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    let w = e.U();
    let rotated = w.adjoint() * rho.matrix() * w;
    let mut cross = 0.0;
    for k in 0..d {
        let mu = e.S()[k].re;
        let p = rotated[(k, k)].re;
        if mu <= EIGENVALUE_FLOOR {
            if p > 1e-10 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        cross += p * mu.ln();
    }
    let s_rho = von_neumann_entropy(rho)?;
    Ok((-s_rho - cross).max(0.0))
}

/// Subsystem charge `Q_A = Σ_{i∈A} σᶻ_i` of a local configuration label.
pub fn subsystem_charge(label: u32, n_a: usize) -> i32 {
    n_a as i32 - 2 * label.count_ones() as i32
}

/// `ΔS_A = S(Σ_q P_q ρ P_q) − S(ρ)` for the magnetization of `A`.
pub fn entanglement_asymmetry(rho: &DensityMatrix) -> Result<f64> {
    let n_a = rho.n_sites();
    let charges: Vec<i32> = rho.labels().iter().map(|&l| subsystem_charge(l, n_a)).collect();
    let mut sectors: Vec<i32> = charges.clone();
    sectors.sort_unstable();
    sectors.dedup();
    let m = rho.matrix();
    let mut block_vals = Vec::with_capacity(rho.dim());
    for q in sectors {
        let idx: Vec<usize> = (0..charges.len()).filter(|&i| charges[i] == q).collect();
        let block = Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
        block_vals.extend(hermitian_eigenvalues(block.as_ref())?);
    }
    let dephased = entropy_of(&block_vals)?;
    Ok(dephased - von_neumann_entropy(rho)?)
}

/// `Σ_n |c_n|⁴`
pub fn ipr(overlaps: &[c64]) -> Result<f64> {
    let total: f64 = overlaps.iter().map(|c| c.norm_sqr()).sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(QmeError::param("overlaps", format!("squared overlaps sum to {total}, not 1")));
    }
    Ok(overlaps.iter().map(|c| c.norm_sqr().powi(2)).sum())
}

/// `(Σ w_n E_n, Σ w_n E_n² − mean²)` from energy weights.
pub fn energy_moments(energies: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = energies.iter().zip(weights).map(|(e, w)| e * w).sum();
    let second: f64 = energies.iter().zip(weights).map(|(e, w)| e * e * w).sum();
    (mean, (second - mean * mean).max(0.0))
}

/// Energy-resolved overlap weights `(E_n, |c_n|²)` measured from the ground-state energy.
#[derive(Clone, Debug)]
pub struct OverlapSpectrum {
    energies: Vec<f64>,
    weights: Vec<f64>,
    e0: f64,
}

impl OverlapSpectrum {
    pub fn new(energies: &[f64], weights: &[f64]) -> Result<Self> {
        if energies.len() != weights.len() || energies.is_empty() {
            return Err(QmeError::param("overlap spectrum", "energies and weights must match and be non-empty"));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(QmeError::param("overlap spectrum", "energies must be ascending"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(QmeError::param("overlap spectrum", format!("weights sum to {total}")));
        }
        Ok(OverlapSpectrum { energies: energies.to_vec(), weights: weights.to_vec(), e0: energies[0] })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ground_energy(&self) -> f64 {
        self.e0
    }

    pub fn span(&self) -> f64 {
        self.energies[self.energies.len() - 1] - self.e0
    }

    /// `0.05 · span / N`
    pub fn default_broadening(&self, n_sites: usize) -> f64 {
        0.05 * self.span() / n_sites as f64
    }

    /// Gaussian-broadened `O(ω) = Σ_n w_n g_σ(ω − (E_n − E_0))`.
    pub fn spectral_function(&self, omegas: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if !(sigma > 0.0) {
            return Err(QmeError::param("sigma", "broadening must be positive"));
        }
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        Ok(omegas
            .iter()
            .map(|&w| {
                self.energies
                    .iter()
                    .zip(&self.weights)
                    .map(|(e, p)| {
                        let x = (w - (e - self.e0)) / sigma;
                        p * norm * (-0.5 * x * x).exp()
                    })
                    .sum()
            })
            .collect())
    }
}
