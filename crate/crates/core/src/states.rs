//! Initial-state families: product states on the Bloch sphere, axis-rotated
//! ferromagnets, random-angle ensembles, a bond-dimension-2 MPS family,
//! blockade-model special states and randomly entangled states.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::error::{QmeError, Result};
use crate::hilbert::{BasisKind, PureState, SpinBasis};
use crate::local::{self, Op4};
use crate::models::MfimParams;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Bloch angles of a single spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochAngles {
    pub theta: f64,
    pub phi: f64,
}

impl BlochAngles {
    pub fn new(theta: f64, phi: f64) -> Self {
        BlochAngles { theta, phi }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=PI).contains(&self.theta) {
            return Err(QmeError::param("theta", format!("{} is outside [0, π]", self.theta)));
        }
        if !(0.0..2.0 * PI).contains(&self.phi) {
            return Err(QmeError::param("phi", format!("{} is outside [0, 2π)", self.phi)));
        }
        Ok(())
    }

    /// `(⟨↑|s⟩, ⟨↓|s⟩) = (cos θ/2, e^{iφ} sin θ/2)`
    fn amplitudes(&self) -> [c64; 2] {
        let h = 0.5 * self.theta;
        [c64::new(h.cos(), 0.0), c64::cis(self.phi) * h.sin()]
    }
}

/// Amplitudes `Σ_s c_s f(s)` over the components of every basis element.
fn from_config_fn(basis: &Arc<SpinBasis>, f: impl Fn(u32) -> c64) -> Result<PureState> {
    let amps = (0..basis.dim()).map(|k| basis.components(k).iter().map(|&(s, c)| f(s) * c).sum()).collect();
    PureState::new(basis.clone(), amps)
}

/// Normalized state built on a non-full basis must not have lost weight.
fn require_contained(state: &PureState) -> Result<()> {
    let n2 = state.norm().powi(2);
    if (n2 - 1.0).abs() > 1e-10 {
        return Err(QmeError::BasisMismatch(format!(
            "state has weight {:.3e} outside the {:?} basis",
            1.0 - n2,
            state.basis().kind()
        )));
    }
    Ok(())
}

/// `⊗_i (cos θ_i/2 |↑⟩ + e^{iφ_i} sin θ_i/2 |↓⟩)`.
///
/// On a reduced basis the product state is projected and must lie entirely
/// inside it.
pub fn product_state(basis: &Arc<SpinBasis>, angles: &[BlochAngles]) -> Result<PureState> {
    let n = basis.n_sites();
    if angles.len() != n {
        return Err(QmeError::param("angles", format!("expected {n} site angles, got {}", angles.len())));
    }
    for a in angles {
        a.validate()?;
    }
    let site: Vec<[c64; 2]> = angles.iter().map(BlochAngles::amplitudes).collect();
    let state = from_config_fn(basis, |s| {
        let mut amp = c64::new(1.0, 0.0);
        for (i, a) in site.iter().enumerate() {
            amp *= a[((s >> i) & 1) as usize];
        }
        amp
    })?;
    require_contained(&state)?;
    Ok(state)
}

pub fn uniform_product_state(basis: &Arc<SpinBasis>, theta: f64, phi: f64) -> Result<PureState> {
    product_state(basis, &vec![BlochAngles::new(theta, phi); basis.n_sites()])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = QmeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(QmeError::param("axis", format!("`{other}` is not one of x, y, z"))),
        }
    }
}

/// `exp(-i θ/2 Σ_i σ^α_i) |↑…↑⟩` for `α ∈ {x, y, z}`, `θ ∈ [0, π]`.
pub fn tilted_fm(basis: &Arc<SpinBasis>, axis: Axis, theta: f64) -> Result<PureState> {
    match axis {
        Axis::Y => uniform_product_state(basis, theta, 0.0),
        // e^{-iθσˣ/2}|↑⟩ = cos(θ/2)|↑⟩ - i sin(θ/2)|↓⟩
        Axis::X => uniform_product_state(basis, theta, 1.5 * PI),
        Axis::Z => {
            if !(0.0..=PI).contains(&theta) {
                return Err(QmeError::param("theta", format!("{theta} is outside [0, π]")));
            }
            uniform_product_state(basis, 0.0, 0.0)
        }
    }
}

/// Per-site angles `θ_i ~ U[0, fπ]`, `φ_i ~ U[0, 2πf)`, drawn site by site.
pub fn random_angles(n_sites: usize, f: f64, seed: u64) -> Result<Vec<BlochAngles>> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(QmeError::param("f", format!("{f} is outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_sites)
        .map(|_| {
            let theta = rng.random::<f64>() * f * PI;
            let phi = rng.random::<f64>() * f * 2.0 * PI;
            BlochAngles::new(theta, phi)
        })
        .collect())
}

pub fn random_angle_state(basis: &Arc<SpinBasis>, f: f64, seed: u64) -> Result<PureState> {
    product_state(basis, &random_angles(basis.n_sites(), f, seed)?)
}

/// Bond-dimension-2 MPS with `A↓ = [[cos θ, 0], [sin θ, 0]]`, `A↑ = [[0, -i], [0, 0]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsSpec {
    pub theta: f64,
    #[serde(default = "MpsSpec::default_boundary")]
    pub left: [f64; 2],
    #[serde(default = "MpsSpec::default_boundary")]
    pub right: [f64; 2],
}

impl MpsSpec {
    pub fn new(theta: f64) -> Self {
        MpsSpec { theta, left: [1.0, 0.0], right: [1.0, 0.0] }
    }

    fn default_boundary() -> [f64; 2] {
        [1.0, 0.0]
    }

    fn matrices(&self) -> [[[c64; 2]; 2]; 2] {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let up = [[ZERO, c64::new(0.0, -1.0)], [ZERO, ZERO]];
        let down = [[c64::new(c, 0.0), ZERO], [c64::new(s, 0.0), ZERO]];
        [up, down]
    }

    /// Unnormalized amplitude `lᵀ A^{s_1} ⋯ A^{s_N} r`.
    pub fn amplitude(&self, config: u32, n_sites: usize) -> c64 {
        let mats = self.matrices();
        let mut v = [c64::new(self.left[0], 0.0), c64::new(self.left[1], 0.0)];
        for i in 0..n_sites {
            let a = &mats[((config >> i) & 1) as usize];
            v = [v[0] * a[0][0] + v[1] * a[1][0], v[0] * a[0][1] + v[1] * a[1][1]];
        }
        v[0] * self.right[0] + v[1] * self.right[1]
    }
}

/// Finite truncation of the MPS family, normalized after contraction.
pub fn mps_state(basis: &Arc<SpinBasis>, spec: &MpsSpec) -> Result<PureState> {
    if matches!(basis.kind(), BasisKind::ReflectionSector(_)) {
        return Err(QmeError::BasisMismatch("MPS states are built on the full or blockaded basis".into()));
    }
    let n = basis.n_sites();
    let state = from_config_fn(basis, |s| spec.amplitude(s, n))?;
    if !(state.norm() > 1e-300) {
        return Err(QmeError::param("mps boundary", "boundary vectors give a zero state"));
    }
    state.normalized()
}

fn special_config(n_sites: usize, up: impl Fn(usize) -> bool) -> u32 {
    (0..n_sites).filter(|&i| !up(i)).fold(0, |acc, i| acc | (1 << i))
}

/// `|↓↑↓↑…⟩`
pub fn pxp_z2(basis: &Arc<SpinBasis>) -> Result<PureState> {
    PureState::basis_state(basis.clone(), special_config(basis.n_sites(), |i| i % 2 == 1))
}

/// `|↓↓↓↑↓↓↓↑…⟩`
pub fn pxp_z4(basis: &Arc<SpinBasis>) -> Result<PureState> {
    PureState::basis_state(basis.clone(), special_config(basis.n_sites(), |i| i % 4 == 3))
}

/// `|↓↓…↓⟩`
pub fn pxp_vacuum(basis: &Arc<SpinBasis>) -> Result<PureState> {
    PureState::basis_state(basis.clone(), special_config(basis.n_sites(), |_| false))
}

/// Points `(θ, φ)` on the grid whose product state has per-site energy
/// `e_target` in the thermodynamic limit, `φ ∈ [0, π]`.
///
/// With `h_x = 0` the energy does not depend on `φ`; the contour is then the
/// set of `θ` solving the quadratic in `cos θ`, reported with `φ = 0` and the
/// grid is not used.
pub fn iso_energy_contour(p: &MfimParams, e_target: f64, theta_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    if p.h_x == 0.0 {
        // J c² + h_z c - e = 0
        let (a, b, c) = (p.j_zz, p.h_z, -e_target);
        let mut roots = Vec::new();
        if a.abs() < 1e-300 {
            if b != 0.0 {
                roots.push(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                roots.push((-b + sq) / (2.0 * a));
                roots.push((-b - sq) / (2.0 * a));
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        for r in roots {
            if (-1.0..=1.0).contains(&r) {
                out.push((r.acos(), 0.0));
            }
        }
    } else {
        for &theta in theta_grid {
            if !(0.0..=PI).contains(&theta) {
                return Err(QmeError::param("theta_grid", format!("{theta} is outside [0, π]")));
            }
            let c = theta.cos();
            let rest = e_target - p.j_zz * c * c - p.h_z * c;
            let amp = p.h_x * theta.sin();
            if amp.abs() < 1e-14 {
                if rest.abs() < 1e-10 {
                    out.push((theta, 0.0));
                }
                continue;
            }
            let x = rest / amp;
            if (-1.0..=1.0).contains(&x) {
                out.push((theta, x.acos()));
            }
        }
    }
    if out.is_empty() {
        return Err(QmeError::param("e_target", format!("no product state has per-site energy {e_target}")));
    }
    Ok(out)
}

/// Per-bond random two-site generators `h_i = (G + G†)/2`, `G` with
/// independent standard complex Gaussian entries (real and imaginary parts
/// each `N(0, 1)`).
pub fn random_bond_generators(n_sites: usize, seed: u64) -> Vec<Op4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sites - 1)
        .map(|_| {
            let mut g = [[ZERO; 4]; 4];
            for row in g.iter_mut() {
                for z in row.iter_mut() {
                    *z = c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                }
            }
            let mut h = [[ZERO; 4]; 4];
            for r in 0..4 {
                for c in 0..4 {
                    h[r][c] = (g[r][c] + g[c][r].conj()) * 0.5;
                }
            }
            h
        })
        .collect()
}

fn apply_bonds(bonds: &[Op4], input: &[c64], output: &mut [c64]) {
    output.fill(ZERO);
    for (i, op) in bonds.iter().enumerate() {
        local::apply_two_site_vector(op, i, i + 1, input, output);
    }
}

/// `exp(-i dt H_R) |ψ⟩` with `H_R = Σ_i h_i` from [`random_bond_generators`].
///
/// Evaluated by a Taylor series on substeps short enough that the series
/// converges to machine precision; the input must live on the full basis.
pub fn entangle_randomly(state: &PureState, dt: f64, seed: u64) -> Result<PureState> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(QmeError::param("dt", "must be a finite non-negative time"));
    }
    let basis = state.basis();
    if !basis.is_full() {
        return Err(QmeError::BasisMismatch("random entangling needs a full-basis state".into()));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let bonds = random_bond_generators(basis.n_sites(), seed);
    // Frobenius norms bound the operator norm of each bond term.
    let bound: f64 = bonds.iter().map(|h| h.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).sum();
    let steps = ((dt * bound) / 0.5).ceil().max(1.0) as usize;
    let tau = dt / steps as f64;
    let mut psi = state.amplitudes().to_vec();
    let mut term = vec![ZERO; psi.len()];
    let mut next = vec![ZERO; psi.len()];
    for _ in 0..steps {
        term.copy_from_slice(&psi);
        let mut k = 1usize;
        loop {
            apply_bonds(&bonds, &term, &mut next);
            let scale = c64::new(0.0, -tau / k as f64);
            let mut size = 0.0f64;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = *n * scale;
                size = size.max(t.norm());
            }
            for (p, t) in psi.iter_mut().zip(&term) {
                *p += *t;
            }
            if size < 1e-17 || k > 60 {
                break;
            }
            k += 1;
        }
    }
    PureState::new(basis.clone(), psi)
}
