//! Dense model operators over a [`SpinBasis`].
//!
//! Hamiltonians are assembled from a per-configuration action `s ↦ Σ a |s'⟩`,
//! which makes the same code serve the full space, the blockaded space and
//! reflection sectors. Real models are stored as real matrices.

use std::ops::{AddAssign, Mul};
use std::sync::Arc;

use faer::traits::ComplexField;
use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::error::{QmeError, Result};
use crate::hilbert::{sz, BasisKind, SpinBasis};
use crate::local::{self, Op4};

/// `(J_zz, h_z, h_x)` at which the mixed-field Ising chain is strongly chaotic.
pub fn golden_couplings() -> (f64, f64, f64) {
    let s5 = 5f64.sqrt();
    (1.0, (1.0 + s5) / 4.0, (s5 + 5.0) / 8.0)
}

/// Mixed-field Ising chain with boundary longitudinal fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfimParams {
    pub j_zz: f64,
    pub h_x: f64,
    /// Bulk longitudinal field, applied to sites `2..=N-1`.
    pub h_z: f64,
    pub boundary_dh1: f64,
    #[serde(rename = "boundary_dhN")]
    pub boundary_dhn: f64,
}

impl Default for MfimParams {
    fn default() -> Self {
        let (j_zz, h_z, h_x) = golden_couplings();
        MfimParams { j_zz, h_x, h_z, boundary_dh1: 0.25, boundary_dhn: -0.25 }
    }
}

impl MfimParams {
    /// Per-site energy of the uniform product state `|θ, φ⟩` in the thermodynamic limit.
    pub fn product_energy_density(&self, theta: f64, phi: f64) -> f64 {
        let c = theta.cos();
        self.j_zz * c * c + self.h_x * theta.sin() * phi.cos() + self.h_z * c
    }
}

/// Random cross-product model with a uniform Heisenberg coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomModelParams {
    /// Half-width of the uniform window for each bond-vector component.
    pub w: f64,
    pub j_h: f64,
    pub seed: u64,
    /// Explicit bond vectors `v_i`; drawn from `seed` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<[f64; 3]>>,
}

impl Default for RandomModelParams {
    fn default() -> Self {
        RandomModelParams { w: 1.0, j_h: -4.0, seed: 0, vectors: None }
    }
}

impl RandomModelParams {
    /// Bond vectors `v_1 … v_{N-1}`, each component uniform in `[-W, W]`.
    pub fn bond_vectors(&self, n_sites: usize) -> Result<Vec<[f64; 3]>> {
        if let Some(v) = &self.vectors {
            if v.len() != n_sites - 1 {
                return Err(QmeError::param(
                    "vectors",
                    format!("expected {} bond vectors, got {}", n_sites - 1, v.len()),
                ));
            }
            return Ok(v.clone());
        }
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(QmeError::param("w", "disorder half-width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..n_sites - 1)
            .map(|_| {
                let mut v = [0.0; 3];
                for c in &mut v {
                    *c = rng.random_range(-self.w..=self.w);
                }
                v
            })
            .collect())
    }
}

/// Kicked Ising Floquet drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickedIsingParams {
    pub j_zz: f64,
    pub h_x: f64,
    pub h_z: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for KickedIsingParams {
    fn default() -> Self {
        let (j_zz, h_z, h_x) = golden_couplings();
        KickedIsingParams { j_zz, h_x, h_z, t1: 0.5, t2: 0.5 }
    }
}

impl KickedIsingParams {
    /// Dual-unitary point `J_zz = -h_x = π/4` with a weak longitudinal field.
    pub fn dual_unitary(h_z: f64) -> Self {
        let q = std::f64::consts::FRAC_PI_4;
        KickedIsingParams { j_zz: q, h_x: -q, h_z, t1: 0.5, t2: 0.5 }
    }
}

/// XXZ chain with next-nearest-neighbour couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XxzNnnParams {
    pub j1: f64,
    pub j2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for XxzNnnParams {
    fn default() -> Self {
        XxzNnnParams { j1: 1.0, j2: 1.0, delta1: 0.5, delta2: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PxpParams {
    pub omega: f64,
}

impl Default for PxpParams {
    fn default() -> Self {
        PxpParams { omega: 1.0 }
    }
}

/// Model family plus parameters; recorded on every operator as provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Mfim(MfimParams),
    XxzNnn(XxzNnnParams),
    Random(RandomModelParams),
    Pxp(PxpParams),
    KickedIsing(KickedIsingParams),
    /// Operator supplied directly as a matrix.
    Explicit {
        label: String,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Mfim(_) => "mfim",
            ModelSpec::XxzNnn(_) => "xxz_nnn",
            ModelSpec::Random(_) => "random",
            ModelSpec::Pxp(_) => "pxp",
            ModelSpec::KickedIsing(_) => "kicked_ising",
            ModelSpec::Explicit { .. } => "explicit",
        }
    }

    pub fn is_floquet(&self) -> bool {
        matches!(self, ModelSpec::KickedIsing(_))
    }
}

#[derive(Clone, Debug)]
pub enum OperatorMatrix {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        match self {
            OperatorMatrix::Real(m) => m.nrows(),
            OperatorMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match self {
            OperatorMatrix::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0)),
            OperatorMatrix::Complex(m) => m.clone(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        match self {
            OperatorMatrix::Real(m) => c64::new(m[(i, j)], 0.0),
            OperatorMatrix::Complex(m) => m[(i, j)],
        }
    }
}

/// Dense Hermitian operator over a basis.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    basis: Arc<SpinBasis>,
    matrix: OperatorMatrix,
    model: ModelSpec,
}

impl HermitianOperator {
    pub fn from_matrix(basis: Arc<SpinBasis>, matrix: OperatorMatrix, model: ModelSpec) -> Result<Self> {
        if matrix.dim() != basis.dim() {
            return Err(QmeError::BasisMismatch("operator and basis dimensions differ".into()));
        }
        Ok(HermitianOperator { basis, matrix, model })
    }

    pub fn basis(&self) -> &Arc<SpinBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_real(&self) -> bool {
        matches!(self.matrix, OperatorMatrix::Real(_))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix.get(i, i).re).sum()
    }

    /// `max |H_ij - conj(H_ji)|`
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..=i {
                worst = worst.max((self.matrix.get(i, j) - self.matrix.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// `H v`
    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let d = self.dim();
        let mut out = vec![c64::new(0.0, 0.0); d];
        match &self.matrix {
            OperatorMatrix::Real(m) => {
                for j in 0..d {
                    let vj = v[j];
                    if vj == c64::new(0.0, 0.0) {
                        continue;
                    }
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += vj * m[(i, j)];
                    }
                }
            }
            OperatorMatrix::Complex(m) => {
                for j in 0..d {
                    let vj = v[j];
                    if vj == c64::new(0.0, 0.0) {
                        continue;
                    }
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += m[(i, j)] * vj;
                    }
                }
            }
        }
        out
    }

    /// `⟨v|H|v⟩` (real part).
    pub fn expectation(&self, v: &[c64]) -> f64 {
        let hv = self.apply(v);
        v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Dense unitary operator over a basis.
#[derive(Clone, Debug)]
pub struct UnitaryOperator {
    basis: Arc<SpinBasis>,
    matrix: Mat<c64>,
    model: ModelSpec,
}

impl UnitaryOperator {
    pub fn from_matrix(basis: Arc<SpinBasis>, matrix: Mat<c64>, model: ModelSpec) -> Result<Self> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(QmeError::BasisMismatch("operator and basis dimensions differ".into()));
        }
        Ok(UnitaryOperator { basis, matrix, model })
    }

    pub fn basis(&self) -> &Arc<SpinBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |(U†U - 1)_ij|`
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.matrix.adjoint() * &self.matrix;
        max_identity_defect(p.as_ref())
    }
}

pub(crate) fn max_identity_defect(m: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Assemble `⟨k'|H|k⟩` from a computational-basis action.
fn assemble<T, F>(basis: &SpinBasis, mut action: F) -> Mat<T>
where
    T: ComplexField + Copy + AddAssign + Mul<f64, Output = T>,
    F: FnMut(u32, &mut Vec<(u32, T)>),
{
    let d = basis.dim();
    let mut m = Mat::<T>::zeros(d, d);
    let mut out: Vec<(u32, T)> = Vec::with_capacity(64);
    let full = basis.is_full();
    for k in 0..d {
        for &(s, c) in basis.components(k).iter() {
            out.clear();
            action(s, &mut out);
            for &(t, amp) in &out {
                if full {
                    m[(t as usize, k)] += amp * c;
                    continue;
                }
                let Some(kp) = basis.index_of(t) else { continue };
                let cp = basis.component_coeff(kp, t);
                if cp != 0.0 {
                    m[(kp, k)] += amp * (c * cp);
                }
            }
        }
    }
    m
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(QmeError::param(name, "couplings must be finite"))
    }
}

/// Mixed-field Ising Hamiltonian
/// `J Σ σᶻσᶻ + h_x Σ σˣ + h_z Σ_{i=2}^{N-1} σᶻ_i + δh_1 σᶻ_1 + δh_N σᶻ_N`.
pub fn build_mfim(basis: &Arc<SpinBasis>, p: &MfimParams) -> Result<HermitianOperator> {
    check_finite("mfim", &[p.j_zz, p.h_x, p.h_z, p.boundary_dh1, p.boundary_dhn])?;
    match basis.kind() {
        BasisKind::Full => {}
        BasisKind::ReflectionSector(_) => {
            if p.boundary_dh1 != 0.0 || p.boundary_dhn != 0.0 {
                return Err(QmeError::param(
                    "boundary_dh1/boundary_dhN",
                    "boundary fields break reflection symmetry; use the full basis",
                ));
            }
        }
        BasisKind::PxpConstrained => {
            return Err(QmeError::BasisMismatch("the Ising model does not preserve the blockade".into()))
        }
    }
    let n = basis.n_sites();
    let m = assemble::<f64, _>(basis, |s, out| {
        let mut diag = 0.0;
        for i in 0..n - 1 {
            diag += p.j_zz * sz(s, i) * sz(s, i + 1);
        }
        for i in 1..n - 1 {
            diag += p.h_z * sz(s, i);
        }
        diag += p.boundary_dh1 * sz(s, 0) + p.boundary_dhn * sz(s, n - 1);
        out.push((s, diag));
        if p.h_x != 0.0 {
            for i in 0..n {
                out.push((s ^ (1 << i), p.h_x));
            }
        }
    });
    HermitianOperator::from_matrix(basis.clone(), OperatorMatrix::Real(m), ModelSpec::Mfim(p.clone()))
}

/// Two-site term `(σ_i × σ_{i+1})·v + J_H σ_i·σ_{i+1}`.
pub(crate) fn random_bond_term(v: &[f64; 3], j_h: f64) -> Op4 {
    let s = local::paulis();
    let mut op = [[c64::new(0.0, 0.0); 4]; 4];
    for (c, &vc) in v.iter().enumerate() {
        // ε_{c a b} for (a, b) = (c+1, c+2) is +1 and for (c+2, c+1) is -1
        let a = (c + 1) % 3;
        let b = (c + 2) % 3;
        local::add_scaled(&mut op, &local::kron(&s[a], &s[b]), c64::new(vc, 0.0));
        local::add_scaled(&mut op, &local::kron(&s[b], &s[a]), c64::new(-vc, 0.0));
    }
    for sa in &s {
        local::add_scaled(&mut op, &local::kron(sa, sa), c64::new(j_h, 0.0));
    }
    op
}

/// Random cross-product model
/// `Σ_i (σ_i × σ_{i+1})·v_i + J_H Σ_i σ_i·σ_{i+1}` on the full basis.
pub fn build_random_model(basis: &Arc<SpinBasis>, p: &RandomModelParams) -> Result<HermitianOperator> {
    if !basis.is_full() {
        return Err(QmeError::BasisMismatch("the random model needs the full basis".into()));
    }
    check_finite("j_h", &[p.j_h])?;
    let n = basis.n_sites();
    let vectors = p.bond_vectors(n)?;
    let bonds: Vec<Op4> = vectors.iter().map(|v| random_bond_term(v, p.j_h)).collect();
    let m = assemble::<c64, _>(basis, |s, out| {
        for (i, op) in bonds.iter().enumerate() {
            local::apply_two_site(op, i, i + 1, s, out);
        }
    });
    let mut recorded = p.clone();
    recorded.vectors = Some(vectors);
    HermitianOperator::from_matrix(basis.clone(), OperatorMatrix::Complex(m), ModelSpec::Random(recorded))
}

/// PXP model `Ω Σ_j P_{j-1} σˣ_j P_{j+1}` with `P = |↓⟩⟨↓|` and open ends.
pub fn build_pxp(basis: &Arc<SpinBasis>, omega: f64) -> Result<HermitianOperator> {
    check_finite("omega", &[omega])?;
    let n = basis.n_sites();
    let m = assemble::<f64, _>(basis, |s, out| {
        for j in 0..n {
            let left_down = j == 0 || (s >> (j - 1)) & 1 == 1;
            let right_down = j == n - 1 || (s >> (j + 1)) & 1 == 1;
            if left_down && right_down {
                out.push((s ^ (1 << j), omega));
            }
        }
    });
    HermitianOperator::from_matrix(basis.clone(), OperatorMatrix::Real(m), ModelSpec::Pxp(PxpParams { omega }))
}

/// XXZ chain with nearest and next-nearest neighbour couplings.
pub fn build_xxz_nnn(basis: &Arc<SpinBasis>, p: &XxzNnnParams) -> Result<HermitianOperator> {
    check_finite("xxz_nnn", &[p.j1, p.j2, p.delta1, p.delta2])?;
    if basis.kind() == BasisKind::PxpConstrained {
        return Err(QmeError::BasisMismatch("XXZ dynamics does not preserve the blockade".into()));
    }
    let n = basis.n_sites();
    let m = assemble::<f64, _>(basis, |s, out| {
        let mut diag = 0.0;
        for (range, j, delta) in [(1usize, p.j1, p.delta1), (2usize, p.j2, p.delta2)] {
            if j == 0.0 {
                continue;
            }
            for i in 0..n.saturating_sub(range) {
                let k = i + range;
                diag += j * delta * sz(s, i) * sz(s, k);
                // σˣσˣ + σʸσʸ = 2 (σ⁺σ⁻ + σ⁻σ⁺)
                if ((s >> i) ^ (s >> k)) & 1 == 1 {
                    out.push((s ^ (1 << i) ^ (1 << k), 2.0 * j));
                }
            }
        }
        out.push((s, diag));
    });
    HermitianOperator::from_matrix(basis.clone(), OperatorMatrix::Real(m), ModelSpec::XxzNnn(p.clone()))
}

/// Kicked Ising Floquet operator
/// `exp[-i T1 (J Σ σᶻσᶻ + h_z Σ σᶻ)] · exp[-i T2 h_x Σ σˣ]` on an open chain.
pub fn build_kicked_ising(basis: &Arc<SpinBasis>, p: &KickedIsingParams) -> Result<UnitaryOperator> {
    if !basis.is_full() {
        return Err(QmeError::BasisMismatch("the kicked Ising operator needs the full basis".into()));
    }
    check_finite("kicked_ising", &[p.j_zz, p.h_x, p.h_z, p.t1, p.t2])?;
    if !(p.t1 > 0.0 && p.t2 > 0.0) {
        return Err(QmeError::param("t1/t2", "half-periods must be positive"));
    }
    let n = basis.n_sites();
    let d = basis.dim();
    let phases: Vec<c64> = (0..d as u32)
        .map(|s| {
            let mut e = 0.0;
            for i in 0..n - 1 {
                e += p.j_zz * sz(s, i) * sz(s, i + 1);
            }
            for i in 0..n {
                e += p.h_z * sz(s, i);
            }
            c64::cis(-p.t1 * e)
        })
        .collect();
    // exp(-i a Σσˣ) = ⊗_j (cos a − i sin a σˣ): entry depends on the Hamming distance.
    let a = p.t2 * p.h_x;
    let (c, si) = (a.cos(), a.sin());
    let powers: Vec<c64> =
        (0..=n).map(|k| c64::new(c.powi((n - k) as i32), 0.0) * c64::new(0.0, -si).powi(k as i32)).collect();
    let m = Mat::from_fn(d, d, |r, col| phases[r] * powers[(r ^ col).count_ones() as usize]);
    UnitaryOperator::from_matrix(basis.clone(), m, ModelSpec::KickedIsing(p.clone()))
}

/// Total magnetization `Σ σᶻ` as a diagonal matrix over `basis`.
pub fn magnetization(basis: &SpinBasis) -> Vec<f64> {
    let n = basis.n_sites();
    (0..basis.dim())
        .map(|k| {
            let s = basis.config(k);
            (0..n).map(|i| sz(s, i)).sum()
        })
        .collect()
}
