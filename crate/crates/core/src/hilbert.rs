//! Hilbert spaces of open spin-1/2 chains and their bipartitions.
//!
//! A configuration is a `u32` where bit `j - 1` holds site `j`; bit value `0`
//! is `|↑⟩` and `1` is `|↓⟩`. Three bases are supported:
//!
//! * [`BasisKind::Full`]: all `2^N` configurations in ascending order.
//! * [`BasisKind::PxpConstrained`]: configurations without two adjacent `↑`
//!   spins (Rydberg blockade), ascending.
//! * [`BasisKind::ReflectionSector`]: states of definite parity under the
//!   site reflection `j → N + 1 - j`. Each element is labelled by the smaller
//!   configuration of its orbit `{s, R(s)}`.
//!
//! Reduced density matrices are computed with a [`SubsystemMap`], which splits
//! every configuration of the (embedded) basis into an `A` part and a `B` part.

use std::sync::Arc;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::error::{QmeError, Result};

/// Hard upper bound on chain length (configurations are `u32`).
pub const MAX_SITES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Parity::Even),
            -1 => Ok(Parity::Odd),
            other => Err(QmeError::param("parity", format!("expected +1 or -1, got {other}"))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    Full,
    PxpConstrained,
    ReflectionSector(Parity),
}

/// Mirror the low `n_sites` bits of `config`.
#[inline]
pub fn reflect(config: u32, n_sites: usize) -> u32 {
    config.reverse_bits() >> (32 - n_sites)
}

/// `true` when no two neighbouring sites are both `↑` (both bits clear).
#[inline]
pub fn pxp_allowed(config: u32, n_sites: usize) -> bool {
    if n_sites < 2 {
        return true;
    }
    let bond_mask = (1u32 << (n_sites - 1)) - 1;
    (!config & !(config >> 1)) & bond_mask == 0
}

/// `+1` for `↑`, `-1` for `↓` at 0-based site `site`.
#[inline]
pub fn sz(config: u32, site: usize) -> f64 {
    if config >> site & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Ordered basis of an open spin-1/2 chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinBasis {
    n_sites: usize,
    kind: BasisKind,
    configs: Vec<u32>,
}

/// Build a basis with the default [`MAX_SITES`] cap.
pub fn build_basis(n_sites: usize, kind: BasisKind) -> Result<SpinBasis> {
    SpinBasis::with_cap(n_sites, kind, MAX_SITES)
}

impl SpinBasis {
    pub fn new(n_sites: usize, kind: BasisKind) -> Result<Self> {
        build_basis(n_sites, kind)
    }

    pub fn with_cap(n_sites: usize, kind: BasisKind, max_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(QmeError::param("n_sites", format!("need at least 2 sites, got {n_sites}")));
        }
        let cap = max_sites.min(MAX_SITES);
        if n_sites > cap {
            return Err(QmeError::DimensionCap { dim: 1usize << n_sites.min(63), cap: 1usize << cap });
        }
        let total = 1u32 << n_sites;
        let configs: Vec<u32> = match kind {
            BasisKind::Full => (0..total).collect(),
            BasisKind::PxpConstrained => (0..total).filter(|&s| pxp_allowed(s, n_sites)).collect(),
            BasisKind::ReflectionSector(parity) => (0..total)
                .filter(|&s| {
                    let r = reflect(s, n_sites);
                    s < r || (s == r && parity == Parity::Even)
                })
                .collect(),
        };
        Ok(SpinBasis { n_sites, kind, configs })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    /// Configurations (orbit representatives for reflection sectors).
    pub fn configs(&self) -> &[u32] {
        &self.configs
    }

    pub fn config(&self, index: usize) -> u32 {
        self.configs[index]
    }

    /// Position of `config` in the basis. For reflection sectors both members
    /// of an orbit map to the same element.
    pub fn index_of(&self, config: u32) -> Option<usize> {
        if config >> self.n_sites != 0 {
            return None;
        }
        let key = match self.kind {
            BasisKind::Full => return Some(config as usize),
            BasisKind::PxpConstrained => config,
            BasisKind::ReflectionSector(_) => config.min(reflect(config, self.n_sites)),
        };
        self.configs.binary_search(&key).ok()
    }

    /// Expansion of basis element `index` in the computational basis.
    pub fn components(&self, index: usize) -> Components {
        let s = self.configs[index];
        match self.kind {
            BasisKind::Full | BasisKind::PxpConstrained => Components::one(s),
            BasisKind::ReflectionSector(parity) => {
                let r = reflect(s, self.n_sites);
                if r == s {
                    Components::one(s)
                } else {
                    let c = std::f64::consts::FRAC_1_SQRT_2;
                    Components::two((s, c), (r, parity.sign() * c))
                }
            }
        }
    }

    /// Coefficient of computational configuration `config` in element `index`.
    pub fn component_coeff(&self, index: usize, config: u32) -> f64 {
        self.components(index).iter().find(|(s, _)| *s == config).map(|&(_, c)| c).unwrap_or(0.0)
    }

    pub fn is_full(&self) -> bool {
        self.kind == BasisKind::Full
    }

    /// Matrix of the reflection `R` in this basis (full basis only).
    pub fn reflection_matrix(&self) -> Result<Mat<f64>> {
        if !self.is_full() {
            return Err(QmeError::BasisMismatch("reflection matrix needs the full basis".into()));
        }
        let d = self.dim();
        let mut r = Mat::<f64>::zeros(d, d);
        for s in 0..d as u32 {
            r[(reflect(s, self.n_sites) as usize, s as usize)] = 1.0;
        }
        Ok(r)
    }
}

/// At most two `(configuration, coefficient)` pairs.
#[derive(Clone, Copy, Debug)]
pub struct Components {
    items: [(u32, f64); 2],
    len: usize,
}

impl Components {
    fn one(s: u32) -> Self {
        Components { items: [(s, 1.0), (0, 0.0)], len: 1 }
    }

    fn two(a: (u32, f64), b: (u32, f64)) -> Self {
        Components { items: [a, b], len: 2 }
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u32, f64)> {
        self.items[..self.len].iter()
    }
}

/// Normalized amplitude vector over a basis.
#[derive(Clone, Debug)]
pub struct PureState {
    basis: Arc<SpinBasis>,
    amplitudes: Vec<c64>,
}

impl PureState {
    pub fn new(basis: Arc<SpinBasis>, amplitudes: Vec<c64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(QmeError::BasisMismatch(format!(
                "state has {} amplitudes, basis dimension is {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        Ok(PureState { basis, amplitudes })
    }

    /// Computational (or symmetrized) basis vector for `config`.
    pub fn basis_state(basis: Arc<SpinBasis>, config: u32) -> Result<Self> {
        let index = basis
            .index_of(config)
            .ok_or_else(|| QmeError::BasisMismatch(format!("configuration {config:#b} is not in the basis")))?;
        let mut amplitudes = vec![c64::new(0.0, 0.0); basis.dim()];
        amplitudes[index] = c64::new(1.0, 0.0);
        Ok(PureState { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<SpinBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<c64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(QmeError::Numerical("cannot normalize a zero or non-finite state".into()));
        }
        for a in &mut self.amplitudes {
            *a /= n;
        }
        Ok(self)
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &PureState) -> c64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Amplitude of computational configuration `config`.
    pub fn amplitude_of(&self, config: u32) -> c64 {
        match self.basis.index_of(config) {
            Some(k) => self.amplitudes[k] * self.basis.component_coeff(k, config),
            None => c64::new(0.0, 0.0),
        }
    }
}

/// Place a state of a constrained or symmetry-resolved basis into the full
/// space of the same chain.
pub fn embed_state(state: &PureState, target: &Arc<SpinBasis>) -> Result<PureState> {
    let source = state.basis();
    if !target.is_full() {
        return Err(QmeError::BasisMismatch("embedding target must be a full basis".into()));
    }
    if source.n_sites() != target.n_sites() {
        return Err(QmeError::BasisMismatch(format!(
            "cannot embed a {}-site state into a {}-site basis",
            source.n_sites(),
            target.n_sites()
        )));
    }
    let mut out = vec![c64::new(0.0, 0.0); target.dim()];
    for (k, &a) in state.amplitudes().iter().enumerate() {
        for &(s, c) in source.components(k).iter() {
            out[s as usize] += a * c;
        }
    }
    PureState::new(target.clone(), out)
}

/// Orthogonal projection of a full-space state onto `basis`.
pub fn project_state(state: &PureState, basis: &Arc<SpinBasis>) -> Result<PureState> {
    if !state.basis().is_full() || state.basis().n_sites() != basis.n_sites() {
        return Err(QmeError::BasisMismatch("projection needs a full-space state of equal length".into()));
    }
    let amps = state.amplitudes();
    let out = (0..basis.dim()).map(|k| basis.components(k).iter().map(|&(s, c)| amps[s as usize] * c).sum()).collect();
    PureState::new(basis.clone(), out)
}

/// Contiguous block `A` of a chain and its complement `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bipartition {
    n_sites: usize,
    /// 0-based first site of `A`.
    start: usize,
    len: usize,
}

impl Bipartition {
    /// Sites `1..=n_a`.
    pub fn left(n_sites: usize, n_a: usize) -> Result<Self> {
        Self::block(n_sites, 0, n_a)
    }

    /// Sites `1..=⌈N/2⌉`.
    pub fn left_half(n_sites: usize) -> Self {
        Bipartition { n_sites, start: 0, len: n_sites.div_ceil(2) }
    }

    /// `n_a` sites in the middle of the chain (shifted left when the parity of
    /// `N - n_a` is odd).
    pub fn centered(n_sites: usize, n_a: usize) -> Result<Self> {
        if n_a > n_sites {
            return Err(QmeError::param("n_a", "subsystem larger than the chain"));
        }
        Self::block(n_sites, (n_sites - n_a) / 2, n_a)
    }

    /// Block from an explicit list of 1-based sites, which must be contiguous.
    pub fn from_sites(n_sites: usize, sites: &[usize]) -> Result<Self> {
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let (Some(&first), Some(&last)) = (sorted.first(), sorted.last()) else {
            return Err(QmeError::param("a_sites", "empty subsystem"));
        };
        if first == 0 || last - first + 1 != sorted.len() {
            return Err(QmeError::param("a_sites", "subsystem must be a contiguous block of 1-based sites"));
        }
        Self::block(n_sites, first - 1, sorted.len())
    }

    fn block(n_sites: usize, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > n_sites {
            return Err(QmeError::param(
                "bipartition",
                format!("block of {len} sites at offset {start} does not fit {n_sites} sites"),
            ));
        }
        Ok(Bipartition { n_sites, start, len })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_a(&self) -> usize {
        self.len
    }

    pub fn a_sites(&self) -> Vec<usize> {
        (self.start + 1..=self.start + self.len).collect()
    }

    pub fn b_sites(&self) -> Vec<usize> {
        (1..=self.n_sites).filter(|j| *j <= self.start || *j > self.start + self.len).collect()
    }

    pub fn dim_a(&self) -> usize {
        1 << self.len
    }

    pub fn dim_b(&self) -> usize {
        1 << (self.n_sites - self.len)
    }

    /// Split a configuration into its `A` and `B` words (each packed from bit 0).
    #[inline]
    pub fn split(&self, config: u32) -> (u32, u32) {
        let a_mask = (1u32 << self.len) - 1;
        let low_mask = (1u32 << self.start) - 1;
        let a = (config >> self.start) & a_mask;
        let b = (config & low_mask) | ((config >> (self.start + self.len)) << self.start);
        (a, b)
    }

    #[inline]
    pub fn join(&self, a: u32, b: u32) -> u32 {
        let low_mask = (1u32 << self.start) - 1;
        (b & low_mask) | (a << self.start) | ((b >> self.start) << (self.start + self.len))
    }

    /// Complementary bipartition (only defined when `B` is contiguous, i.e. `A`
    /// touches a chain end).
    pub fn complement(&self) -> Result<Self> {
        if self.start == 0 && self.len < self.n_sites {
            Self::block(self.n_sites, self.len, self.n_sites - self.len)
        } else if self.start + self.len == self.n_sites && self.start > 0 {
            Self::block(self.n_sites, 0, self.start)
        } else {
            Err(QmeError::param("bipartition", "complement of a central block is not contiguous"))
        }
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
///
/// Rows are labelled by local configurations of the subsystem (`labels`), so
/// a reduced matrix over a constrained basis can live on the subset of `A`
/// configurations that actually occur.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: Mat<c64>,
    labels: Vec<u32>,
    n_sites: usize,
}

impl DensityMatrix {
    /// Matrix over `ceil(log2 d)` sites with the canonical labels `0..d`.
    pub fn from_matrix(matrix: Mat<c64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d || d == 0 {
            return Err(QmeError::param("density matrix", "must be square and non-empty"));
        }
        let n_sites = d.next_power_of_two().trailing_zeros() as usize;
        Ok(DensityMatrix { matrix, labels: (0..d as u32).collect(), n_sites })
    }

    pub fn with_labels(matrix: Mat<c64>, labels: Vec<u32>, n_sites: usize) -> Result<Self> {
        if matrix.nrows() != labels.len() || matrix.ncols() != labels.len() {
            return Err(QmeError::param("density matrix", "labels do not match matrix size"));
        }
        Ok(DensityMatrix { matrix, labels, n_sites })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        Self::from_matrix(Mat::from_fn(d, d, |i, j| if i == j { c64::new(diag[i], 0.0) } else { c64::new(0.0, 0.0) }))
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Dimension of the full local space, `2^n_sites`.
    pub fn full_dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// Zero-padded copy over all `2^n_sites` local configurations.
    pub fn to_full(&self) -> DensityMatrix {
        let d = self.full_dim();
        let mut m = Mat::<c64>::zeros(d, d);
        for (i, &li) in self.labels.iter().enumerate() {
            for (j, &lj) in self.labels.iter().enumerate() {
                m[(li as usize, lj as usize)] = self.matrix[(i, j)];
            }
        }
        DensityMatrix { matrix: m, labels: (0..d as u32).collect(), n_sites: self.n_sites }
    }

    /// `max |ρ_ij - conj(ρ_ji)|`
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub(crate) fn same_layout(&self, other: &DensityMatrix) -> bool {
        self.labels == other.labels
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    /// Index into the source vector.
    src: usize,
    coeff: f64,
    a: usize,
}

/// Precomputed split of a basis into subsystem indices.
///
/// Reflection-sector vectors are expanded into the full space on the fly, so
/// every basis kind shares one partial-trace code path.
#[derive(Clone, Debug)]
pub struct SubsystemMap {
    bipartition: Bipartition,
    source_dim: usize,
    a_labels: Vec<u32>,
    /// Entries grouped by compact `B` index.
    groups: Vec<Vec<Entry>>,
}

impl SubsystemMap {
    pub fn new(basis: &SpinBasis, bipartition: Bipartition) -> Result<Self> {
        if basis.n_sites() != bipartition.n_sites() {
            return Err(QmeError::BasisMismatch(format!(
                "bipartition is for {} sites, basis has {}",
                bipartition.n_sites(),
                basis.n_sites()
            )));
        }
        let mut raw: Vec<(u32, u32, usize, f64)> = Vec::new();
        for k in 0..basis.dim() {
            for &(s, c) in basis.components(k).iter() {
                let (a, b) = bipartition.split(s);
                raw.push((a, b, k, c));
            }
        }
        let mut a_labels: Vec<u32> = raw.iter().map(|r| r.0).collect();
        a_labels.sort_unstable();
        a_labels.dedup();
        let mut b_labels: Vec<u32> = raw.iter().map(|r| r.1).collect();
        b_labels.sort_unstable();
        b_labels.dedup();
        let mut groups: Vec<Vec<Entry>> = vec![Vec::new(); b_labels.len()];
        for (a, b, src, coeff) in raw {
            let ai = a_labels.binary_search(&a).expect("label present");
            let bi = b_labels.binary_search(&b).expect("label present");
            groups[bi].push(Entry { src, coeff, a: ai });
        }
        Ok(SubsystemMap { bipartition, source_dim: basis.dim(), a_labels, groups })
    }

    pub fn bipartition(&self) -> &Bipartition {
        &self.bipartition
    }

    /// Number of `A` configurations that occur in the basis.
    pub fn dim_a(&self) -> usize {
        self.a_labels.len()
    }

    pub fn a_labels(&self) -> &[u32] {
        &self.a_labels
    }

    /// Amplitude matrix `M[a, b]` of a pure state.
    pub fn amplitude_matrix(&self, amplitudes: &[c64]) -> Result<Mat<c64>> {
        if amplitudes.len() != self.source_dim {
            return Err(QmeError::BasisMismatch(format!(
                "vector length {} does not match basis dimension {}",
                amplitudes.len(),
                self.source_dim
            )));
        }
        let mut m = Mat::<c64>::zeros(self.dim_a(), self.groups.len());
        for (bi, group) in self.groups.iter().enumerate() {
            for e in group {
                m[(e.a, bi)] += amplitudes[e.src] * e.coeff;
            }
        }
        Ok(m)
    }

    /// `ρ_A = Tr_B |ψ⟩⟨ψ| = M M†`.
    pub fn reduce_pure(&self, amplitudes: &[c64]) -> Result<DensityMatrix> {
        let m = self.amplitude_matrix(amplitudes)?;
        let rho = &m * m.adjoint();
        DensityMatrix::with_labels(rho, self.a_labels.clone(), self.bipartition.n_a())
    }

    /// `Σ_n w_n Tr_B |v_n⟩⟨v_n|` for the columns `v_n` of `vectors`, without
    /// forming any full-space mixed matrix.
    pub fn reduce_mixture(&self, vectors: MatRef<'_, c64>, weights: &[f64]) -> Result<DensityMatrix> {
        if vectors.nrows() != self.source_dim || vectors.ncols() != weights.len() {
            return Err(QmeError::BasisMismatch("eigenvector matrix does not match basis/weights".into()));
        }
        let active: Vec<(usize, f64)> =
            weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(n, &w)| (n, w.sqrt())).collect();
        let da = self.dim_a();
        let mut rho = Mat::<c64>::zeros(da, da);
        for group in &self.groups {
            let y = Mat::<c64>::from_fn(group.len(), active.len(), |r, c| {
                let e = group[r];
                let (n, sw) = active[c];
                vectors[(e.src, n)] * (e.coeff * sw)
            });
            let block = &y * y.adjoint();
            for (r, er) in group.iter().enumerate() {
                for (c, ec) in group.iter().enumerate() {
                    rho[(er.a, ec.a)] += block[(r, c)];
                }
            }
        }
        DensityMatrix::with_labels(rho, self.a_labels.clone(), self.bipartition.n_a())
    }

    /// Reduced matrices for every column of `states` (one column per state).
    pub fn reduce_columns(&self, states: MatRef<'_, c64>) -> Result<Vec<DensityMatrix>> {
        (0..states.ncols())
            .map(|j| {
                let col: Vec<c64> = (0..states.nrows()).map(|i| states[(i, j)]).collect();
                self.reduce_pure(&col)
            })
            .collect()
    }
}

/// Reduced density matrix of `state` on subsystem `A`.
pub fn pure_partial_trace(state: &PureState, bipartition: &Bipartition) -> Result<DensityMatrix> {
    SubsystemMap::new(state.basis(), *bipartition)?.reduce_pure(state.amplitudes())
}
