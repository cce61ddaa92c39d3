//! Eigendecomposition of model operators, level statistics, and an on-disk
//! eigensystem cache.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faer::{Mat, MatRef, Side};
use sha2::{Digest, Sha256};

use crate::c64;
use crate::error::{QmeError, Result};
use crate::hilbert::SpinBasis;
use crate::models::{HermitianOperator, OperatorMatrix, UnitaryOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Energies of a Hamiltonian, ascending.
    Energies,
    /// Quasi-energy phases `θ ∈ (-π, π]` of a unitary, ascending.
    Phases,
}

/// Eigenvalues and orthonormal eigenvectors (columns) of an operator.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    values: Vec<f64>,
    vectors: Mat<c64>,
    kind: SpectrumKind,
    basis: Arc<SpinBasis>,
    source_hash: String,
}

impl EigenSystem {
    pub fn from_parts(
        values: Vec<f64>,
        vectors: Mat<c64>,
        kind: SpectrumKind,
        basis: Arc<SpinBasis>,
        source_hash: String,
    ) -> Result<Self> {
        let d = basis.dim();
        if values.len() != d || vectors.nrows() != d || vectors.ncols() != d {
            return Err(QmeError::BasisMismatch("eigensystem does not match basis dimension".into()));
        }
        Ok(EigenSystem { values, vectors, kind, basis, source_hash })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> MatRef<'_, c64> {
        self.vectors.as_ref()
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn basis(&self) -> &Arc<SpinBasis> {
        &self.basis
    }

    /// Hash of the operator this eigensystem was computed from.
    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Overlaps `c_n = ⟨E_n|ψ⟩`.
    pub fn overlaps(&self, psi: &[c64]) -> Result<Vec<c64>> {
        if psi.len() != self.dim() {
            return Err(QmeError::BasisMismatch("state does not live in the eigensystem's basis".into()));
        }
        let d = self.dim();
        Ok((0..d)
            .map(|n| {
                let col = self.vectors.col(n);
                let mut acc = c64::new(0.0, 0.0);
                for i in 0..d {
                    acc += col[i].conj() * psi[i];
                }
                acc
            })
            .collect())
    }

    /// `max_n |(O v_n) - λ_n v_n|` where `λ_n` is the eigenvalue (or `e^{iθ_n}`).
    pub fn residual(&self, op: MatRef<'_, c64>) -> f64 {
        let ov = op * &self.vectors;
        let mut worst = 0.0f64;
        for n in 0..self.dim() {
            let lam = match self.kind {
                SpectrumKind::Energies => c64::new(self.values[n], 0.0),
                SpectrumKind::Phases => c64::cis(self.values[n]),
            };
            for i in 0..self.dim() {
                worst = worst.max((ov[(i, n)] - lam * self.vectors[(i, n)]).norm());
            }
        }
        worst
    }
}

fn real_to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

fn numerical(e: impl std::fmt::Debug) -> QmeError {
    QmeError::Numerical(format!("eigensolver did not converge: {e:?}"))
}

/// Full eigendecomposition of a Hermitian operator, ascending energies.
pub fn eig_hermitian(op: &HermitianOperator) -> Result<EigenSystem> {
    let (values, vectors) = match op.matrix() {
        OperatorMatrix::Real(m) => {
            let e = m.self_adjoint_eigen(Side::Lower).map_err(numerical)?;
            let values: Vec<f64> = (0..m.nrows()).map(|i| e.S()[i]).collect();
            (values, real_to_complex(e.U()))
        }
        OperatorMatrix::Complex(m) => {
            let e = m.self_adjoint_eigen(Side::Lower).map_err(numerical)?;
            let values: Vec<f64> = (0..m.nrows()).map(|i| e.S()[i].re).collect();
            (values, e.U().to_owned())
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QmeError::Numerical("non-finite eigenvalue".into()));
    }
    EigenSystem::from_parts(values, vectors, SpectrumKind::Energies, op.basis().clone(), operator_hash(op))
}

/// Eigenvalues only, ascending. Much cheaper than [`eig_hermitian`] for large operators.
pub fn eigenvalues_hermitian(op: &HermitianOperator) -> Result<Vec<f64>> {
    let values: Vec<f64> = match op.matrix() {
        OperatorMatrix::Real(m) => m.self_adjoint_eigenvalues(Side::Lower).map_err(numerical)?,
        OperatorMatrix::Complex(m) => m.self_adjoint_eigenvalues(Side::Lower).map_err(numerical)?.into_iter().collect(),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QmeError::Numerical("non-finite eigenvalue".into()));
    }
    Ok(values)
}

/// Eigenvalue gap below which Hermitian-part eigenvalues are treated as one cluster.
const UNITARY_CLUSTER_GAP: f64 = 1e-8;
/// Largest acceptable `|U v - e^{iθ} v|` before reporting a numerical failure.
const UNITARY_RESIDUAL_TOL: f64 = 1e-7;

/// Eigendecomposition of a unitary operator.
///
/// `U` is normal, so its Hermitian part `A = (U + U†)/2` and anti-Hermitian
/// part `S = (U - U†)/2i` commute. Diagonalizing `A` and then `S` inside each
/// (near-)degenerate eigenspace of `A` yields a common eigenbasis; the phase of
/// each vector is read off its Rayleigh quotient.
pub fn eig_unitary(u: &UnitaryOperator) -> Result<EigenSystem> {
    let m = u.matrix();
    let d = m.nrows();
    let a = Mat::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let s = Mat::from_fn(d, d, |i, j| (m[(i, j)] - m[(j, i)].conj()) * c64::new(0.0, -0.5));
    let ea = a.self_adjoint_eigen(Side::Lower).map_err(numerical)?;
    let cos_vals: Vec<f64> = (0..d).map(|i| ea.S()[i].re).collect();
    let q = ea.U();
    let mut vectors = Mat::<c64>::zeros(d, d);

    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && cos_vals[end] - cos_vals[end - 1] < UNITARY_CLUSTER_GAP {
            end += 1;
        }
        let qc = q.subcols(start, end - start);
        if end - start == 1 {
            vectors.col_mut(start).copy_from(qc.col(0));
        } else {
            let b = qc.adjoint() * &s * qc;
            let b = Mat::from_fn(b.nrows(), b.ncols(), |i, j| (b[(i, j)] + b[(j, i)].conj()) * 0.5);
            let eb = b.self_adjoint_eigen(Side::Lower).map_err(numerical)?;
            let rotated = qc * eb.U();
            vectors.subcols_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }

    let uv = m * &vectors;
    let mut phases: Vec<(f64, usize)> = (0..d)
        .map(|n| {
            let mut rq = c64::new(0.0, 0.0);
            for i in 0..d {
                rq += vectors[(i, n)].conj() * uv[(i, n)];
            }
            let mut theta = rq.arg();
            if theta <= -std::f64::consts::PI {
                theta = std::f64::consts::PI;
            }
            (theta, n)
        })
        .collect();
    phases.sort_by(|x, y| x.0.total_cmp(&y.0));
    let sorted = Mat::from_fn(d, d, |i, k| vectors[(i, phases[k].1)]);
    let values: Vec<f64> = phases.iter().map(|p| p.0).collect();
    let hash = unitary_hash(u);
    let sys = EigenSystem::from_parts(values, sorted, SpectrumKind::Phases, u.basis().clone(), hash)?;
    let res = sys.residual(m);
    if !(res < UNITARY_RESIDUAL_TOL) {
        return Err(QmeError::Numerical(format!("unitary eigen-residual {res:.3e} too large")));
    }
    Ok(sys)
}

/// Mean adjacent-gap ratio `⟨min(s_n, s_{n+1}) / max(s_n, s_{n+1})⟩`.
///
/// Only the central `window` fraction of levels (by count) is used. Levels closer
/// than `1e-12 × span` are merged first, since exact degeneracies signal an
/// unresolved symmetry rather than level statistics.
pub fn r_statistic(values: &[f64], window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(QmeError::param("window", "must lie in (0, 1]"));
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let span = v.last().copied().unwrap_or(0.0) - v.first().copied().unwrap_or(0.0);
    let mut merged: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match merged.last() {
            Some(&last) if x - last <= 1e-12 * span => {}
            _ => merged.push(x),
        }
    }
    let n = merged.len();
    let keep = ((n as f64) * window).round() as usize;
    let lo = (n - keep) / 2;
    let central = &merged[lo..lo + keep];
    if central.len() < 100 {
        return Err(QmeError::param(
            "spectrum",
            format!("need at least 100 distinct levels in the window, have {}", central.len()),
        ));
    }
    let gaps: Vec<f64> = central.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = gaps.windows(2).map(|g| g[0].min(g[1]) / g[0].max(g[1])).collect();
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Canonical-ensemble energy `Tr[H e^{-βH}] / Z` evaluated stably.
pub fn thermal_energy(energies: &[f64], beta: f64) -> f64 {
    let shift = energies.iter().map(|&e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut num) = (0.0, 0.0);
    for &e in energies {
        let w = (-beta * e - shift).exp();
        z += w;
        num += w * e;
    }
    num / z
}

/// Inverse temperature `β` with `⟨H⟩_β = energy`.
///
/// The spectral mean maps to exactly `β = 0`. Energies outside the open
/// spectral interval have no finite solution and are rejected.
pub fn effective_beta(energies: &[f64], energy: f64) -> Result<f64> {
    if energies.is_empty() {
        return Err(QmeError::param("energies", "empty spectrum"));
    }
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    if !(energy > min && energy < max) {
        return Err(QmeError::param(
            "energy",
            format!("{energy} is outside the open spectral interval ({min}, {max})"),
        ));
    }
    if energy == mean {
        return Ok(0.0);
    }
    // ⟨H⟩_β decreases monotonically in β.
    let scale = (max - min).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = if energy < mean { (0.0, 1.0 / scale) } else { (-1.0 / scale, 0.0) };
    while thermal_energy(energies, hi) > energy {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(QmeError::Numerical("failed to bracket β".into()));
        }
    }
    while thermal_energy(energies, lo) < energy {
        hi = lo;
        lo *= 2.0;
        if lo < -1e300 {
            return Err(QmeError::Numerical("failed to bracket β".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if thermal_energy(energies, mid) > energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn hash_basis(h: &mut Sha256, basis: &SpinBasis) {
    h.update(format!("{:?}|{}|{}", basis.kind(), basis.n_sites(), basis.dim()).as_bytes());
}

/// Content hash of a Hermitian operator: provenance plus matrix bytes.
pub fn operator_hash(op: &HermitianOperator) -> String {
    let mut h = Sha256::new();
    h.update(b"hermitian|");
    h.update(serde_json::to_vec(op.model()).expect("model spec serializes"));
    hash_basis(&mut h, op.basis());
    let d = op.dim();
    match op.matrix() {
        OperatorMatrix::Real(m) => {
            for j in 0..d {
                for i in 0..d {
                    h.update(m[(i, j)].to_le_bytes());
                }
            }
        }
        OperatorMatrix::Complex(m) => {
            for j in 0..d {
                for i in 0..d {
                    h.update(m[(i, j)].re.to_le_bytes());
                    h.update(m[(i, j)].im.to_le_bytes());
                }
            }
        }
    }
    hex::encode(h.finalize())
}

pub fn unitary_hash(op: &UnitaryOperator) -> String {
    let mut h = Sha256::new();
    h.update(b"unitary|");
    h.update(serde_json::to_vec(op.model()).expect("model spec serializes"));
    hash_basis(&mut h, op.basis());
    let m = op.matrix();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            h.update(m[(i, j)].re.to_le_bytes());
            h.update(m[(i, j)].im.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

const CACHE_MAGIC: &[u8; 8] = b"QMEEIGS\0";
const CACHE_VERSION: u32 = 1;
/// Byte order marker; all numbers in the file are little-endian.
const CACHE_ENDIAN: u32 = 0x0102_0304;

/// Directory of eigensystems keyed by operator hash.
///
/// File layout: magic, version, endianness marker, spectrum kind, dimension,
/// source hash, eigenvalues, eigenvectors row-major as `(re, im)` pairs, and a
/// trailing SHA-256 of everything before it.
#[derive(Clone, Debug)]
pub struct EigenCache {
    dir: PathBuf,
}

impl EigenCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(EigenCache { dir })
    }

    /// Cache at `$QME_CACHE_DIR`, if set.
    pub fn from_env() -> Option<Result<Self>> {
        std::env::var_os("QME_CACHE_DIR").map(|d| EigenCache::new(PathBuf::from(d)))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.eig"))
    }

    pub fn store(&self, sys: &EigenSystem) -> Result<()> {
        let d = sys.dim();
        let mut buf: Vec<u8> = Vec::with_capacity(64 + d * 8 + d * d * 16);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&CACHE_ENDIAN.to_le_bytes());
        buf.push(match sys.kind {
            SpectrumKind::Energies => 0,
            SpectrumKind::Phases => 1,
        });
        buf.extend_from_slice(&(d as u64).to_le_bytes());
        let hash_bytes = sys.source_hash.as_bytes();
        buf.extend_from_slice(&(hash_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(hash_bytes);
        for v in &sys.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..d {
            for j in 0..d {
                let z = sys.vectors[(i, j)];
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&buf)?;
        tmp.flush()?;
        tmp.persist(self.path_for(&sys.source_hash))
            .map_err(|e| QmeError::Cache(format!("could not persist cache file: {e}")))?;
        Ok(())
    }

    /// Load the eigensystem for `hash`. `Ok(None)` if absent; corrupt or
    /// mismatched files are reported as errors.
    pub fn load(&self, hash: &str, basis: &Arc<SpinBasis>) -> Result<Option<EigenSystem>> {
        let path = self.path_for(hash);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |what: &str| QmeError::Cache(format!("{}: {what}", path.display()));
        if bytes.len() < 32 + 8 + 4 + 4 + 1 + 8 + 4 {
            return Err(corrupt("truncated file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != CACHE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        if r.u32()? != CACHE_VERSION {
            return Err(corrupt("unsupported version"));
        }
        if r.u32()? != CACHE_ENDIAN {
            return Err(corrupt("foreign byte order"));
        }
        let kind = match r.take(1)?[0] {
            0 => SpectrumKind::Energies,
            1 => SpectrumKind::Phases,
            _ => return Err(corrupt("unknown spectrum kind")),
        };
        let d = r.u64()? as usize;
        let hlen = r.u32()? as usize;
        let stored_hash = String::from_utf8(r.take(hlen)?.to_vec()).map_err(|_| corrupt("bad hash"))?;
        if stored_hash != hash {
            return Err(corrupt("hash does not match file name"));
        }
        if d != basis.dim() {
            return Err(corrupt("dimension does not match basis"));
        }
        let values: Vec<f64> = (0..d).map(|_| r.f64()).collect::<Result<_>>()?;
        let mut vectors = Mat::<c64>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                vectors[(i, j)] = c64::new(r.f64()?, r.f64()?);
            }
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        EigenSystem::from_parts(values, vectors, kind, basis.clone(), stored_hash).map(Some)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(QmeError::Cache("unexpected end of cache file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Eigendecomposition through an optional cache. A corrupt cache entry is
/// recomputed and overwritten.
pub fn eig_hermitian_cached(op: &HermitianOperator, cache: Option<&EigenCache>) -> Result<EigenSystem> {
    let Some(cache) = cache else { return eig_hermitian(op) };
    let hash = operator_hash(op);
    if let Ok(Some(sys)) = cache.load(&hash, op.basis()) {
        return Ok(sys);
    }
    let sys = eig_hermitian(op)?;
    cache.store(&sys)?;
    Ok(sys)
}

pub fn eig_unitary_cached(op: &UnitaryOperator, cache: Option<&EigenCache>) -> Result<EigenSystem> {
    let Some(cache) = cache else { return eig_unitary(op) };
    let hash = unitary_hash(op);
    if let Ok(Some(sys)) = cache.load(&hash, op.basis()) {
        return Ok(sys);
    }
    let sys = eig_unitary(op)?;
    cache.store(&sys)?;
    Ok(sys)
}
