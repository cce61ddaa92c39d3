//! Scenario execution: model and state preparation, parallel quench jobs,
//! realization averages and artifact writing.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{crossings, inversion_time, mean_stderr, prominent_peaks, spearman};
use crate::diagnostics::{
    energy_moments, entanglement_asymmetry, frobenius_distance, ipr, trace_distance, von_neumann_entropy,
    OverlapSpectrum,
};
use crate::dynamics::{QuenchSetup, TimeGrid};
use crate::error::{QmeError, Result};
use crate::hilbert::{build_basis, BasisKind, Bipartition, DensityMatrix, PureState, SpinBasis, SubsystemMap};
use crate::models::{
    build_kicked_ising, build_mfim, build_pxp, build_random_model, build_xxz_nnn, HermitianOperator, ModelSpec,
    UnitaryOperator,
};
use crate::spectral::{effective_beta, eig_hermitian_cached, eig_unitary_cached, EigenCache, EigenSystem};
use crate::states::{
    entangle_randomly, iso_energy_contour, mps_state, pxp_vacuum, pxp_z2, pxp_z4, random_angle_state, tilted_fm,
    uniform_product_state, Axis, MpsSpec,
};

use super::config::{BipartitionKind, Diagnostic, ScenarioConfig, StateSpec};
use super::output::{format_sci, gnuplot_script, write_atomic, Table};

/// Fraction of the window used as the "late time" reference in inversion tests.
pub const TAIL_FRACTION: f64 = 0.2;

/// Output directory used when neither the config nor the caller sets one.
pub const DEFAULT_OUTDIR: &str = "qme-out";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub outdir: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    /// Skip writing artifacts (the record is still returned).
    pub dry: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Stat {
        let (mean, stderr) = mean_stderr(values);
        Stat { mean, stderr }
    }
}

/// Realization-averaged scalars of one initial state.
#[derive(Clone, Debug, Serialize)]
pub struct StateRecord {
    pub label: String,
    pub realizations: usize,
    pub ipr: Stat,
    /// `⟨H⟩`; NaN for Floquet drives.
    pub energy: Stat,
    pub energy_density: Stat,
    pub variance: Stat,
    pub beta: Stat,
    /// Trace distance to the diagonal ensemble at the first grid time.
    pub delta0: Stat,
    pub entropy0: Stat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_peaks: Option<usize>,
}

/// One diagnostic over the time grid, one column per state.
#[derive(Clone, Debug)]
pub struct Series {
    pub diagnostic: Diagnostic,
    pub labels: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    /// Standard error columns for states averaged over several realizations.
    pub stderr: Vec<Option<Vec<f64>>>,
}

impl Series {
    pub fn column(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|i| self.mean[i].as_slice())
    }

    pub fn to_table(&self, times: &[f64], floquet: bool) -> Table {
        let mut header = vec![if floquet { "period".to_string() } else { "t".to_string() }];
        let mut columns = vec![times.to_vec()];
        for (i, l) in self.labels.iter().enumerate() {
            header.push(l.clone());
            columns.push(self.mean[i].clone());
            if let Some(se) = &self.stderr[i] {
                header.push(format!("{l}_se"));
                columns.push(se.clone());
            }
        }
        Table::new(header, columns)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub theta: f64,
    pub phi: f64,
    pub energy_density: f64,
    pub ipr: f64,
    pub variance: f64,
    pub beta: f64,
    pub delta0: f64,
    pub frobenius0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridRecord {
    pub points: Vec<GridPoint>,
    pub spearman_log_ipr_delta0: f64,
    pub spearman_log_ipr_frobenius0: f64,
    pub spearman_variance_delta0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedEntry {
    pub label: String,
    pub realization: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_seed: Option<u64>,
}

/// A first crossing where `farther` started above `closer` and ends below it.
#[derive(Clone, Debug, Serialize)]
pub struct Inversion {
    pub diagnostic: &'static str,
    pub farther: String,
    pub closer: String,
    pub time: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub code_version: &'static str,
    /// Where artifacts were written; `None` for dry runs.
    pub output_dir: Option<PathBuf>,
    pub floquet: bool,
    pub dim: usize,
    pub times: Vec<f64>,
    pub series: Vec<Series>,
    pub states: Vec<StateRecord>,
    pub inversions: Vec<Inversion>,
    pub overlaps: Option<Table>,
    pub spectral: Option<Table>,
    pub grid: Option<GridRecord>,
    pub seeds: Vec<SeedEntry>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn series(&self, d: Diagnostic) -> Option<&Series> {
        self.series.iter().find(|s| s.diagnostic == d)
    }

    pub fn state(&self, label: &str) -> Option<&StateRecord> {
        self.states.iter().find(|s| s.label == label)
    }
}

/// Independent 64-bit seed for stream `name`, realization `index`.
pub fn substream(master: u64, name: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Dimension of a basis without building it.
pub fn basis_dimension(n_sites: usize, kind: BasisKind) -> u128 {
    if n_sites > 120 {
        return u128::MAX;
    }
    let full = 1u128 << n_sites;
    match kind {
        BasisKind::Full => full,
        BasisKind::PxpConstrained => {
            let (mut a, mut b) = (1u128, 1u128);
            for _ in 0..n_sites {
                (a, b) = (b, a + b);
            }
            b
        }
        BasisKind::ReflectionSector(p) => {
            let palindromes = 1u128 << n_sites.div_ceil(2);
            if p.sign() > 0.0 {
                (full + palindromes) / 2
            } else {
                (full - palindromes) / 2
            }
        }
    }
}

enum Dynamics {
    Hamiltonian(HermitianOperator),
    Floquet(UnitaryOperator),
}

struct Prepared {
    op: Dynamics,
    eig: Arc<EigenSystem>,
}

fn build_model(spec: &ModelSpec, basis: &Arc<SpinBasis>) -> Result<Dynamics> {
    Ok(match spec {
        ModelSpec::Mfim(p) => Dynamics::Hamiltonian(build_mfim(basis, p)?),
        ModelSpec::XxzNnn(p) => Dynamics::Hamiltonian(build_xxz_nnn(basis, p)?),
        ModelSpec::Random(p) => Dynamics::Hamiltonian(build_random_model(basis, p)?),
        ModelSpec::Pxp(p) => Dynamics::Hamiltonian(build_pxp(basis, p.omega)?),
        ModelSpec::KickedIsing(p) => Dynamics::Floquet(build_kicked_ising(basis, p)?),
        ModelSpec::Explicit { .. } => {
            return Err(QmeError::config("model.kind", "explicit operators need the library API"))
        }
    })
}

fn prepare(spec: &ModelSpec, basis: &Arc<SpinBasis>, cache: Option<&EigenCache>) -> Result<Prepared> {
    let op = build_model(spec, basis)?;
    let eig = match &op {
        Dynamics::Hamiltonian(h) => eig_hermitian_cached(h, cache)?,
        Dynamics::Floquet(u) => eig_unitary_cached(u, cache)?,
    };
    Ok(Prepared { op, eig: Arc::new(eig) })
}

#[derive(Clone, Debug)]
enum Recipe {
    Product(f64, f64),
    Tilted(Axis, f64),
    RandomAngles(f64),
    Mps(MpsSpec),
    Z2,
    Z4,
    Vacuum,
    Entangled(Axis, f64, f64),
}

impl Recipe {
    fn is_random(&self) -> bool {
        matches!(self, Recipe::RandomAngles(_) | Recipe::Entangled(..))
    }

    fn build(&self, basis: &Arc<SpinBasis>, seed: u64) -> Result<PureState> {
        match *self {
            Recipe::Product(t, p) => uniform_product_state(basis, t, p),
            Recipe::Tilted(a, t) => tilted_fm(basis, a, t),
            Recipe::RandomAngles(f) => random_angle_state(basis, f, seed),
            Recipe::Mps(spec) => mps_state(basis, &spec),
            Recipe::Z2 => pxp_z2(basis),
            Recipe::Z4 => pxp_z4(basis),
            Recipe::Vacuum => pxp_vacuum(basis),
            Recipe::Entangled(a, t, dt) => entangle_randomly(&tilted_fm(basis, a, t)?, dt, seed),
        }
    }
}

struct ResolvedState {
    label: String,
    recipe: Recipe,
}

fn short(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    }
}

fn resolve_states(cfg: &ScenarioConfig, fixed: Option<&Prepared>) -> Result<Vec<ResolvedState>> {
    let n = cfg.model.n_sites;
    let mut out = Vec::new();
    for (i, s) in cfg.states.iter().enumerate() {
        let pick = |label: &Option<String>, default: String| label.clone().unwrap_or(default);
        match s {
            StateSpec::Product { theta, phi, label } => out.push(ResolvedState {
                label: pick(label, format!("th{}_ph{}", short(theta.0), short(phi.0))),
                recipe: Recipe::Product(theta.0, phi.0),
            }),
            StateSpec::TiltedFm { axis, theta, label } => out.push(ResolvedState {
                label: pick(label, format!("{}{}", axis_name(*axis), short(theta.0))),
                recipe: Recipe::Tilted(*axis, theta.0),
            }),
            StateSpec::RandomAngles { f, label } => out.push(ResolvedState {
                label: pick(label, format!("f{}", short(*f))),
                recipe: Recipe::RandomAngles(*f),
            }),
            StateSpec::Mps { theta, left, right, label } => {
                let mut spec = MpsSpec::new(theta.0);
                if let Some(l) = left {
                    spec.left = *l;
                }
                if let Some(r) = right {
                    spec.right = *r;
                }
                out.push(ResolvedState {
                    label: pick(label, format!("mps{}", short(theta.0))),
                    recipe: Recipe::Mps(spec),
                })
            }
            StateSpec::PxpZ2 { label } => {
                out.push(ResolvedState { label: pick(label, "Z2".into()), recipe: Recipe::Z2 })
            }
            StateSpec::PxpZ4 { label } => {
                out.push(ResolvedState { label: pick(label, "Z4".into()), recipe: Recipe::Z4 })
            }
            StateSpec::PxpVacuum { label } => {
                out.push(ResolvedState { label: pick(label, "vacuum".into()), recipe: Recipe::Vacuum })
            }
            StateSpec::Entangled { axis, theta, dt, label } => out.push(ResolvedState {
                label: pick(label, format!("{}{}_dt{}", axis_name(*axis), short(theta.0), short(*dt))),
                recipe: Recipe::Entangled(*axis, theta.0, *dt),
            }),
            StateSpec::IsoEnergy { e_target, count, n_theta } => {
                let ModelSpec::Mfim(p) = &cfg.model.spec else { unreachable!("validated") };
                let e = match e_target {
                    Some(e) => *e,
                    None => {
                        let prep =
                            fixed.ok_or_else(|| QmeError::config(format!("states[{i}]"), "needs a fixed model"))?;
                        let v = prep.eig.values();
                        let mean = v.iter().sum::<f64>() / v.len() as f64;
                        0.5 * (mean + v[0]) / n as f64
                    }
                };
                let grid: Vec<f64> =
                    (0..*n_theta).map(|k| std::f64::consts::PI * k as f64 / (*n_theta - 1) as f64).collect();
                let pts = iso_energy_contour(p, e, &grid)
                    .map_err(|err| QmeError::config(format!("states[{i}].e_target"), err.to_string()))?;
                let picks: Vec<usize> = if *count >= pts.len() {
                    (0..pts.len()).collect()
                } else if *count == 1 {
                    vec![pts.len() / 2]
                } else {
                    (0..*count).map(|k| (k * (pts.len() - 1) + (*count - 1) / 2) / (*count - 1)).collect()
                };
                for (k, &j) in picks.iter().enumerate() {
                    let (t, ph) = pts[j];
                    out.push(ResolvedState { label: format!("iso{k}"), recipe: Recipe::Product(t, ph) });
                }
            }
        }
    }
    for (i, s) in out.iter().enumerate() {
        if out[..i].iter().any(|o| o.label == s.label) {
            return Err(QmeError::config("states", format!("duplicate state label `{}`", s.label)));
        }
    }
    Ok(out)
}

/// Results of one (state, realization) quench.
struct JobOut {
    series: Vec<Vec<f64>>,
    ipr: f64,
    energy: f64,
    variance: f64,
    beta: f64,
    delta0: f64,
    entropy0: f64,
    weights: Option<Vec<f64>>,
    energies: Option<Vec<f64>>,
}

struct JobContext<'a> {
    map: &'a SubsystemMap,
    grid: &'a TimeGrid,
    series_diags: &'a [Diagnostic],
    keep_weights: bool,
    keep_energies: bool,
}

fn simulate(prep: &Prepared, psi: &PureState, ctx: &JobContext) -> Result<JobOut> {
    let q = QuenchSetup::new(prep.eig.clone(), psi)?;
    let (energy, variance, beta) = match &prep.op {
        Dynamics::Hamiltonian(_) => {
            let (e, var) = energy_moments(prep.eig.values(), q.weights());
            (e, var, effective_beta(prep.eig.values(), e).unwrap_or(f64::NAN))
        }
        Dynamics::Floquet(_) => (f64::NAN, f64::NAN, f64::NAN),
    };
    let de = q.diagonal_ensemble(ctx.map)?;
    let rho0 = ctx.map.reduce_pure(psi.amplitudes())?;
    let delta0 = trace_distance(&rho0, de.reduced())?;
    let entropy0 = von_neumann_entropy(&rho0)?;
    let mut series = vec![Vec::with_capacity(ctx.grid.len()); ctx.series_diags.len()];
    if !ctx.series_diags.is_empty() {
        let rs = q.reduced_series(ctx.map, ctx.grid)?;
        for (out, d) in series.iter_mut().zip(ctx.series_diags) {
            for rho in &rs {
                out.push(evaluate(*d, rho, de.reduced())?);
            }
        }
    }
    Ok(JobOut {
        series,
        ipr: ipr(q.overlaps())?,
        energy,
        variance,
        beta,
        delta0,
        entropy0,
        weights: ctx.keep_weights.then(|| q.weights().to_vec()),
        energies: ctx.keep_energies.then(|| prep.eig.values().to_vec()),
    })
}

fn evaluate(d: Diagnostic, rho: &DensityMatrix, de: &DensityMatrix) -> Result<f64> {
    match d {
        Diagnostic::TraceDistance => trace_distance(rho, de),
        Diagnostic::FrobeniusDistance => frobenius_distance(rho, de),
        Diagnostic::EntanglementEntropy => von_neumann_entropy(rho),
        Diagnostic::EntanglementAsymmetry => entanglement_asymmetry(rho),
        Diagnostic::Overlaps | Diagnostic::SpectralFunction => unreachable!("not a time series"),
    }
}

fn time_grid(cfg: &ScenarioConfig) -> Result<TimeGrid> {
    let t = &cfg.time;
    let grid = if cfg.model.spec.is_floquet() {
        TimeGrid::periods(0, t.periods.unwrap_or(150), t.period_step.unwrap_or(1))
    } else {
        TimeGrid::uniform(t.t0.unwrap_or(0.0), t.t_max.unwrap_or(20.0), t.dt.unwrap_or(0.05))
    };
    grid.map_err(|e| QmeError::config("time", e.to_string()))
}

fn bipartition(cfg: &ScenarioConfig) -> Result<Bipartition> {
    let n = cfg.model.n_sites;
    let b = &cfg.bipartition;
    let res = match b.kind {
        BipartitionKind::Left => Bipartition::left(n, b.n_a.unwrap_or(n / 2)),
        BipartitionKind::Center => Bipartition::centered(n, b.n_a.expect("validated")),
    };
    res.map_err(|e| QmeError::config("bipartition", e.to_string()))
}

fn cache_for(cfg: &ScenarioConfig, root: &Path) -> Result<Option<EigenCache>> {
    if !cfg.output.cache {
        return Ok(None);
    }
    if let Some(dir) = &cfg.output.cache_dir {
        return EigenCache::new(dir).map(Some);
    }
    match EigenCache::from_env() {
        Some(c) => c.map(Some),
        None => EigenCache::new(root.join("cache")).map(Some),
    }
}

/// Runs one validated scenario config.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let hash = cfg.hash();
    let n = cfg.model.n_sites;
    let kind = cfg.model.basis.kind();
    let dim = basis_dimension(n, kind);
    if dim > cfg.output.max_dim as u128 {
        return Err(QmeError::DimensionCap { dim: dim.min(usize::MAX as u128) as usize, cap: cfg.output.max_dim });
    }
    let basis = Arc::new(build_basis(n, kind)?);
    let map = SubsystemMap::new(&basis, bipartition(cfg)?)?;
    let grid = time_grid(cfg)?;
    let floquet = cfg.model.spec.is_floquet();
    let root = opts.outdir.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| DEFAULT_OUTDIR.into());
    let cache = if opts.dry && cfg.output.cache_dir.is_none() { None } else { cache_for(cfg, &root)? };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| QmeError::Io(std::io::Error::other(e)))?;

    let fixed = if cfg.resample_model { None } else { Some(prepare(&cfg.model.spec, &basis, cache.as_ref())?) };
    let states = resolve_states(cfg, fixed.as_ref())?;
    let series_diags: Vec<Diagnostic> = cfg.diagnostics.iter().copied().filter(|d| d.is_series()).collect();
    let wants = |d: Diagnostic| cfg.diagnostics.contains(&d);
    if wants(Diagnostic::SpectralFunction) && (floquet || cfg.resample_model) {
        return Err(QmeError::config("diagnostics", "the spectral function needs one fixed Hamiltonian"));
    }
    let ctx = JobContext {
        map: &map,
        grid: &grid,
        series_diags: &series_diags,
        keep_weights: wants(Diagnostic::Overlaps) || wants(Diagnostic::SpectralFunction),
        keep_energies: cfg.resample_model && wants(Diagnostic::Overlaps),
    };
    let r_total = cfg.realizations;
    let draws = |s: &ResolvedState| if s.recipe.is_random() || cfg.resample_model { r_total } else { 1 };

    let mut seeds = Vec::new();
    for s in &states {
        for r in 0..draws(s) {
            seeds.push(SeedEntry {
                label: s.label.clone(),
                realization: r,
                state_seed: s
                    .recipe
                    .is_random()
                    .then(|| substream(cfg.master_seed, &format!("state/{}", s.label), r as u64)),
                model_seed: cfg.resample_model.then(|| substream(cfg.master_seed, "model", r as u64)),
            });
        }
    }
    let state_seed = |s: &ResolvedState, r: usize| substream(cfg.master_seed, &format!("state/{}", s.label), r as u64);

    // results[state][realization]
    let results: Vec<Vec<JobOut>> = pool.install(|| -> Result<Vec<Vec<JobOut>>> {
        match &fixed {
            Some(prep) => {
                let jobs: Vec<(usize, usize)> =
                    states.iter().enumerate().flat_map(|(i, s)| (0..draws(s)).map(move |r| (i, r))).collect();
                let outs: Vec<JobOut> = jobs
                    .par_iter()
                    .map(|&(i, r)| {
                        let psi = states[i].recipe.build(&basis, state_seed(&states[i], r))?;
                        simulate(prep, &psi, &ctx)
                    })
                    .collect::<Result<_>>()?;
                let mut grouped: Vec<Vec<JobOut>> = states.iter().map(|_| Vec::new()).collect();
                for ((i, _), o) in jobs.into_iter().zip(outs) {
                    grouped[i].push(o);
                }
                Ok(grouped)
            }
            None => {
                let per_r: Vec<Vec<JobOut>> = (0..r_total)
                    .into_par_iter()
                    .map(|r| {
                        let mut spec = cfg.model.spec.clone();
                        if let ModelSpec::Random(p) = &mut spec {
                            p.seed = substream(cfg.master_seed, "model", r as u64);
                            p.vectors = None;
                        }
                        let prep = prepare(&spec, &basis, None)?;
                        states
                            .iter()
                            .map(|s| simulate(&prep, &s.recipe.build(&basis, state_seed(s, r))?, &ctx))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                let mut grouped: Vec<Vec<JobOut>> = states.iter().map(|_| Vec::with_capacity(r_total)).collect();
                for row in per_r {
                    for (i, o) in row.into_iter().enumerate() {
                        grouped[i].push(o);
                    }
                }
                Ok(grouped)
            }
        }
    })?;

    let labels: Vec<String> = states.iter().map(|s| s.label.clone()).collect();
    let series: Vec<Series> = series_diags
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut mean = Vec::new();
            let mut stderr = Vec::new();
            for runs in &results {
                let (m, se) = average_series(runs.iter().map(|o| o.series[k].as_slice()).collect());
                mean.push(m);
                stderr.push((runs.len() > 1).then_some(se));
            }
            Series { diagnostic: d, labels: labels.clone(), mean, stderr }
        })
        .collect();

    let mut records: Vec<StateRecord> = states
        .iter()
        .zip(&results)
        .map(|(s, runs)| {
            let pick = |f: &dyn Fn(&JobOut) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
            StateRecord {
                label: s.label.clone(),
                realizations: runs.len(),
                ipr: pick(&|o| o.ipr),
                energy: pick(&|o| o.energy),
                energy_density: pick(&|o| o.energy / n as f64),
                variance: pick(&|o| o.variance),
                beta: pick(&|o| o.beta),
                delta0: pick(&|o| o.delta0),
                entropy0: pick(&|o| o.entropy0),
                spectral_peaks: None,
            }
        })
        .collect();

    let mean_weights: Vec<Vec<f64>> = if ctx.keep_weights {
        results
            .iter()
            .map(|runs| average_series(runs.iter().map(|o| o.weights.as_deref().unwrap()).collect()).0)
            .collect()
    } else {
        Vec::new()
    };
    let overlaps = if !wants(Diagnostic::Overlaps) {
        None
    } else if let Some(prep) = &fixed {
        let mut cols = vec![prep.eig.values().to_vec()];
        cols.extend(mean_weights.iter().cloned());
        let mut header = vec![if floquet { "phase".to_string() } else { "energy".to_string() }];
        header.extend(labels.iter().cloned());
        Some(Table::new(header, cols))
    } else {
        Some(overlap_histogram(&results, &labels, cfg.spectral.bins))
    };

    let spectral = if wants(Diagnostic::SpectralFunction) {
        let prep = fixed.as_ref().expect("checked above");
        let mut header = vec!["omega".to_string()];
        let mut cols = Vec::new();
        let mut omegas = Vec::new();
        for (i, w) in mean_weights.iter().enumerate() {
            let spec = OverlapSpectrum::new(prep.eig.values(), w)?;
            if omegas.is_empty() {
                let p = cfg.spectral.points;
                omegas = (0..p).map(|k| spec.span() * k as f64 / (p - 1) as f64).collect();
                cols.push(omegas.clone());
            }
            let sigma = cfg.spectral.sigma.unwrap_or_else(|| spec.default_broadening(n));
            let o = spec.spectral_function(&omegas, sigma)?;
            records[i].spectral_peaks = Some(prominent_peaks(&o, cfg.spectral.prominence).len());
            header.push(labels[i].clone());
            cols.push(o);
        }
        Some(Table::new(header, cols))
    } else {
        None
    };

    let grid_record = match (&cfg.grid, &fixed) {
        (Some(g), Some(prep)) => Some(pool.install(|| scan_grid(g.n_theta, g.n_phi, prep, &basis, &map))?),
        (Some(_), None) => return Err(QmeError::config("grid", "the product-state scan needs a fixed model")),
        _ => None,
    };

    let times = grid.times().to_vec();
    let inversions = find_inversions(&series, &times);
    let mut record = RunRecord {
        config: cfg.clone(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION"),
        output_dir: None,
        floquet,
        dim: basis.dim(),
        times,
        series,
        states: records,
        inversions,
        overlaps,
        spectral,
        grid: grid_record,
        seeds,
        wall_clock_seconds: 0.0,
    };
    record.wall_clock_seconds = started.elapsed().as_secs_f64();
    if !opts.dry {
        let dir = root.join(&cfg.scenario).join(&record.config_hash[..16]);
        write_artifacts(&record, &dir, opts.threads)?;
        record.output_dir = Some(dir);
    }
    Ok(record)
}

/// Pointwise mean and standard error over equally long runs.
fn average_series(runs: Vec<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let len = runs[0].len();
    let mut mean = Vec::with_capacity(len);
    let mut se = Vec::with_capacity(len);
    let mut buf = Vec::with_capacity(runs.len());
    for t in 0..len {
        buf.clear();
        buf.extend(runs.iter().map(|r| r[t]));
        let (m, s) = mean_stderr(&buf);
        mean.push(m);
        se.push(s);
    }
    (mean, se)
}

fn overlap_histogram(results: &[Vec<JobOut>], labels: &[String], bins: usize) -> Table {
    let all = results.iter().flatten().flat_map(|o| o.energies.as_deref().unwrap().iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e), b.max(e)));
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let centers: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let mut cols = vec![centers];
    for runs in results {
        let mut h = vec![0.0; bins];
        for o in runs {
            for (e, w) in o.energies.as_deref().unwrap().iter().zip(o.weights.as_deref().unwrap()) {
                h[(((e - lo) / width) as usize).min(bins - 1)] += w;
            }
        }
        h.iter_mut().for_each(|x| *x /= runs.len() as f64);
        cols.push(h);
    }
    let mut header = vec!["energy".to_string()];
    header.extend(labels.iter().cloned());
    Table::new(header, cols)
}

fn scan_grid(
    n_theta: usize,
    n_phi: usize,
    prep: &Prepared,
    basis: &Arc<SpinBasis>,
    map: &SubsystemMap,
) -> Result<GridRecord> {
    let n = basis.n_sites() as f64;
    let pts: Vec<(f64, f64)> = (0..n_theta)
        .flat_map(|i| {
            (0..n_phi).map(move |j| {
                let pi = std::f64::consts::PI;
                (pi * i as f64 / (n_theta - 1) as f64, 2.0 * pi * j as f64 / n_phi as f64)
            })
        })
        .collect();
    let points: Vec<GridPoint> = pts
        .par_iter()
        .map(|&(theta, phi)| {
            let psi = uniform_product_state(basis, theta, phi)?;
            let q = QuenchSetup::new(prep.eig.clone(), &psi)?;
            let (e, var) = energy_moments(prep.eig.values(), q.weights());
            let de = q.diagonal_ensemble(map)?;
            let rho0 = map.reduce_pure(psi.amplitudes())?;
            Ok(GridPoint {
                theta,
                phi,
                energy_density: e / n,
                ipr: ipr(q.overlaps())?,
                variance: var,
                beta: effective_beta(prep.eig.values(), e).unwrap_or(f64::NAN),
                delta0: trace_distance(&rho0, de.reduced())?,
                frobenius0: frobenius_distance(&rho0, de.reduced())?,
            })
        })
        .collect::<Result<_>>()?;
    let log_ipr: Vec<f64> = points.iter().map(|p| p.ipr.ln()).collect();
    let d0: Vec<f64> = points.iter().map(|p| p.delta0).collect();
    let f0: Vec<f64> = points.iter().map(|p| p.frobenius0).collect();
    let var: Vec<f64> = points.iter().map(|p| p.variance).collect();
    Ok(GridRecord {
        spearman_log_ipr_delta0: spearman(&log_ipr, &d0),
        spearman_log_ipr_frobenius0: spearman(&log_ipr, &f0),
        spearman_variance_delta0: spearman(&var, &d0),
        points,
    })
}

fn find_inversions(series: &[Series], times: &[f64]) -> Vec<Inversion> {
    let mut out = Vec::new();
    for s in series.iter().filter(|s| s.diagnostic != Diagnostic::EntanglementEntropy) {
        for (a, ca) in s.labels.iter().zip(&s.mean) {
            for (b, cb) in s.labels.iter().zip(&s.mean) {
                if a == b {
                    continue;
                }
                if let Some(time) = inversion_time(times, ca, cb, TAIL_FRACTION) {
                    out.push(Inversion {
                        diagnostic: s.diagnostic.name(),
                        farther: a.clone(),
                        closer: b.clone(),
                        time,
                    });
                }
            }
        }
    }
    out
}

fn first_crossings(s: &Series, times: &[f64]) -> Vec<serde_json::Value> {
    let mut out = Vec::new();
    for i in 0..s.labels.len() {
        for j in i + 1..s.labels.len() {
            let c = crossings(times, &s.mean[i], &s.mean[j]);
            out.push(json!({ "a": s.labels[i], "b": s.labels[j], "count": c.len(), "first": c.first() }));
        }
    }
    out
}

fn write_artifacts(rec: &RunRecord, dir: &Path, threads: Option<usize>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut plotted = Vec::new();
    for s in &rec.series {
        let name = format!("series_{}.csv", s.diagnostic.name());
        write_atomic(&dir.join(&name), &s.to_table(&rec.times, rec.floquet).to_csv()?)?;
        plotted.push((name, s.labels.clone()));
    }
    if let Some(t) = &rec.overlaps {
        write_atomic(&dir.join("overlaps.csv"), &t.to_csv()?)?;
    }
    if let Some(t) = &rec.spectral {
        write_atomic(&dir.join("spectral_function.csv"), &t.to_csv()?)?;
    }
    if let Some(g) = &rec.grid {
        let names = ["theta", "phi", "energy_density", "ipr", "variance", "beta", "delta0", "frobenius0"];
        let cols: Vec<Vec<f64>> = vec![
            g.points.iter().map(|p| p.theta).collect(),
            g.points.iter().map(|p| p.phi).collect(),
            g.points.iter().map(|p| p.energy_density).collect(),
            g.points.iter().map(|p| p.ipr).collect(),
            g.points.iter().map(|p| p.variance).collect(),
            g.points.iter().map(|p| p.beta).collect(),
            g.points.iter().map(|p| p.delta0).collect(),
            g.points.iter().map(|p| p.frobenius0).collect(),
        ];
        let t = Table::new(names.iter().map(|s| s.to_string()).collect(), cols);
        write_atomic(&dir.join("grid.csv"), &t.to_csv()?)?;
    }
    write_atomic(&dir.join("scalars.csv"), &scalars_csv(&rec.states)?)?;
    let crossings: serde_json::Map<String, serde_json::Value> =
        rec.series.iter().map(|s| (s.diagnostic.name().to_string(), json!(first_crossings(s, &rec.times)))).collect();
    let summary = json!({
        "scenario": rec.config.scenario,
        "config_hash": rec.config_hash,
        "dim": rec.dim,
        "states": rec.states,
        "inversions": rec.inversions,
        "crossings": crossings,
        "grid": rec.grid.as_ref().map(|g| json!({
            "points": g.points.len(),
            "spearman_log_ipr_delta0": g.spearman_log_ipr_delta0,
            "spearman_log_ipr_frobenius0": g.spearman_log_ipr_frobenius0,
            "spearman_variance_delta0": g.spearman_variance_delta0,
        })),
    });
    write_atomic(&dir.join("summary.json"), &pretty(&summary)?)?;
    let meta = json!({
        "scenario": rec.config.scenario,
        "config_hash": rec.config_hash,
        "code_version": rec.code_version,
        "config": rec.config,
        "master_seed": rec.config.master_seed,
        "seeds": rec.seeds,
        "threads": threads,
        "wall_clock_seconds": rec.wall_clock_seconds,
    });
    write_atomic(&dir.join("meta.json"), &pretty(&meta)?)?;
    write_atomic(&dir.join("config.toml"), rec.config.to_toml().as_bytes())?;
    if rec.config.output.plot && !plotted.is_empty() {
        write_atomic(&dir.join("plot.gp"), gnuplot_script(&plotted, rec.floquet).as_bytes())?;
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| QmeError::Io(e.into()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn scalars_csv(states: &[StateRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| QmeError::Io(std::io::Error::other(e));
    w.write_record([
        "label",
        "realizations",
        "ipr",
        "ipr_se",
        "energy",
        "energy_se",
        "energy_density",
        "variance",
        "beta",
        "delta0",
        "delta0_se",
        "entropy0",
        "spectral_peaks",
    ])
    .map_err(err)?;
    for s in states {
        let mut row = vec![s.label.clone(), s.realizations.to_string()];
        for x in [
            s.ipr.mean,
            s.ipr.stderr,
            s.energy.mean,
            s.energy.stderr,
            s.energy_density.mean,
            s.variance.mean,
            s.beta.mean,
            s.delta0.mean,
            s.delta0.stderr,
            s.entropy0.mean,
        ] {
            row.push(format_sci(x));
        }
        row.push(s.spectral_peaks.map(|p| p.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| QmeError::Io(e.into_error()))
}
