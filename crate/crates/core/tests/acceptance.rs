//! Acceptance checks. Each criterion prints one PASS or FAIL line with the
//! measured values; every threshold lives in this file.
//!
//! `cargo test -p qme-core --test acceptance` runs everything. Criterion ids
//! given after `--` select a subset, e.g. `-- 1 7 10`.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use qme_core::analysis::{crossings, inversion_time, linear_fit, longest_inversion_fraction, mean_log_decay, spearman};
use qme_core::diagnostics::{entanglement_asymmetry, trace_distance};
use qme_core::dynamics::{QuenchSetup, TimeGrid};
use qme_core::hilbert::{build_basis, BasisKind, Bipartition, SpinBasis, SubsystemMap};
use qme_core::models::{
    build_kicked_ising, build_mfim, build_random_model, build_xxz_nnn, KickedIsingParams, MfimParams,
    RandomModelParams, XxzNnnParams,
};
use qme_core::runner::{self, Diagnostic, RunOptions, RunRecord};
use qme_core::spectral::{effective_beta, eig_hermitian, eigenvalues_hermitian, r_statistic};
use qme_core::states::{random_angle_state, tilted_fm, uniform_product_state, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

/// Share of the window whose mean decides which curve "ends below".
const TAIL: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
    info: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into(), info: Vec::new() }
    }

    fn with_info(mut self, line: impl Into<String>) -> Self {
        self.info.push(line.into());
        self
    }
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    /// Wall-clock budget in seconds, part of the pass condition.
    budget: Option<f64>,
    check: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: "1", name: "type-1 crossing", budget: Some(300.0), check: type1_crossing },
    Criterion { id: "2", name: "type-2 null result", budget: None, check: type2_null },
    Criterion { id: "3", name: "IPR anti-correlation", budget: Some(600.0), check: ipr_anticorrelation },
    Criterion { id: "4", name: "random-model ensemble", budget: Some(1200.0), check: random_model },
    Criterion { id: "5", name: "Floquet surrogate", budget: None, check: floquet },
    Criterion { id: "6", name: "PXP scars", budget: Some(600.0), check: pxp_scars },
    Criterion { id: "7", name: "oracle equivalences", budget: Some(60.0), check: oracles },
    Criterion { id: "8", name: "equilibration", budget: None, check: equilibration },
    Criterion { id: "9", name: "level statistics", budget: None, check: level_statistics },
    Criterion { id: "10a", name: "product energy 1/N", budget: None, check: energy_scaling },
    Criterion { id: "10b", name: "asymmetry crossings", budget: None, check: asymmetry_pattern },
    Criterion { id: "10c", name: "Frobenius vs trace crossings", budget: None, check: frobenius_pairs },
    Criterion { id: "10d", name: "strong/weak thermalization", budget: None, check: strong_weak },
    Criterion { id: "11", name: "effective temperature", budget: None, check: effective_temperature },
];

fn main() -> ExitCode {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| {
        selected.is_empty() || selected.iter().any(|s| id == s || (id.starts_with(s.as_str()) && s.len() >= 2))
    };
    panic::set_hook(Box::new(|_| {}));
    let (mut passed, mut failed) = (Vec::new(), Vec::new());
    for c in CRITERIA.iter().filter(|c| wanted(c.id)) {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let in_budget = c.budget.is_none_or(|b| secs <= b);
        let pass = outcome.pass && in_budget;
        let budget = match c.budget {
            Some(b) => format!("{secs:.1}s of {b:.0}s"),
            None => format!("{secs:.1}s"),
        };
        println!("{} {:>3} {}: {} [{budget}]", if pass { "PASS" } else { "FAIL" }, c.id, c.name, outcome.detail);
        for line in &outcome.info {
            println!("           {line}");
        }
        if pass {
            passed.push(c.id)
        } else {
            failed.push(c.id)
        }
    }
    println!("acceptance: {} passed, {} failed {:?}", passed.len(), failed.len(), failed);
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn scenario(id: &str) -> RunRecord {
    let cfg = runner::load_config(id, &[]).unwrap();
    runner::run(&cfg, &RunOptions { dry: true, ..Default::default() }).unwrap()
}

fn curves(rec: &RunRecord, d: Diagnostic) -> Vec<Vec<f64>> {
    rec.series(d).unwrap().mean.clone()
}

fn full(n: usize) -> Arc<SpinBasis> {
    Arc::new(build_basis(n, BasisKind::Full).unwrap())
}

fn strictly(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

fn fmt_list(values: &[f64], digits: usize) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn type1_crossing() -> Outcome {
    let rec = scenario("fig1_type1");
    let td = curves(&rec, Diagnostic::TraceDistance);
    let labels = &rec.series(Diagnostic::TraceDistance).unwrap().labels;
    let mut found = Vec::new();
    for i in 0..td.len() {
        for j in i + 1..td.len() {
            if let Some(t) = inversion_time(&rec.times, &td[j], &td[i], TAIL) {
                found.push((t, format!("{} over {} at {t:.2}", labels[j], labels[i])));
            }
        }
    }
    let first = found.iter().map(|f| f.0).reduce(f64::min);
    let n = rec.config.model.n_sites;
    let pass = n == 12 && first.is_some_and(|t| (1.0..=8.0).contains(&t));
    let mut out =
        Outcome::new(pass, format!("N = {n}, {} inversions, first at {:.2?} (need [1, 8])", found.len(), first));
    out.info = found.into_iter().map(|f| f.1).collect();
    out
}

fn type2_null() -> Outcome {
    let rec = scenario("fig1_type2");
    let td = curves(&rec, Diagnostic::TraceDistance);
    let d0: Vec<f64> = rec.states.iter().map(|s| s.delta0.mean).collect();
    let e: Vec<f64> = rec.states.iter().map(|s| s.energy_density.mean).collect();
    let mean = d0.iter().sum::<f64>() / d0.len() as f64;
    let spread = (d0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - d0.iter().cloned().fold(f64::INFINITY, f64::min))
        / mean;
    let mut worst = (0.0, 0, 0);
    for i in 0..td.len() {
        for j in 0..td.len() {
            let frac = if i == j { 0.0 } else { longest_inversion_fraction(&rec.times, &td[i], &td[j]) };
            if frac > worst.0 {
                worst = (frac, i, j);
            }
        }
    }
    let pass = rec.states.len() >= 4 && spread < 0.10 && worst.0 <= 0.20;
    let labels = &rec.series(Diagnostic::TraceDistance).unwrap().labels;
    Outcome::new(
        pass,
        format!(
            "{} states, delta0 spread {:.1}% (need < 10%), longest persistent crossing {:.0}% of window (need <= 20%)",
            rec.states.len(),
            100.0 * spread,
            100.0 * worst.0
        ),
    )
    .with_info(format!("delta0 {}", fmt_list(&d0, 3)))
    .with_info(format!("finite-chain e/N {}", fmt_list(&e, 3)))
    .with_info(format!("worst pair {} vs {}", labels[worst.1], labels[worst.2]))
}

fn ipr_anticorrelation() -> Outcome {
    let rec = scenario("fig2_grid");
    let g = rec.grid.as_ref().unwrap();
    let rho = g.spearman_log_ipr_delta0;
    Outcome::new(
        rec.config.model.n_sites == 10 && g.points.len() == 441 && rho <= -0.6,
        format!(
            "N = {}, {} grid points, spearman(ln IPR, delta0) = {rho:.3} (need <= -0.6)",
            rec.config.model.n_sites,
            g.points.len()
        ),
    )
}

fn random_model() -> Outcome {
    let rec = scenario("fig3_random");
    let td = curves(&rec, Diagnostic::TraceDistance);
    let ipr: Vec<f64> = rec.states.iter().map(|s| s.ipr.mean).collect();
    let d0: Vec<f64> = rec.states.iter().map(|s| s.delta0.mean).collect();
    let cross = crossings(&rec.times, &td[td.len() - 1], &td[0]);
    let realizations = rec.states.iter().map(|s| s.realizations).min().unwrap_or(0);
    let (a, b, c) = (strictly(&ipr, false), strictly(&d0, true), !cross.is_empty());
    Outcome::new(
        a && b && c && realizations >= 100,
        format!(
            "{realizations} realizations; (a) IPR decreasing {a}; (b) delta0 increasing {b}; (c) f=0.2/f=1 crossings {}",
            cross.len()
        ),
    )
    .with_info(format!("IPR {}", fmt_sci(&ipr)))
    .with_info(format!("delta0 {}", fmt_list(&d0, 4)))
    .with_info(format!("first crossing {:.3?}", cross.first()))
}

/// Slope of the half-chain entropy over the first six periods.
fn early_slope(times: &[f64], s: &[f64]) -> f64 {
    linear_fit(&times[..6], &s[..6]).0
}

fn floquet() -> Outcome {
    let defect = build_kicked_ising(&full(10), &KickedIsingParams::default()).unwrap().unitarity_defect();
    let rec = scenario("fig4_floquet_ed");
    let ent = curves(&rec, Diagnostic::EntanglementEntropy);
    let ipr: Vec<f64> = rec.states.iter().map(|s| s.ipr.mean).collect();
    let slopes: Vec<f64> = ent.iter().map(|s| early_slope(&rec.times, s)).collect();
    let rho = spearman(&ipr, &slopes);
    let mut n_cross = 0;
    for i in 0..ent.len() {
        for j in i + 1..ent.len() {
            n_cross += crossings(&rec.times, &ent[i], &ent[j]).len();
        }
    }
    let span = rec.times.last().copied().unwrap_or(0.0);
    Outcome::new(
        defect < 1e-12 && rho <= -0.5 && n_cross > 0 && span <= 150.0,
        format!(
            "(a) unitarity defect {defect:.1e}; (b) spearman(IPR, early slope) = {rho:.2} (need <= -0.5); (c) {n_cross} entropy crossings within {span} periods"
        ),
    )
    .with_info(format!("IPR {}", fmt_sci(&ipr)))
    .with_info(format!("early slopes {}", fmt_list(&slopes, 4)))
}

fn pxp_scars() -> Outcome {
    let rec = scenario("fig5_pxp");
    let n = rec.config.model.n_sites;
    let td = curves(&rec, Diagnostic::TraceDistance);
    let (z2, z4, vac) = (&td[0], &td[1], &td[2]);
    let violations: Vec<f64> = rec
        .times
        .iter()
        .enumerate()
        .filter(|&(i, &t)| t >= 2.0 && !(z2[i] > z4[i] && z2[i] > vac[i]))
        .map(|(_, &t)| t)
        .collect();
    let ipr: Vec<f64> = rec.states.iter().map(|s| s.ipr.mean).collect();
    let peaks: Vec<usize> = rec.states.iter().map(|s| s.spectral_peaks.unwrap_or(0)).collect();
    let a = violations.is_empty();
    let b = ipr[0] > ipr[1] && ipr[0] > ipr[2];
    let c = peaks[0] >= n / 2 && peaks[2] < 5;
    Outcome::new(
        n == 16 && rec.dim == 2584 && a && b && c,
        format!(
            "(a) Z2 farthest on [2, 20]: {a} ({} violating samples); (b) IPR Z2 > Z4, vacuum: {b}; (c) peaks Z2 {} (need >= {}), vacuum {} (need < 5)",
            violations.len(),
            peaks[0],
            n / 2,
            peaks[2]
        ),
    )
    .with_info(format!("IPR Z2/Z4/vacuum {}", fmt_sci(&ipr)))
    .with_info(format!(
        "violations from {:?} to {:?}",
        violations.first(),
        violations.last()
    ))
    .with_info(format!("peaks at prominence {}: {peaks:?}", rec.config.spectral.prominence))
}

fn oracles() -> Outcome {
    let evo = common::evolution_oracle_error();
    let deph = common::dephasing_oracle_error();
    let (asym, _) = common::asymmetry_oracle_error();
    Outcome::new(
        evo < 1e-8 && deph < 1e-10 && asym < 1e-10,
        format!(
            "(a) evolution vs expm {evo:.1e} (need < 1e-8); (b) dephasing sum {deph:.1e} (need < 1e-10); (c) asymmetry projectors {asym:.1e} (need < 1e-10)"
        ),
    )
}

/// Trace distance between the window-averaged half-chain state and the
/// diagonal ensemble, N = 8 random model with Hamiltonian seed 1.
fn window_distance(j_h: f64, t0: f64, t1: f64) -> f64 {
    let n = 8;
    let b = full(n);
    let h = build_random_model(&b, &RandomModelParams { seed: 1, j_h, ..Default::default() }).unwrap();
    let psi = random_angle_state(&b, 0.5, 7).unwrap();
    let q = QuenchSetup::new(Arc::new(eig_hermitian(&h).unwrap()), &psi).unwrap();
    let map = SubsystemMap::new(&b, Bipartition::left_half(n)).unwrap();
    let de = q.diagonal_ensemble(&map).unwrap();
    trace_distance(&q.window_average(&map, t0, t1).unwrap(), de.reduced()).unwrap()
}

fn equilibration() -> Outcome {
    let d = window_distance(-4.0, 100.0, 1100.0);
    Outcome::new(d < 1e-2, format!("N = 8, J_H = -4, window [100, 1100]: distance {d:.3e} (need < 1e-2)"))
        .with_info(format!("same window at J_H = 0: {:.3e}", window_distance(0.0, 100.0, 1100.0)))
        .with_info(format!("J_H = -4 over [100, 10100]: {:.3e}", window_distance(-4.0, 100.0, 10100.0)))
        .with_info(format!("J_H = -4 over [100, 100100]: {:.3e}", window_distance(-4.0, 100.0, 100100.0)))
}

fn level_statistics() -> Outcome {
    let n = 13;
    let vals = eigenvalues_hermitian(&build_mfim(&full(n), &MfimParams::default()).unwrap()).unwrap();
    let r = r_statistic(&vals, 0.6).unwrap();
    let (goe, _) = common::sampled_r_references(5);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut diag: Vec<f64> = (0..vals.len()).map(|_| rng.random::<f64>()).collect();
    diag.sort_by(f64::total_cmp);
    let poisson = r_statistic(&diag, 0.6).unwrap();
    let poisson_ref = 2.0 * 2f64.ln() - 1.0;
    Outcome::new(
        (r - 0.53).abs() <= 0.02 && (r - goe).abs() <= 0.02 && (poisson - poisson_ref).abs() <= 0.01,
        format!(
            "N = {n}: <r> = {r:.4} (need 0.53 +- 0.02 and within 0.02 of sampled GOE {goe:.4}); random diagonal {poisson:.4} (need {poisson_ref:.3} +- 0.01)"
        ),
    )
}

fn energy_scaling() -> Outcome {
    let p = MfimParams::default();
    let sizes = [8usize, 10, 12];
    let states = [(0.7, 0.3), (1.2, 2.0), (2.5, 4.0)];
    let mut errs = vec![Vec::new(); states.len()];
    for &n in &sizes {
        let b = full(n);
        let h = build_mfim(&b, &p).unwrap();
        for (k, &(th, ph)) in states.iter().enumerate() {
            let psi = uniform_product_state(&b, th, ph).unwrap();
            errs[k].push((h.expectation(psi.amplitudes()) / n as f64 - p.product_energy_density(th, ph)).abs());
        }
    }
    let mut pass = true;
    let mut out_info = Vec::new();
    for (k, e) in errs.iter().enumerate() {
        let c: Vec<f64> = e.iter().zip(&sizes).map(|(e, &n)| e * n as f64).collect();
        let fit = c.iter().sum::<f64>() / c.len() as f64;
        let ratio = c.iter().cloned().fold(0.0, f64::max) / c.iter().cloned().fold(f64::INFINITY, f64::min);
        let within = e.iter().zip(&sizes).all(|(e, &n)| *e <= 2.0 * fit / n as f64);
        let ln_n: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let ln_e: Vec<f64> = e.iter().map(|x| x.ln()).collect();
        let exponent = linear_fit(&ln_n, &ln_e).0;
        pass &= ratio <= 2.0 && within;
        out_info.push(format!(
            "(theta, phi) = {:?}: errors {} C = {fit:.4}, max/min C_N {ratio:.3}, fitted exponent {exponent:.3}",
            states[k],
            fmt_sci(e)
        ));
    }
    let mut out = Outcome::new(pass, "error <= 2C/N with C_N = N * error within a factor 2, N in {8, 10, 12}");
    out.info = out_info;
    out
}

fn asymmetry_pattern() -> Outcome {
    let n = 10;
    let b = full(n);
    let h = build_xxz_nnn(&b, &XxzNnnParams::default()).unwrap();
    let q = QuenchSetup::new(Arc::new(eig_hermitian(&h).unwrap()), &tilted_fm(&b, Axis::Z, 0.0).unwrap()).unwrap();
    let map = SubsystemMap::new(&b, Bipartition::left_half(n)).unwrap();
    let grid = TimeGrid::uniform(0.0, 20.0, 0.05).unwrap();
    let fm = q
        .reduced_series(&map, &grid)
        .unwrap()
        .iter()
        .map(|r| entanglement_asymmetry(r).unwrap().abs())
        .fold(0.0, f64::max);

    let rec = scenario("sm_xxz_asymmetry");
    let a = curves(&rec, Diagnostic::EntanglementAsymmetry);
    let a0: Vec<f64> = a.iter().map(|c| c[0]).collect();
    let mut pairs = Vec::new();
    let mut all = true;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            // the larger-θ curve starts above, so its first crossing takes it below
            let c = crossings(&rec.times, &a[j], &a[i]);
            all &= !c.is_empty();
            pairs.push(format!(
                "index {j} under {i} first at {:.2?} ({} crossings), tail-mean inversion {:.2?}",
                c.first(),
                c.len(),
                inversion_time(&rec.times, &a[j], &a[i], TAIL)
            ));
        }
    }
    let ordered = strictly(&a0, true);
    let mut out = Outcome::new(
        fm < 1e-10 && ordered && all,
        format!(
            "z-FM max |dS| {fm:.1e} (need < 1e-10); initial dS increasing in theta {ordered}; every larger-theta curve crosses below every smaller one {all}"
        ),
    )
    .with_info(format!("initial dS {}", fmt_list(&a0, 4)));
    out.info.extend(pairs);
    out
}

fn frobenius_pairs() -> Outcome {
    let rec = scenario("sm_frobenius");
    let td = curves(&rec, Diagnostic::TraceDistance);
    let fr = curves(&rec, Diagnostic::FrobeniusDistance);
    let labels = &rec.series(Diagnostic::TraceDistance).unwrap().labels;
    let mut agree = true;
    let mut out_info = Vec::new();
    for i in 0..td.len() {
        for j in i + 1..td.len() {
            let ct = crossings(&rec.times, &td[j], &td[i]);
            let cf = crossings(&rec.times, &fr[j], &fr[i]);
            agree &= ct.is_empty() == cf.is_empty();
            out_info.push(format!(
                "{} vs {}: trace {} crossings, Frobenius {} crossings; inversions {:.2?} / {:.2?}",
                labels[j],
                labels[i],
                ct.len(),
                cf.len(),
                inversion_time(&rec.times, &td[j], &td[i], TAIL),
                inversion_time(&rec.times, &fr[j], &fr[i], TAIL)
            ));
        }
    }
    let mut out = Outcome::new(
        agree,
        format!("every pair crosses in both metrics or in neither over [0, {}]: {agree}", rec.times.last().unwrap()),
    );
    out.info = out_info;
    out
}

fn strong_weak() -> Outcome {
    let rec = scenario("sm_strong_weak");
    let td = curves(&rec, Diagnostic::TraceDistance);
    let d0: Vec<f64> = rec.states.iter().map(|s| s.delta0.mean).collect();
    let rate: Vec<f64> = td.iter().map(|c| mean_log_decay(c, TAIL)).collect();
    let ipr: Vec<f64> = rec.states.iter().map(|s| s.ipr.mean).collect();
    let (a, b, c) = (strictly(&d0, true), strictly(&rate, true), strictly(&ipr, false));
    Outcome::new(
        a && b && c,
        format!("theta 0..pi/2 about x: delta0 increasing {a}; decay rate increasing {b}; IPR decreasing {c}"),
    )
    .with_info(format!("delta0 {}", fmt_list(&d0, 4)))
    .with_info(format!("ln(d(0)/tail mean) {}", fmt_list(&rate, 3)))
    .with_info(format!("IPR {}", fmt_sci(&ipr)))
}

fn effective_temperature() -> Outcome {
    let vals = eigenvalues_hermitian(&build_mfim(&full(8), &MfimParams::default()).unwrap()).unwrap();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let at_mean = effective_beta(&vals, mean).unwrap().abs();
    // just off the mean the bisection itself has to land on zero
    let near_mean = effective_beta(&vals, mean + 1e-12).unwrap().abs();
    let mut two_level: f64 = 0.0;
    for beta in [-2.0, -0.7, 0.1, 0.5, 1.3, 3.0] {
        let got = effective_beta(&[-1.0, 1.0], -f64::tanh(beta)).unwrap();
        two_level = two_level.max((got - beta).abs());
    }
    Outcome::new(
        at_mean <= 1e-8 && near_mean <= 1e-8 && two_level <= 1e-10,
        format!(
            "|beta| at spectral mean {at_mean:.1e}, 1e-12 above it {near_mean:.1e} (need <= 1e-8); two-level -tanh error {two_level:.1e} (need <= 1e-10)"
        ),
    )
}
