//! One-dimensional parameter sweeps over a numeric config key.

use std::path::PathBuf;

use crate::error::{QmeError, Result};

use super::config::{self, get_path, set_path};
use super::exec::{run, RunOptions, RunRecord, DEFAULT_OUTDIR};
use super::output::format_sci;
use super::output::write_atomic;

#[derive(Debug)]
pub struct SweepRecord {
    pub axis: String,
    pub values: Vec<f64>,
    pub runs: Vec<RunRecord>,
    /// `<outdir>/<scenario>/sweep_<axis>/summary.csv`; `None` for dry runs.
    pub summary_path: Option<PathBuf>,
}

/// Runs `table` once per value of `axis`. Axis and values default to the
/// config's own `[sweep]` block.
pub fn sweep(
    table: &toml::Table,
    axis: Option<&str>,
    values: Option<&[f64]>,
    opts: &RunOptions,
) -> Result<SweepRecord> {
    let base = config::from_table(table.clone())?;
    let (axis, values) = match (axis, values, &base.sweep) {
        (Some(a), Some(v), _) => (a.to_string(), v.to_vec()),
        (None, None, Some(s)) => (s.axis.clone(), s.values.clone()),
        (Some(a), None, Some(s)) if a == s.axis => (s.axis.clone(), s.values.clone()),
        _ => return Err(QmeError::config("sweep", "give both an axis and values, or a [sweep] block")),
    };
    if values.is_empty() {
        return Err(QmeError::config("sweep.values", "need at least one value"));
    }
    let existing = get_path(table, &axis);
    if existing.is_empty() {
        return Err(QmeError::config(axis.as_str(), "no such key in the config"));
    }
    let integer = existing.iter().all(|v| v.is_integer());
    let numeric = |v: &toml::Value| match v {
        toml::Value::Float(_) | toml::Value::Integer(_) => true,
        toml::Value::String(s) => config::parse_angle(s).is_ok(),
        _ => false,
    };
    if let Some(bad) = existing.iter().find(|v| !numeric(v)) {
        return Err(QmeError::config(axis.as_str(), format!("sweeps need a numeric key, found `{bad}`")));
    }

    let mut runs = Vec::with_capacity(values.len());
    for &v in &values {
        let mut t = table.clone();
        let value = if integer && v.fract() == 0.0 { toml::Value::Integer(v as i64) } else { toml::Value::Float(v) };
        set_path(&mut t, &axis, value)?;
        t.remove("sweep");
        let cfg = config::from_table(t)?;
        runs.push(run(&cfg, opts)?);
    }

    let summary_path = if opts.dry {
        None
    } else {
        let root = opts.outdir.clone().or_else(|| base.output.dir.clone()).unwrap_or_else(|| DEFAULT_OUTDIR.into());
        let dir = root.join(&base.scenario).join(format!("sweep_{}", axis.replace('*', "all")));
        let path = dir.join("summary.csv");
        write_atomic(&path, &summary_csv(&axis, &values, &runs)?)?;
        Some(path)
    };
    Ok(SweepRecord { axis, values, runs, summary_path })
}

fn summary_csv(axis: &str, values: &[f64], runs: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| QmeError::Io(std::io::Error::other(e));
    w.write_record([
        axis,
        "label",
        "ipr",
        "ipr_se",
        "energy_density",
        "energy_density_se",
        "delta0",
        "delta0_se",
        "beta",
        "run_hash",
    ])
    .map_err(err)?;
    for (v, r) in values.iter().zip(runs) {
        for s in &r.states {
            let mut row = vec![format_sci(*v), s.label.clone()];
            for x in [
                s.ipr.mean,
                s.ipr.stderr,
                s.energy_density.mean,
                s.energy_density.stderr,
                s.delta0.mean,
                s.delta0.stderr,
                s.beta.mean,
            ] {
                row.push(format_sci(x));
            }
            row.push(r.config_hash[..16].to_string());
            w.write_record(&row).map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| QmeError::Io(e.into_error()))
}
