//! Scenario configuration schema, parsing, overrides and hashing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QmeError, Result};
use crate::hilbert::{BasisKind, Parity};
use crate::models::ModelSpec;
use crate::states::Axis;

/// Default guardrail on the dense Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 20_000;

/// A complete, validated scenario description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelConfig,
    #[serde(default)]
    pub states: Vec<StateSpec>,
    #[serde(default)]
    pub bipartition: BipartitionSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: Vec<Diagnostic>,
    /// Number of draws for states or models that contain randomness.
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Draw a fresh random-model Hamiltonian for every realization.
    #[serde(default)]
    pub resample_model: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Parameter sweep used by `qme sweep` when no axis is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn one() -> usize {
    1
}

fn default_diagnostics() -> Vec<Diagnostic> {
    vec![Diagnostic::TraceDistance]
}

/// Model family, chain length and Hilbert-space restriction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table", into = "toml::Table")]
pub struct ModelConfig {
    pub n_sites: usize,
    pub basis: BasisChoice,
    pub spec: ModelSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    Full,
    Pxp,
    /// Reflection-parity sector with parity +1.
    Even,
    Odd,
}

impl BasisChoice {
    pub fn kind(self) -> BasisKind {
        match self {
            BasisChoice::Full => BasisKind::Full,
            BasisChoice::Pxp => BasisKind::PxpConstrained,
            BasisChoice::Even => BasisKind::ReflectionSector(Parity::Even),
            BasisChoice::Odd => BasisKind::ReflectionSector(Parity::Odd),
        }
    }
}

impl TryFrom<toml::Table> for ModelConfig {
    type Error = String;

    fn try_from(mut t: toml::Table) -> std::result::Result<Self, String> {
        let n_sites = match t.remove("n_sites") {
            Some(toml::Value::Integer(n)) if n >= 2 => n as usize,
            Some(v) => return Err(format!("model.n_sites must be an integer >= 2, got {v}")),
            None => return Err("model.n_sites is required".into()),
        };
        let basis = match t.remove("basis") {
            Some(v) => BasisChoice::deserialize(v).map_err(|e| format!("model.basis: {e}"))?,
            None if t.get("kind").and_then(|k| k.as_str()) == Some("pxp") => BasisChoice::Pxp,
            None => BasisChoice::Full,
        };
        let spec = ModelSpec::deserialize(toml::Value::Table(t)).map_err(|e| format!("model: {e}"))?;
        if let ModelSpec::Explicit { .. } = spec {
            return Err("model.kind `explicit` cannot be built from a config".into());
        }
        Ok(ModelConfig { n_sites, basis, spec })
    }
}

impl From<ModelConfig> for toml::Table {
    fn from(m: ModelConfig) -> Self {
        let mut t = match toml::Value::try_from(&m.spec) {
            Ok(toml::Value::Table(t)) => t,
            _ => toml::Table::new(),
        };
        t.insert("n_sites".into(), toml::Value::Integer(m.n_sites as i64));
        t.insert("basis".into(), toml::Value::try_from(m.basis).expect("basis serializes"));
        t
    }
}

/// An angle given as a number or as a multiple of pi, e.g. `"3*pi/8"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AngleRepr", into = "f64")]
pub struct Angle(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum AngleRepr {
    Number(f64),
    Int(i64),
    Text(String),
}

impl TryFrom<AngleRepr> for Angle {
    type Error = String;

    fn try_from(r: AngleRepr) -> std::result::Result<Self, String> {
        match r {
            AngleRepr::Number(x) => Ok(Angle(x)),
            AngleRepr::Int(x) => Ok(Angle(x as f64)),
            AngleRepr::Text(s) => parse_angle(&s).map(Angle),
        }
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Parses `x`, `pi`, `k*pi`, `pi/d`, `k*pi/d` (spaces ignored).
pub fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let bad = || format!("cannot read `{s}` as an angle");
    let Some(pos) = t.find("pi") else { return t.parse::<f64>().map_err(|_| bad()) };
    let (pre, post) = (&t[..pos], &t[pos + 2..]);
    let coeff = match pre.trim_end_matches('*') {
        "" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    let div = match post {
        "" => 1.0,
        d => d.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(coeff * std::f64::consts::PI / div)
}

/// One entry of the `[[states]]` list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// Uniform product state `|θ, φ⟩`.
    Product {
        theta: Angle,
        phi: Angle,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    TiltedFm {
        axis: Axis,
        theta: Angle,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// Site-wise random Bloch angles, drawn per realization.
    RandomAngles {
        f: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Mps {
        theta: Angle,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    PxpZ2 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    PxpZ4 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    PxpVacuum {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// Tilted ferromagnet evolved for `dt` under random two-site generators.
    Entangled {
        axis: Axis,
        theta: Angle,
        dt: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// Product states on an iso-energy contour of the mixed-field Ising model.
    /// Without `e_target` the per-site energy halfway between the ground
    /// state and the spectral mean is used.
    IsoEnergy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        e_target: Option<f64>,
        #[serde(default = "default_iso_count")]
        count: usize,
        #[serde(default = "default_iso_grid")]
        n_theta: usize,
    },
}

fn default_iso_count() -> usize {
    5
}

fn default_iso_grid() -> usize {
    41
}

impl StateSpec {
    /// Whether the state changes from one realization to the next.
    pub fn is_random(&self) -> bool {
        matches!(self, StateSpec::RandomAngles { .. } | StateSpec::Entangled { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BipartitionSpec {
    #[serde(default)]
    pub kind: BipartitionKind,
    /// Size of subsystem A; half the chain (rounded down) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_a: Option<usize>,
}

impl Default for BipartitionSpec {
    fn default() -> Self {
        BipartitionSpec { kind: BipartitionKind::Left, n_a: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BipartitionKind {
    #[default]
    Left,
    Center,
}

/// Continuous times for Hamiltonians, integer periods for Floquet drives.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_step: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    TraceDistance,
    FrobeniusDistance,
    EntanglementEntropy,
    EntanglementAsymmetry,
    /// Eigenstate weights `|c_n|²` against energy (or quasi-energy).
    Overlaps,
    /// Broadened overlap spectral function `O_Ψ(ω)`.
    SpectralFunction,
}

impl Diagnostic {
    pub fn name(self) -> &'static str {
        match self {
            Diagnostic::TraceDistance => "trace_distance",
            Diagnostic::FrobeniusDistance => "frobenius_distance",
            Diagnostic::EntanglementEntropy => "entanglement_entropy",
            Diagnostic::EntanglementAsymmetry => "entanglement_asymmetry",
            Diagnostic::Overlaps => "overlaps",
            Diagnostic::SpectralFunction => "spectral_function",
        }
    }

    /// Diagnostics evaluated along the time grid.
    pub fn is_series(self) -> bool {
        !matches!(self, Diagnostic::Overlaps | Diagnostic::SpectralFunction)
    }
}

/// Scalar scan of uniform product states over `θ_i = πi/(n_θ−1)`, `φ_j = 2πj/n_φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSpec {
    /// Gaussian width; `0.05 · span / N` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub points: usize,
    /// Absolute prominence above which a peak is counted in the summary.
    pub prominence: f64,
    /// Bins of the realization-averaged overlap histogram.
    pub bins: usize,
}

impl Default for SpectralSpec {
    fn default() -> Self {
        SpectralSpec { sigma: None, points: 2001, prominence: 0.13, bins: 60 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Eigensystem cache; `$QME_CACHE_DIR`, then `<dir>/cache` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub cache: bool,
    pub plot: bool,
    pub max_dim: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, cache_dir: None, cache: true, plot: true, max_dim: DEFAULT_MAX_DIM }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: String,
    pub values: Vec<f64>,
}

/// Parses TOML text into a raw table (no schema check yet).
pub fn parse_toml(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| QmeError::config("<toml>", e.message().trim_end().to_string()))
}

/// Deserializes and validates a raw table.
pub fn from_table(table: toml::Table) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().trim_end().to_string();
        QmeError::config(offending_key(&msg), msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn from_str(text: &str) -> Result<ScenarioConfig> {
    from_table(parse_toml(text)?)
}

fn offending_key(msg: &str) -> String {
    // serde messages quote the field in backticks: "unknown field `foo`, expected ..."
    let mut parts = msg.split('`');
    match (parts.next(), parts.next()) {
        (Some(_), Some(k)) if !k.is_empty() => k.to_string(),
        _ => msg.split(':').next().unwrap_or("<config>").trim().to_string(),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if self.scenario.is_empty() || self.scenario.contains(['/', '\\']) {
            return Err(QmeError::config("scenario", "must be a non-empty name without path separators"));
        }
        match (&m.spec, m.basis) {
            (ModelSpec::Pxp(_), BasisChoice::Even | BasisChoice::Odd) => {}
            (ModelSpec::Mfim(p), BasisChoice::Even | BasisChoice::Odd)
                if p.boundary_dh1 != 0.0 || p.boundary_dhn != 0.0 =>
            {
                return Err(QmeError::config("model.basis", "parity sectors need zero boundary fields"));
            }
            (ModelSpec::Mfim(_), BasisChoice::Pxp) | (ModelSpec::XxzNnn(_), BasisChoice::Pxp) => {
                return Err(QmeError::config("model.basis", "this model does not preserve the blockade"));
            }
            (ModelSpec::Random(_) | ModelSpec::KickedIsing(_), b) if b != BasisChoice::Full => {
                return Err(QmeError::config("model.basis", "this model needs the full basis"));
            }
            _ => {}
        }
        if self.resample_model && !matches!(m.spec, ModelSpec::Random(_)) {
            return Err(QmeError::config("resample_model", "only the random model can be resampled"));
        }
        if self.realizations == 0 {
            return Err(QmeError::config("realizations", "must be at least 1"));
        }
        if self.states.is_empty() && self.grid.is_none() {
            return Err(QmeError::config("states", "need at least one state or a [grid] block"));
        }
        let floquet = m.spec.is_floquet();
        let t = &self.time;
        if floquet && (t.t0.is_some() || t.t_max.is_some() || t.dt.is_some()) {
            return Err(QmeError::config("time", "Floquet drives take `periods` and `period_step`"));
        }
        if !floquet && (t.periods.is_some() || t.period_step.is_some()) {
            return Err(QmeError::config("time.periods", "only Floquet drives count periods"));
        }
        if let Some(n_a) = self.bipartition.n_a {
            if n_a == 0 || n_a >= m.n_sites {
                return Err(QmeError::config("bipartition.n_a", format!("must lie in 1..{}", m.n_sites)));
            }
        }
        if self.bipartition.kind == BipartitionKind::Center && self.bipartition.n_a.is_none() {
            return Err(QmeError::config("bipartition.n_a", "a centered block needs an explicit size"));
        }
        for (i, s) in self.states.iter().enumerate() {
            let key = |f: &str| format!("states[{i}].{f}");
            match s {
                StateSpec::Product { theta, phi, .. } => {
                    check_theta(theta.0, &key("theta"))?;
                    if !(0.0..2.0 * std::f64::consts::PI).contains(&phi.0) {
                        return Err(QmeError::config(key("phi"), "must lie in [0, 2π)"));
                    }
                }
                StateSpec::TiltedFm { theta, .. } => check_theta(theta.0, &key("theta"))?,
                StateSpec::Entangled { theta, dt, .. } => {
                    check_theta(theta.0, &key("theta"))?;
                    if !(*dt >= 0.0) {
                        return Err(QmeError::config(key("dt"), "must be non-negative"));
                    }
                }
                StateSpec::RandomAngles { f, .. } => {
                    if !(0.0..=1.0).contains(f) {
                        return Err(QmeError::config(key("f"), "must lie in [0, 1]"));
                    }
                }
                StateSpec::IsoEnergy { count, n_theta, .. } => {
                    if !matches!(m.spec, ModelSpec::Mfim(_)) {
                        return Err(QmeError::config(
                            key("kind"),
                            "iso-energy states need the mixed-field Ising model",
                        ));
                    }
                    if *count == 0 || *n_theta < 2 {
                        return Err(QmeError::config(key("count"), "need count >= 1 and n_theta >= 2"));
                    }
                }
                StateSpec::PxpZ2 { .. } | StateSpec::PxpZ4 { .. } | StateSpec::PxpVacuum { .. } => {
                    if m.basis != BasisChoice::Pxp {
                        return Err(QmeError::config(key("kind"), "PXP states live in the blockaded basis"));
                    }
                }
                StateSpec::Mps { .. } => {}
            }
        }
        if let Some(g) = &self.grid {
            if g.n_theta < 2 || g.n_phi < 1 {
                return Err(QmeError::config("grid", "need n_theta >= 2 and n_phi >= 1"));
            }
            if floquet {
                return Err(QmeError::config("grid", "the product-state scan needs a Hamiltonian"));
            }
        }
        if self.spectral.points < 2 || self.spectral.bins == 0 {
            return Err(QmeError::config("spectral", "need at least 2 points and 1 bin"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, excluding output locations.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        c.output.cache_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes to JSON");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

fn check_theta(theta: f64, key: &str) -> Result<()> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(QmeError::config(key, "must lie in [0, π]"));
    }
    Ok(())
}

/// Reads a `--set` style value: TOML literal if it parses, else a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `path` (dot-separated, array indices or `*`) to `value`. Missing
/// leaf keys are created in existing tables; missing tables are created too.
pub fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(QmeError::config(path, "malformed key path"));
    }
    set_in_table(table, &parts, &value, path)
}

fn set_in_table(t: &mut toml::Table, parts: &[&str], value: &toml::Value, full: &str) -> Result<()> {
    let (head, rest) = (parts[0], &parts[1..]);
    if rest.is_empty() {
        t.insert(head.to_string(), value.clone());
        return Ok(());
    }
    let next = t.entry(head.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_in_value(next, rest, value, full)
}

fn set_in_value(v: &mut toml::Value, parts: &[&str], value: &toml::Value, full: &str) -> Result<()> {
    match v {
        toml::Value::Table(t) => set_in_table(t, parts, value, full),
        toml::Value::Array(items) => {
            let (head, rest) = (parts[0], &parts[1..]);
            let targets: Vec<usize> = if head == "*" {
                // wildcards only touch entries that already carry the key
                (0..items.len()).filter(|&i| !get_in(&items[i], rest).is_empty()).collect()
            } else {
                let i: usize = head.parse().map_err(|_| QmeError::config(full, format!("`{head}` is not an index")))?;
                if i >= items.len() {
                    return Err(QmeError::config(full, format!("index {i} out of range")));
                }
                vec![i]
            };
            for i in targets {
                if rest.is_empty() {
                    items[i] = value.clone();
                } else {
                    set_in_value(&mut items[i], rest, value, full)?;
                }
            }
            Ok(())
        }
        _ => Err(QmeError::config(full, "path descends into a scalar")),
    }
}

/// Values currently stored at `path` (several when the path uses `*`).
pub fn get_path<'a>(table: &'a toml::Table, path: &str) -> Vec<&'a toml::Value> {
    let parts: Vec<&str> = path.split('.').collect();
    let (head, rest) = parts.split_first().expect("split yields at least one part");
    table.get(*head).map(|v| get_in(v, rest)).unwrap_or_default()
}

fn get_in<'a>(v: &'a toml::Value, parts: &[&str]) -> Vec<&'a toml::Value> {
    fn walk<'a>(v: &'a toml::Value, parts: &[&str], out: &mut Vec<&'a toml::Value>) {
        let Some((head, rest)) = parts.split_first() else {
            out.push(v);
            return;
        };
        match v {
            toml::Value::Table(t) => {
                if let Some(n) = t.get(*head) {
                    walk(n, rest, out);
                }
            }
            toml::Value::Array(a) if *head == "*" => a.iter().for_each(|n| walk(n, rest, out)),
            toml::Value::Array(a) => {
                if let Some(n) = head.parse::<usize>().ok().and_then(|i| a.get(i)) {
                    walk(n, rest, out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(v, parts, &mut out);
    out
}
