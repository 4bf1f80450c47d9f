//! Declarative scenarios: config parsing and validation, the stage pipeline,
//! tabular artifacts and the checksummed manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::{self, DOMAIN_THRESHOLD};
use crate::error::{Error, Result};
use crate::modes::{self, OperatorModes};
use crate::poles;
use crate::scenario::{self, FlatBand, FlatBandParams, TrajectoryParams};
use crate::state::DensityMatrix;
use crate::wwm::{self, PhaseSpaceFunction, PhaseSpaceGrid, PositionGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Artifact groups, one per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Poles,
    Evolve,
    Modes,
    Wigner,
    Classical,
}

impl Output {
    pub const ALL: [Output; 5] = [Output::Poles, Output::Evolve, Output::Modes, Output::Wigner, Output::Classical];

    pub fn name(self) -> &'static str {
        match self {
            Output::Poles => "poles",
            Output::Evolve => "evolve",
            Output::Modes => "modes",
            Output::Wigner => "wigner",
            Output::Classical => "classical",
        }
    }
}

/// Sampling of the emitted tables. Times are in units of the relaxation
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub ladder: usize,
    pub evolve_horizon: f64,
    pub evolve_samples: usize,
    pub wigner_times: Vec<f64>,
    pub wigner_points: usize,
    pub wigner_extent: f64,
    pub domain_edges: Vec<f64>,
    pub domain_hbar: f64,
    pub domain_points: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            ladder: 3,
            evolve_horizon: 3.0,
            evolve_samples: 301,
            wigner_times: vec![0.0, 1.0, 3.0],
            wigner_points: 48,
            wigner_extent: 6.0,
            domain_edges: vec![0.0, 1.0, 2.0, 3.0],
            domain_hbar: 0.01,
            domain_points: 200,
        }
    }
}

impl Settings {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.ladder < 1 {
            out.push(("ladder".into(), "must be >= 1".into()));
        }
        if !(self.evolve_horizon > 0.0) {
            out.push(("evolve_horizon".into(), format!("must be > 0, got {}", self.evolve_horizon)));
        }
        if self.evolve_samples < 2 {
            out.push(("evolve_samples".into(), "must be >= 2".into()));
        }
        if self.wigner_times.iter().any(|t| !(*t >= 0.0)) {
            out.push(("wigner_times".into(), "times must be >= 0".into()));
        }
        if self.wigner_points < 16 {
            out.push(("wigner_points".into(), "must be >= 16".into()));
        }
        if !(self.wigner_extent > 0.0) {
            out.push(("wigner_extent".into(), "must be > 0".into()));
        }
        if self.domain_edges.len() < 2 || self.domain_edges.windows(2).any(|w| !(w[1] > w[0])) {
            out.push(("domain_edges".into(), "need at least two increasing actions".into()));
        }
        if !(self.domain_hbar > 0.0) {
            out.push(("domain_hbar".into(), "must be > 0".into()));
        }
        if self.domain_points < 16 {
            out.push(("domain_points".into(), "must be >= 16".into()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub path: String,
    pub values: Vec<f64>,
}

/// Tolerance names accepted in the `[tolerances]` table.
pub const TOLERANCES: [&str; 3] = ["equilibrium_relative", "equilibrium_window", "domain_threshold"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: Format,
    pub outputs: Vec<Output>,
    pub model: FlatBandParams,
    #[serde(default)]
    pub trajectory: TrajectoryParams,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
}

impl ScenarioConfig {
    pub fn new(model: FlatBandParams, outputs: Vec<Output>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            format: Format::Csv,
            outputs,
            model,
            trajectory: TrajectoryParams::default(),
            settings: Settings::default(),
            sweep: Vec::new(),
            tolerances: BTreeMap::new(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    /// Trajectory settings with tolerance overrides applied.
    pub fn effective_trajectory(&self) -> TrajectoryParams {
        TrajectoryParams {
            equilibrium_relative: self.tolerance("equilibrium_relative", self.trajectory.equilibrium_relative),
            equilibrium_window: self.tolerance("equilibrium_window", self.trajectory.equilibrium_window),
            ..self.trajectory.clone()
        }
    }

    /// Copy with `section.field` set to `value`.
    pub fn with_override(&self, path: &str, value: f64) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).map_err(|e| config_error("", e))?;
        set_path(&mut table, path, value).map_err(|m| Error::Config { path: path.into(), message: m })?;
        let cfg: Self = table.try_into().map_err(|e| config_error(path, e))?;
        Ok(cfg)
    }
}

fn config_error(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config { path: path.into(), message: e.to_string() }
}

const SECTIONS: [&str; 3] = ["model", "trajectory", "settings"];

fn set_path(table: &mut toml::Table, path: &str, value: f64) -> std::result::Result<(), String> {
    let (section, field) = path.split_once('.').ok_or("expected <section>.<field>")?;
    if !SECTIONS.contains(&section) {
        return Err(format!("unknown section '{section}'"));
    }
    let sec = table
        .entry(section)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or("section is not a table")?;
    let defaults = section_defaults(section);
    let current = sec.get(field).or_else(|| defaults.get(field)).ok_or(format!("no numeric field '{field}'"))?;
    let new = match current {
        toml::Value::Integer(_) => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(format!("'{field}' takes a non-negative integer, got {value}"));
            }
            toml::Value::Integer(value as i64)
        }
        toml::Value::Float(_) => toml::Value::Float(value),
        _ => return Err(format!("'{field}' is not numeric")),
    };
    sec.insert(field.to_string(), new);
    Ok(())
}

fn section_defaults(section: &str) -> toml::Table {
    let text = match section {
        "model" => toml::to_string(&FlatBandParams::default()),
        "trajectory" => toml::to_string(&TrajectoryParams::default()),
        _ => toml::to_string(&Settings::default()),
    };
    toml::from_str(&text.expect("defaults serialize")).expect("defaults parse")
}

/// One problem found in a config, located by a dotted path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn issue(path: impl Into<String>, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { path: path.into(), message: message.into() }
}

fn typed_section<T: serde::de::DeserializeOwned>(
    table: &toml::Table,
    key: &str,
    issues: &mut Vec<ConfigIssue>,
) -> Option<T> {
    let value = table.get(key)?;
    match value.clone().try_into::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(issue(key, e.to_string().trim().to_string()));
            None
        }
    }
}

fn prefixed(section: &str, v: Vec<(String, String)>) -> impl Iterator<Item = ConfigIssue> + '_ {
    v.into_iter().map(move |(p, m)| issue(format!("{section}.{p}"), m))
}

/// Parses and checks a scenario config, collecting every violation.
pub fn validate_config(text: &str) -> std::result::Result<ScenarioConfig, Vec<ConfigIssue>> {
    let table: toml::Table = match toml::from_str(text) {
        Ok(t) => t,
        Err(e) => return Err(vec![issue("", format!("not valid TOML: {}", e.message()))]),
    };
    let mut issues = Vec::new();
    let known =
        ["schema_version", "seed", "format", "outputs", "model", "trajectory", "settings", "sweep", "tolerances"];
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            issues.push(issue(key.clone(), "unknown key"));
        }
    }
    match table.get("schema_version") {
        None => issues.push(issue("schema_version", "schema_version missing")),
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
        Some(v) => issues.push(issue("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}"))),
    }
    if let Some(v) = table.get("seed") {
        if !matches!(v, toml::Value::Integer(s) if *s >= 0) {
            issues.push(issue("seed", "must be a non-negative integer"));
        }
    }
    if let Some(v) = table.get("format") {
        if v.clone().try_into::<Format>().is_err() {
            issues.push(issue("format", format!("expected \"csv\" or \"json\", got {v}")));
        }
    }
    match table.get("outputs") {
        None => issues.push(issue("outputs", "outputs missing")),
        Some(toml::Value::Array(items)) => {
            if items.is_empty() {
                issues.push(issue("outputs", "outputs must not be empty"));
            }
            for (k, item) in items.iter().enumerate() {
                if item.clone().try_into::<Output>().is_err() {
                    let names: Vec<&str> = Output::ALL.iter().map(|o| o.name()).collect();
                    issues.push(issue(
                        format!("outputs[{k}]"),
                        format!("unknown output {item}, expected one of {names:?}"),
                    ));
                }
            }
        }
        Some(_) => issues.push(issue("outputs", "must be an array")),
    }
    let model = if table.contains_key("model") {
        typed_section::<FlatBandParams>(&table, "model", &mut issues)
    } else {
        issues.push(issue("model", "model missing"));
        None
    };
    if let Some(m) = &model {
        issues.extend(prefixed("model", m.violations()));
    }
    if let Some(t) = typed_section::<TrajectoryParams>(&table, "trajectory", &mut issues) {
        issues.extend(prefixed("trajectory", t.violations()));
    }
    if let Some(s) = typed_section::<Settings>(&table, "settings", &mut issues) {
        issues.extend(prefixed("settings", s.violations()));
    }
    if let Some(tol) = typed_section::<BTreeMap<String, f64>>(&table, "tolerances", &mut issues) {
        for (name, v) in tol {
            if !TOLERANCES.contains(&name.as_str()) {
                issues.push(issue(
                    format!("tolerances.{name}"),
                    format!("unknown tolerance, expected one of {TOLERANCES:?}"),
                ));
            } else if !(v > 0.0 && v.is_finite()) {
                issues.push(issue(format!("tolerances.{name}"), format!("must be finite and > 0, got {v}")));
            }
        }
    }
    if let Some(sweep) = typed_section::<Vec<SweepEntry>>(&table, "sweep", &mut issues) {
        for (k, entry) in sweep.iter().enumerate() {
            let at = format!("sweep[{k}]");
            if entry.values.is_empty() {
                issues.push(issue(format!("{at}.values"), "no values"));
            }
            for &v in &entry.values {
                let mut probe = table.clone();
                probe.remove("sweep");
                if let Err(m) = set_path(&mut probe, &entry.path, v) {
                    issues.push(issue(format!("{at}.path"), format!("{}: {m}", entry.path)));
                    break;
                }
                if let Ok(cfg) = probe.try_into::<ScenarioConfig>() {
                    let mut v = cfg.model.violations();
                    v.extend(cfg.trajectory.violations());
                    v.extend(cfg.settings.violations());
                    for (p, m) in v {
                        issues.push(issue(format!("{at}.values"), format!("{p}: {m}")));
                    }
                }
            }
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    table.try_into::<ScenarioConfig>().map_err(|e| vec![issue("", e.to_string())])
}

/// A cell of an emitted table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits
            Cell::Real(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Real(v) => {
                serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, serde_json::Value::Number)
            }
            Cell::Bool(v) => (*v).into(),
            Cell::Text(v) => v.clone().into(),
        }
    }
}

/// Column-named rows plus `key = value` metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with an optional `# key=value,...` line above the header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.meta.is_empty() {
            let meta: Vec<String> = self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "# {}", meta.join(","));
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let meta: serde_json::Map<String, serde_json::Value> =
            self.meta.iter().map(|(k, v)| (k.clone(), v.clone().into())).collect();
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, serde_json::Value> =
                    self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({ "meta": meta, "columns": self.columns, "rows": rows });
        serde_json::to_string_pretty(&doc).expect("json document") + "\n"
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Writes `<stem>.<ext>` and returns the path.
pub fn emit(table: &Table, format: Format, dir: &Path, stem: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let body = match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    fs::write(&path, body).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

pub fn phase_space_table(f: &PhaseSpaceFunction) -> Table {
    let g = f.grid;
    let mut t = Table::new(&["x", "p", "value"])
        .meta("n_x", g.n_x)
        .meta("n_p", g.n_p)
        .meta("x_min", g.x_min)
        .meta("x_max", g.x_max)
        .meta("p_min", g.p_min)
        .meta("p_max", g.p_max)
        .meta("hbar", g.hbar);
    for i in 0..g.n_x {
        for j in 0..g.n_p {
            t.push(vec![Cell::Real(g.x(i)), Cell::Real(g.p(j)), Cell::Real(f.at(i, j).re)]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
    /// Sweep overrides in force for this artifact.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config: String,
    pub status: RunStatus,
    pub artifacts: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// A stage failure; the manifest on disk records it and lists whatever was
/// written before.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub stage: String,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for RunFailure {}

struct Recorder<'a> {
    root: &'a Path,
    format: Format,
    entries: Vec<ManifestEntry>,
    parameters: BTreeMap<String, f64>,
}

impl Recorder<'_> {
    fn write(&mut self, dir: &Path, stage: &str, stem: &str, table: &Table, format: Format) -> Result<()> {
        let path = emit(table, format, dir, stem)?;
        self.record(&path, stage)
    }

    fn record(&mut self, path: &Path, stage: &str) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        let rel = path.strip_prefix(self.root).unwrap_or(path);
        self.entries.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            stage: stage.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
            parameters: self.parameters.clone(),
        });
        Ok(())
    }
}

/// Runs every requested stage, once per sweep point, under `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> std::result::Result<Manifest, RunFailure> {
    let fail = |stage: &str, error: Error| RunFailure { stage: stage.to_string(), error };
    fs::create_dir_all(out).map_err(|e| fail("setup", io_error(out, e)))?;
    let mut rec = Recorder { root: out, format: cfg.format, entries: Vec::new(), parameters: BTreeMap::new() };
    let mut result = Ok(());
    if cfg.sweep.is_empty() {
        result = run_point(cfg, out, &mut rec);
    } else {
        'outer: for (k, entry) in cfg.sweep.iter().enumerate() {
            for (j, &v) in entry.values.iter().enumerate() {
                let dir = out.join(format!("sweep{k}_{j}"));
                rec.parameters = BTreeMap::from([(entry.path.clone(), v)]);
                let point = match cfg.with_override(&entry.path, v) {
                    Ok(c) => c,
                    Err(e) => {
                        result = Err(fail("config", e));
                        break 'outer;
                    }
                };
                let step = fs::create_dir_all(&dir)
                    .map_err(|e| fail("setup", io_error(&dir, e)))
                    .and_then(|_| run_point(&point, &dir, &mut rec));
                if let Err(e) = step {
                    result = Err(e);
                    break 'outer;
                }
            }
        }
    }
    let status = match &result {
        Ok(()) => RunStatus::Complete,
        Err(f) => RunStatus::Failed { stage: f.stage.clone(), message: f.error.to_string() },
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        config: cfg.to_toml(),
        status,
        artifacts: rec.entries,
    };
    let path = out.join(MANIFEST);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, body).map_err(|e| fail("manifest", io_error(&path, e)))?;
    match result {
        Ok(()) => Ok(manifest),
        Err(f) => Err(f),
    }
}

fn run_point(cfg: &ScenarioConfig, dir: &Path, rec: &mut Recorder) -> std::result::Result<(), RunFailure> {
    fn fail(stage: &str) -> impl Fn(Error) -> RunFailure + '_ {
        move |error: Error| RunFailure { stage: stage.to_string(), error }
    }
    let fb = FlatBand::new(cfg.model.clone()).map_err(fail("model"))?;
    let format = rec.format;
    for &output in &cfg.outputs {
        let stage = output.name();
        let tables = match output {
            Output::Poles => poles_stage(&fb, cfg),
            Output::Evolve => evolve_stage(&fb, cfg),
            Output::Modes => modes_stage(&fb, cfg),
            Output::Wigner => wigner_stage(&fb, cfg),
            Output::Classical => classical_stage(&fb, cfg),
        }
        .map_err(fail(stage))?;
        for (stem, table, fixed) in tables {
            rec.write(dir, stage, &stem, &table, fixed.unwrap_or(format)).map_err(fail(stage))?;
        }
    }
    Ok(())
}

/// `(file stem, table, forced format)`.
type StageTables = Vec<(String, Table, Option<Format>)>;

fn poles_stage(fb: &FlatBand, cfg: &ScenarioConfig) -> Result<StageTables> {
    let ladder = poles::pole_ladder(fb.pole()?, cfg.settings.ladder)?;
    let hbar = cfg.model.hbar;
    let mut t = Table::new(&["n", "omega", "gamma", "t_R"]);
    for (k, p) in ladder.poles().iter().enumerate() {
        t.push(vec![Cell::Int(k as i64 + 1), Cell::Real(p.omega), Cell::Real(p.gamma), Cell::Real(hbar / p.gamma)]);
    }
    Ok(vec![("poles".into(), t, None)])
}

fn evolve_stage(fb: &FlatBand, cfg: &ScenarioConfig) -> Result<StageTables> {
    let s = &cfg.settings;
    let times = scenario::uniform_times(s.evolve_horizon * fb.relaxation_time()?, s.evolve_samples);
    let mut survival = Table::new(&["t", "value_re", "value_im"]);
    let mut reduced = Table::new(&["t", "rho00", "rho11", "rho01_re", "rho01_im"]);
    for &time in &times {
        let a = fb.survival_amplitude(time);
        survival.push(vec![Cell::Real(time), Cell::Real(a.re), Cell::Real(a.im)]);
        let m = fb.reduced_state(time)?.matrix().clone();
        reduced.push(vec![
            Cell::Real(time),
            Cell::Real(m[(0, 0)].re),
            Cell::Real(m[(1, 1)].re),
            Cell::Real(m[(0, 1)].re),
            Cell::Real(m[(0, 1)].im),
        ]);
    }
    Ok(vec![("survival".into(), survival, None), ("reduced_state".into(), reduced, None)])
}

fn modes_stage(fb: &FlatBand, cfg: &ScenarioConfig) -> Result<StageTables> {
    let hbar = cfg.model.hbar;
    let tr = fb.relaxation_time()?;
    let tp = &cfg.trajectory;
    let times = scenario::uniform_times(tp.horizon * tr, tp.fit_samples);
    let states = fb.reduced_series(&times)?;
    let channels = fb.catalogue()?.density_channels();
    let ops = OperatorModes::fit(&times, &states, &channels, hbar)?;
    let eff = ops.effective_gamma()?;
    let td = modes::decoherence_time(&eff, hbar)?;
    let mut t = Table::new(&[
        "observable",
        "mode",
        "amplitude",
        "phase",
        "freq",
        "gamma",
        "equilibrium",
        "residual_rms",
        "poor_fit",
    ]);
    for (k, d) in ops.decompositions().iter().enumerate() {
        for (i, m) in d.modes.iter().enumerate() {
            t.push(vec![
                Cell::Int(k as i64),
                Cell::Int(i as i64),
                Cell::Real(m.amplitude),
                Cell::Real(m.phase),
                Cell::Real(m.freq),
                Cell::Real(m.gamma),
                Cell::Real(d.equilibrium),
                Cell::Real(d.residual_rms),
                Cell::Bool(d.poor_fit),
            ]);
        }
    }
    let mut ts = Table::new(&["t_R", "gamma_eff", "t_D", "t_D_over_t_R", "slow_modes"]);
    ts.push(vec![
        Cell::Real(tr),
        Cell::Real(eff.gamma_eff),
        Cell::Real(td),
        Cell::Real(td / tr),
        Cell::Int(eff.slow_count() as i64),
    ]);
    let mut entropy = Table::new(&["t", "S_lin"]);
    for (&time, rho) in times.iter().zip(&states) {
        entropy.push(vec![Cell::Real(time), Cell::Real(crate::mpb::linear_entropy(rho))]);
    }
    Ok(vec![("modes".into(), t, None), ("timescales".into(), ts, None), ("linear_entropy".into(), entropy, None)])
}

fn wigner_stage(fb: &FlatBand, cfg: &ScenarioConfig) -> Result<StageTables> {
    let s = &cfg.settings;
    let p = &cfg.model;
    let mass = cfg.trajectory.mass;
    let tr = fb.relaxation_time()?;
    let length = (p.hbar / (mass * p.omega)).sqrt() * s.wigner_extent;
    let grid = PositionGrid::new(-length, length, s.wigner_points, p.hbar)?;
    let lift = scenario::oscillator_lift(&grid, 2, mass, p.omega);
    let mut out = Vec::new();
    for (k, &t) in s.wigner_times.iter().enumerate() {
        let rho = fb.reduced_state(t * tr)?;
        let lifted = DensityMatrix::from_nearly_valid(&lift * rho.matrix() * lift.adjoint())?;
        let w = wwm::state_wigner(&lifted, &grid)?;
        out.push((format!("wigner_{k}"), phase_space_table(&w).meta("t", t * tr), None));
    }
    Ok(out)
}

fn classical_stage(fb: &FlatBand, cfg: &ScenarioConfig) -> Result<StageTables> {
    let tp = cfg.effective_trajectory();
    let run = fb.classical_trajectory(&tp)?;
    let mut t = Table::new(&["t", "Pi_bar", "Phi_bar", "equilibrium_flag"]);
    for &(time, pi, phi, flag) in &run.report.curve {
        t.push(vec![Cell::Real(time), Cell::Real(pi), Cell::Real(phi), Cell::Bool(flag)]);
    }
    let tr = run.relaxation_time;
    let mut eq = Table::new(&[
        "t_R",
        "t_D",
        "slow_modes",
        "equilibrium_time",
        "angle_threshold",
        "action_threshold",
        "action_drift_t_R",
        "angle_monotone",
    ]);
    eq.push(vec![
        Cell::Real(tr),
        Cell::Real(run.decoherence_time),
        Cell::Int(run.slow_modes as i64),
        run.report.equilibrium_time.map_or(Cell::Text("none".into()), Cell::Real),
        Cell::Real(run.report.angle_threshold),
        Cell::Real(run.report.action_threshold),
        Cell::Real(run.trajectory.action_drift(tr)),
        Cell::Bool(run.trajectory.angle_monotone(0.0)),
    ]);

    let s = &cfg.settings;
    let mass = tp.mass;
    let omega = cfg.model.omega;
    let reach = (2.0 * s.domain_edges[s.domain_edges.len() - 1] / (mass * omega)).sqrt() * 1.2;
    let (xr, pr) = (reach, reach * mass * omega);
    let grid = PhaseSpaceGrid::new((-xr, xr), (-pr, pr), s.domain_points, s.domain_points, s.domain_hbar)?;
    let threshold = cfg.tolerance("domain_threshold", DOMAIN_THRESHOLD);
    let symbols = classical::band_projector_symbols(&grid, &s.domain_edges, mass, omega)?;
    let mut masks = Table::new(&["band", "row", "start", "length"])
        .meta("n_x", grid.n_x)
        .meta("n_p", grid.n_p)
        .meta("x_min", grid.x_min)
        .meta("x_max", grid.x_max)
        .meta("p_min", grid.p_min)
        .meta("p_max", grid.p_max)
        .meta("hbar", grid.hbar);
    let mut summary = Table::new(&["band", "volume", "connected"]);
    for (b, sym) in symbols.iter().enumerate() {
        let d = classical::characteristic_domain(sym, threshold)?;
        summary.push(vec![Cell::Int(b as i64), Cell::Real(d.volume), Cell::Bool(d.connected)]);
        for i in 0..grid.n_x {
            let mut j = 0;
            while j < grid.n_p {
                if d.contains(i, j) {
                    let start = j;
                    while j < grid.n_p && d.contains(i, j) {
                        j += 1;
                    }
                    masks.push(vec![
                        Cell::Int(b as i64),
                        Cell::Int(i as i64),
                        Cell::Int(start as i64),
                        Cell::Int((j - start) as i64),
                    ]);
                } else {
                    j += 1;
                }
            }
        }
    }
    Ok(vec![
        ("trajectory".into(), t, None),
        ("equilibrium".into(), eq, Some(Format::Json)),
        ("domains".into(), masks, Some(Format::Csv)),
        ("domain_summary".into(), summary, None),
    ])
}

/// Loads, validates and runs a config file.
pub fn run_file(path: &Path, out: &Path) -> std::result::Result<Manifest, RunFailure> {
    let text = fs::read_to_string(path).map_err(|e| RunFailure { stage: "config".into(), error: io_error(path, e) })?;
    let cfg = validate_config(&text).map_err(|issues| RunFailure {
        stage: "config".into(),
        error: Error::Config {
            path: issues.first().map(|i| i.path.clone()).unwrap_or_default(),
            message: issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "),
        },
    })?;
    run_scenario(&cfg, out)
}
