//! Experiment orchestration: configuration, seed batches, parameter sweeps
//! and the on-disk CSV/JSON formats.
//!
//! # Config keys
//!
//! Config files are TOML. Unknown keys are rejected.
//!
//! | key               | required | default      | meaning                                   |
//! |-------------------|----------|--------------|-------------------------------------------|
//! | `n`               | yes      |              | number of agents                          |
//! | `p_init`          | yes      |              | ER edge probability of the initial graph  |
//! | `horizon`         | yes      |              | maximum number of steps                   |
//! | `tolerance`       | yes      |              | stop when the opinion diameter is below   |
//! | `q_shrink`        | no       | `0`          | removal probability per incident edge     |
//! | `q_flip`          | no       | `0`          | toggle probability per non-incident pair  |
//! | `selection`       | no       | `"uniform"`  | `"uniform"` or an explicit probability list |
//! | `init`            | no       | `"uniform01"`| `"uniform01"`, `{ constant = c }` or a list |
//! | `sample_stride`   | no       | `10`         | state/Z/diameter sampling stride          |
//! | `mode`            | no       | `"fast"`     | `"fast"` or `"verify"`                    |
//! | `output_dir`      | no       | `"out"`      | where files are written                   |
//! | `seeds`           | no       |              | explicit seed list                        |
//! | `root_seed`       | no       | `0`          | root of the derived seed batch            |
//! | `seed_count`      | no       | `20`         | size of the derived seed batch            |
//! | `flip_method`     | no       | `"binomial"` | `"binomial"` or `"per_pair"`              |
//! | `er_max_attempts` | no       | `10000`      | connected-ER rejection sampling cap       |
//! | `sweep.p_init`, `sweep.q_shrink`, `sweep.q_flip` | no | | grid values replacing the base value |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::DiagnosticsSeries;
use crate::dynamics::{self, DynamicsError, InitSpec, Mode, RunOptions, SelectionDistribution, SimParams};
use crate::graph::{FlipMethod, DEFAULT_ER_ATTEMPTS};
use crate::rng::{labels, RngStream};

pub const PART1_CONFIG: &str = include_str!("../configs/part1.toml");
pub const PART2_CONFIG: &str = include_str!("../configs/part2.toml");

pub const SUMMARY_FILE: &str = "summary.json";
pub const PANELS_FILE: &str = "panels.json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid value for `{key}`: {reason}")]
    Range { key: String, reason: String },
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("refusing to overwrite {0} (pass --force to allow)")]
    Exists(PathBuf),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// The parameters that identify a sweep cell; echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub n: usize,
    pub p_init: f64,
    pub q_shrink: f64,
    pub q_flip: f64,
    pub tolerance: f64,
    pub horizon: u64,
}

impl CellParams {
    /// File-name stem, e.g. `n100_p0.1_qs0.001_qf0.000001`.
    pub fn tag(&self) -> String {
        format!(
            "n{}_p{}_qs{}_qf{}",
            self.n, self.p_init, self.q_shrink, self.q_flip
        )
    }
}

/// Everything one run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub cell: CellParams,
    pub seed: u64,
    pub t_stop: Option<u64>,
    /// `(t, x(t))` at t = 0, every stride, and the final step.
    pub samples: Vec<(u64, Vec<f64>)>,
    pub diagnostics: DiagnosticsSeries,
    /// Seconds; never written to disk.
    pub wall_time: f64,
}

impl RunRecord {
    pub fn file_stem(&self) -> String {
        format!("{}_seed{}", self.cell.tag(), self.seed)
    }

    pub fn to_json(&self) -> RunJson {
        RunJson {
            cell: self.cell.clone(),
            seed: self.seed,
            t_stop: self.t_stop,
            drop_violation_count: self.diagnostics.drop_violation_count,
            z_series: self.diagnostics.z.clone(),
            diameter_series: self.diagnostics.diameter.clone(),
        }
    }

    /// Long-format trajectory: `t,agent,state` with 1-indexed agents.
    pub fn trajectory_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |(_, s)| s.len());
        let mut out = String::with_capacity(32 * n * self.samples.len() + 16);
        out.push_str("t,agent,state\n");
        for (t, states) in &self.samples {
            for (i, x) in states.iter().enumerate() {
                writeln!(out, "{t},{},{}", i + 1, format_g17(*x)).expect("write to String");
            }
        }
        out
    }
}

/// On-disk run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunJson {
    pub cell: CellParams,
    pub seed: u64,
    pub t_stop: Option<u64>,
    pub drop_violation_count: usize,
    pub z_series: Vec<(u64, f64)>,
    pub diameter_series: Vec<(u64, f64)>,
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    const PRECISION: i32 = 17;
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if (-4..PRECISION).contains(&exp) {
        trim(&format!("{:.*}", (PRECISION - 1 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum RawSelection {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum RawInit {
    Named(String),
    Constant { constant: f64 },
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    p_init: Option<Vec<f64>>,
    q_shrink: Option<Vec<f64>>,
    q_flip: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: usize,
    p_init: f64,
    horizon: u64,
    tolerance: f64,
    #[serde(default)]
    q_shrink: f64,
    #[serde(default)]
    q_flip: f64,
    selection: Option<RawSelection>,
    init: Option<RawInit>,
    sample_stride: Option<u64>,
    mode: Option<String>,
    output_dir: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    root_seed: Option<u64>,
    seed_count: Option<usize>,
    flip_method: Option<String>,
    er_max_attempts: Option<usize>,
    sweep: Option<RawSweep>,
}

/// Grid over the three swept probabilities. Empty axes use the base value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    pub p_init: Vec<f64>,
    pub q_shrink: Vec<f64>,
    pub q_flip: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub base: SimParams,
    pub seeds: Vec<u64>,
    pub sweep: Option<SweepGrid>,
    pub sample_stride: u64,
    pub mode: Mode,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Cell parameters in output order: `q_shrink`, then `q_flip`, then
    /// `p_init` varying fastest.
    pub fn cells(&self) -> Vec<SimParams> {
        let Some(grid) = &self.sweep else {
            return vec![self.base.clone()];
        };
        let axis = |values: &[f64], base: f64| {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        };
        let mut cells = Vec::new();
        for &q_shrink in &axis(&grid.q_shrink, self.base.q_shrink) {
            for &q_flip in &axis(&grid.q_flip, self.base.q_flip) {
                for &p_init in &axis(&grid.p_init, self.base.p_init) {
                    cells.push(SimParams {
                        p_init,
                        q_shrink,
                        q_flip,
                        ..self.base.clone()
                    });
                }
            }
        }
        cells
    }

    /// Number of distinct `p_init` values, i.e. columns of the figure grid.
    pub fn p_init_count(&self) -> usize {
        self.sweep
            .as_ref()
            .map_or(1, |g| g.p_init.len().max(1))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            sample_stride: self.sample_stride,
            mode: self.mode,
        }
    }
}

/// Per-run seeds derived from `root`: the first draw of `root/run-k`.
pub fn derive_seeds(root: u64, count: usize) -> Vec<u64> {
    let stream = RngStream::new(root);
    (0..count)
        .map(|k| {
            stream
                .split(&labels::run(k))
                .expect("run label is nonempty")
                .next_raw()
        })
        .collect()
}

fn range_err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

fn check_probability(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(range_err(key, format!("{v} outside [0, 1]")))
    }
}

impl TryFrom<RawConfig> for ExperimentConfig {
    type Error = ConfigError;

    fn try_from(raw: RawConfig) -> Result<Self, ConfigError> {
        if raw.n == 0 {
            return Err(range_err("n", "must be at least 1"));
        }
        check_probability("p_init", raw.p_init)?;
        check_probability("q_shrink", raw.q_shrink)?;
        check_probability("q_flip", raw.q_flip)?;
        if !(raw.tolerance > 0.0 && raw.tolerance.is_finite()) {
            return Err(range_err("tolerance", format!("{} is not positive", raw.tolerance)));
        }

        let selection = match raw.selection {
            None => SelectionDistribution::uniform(raw.n),
            Some(RawSelection::Named(name)) if name == "uniform" => {
                SelectionDistribution::uniform(raw.n)
            }
            Some(RawSelection::Named(name)) => {
                return Err(range_err("selection", format!("unknown distribution {name:?}")))
            }
            Some(RawSelection::Explicit(probs)) => {
                if probs.len() != raw.n {
                    return Err(range_err(
                        "selection",
                        format!("{} probabilities for {} agents", probs.len(), raw.n),
                    ));
                }
                SelectionDistribution::new(probs)
            }
        }
        .map_err(|e| range_err("selection", e.to_string()))?;

        let init = match raw.init {
            None => InitSpec::Uniform01,
            Some(RawInit::Named(name)) if name == "uniform01" => InitSpec::Uniform01,
            Some(RawInit::Named(name)) => {
                return Err(range_err("init", format!("unknown initialization {name:?}")))
            }
            Some(RawInit::Constant { constant }) if constant.is_finite() => {
                InitSpec::Constant(constant)
            }
            Some(RawInit::Constant { constant }) => {
                return Err(range_err("init", format!("constant {constant} is not finite")))
            }
            Some(RawInit::Explicit(values)) => {
                if values.len() != raw.n {
                    return Err(range_err(
                        "init",
                        format!("{} values for {} agents", values.len(), raw.n),
                    ));
                }
                InitSpec::Explicit(values)
            }
        };

        let flip_method = match raw.flip_method.as_deref() {
            None | Some("binomial") => FlipMethod::Binomial,
            Some("per_pair") => FlipMethod::PerPair,
            Some(other) => return Err(range_err("flip_method", format!("unknown method {other:?}"))),
        };
        let mode = match raw.mode.as_deref() {
            None | Some("fast") => Mode::Fast,
            Some("verify") => Mode::Verify,
            Some(other) => return Err(range_err("mode", format!("unknown mode {other:?}"))),
        };
        let sample_stride = raw.sample_stride.unwrap_or(10);
        if sample_stride == 0 {
            return Err(range_err("sample_stride", "must be positive"));
        }
        let er_max_attempts = raw.er_max_attempts.unwrap_or(DEFAULT_ER_ATTEMPTS);
        if er_max_attempts == 0 {
            return Err(range_err("er_max_attempts", "must be positive"));
        }

        let seeds = match (raw.seeds, raw.root_seed, raw.seed_count) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(range_err(
                    "seeds",
                    "explicit seeds cannot be combined with root_seed/seed_count",
                ))
            }
            (Some(seeds), None, None) => seeds,
            (None, root, count) => derive_seeds(root.unwrap_or(0), count.unwrap_or(20)),
        };
        if seeds.is_empty() {
            return Err(range_err("seeds", "seed set is empty"));
        }

        let sweep = match raw.sweep {
            None => None,
            Some(s) => {
                let mut grid = SweepGrid::default();
                for (key, values, slot) in [
                    ("sweep.p_init", s.p_init, &mut grid.p_init),
                    ("sweep.q_shrink", s.q_shrink, &mut grid.q_shrink),
                    ("sweep.q_flip", s.q_flip, &mut grid.q_flip),
                ] {
                    if let Some(values) = values {
                        if values.is_empty() {
                            return Err(range_err(key, "grid axis is empty"));
                        }
                        for &v in &values {
                            check_probability(key, v)?;
                        }
                        *slot = values;
                    }
                }
                Some(grid)
            }
        };

        let base = SimParams {
            n: raw.n,
            p_init: raw.p_init,
            q_shrink: raw.q_shrink,
            q_flip: raw.q_flip,
            tolerance: raw.tolerance,
            horizon: raw.horizon,
            selection,
            init,
            flip_method,
            er_max_attempts,
        };
        base.validate()
            .map_err(|e| range_err("config", e.to_string()))?;

        Ok(Self {
            base,
            seeds,
            sweep,
            sample_stride,
            mode,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

/// Parses a TOML config document.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    load_config_with_overrides::<&str>(text, &[])
}

/// Parses a TOML config and applies `key=value` overrides before validation,
/// so an invalid override fails exactly like an invalid file value. Values
/// are read as TOML literals, falling back to bare strings; dotted keys
/// address tables (`sweep.q_shrink=[0.1, 0.2]`).
pub fn load_config_with_overrides<S: AsRef<str>>(
    text: &str,
    overrides: &[S],
) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o.as_ref())?;
    }
    let raw = RawConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    ExperimentConfig::try_from(raw)
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.to_owned()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(assignment.to_owned()));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut current = table;
    for part in parts {
        let entry = current
            .entry(part.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| ConfigError::Range {
            key: key.to_owned(),
            reason: format!("`{part}` is not a table"),
        })?;
    }
    current.insert(last.to_owned(), value);
    Ok(())
}

/// One `(cell, seed)` entry of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub t_stop: Option<u64>,
    /// Set when the run could not be executed (e.g. no connected ER sample).
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: CellParams,
    pub runs: Vec<RunEntry>,
    /// `None` when at least half the runs did not stop.
    pub median_t_stop: Option<u64>,
    pub non_stopping: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
}

impl SweepSummary {
    pub fn failures(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.runs)
            .filter(|r| r.error.is_some())
            .count()
    }
}

/// Median stopping time with non-stopping runs ordered as +∞: the element
/// at index `len / 2` of the sorted list, so the result is `None` exactly
/// when at least half the runs did not stop.
pub fn median_stopping_time(t_stops: &[Option<u64>]) -> Option<u64> {
    if t_stops.is_empty() {
        return None;
    }
    let mut sorted: Vec<u64> = t_stops.iter().map(|t| t.unwrap_or(u64::MAX)).collect();
    sorted.sort_unstable();
    match sorted[sorted.len() / 2] {
        u64::MAX => None,
        t => Some(t),
    }
}

impl CellSummary {
    pub fn new(cell: CellParams, runs: Vec<RunEntry>) -> Self {
        let t_stops: Vec<Option<u64>> = runs.iter().map(|r| r.t_stop).collect();
        Self {
            cell,
            median_t_stop: median_stopping_time(&t_stops),
            non_stopping: t_stops.iter().filter(|t| t.is_none()).count(),
            runs,
        }
    }
}

/// Writes run and summary files into one directory.
#[derive(Clone, Debug)]
pub struct OutputWriter {
    dir: PathBuf,
    force: bool,
}

/// Paths written for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunFiles {
    pub trajectory_csv: PathBuf,
    pub run_json: PathBuf,
}

impl OutputWriter {
    pub fn new(dir: impl Into<PathBuf>, force: bool) -> Result<Self, OutputError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| OutputError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir, force })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn run_paths(&self, cell: &CellParams, seed: u64) -> RunFiles {
        let stem = format!("{}_seed{seed}", cell.tag());
        RunFiles {
            trajectory_csv: self.dir.join(format!("{stem}.csv")),
            run_json: self.dir.join(format!("{stem}.json")),
        }
    }

    /// Fails if `path` exists and overwriting is not allowed.
    pub fn ensure_writable(&self, path: &Path) -> Result<(), OutputError> {
        if !self.force && path.exists() {
            Err(OutputError::Exists(path.to_owned()))
        } else {
            Ok(())
        }
    }

    fn write_file(&self, path: &Path, contents: &str) -> Result<(), OutputError> {
        self.ensure_writable(path)?;
        fs::write(path, contents).map_err(|source| OutputError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn write_run(&self, record: &RunRecord) -> Result<RunFiles, OutputError> {
        let files = self.run_paths(&record.cell, record.seed);
        let mut json = serde_json::to_string(&record.to_json())?;
        json.push('\n');
        self.write_file(&files.trajectory_csv, &record.trajectory_csv())?;
        self.write_file(&files.run_json, &json)?;
        Ok(files)
    }

    pub fn write_summary(&self, summary: &SweepSummary) -> Result<PathBuf, OutputError> {
        let path = self.dir.join(SUMMARY_FILE);
        let mut json = serde_json::to_string_pretty(summary)?;
        json.push('\n');
        self.write_file(&path, &json)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, OutputError> {
        let path = self.dir.join(name);
        let mut json = serde_json::to_string_pretty(value)?;
        json.push('\n');
        self.write_file(&path, &json)?;
        Ok(path)
    }
}

/// Runs every `(cell, seed)` pair, in parallel batches. Files, if a writer
/// is given, are written from the calling thread in `(cell, seed)` order.
/// Per-run failures are recorded in the summary and do not stop the sweep.
pub fn run_sweep(
    config: &ExperimentConfig,
    writer: Option<&OutputWriter>,
) -> Result<SweepSummary, HarnessError> {
    let cells = config.cells();
    let jobs: Vec<(usize, &SimParams, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, params)| config.seeds.iter().map(move |&seed| (c, params, seed)))
        .collect();

    if let Some(w) = writer {
        for &(_, params, seed) in &jobs {
            let files = w.run_paths(&params.cell(), seed);
            w.ensure_writable(&files.trajectory_csv)?;
            w.ensure_writable(&files.run_json)?;
        }
        w.ensure_writable(&w.dir().join(SUMMARY_FILE))?;
    }

    let options = config.run_options();
    let batch = (rayon::current_num_threads() * 2).max(1);
    let mut entries: Vec<Vec<RunEntry>> = vec![Vec::with_capacity(config.seeds.len()); cells.len()];
    for chunk in jobs.chunks(batch) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|&(_, params, seed)| dynamics::run(params, seed, options))
            .collect();
        for (&(c, _, seed), result) in chunk.iter().zip(results) {
            let entry = match result {
                Ok(record) => {
                    if let Some(w) = writer {
                        w.write_run(&record)?;
                    }
                    RunEntry {
                        seed,
                        t_stop: record.t_stop,
                        error: None,
                    }
                }
                Err(e) => RunEntry {
                    seed,
                    t_stop: None,
                    error: Some(e.to_string()),
                },
            };
            entries[c].push(entry);
        }
    }

    let summary = SweepSummary {
        cells: cells
            .iter()
            .zip(entries)
            .map(|(params, runs)| CellSummary::new(params.cell(), runs))
            .collect(),
    };
    if let Some(w) = writer {
        w.write_summary(&summary)?;
    }
    Ok(summary)
}

/// One figure panel: a single run of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub row: usize,
    pub col: usize,
    pub p_init: f64,
    pub q_shrink: f64,
    pub q_flip: f64,
    pub seed: u64,
    pub t_stop: Option<u64>,
    pub subtitle: String,
    /// File names relative to the figure directory.
    pub trajectory_csv: String,
    pub run_json: String,
}

/// Index of a figure directory written by [`figures_data`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureLayout {
    pub figure: String,
    pub rows: usize,
    pub cols: usize,
    pub panels: Vec<Panel>,
}

pub fn panel_subtitle(p_init: f64, t_stop: Option<u64>) -> String {
    match t_stop {
        Some(t) => format!("p={p_init}, t_stop = {t}"),
        None => format!("p={p_init}, no stopping time"),
    }
}

/// Runs one seed per cell of the two built-in grids and writes
/// `<out>/part1` and `<out>/part2`, each with run files, `summary.json` and
/// a `panels.json` index (rows = parameter setting, columns = `p_init`).
pub fn figures_data(
    out_dir: &Path,
    root_seed: u64,
    force: bool,
) -> Result<Vec<FigureLayout>, HarnessError> {
    let mut layouts = Vec::new();
    for (name, text) in [("part1", PART1_CONFIG), ("part2", PART2_CONFIG)] {
        let config = load_config_with_overrides(
            text,
            &[format!("root_seed={root_seed}"), "seed_count=1".to_owned()],
        )?;
        let writer = OutputWriter::new(out_dir.join(name), force)?;
        writer.ensure_writable(&writer.dir().join(PANELS_FILE))?;
        let summary = run_sweep(&config, Some(&writer))?;
        let cols = config.p_init_count();
        let panels: Vec<Panel> = summary
            .cells
            .iter()
            .enumerate()
            .map(|(k, cell)| {
                let run = &cell.runs[0];
                let files = writer.run_paths(&cell.cell, run.seed);
                let file_name = |p: &Path| {
                    p.file_name()
                        .expect("run file has a name")
                        .to_string_lossy()
                        .into_owned()
                };
                Panel {
                    row: k / cols,
                    col: k % cols,
                    p_init: cell.cell.p_init,
                    q_shrink: cell.cell.q_shrink,
                    q_flip: cell.cell.q_flip,
                    seed: run.seed,
                    t_stop: run.t_stop,
                    subtitle: panel_subtitle(cell.cell.p_init, run.t_stop),
                    trajectory_csv: file_name(&files.trajectory_csv),
                    run_json: file_name(&files.run_json),
                }
            })
            .collect();
        let layout = FigureLayout {
            figure: name.to_owned(),
            rows: panels.len().div_ceil(cols),
            cols,
            panels,
        };
        writer.write_json(PANELS_FILE, &layout)?;
        layouts.push(layout);
    }
    Ok(layouts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n = 5\np_init = 0.5\nhorizon = 100\ntolerance = 1e-3\n";

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(0.5), "0.5");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(1e20), "1e+20");
        for x in [0.1, 1.0 / 3.0, 2.5e-7, 0.999999999, 12345.678] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn part1_config_has_six_cells() {
        let config = load_config(PART1_CONFIG).unwrap();
        assert_eq!(config.base.n, 100);
        assert_eq!(config.base.horizon, 10_000);
        assert_eq!(config.base.tolerance, 1e-3);
        let cells = config.cells();
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| c.q_flip == 1e-6));
        let grid: Vec<(f64, f64)> = cells.iter().map(|c| (c.q_shrink, c.p_init)).collect();
        assert_eq!(
            grid,
            vec![
                (0.001, 0.05),
                (0.001, 0.1),
                (0.002, 0.05),
                (0.002, 0.1),
                (0.003, 0.05),
                (0.003, 0.1)
            ]
        );
        assert_eq!(config.seeds.len(), 20);
        assert_eq!(config.p_init_count(), 2);
    }

    #[test]
    fn part2_config_has_six_cells() {
        let config = load_config(PART2_CONFIG).unwrap();
        let flips: Vec<f64> = config.cells().iter().map(|c| c.q_flip).collect();
        assert_eq!(flips, vec![1e-6, 1e-6, 2e-6, 2e-6, 3e-6, 3e-6]);
        assert!(config.cells().iter().all(|c| c.q_shrink == 0.001));
    }

    #[test]
    fn defaults_applied() {
        let config = load_config(MINIMAL).unwrap();
        assert_eq!(config.sample_stride, 10);
        assert_eq!(config.mode, Mode::Fast);
        assert_eq!(config.base.selection, SelectionDistribution::uniform(5).unwrap());
        assert_eq!(config.base.init, InitSpec::Uniform01);
        assert_eq!(config.seeds, derive_seeds(0, 20));
        assert_eq!(config.cells().len(), 1);
    }

    #[test]
    fn missing_key_named() {
        let err = load_config("n = 5\np_init = 0.5\nhorizon = 100\n").unwrap_err();
        assert!(err.to_string().contains("tolerance"), "{err}");
    }

    #[test]
    fn out_of_range_rejected() {
        let err = load_config(&format!("{MINIMAL}q_shrink = 1.5\n")).unwrap_err();
        assert!(matches!(&err, ConfigError::Range { key, .. } if key == "q_shrink"), "{err}");
        let err = load_config(&format!("{MINIMAL}[sweep]\nq_flip = [0.1, -0.2]\n")).unwrap_err();
        assert!(matches!(&err, ConfigError::Range { key, .. } if key == "sweep.q_flip"), "{err}");
        assert!(load_config(&format!("{MINIMAL}seeds = []\n")).is_err());
        assert!(load_config(&format!("{MINIMAL}sample_stride = 0\n")).is_err());
        assert!(load_config("n = 5\np_init = 0.5\nhorizon = 100\ntolerance = 0\n").is_err());
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        let err = load_config(&format!("{MINIMAL}colour = 3\n")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        assert!(matches!(load_config("n = = 5"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn selection_and_init_variants() {
        let text = format!(
            "{MINIMAL}selection = [0.6, 0.1, 0.1, 0.1, 0.1]\ninit = {{ constant = 0.25 }}\n"
        );
        let config = load_config(&text).unwrap();
        assert_eq!(config.base.selection.probs()[0], 0.6);
        assert_eq!(config.base.init, InitSpec::Constant(0.25));

        let config = load_config(&format!("{MINIMAL}init = [0, 1, 0, 1, 0]\n")).unwrap();
        assert_eq!(config.base.init, InitSpec::Explicit(vec![0.0, 1.0, 0.0, 1.0, 0.0]));

        assert!(load_config(&format!("{MINIMAL}selection = [0.5, 0.5]\n")).is_err());
        assert!(load_config(&format!("{MINIMAL}selection = [1, 0, 0, 0, 0]\n")).is_err());
        assert!(load_config(&format!("{MINIMAL}init = \"gaussian\"\n")).is_err());
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let config = load_config_with_overrides(
            MINIMAL,
            &["q_shrink=0.25", "mode=verify", "sweep.p_init=[0.2, 0.3]"],
        )
        .unwrap();
        assert_eq!(config.base.q_shrink, 0.25);
        assert_eq!(config.mode, Mode::Verify);
        assert_eq!(config.cells().len(), 2);

        let from_override = load_config_with_overrides(MINIMAL, &["q_shrink=1.5"]).unwrap_err();
        let from_file = load_config(&format!("{MINIMAL}q_shrink = 1.5\n")).unwrap_err();
        assert_eq!(from_override.to_string(), from_file.to_string());

        assert!(load_config_with_overrides(MINIMAL, &["bogus=1"]).is_err());
        assert!(matches!(
            load_config_with_overrides(MINIMAL, &["no_equals"]),
            Err(ConfigError::Override(_))
        ));
    }

    #[test]
    fn explicit_seeds_conflict_with_batch_keys() {
        assert_eq!(
            load_config(&format!("{MINIMAL}seeds = [3, 4]\n")).unwrap().seeds,
            vec![3, 4]
        );
        assert!(load_config(&format!("{MINIMAL}seeds = [3]\nroot_seed = 1\n")).is_err());
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a = derive_seeds(7, 20);
        assert_eq!(a, derive_seeds(7, 20));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        assert_eq!(&derive_seeds(7, 25)[..20], &a[..]);
    }

    #[test]
    fn median_treats_missing_as_infinite() {
        assert_eq!(median_stopping_time(&[Some(5), Some(1), Some(3)]), Some(3));
        assert_eq!(median_stopping_time(&[Some(5), None, Some(3)]), Some(5));
        assert_eq!(median_stopping_time(&[Some(5), None, None]), None);
        assert_eq!(median_stopping_time(&[Some(1), Some(2), None, None]), None);
        assert_eq!(median_stopping_time(&[Some(1), Some(2), Some(3), None]), Some(3));
        assert_eq!(median_stopping_time(&[]), None);
    }

    #[test]
    fn csv_long_format() {
        let record = RunRecord {
            cell: CellParams {
                n: 2,
                p_init: 1.0,
                q_shrink: 0.0,
                q_flip: 0.0,
                tolerance: 1e-3,
                horizon: 10,
            },
            seed: 1,
            t_stop: None,
            samples: vec![(0, vec![0.25, 0.75]), (1, vec![0.5, 0.75]), (2, vec![0.5, 0.625])],
            diagnostics: DiagnosticsSeries::default(),
            wall_time: 0.0,
        };
        let csv = record.trajectory_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "t,agent,state");
        assert_eq!(lines[1], "0,1,0.25");
        assert_eq!(lines[6], "2,2,0.625");
        assert!(!csv.contains('\r'));

        let json = serde_json::to_value(record.to_json()).unwrap();
        assert!(json["t_stop"].is_null());
        assert_eq!(json["cell"]["n"], 2);
    }

    #[test]
    fn cell_tag_encodes_parameters() {
        let cell = load_config(PART1_CONFIG).unwrap().base.cell();
        assert_eq!(cell.tag(), "n100_p0.1_qs0.001_qf0.000001");
    }
}
