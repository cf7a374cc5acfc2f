//! Experiment orchestration: building a runnable experiment from a config
//! document, writing run artifacts (round-log CSV, metrics JSON, resolved
//! config snapshot), grid sweeps with pre-split seeds, and the comparison
//! report over finished runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::scenario::{
    generate_stream, load_feature_file, run_experiment, stream_from_samples, ExperimentState,
    RoundLog, Stream, SyntheticTaskSpec,
};
use crate::seeding::component_seed;

/// Environment variable bounding concurrent sweep cells.
pub const WORKERS_ENV: &str = "H2ST_WORKERS";

const ROUND_LOG_FILE: &str = "roundlog.csv";
const METRICS_FILE: &str = "metrics.json";
const SNAPSHOT_FILE: &str = "config.resolved.toml";

/// A fully built, not yet executed experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub stream: Stream,
    pub state: ExperimentState,
    ran: bool,
}

/// Artifacts of one finished run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub round_logs: Vec<RoundLog>,
    pub report: MetricsReport,
}

impl Experiment {
    /// Materializes the stream and all components from a resolved config.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let stream_seed = config.seed_for("stream");
        let stream = match &config.feature_file {
            Some(path) => {
                let samples = load_feature_file(path)?;
                stream_from_samples(&config.stream, &samples, stream_seed)?
            }
            None => {
                let specs = SyntheticTaskSpec::generate(
                    config.stream.num_tasks,
                    config.stream.classes_per_task,
                    config.stream.input_dim,
                    config.synthetic.separation,
                    config.synthetic.noise_std,
                    config.seed_for("tasks"),
                );
                generate_stream(&config.stream, &specs, stream_seed)?
            }
        };
        let input_dim = stream.bootstrap[0].features.len();
        let model = config.build_model(input_dim)?;
        let store = config.build_store();
        let cascade = config.build_cascade()?;
        let choice = config.strategy;
        Ok(Self {
            config,
            stream,
            state: ExperimentState::new(model, store, cascade, choice),
            ran: false,
        })
    }

    /// Bootstraps task 1 and plays the whole stream once.
    pub fn run(&mut self) -> Result<ExperimentOutput> {
        if self.ran {
            return Err(Error::InvalidConfig("experiment already ran".into()));
        }
        self.ran = true;
        self.state
            .model
            .train_increment(1, &self.stream.bootstrap, &mut self.state.store)?;
        if let Some(cascade) = self.state.cascade.as_mut() {
            cascade.on_task_learned(1, self.state.model.feature_dim())?;
        }
        let mut accumulator = MetricsAccumulator::new();
        let (round_logs, report) =
            run_experiment(&self.stream, &mut self.state, &mut accumulator)?;
        Ok(ExperimentOutput { round_logs, report })
    }
}

/// The metrics document written per run: the strategy and seed that
/// produced it plus the full metrics report.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub strategy: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: &'a MetricsReport,
}

/// Renders round logs in the fixed CSV schema.
pub fn round_logs_to_csv(logs: &[RoundLog]) -> String {
    let mut out = String::from(
        "round,role,sample_idx,true_task,true_label,verdict,pred_task,pred_label,layers_visited\n",
    );
    for log in logs {
        for r in &log.records {
            let (verdict, pred_task) = match r.detection {
                crate::detection::Detection::Id(t) => ("id", t.to_string()),
                crate::detection::Detection::Ood => ("ood", String::new()),
            };
            let pred_label = r.pred_label.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                log.round,
                log.role.label(),
                r.sample_idx,
                r.true_task,
                r.true_label,
                verdict,
                pred_task,
                pred_label,
                r.layers_visited
            ));
        }
    }
    out
}

/// Writes the three run artifacts into `dir`.
pub fn write_run_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(ROUND_LOG_FILE), round_logs_to_csv(&output.round_logs))?;
    let summary = RunSummary {
        strategy: config.strategy.label(),
        seed: config.seed,
        report: &output.report,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::MalformedData(e.to_string()))?;
    fs::write(dir.join(METRICS_FILE), json + "\n")?;
    fs::write(dir.join(SNAPSHOT_FILE), config.to_toml_string()?)?;
    Ok(())
}

/// Executes one experiment from a config file and writes its artifacts.
pub fn run_command(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(out) = out_override {
        config.out_dir = out;
    }
    let out_dir = config.out_dir.clone();
    let mut experiment = Experiment::new(config.clone())?;
    let output = experiment.run()?;
    write_run_outputs(&out_dir, &config, &output)?;
    Ok(())
}

/// One grid dimension: a dotted config path and its candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dimensions: Vec<(String, Vec<String>)>,
}

impl GridSpec {
    /// Parses `path=v1,v2,...;path2=w1,w2` (empty text = empty grid).
    pub fn parse(text: &str) -> Result<GridSpec> {
        let mut dimensions = Vec::new();
        for part in text.split(';').filter(|p| !p.trim().is_empty()) {
            let (path, values) = part.split_once('=').ok_or_else(|| {
                Error::ConfigParse(format!("grid dimension `{part}` lacks `=`"))
            })?;
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(Error::ConfigParse(format!(
                    "grid dimension `{path}` has no values"
                )));
            }
            dimensions.push((path.trim().to_string(), values));
        }
        Ok(GridSpec { dimensions })
    }

    /// All cells in row-major order; the empty grid has one empty cell.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (path, values) in &self.dimensions {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut c = cell.clone();
                    c.push((path.clone(), v.clone()));
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(v) = raw.parse::<i64>() {
        return toml::Value::Integer(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return toml::Value::Float(v);
    }
    if let Ok(v) = raw.parse::<bool>() {
        return toml::Value::Boolean(v);
    }
    toml::Value::String(raw.to_string())
}

/// Applies one `path=value` override onto a TOML representation of the
/// config; re-deserializing enforces key and invariant checks.
pub fn apply_overrides(
    base: &ExperimentConfig,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut value = toml::Value::try_from(base).map_err(|e| Error::ConfigParse(e.to_string()))?;
    for (path, raw) in overrides {
        let mut cursor = &mut value;
        let parts: Vec<&str> = path.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            cursor = cursor
                .as_table_mut()
                .ok_or_else(|| Error::ConfigParse(format!("`{path}` is not a table path")))?
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        cursor
            .as_table_mut()
            .ok_or_else(|| Error::ConfigParse(format!("`{path}` is not a table path")))?
            .insert(parts.last().unwrap().to_string(), parse_scalar(raw));
    }
    let config: ExperimentConfig = value
        .try_into()
        .map_err(|e| Error::ConfigParse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

struct CellResult {
    index: usize,
    overrides: Vec<(String, String)>,
    reps: usize,
    metrics: Vec<(String, Vec<f64>)>,
}

/// Runs `grid` cells times `reps` replications with pre-split seeds and
/// appends one aggregate row per finished cell to `<out>/sweep.csv`.
pub fn sweep_command(
    config_path: &Path,
    grid_text: &str,
    reps: usize,
    out_override: Option<PathBuf>,
) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let base = ExperimentConfig::load(config_path)?;
    let grid = GridSpec::parse(grid_text)?;
    let cells = grid.cells();
    let out_dir = out_override.unwrap_or_else(|| base.out_dir.clone());
    fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("sweep.csv");

    let param_names: Vec<String> = grid.dimensions.iter().map(|(p, _)| p.clone()).collect();
    let mut header = String::from("cell");
    for p in &param_names {
        header.push(',');
        header.push_str(p);
    }
    header.push_str(",reps");
    for metric in METRIC_NAMES {
        header.push_str(&format!(",{metric}_mean,{metric}_std"));
    }
    header.push('\n');
    let file = fs::File::create(&csv_path)?;
    let writer = Mutex::new(file);
    writer
        .lock()
        .unwrap()
        .write_all(header.as_bytes())?;

    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0);
    let pool = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let results: Result<Vec<()>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(index, overrides)| {
                let result = run_cell(&base, index, overrides, reps)?;
                let row = cell_row(&result, &param_names);
                let mut guard = writer.lock().unwrap();
                guard.write_all(row.as_bytes())?;
                guard.flush()?;
                Ok(())
            })
            .collect()
    });
    results?;
    Ok(())
}

const METRIC_NAMES: [&str; 5] = ["f1_mean", "ta_mean", "acc", "ft", "mean_layer_visits"];

fn run_cell(
    base: &ExperimentConfig,
    index: usize,
    overrides: &[(String, String)],
    reps: usize,
) -> Result<CellResult> {
    let config = apply_overrides(base, overrides)?;
    let mut collected: Vec<(String, Vec<f64>)> = METRIC_NAMES
        .iter()
        .map(|m| (m.to_string(), Vec::new()))
        .collect();
    for rep in 0..reps {
        let mut rep_config = config.clone();
        rep_config.seed = component_seed(base.seed, &format!("cell:{index}:rep:{rep}"));
        let mut experiment = Experiment::new(rep_config)?;
        let output = experiment.run()?;
        let report = &output.report;
        let values = [
            report.f1_mean,
            report.ta_mean,
            report.acc,
            report.ft,
            report.mean_layer_visits,
        ];
        for ((_, bucket), value) in collected.iter_mut().zip(values) {
            if let Some(v) = value {
                bucket.push(v);
            }
        }
    }
    Ok(CellResult {
        index,
        overrides: overrides.to_vec(),
        reps,
        metrics: collected,
    })
}

fn cell_row(result: &CellResult, param_names: &[String]) -> String {
    let mut row = result.index.to_string();
    for name in param_names {
        let value = result
            .overrides
            .iter()
            .find(|(p, _)| p == name)
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        row.push(',');
        row.push_str(&value);
    }
    row.push_str(&format!(",{}", result.reps));
    for (_, values) in &result.metrics {
        match mean_std(values) {
            Some((m, s)) => row.push_str(&format!(",{m:.4},{s:.4}")),
            None => row.push_str(",,"),
        }
    }
    row.push('\n');
    row
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// One parsed run found under the report directory.
#[derive(Debug, Clone)]
pub struct RunEntry {
    pub name: String,
    pub strategy: String,
    pub metrics: serde_json::Value,
}

fn load_runs(dir: &Path) -> Result<Vec<RunEntry>> {
    let mut candidates: Vec<PathBuf> = vec![dir.to_path_buf()];
    if dir.is_dir() {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                candidates.push(path);
            }
        }
    }
    candidates.sort();
    let mut runs = Vec::new();
    for candidate in candidates {
        let metrics_path = candidate.join(METRICS_FILE);
        if !metrics_path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&metrics_path)?;
        let metrics: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedData(format!("{}: {e}", metrics_path.display())))?;
        let strategy = metrics
            .get("strategy")
            .and_then(|v| v.as_str())
            .unwrap_or("unknown")
            .to_string();
        let name = candidate
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| candidate.display().to_string());
        runs.push(RunEntry {
            name,
            strategy,
            metrics,
        });
    }
    if runs.is_empty() {
        return Err(Error::EmptyInput("no metrics.json found under results dir"));
    }
    Ok(runs)
}

/// The comparison table columns, in order.
pub const REPORT_COLUMNS: [&str; 6] =
    ["strategy", "f1_mean", "ta_mean", "acc", "ft", "mean_layer_visits"];

/// Builds the comparison table (one row per run) as printable text.
pub fn comparison_table(runs: &[RunEntry]) -> String {
    let mut out = format!(
        "{:<22} {:>8} {:>8} {:>8} {:>8} {:>18}\n",
        REPORT_COLUMNS[0],
        REPORT_COLUMNS[1],
        REPORT_COLUMNS[2],
        REPORT_COLUMNS[3],
        REPORT_COLUMNS[4],
        REPORT_COLUMNS[5],
    );
    for run in runs {
        let cell = |key: &str| -> String {
            run.metrics
                .get(key)
                .and_then(|v| v.as_f64())
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into())
        };
        out.push_str(&format!(
            "{:<22} {:>8} {:>8} {:>8} {:>8} {:>18}\n",
            run.strategy,
            cell("f1_mean"),
            cell("ta_mean"),
            cell("acc"),
            cell("ft"),
            cell("mean_layer_visits"),
        ));
    }
    out
}

/// Per-round metric curves over all runs, as CSV.
pub fn curves_csv(runs: &[RunEntry]) -> String {
    let mut out = String::from("run,strategy,round,role,f1,ta\n");
    for run in runs {
        let Some(rounds) = run.metrics.get("per_round").and_then(|v| v.as_array()) else {
            continue;
        };
        for round in rounds {
            let get = |key: &str| round.get(key).cloned().unwrap_or(serde_json::Value::Null);
            let num = |v: serde_json::Value| -> String {
                v.as_f64().map(|f| format!("{f:.4}")).unwrap_or_default()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                run.name,
                run.strategy,
                get("round"),
                get("role").as_str().unwrap_or(""),
                num(get("f1")),
                num(get("ta")),
            ));
        }
    }
    out
}

/// Prints the comparison table and writes `curves.csv` next to the runs.
pub fn report_command(results_dir: &Path) -> Result<()> {
    let runs = load_runs(results_dir)?;
    print!("{}", comparison_table(&runs));
    fs::write(results_dir.join("curves.csv"), curves_csv(&runs))?;
    Ok(())
}
