//! Seeded trials over functions, tasks, memory models and explainer kinds,
//! aggregated into result tables with 95% confidence intervals.
//!
//! # Configuration
//!
//! Simulation configs are TOML files; every key is optional and falls back to
//! the default shown by [`SimConfig::default`]. Feature indices are 1-based.
//!
//! ```toml
//! seed = 7
//! trials = 10
//! n_train = 10
//! n_test = 100
//! functions = ["box", "piece"]
//! tasks = ["forward", "forbidden"]
//! memory = ["limited", "unlimited"]
//! kinds = ["faithful", "robust", "sparse", "sparse_robust"]
//!
//! [properties]
//! points = 100
//!
//! [box]
//! forbidden_feature = 3
//! stability_radius = 0.1
//! ```
//!
//! # Result cells
//!
//! Accuracy cells use the condition `<task>/<memory>`; property cells use
//! `infidelity`, `sparsity` and `stability`. With `trial_properties` enabled
//! the per-trial property means appear as `<task>/<memory>/<property>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::explainers::{ExplainerKind, Explainers, LocalFitConfig};
use crate::functions::{FunctionId, GroundTruth};
use crate::numeric::{mean_ci95, RngStream, SummaryStat};
use crate::properties::{local_infidelity, local_stability, sparsity, InfidelityConfig, StabilityConfig};
use crate::proxy_human::{
    build_human_input, evaluate_proxy, train_proxy, HumanInput, MemoryKind, MemoryModel, ProxyHuman,
};
use crate::sampling::uniform_cube;
use crate::tasks::{label, sample_training_points, BoundaryMargins, TaskKind};

/// Task names as written in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Forward,
    Forbidden,
}

impl FromStr for TaskName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forward" => Ok(TaskName::Forward),
            "forbidden" => Ok(TaskName::Forbidden),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }
}

/// Per-function settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSettings {
    /// 1-based forbidden feature for the forbidden-features task.
    pub forbidden_feature: usize,
    /// Perturbation radius for local stability.
    pub stability_radius: f64,
    /// Coordinate margin around thresholds and label-changing cuts.
    pub delta: f64,
    /// Linear-score margin (piecewise function only).
    pub score: f64,
}

impl FunctionSettings {
    fn defaults(id: FunctionId) -> Self {
        match id {
            FunctionId::Box => Self {
                forbidden_feature: 3,
                stability_radius: 0.1,
                delta: 0.2,
                score: 0.5,
            },
            FunctionId::Piece => Self {
                forbidden_feature: 4,
                stability_radius: 2.0,
                delta: 0.2,
                score: 0.5,
            },
        }
    }
}

/// Settings for the per-function property table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertySettings {
    pub enabled: bool,
    /// Uniform inputs per function.
    pub points: usize,
    pub stability_perturbations: usize,
    pub infidelity_radius: f64,
    pub infidelity_samples: usize,
}

impl Default for PropertySettings {
    fn default() -> Self {
        Self {
            enabled: true,
            points: 100,
            stability_perturbations: 1000,
            infidelity_radius: 0.1,
            infidelity_samples: 1000,
        }
    }
}

fn default_box() -> FunctionSettings {
    FunctionSettings::defaults(FunctionId::Box)
}

fn default_piece() -> FunctionSettings {
    FunctionSettings::defaults(FunctionId::Piece)
}

/// A full simulation suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub max_depth: usize,
    pub sig_figures: u32,
    pub functions: Vec<FunctionId>,
    pub tasks: Vec<TaskName>,
    pub memory: Vec<MemoryKind>,
    pub kinds: Vec<ExplainerKind>,
    /// Also evaluate the property metrics on every trial's test inputs.
    pub trial_properties: bool,
    pub properties: PropertySettings,
    pub fit: LocalFitConfig,
    #[serde(rename = "box", default = "default_box")]
    pub box_settings: FunctionSettings,
    #[serde(rename = "piece", default = "default_piece")]
    pub piece_settings: FunctionSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_501,
            trials: 10,
            n_train: 10,
            n_test: 100,
            max_depth: 2,
            sig_figures: 1,
            functions: FunctionId::ALL.to_vec(),
            tasks: vec![TaskName::Forward, TaskName::Forbidden],
            memory: MemoryKind::ALL.to_vec(),
            kinds: ExplainerKind::ALL.to_vec(),
            trial_properties: false,
            properties: PropertySettings::default(),
            fit: LocalFitConfig::default(),
            box_settings: default_box(),
            piece_settings: default_piece(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source.into(),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn settings(&self, id: FunctionId) -> &FunctionSettings {
        match id {
            FunctionId::Box => &self.box_settings,
            FunctionId::Piece => &self.piece_settings,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(Error::config("trials, n_train and n_test must be at least 1"));
        }
        if self.sig_figures == 0 {
            return Err(Error::config("sig_figures must be at least 1"));
        }
        if self.kinds.is_empty() {
            return Err(Error::config("at least one explainer kind is required"));
        }
        self.fit.validate()?;
        for id in FunctionId::ALL {
            let s = self.settings(id);
            let dim = GroundTruth::builtin(id).dim();
            if s.forbidden_feature == 0 || s.forbidden_feature > dim {
                return Err(Error::config(format!("{id}: forbidden_feature must be in 1..={dim}")));
            }
            if !(s.stability_radius > 0.0 && s.delta > 0.0 && s.score > 0.0) {
                return Err(Error::config(format!("{id}: radii and margins must be positive")));
            }
        }
        let p = &self.properties;
        if p.enabled
            && (p.points == 0
                || p.stability_perturbations == 0
                || p.infidelity_samples == 0
                || !(p.infidelity_radius > 0.0))
        {
            return Err(Error::config("property settings must be positive"));
        }
        Ok(())
    }

    /// Explainers for one function, derived from the master seed only, so
    /// they are shared by every trial.
    pub fn explainers(&self, id: FunctionId) -> Result<Explainers> {
        Explainers::new(
            GroundTruth::builtin(id),
            self.fit,
            &RngStream::new(self.seed, format!("explainers/{id}")),
        )
    }

    /// Expands the suite into one experiment per function, task and memory
    /// model. Forbidden features is skipped for functions it does not apply
    /// to only if the config omits it.
    pub fn experiments(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &function in &self.functions {
            let s = self.settings(function);
            for &task in &self.tasks {
                let task = match task {
                    TaskName::Forward => TaskKind::ForwardPrediction,
                    TaskName::Forbidden => TaskKind::ForbiddenFeatures {
                        feature: s.forbidden_feature - 1,
                    },
                };
                for &memory in &self.memory {
                    out.push(ExperimentConfig {
                        function,
                        task,
                        memory: MemoryModel {
                            kind: memory,
                            sig_figures: self.sig_figures,
                        },
                        kinds: self.kinds.clone(),
                        n_trials: self.trials,
                        n_train: self.n_train,
                        n_test: self.n_test,
                        max_depth: self.max_depth,
                        margins: BoundaryMargins {
                            delta: s.delta,
                            score: s.score,
                        },
                        seed: self.seed,
                        trial_properties: self.trial_properties.then(|| self.property_metrics(function)),
                    });
                }
            }
        }
        out
    }

    fn property_metrics(&self, id: FunctionId) -> PropertyMetrics {
        PropertyMetrics {
            stability: StabilityConfig {
                radius: self.settings(id).stability_radius,
                n_perturbations: self.properties.stability_perturbations,
            },
            infidelity: InfidelityConfig {
                radius: self.properties.infidelity_radius,
                n_samples: self.properties.infidelity_samples,
            },
        }
    }
}

/// Metric settings used when properties are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyMetrics {
    pub stability: StabilityConfig,
    pub infidelity: InfidelityConfig,
}

/// One function × task × memory experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub function: FunctionId,
    pub task: TaskKind,
    pub memory: MemoryModel,
    pub kinds: Vec<ExplainerKind>,
    pub n_trials: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub max_depth: usize,
    pub margins: BoundaryMargins,
    pub seed: u64,
    pub trial_properties: Option<PropertyMetrics>,
}

impl ExperimentConfig {
    /// `<task>/<memory>`, the condition name of this experiment's cells.
    pub fn condition(&self) -> String {
        format!("{}/{}", self.task.short_name(), self.memory.kind)
    }

    /// Stream for one trial. Memory models share it so that limited and
    /// unlimited proxies see the same points.
    pub fn trial_stream(&self, trial: usize) -> RngStream {
        RngStream::new(self.seed, format!("trial/{}/{}", self.function, self.task)).substream(trial)
    }
}

/// Property means over one set of inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyValues {
    pub stability: f64,
    pub infidelity: f64,
    pub sparsity: f64,
}

/// Everything one trial produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub accuracy: BTreeMap<ExplainerKind, f64>,
    pub trees: BTreeMap<ExplainerKind, ProxyHuman>,
    pub properties: Option<BTreeMap<ExplainerKind, PropertyValues>>,
}

fn human_pairs(
    ex: &Explainers,
    kind: ExplainerKind,
    cfg: &ExperimentConfig,
    points: &[Vec<f64>],
) -> Result<Vec<(HumanInput, u8)>> {
    let f = ex.function();
    points
        .iter()
        .map(|x| {
            let e = ex.explain(kind, x)?;
            Ok((
                build_human_input(&cfg.task, x, &e, f, cfg.memory)?,
                label(&cfg.task, f, x)?,
            ))
        })
        .collect()
}

/// Property values for one explainer kind averaged over `points`.
pub fn property_values(
    ex: &Explainers,
    kind: ExplainerKind,
    points: &[Vec<f64>],
    metrics: &PropertyMetrics,
    stream: &RngStream,
) -> Result<Vec<PropertyValues>> {
    let f = ex.function();
    points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let e = ex.explain(kind, x)?;
            let stability = if kind.is_constant() {
                // A constant explainer has zero rate of change by definition;
                // sampling would only confirm it at full cost.
                0.0
            } else {
                let mut rng = stream.substream(format!("stability/{kind}/{i}")).rng();
                local_stability(
                    |p| ex.explain(kind, p).expect("dimension checked above"),
                    x,
                    &metrics.stability,
                    &mut rng,
                )?
            };
            let mut rng = stream.substream(format!("infidelity/{kind}/{i}")).rng();
            let infidelity = local_infidelity(&e, f, x, &metrics.infidelity, &mut rng)?;
            Ok(PropertyValues {
                stability,
                infidelity,
                sparsity: sparsity(&e) as f64,
            })
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Runs one trial: fresh training and test points, one proxy per kind.
pub fn run_trial(cfg: &ExperimentConfig, ex: &Explainers, trial: usize) -> Result<TrialOutcome> {
    let f = ex.function();
    let stream = cfg.trial_stream(trial);
    let mut rng = stream.substream("points").rng();
    let train = sample_training_points(f, &cfg.task, cfg.n_train, &cfg.margins, &mut rng)?;
    let test: Vec<Vec<f64>> = (0..cfg.n_test).map(|_| uniform_cube(&mut rng, f.dim())).collect();
    let mut accuracy = BTreeMap::new();
    let mut trees = BTreeMap::new();
    let mut properties = cfg.trial_properties.map(|_| BTreeMap::new());
    for &kind in &cfg.kinds {
        let proxy = train_proxy(&human_pairs(ex, kind, cfg, &train)?, cfg.max_depth)?;
        accuracy.insert(kind, evaluate_proxy(&proxy, &human_pairs(ex, kind, cfg, &test)?)?);
        trees.insert(kind, proxy);
        if let (Some(metrics), Some(props)) = (&cfg.trial_properties, properties.as_mut()) {
            let vals = property_values(ex, kind, &test, metrics, &stream.substream("properties"))?;
            props.insert(
                kind,
                PropertyValues {
                    stability: mean(vals.iter().map(|v| v.stability)),
                    infidelity: mean(vals.iter().map(|v| v.infidelity)),
                    sparsity: mean(vals.iter().map(|v| v.sparsity)),
                },
            );
        }
    }
    Ok(TrialOutcome {
        trial,
        accuracy,
        trees,
        properties,
    })
}

/// Runs every trial, spreading them over the available cores. The result is
/// ordered by trial index and independent of scheduling.
pub fn run_trials(cfg: &ExperimentConfig, ex: &Explainers) -> Result<Vec<TrialOutcome>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cfg.n_trials);
    if workers <= 1 {
        return (0..cfg.n_trials).map(|t| run_trial(cfg, ex, t)).collect();
    }
    let mut slots: Vec<Option<Result<TrialOutcome>>> = (0..cfg.n_trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, chunk) in slots.chunks_mut(cfg.n_trials.div_ceil(workers)).enumerate() {
            let base = w * cfg.n_trials.div_ceil(workers);
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_trial(cfg, ex, base + i));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every trial ran")).collect()
}

/// One aggregated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub function: FunctionId,
    pub condition: String,
    pub kind: ExplainerKind,
    pub stat: SummaryStat,
}

/// Result cells in canonical (function, condition, kind) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by(|a, b| (a.function, &a.condition, a.kind).cmp(&(b.function, &b.condition, b.kind)));
        Self { rows }
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ResultRow>) {
        let mut all = std::mem::take(&mut self.rows);
        all.extend(rows);
        *self = Self::new(all);
    }

    pub fn get(&self, function: FunctionId, condition: &str, kind: ExplainerKind) -> Option<&SummaryStat> {
        self.rows
            .iter()
            .find(|r| r.function == function && r.condition == condition && r.kind == kind)
            .map(|r| &r.stat)
    }

    /// Finds a cell by its `function/condition/kind` key.
    pub fn lookup(&self, key: &str) -> Option<&SummaryStat> {
        let parts: Vec<&str> = key.split('/').collect();
        if parts.len() < 3 {
            return None;
        }
        let function = parts[0].parse().ok()?;
        let kind = parts[parts.len() - 1].parse().ok()?;
        self.get(function, &parts[1..parts.len() - 1].join("/"), kind)
    }
}

/// Aggregates one experiment's trials into cells.
///
/// Trials are summed in trial order whatever order they arrive in, so the
/// floating-point result does not depend on scheduling.
pub fn aggregate(cfg: &ExperimentConfig, trials: &[TrialOutcome]) -> Result<Vec<ResultRow>> {
    let mut ordered: Vec<&TrialOutcome> = trials.iter().collect();
    ordered.sort_by_key(|t| t.trial);
    let trials = ordered;
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let acc: Vec<f64> = trials.iter().filter_map(|t| t.accuracy.get(&kind).copied()).collect();
        rows.push(ResultRow {
            function: cfg.function,
            condition: cfg.condition(),
            kind,
            stat: mean_ci95(&acc)?,
        });
        if cfg.trial_properties.is_some() {
            let per: Vec<PropertyValues> = trials
                .iter()
                .filter_map(|t| t.properties.as_ref().and_then(|p| p.get(&kind)).copied())
                .collect();
            for (name, get) in PROPERTY_COLUMNS {
                rows.push(ResultRow {
                    function: cfg.function,
                    condition: format!("{}/{name}", cfg.condition()),
                    kind,
                    stat: mean_ci95(&per.iter().map(get).collect::<Vec<_>>())?,
                });
            }
        }
    }
    Ok(rows)
}

type PropertyGetter = fn(&PropertyValues) -> f64;

const PROPERTY_COLUMNS: [(&str, PropertyGetter); 3] = [
    ("infidelity", |v| v.infidelity),
    ("sparsity", |v| v.sparsity),
    ("stability", |v| v.stability),
];

/// Runs every trial of an experiment and aggregates them.
pub fn run_experiment(cfg: &ExperimentConfig, ex: &Explainers) -> Result<ResultTable> {
    let trials = run_trials(cfg, ex)?;
    Ok(ResultTable::new(aggregate(cfg, &trials)?))
}

/// Property cells for one function over `points` uniform inputs, each
/// summarized across inputs.
pub fn run_properties(config: &SimConfig, id: FunctionId, ex: &Explainers) -> Result<Vec<ResultRow>> {
    let stream = RngStream::new(config.seed, format!("properties/{id}"));
    let mut rng = stream.substream("points").rng();
    let points: Vec<Vec<f64>> = (0..config.properties.points)
        .map(|_| uniform_cube(&mut rng, ex.function().dim()))
        .collect();
    let metrics = config.property_metrics(id);
    let mut rows = Vec::new();
    for &kind in &config.kinds {
        let vals = property_values(ex, kind, &points, &metrics, &stream)?;
        for (name, get) in PROPERTY_COLUMNS {
            rows.push(ResultRow {
                function: id,
                condition: name.to_string(),
                kind,
                stat: mean_ci95(&vals.iter().map(get).collect::<Vec<_>>())?,
            });
        }
    }
    Ok(rows)
}

/// Tree listing for one experiment, one line per trial and kind.
pub fn tree_log(cfg: &ExperimentConfig, trials: &[TrialOutcome]) -> String {
    let mut out = String::new();
    for t in trials {
        for (kind, proxy) in &t.trees {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                cfg.function,
                cfg.condition(),
                kind,
                t.trial,
                proxy.tree
            );
        }
    }
    out
}

/// Everything a suite run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutput {
    pub table: ResultTable,
    pub trees: String,
}

/// Runs the property tables and every experiment of a suite.
pub fn run_suite(config: &SimConfig) -> Result<SuiteOutput> {
    config.validate()?;
    let mut table = ResultTable::default();
    let mut trees = String::new();
    for &id in &config.functions {
        let ex = config.explainers(id)?;
        if config.properties.enabled {
            table.extend(run_properties(config, id, &ex)?);
        }
        for cfg in config.experiments().iter().filter(|c| c.function == id) {
            let trials = run_trials(cfg, &ex)?;
            table.extend(aggregate(cfg, &trials)?);
            trees.push_str(&tree_log(cfg, &trials));
        }
    }
    Ok(SuiteOutput { table, trees })
}

/// Output formats for [`emit_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::config(format!("unknown table format `{other}`"))),
        }
    }
}

pub const CSV_HEADER: &str = "function,condition,kind,mean,ci95_halfwidth,n";

/// Deterministic serialization of a table.
///
/// CSV holds one cell per line at six decimals. Markdown puts explainer kinds
/// in columns and renders cells as `mean ± halfwidth` at two decimals.
pub fn emit_table(table: &ResultTable, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in table.rows() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{}",
                    r.function, r.condition, r.kind, r.stat.mean, r.stat.ci95_halfwidth, r.stat.n
                );
            }
        }
        TableFormat::Markdown => {
            let kinds: Vec<ExplainerKind> = ExplainerKind::ALL
                .into_iter()
                .filter(|k| table.rows().is_empty() || table.rows().iter().any(|r| r.kind == *k))
                .collect();
            out.push_str("| function | condition |");
            for k in &kinds {
                let _ = write!(out, " {k} |");
            }
            out.push_str("\n|---|---|");
            out.push_str(&"---|".repeat(kinds.len()));
            out.push('\n');
            let mut keys: Vec<(FunctionId, &str)> = Vec::new();
            for r in table.rows() {
                if !keys.contains(&(r.function, r.condition.as_str())) {
                    keys.push((r.function, r.condition.as_str()));
                }
            }
            for (function, condition) in keys {
                let _ = write!(out, "| {function} | {condition} |");
                for k in &kinds {
                    match table.get(function, condition, *k) {
                        Some(s) => {
                            let _ = write!(out, " {} |", format_cell(s));
                        }
                        None => out.push_str(" |"),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

/// `mean ± halfwidth` at two decimals.
pub fn format_cell(s: &SummaryStat) -> String {
    format!("{:.2} ± {:.2}", s.mean, s.ci95_halfwidth)
}

/// Reads a table written by [`emit_table`] in CSV format.
pub fn parse_results_csv(text: &str, source: &str) -> Result<ResultTable> {
    let perr = |line: usize, message: String| Error::Parse {
        source_name: source.into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(perr(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(perr(i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| perr(i + 1, format!("`{s}` is not a number")))
        };
        rows.push(ResultRow {
            function: f[0].parse().map_err(|e: Error| perr(i + 1, e.to_string()))?,
            condition: f[1].to_string(),
            kind: f[2].parse().map_err(|e: Error| perr(i + 1, e.to_string()))?,
            stat: SummaryStat {
                mean: num(f[3])?,
                ci95_halfwidth: num(f[4])?,
                n: f[5]
                    .parse()
                    .map_err(|_| perr(i + 1, format!("`{}` is not a count", f[5])))?,
            },
        });
    }
    Ok(ResultTable::new(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SimConfig {
        SimConfig {
            trials: 3,
            n_test: 30,
            fit: LocalFitConfig {
                n_samples: 200,
                global_samples: 2000,
                ..LocalFitConfig::default()
            },
            properties: PropertySettings {
                points: 5,
                stability_perturbations: 20,
                infidelity_samples: 50,
                ..PropertySettings::default()
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn empty_table_emits_headers_only() {
        let t = ResultTable::default();
        assert_eq!(emit_table(&t, TableFormat::Csv), format!("{CSV_HEADER}\n"));
        let md = emit_table(&t, TableFormat::Markdown);
        assert_eq!(md.lines().count(), 2);
    }

    #[test]
    fn cells_render_with_two_decimals() {
        let s = SummaryStat {
            mean: 0.88,
            ci95_halfwidth: 0.1,
            n: 10,
        };
        assert_eq!(format_cell(&s), "0.88 ± 0.10");
    }

    #[test]
    fn csv_round_trips() {
        let t = ResultTable::new(vec![ResultRow {
            function: FunctionId::Piece,
            condition: "forward/limited".into(),
            kind: ExplainerKind::SparseRobust,
            stat: SummaryStat {
                mean: 0.5,
                ci95_halfwidth: 0.25,
                n: 10,
            },
        }]);
        let text = emit_table(&t, TableFormat::Csv);
        let back = parse_results_csv(&text, "t").unwrap();
        assert_eq!(back, t);
        assert_eq!(emit_table(&back, TableFormat::Csv), text);
        assert!(parse_results_csv("bad\n", "t").is_err());
    }

    #[test]
    fn config_parses_and_hashes_stably() {
        let cfg = SimConfig::from_toml(
            "seed = 3\n[box]\nforbidden_feature = 3\nstability_radius = 0.1\ndelta = 0.1\nscore = 0.5\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        let again = SimConfig::from_toml(&cfg.to_toml(), "t").unwrap();
        assert_eq!(cfg.hash(), again.hash());
        assert!(SimConfig::from_toml("trials = 0", "t").is_err());
        match SimConfig::from_toml("seed = 1\nbogus = 2\n", "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trials_are_deterministic_and_aggregate_by_recomputation() {
        let cfg = small_config();
        let ex = cfg.explainers(FunctionId::Box).unwrap();
        let exp = &cfg.experiments()[0];
        let a = run_trials(exp, &ex).unwrap();
        let b = run_trials(exp, &ex).unwrap();
        assert_eq!(a, b);
        let rows = aggregate(exp, &a).unwrap();
        for row in &rows {
            let acc: Vec<f64> = a.iter().map(|t| t.accuracy[&row.kind]).collect();
            assert_eq!(row.stat, mean_ci95(&acc).unwrap());
            assert_eq!(row.stat.n, 3);
        }
        let mut reversed = a.clone();
        reversed.reverse();
        assert_eq!(
            ResultTable::new(aggregate(exp, &reversed).unwrap()),
            ResultTable::new(rows)
        );
    }

    #[test]
    fn trial_properties_add_cells() {
        let mut cfg = small_config();
        cfg.trial_properties = true;
        cfg.trials = 1;
        cfg.n_test = 3;
        let ex = cfg.explainers(FunctionId::Piece).unwrap();
        let exp = cfg
            .experiments()
            .into_iter()
            .find(|e| e.function == FunctionId::Piece && e.condition() == "forward/limited")
            .unwrap();
        let t = run_experiment(&exp, &ex).unwrap();
        assert!(t.lookup("piece/forward/limited/sparsity/faithful").is_some());
        assert!(t.lookup("piece/forward/limited/faithful").is_some());
    }
}
