//! Study stimulus selection and the stimulus file format.
//!
//! Test items are drawn from uniform candidate batches, categorized by how
//! proxies trained on each explainer kind fare, and sampled evenly across the
//! three categories. Training items mix points near the decision boundary
//! with easy points far from it.
//!
//! # File format
//!
//! Tab-separated text. The first line is a header comment carrying the
//! format version and study metadata; the second names the columns:
//!
//! ```text
//! # stimuli v1 function=box task=forward feature=0 dim=3
//! item  phase  category  kind  answer  x1  x2  x3  w1  w2  w3  intercept
//! ```
//!
//! There is one row per item and explainer kind, so every participant
//! condition finds its own advice for each item. `category` is `-` for
//! training items, and `feature` is `0` for forward prediction or the
//! 1-based forbidden feature otherwise. Display values are rounded to the
//! configured significant figures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{SimConfig, TaskName};
use crate::explainers::{ExplainerKind, Explainers, LocalFitConfig};
use crate::functions::{FunctionId, GroundTruth};
use crate::numeric::{round_sig_finite, Attribution, RngStream};
use crate::proxy_human::{build_human_input, predict_proxy, train_proxy, MemoryKind, MemoryModel};
use crate::sampling::uniform_cube;
use crate::tasks::{
    categorize_test_points, label, sample_easy_points, sample_training_points, select_study_test_set, BoundaryMargins,
    TaskKind, TestCategory,
};

/// Stimulus generation settings (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimuliConfig {
    pub seed: u64,
    pub function: FunctionId,
    pub task: TaskName,
    /// 1-based forbidden feature; defaults to the function's usual choice.
    pub forbidden_feature: Option<usize>,
    /// Memory model of the proxies used for categorization.
    pub memory: MemoryKind,
    /// The explanation kind expected to help most.
    pub best: ExplainerKind,
    pub kinds: Vec<ExplainerKind>,
    pub per_category: usize,
    /// Candidates judged per round of freshly trained proxies. Rounds repeat
    /// until every category fills or `max_pool` candidates have been seen.
    pub pool: usize,
    pub max_pool: usize,
    /// Training items shown to participants.
    pub n_training: usize,
    /// Share of participant training items drawn away from the boundary.
    pub easy_fraction: f64,
    /// Boundary training points per proxy.
    pub n_proxy_train: usize,
    pub max_depth: usize,
    pub sig_figures: u32,
    pub delta: Option<f64>,
    pub score: Option<f64>,
    pub fit: LocalFitConfig,
}

impl Default for StimuliConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_501,
            function: FunctionId::Box,
            task: TaskName::Forward,
            forbidden_feature: None,
            memory: MemoryKind::Limited,
            best: ExplainerKind::Sparse,
            kinds: ExplainerKind::ALL.to_vec(),
            per_category: 10,
            pool: 1000,
            max_pool: 64_000,
            n_training: 10,
            easy_fraction: 0.5,
            n_proxy_train: 10,
            max_depth: 2,
            sig_figures: 1,
            delta: None,
            score: None,
            fit: LocalFitConfig::default(),
        }
    }
}

impl StimuliConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let cfg: StimuliConfig = toml::from_str(text).map_err(|e| Error::Parse {
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

    pub fn validate(&self) -> Result<()> {
        if self.per_category == 0 || self.pool == 0 || self.n_proxy_train == 0 {
            return Err(Error::config("per_category, pool and n_proxy_train must be positive"));
        }
        if !(0.0..=1.0).contains(&self.easy_fraction) {
            return Err(Error::config("easy_fraction must lie in [0, 1]"));
        }
        if !self.kinds.contains(&self.best) || self.kinds.len() < 2 {
            return Err(Error::config("kinds must include `best` and at least one other kind"));
        }
        self.task_kind()?;
        self.fit.validate()
    }

    pub fn task_kind(&self) -> Result<TaskKind> {
        Ok(match self.task {
            TaskName::Forward => TaskKind::ForwardPrediction,
            TaskName::Forbidden => {
                let defaults = SimConfig::default();
                let d = self
                    .forbidden_feature
                    .unwrap_or(defaults.settings(self.function).forbidden_feature);
                let dim = GroundTruth::builtin(self.function).dim();
                if d == 0 || d > dim {
                    return Err(Error::config(format!("forbidden_feature must be in 1..={dim}")));
                }
                TaskKind::ForbiddenFeatures { feature: d - 1 }
            }
        })
    }

    fn margins(&self) -> BoundaryMargins {
        let defaults = SimConfig::default();
        let s = defaults.settings(self.function);
        BoundaryMargins {
            delta: self.delta.unwrap_or(s.delta),
            score: self.score.unwrap_or(s.score),
        }
    }
}

/// Whether an item is practice (answer shown) or scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemPhase {
    Training,
    Test,
}

impl ItemPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemPhase::Training => "training",
            ItemPhase::Test => "test",
        }
    }
}

/// One item as displayed under one explainer kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusRow {
    pub item: String,
    pub phase: ItemPhase,
    pub category: Option<TestCategory>,
    pub kind: ExplainerKind,
    pub answer: u8,
    pub x: Vec<f64>,
    pub attribution: Attribution,
}

/// A complete stimulus set.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSet {
    pub function: FunctionId,
    pub task: TaskKind,
    pub dim: usize,
    pub rows: Vec<StimulusRow>,
    /// Number of candidates judged before every category filled.
    pub pool_used: usize,
}

impl StimulusSet {
    /// Distinct item ids of a phase, in file order.
    pub fn items(&self, phase: ItemPhase) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in self.rows.iter().filter(|r| r.phase == phase) {
            if !out.contains(&r.item.as_str()) {
                out.push(&r.item);
            }
        }
        out
    }

    /// Count of test items per category.
    pub fn category_counts(&self) -> BTreeMap<TestCategory, usize> {
        let mut seen = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.phase == ItemPhase::Test) {
            if let Some(c) = r.category {
                seen.entry(r.item.clone()).or_insert(c);
            }
        }
        let mut counts = BTreeMap::new();
        for c in seen.values() {
            *counts.entry(*c).or_insert(0) += 1;
        }
        counts
    }

    pub fn row(&self, item: &str, kind: ExplainerKind) -> Option<&StimulusRow> {
        self.rows.iter().find(|r| r.item == item && r.kind == kind)
    }
}

fn display_rows(
    ex: &Explainers,
    cfg: &StimuliConfig,
    task: &TaskKind,
    id: &str,
    phase: ItemPhase,
    category: Option<TestCategory>,
    x: &[f64],
) -> Result<Vec<StimulusRow>> {
    let f = ex.function();
    let answer = label(task, f, x)?;
    cfg.kinds
        .iter()
        .map(|&kind| {
            Ok(StimulusRow {
                item: id.to_string(),
                phase,
                category,
                kind,
                answer,
                x: x.iter().map(|v| round_sig_finite(*v, cfg.sig_figures)).collect(),
                attribution: ex.explain(kind, x)?.rounded(cfg.sig_figures),
            })
        })
        .collect()
}

/// Builds the stimulus set: categorized test items and mixed training items.
pub fn generate_stimuli(cfg: &StimuliConfig) -> Result<StimulusSet> {
    cfg.validate()?;
    let task = cfg.task_kind()?;
    let f = GroundTruth::builtin(cfg.function);
    let stream = RngStream::new(cfg.seed, format!("stimuli/{}/{}", cfg.function, task));
    let ex = Explainers::new(f.clone(), cfg.fit, &stream.substream("explainers"))?;
    let memory = MemoryModel {
        kind: cfg.memory,
        sig_figures: cfg.sig_figures,
    };
    let margins = cfg.margins();

    // Each round trains a fresh set of proxies and judges its own batch of
    // candidates. A single lucky training sample can leave the best proxy
    // perfect, and then no pool size would ever yield a point where it loses.
    let mut pool: Vec<Vec<f64>> = Vec::new();
    let mut categories: Vec<TestCategory> = Vec::new();
    let mut round = 0usize;
    let selection = loop {
        round += 1;
        let round_stream = stream.substream(format!("round/{round}"));
        let mut rng = round_stream.substream("proxy-train").rng();
        let train = sample_training_points(&f, &task, cfg.n_proxy_train, &margins, &mut rng)?;
        let mut proxies = BTreeMap::new();
        for &kind in &cfg.kinds {
            let pairs = train
                .iter()
                .map(|x| {
                    let e = ex.explain(kind, x)?;
                    Ok((build_human_input(&task, x, &e, &f, memory)?, label(&task, &f, x)?))
                })
                .collect::<Result<Vec<_>>>()?;
            proxies.insert(kind, train_proxy(&pairs, cfg.max_depth)?);
        }

        let mut pool_rng = round_stream.substream("pool").rng();
        let mut correct: BTreeMap<ExplainerKind, Vec<bool>> = cfg.kinds.iter().map(|k| (*k, Vec::new())).collect();
        let batch = cfg.pool.min(cfg.max_pool - pool.len());
        for _ in 0..batch {
            let x = uniform_cube(&mut pool_rng, f.dim());
            let y = label(&task, &f, &x)?;
            for (&kind, verdicts) in correct.iter_mut() {
                let e = ex.explain(kind, &x)?;
                let h = build_human_input(&task, &x, &e, &f, memory)?;
                verdicts.push(predict_proxy(&proxies[&kind], &h)? == y);
            }
            pool.push(x);
        }
        categories.extend(categorize_test_points(&correct, cfg.best)?);
        let mut sel_rng = stream.substream("select").rng();
        match select_study_test_set(&categories, cfg.per_category, &mut sel_rng) {
            Ok(sel) => break sel,
            Err(Error::InsufficientCandidates { .. }) if pool.len() < cfg.max_pool => {}
            Err(e) => return Err(e),
        }
    };

    let mut rows = Vec::new();
    let mut train_rng = stream.substream("study-training").rng();
    let n_easy = (cfg.easy_fraction * cfg.n_training as f64).round() as usize;
    let mut study_train = sample_easy_points(&f, n_easy, &margins, &mut train_rng);
    if cfg.n_training > n_easy {
        study_train.extend(sample_training_points(
            &f,
            &task,
            cfg.n_training - n_easy,
            &margins,
            &mut train_rng,
        )?);
    }
    study_train.shuffle(&mut train_rng);
    for (i, x) in study_train.iter().enumerate() {
        rows.extend(display_rows(
            &ex,
            cfg,
            &task,
            &format!("train-{:02}", i + 1),
            ItemPhase::Training,
            None,
            x,
        )?);
    }
    for (i, (idx, cat)) in selection.iter().enumerate() {
        rows.extend(display_rows(
            &ex,
            cfg,
            &task,
            &format!("test-{:02}", i + 1),
            ItemPhase::Test,
            Some(*cat),
            &pool[*idx],
        )?);
    }
    Ok(StimulusSet {
        function: cfg.function,
        task,
        dim: f.dim(),
        rows,
        pool_used: pool.len(),
    })
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Serializes a stimulus set in the tab-separated format.
pub fn write_stimuli(set: &StimulusSet) -> String {
    let feature = match set.task {
        TaskKind::ForwardPrediction => 0,
        TaskKind::ForbiddenFeatures { feature } => feature + 1,
    };
    let mut out = format!(
        "# stimuli v1 function={} task={} feature={} dim={}\n",
        set.function,
        set.task.short_name(),
        feature,
        set.dim
    );
    let mut cols = vec!["item", "phase", "category", "kind", "answer"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend((1..=set.dim).map(|d| format!("x{d}")));
    cols.extend((1..=set.dim).map(|d| format!("w{d}")));
    cols.push("intercept".into());
    out.push_str(&cols.join("\t"));
    out.push('\n');
    for r in &set.rows {
        let mut fields = vec![
            r.item.clone(),
            r.phase.as_str().to_string(),
            r.category.map_or("-".to_string(), |c| c.to_string()),
            r.kind.to_string(),
            r.answer.to_string(),
        ];
        fields.extend(r.x.iter().map(|v| fmt_num(*v)));
        fields.extend(r.attribution.entries().into_iter().map(fmt_num));
        let _ = writeln!(out, "{}", fields.join("\t"));
    }
    out
}

/// Parses the tab-separated stimulus format.
pub fn parse_stimuli(text: &str, source: &str) -> Result<StimulusSet> {
    let perr = |line: usize, message: String| Error::Parse {
        source_name: source.into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    let meta: BTreeMap<&str, &str> = header
        .strip_prefix("# stimuli v1")
        .ok_or_else(|| perr(1, "expected `# stimuli v1` header".into()))?
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let field = |k: &str| {
        meta.get(k)
            .copied()
            .ok_or_else(|| perr(1, format!("header lacks `{k}`")))
    };
    let function: FunctionId = field("function")?.parse().map_err(|e: Error| perr(1, e.to_string()))?;
    let dim: usize = field("dim")?.parse().map_err(|_| perr(1, "bad dim".into()))?;
    let feature: usize = field("feature")?.parse().map_err(|_| perr(1, "bad feature".into()))?;
    let task = match field("task")? {
        "forward" => TaskKind::ForwardPrediction,
        "forbidden" if feature >= 1 && feature <= dim => TaskKind::ForbiddenFeatures { feature: feature - 1 },
        other => return Err(perr(1, format!("bad task `{other}` or feature"))),
    };
    lines.next();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 + 2 * dim + 1 {
            return Err(perr(n, format!("expected {} fields, found {}", 6 + 2 * dim, f.len())));
        }
        let nums = f[5..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| perr(n, format!("`{s}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        let phase = match f[1] {
            "training" => ItemPhase::Training,
            "test" => ItemPhase::Test,
            other => return Err(perr(n, format!("unknown phase `{other}`"))),
        };
        let category = match f[2] {
            "-" => None,
            c => Some(c.parse().map_err(|e: Error| perr(n, e.to_string()))?),
        };
        if (phase == ItemPhase::Test) != category.is_some() {
            return Err(perr(n, "test items need a category and training items none".into()));
        }
        let answer: u8 = match f[4] {
            "0" => 0,
            "1" => 1,
            other => return Err(perr(n, format!("answer `{other}` is not 0 or 1"))),
        };
        rows.push(StimulusRow {
            item: f[0].to_string(),
            phase,
            category,
            kind: f[3].parse().map_err(|e: Error| perr(n, e.to_string()))?,
            answer,
            x: nums[..dim].to_vec(),
            attribution: Attribution::from_entries(&nums[dim..]).map_err(|e| perr(n, e.to_string()))?,
        });
    }
    Ok(StimulusSet {
        function,
        task,
        dim,
        rows,
        pool_used: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(function: FunctionId, task: TaskName, best: ExplainerKind) -> StimuliConfig {
        StimuliConfig {
            function,
            task,
            best,
            per_category: 3,
            pool: 200,
            fit: LocalFitConfig {
                n_samples: 200,
                global_samples: 2000,
                ..LocalFitConfig::default()
            },
            ..StimuliConfig::default()
        }
    }

    #[test]
    fn generated_set_round_trips_through_text() {
        let set = generate_stimuli(&quick(FunctionId::Piece, TaskName::Forbidden, ExplainerKind::Faithful)).unwrap();
        assert_eq!(set.items(ItemPhase::Test).len(), 9);
        assert_eq!(set.items(ItemPhase::Training).len(), 10);
        for c in TestCategory::ALL {
            assert_eq!(set.category_counts()[&c], 3);
        }
        let text = write_stimuli(&set);
        let mut back = parse_stimuli(&text, "t").unwrap();
        back.pool_used = set.pool_used;
        assert_eq!(back, set);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let set = generate_stimuli(&quick(FunctionId::Box, TaskName::Forward, ExplainerKind::Sparse)).unwrap();
        let text = write_stimuli(&set).replacen("\ttraining\t", "\tpractice\t", 1);
        match parse_stimuli(&text, "t") {
            Err(Error::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
