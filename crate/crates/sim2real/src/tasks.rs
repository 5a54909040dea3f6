//! The two decision tasks: labels, boundary-focused training points, task
//! instances and the three-way categorization of study test points.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{ExplainerKind, Explainers};
use crate::functions::{FunctionId, GroundTruth};
use crate::numeric::{dot_unchecked, Attribution};
use crate::proxy_human::{build_human_input, HumanInput, MemoryModel};
use crate::sampling::uniform_cube;

/// Which decision a person makes about a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// Guess the function's output.
    ForwardPrediction,
    /// Decide whether the function used feature `feature` (0-based).
    ForbiddenFeatures { feature: usize },
}

impl TaskKind {
    pub fn short_name(&self) -> &'static str {
        match self {
            TaskKind::ForwardPrediction => "forward",
            TaskKind::ForbiddenFeatures { .. } => "forbidden",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::ForwardPrediction => f.write_str("forward"),
            TaskKind::ForbiddenFeatures { feature } => write!(f, "forbidden(x{})", feature + 1),
        }
    }
}

/// Ground truth for forward prediction: the function's own output.
pub fn label_forward(f: &GroundTruth, x: &[f64]) -> Result<u8> {
    f.predict(x)
}

/// Ground truth for forbidden features: 1 when the function's local rule
/// uses feature `d`.
pub fn label_forbidden(f: &GroundTruth, x: &[f64], d: usize) -> Result<u8> {
    Ok(u8::from(f.uses_feature(x, d)?))
}

pub fn label(task: &TaskKind, f: &GroundTruth, x: &[f64]) -> Result<u8> {
    match task {
        TaskKind::ForwardPrediction => label_forward(f, x),
        TaskKind::ForbiddenFeatures { feature } => label_forbidden(f, x, *feature),
    }
}

/// How close to the decision boundary a training point must be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMargins {
    /// Coordinate distance to the box threshold or to a region cut.
    pub delta: f64,
    /// Magnitude of the piecewise function's linear score.
    pub score: f64,
}

/// Distance from `x` along the switch feature to the nearest region cut at
/// which the prediction changes, if any.
fn flipping_cut_distance(f: &GroundTruth, x: &[f64]) -> Option<f64> {
    let s = f.switch_feature();
    let here = f.predict_unchecked(x);
    let mut moved = x.to_vec();
    f.cuts()
        .iter()
        .filter_map(|&c| {
            moved[s] = if x[s] <= c { next_up(c) } else { c };
            (f.predict_unchecked(&moved) != here).then(|| (x[s] - c).abs())
        })
        .min_by(f64::total_cmp)
}

fn next_up(v: f64) -> f64 {
    f64::from_bits(v.to_bits() + 1)
}

/// Whether `x` lies within the margins of the function's decision boundary.
///
/// Region cuts only count where crossing them changes the prediction; a cut
/// between two regions that agree at `x` is not part of the boundary.
pub fn near_boundary(f: &GroundTruth, x: &[f64], margins: &BoundaryMargins) -> bool {
    if flipping_cut_distance(f, x).is_some_and(|d| d <= margins.delta) {
        return true;
    }
    match f {
        GroundTruth::Box(b) => (x[b.active_feature(x)] - b.threshold()).abs() <= margins.delta,
        GroundTruth::Piece(_) => {
            let row = f
                .region_of(x)
                .ok()
                .and_then(|r| r.active_weights)
                .unwrap_or_else(|| Attribution::zeros(x.len()));
            dot_unchecked(x, &row).abs() <= margins.score
        }
    }
}

/// Rejection-samples `n` uniform points near the decision boundary.
///
/// For forbidden features, when both labels occur anywhere in the cube, the
/// sample is forced to contain at least one point of each label.
pub fn sample_training_points<R: Rng + ?Sized>(
    f: &GroundTruth,
    task: &TaskKind,
    n: usize,
    margins: &BoundaryMargins,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::usage("need at least one training point"));
    }
    if !(margins.delta > 0.0) || !(margins.score > 0.0) {
        return Err(Error::config("boundary margins must be positive"));
    }
    let need_both = matches!(task, TaskKind::ForbiddenFeatures { .. }) && n >= 2 && {
        let mut seen = [false; 2];
        for _ in 0..4000 {
            seen[label(task, f, &uniform_cube(rng, f.dim()))? as usize] = true;
        }
        seen[0] && seen[1]
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut counts = [0usize; 2];
    let mut attempts: u64 = 0;
    while out.len() < n {
        attempts += 1;
        if attempts % 100_000 == 0 && (out.len() as f64 + 1.0) / (attempts as f64) < 1e-4 {
            return Err(Error::config(format!(
                "boundary acceptance rate below 1e-4 (delta {}, score {})",
                margins.delta, margins.score
            )));
        }
        let x = uniform_cube(rng, f.dim());
        if !near_boundary(f, &x, margins) {
            continue;
        }
        let y = label(task, f, &x)? as usize;
        let last_slot = out.len() + 1 == n;
        if need_both && last_slot && counts[1 - y] == 0 {
            continue;
        }
        counts[y] += 1;
        out.push(x);
    }
    Ok(out)
}

/// Uniform points that are not near the decision boundary.
pub fn sample_easy_points<R: Rng + ?Sized>(
    f: &GroundTruth,
    n: usize,
    margins: &BoundaryMargins,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = uniform_cube(rng, f.dim());
        if !near_boundary(f, &x, margins) {
            out.push(x);
        }
    }
    out
}

/// Where a task instance came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub function: FunctionId,
    pub kind: ExplainerKind,
    pub seed: u64,
}

/// One point prepared for a proxy or a participant.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub x: Vec<f64>,
    pub attribution: Attribution,
    pub human: HumanInput,
    pub label: u8,
    pub provenance: Provenance,
}

pub fn make_instances(
    explainers: &Explainers,
    function: FunctionId,
    kind: ExplainerKind,
    memory: MemoryModel,
    task: &TaskKind,
    points: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<TaskInstance>> {
    let f = explainers.function();
    points
        .iter()
        .map(|x| {
            let attribution = explainers.explain(kind, x)?;
            let human = build_human_input(task, x, &attribution, f, memory)?;
            Ok(TaskInstance {
                x: x.clone(),
                label: label(task, f, x)?,
                attribution,
                human,
                provenance: Provenance { function, kind, seed },
            })
        })
        .collect()
}

/// How the designated best explanation's proxy fared on a test point
/// relative to the other proxies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestCategory {
    /// Every proxy was right, or every proxy was wrong.
    Same,
    /// The best kind was right and some other kind was wrong.
    BestBetter,
    /// The best kind was wrong and some other kind was right.
    BestWorse,
}

impl TestCategory {
    pub const ALL: [TestCategory; 3] = [TestCategory::Same, TestCategory::BestBetter, TestCategory::BestWorse];

    pub fn as_str(self) -> &'static str {
        match self {
            TestCategory::Same => "same",
            TestCategory::BestBetter => "best_better",
            TestCategory::BestWorse => "best_worse",
        }
    }
}

impl fmt::Display for TestCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "same" => Ok(TestCategory::Same),
            "best_better" => Ok(TestCategory::BestBetter),
            "best_worse" => Ok(TestCategory::BestWorse),
            other => Err(Error::config(format!("unknown test category `{other}`"))),
        }
    }
}

/// Categorizes each candidate point from per-kind proxy correctness.
pub fn categorize_test_points(
    correct: &BTreeMap<ExplainerKind, Vec<bool>>,
    best: ExplainerKind,
) -> Result<Vec<TestCategory>> {
    let best_row = correct
        .get(&best)
        .ok_or_else(|| Error::usage(format!("no proxy for best kind {best}")))?;
    if correct.len() < 2 {
        return Err(Error::usage("categorization needs at least two explainer kinds"));
    }
    if correct.values().any(|v| v.len() != best_row.len()) {
        return Err(Error::usage("every kind needs one verdict per point"));
    }
    Ok((0..best_row.len())
        .map(|i| {
            let b = best_row[i];
            let all_agree = correct.values().all(|v| v[i] == b);
            match (all_agree, b) {
                (true, _) => TestCategory::Same,
                (false, true) => TestCategory::BestBetter,
                (false, false) => TestCategory::BestWorse,
            }
        })
        .collect())
}

/// Draws `per_category` points from each category without replacement and
/// returns `(candidate index, category)` in shuffled order.
pub fn select_study_test_set<R: Rng + ?Sized>(
    categories: &[TestCategory],
    per_category: usize,
    rng: &mut R,
) -> Result<Vec<(usize, TestCategory)>> {
    let pools: Vec<Vec<usize>> = TestCategory::ALL
        .iter()
        .map(|c| (0..categories.len()).filter(|i| categories[*i] == *c).collect())
        .collect();
    if pools.iter().any(|p| p.len() < per_category) {
        return Err(Error::InsufficientCandidates {
            needed: per_category,
            same: pools[0].len(),
            best_better: pools[1].len(),
            best_worse: pools[2].len(),
        });
    }
    let mut out = Vec::with_capacity(3 * per_category);
    for (pool, cat) in pools.iter().zip(TestCategory::ALL) {
        out.extend(pool.choose_multiple(rng, per_category).map(|i| (*i, cat)));
    }
    out.shuffle(rng);
    Ok(out)
}
