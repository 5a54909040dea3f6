//! The computational stand-in for a person: memory-limited preprocessing of
//! what the person sees, and a depth-limited decision tree trained on a
//! handful of examples.
//!
//! # Human-input layout
//!
//! For a function of dimension `D` the feature vector is
//!
//! | indices          | content                                           |
//! |------------------|---------------------------------------------------|
//! | `0`              | rounded inner product of `x` and the attribution  |
//! | `1..=D`          | rounded input `x`                                 |
//! | `D+1..=2D`       | rounded attribution weights                       |
//! | `2D+1`           | rounded attribution intercept                     |
//! | `2D+2`           | `f(x)` (forbidden-features task only)             |
//! | `2D+3`           | magnitude of the forbidden feature's rounded weight (forbidden-features task only) |
//!
//! The inner product comes first because split ties go to the lowest
//! feature index. With ten training points a raw measurement often
//! separates the sample as cleanly as the explanation-derived feature does,
//! and the tie should not be settled in the measurement's favor by column
//! order alone.
//!
//! # Tree text format
//!
//! Trees print as nested s-expressions: `(leaf 1)` or
//! `(split <feature> <threshold> <left> <right>)`, where rows with
//! `value <= threshold` go left. Thresholds use Rust's shortest round-trip
//! float formatting, so parsing a printed tree restores it exactly.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::GroundTruth;
use crate::numeric::{round_sig_finite, Attribution};
use crate::tasks::TaskKind;

/// How much of the attribution a person can use for mental arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryKind {
    /// Only the two largest-magnitude attribution entries enter the inner
    /// product. The intercept competes with the weights for those slots.
    Limited,
    /// Every weight and the intercept enter the inner product.
    Unlimited,
}

impl MemoryKind {
    pub const ALL: [MemoryKind; 2] = [MemoryKind::Limited, MemoryKind::Unlimited];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::Limited => "limited",
            MemoryKind::Unlimited => "unlimited",
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "limited" => Ok(MemoryKind::Limited),
            "unlimited" => Ok(MemoryKind::Unlimited),
            other => Err(Error::config(format!("unknown memory model `{other}`"))),
        }
    }
}

/// Memory model plus the number of significant figures a person keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub kind: MemoryKind,
    pub sig_figures: u32,
}

impl MemoryModel {
    pub fn new(kind: MemoryKind) -> Self {
        Self { kind, sig_figures: 1 }
    }
}

/// The preprocessed feature vector a proxy human decides on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanInput {
    pub values: Vec<f64>,
    /// Dimension of the underlying function input.
    pub dim: usize,
    /// Whether the forbidden-features extras are appended.
    pub has_task_extras: bool,
}

impl HumanInput {
    /// Index of the inner-product feature.
    pub const INNER_PRODUCT: usize = 0;

    pub fn inner_product(&self) -> f64 {
        self.values[Self::INNER_PRODUCT]
    }
}

/// Indices of the two largest-magnitude entries, lowest index first on ties.
fn top_two(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|a, b| {
        weights[*b]
            .abs()
            .partial_cmp(&weights[*a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    });
    idx.truncate(2);
    idx
}

/// Builds the human input for one point.
///
/// Every entry is rounded to the memory model's significant figures. The
/// inner product is computed from the rounded values. Under limited memory
/// only the two largest-magnitude attribution entries take part, and the
/// intercept counts as an entry like any weight, so a two-entry explanation
/// fits in memory whole while a dense one is truncated.
pub fn build_human_input(
    task: &TaskKind,
    x: &[f64],
    attribution: &Attribution,
    f: &GroundTruth,
    memory: MemoryModel,
) -> Result<HumanInput> {
    let dim = f.dim();
    if x.len() != dim || attribution.dim() != dim {
        return Err(Error::usage(format!(
            "human input needs {dim} features and {dim} weights, got {} and {}",
            x.len(),
            attribution.dim()
        )));
    }
    if memory.sig_figures == 0 {
        return Err(Error::usage("memory model needs at least one significant figure"));
    }
    let k = memory.sig_figures;
    let xr: Vec<f64> = x.iter().map(|v| round_sig_finite(*v, k)).collect();
    let er = attribution.rounded(k);
    // The intercept pairs with a constant input of 1.
    let entries = er.entries();
    let used: Vec<usize> = match memory.kind {
        MemoryKind::Unlimited => (0..=dim).collect(),
        MemoryKind::Limited => top_two(&entries),
    };
    let ip: f64 = used
        .iter()
        .map(|&d| entries[d] * if d == dim { 1.0 } else { xr[d] })
        .sum();
    let mut values = Vec::with_capacity(2 * dim + 4);
    values.push(round_sig_finite(ip, k));
    values.extend_from_slice(&xr);
    values.extend_from_slice(&entries);
    let has_task_extras = match task {
        TaskKind::ForwardPrediction => false,
        TaskKind::ForbiddenFeatures { feature } => {
            if *feature >= dim {
                return Err(Error::usage(format!("forbidden feature {feature} out of range")));
            }
            values.push(f64::from(f.predict_unchecked(x)));
            values.push(er.weights[*feature].abs());
            true
        }
    };
    Ok(HumanInput {
        values,
        dim,
        has_task_extras,
    })
}

/// A binary decision tree over numeric features.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionTree {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<DecisionTree>,
        right: Box<DecisionTree>,
    },
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn internal_nodes(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Split { left, right, .. } => 1 + left.internal_nodes() + right.internal_nodes(),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 1,
            DecisionTree::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Largest feature index referenced by a split.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            DecisionTree::Leaf(_) => None,
            DecisionTree::Split {
                feature, left, right, ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }

    /// Routes left on `value <= threshold`.
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut node = self;
        loop {
            match node {
                DecisionTree::Leaf(y) => return *y,
                DecisionTree::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

impl fmt::Display for DecisionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionTree::Leaf(y) => write!(f, "(leaf {y})"),
            DecisionTree::Split {
                feature,
                threshold,
                left,
                right,
            } => write!(f, "(split {feature} {threshold:?} {left} {right})"),
        }
    }
}

impl FromStr for DecisionTree {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let spaced = s.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut pos = 0;
        let tree = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(tree_err("trailing tokens after tree"));
        }
        Ok(tree)
    }
}

fn tree_err(msg: &str) -> Error {
    Error::Parse {
        source_name: "tree".into(),
        line: 1,
        message: msg.into(),
    }
}

fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<DecisionTree> {
    let mut next = || -> Result<&str> {
        let t = tokens.get(*pos).copied().ok_or_else(|| tree_err("unexpected end"))?;
        *pos += 1;
        Ok(t)
    };
    if next()? != "(" {
        return Err(tree_err("expected `(`"));
    }
    let node = match next()? {
        "leaf" => {
            let y: u8 = next()?.parse().map_err(|_| tree_err("bad leaf label"))?;
            if y > 1 {
                return Err(tree_err("leaf label must be 0 or 1"));
            }
            DecisionTree::Leaf(y)
        }
        "split" => {
            let feature = next()?.parse().map_err(|_| tree_err("bad feature index"))?;
            let threshold: f64 = next()?.parse().map_err(|_| tree_err("bad threshold"))?;
            let left = Box::new(parse_node(tokens, pos)?);
            let right = Box::new(parse_node(tokens, pos)?);
            DecisionTree::Split {
                feature,
                threshold,
                left,
                right,
            }
        }
        _ => return Err(tree_err("expected `leaf` or `split`")),
    };
    if tokens.get(*pos) != Some(&")") {
        return Err(tree_err("expected `)`"));
    }
    *pos += 1;
    Ok(node)
}

/// Weighted Gini impurity of a split, up to a constant factor, kept as an
/// exact fraction so ties are detected without rounding error.
#[derive(Debug, Clone, Copy)]
struct Impurity {
    num: u128,
    den: u128,
}

impl Impurity {
    /// `pos·neg/n` for one node.
    fn node(pos: u64, n: u64) -> Self {
        if n == 0 {
            return Impurity { num: 0, den: 1 };
        }
        Impurity {
            num: u128::from(pos) * u128::from(n - pos),
            den: u128::from(n),
        }
    }

    fn add(self, other: Self) -> Self {
        Impurity {
            num: self.num * other.den + other.num * self.den,
            den: self.den * other.den,
        }
    }

    fn cmp(self, other: Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

fn majority(labels: &[u8], idx: &[usize]) -> u8 {
    let pos = idx.iter().filter(|i| labels[**i] == 1).count();
    u8::from(2 * pos > idx.len())
}

/// Best split by weighted Gini, scanning features in ascending order and
/// thresholds in ascending order so the first minimum wins.
// `feature` indexes columns of every row, not `rows` itself.
#[allow(clippy::needless_range_loop)]
fn best_split(rows: &[Vec<f64>], labels: &[u8], idx: &[usize]) -> Option<(usize, f64, Impurity)> {
    let n_features = rows[idx[0]].len();
    let mut best: Option<(usize, f64, Impurity)> = None;
    let total_pos = idx.iter().filter(|i| labels[**i] == 1).count() as u64;
    let n = idx.len() as u64;
    let mut order = idx.to_vec();
    for feature in 0..n_features {
        order.sort_by(|a, b| rows[*a][feature].total_cmp(&rows[*b][feature]));
        let mut left_pos = 0u64;
        for k in 0..order.len() - 1 {
            left_pos += u64::from(labels[order[k]]);
            let lo = rows[order[k]][feature];
            let hi = rows[order[k + 1]][feature];
            if lo == hi {
                continue;
            }
            let nl = k as u64 + 1;
            let imp = Impurity::node(left_pos, nl).add(Impurity::node(total_pos - left_pos, n - nl));
            if best.is_none_or(|(_, _, b)| imp.cmp(b) == Ordering::Less) {
                best = Some((feature, lo + (hi - lo) / 2.0, imp));
            }
        }
    }
    best
}

fn grow(rows: &[Vec<f64>], labels: &[u8], idx: &[usize], depth_left: usize) -> DecisionTree {
    let pos = idx.iter().filter(|i| labels[**i] == 1).count();
    if depth_left == 0 || pos == 0 || pos == idx.len() {
        return DecisionTree::Leaf(majority(labels, idx));
    }
    match best_split(rows, labels, idx) {
        // Weighted Gini never rises under a split, so any candidate counts as
        // non-worsening; a node stops only when all rows coincide.
        Some((feature, threshold, _)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|i| rows[**i][feature] <= threshold);
            DecisionTree::Split {
                feature,
                threshold,
                left: Box::new(grow(rows, labels, &l, depth_left - 1)),
                right: Box::new(grow(rows, labels, &r, depth_left - 1)),
            }
        }
        None => DecisionTree::Leaf(majority(labels, idx)),
    }
}

/// Greedy Gini induction on raw rows.
///
/// Thresholds are midpoints between consecutive distinct values; ties go to
/// the lowest feature index, then the smallest threshold; leaves take the
/// majority label with ties resolved to 0.
pub fn fit_tree(rows: &[Vec<f64>], labels: &[u8], max_depth: usize) -> Result<DecisionTree> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::usage("training needs at least one row and one label per row"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::usage("training rows have different lengths"));
    }
    if labels.iter().any(|l| *l > 1) {
        return Err(Error::usage("labels must be 0 or 1"));
    }
    let idx: Vec<usize> = (0..rows.len()).collect();
    Ok(grow(rows, labels, &idx, max_depth))
}

/// A trained proxy together with the input width it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyHuman {
    pub tree: DecisionTree,
    pub n_features: usize,
}

/// Trains a proxy on labelled human inputs.
pub fn train_proxy(pairs: &[(HumanInput, u8)], max_depth: usize) -> Result<ProxyHuman> {
    if pairs.is_empty() {
        return Err(Error::usage("cannot train a proxy on an empty set"));
    }
    let rows: Vec<Vec<f64>> = pairs.iter().map(|(h, _)| h.values.clone()).collect();
    let labels: Vec<u8> = pairs.iter().map(|(_, y)| *y).collect();
    Ok(ProxyHuman {
        tree: fit_tree(&rows, &labels, max_depth)?,
        n_features: rows[0].len(),
    })
}

pub fn predict_proxy(proxy: &ProxyHuman, h: &HumanInput) -> Result<u8> {
    if h.values.len() != proxy.n_features {
        return Err(Error::usage(format!(
            "proxy expects {} features, input has {}",
            proxy.n_features,
            h.values.len()
        )));
    }
    Ok(proxy.tree.predict(&h.values))
}

/// Fraction of pairs the proxy labels correctly.
pub fn evaluate_proxy(proxy: &ProxyHuman, pairs: &[(HumanInput, u8)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::usage("cannot evaluate on an empty set"));
    }
    let mut correct = 0usize;
    for (h, y) in pairs {
        if predict_proxy(proxy, h)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}
