//! Ground-truth classifiers with region, active-weight and feature-usage
//! oracles.
//!
//! Both functions partition the cube by cut points on a single switch
//! feature. Regions are upper-inclusive intervals, so a value equal to a cut
//! belongs to the lower region. Feature indices in this API are 0-based; the
//! definition file uses 1-based indices.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot_unchecked, Attribution};

/// Definitions shipped with the crate.
pub const BUILTIN_DEFINITIONS: &str = include_str!("../data/ground_truth_v1.txt");

/// Identifies one of the two built-in functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionId {
    Box,
    Piece,
}

impl FunctionId {
    pub const ALL: [FunctionId; 2] = [FunctionId::Box, FunctionId::Piece];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionId::Box => "box",
            FunctionId::Piece => "piece",
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box" => Ok(FunctionId::Box),
            "piece" | "piecewise" => Ok(FunctionId::Piece),
            other => Err(Error::config(format!("unknown function `{other}`"))),
        }
    }
}

/// Index of the upper-inclusive interval containing `v`.
fn interval_index(cuts: &[f64], v: f64) -> usize {
    cuts.iter().filter(|c| v > **c).count()
}

/// Step function whose region picks which feature is compared to a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxFunction {
    dim: usize,
    switch: usize,
    cuts: Vec<f64>,
    threshold: f64,
    active: Vec<usize>,
}

impl BoxFunction {
    pub fn new(dim: usize, switch: usize, cuts: Vec<f64>, threshold: f64, active: Vec<usize>) -> Result<Self> {
        if switch >= dim || active.iter().any(|a| *a >= dim) {
            return Err(Error::config("box feature index out of range"));
        }
        if active.len() != cuts.len() + 1 {
            return Err(Error::config("box needs one active feature per region"));
        }
        check_cuts(&cuts)?;
        Ok(Self {
            dim,
            switch,
            cuts,
            threshold,
            active,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// 0-based active feature of the region containing `x`.
    pub fn active_feature(&self, x: &[f64]) -> usize {
        self.active[interval_index(&self.cuts, x[self.switch])]
    }
}

/// Piecewise linear classifier: the switch feature selects a row of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFunction {
    dim: usize,
    switch: usize,
    cuts: Vec<f64>,
    rows: Vec<Attribution>,
}

impl PiecewiseFunction {
    /// `rows` hold one local linear rule per region; row `i` applies to
    /// region `i` of the cut partition on `switch`.
    pub fn new(dim: usize, switch: usize, cuts: Vec<f64>, rows: Vec<Attribution>) -> Result<Self> {
        if switch >= dim {
            return Err(Error::config("switch feature out of range"));
        }
        if rows.len() != cuts.len() + 1 {
            return Err(Error::config("piecewise function needs one row per region"));
        }
        if rows.iter().any(|r| r.dim() != dim) {
            return Err(Error::config("every row needs one weight per feature"));
        }
        check_cuts(&cuts)?;
        Ok(Self {
            dim,
            switch,
            cuts,
            rows,
        })
    }

    pub fn rows(&self) -> &[Attribution] {
        &self.rows
    }

    fn row_for(&self, x: &[f64]) -> &Attribution {
        &self.rows[interval_index(&self.cuts, x[self.switch])]
    }
}

fn check_cuts(cuts: &[f64]) -> Result<()> {
    if cuts.windows(2).any(|w| w[0] >= w[1]) || cuts.iter().any(|c| !c.is_finite()) {
        return Err(Error::config("cuts must be finite and strictly increasing"));
    }
    Ok(())
}

/// Region membership and local structure at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionInfo {
    /// 1-based region index.
    pub region: usize,
    /// The exact local linear rule, when the function has one.
    pub active_weights: Option<Attribution>,
    /// 0-based features with nonzero local influence.
    pub active_features: Vec<usize>,
}

/// A ground-truth classifier with oracle access.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Box(BoxFunction),
    Piece(PiecewiseFunction),
}

impl GroundTruth {
    /// One of the built-in functions, parsed once from the shipped file.
    pub fn builtin(id: FunctionId) -> GroundTruth {
        static DEFS: OnceLock<Definitions> = OnceLock::new();
        let defs = DEFS.get_or_init(|| {
            Definitions::parse(BUILTIN_DEFINITIONS, "ground_truth_v1.txt").expect("shipped definitions parse")
        });
        match id {
            FunctionId::Box => GroundTruth::Box(defs.box_fn.clone()),
            FunctionId::Piece => GroundTruth::Piece(defs.piece.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GroundTruth::Box(b) => b.dim,
            GroundTruth::Piece(p) => p.dim,
        }
    }

    /// 0-based feature whose value selects the region.
    pub fn switch_feature(&self) -> usize {
        match self {
            GroundTruth::Box(b) => b.switch,
            GroundTruth::Piece(p) => p.switch,
        }
    }

    pub fn cuts(&self) -> &[f64] {
        match self {
            GroundTruth::Box(b) => &b.cuts,
            GroundTruth::Piece(p) => &p.cuts,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::usage(format!(
                "expected {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Class label in {0, 1}.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> u8 {
        match self {
            GroundTruth::Box(b) => u8::from(x[b.active_feature(x)] > b.threshold),
            GroundTruth::Piece(p) => u8::from(dot_unchecked(x, p.row_for(x)) > 0.0),
        }
    }

    pub fn region_of(&self, x: &[f64]) -> Result<RegionInfo> {
        self.check_dim(x)?;
        let region = interval_index(self.cuts(), x[self.switch_feature()]) + 1;
        Ok(match self {
            GroundTruth::Box(b) => RegionInfo {
                region,
                active_weights: None,
                active_features: vec![b.active[region - 1]],
            },
            GroundTruth::Piece(p) => {
                let row = p.rows[region - 1].clone();
                let active_features = row
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(d, _)| d)
                    .collect();
                RegionInfo {
                    region,
                    active_weights: Some(row),
                    active_features,
                }
            }
        })
    }

    /// Whether the function's local rule at `x` uses feature `d` (0-based).
    ///
    /// The box function always uses its switch feature, since that feature
    /// decides which comparison applies.
    pub fn uses_feature(&self, x: &[f64], d: usize) -> Result<bool> {
        self.check_dim(x)?;
        if d >= self.dim() {
            return Err(Error::usage(format!(
                "feature index {d} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(match self {
            GroundTruth::Box(b) => d == b.switch || d == b.active_feature(x),
            GroundTruth::Piece(p) => p.row_for(x).weights[d] != 0.0,
        })
    }
}

/// The two function definitions read from a definition file.
#[derive(Debug, Clone, PartialEq)]
pub struct Definitions {
    pub box_fn: BoxFunction,
    pub piece: PiecewiseFunction,
}

impl Definitions {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the line-oriented definition format (`key values...`, `#`
    /// comments, 1-based feature indices).
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut version = None;
        let mut fields: std::collections::HashMap<&str, (usize, Vec<f64>)> = Default::default();
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let nums = parts
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| perr(line_no, format!("`{t}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            match key {
                "version" => version = nums.first().copied(),
                "piece.row" => rows.push((line_no, nums)),
                "box.dim" | "box.switch" | "box.cuts" | "box.threshold" | "box.active" | "piece.dim"
                | "piece.switch" | "piece.cuts" => {
                    fields.insert(key, (line_no, nums));
                }
                other => return Err(perr(line_no, format!("unknown key `{other}`"))),
            }
        }
        if version != Some(1.0) {
            return Err(perr(1, "expected `version 1`".into()));
        }
        let get = |key: &str| {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| perr(0, format!("missing `{key}`")))
        };
        let index = |(line, v): (usize, Vec<f64>)| -> Result<Vec<usize>> {
            v.iter()
                .map(|x| {
                    if *x >= 1.0 && x.fract() == 0.0 {
                        Ok(*x as usize - 1)
                    } else {
                        Err(perr(line, format!("`{x}` is not a 1-based index")))
                    }
                })
                .collect()
        };
        let scalar = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            match index((line, v))?.as_slice() {
                [i] => Ok(*i),
                _ => Err(perr(line, format!("`{key}` takes one value"))),
            }
        };
        let box_dim = scalar("box.dim")? + 1;
        let (tl, tv) = get("box.threshold")?;
        let threshold = *tv.first().ok_or_else(|| perr(tl, "missing threshold value".into()))?;
        let box_fn = BoxFunction::new(
            box_dim,
            scalar("box.switch")?,
            get("box.cuts")?.1,
            threshold,
            index(get("box.active")?)?,
        )?;
        let piece_dim = scalar("piece.dim")? + 1;
        let rows = rows
            .into_iter()
            .map(|(line, v)| {
                if v.len() != piece_dim + 1 {
                    return Err(perr(
                        line,
                        format!("row has {} entries, expected {}", v.len(), piece_dim + 1),
                    ));
                }
                Attribution::from_entries(&v)
            })
            .collect::<Result<Vec<_>>>()?;
        let piece = PiecewiseFunction::new(piece_dim, scalar("piece.switch")?, get("piece.cuts")?.1, rows)?;
        Ok(Self { box_fn, piece })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece_at(x1: f64) -> Vec<f64> {
        let mut x = vec![0.0; 10];
        x[0] = x1;
        x
    }

    #[test]
    fn box_examples() {
        let f = GroundTruth::builtin(FunctionId::Box);
        assert_eq!(f.predict(&[0.6, 0.3, 0.1]).unwrap(), 0);
        assert_eq!(f.predict(&[0.6, 0.3, 0.3]).unwrap(), 1);
        assert_eq!(f.predict(&[0.4, 0.9, 0.8]).unwrap(), 0);
        assert!(f.predict(&[0.1, 0.2]).is_err());
        assert_eq!(f.region_of(&[0.0, 0.0, 0.25]).unwrap().region, 1);
        assert_eq!(f.region_of(&[0.0, 0.0, 0.2500001]).unwrap().region, 2);
        assert!(f.region_of(&[0.0, 0.0, 0.9]).unwrap().active_weights.is_none());
    }

    #[test]
    fn piece_examples() {
        let f = GroundTruth::builtin(FunctionId::Piece);
        assert_eq!(f.predict(&piece_at(0.3)).unwrap(), 1);
        assert_eq!(f.predict(&piece_at(0.1)).unwrap(), 0);
        assert_eq!(f.predict(&piece_at(0.9)).unwrap(), 0);
        let r = f.region_of(&piece_at(0.6)).unwrap();
        assert_eq!(r.region, 3);
        assert_eq!(
            r.active_weights.unwrap().entries(),
            vec![0.0, -0.8, -0.2, 0.0, 0.1, -0.9, -0.1, -0.1, 0.1, -0.2, 1.0]
        );
        assert_eq!(f.region_of(&piece_at(0.75)).unwrap().region, 3);
    }

    #[test]
    fn uses_feature_examples() {
        let piece = GroundTruth::builtin(FunctionId::Piece);
        assert!(piece.uses_feature(&piece_at(0.3), 3).unwrap());
        assert!(!piece.uses_feature(&piece_at(0.1), 3).unwrap());
        assert!(piece.uses_feature(&piece_at(0.1), 10).is_err());
        let bx = GroundTruth::builtin(FunctionId::Box);
        assert!(bx.uses_feature(&[0.9, 0.9, 0.9], 2).unwrap());
        assert!(bx.uses_feature(&[0.9, 0.9, 0.1], 1).unwrap());
        assert!(!bx.uses_feature(&[0.9, 0.9, 0.1], 0).unwrap());
    }

    #[test]
    fn definitions_report_line_numbers() {
        let bad = BUILTIN_DEFINITIONS.replace("piece.row 0 -0.05", "piece.row zero -0.05");
        match Definitions::parse(&bad, "t") {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let short = BUILTIN_DEFINITIONS.replace("-0.2 1\n", "-0.2\n");
        assert!(Definitions::parse(&short, "t").is_err());
    }

    #[test]
    fn function_ids_parse() {
        assert_eq!("Box".parse::<FunctionId>().unwrap(), FunctionId::Box);
        assert_eq!("piece".parse::<FunctionId>().unwrap(), FunctionId::Piece);
        assert!("cube".parse::<FunctionId>().is_err());
    }
}
