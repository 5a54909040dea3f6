//! Property-optimized explanations for a known ground-truth function.
//!
//! Where the function has an exact local linear rule (the piecewise
//! function) the faithful explanation is that rule. Where it does not (the
//! box function) it is a least-squares linear fit of the ±1-coded labels in a
//! small ball around the query point. Fitted attributions are scaled so their
//! largest entry has magnitude 1 and then rounded to one significant figure.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::GroundTruth;
use crate::numeric::{round_sig_finite, Attribution, RngStream};
use crate::sampling::{in_cube, offset, uniform_cube, unit_ball};

/// The four explanation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    Faithful,
    Robust,
    Sparse,
    SparseRobust,
}

impl ExplainerKind {
    pub const ALL: [ExplainerKind; 4] = [
        ExplainerKind::Faithful,
        ExplainerKind::Robust,
        ExplainerKind::Sparse,
        ExplainerKind::SparseRobust,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplainerKind::Faithful => "faithful",
            ExplainerKind::Robust => "robust",
            ExplainerKind::Sparse => "sparse",
            ExplainerKind::SparseRobust => "sparse_robust",
        }
    }

    /// Constant explainers return the same attribution everywhere.
    pub fn is_constant(self) -> bool {
        matches!(self, ExplainerKind::Robust | ExplainerKind::SparseRobust)
    }
}

impl fmt::Display for ExplainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['+', '-'], "_").as_str() {
            "faithful" => Ok(ExplainerKind::Faithful),
            "robust" => Ok(ExplainerKind::Robust),
            "sparse" => Ok(ExplainerKind::Sparse),
            "sparse_robust" => Ok(ExplainerKind::SparseRobust),
            other => Err(Error::config(format!("unknown explainer kind `{other}`"))),
        }
    }
}

/// Sample budgets and radius for the least-squares fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalFitConfig {
    /// Initial radius of the local fitting ball. It doubles until the ball
    /// contains both labels.
    pub radius: f64,
    /// Points per local fit.
    pub n_samples: usize,
    /// Uniform points for the global (constant) fits.
    pub global_samples: usize,
}

impl Default for LocalFitConfig {
    fn default() -> Self {
        Self {
            radius: 0.1,
            n_samples: 1000,
            global_samples: 20_000,
        }
    }
}

impl LocalFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.n_samples == 0 || self.global_samples == 0 {
            return Err(Error::config("local fit settings must all be positive"));
        }
        Ok(())
    }
}

/// Explainers for one function. Global fits happen at construction; every
/// query afterwards is a pure function of the input point.
#[derive(Debug, Clone)]
pub struct Explainers {
    f: GroundTruth,
    cfg: LocalFitConfig,
    /// Shared unit-ball offsets for local fits. Reusing them at every query
    /// makes fitted attributions a deterministic, piecewise-constant
    /// function of the input.
    offsets: Vec<Vec<f64>>,
    robust: Attribution,
    sparse_robust: Attribution,
}

impl Explainers {
    pub fn new(f: GroundTruth, cfg: LocalFitConfig, stream: &RngStream) -> Result<Self> {
        cfg.validate()?;
        let dim = f.dim();
        let mut rng = stream.substream("local-offsets").rng();
        let offsets = (0..cfg.n_samples * 16).map(|_| unit_ball(&mut rng, dim)).collect();
        let mut rng = stream.substream("global-fit").rng();
        let points: Vec<Vec<f64>> = (0..cfg.global_samples).map(|_| uniform_cube(&mut rng, dim)).collect();
        let labels: Vec<u8> = points.iter().map(|p| f.predict_unchecked(p)).collect();
        let (robust, sparse_robust) = match fit_dense_and_sparse(&points, &labels) {
            Some((dense, sparse)) => (finalize(&dense), finalize(&sparse)),
            None => {
                let c = constant_fit(dim, labels[0]);
                (c.clone(), c)
            }
        };
        Ok(Self {
            f,
            cfg,
            offsets,
            robust,
            sparse_robust,
        })
    }

    pub fn function(&self) -> &GroundTruth {
        &self.f
    }

    pub fn config(&self) -> &LocalFitConfig {
        &self.cfg
    }

    /// The exact local rule when available, otherwise a rounded local fit.
    pub fn faithful(&self, x: &[f64]) -> Result<Attribution> {
        let info = self.f.region_of(x)?;
        if let Some(row) = info.active_weights {
            return Ok(row);
        }
        Ok(match self.local_fit(x) {
            Some((dense, _)) => finalize(&dense),
            None => constant_fit(x.len(), self.f.predict_unchecked(x)),
        })
    }

    /// One global fit, identical at every query point.
    pub fn robust(&self) -> &Attribution {
        &self.robust
    }

    /// Largest-magnitude feature plus intercept.
    ///
    /// With an exact local rule this keeps that feature's weight and the
    /// rule's intercept unchanged. Otherwise the local fit is redone on the
    /// two-entry support.
    pub fn sparse(&self, x: &[f64]) -> Result<Attribution> {
        let info = self.f.region_of(x)?;
        if let Some(row) = info.active_weights {
            let mut out = Attribution::zeros(row.dim());
            if let Some(j) = argmax_abs(&row.weights) {
                out.weights[j] = row.weights[j];
            }
            out.intercept = row.intercept;
            return Ok(out);
        }
        Ok(match self.local_fit(x) {
            Some((_, sparse)) => finalize(&sparse),
            None => constant_fit(x.len(), self.f.predict_unchecked(x)),
        })
    }

    /// The global fit restricted to its largest feature plus intercept.
    pub fn sparse_robust(&self) -> &Attribution {
        &self.sparse_robust
    }

    pub fn explain(&self, kind: ExplainerKind, x: &[f64]) -> Result<Attribution> {
        match kind {
            ExplainerKind::Faithful => self.faithful(x),
            ExplainerKind::Robust => {
                self.f.region_of(x)?;
                Ok(self.robust.clone())
            }
            ExplainerKind::Sparse => self.sparse(x),
            ExplainerKind::SparseRobust => {
                self.f.region_of(x)?;
                Ok(self.sparse_robust.clone())
            }
        }
    }

    /// Dense and sparse least-squares fits in the smallest doubled ball that
    /// contains both labels, or `None` if even a ball covering the cube is
    /// single-labelled.
    fn local_fit(&self, x: &[f64]) -> Option<(Attribution, Attribution)> {
        let dim = x.len();
        let cover = (dim as f64).sqrt();
        let mut radius = self.cfg.radius;
        loop {
            let points: Vec<Vec<f64>> = self
                .offsets
                .iter()
                .map(|o| offset(x, o, radius))
                .filter(|p| in_cube(p))
                .take(self.cfg.n_samples)
                .collect();
            if points.len() > dim {
                let labels: Vec<u8> = points.iter().map(|p| self.f.predict_unchecked(p)).collect();
                if let Some(fits) = fit_dense_and_sparse(&points, &labels) {
                    return Some(fits);
                }
            }
            if radius >= cover {
                return None;
            }
            radius *= 2.0;
        }
    }
}

fn argmax_abs(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, a) in v.iter().enumerate() {
        if *a != 0.0 && best.is_none_or(|b| a.abs() > v[b].abs()) {
            best = Some(i);
        }
    }
    best
}

fn constant_fit(dim: usize, label: u8) -> Attribution {
    Attribution {
        weights: vec![0.0; dim],
        intercept: f64::from(label),
    }
}

/// Scales to unit max magnitude, then rounds every entry to one figure.
fn finalize(raw: &Attribution) -> Attribution {
    let m = raw
        .weights
        .iter()
        .chain(std::iter::once(&raw.intercept))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return raw.clone();
    }
    Attribution {
        weights: raw.weights.iter().map(|w| round_sig_finite(w / m, 1)).collect(),
        intercept: round_sig_finite(raw.intercept / m, 1),
    }
}

/// Least-squares fit of ±1-coded labels on all features, then on the
/// dominant feature alone. `None` when the labels are all equal.
fn fit_dense_and_sparse(points: &[Vec<f64>], labels: &[u8]) -> Option<(Attribution, Attribution)> {
    if labels.iter().all(|l| *l == labels[0]) {
        return None;
    }
    let dim = points[0].len();
    let dense = least_squares(points, labels, &(0..dim).collect::<Vec<_>>());
    let sparse = match argmax_abs(&dense.weights) {
        Some(j) => least_squares(points, labels, &[j]),
        None => Attribution {
            weights: vec![0.0; dim],
            intercept: dense.intercept,
        },
    };
    Some((dense, sparse))
}

/// Minimum-norm least squares over the given feature columns plus an
/// intercept column, via the normal equations.
fn least_squares(points: &[Vec<f64>], labels: &[u8], support: &[usize]) -> Attribution {
    let k = support.len() + 1;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for (p, l) in points.iter().zip(labels) {
        for (slot, &d) in row.iter_mut().zip(support) {
            *slot = p[d];
        }
        row[k - 1] = 1.0;
        let t = if *l == 1 { 1.0 } else { -1.0 };
        for i in 0..k {
            rhs[i] += row[i] * t;
            for j in 0..k {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    let coef = gram
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(k));
    let dim = points[0].len();
    let mut out = Attribution::zeros(dim);
    for (i, &d) in support.iter().enumerate() {
        out.weights[d] = coef[i];
    }
    out.intercept = coef[k - 1];
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::FunctionId;
    use crate::properties::sparsity;

    fn explainers(id: FunctionId) -> Explainers {
        let cfg = LocalFitConfig {
            n_samples: 400,
            global_samples: 4000,
            ..LocalFitConfig::default()
        };
        Explainers::new(GroundTruth::builtin(id), cfg, &RngStream::new(5, "e")).unwrap()
    }

    #[test]
    fn piece_faithful_is_the_exact_row() {
        let ex = explainers(FunctionId::Piece);
        let mut x = vec![0.3; 10];
        x[0] = 0.6;
        assert_eq!(
            ex.faithful(&x).unwrap().entries(),
            vec![0.0, -0.8, -0.2, 0.0, 0.1, -0.9, -0.1, -0.1, 0.1, -0.2, 1.0]
        );
        x[0] = 0.1;
        assert_eq!(
            ex.faithful(&x).unwrap().entries(),
            vec![0.0, 1.0, -1.0, 0.0, 1.0, -0.1, 0.1, -0.1, 0.1, -0.1, -0.7]
        );
    }

    #[test]
    fn piece_sparse_keeps_top_feature_and_intercept() {
        let ex = explainers(FunctionId::Piece);
        let mut x = vec![0.3; 10];
        x[0] = 0.6;
        let s = ex.sparse(&x).unwrap();
        assert_eq!(sparsity(&s), 2);
        assert_eq!(s.weights[5], -0.9);
        assert_eq!(s.intercept, 1.0);
    }

    #[test]
    fn box_deep_interior_has_dominant_active_feature() {
        let ex = explainers(FunctionId::Box);
        // Region 2 uses x1; the point sits on the x1 boundary, away from cuts.
        let e = ex.faithful(&[0.5, 0.9, 0.375]).unwrap();
        assert_eq!(e.weights[0], 1.0);
        assert!(e.weights[1].abs() < 0.2 && e.weights[2].abs() < 0.2);
        let s = ex.sparse(&[0.5, 0.9, 0.375]).unwrap();
        assert_eq!(sparsity(&s), 2);
        assert_eq!(s.weights[0], 1.0);
        assert_eq!(s.intercept, -0.5);
    }

    #[test]
    fn constant_kinds_do_not_depend_on_the_input() {
        let ex = explainers(FunctionId::Box);
        for kind in [ExplainerKind::Robust, ExplainerKind::SparseRobust] {
            let a = ex.explain(kind, &[0.1, 0.2, 0.3]).unwrap();
            let b = ex.explain(kind, &[0.9, 0.8, 0.7]).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(sparsity(ex.sparse_robust()), 2);
    }

    #[test]
    fn constant_function_gives_constant_fits() {
        let always = crate::functions::PiecewiseFunction::new(
            2,
            0,
            vec![],
            vec![Attribution::new(vec![0.0, 0.0], 1.0).unwrap()],
        )
        .unwrap();
        let ex = Explainers::new(
            GroundTruth::Piece(always),
            LocalFitConfig {
                n_samples: 50,
                global_samples: 100,
                ..Default::default()
            },
            &RngStream::new(1, "c"),
        )
        .unwrap();
        assert_eq!(ex.robust().entries(), vec![0.0, 0.0, 1.0]);
        assert_eq!(ex.sparse_robust().entries(), vec![0.0, 0.0, 1.0]);
        assert!(sparsity(&ex.sparse(&[0.5, 0.5]).unwrap()) <= 1);
    }

    #[test]
    fn kinds_round_trip_through_text() {
        for k in ExplainerKind::ALL {
            assert_eq!(k.as_str().parse::<ExplainerKind>().unwrap(), k);
        }
        assert_eq!(
            "sparse+robust".parse::<ExplainerKind>().unwrap(),
            ExplainerKind::SparseRobust
        );
    }
}
