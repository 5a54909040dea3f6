//! Explanation property metrics: local stability, local infidelity and
//! sparsity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::GroundTruth;
use crate::numeric::{dot_unchecked, Attribution};
use crate::sampling::{ball_in_cube, radial_in_cube};

/// Perturbation radius and Monte Carlo budget for local stability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub radius: f64,
    pub n_perturbations: usize,
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.n_perturbations == 0 {
            return Err(Error::config(
                "stability radius must be positive and n_perturbations at least 1",
            ));
        }
        Ok(())
    }
}

/// Neighborhood radius and Monte Carlo budget for local infidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfidelityConfig {
    pub radius: f64,
    pub n_samples: usize,
}

impl InfidelityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.n_samples == 0 {
            return Err(Error::config(
                "infidelity radius must be positive and n_samples at least 1",
            ));
        }
        Ok(())
    }
}

/// Largest observed `‖E(x) − E(x′)‖ / ‖x − x′‖` over sampled `x′` within
/// `radius` of `x`.
///
/// Perturbation distances are drawn uniformly in `(0, radius]` so that
/// nearby points, where the ratio peaks, are well represented even in ten
/// dimensions.
pub fn local_stability<E, R>(explain: E, x: &[f64], cfg: &StabilityConfig, rng: &mut R) -> Result<f64>
where
    E: Fn(&[f64]) -> Attribution,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let base = explain(x);
    let mut best = 0.0f64;
    for _ in 0..cfg.n_perturbations {
        let xp = radial_in_cube(rng, x, cfg.radius);
        let dist = xp.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let other = explain(&xp);
        if other.dim() != base.dim() {
            return Err(Error::usage("explainer changed attribution dimension"));
        }
        best = best.max(base.distance(&other) / dist);
    }
    Ok(best)
}

/// Fraction of neighbors `x′` where the thresholded surrogate
/// `I(E·x′ + b > 0)` disagrees with `f(x′)`.
pub fn local_infidelity<R: Rng + ?Sized>(
    explanation: &Attribution,
    f: &GroundTruth,
    x: &[f64],
    cfg: &InfidelityConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if x.len() != f.dim() || explanation.dim() != f.dim() {
        return Err(Error::usage("explanation, input and function dimensions differ"));
    }
    let mut wrong = 0usize;
    for _ in 0..cfg.n_samples {
        let xp = ball_in_cube(rng, x, cfg.radius);
        let surrogate = u8::from(dot_unchecked(&xp, explanation) > 0.0);
        if surrogate != f.predict_unchecked(&xp) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / cfg.n_samples as f64)
}

/// Number of nonzero entries among the weights and intercept.
pub fn sparsity(explanation: &Attribution) -> usize {
    explanation
        .weights
        .iter()
        .chain(std::iter::once(&explanation.intercept))
        .filter(|v| **v != 0.0)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::FunctionId;
    use crate::numeric::RngStream;

    #[test]
    fn constant_explainer_is_perfectly_stable() {
        let e = Attribution::new(vec![1.0, -2.0, 0.3], 0.4).unwrap();
        let mut rng = RngStream::new(3, "s").rng();
        let cfg = StabilityConfig {
            radius: 0.5,
            n_perturbations: 200,
        };
        let s = local_stability(|_| e.clone(), &[0.2, 0.4, 0.9], &cfg, &mut rng).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn identity_explainer_has_unit_stability() {
        let mut rng = RngStream::new(3, "s").rng();
        let cfg = StabilityConfig {
            radius: 0.2,
            n_perturbations: 100,
        };
        let s = local_stability(|x| Attribution::new(vec![x[0]], 0.0).unwrap(), &[0.5], &cfg, &mut rng).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_row_has_zero_infidelity_inside_its_piece() {
        let f = GroundTruth::builtin(FunctionId::Piece);
        let mut x = vec![0.5; 10];
        x[0] = 0.6;
        let row = f.region_of(&x).unwrap().active_weights.unwrap();
        let cfg = InfidelityConfig {
            radius: 0.1,
            n_samples: 500,
        };
        let mut rng = RngStream::new(1, "i").rng();
        assert_eq!(local_infidelity(&row, &f, &x, &cfg, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn sparsity_examples() {
        let e = Attribution::new(vec![-4.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(sparsity(&e), 2);
        assert_eq!(sparsity(&Attribution::zeros(5)), 0);
        let f = GroundTruth::builtin(FunctionId::Piece);
        if let GroundTruth::Piece(p) = &f {
            assert_eq!(sparsity(&p.rows()[1]), 10);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let f = GroundTruth::builtin(FunctionId::Box);
        let e = Attribution::zeros(3);
        let mut rng = RngStream::new(1, "i").rng();
        let cfg = InfidelityConfig {
            radius: 0.0,
            n_samples: 10,
        };
        assert!(local_infidelity(&e, &f, &[0.5; 3], &cfg, &mut rng).is_err());
        let cfg = StabilityConfig {
            radius: 1.0,
            n_perturbations: 0,
        };
        assert!(local_stability(|_| e.clone(), &[0.5; 3], &cfg, &mut rng).is_err());
    }
}
