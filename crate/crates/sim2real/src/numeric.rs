//! Shared numeric primitives: points, attributions, significant-figure
//! rounding, seeded random streams and summary statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A point of the unit hypercube `[0,1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    values: Vec<f64>,
}

impl InputPoint {
    /// Validates that every entry is finite and inside `[0,1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("input point must have at least one entry"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::Domain(format!("input entry {i} = {v} is outside [0,1]")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A feature attribution: one weight per input feature plus an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl Attribution {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Result<Self> {
        if weights
            .iter()
            .chain(std::iter::once(&intercept))
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain("attribution entries must be finite".into()));
        }
        Ok(Self { weights, intercept })
    }

    /// The all-zero attribution for `dim` features.
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            intercept: 0.0,
        }
    }

    /// Builds an attribution from `D+1` entries, the last being the intercept.
    pub fn from_entries(entries: &[f64]) -> Result<Self> {
        match entries.split_last() {
            Some((b, w)) => Self::new(w.to_vec(), *b),
            None => Err(Error::usage("attribution needs at least the intercept entry")),
        }
    }

    /// Number of features `D`.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// All `D+1` entries, weights first and the intercept last.
    pub fn entries(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.intercept);
        v
    }

    /// Entry-wise `round_sig` at the given number of figures.
    pub fn rounded(&self, figures: u32) -> Self {
        Self {
            weights: self.weights.iter().map(|w| round_sig_finite(*w, figures)).collect(),
            intercept: round_sig_finite(self.intercept, figures),
        }
    }

    /// Euclidean distance over all `D+1` entries.
    pub fn distance(&self, other: &Attribution) -> f64 {
        let dw: f64 = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let db = self.intercept - other.intercept;
        (dw + db * db).sqrt()
    }
}

/// Rounds `v` to `figures` significant figures, ties away from zero.
///
/// Ties are judged on the decimal value the caller wrote, so `0.15` rounds
/// to `0.2` even though its binary representation sits slightly below.
pub fn round_sig(v: f64, figures: u32) -> Result<f64> {
    if figures == 0 {
        return Err(Error::usage("figures must be at least 1"));
    }
    if !v.is_finite() {
        return Err(Error::Domain(format!("cannot round non-finite value {v}")));
    }
    let r = round_sig_finite(v, figures);
    if !r.is_finite() {
        return Err(Error::Domain(format!("rounding {v} overflows")));
    }
    Ok(r)
}

pub(crate) fn round_sig_finite(v: f64, figures: u32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let a = v.abs();
    let mut e = a.log10().floor() as i32;
    // log10 can land one off near exact powers of ten.
    if pow10(e) > a {
        e -= 1;
    } else if pow10(e + 1) <= a {
        e += 1;
    }
    let k = figures as i32 - 1 - e;
    if k.abs() > 22 {
        // Beyond 1e22 powers of ten are inexact and scaling by them misses
        // the nearest double, so use exact decimal formatting instead.
        let text = format!("{:.*e}", figures as usize - 1, a);
        return text.parse::<f64>().map_or(v, |r| r.copysign(v));
    }
    let scaled = if k >= 0 { a * pow10(k) } else { a / pow10(-k) };
    // The relative nudge turns representation error just below a written
    // tie (0.15 is stored as 0.1499…) into a tie, which then rounds away.
    let r = (scaled * (1.0 + 1e-12) + 0.5).floor();
    let out = if k >= 0 { r / pow10(k) } else { r * pow10(-k) };
    out.copysign(v)
}

fn pow10(e: i32) -> f64 {
    10f64.powi(e)
}

/// `Σ_d x_d · weights_d + intercept`.
pub fn dot_with_intercept(x: &[f64], e: &Attribution) -> Result<f64> {
    if x.len() != e.dim() {
        return Err(Error::usage(format!(
            "dimension mismatch: input has {} entries, attribution has {} weights",
            x.len(),
            e.dim()
        )));
    }
    Ok(dot_unchecked(x, e))
}

pub(crate) fn dot_unchecked(x: &[f64], e: &Attribution) -> f64 {
    x.iter().zip(&e.weights).map(|(a, b)| a * b).sum::<f64>() + e.intercept
}

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub ci95_halfwidth: f64,
    pub n: usize,
}

/// Summarizes samples as mean and `1.96·s/√n`, `s` being the sample
/// (n−1) standard deviation. A single sample has half-width 0.
pub fn mean_ci95(samples: &[f64]) -> Result<SummaryStat> {
    if samples.is_empty() {
        return Err(Error::usage("mean_ci95 needs at least one sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    let n = samples.len();
    if samples.iter().all(|v| *v == samples[0]) {
        return Ok(SummaryStat {
            mean: samples[0],
            ci95_halfwidth: 0.0,
            n,
        });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(SummaryStat {
        mean,
        ci95_halfwidth: 1.96 * var.sqrt() / (n as f64).sqrt(),
        n,
    })
}

/// A named, reproducible random stream.
///
/// The generator is ChaCha20 keyed by SHA-256 of the seed and label, so
/// distinct labels never share draws and the sequence is identical on every
/// platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
        }
    }

    /// A child stream whose label extends this one.
    pub fn substream(&self, part: impl std::fmt::Display) -> Self {
        Self {
            seed: self.seed,
            label: format!("{}/{}", self.label, part),
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.label.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha20Rng::from_seed(key)
    }
}
