//! Study definition and participant-facing content.
//!
//! A study file names its stimulus file and content file; relative paths are
//! resolved against the study file's directory.
//!
//! ```toml
//! id = "box-forward"
//! stimuli = "../stimuli/box_forward.tsv"
//! content = "../content/box_forward.toml"
//! kinds = ["faithful", "robust", "sparse", "sparse_robust"]
//! per_kind = 8
//! time_pressure = true
//! test_seconds = 600
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sim2real::ExplainerKind;

use crate::error::{Result, StudyError};

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, source: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
        StudyError::Config(format!("{}:{line}: {}", source.display(), e.message()))
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| StudyError::io(path, e))
}

/// One study arm layout and its pacing rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub id: String,
    pub stimuli: PathBuf,
    pub content: PathBuf,
    /// Explanation kinds participants are randomized between.
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ExplainerKind>,
    #[serde(default = "default_per_kind")]
    pub per_kind: usize,
    #[serde(default = "default_training_items")]
    pub training_items: usize,
    #[serde(default = "default_test_items")]
    pub test_items: usize,
    #[serde(default = "default_true")]
    pub time_pressure: bool,
    /// Soft time budget for the whole test phase.
    #[serde(default = "default_test_seconds")]
    pub test_seconds: u64,
    /// Extra comprehension attempts after the first one fails.
    #[serde(default = "default_retries")]
    pub comprehension_retries: u32,
    /// Fraction of comprehension questions that must be right to pass.
    #[serde(default = "default_pass")]
    pub comprehension_pass: f64,
    /// Seeds assignment tie-breaks and test orders. Without it every server
    /// start draws fresh entropy.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_kinds() -> Vec<ExplainerKind> {
    ExplainerKind::ALL.to_vec()
}
fn default_per_kind() -> usize {
    8
}
fn default_training_items() -> usize {
    10
}
fn default_test_items() -> usize {
    30
}
fn default_true() -> bool {
    true
}
fn default_test_seconds() -> u64 {
    600
}
fn default_retries() -> u32 {
    2
}
fn default_pass() -> f64 {
    1.0
}

impl StudyConfig {
    pub fn from_toml(text: &str, source: &Path) -> Result<Self> {
        let cfg: StudyConfig = parse_toml(text, source)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a study file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.stimuli = base.join(&cfg.stimuli);
        cfg.content = base.join(&cfg.content);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(StudyError::Config(format!("study `{}`: {m}", self.id)));
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return bad("id must be non-empty and use only letters, digits, `-` and `_`");
        }
        if self.kinds.is_empty() || self.kinds.iter().collect::<BTreeSet<_>>().len() != self.kinds.len() {
            return bad("kinds must be non-empty and distinct");
        }
        if self.per_kind == 0 {
            return bad("per_kind must be positive");
        }
        if self.test_items == 0 || self.test_items % 3 != 0 {
            return bad("test_items must be a positive multiple of 3, one share per category");
        }
        if self.time_pressure && self.test_seconds == 0 {
            return bad("test_seconds must be positive under time pressure");
        }
        if !(0.0..=1.0).contains(&self.comprehension_pass) {
            return bad("comprehension_pass must lie in [0, 1]");
        }
        Ok(())
    }

    /// Number of participants the study accepts.
    pub fn cohort(&self) -> usize {
        self.per_kind * self.kinds.len()
    }

    /// Suggested seconds per test question when time pressure is on.
    pub fn recommended_seconds(&self) -> f64 {
        self.test_seconds as f64 / self.test_items as f64
    }
}

/// A comprehension check question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComprehensionQuestion {
    /// Which displayed advice entry matters most. The key is the trait (or
    /// baseline) with the largest absolute advice value.
    BiggestEffect {
        id: String,
        prompt: String,
        /// Advice values for each trait followed by the baseline.
        advice: Vec<f64>,
    },
    /// A multiple-choice question with a fixed key.
    Choice {
        id: String,
        prompt: String,
        options: Vec<String>,
        answer: String,
    },
}

impl ComprehensionQuestion {
    pub fn id(&self) -> &str {
        match self {
            ComprehensionQuestion::BiggestEffect { id, .. } | ComprehensionQuestion::Choice { id, .. } => id,
        }
    }
}

/// A free-text or Likert item in the exit survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyQuestion {
    pub id: String,
    pub prompt: String,
    /// Number of Likert points; absent for free text.
    #[serde(default)]
    pub scale: Option<u8>,
}

/// Everything a participant reads: the story, trait names and questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Content {
    pub consent: String,
    pub scenario: String,
    /// Descriptions of the screen areas shown during the task.
    pub interface: Vec<String>,
    /// Display names for the input features, in order.
    pub traits: Vec<String>,
    /// Display name of the advice intercept.
    pub baseline: String,
    /// The decision question shown with every item.
    pub question: String,
    /// Names of answers 0 and 1.
    pub labels: [String; 2],
    pub comprehension: Vec<ComprehensionQuestion>,
    #[serde(default)]
    pub survey: Vec<SurveyQuestion>,
}

impl Content {
    pub fn load(path: &Path) -> Result<Self> {
        let content: Content = parse_toml(&read(path)?, path)?;
        content.validate(path)?;
        Ok(content)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |m: String| Err(StudyError::Config(format!("{}: {m}", path.display())));
        if self.traits.is_empty() {
            return bad("at least one trait name is needed".into());
        }
        let mut ids = BTreeSet::new();
        for q in &self.comprehension {
            if !ids.insert(q.id()) {
                return bad(format!("duplicate comprehension id `{}`", q.id()));
            }
            match q {
                ComprehensionQuestion::BiggestEffect { advice, id, .. } if advice.len() != self.traits.len() + 1 => {
                    return bad(format!(
                        "question `{id}` needs one advice value per trait plus the baseline"
                    ));
                }
                ComprehensionQuestion::Choice {
                    options, answer, id, ..
                } if !options.contains(answer) => {
                    return bad(format!("question `{id}` has an answer that is not an option"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Answer options for a comprehension question.
    pub fn options(&self, q: &ComprehensionQuestion) -> Vec<String> {
        match q {
            ComprehensionQuestion::BiggestEffect { .. } => {
                let mut o = self.traits.clone();
                o.push(self.baseline.clone());
                o
            }
            ComprehensionQuestion::Choice { options, .. } => options.clone(),
        }
    }

    /// The keyed answer of a comprehension question.
    pub fn key(&self, q: &ComprehensionQuestion) -> String {
        match q {
            ComprehensionQuestion::BiggestEffect { advice, .. } => {
                let mut best = 0;
                for (i, v) in advice.iter().enumerate() {
                    if v.abs() > advice[best].abs() {
                        best = i;
                    }
                }
                self.options(q).swap_remove(best)
            }
            ComprehensionQuestion::Choice { answer, .. } => answer.clone(),
        }
    }
}
