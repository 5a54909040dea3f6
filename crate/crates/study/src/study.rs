//! Study state: sessions, phase progression and the record log behind them.
//!
//! State changes are event sourced. A command validates against the current
//! state, appends its event to the log, and only then applies it, so every
//! acknowledged change is already durable and replaying the log rebuilds the
//! same sessions.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sim2real::stimuli::{parse_stimuli, ItemPhase, StimulusSet};
use sim2real::{Attribution, ExplainerKind, TaskKind, TestCategory};

use crate::clock::Clock;
use crate::config::{Content, StudyConfig};
use crate::error::{Result, StudyError};
use crate::log::EventLog;

/// Where a participant is in the study. Phases only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Consent,
    Instructions,
    Comprehension,
    Training,
    Test,
    ExitSurvey,
    Done,
}

/// One line of the record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session: String,
        kind: ExplainerKind,
        /// Test items in presentation order, as indices into the study's
        /// test list.
        test_order: Vec<usize>,
        at_ms: u64,
    },
    Advanced {
        session: String,
        to: Phase,
        at_ms: u64,
    },
    ComprehensionGraded {
        session: String,
        answers: BTreeMap<String, String>,
        correct: BTreeMap<String, bool>,
        passed: bool,
        screened_out: bool,
        at_ms: u64,
    },
    Response {
        session: String,
        item: String,
        phase: Phase,
        answer: u8,
        elapsed_ms: u64,
        at_ms: u64,
    },
    Survey {
        session: String,
        answers: BTreeMap<String, String>,
        at_ms: u64,
    },
}

impl Event {
    fn session(&self) -> &str {
        match self {
            Event::SessionCreated { session, .. }
            | Event::Advanced { session, .. }
            | Event::ComprehensionGraded { session, .. }
            | Event::Response { session, .. }
            | Event::Survey { session, .. } => session,
        }
    }
}

/// A recorded answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseRecord {
    pub item: String,
    pub phase: Phase,
    pub answer: u8,
    pub elapsed_ms: u64,
    pub at_ms: u64,
}

/// One participant's progress.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub id: String,
    pub kind: ExplainerKind,
    pub phase: Phase,
    pub test_order: Vec<usize>,
    pub created_ms: u64,
    pub test_started_ms: Option<u64>,
    pub comprehension_attempts: u32,
    pub screened_out: bool,
    pub responses: Vec<ResponseRecord>,
    pub survey: Option<BTreeMap<String, String>>,
}

impl Session {
    fn answered(&self, phase: Phase) -> usize {
        self.responses.iter().filter(|r| r.phase == phase).count()
    }
}

/// A stimulus as one explanation kind presents it.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemVariant {
    pub x: Vec<f64>,
    pub advice: Attribution,
}

/// A stimulus item with its per-kind advice.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub answer: u8,
    pub category: Option<TestCategory>,
    pub variants: BTreeMap<ExplainerKind, ItemVariant>,
}

/// A named value shown to a participant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Labeled {
    pub name: String,
    pub value: f64,
}

/// Item payload during training. Participants see the correct answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingItem {
    pub id: String,
    pub measurements: Vec<Labeled>,
    pub advice: Vec<Labeled>,
    pub correct_answer: u8,
    pub correct_label: String,
}

/// Item payload during the test. Deliberately has no answer field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestItem {
    pub id: String,
    pub measurements: Vec<Labeled>,
    pub advice: Vec<Labeled>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Progress {
    pub index: usize,
    pub total: usize,
}

/// Soft pacing shown under time pressure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timer {
    pub total_seconds: u64,
    pub remaining_ms: u64,
    pub recommended_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionView {
    pub id: String,
    pub prompt: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyView {
    pub id: String,
    pub prompt: String,
    pub scale: Option<u8>,
}

/// What the participant's screen shows in the current phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum PhasePayload {
    Consent {
        text: String,
    },
    Instructions {
        scenario: String,
        interface: Vec<String>,
        question: String,
        labels: [String; 2],
    },
    Comprehension {
        questions: Vec<QuestionView>,
        attempts_left: u32,
    },
    Training {
        question: String,
        labels: [String; 2],
        item: TrainingItem,
        progress: Progress,
    },
    Test {
        question: String,
        labels: [String; 2],
        item: TestItem,
        progress: Progress,
        #[serde(skip_serializing_if = "Option::is_none")]
        timer: Option<Timer>,
    },
    ExitSurvey {
        questions: Vec<SurveyView>,
    },
    Done {
        answered: usize,
        screened_out: bool,
    },
}

/// Returned when a session is created.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionCreated {
    pub session: String,
    pub kind: ExplainerKind,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComprehensionResult {
    pub passed: bool,
    pub correct: BTreeMap<String, bool>,
    pub attempts_left: u32,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acknowledgement {
    pub item: String,
    pub recorded_at_ms: u64,
    pub phase: Phase,
}

/// One configured study with its sessions.
pub struct Study {
    config: StudyConfig,
    content: Content,
    task: TaskKind,
    training: Vec<Item>,
    test: Vec<Item>,
    sessions: HashMap<String, Session>,
    /// Session ids in creation order.
    order: Vec<String>,
    log: Option<EventLog>,
    clock: Arc<dyn Clock>,
}

fn items(set: &StimulusSet, phase: ItemPhase, kinds: &[ExplainerKind]) -> Result<Vec<Item>> {
    let mut out = Vec::new();
    for id in set.items(phase) {
        let rows: Vec<_> = set.rows.iter().filter(|r| r.item == id).collect();
        let first = rows[0];
        let mut variants = BTreeMap::new();
        for r in &rows {
            if r.answer != first.answer || r.category != first.category {
                return Err(StudyError::Config(format!("item `{id}` has inconsistent rows")));
            }
            variants.insert(
                r.kind,
                ItemVariant {
                    x: r.x.clone(),
                    advice: r.attribution.clone(),
                },
            );
        }
        if let Some(k) = kinds.iter().find(|k| !variants.contains_key(k)) {
            return Err(StudyError::Config(format!("item `{id}` has no advice for kind {k}")));
        }
        out.push(Item {
            id: id.to_string(),
            answer: first.answer,
            category: first.category,
            variants,
        });
    }
    Ok(out)
}

impl Study {
    /// Builds a study from already loaded parts, without persistence.
    pub fn new(config: StudyConfig, content: Content, stimuli: &StimulusSet, clock: Arc<dyn Clock>) -> Result<Self> {
        config.validate()?;
        if content.traits.len() != stimuli.dim {
            return Err(StudyError::Config(format!(
                "content names {} traits but stimuli have {} features",
                content.traits.len(),
                stimuli.dim
            )));
        }
        let training = items(stimuli, ItemPhase::Training, &config.kinds)?;
        let test = items(stimuli, ItemPhase::Test, &config.kinds)?;
        if training.len() != config.training_items || test.len() != config.test_items {
            return Err(StudyError::Config(format!(
                "study `{}` expects {} training and {} test items, stimuli have {} and {}",
                config.id,
                config.training_items,
                config.test_items,
                training.len(),
                test.len()
            )));
        }
        let per_category = config.test_items / 3;
        for c in TestCategory::ALL {
            let n = test.iter().filter(|i| i.category == Some(c)).count();
            if n != per_category {
                return Err(StudyError::Config(format!(
                    "study `{}` needs {per_category} test items of category {c}, stimuli have {n}",
                    config.id
                )));
            }
        }
        Ok(Self {
            task: stimuli.task,
            config,
            content,
            training,
            test,
            sessions: HashMap::new(),
            order: Vec::new(),
            log: None,
            clock,
        })
    }

    /// Loads a study file with its stimuli and content, then replays the
    /// study's record log from `data_dir`.
    pub fn open(config_path: &Path, data_dir: &Path, clock: Arc<dyn Clock>) -> Result<Self> {
        let config = StudyConfig::load(config_path)?;
        let content = Content::load(&config.content)?;
        let text = std::fs::read_to_string(&config.stimuli).map_err(|e| StudyError::io(&config.stimuli, e))?;
        let stimuli = parse_stimuli(&text, &config.stimuli.display().to_string())?;
        let mut study = Self::new(config, content, &stimuli, clock)?;
        std::fs::create_dir_all(data_dir).map_err(|e| StudyError::io(data_dir, e))?;
        study.attach_log(&data_dir.join(format!("{}.jsonl", study.config.id)))?;
        Ok(study)
    }

    /// Replays an existing log into this study and records new events there.
    pub fn attach_log(&mut self, path: &Path) -> Result<()> {
        let (log, events) = EventLog::open::<Event>(path)?;
        for (i, e) in events.into_iter().enumerate() {
            self.check_replayable(&e).map_err(|m| StudyError::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: m,
            })?;
            self.apply(e);
        }
        self.log = Some(log);
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn task(&self) -> &TaskKind {
        &self.task
    }

    pub fn test_items(&self) -> &[Item] {
        &self.test
    }

    pub fn training_items(&self) -> &[Item] {
        &self.training
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn has_session(&self, id: &str) -> bool {
        self.sessions.contains_key(id)
    }

    /// Sessions in creation order.
    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.order.iter().map(|id| &self.sessions[id])
    }

    /// Sessions per kind that count towards the cohort: every session that
    /// has not been screened out.
    pub fn counts(&self) -> BTreeMap<ExplainerKind, usize> {
        let mut counts: BTreeMap<ExplainerKind, usize> = self.config.kinds.iter().map(|k| (*k, 0)).collect();
        for s in self.sessions.values().filter(|s| !s.screened_out) {
            *counts.entry(s.kind).or_default() += 1;
        }
        counts
    }

    fn check_replayable(&self, e: &Event) -> std::result::Result<(), String> {
        let known = self.sessions.contains_key(e.session());
        match e {
            Event::SessionCreated { test_order, .. } => {
                if known {
                    return Err("session created twice".into());
                }
                let mut sorted = test_order.clone();
                sorted.sort_unstable();
                if sorted != (0..self.test.len()).collect::<Vec<_>>() {
                    return Err("test order is not a permutation of the test items".into());
                }
                Ok(())
            }
            _ if !known => Err(format!("event for unknown session `{}`", e.session())),
            _ => Ok(()),
        }
    }

    /// Appends to the log first, then changes memory.
    fn commit(&mut self, event: Event) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            log.append(&event)?;
        }
        self.apply(event);
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::SessionCreated {
                session,
                kind,
                test_order,
                at_ms,
            } => {
                self.order.push(session.clone());
                self.sessions.insert(
                    session.clone(),
                    Session {
                        id: session,
                        kind,
                        phase: Phase::Consent,
                        test_order,
                        created_ms: at_ms,
                        test_started_ms: None,
                        comprehension_attempts: 0,
                        screened_out: false,
                        responses: Vec::new(),
                        survey: None,
                    },
                );
            }
            Event::Advanced { session, to, at_ms } => {
                let s = self.sessions.get_mut(&session).expect("checked session");
                s.phase = s.phase.max(to);
                if to == Phase::Test {
                    s.test_started_ms.get_or_insert(at_ms);
                }
            }
            Event::ComprehensionGraded {
                session, screened_out, ..
            } => {
                let s = self.sessions.get_mut(&session).expect("checked session");
                s.comprehension_attempts += 1;
                s.screened_out |= screened_out;
            }
            Event::Response {
                session,
                item,
                phase,
                answer,
                elapsed_ms,
                at_ms,
            } => {
                let s = self.sessions.get_mut(&session).expect("checked session");
                s.responses.push(ResponseRecord {
                    item,
                    phase,
                    answer,
                    elapsed_ms,
                    at_ms,
                });
            }
            Event::Survey { session, answers, .. } => {
                let s = self.sessions.get_mut(&session).expect("checked session");
                s.survey = Some(answers);
            }
        }
    }

    fn get(&self, id: &str) -> Result<&Session> {
        self.sessions
            .get(id)
            .ok_or_else(|| StudyError::NotFound(format!("session `{id}`")))
    }

    /// Randomness for the next new session. A seeded study gives every
    /// creation ordinal its own stream, so a restarted server continues the
    /// sequence instead of repeating it.
    fn session_rng(&self) -> ChaCha20Rng {
        match self.config.seed {
            Some(seed) => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(self.order.len() as u64);
                rng
            }
            None => ChaCha20Rng::from_os_rng(),
        }
    }

    /// Starts a session on the least used explanation kind, breaking ties
    /// uniformly at random.
    pub fn create_session(&mut self) -> Result<SessionCreated> {
        let counts = self.counts();
        if counts.values().sum::<usize>() >= self.config.cohort() {
            return Err(StudyError::Closed(self.config.id.clone()));
        }
        let least = *counts.values().min().expect("at least one kind");
        let candidates: Vec<ExplainerKind> = counts.iter().filter(|(_, n)| **n == least).map(|(k, _)| *k).collect();
        let mut rng = self.session_rng();
        let kind = *candidates.choose(&mut rng).expect("non-empty");
        let mut test_order: Vec<usize> = (0..self.test.len()).collect();
        test_order.shuffle(&mut rng);
        let id = uuid::Builder::from_random_bytes(rng.random())
            .into_uuid()
            .simple()
            .to_string();
        self.commit(Event::SessionCreated {
            session: id.clone(),
            kind,
            test_order,
            at_ms: self.clock.now_ms(),
        })?;
        Ok(SessionCreated {
            session: id,
            kind,
            phase: Phase::Consent,
        })
    }

    fn labeled(&self, v: &ItemVariant) -> (Vec<Labeled>, Vec<Labeled>) {
        let named = |vals: &[f64]| {
            self.content
                .traits
                .iter()
                .zip(vals)
                .map(|(n, v)| Labeled {
                    name: n.clone(),
                    value: *v,
                })
                .collect::<Vec<_>>()
        };
        let mut advice = named(&v.advice.weights);
        advice.push(Labeled {
            name: self.content.baseline.clone(),
            value: v.advice.intercept,
        });
        (named(&v.x), advice)
    }

    /// Replaces `{trait}` with the forbidden trait's name.
    fn fill(&self, text: &str) -> String {
        match self.task {
            TaskKind::ForwardPrediction => text.to_string(),
            TaskKind::ForbiddenFeatures { feature } => text.replace("{trait}", &self.content.traits[feature]),
        }
    }

    fn question(&self) -> String {
        self.fill(&self.content.question)
    }

    /// The current screen of a session.
    pub fn payload(&self, id: &str) -> Result<PhasePayload> {
        let s = self.get(id)?;
        let c = &self.content;
        Ok(match s.phase {
            Phase::Consent => PhasePayload::Consent {
                text: c.consent.clone(),
            },
            Phase::Instructions => PhasePayload::Instructions {
                scenario: self.fill(&c.scenario),
                interface: c.interface.clone(),
                question: self.question(),
                labels: c.labels.clone(),
            },
            Phase::Comprehension => PhasePayload::Comprehension {
                questions: c
                    .comprehension
                    .iter()
                    .map(|q| QuestionView {
                        id: q.id().to_string(),
                        prompt: match q {
                            crate::config::ComprehensionQuestion::BiggestEffect { prompt, advice, .. } => {
                                let mut shown = Vec::new();
                                for (name, v) in c.traits.iter().chain(std::iter::once(&c.baseline)).zip(advice) {
                                    shown.push(format!("{name}: {v}"));
                                }
                                format!("{prompt} ({})", shown.join(", "))
                            }
                            crate::config::ComprehensionQuestion::Choice { prompt, .. } => prompt.clone(),
                        },
                        options: c.options(q),
                    })
                    .collect(),
                attempts_left: self.config.comprehension_retries + 1 - s.comprehension_attempts,
            },
            Phase::Training => {
                let k = s.answered(Phase::Training);
                let item = &self.training[k];
                let (measurements, advice) = self.labeled(&item.variants[&s.kind]);
                PhasePayload::Training {
                    question: self.question(),
                    labels: c.labels.clone(),
                    item: TrainingItem {
                        id: item.id.clone(),
                        measurements,
                        advice,
                        correct_answer: item.answer,
                        correct_label: c.labels[item.answer as usize].clone(),
                    },
                    progress: Progress {
                        index: k + 1,
                        total: self.training.len(),
                    },
                }
            }
            Phase::Test => {
                let k = s.answered(Phase::Test);
                let item = &self.test[s.test_order[k]];
                let (measurements, advice) = self.labeled(&item.variants[&s.kind]);
                let timer = self.config.time_pressure.then(|| {
                    let budget = self.config.test_seconds * 1000;
                    let spent = self.clock.now_ms().saturating_sub(s.test_started_ms.unwrap_or(0));
                    Timer {
                        total_seconds: self.config.test_seconds,
                        remaining_ms: budget.saturating_sub(spent),
                        recommended_seconds: self.config.recommended_seconds(),
                    }
                });
                PhasePayload::Test {
                    question: self.question(),
                    labels: c.labels.clone(),
                    item: TestItem {
                        id: item.id.clone(),
                        measurements,
                        advice,
                    },
                    progress: Progress {
                        index: k + 1,
                        total: self.test.len(),
                    },
                    timer,
                }
            }
            Phase::ExitSurvey => PhasePayload::ExitSurvey {
                questions: c
                    .survey
                    .iter()
                    .map(|q| SurveyView {
                        id: q.id.clone(),
                        prompt: q.prompt.clone(),
                        scale: q.scale,
                    })
                    .collect(),
            },
            Phase::Done => PhasePayload::Done {
                answered: s.answered(Phase::Test),
                screened_out: s.screened_out,
            },
        })
    }

    /// Moves past a phase that ends on the participant's say-so: consent,
    /// instructions and the exit survey. Other phases end by themselves.
    pub fn advance(&mut self, id: &str, survey: BTreeMap<String, String>) -> Result<Phase> {
        let s = self.get(id)?;
        let now = self.clock.now_ms();
        let to = match s.phase {
            Phase::Consent => Phase::Instructions,
            Phase::Instructions => Phase::Comprehension,
            Phase::ExitSurvey => {
                if let Some(unknown) = survey.keys().find(|k| !self.content.survey.iter().any(|q| &q.id == *k)) {
                    return Err(StudyError::Invalid(format!("unknown survey question `{unknown}`")));
                }
                self.commit(Event::Survey {
                    session: id.to_string(),
                    answers: survey,
                    at_ms: now,
                })?;
                Phase::Done
            }
            other => return Err(StudyError::Conflict(format!("phase {other:?} does not end on request"))),
        };
        self.commit(Event::Advanced {
            session: id.to_string(),
            to,
            at_ms: now,
        })?;
        Ok(to)
    }

    /// Grades comprehension answers. A pass opens training; failing after
    /// the last allowed retry screens the participant out.
    pub fn submit_comprehension(&mut self, id: &str, answers: BTreeMap<String, String>) -> Result<ComprehensionResult> {
        let s = self.get(id)?;
        if s.phase != Phase::Comprehension {
            return Err(StudyError::Conflict(format!(
                "session is in phase {:?}, not comprehension",
                s.phase
            )));
        }
        let attempts = s.comprehension_attempts + 1;
        let correct: BTreeMap<String, bool> = self
            .content
            .comprehension
            .iter()
            .map(|q| {
                let key = self.content.key(q);
                let ok = answers.get(q.id()).is_some_and(|a| a.trim() == key);
                (q.id().to_string(), ok)
            })
            .collect();
        let n = correct.len().max(1) as f64;
        let passed = correct.values().filter(|v| **v).count() as f64 / n >= self.config.comprehension_pass;
        let allowed = self.config.comprehension_retries + 1;
        let screened_out = !passed && attempts >= allowed;
        let now = self.clock.now_ms();
        self.commit(Event::ComprehensionGraded {
            session: id.to_string(),
            answers,
            correct: correct.clone(),
            passed,
            screened_out,
            at_ms: now,
        })?;
        let next = if passed {
            Some(Phase::Training)
        } else if screened_out {
            Some(Phase::Done)
        } else {
            None
        };
        if let Some(to) = next {
            self.commit(Event::Advanced {
                session: id.to_string(),
                to,
                at_ms: now,
            })?;
        }
        Ok(ComprehensionResult {
            passed,
            correct,
            attempts_left: allowed.saturating_sub(attempts),
            phase: self.sessions[id].phase,
        })
    }

    /// Records an answer to the item currently on screen.
    ///
    /// The timer is soft: late answers are recorded like any other.
    pub fn submit_response(&mut self, id: &str, item: &str, answer: u8, elapsed_ms: u64) -> Result<Acknowledgement> {
        let s = self.get(id)?;
        if answer > 1 {
            return Err(StudyError::Invalid(format!("answer must be 0 or 1, got {answer}")));
        }
        let (phase, list, k) = match s.phase {
            Phase::Training => (Phase::Training, &self.training, s.answered(Phase::Training)),
            Phase::Test => (Phase::Test, &self.test, s.answered(Phase::Test)),
            other => {
                return Err(StudyError::Conflict(format!("no item is open in phase {other:?}")));
            }
        };
        if s.responses.iter().any(|r| r.item == item) {
            return Err(StudyError::Conflict(format!("item `{item}` already answered")));
        }
        let current = if phase == Phase::Test {
            &list[s.test_order[k]]
        } else {
            &list[k]
        };
        if current.id != item {
            return Err(StudyError::Invalid(format!(
                "item `{item}` is not the one being shown (`{}`)",
                current.id
            )));
        }
        let last = k + 1 == list.len();
        let now = self.clock.now_ms();
        self.commit(Event::Response {
            session: id.to_string(),
            item: item.to_string(),
            phase,
            answer,
            elapsed_ms,
            at_ms: now,
        })?;
        if last {
            let to = if phase == Phase::Training {
                Phase::Test
            } else {
                Phase::ExitSurvey
            };
            self.commit(Event::Advanced {
                session: id.to_string(),
                to,
                at_ms: now,
            })?;
        }
        Ok(Acknowledgement {
            item: item.to_string(),
            recorded_at_ms: now,
            phase: self.sessions[id].phase,
        })
    }
}
