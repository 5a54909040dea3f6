//! Flat CSV export of test answers for analysis.

use std::collections::BTreeMap;

use sim2real::{mean_ci95, ExplainerKind, SummaryStat};

use crate::study::{Phase, Study};

pub const COLUMNS: [&str; 11] = [
    "study",
    "session",
    "kind",
    "item",
    "category",
    "answer",
    "correct_answer",
    "correct",
    "elapsed_ms",
    "answered_utc_ms",
    "test_started_utc_ms",
];

/// One row per test answer, sessions in creation order and answers in the
/// order given. Screened-out sessions are left out unless asked for.
///
/// No field can contain a comma or quote: ids are validated or generated,
/// and every other column is numeric or an enum name.
pub fn export_csv(study: &Study, include_screened: bool) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    let by_id: BTreeMap<&str, _> = study.test_items().iter().map(|i| (i.id.as_str(), i)).collect();
    for s in study.sessions().filter(|s| include_screened || !s.screened_out) {
        let started = s.test_started_ms.map(|t| t.to_string()).unwrap_or_default();
        for r in s.responses.iter().filter(|r| r.phase == Phase::Test) {
            let item = by_id[r.item.as_str()];
            let category = item.category.map(|c| c.as_str()).unwrap_or("");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                study.id(),
                s.id,
                s.kind,
                r.item,
                category,
                r.answer,
                item.answer,
                u8::from(r.answer == item.answer),
                r.elapsed_ms,
                r.at_ms,
                started
            ));
        }
    }
    out
}

/// Test accuracy per explanation kind over sessions that finished the test
/// and were not screened out. Each session contributes one sample.
pub fn accuracy_by_kind(study: &Study) -> BTreeMap<ExplainerKind, SummaryStat> {
    let answers: BTreeMap<&str, u8> = study.test_items().iter().map(|i| (i.id.as_str(), i.answer)).collect();
    let mut per_kind: BTreeMap<ExplainerKind, Vec<f64>> = BTreeMap::new();
    for s in study.sessions().filter(|s| !s.screened_out) {
        let test: Vec<_> = s.responses.iter().filter(|r| r.phase == Phase::Test).collect();
        if test.len() != study.test_items().len() {
            continue;
        }
        let right = test.iter().filter(|r| answers[r.item.as_str()] == r.answer).count();
        per_kind
            .entry(s.kind)
            .or_default()
            .push(right as f64 / test.len() as f64);
    }
    per_kind
        .into_iter()
        .map(|(k, v)| (k, mean_ci95(&v).expect("non-empty")))
        .collect()
}
