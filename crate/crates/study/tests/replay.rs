use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use study_server::{export_csv, Content, ManualClock, Study, StudyConfig};

/// A participant action. Indices pick among existing sessions or items and
/// wrap around, so most generated actions are legal but some are not.
#[derive(Debug, Clone)]
enum Action {
    Create,
    Advance(usize),
    Comprehend(usize, bool),
    Answer(usize, u8, bool),
    Tick(u64),
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        1 => Just(Action::Create),
        2 => any::<usize>().prop_map(Action::Advance),
        2 => (any::<usize>(), prop::bool::weighted(0.7)).prop_map(|(s, ok)| Action::Comprehend(s, ok)),
        8 => (any::<usize>(), 0u8..3, prop::bool::weighted(0.9)).prop_map(|(s, a, cur)| Action::Answer(s, a, cur)),
        1 => (1u64..5000).prop_map(Action::Tick),
    ]
}

fn open(dir: &Path, clock: Arc<ManualClock>) -> Study {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut cfg = StudyConfig::load(&root.join("studies/box_forward.toml")).unwrap();
    cfg.per_kind = 2;
    cfg.seed = Some(9);
    let content = Content::load(&cfg.content).unwrap();
    let text = std::fs::read_to_string(&cfg.stimuli).unwrap();
    let stimuli = sim2real::stimuli::parse_stimuli(&text, "stimuli").unwrap();
    let mut study = Study::new(cfg, content, &stimuli, clock).unwrap();
    study.attach_log(&dir.join("log.jsonl")).unwrap();
    study
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replaying_the_log_rebuilds_the_live_state(actions in prop::collection::vec(action(), 1..150)) {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(0));
        let mut study = open(dir.path(), clock.clone());
        let content = Content::load(&study.config().content).unwrap();
        let key: BTreeMap<String, String> =
            content.comprehension.iter().map(|q| (q.id().to_string(), content.key(q))).collect();

        for a in actions {
            let ids: Vec<String> = study.sessions().map(|s| s.id.clone()).collect();
            let pick = |i: usize| ids.get(i % ids.len().max(1)).cloned();
            // Errors are part of the protocol; only the final state matters.
            match a {
                Action::Create => {
                    let before = study.counts();
                    if let Ok(created) = study.create_session() {
                        let least = *before.values().min().unwrap();
                        prop_assert_eq!(before[&created.kind], least, "assigned a kind that was not least used");
                    }
                }
                Action::Advance(i) => if let Some(s) = pick(i) { let _ = study.advance(&s, BTreeMap::new()); },
                Action::Comprehend(i, ok) => if let Some(s) = pick(i) {
                    let answers = if ok { key.clone() } else { BTreeMap::new() };
                    let _ = study.submit_comprehension(&s, answers);
                },
                Action::Answer(i, answer, current) => if let Some(s) = pick(i) {
                    let session = study.session(&s).unwrap();
                    let k = session.responses.len();
                    let item = match (session.phase, current) {
                        (study_server::Phase::Training, true) => study.training_items()[k].id.clone(),
                        (study_server::Phase::Test, true) => {
                            let j = k - study.training_items().len();
                            study.test_items()[session.test_order[j]].id.clone()
                        }
                        _ => study.test_items()[i % 30].id.clone(),
                    };
                    let _ = study.submit_response(&s, &item, answer, 1);
                },
                Action::Tick(ms) => clock.advance(ms),
            }
        }

        let live: Vec<_> = study.sessions().cloned().collect();
        let csv = export_csv(&study, true);
        drop(study);
        let replayed = open(dir.path(), clock);
        prop_assert_eq!(live, replayed.sessions().cloned().collect::<Vec<_>>());
        prop_assert_eq!(csv, export_csv(&replayed, true));
    }
}
