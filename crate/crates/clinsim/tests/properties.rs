//! Randomized invariants over the protocol, record statistics, and
//! evaluation math.

use std::collections::BTreeSet;

use proptest::prelude::*;

use clinsim::evaluation::{aggregate_scores, entity_metrics};
use clinsim::protocol::{parse_utterance, render_utterance, Role, RoutingConfig, Utterance};
use clinsim::records::{corpus_stats, MedicalRecord, ReferenceDiagnosis, SubjectiveInfo};

fn role() -> impl Strategy<Value = Role> {
    prop_oneof![
        Just(Role::Patient),
        Just(Role::Doctor),
        Just(Role::Examiner),
        Just(Role::ChiefPhysician),
    ]
}

fn content() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9][a-zA-Z0-9 ,.?]{0,60}[a-zA-Z0-9]".prop_map(|s| s.trim().to_string())
}

proptest! {
    #[test]
    fn utterance_round_trip(
        speaker in role(),
        addressee in role(),
        text in content(),
        terminal in any::<bool>(),
    ) {
        prop_assume!(speaker != addressee);
        let terminal = terminal && speaker == Role::Patient;
        let routing = RoutingConfig::default_en();
        let mut utterance = Utterance::new(speaker, addressee, text);
        utterance.terminal = terminal;
        let rendered = render_utterance(&utterance, &routing).unwrap();
        let parsed = parse_utterance(&rendered, speaker, &routing, None).unwrap();
        prop_assert_eq!(parsed, utterance);
    }

    #[test]
    fn histogram_totals_match(departments in proptest::collection::vec("[A-Z][a-z]{1,8}", 1..40)) {
        let corpus: Vec<MedicalRecord> = departments
            .iter()
            .enumerate()
            .map(|(i, dept)| MedicalRecord {
                id: format!("r-{i}"),
                department: dept.clone(),
                subjective: SubjectiveInfo {
                    chief_complaint_hint: None,
                    present_illness: "x".into(),
                    past_history: String::new(),
                    personal_history: String::new(),
                    basic_profile: String::new(),
                },
                objective: vec![],
                reference: ReferenceDiagnosis {
                    results: vec!["d".into()],
                    rationales: String::new(),
                    treatment: String::new(),
                },
                persona: None,
            })
            .collect();
        let histogram = corpus_stats(&corpus).unwrap();
        prop_assert_eq!(histogram.total, corpus.len());
        prop_assert_eq!(histogram.counts.values().sum::<usize>(), corpus.len());
        for count in histogram.counts.values() {
            prop_assert!(*count >= 1);
        }
    }

    #[test]
    fn entity_metric_bounds(
        pred in proptest::collection::btree_set(0u8..12, 0..7),
        gold in proptest::collection::btree_set(0u8..12, 0..7),
    ) {
        let pred: BTreeSet<String> = pred.iter().map(|v| v.to_string()).collect();
        let gold: BTreeSet<String> = gold.iter().map(|v| v.to_string()).collect();
        let m = entity_metrics(&pred, &gold);
        prop_assert!((0.0..=1.0).contains(&m.precision));
        prop_assert!((0.0..=1.0).contains(&m.recall));
        prop_assert!((0.0..=1.0).contains(&m.f1));
        if m.precision + m.recall > 0.0 {
            let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - harmonic).abs() < 1e-12);
        } else {
            prop_assert_eq!(m.f1, 0.0);
        }
    }

    #[test]
    fn aggregation_is_seed_deterministic(
        values in proptest::collection::vec(0.0f64..100.0, 1..50),
        seed in any::<u64>(),
    ) {
        let a = aggregate_scores(&values, 200, seed).unwrap();
        let b = aggregate_scores(&values, 200, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
