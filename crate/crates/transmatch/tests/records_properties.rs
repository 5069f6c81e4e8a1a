use proptest::prelude::*;
use transmatch::records::{aggregate, aggregate_all, read_records, to_json_line, ResultRecord, Setting};
use transmatch_core::data::EpisodeSpec;
use transmatch_core::method::Method;

fn record(method: Method, index: usize, correct: usize) -> ResultRecord {
    ResultRecord {
        method,
        setting: Setting::from_spec(&EpisodeSpec::default()),
        episode_index: index,
        episode_seed: 31 * index as u64,
        correct,
        total: 75,
        accuracy: correct as f64 / 75.0,
        config_hash: "0123abcd".into(),
    }
}

proptest! {
    #[test]
    fn aggregates_ignore_record_order(corrects in prop::collection::vec(0usize..=75, 2..30), seed in any::<u64>()) {
        let records: Vec<ResultRecord> = corrects.iter().enumerate().map(|(i, &c)| record(Method::Transmatch, i, c)).collect();
        let mut shuffled = records.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, state as usize % (i + 1));
        }
        let a = aggregate(&records.iter().collect::<Vec<_>>()).unwrap();
        let b = aggregate(&shuffled.iter().collect::<Vec<_>>()).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.ci95 - b.ci95).abs() < 1e-12);
        prop_assert_eq!(a.n_episodes, corrects.len());
    }

    #[test]
    fn records_survive_a_json_round_trip(corrects in prop::collection::vec(0usize..=75, 1..10)) {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("records.jsonl");
        let records: Vec<ResultRecord> = corrects.iter().enumerate().map(|(i, &c)| record(Method::Imprinting, i, c)).collect();
        let text: String = records.iter().map(to_json_line).collect();
        std::fs::write(&path, text).unwrap();
        let loaded = read_records(&path).unwrap();
        prop_assert!(loaded.warnings.is_empty());
        prop_assert_eq!(loaded.records, records);
    }
}

#[test]
fn aggregate_all_keeps_methods_apart() {
    let mut records = Vec::new();
    for i in 0..4 {
        records.push(record(Method::Imprinting, i, 30));
        records.push(record(Method::Transmatch, i, 45));
    }
    let aggs = aggregate_all(&records).unwrap();
    assert_eq!(aggs.len(), 2);
    assert_eq!(aggs[0].method, Method::Imprinting);
    assert!((aggs[0].mean - 0.4).abs() < 1e-12);
    assert!((aggs[1].mean - 0.6).abs() < 1e-12);
    assert!(aggs.iter().all(|a| a.ci95 < 1e-12));
}
