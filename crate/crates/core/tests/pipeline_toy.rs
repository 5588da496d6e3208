//! Pipeline-level integration: caching, determinism, split hygiene, and the
//! attack-budget edge cases, all on the toy setup.

mod common;

use topodetect::attack::build_adv_dataset;
use topodetect::pipeline::cache::Cache;
use topodetect::pipeline::data::subset;
use topodetect::pipeline::report::report_to_json;
use topodetect::pipeline::{prepare, run_detection, ExperimentConfig};

#[test]
fn identical_config_and_seed_give_byte_identical_reports() {
    let cache = Cache::new(None);
    let config = ExperimentConfig::toy(11);
    let a = report_to_json(&run_detection(&config, &cache).unwrap()).unwrap();
    let b = report_to_json(&run_detection(&config, &cache).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cache_round_trip_reproduces_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(Some(dir.path().to_path_buf()));
    let config = ExperimentConfig::toy(12);

    // Cold run populates the cache; warm run must reuse it and agree.
    let cold = report_to_json(&run_detection(&config, &cache).unwrap()).unwrap();
    assert!(dir.path().read_dir().unwrap().next().is_some(), "cache populated");
    let warm = report_to_json(&run_detection(&config, &cache).unwrap()).unwrap();
    assert_eq!(cold, warm);

    // Deleting the cache and recomputing reproduces the identical report.
    for entry in dir.path().read_dir().unwrap() {
        std::fs::remove_file(entry.unwrap().path()).unwrap();
    }
    let recomputed = report_to_json(&run_detection(&config, &cache).unwrap()).unwrap();
    assert_eq!(cold, recomputed);
}

#[test]
fn clean_pool_never_intersects_attack_sources() {
    let cache = Cache::new(None);
    let config = ExperimentConfig::toy(13);
    let prepared = prepare(&config, &cache).unwrap();
    // The clean pool is the leading 40% of the test split; sources the rest.
    let clean_count = prepared.adv.clean_inputs.len();
    let clean_ids: std::collections::HashSet<usize> =
        prepared.split.test[..clean_count].iter().copied().collect();
    for example in &prepared.adv.adv {
        let source_id = prepared.split.test[example.source_index];
        assert!(!clean_ids.contains(&source_id));
    }
    // Every adversary still fools the network, and the default budget beats
    // the majority of correctly-classified sources.
    assert!(prepared.adv.verify(&prepared.network, &config.attack).unwrap());
    assert!(
        prepared.adv.success_rate > 0.5,
        "attack success rate {}",
        prepared.adv.success_rate
    );
}

#[test]
fn light_pruning_keeps_clean_accuracy() {
    let cache = Cache::new(None);
    let config = ExperimentConfig::toy(16);
    let rows =
        topodetect::pipeline::run_pruning_sweep(&config, &cache, &[0.0, 0.1]).unwrap();
    // The zero fraction is the unpruned network itself.
    let prepared = prepare(&config, &cache).unwrap();
    let test = subset(&prepared.dataset, &prepared.split.test);
    let baseline = prepared.network.accuracy(&test.inputs, &test.labels).unwrap();
    assert_eq!(rows[0].clean_accuracy, baseline);
    // Removing the 10% least-trained weights barely moves clean accuracy.
    assert!(
        (rows[0].clean_accuracy - rows[1].clean_accuracy).abs() <= 0.02,
        "{} vs {}",
        rows[0].clean_accuracy,
        rows[1].clean_accuracy
    );
}

#[test]
fn edge_comparison_shares_attack_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(Some(dir.path().to_path_buf()));
    let config = ExperimentConfig::toy(17);
    topodetect::pipeline::run_edge_comparison(&config, &cache).unwrap();
    // One trained network and one adversarial dataset serve both directions.
    let mut nets = 0;
    let mut advs = 0;
    for entry in dir.path().read_dir().unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.starts_with("net-") {
            nets += 1;
        } else if name.starts_with("adv-") {
            advs += 1;
        }
    }
    assert_eq!((nets, advs), (1, 1));
}

#[test]
fn edge_comparison_with_full_q_coincides() {
    let cache = Cache::new(None);
    let mut config = ExperimentConfig::toy(18);
    config.q = 1.0;
    let cmp = topodetect::pipeline::run_edge_comparison(&config, &cache).unwrap();
    assert_eq!(cmp.under_optimized.auc, cmp.well_optimized.auc);
    assert_eq!(cmp.under_optimized.scores, cmp.well_optimized.scores);
}

#[test]
fn zero_epsilon_fails_at_step_one() {
    let cache = Cache::new(None);
    let mut config = ExperimentConfig::toy(14);
    config.attack.epsilon = 0.0;
    let err = run_detection(&config, &cache).unwrap_err();
    assert!(matches!(err, topodetect::Error::EmptyAdvSplit));
}

#[test]
fn attack_success_rate_is_monotone_in_epsilon() {
    let cache = Cache::new(None);
    let config = ExperimentConfig::toy(15);
    let prepared = prepare(&config, &cache).unwrap();
    let test = subset(&prepared.dataset, &prepared.split.test);

    let mut last = 0.0;
    for eps in [0.0, 0.05, 0.1, 0.2] {
        let mut attack = config.attack.clone();
        attack.epsilon = eps;
        let rate = match build_adv_dataset(
            &prepared.network,
            &test.inputs,
            &test.labels,
            test.len() * 2 / 5,
            &attack,
        ) {
            Ok(ds) => ds.success_rate,
            Err(topodetect::Error::EmptyAdvSplit) => 0.0,
            Err(e) => panic!("unexpected error {e:?}"),
        };
        assert!(
            rate >= last,
            "success rate fell from {} to {} at eps {}",
            last,
            rate,
            eps
        );
        last = rate;
    }
    assert!(last > 0.9, "strongest budget should nearly always succeed");
}
