//! End-to-end detection pipeline on small synthetic corpora.

use bootscan_core::config::PipelineConfig;
use bootscan_core::ensemble::{BaselineMode, ReferenceStore};
use bootscan_core::eval::{self, analyze_with_model};
use bootscan_core::synth::{self, CorpusConfig};
use bootscan_core::trace::Label;

fn small_corpus_config() -> CorpusConfig {
    CorpusConfig {
        profiles: 2,
        legit_per_app: 18,
        malicious_per_app: 6,
        base_length: 900,
        ..Default::default()
    }
}

fn pipeline_config() -> PipelineConfig {
    PipelineConfig {
        max_len: 700,
        ..Default::default()
    }
}

#[test]
fn known_samples_classify_correctly() {
    let corpus = synth::generate(&small_corpus_config()).unwrap();
    let config = pipeline_config();
    let app = &corpus.apps[0];
    let model = eval::app_model(
        &app.legitimate,
        &config,
        config.max_len,
        BaselineMode::PerBag,
    )
    .unwrap();

    // A sample drawn from the reference set itself must come back
    // legitimate.
    let (verdict, _) = analyze_with_model(&app.legitimate[0], &model, &config).unwrap();
    assert_eq!(verdict.label, Label::Legitimate, "p = {}", verdict.p_value);

    // A payload-carrying sample must be flagged.
    let (verdict, _) = analyze_with_model(&app.malicious[0], &model, &config).unwrap();
    assert_eq!(verdict.label, Label::Malicious, "p = {}", verdict.p_value);
}

#[test]
fn cross_validation_isolates_tested_samples() {
    let corpus = synth::generate(&small_corpus_config()).unwrap();
    let config = pipeline_config();
    let report = eval::cross_validate(&corpus, &config).unwrap();
    assert_eq!(report.splits.len(), corpus.apps.len());
    for (split, app) in report.splits.iter().zip(&corpus.apps) {
        let mut all: Vec<usize> = split.groups.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..app.legitimate.len()).collect::<Vec<_>>());
        for g in 0..3 {
            for h in (g + 1)..3 {
                assert!(split.groups[g].iter().all(|i| !split.groups[h].contains(i)));
            }
        }
    }
    assert!((0.0..=1.0).contains(&report.fpr));
}

#[test]
fn evaluation_reports_are_deterministic() {
    let corpus_config = small_corpus_config();
    let config = pipeline_config();
    let lengths = [200, 700];
    let run = || {
        let corpus = synth::generate(&corpus_config).unwrap();
        eval::sweep_length(&corpus, &lengths, &config).unwrap().to_csv()
    };
    assert_eq!(run(), run());
}

#[test]
fn disk_store_round_trip_feeds_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth::generate(&small_corpus_config()).unwrap();
    let config = pipeline_config();
    let app = &corpus.apps[0];

    // Build a disk store from the app's legitimate samples.
    let app_dir = dir.path().join(&app.app_id);
    std::fs::create_dir_all(&app_dir).unwrap();
    let mut entries = Vec::new();
    for (i, seq) in app.legitimate.iter().enumerate() {
        let name = format!("seq_{i:04}.seq");
        let file = bootscan_core::trace::SequenceFile {
            app_id: seq.app_id.clone(),
            device_id: seq.device_id.clone(),
            label: seq.label,
            names: seq.names(&corpus.alphabet).iter().map(|s| s.to_string()).collect(),
        };
        file.write_to(&app_dir.join(&name)).unwrap();
        entries.push(name);
    }
    bootscan_core::ensemble::Manifest {
        capacity: 150,
        entries,
    }
    .write_to(&app_dir.join("manifest.json"))
    .unwrap();

    let store = ReferenceStore::load(dir.path(), &corpus.alphabet, config.max_len).unwrap();
    assert_eq!(store.len(&app.app_id), app.legitimate.len());

    let (verdict, _) = eval::analyze(&app.malicious[0], &store, &app.app_id, &config).unwrap();
    assert_eq!(verdict.label, Label::Malicious);
    let (verdict, _) = eval::analyze(&app.legitimate[3], &store, &app.app_id, &config).unwrap();
    assert_eq!(verdict.label, Label::Legitimate);
}

#[test]
fn corpus_disk_round_trip_preserves_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_config = small_corpus_config();
    let corpus = synth::generate(&corpus_config).unwrap();
    synth::write_corpus(&corpus, &corpus_config, dir.path()).unwrap();
    let (loaded, loaded_config) = synth::load_corpus(dir.path()).unwrap();
    assert_eq!(loaded_config, corpus_config);
    assert_eq!(
        synth::corpus_fingerprint(&loaded),
        synth::corpus_fingerprint(&corpus)
    );
}
