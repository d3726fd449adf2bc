//! Cross-module pipeline flow on a small synthetic dataset.

use windarb_core::arbitration::{
    arbitrate, mean_arbitrate, train_arbitration, ArbitrationKind,
};
use windarb_core::evaluation::compute_metrics;
use windarb_core::first_stage::{
    score_recording, train_first_stage, FeatureConfig,
};
use windarb_core::label::Label;
use windarb_core::mlp::{Activation, MlpConfig, TrainConfig};
use windarb_core::synth::{generate_dataset, GeneratorConfig, Recording};
use windarb_core::windowing::{segment, Window, WindowingConfig};

fn small_generator() -> GeneratorConfig {
    GeneratorConfig {
        duration_s: 300.0,
        n_normal_train: 10,
        n_abnormal_train: 10,
        n_normal_test: 6,
        n_abnormal_test: 6,
        event_rate_per_recording: 3.0,
        rng_seed: 5,
        ..GeneratorConfig::default()
    }
}

fn small_windowing() -> WindowingConfig {
    WindowingConfig {
        window_len_s: 60.0,
        start_offset_s: 60.0,
        max_span_s: 240.0,
        max_windows: 4,
    }
}

#[test]
fn windows_cover_the_span_and_inherit_labels() {
    let (train, _) = generate_dataset(&small_generator()).unwrap();
    let wcfg = small_windowing();
    for recording in &train {
        let windows = segment(recording, &wcfg).unwrap();
        assert_eq!(windows.len(), 4);
        for (i, w) in windows.iter().enumerate() {
            assert_eq!(w.index, i);
            assert_eq!(w.inherited_label, recording.label);
            assert!(w.contains_event.is_some());
        }
        // spans are disjoint, ordered, and inside the usable span
        for pair in windows.windows(2) {
            assert!(pair[0].start_s + pair[0].length_s <= pair[1].start_s + 1e-9);
        }
        let last = windows.last().unwrap();
        assert!(last.start_s + last.length_s <= wcfg.start_offset_s + wcfg.max_span_s + 1e-9);
    }
}

#[test]
fn two_stage_pipeline_beats_the_mean_rule_end_to_end() {
    let gcfg = small_generator();
    let wcfg = small_windowing();
    let fcfg = FeatureConfig::for_generator(&gcfg);
    let (train, test) = generate_dataset(&gcfg).unwrap();

    let train_windows: Vec<Window> = train
        .iter()
        .flat_map(|r| segment(r, &wcfg).unwrap())
        .collect();
    let mcfg = MlpConfig::new(fcfg.feature_len(gcfg.channels), 1, 16, Activation::Relu);
    let stage_tcfg = TrainConfig {
        epochs: 40,
        seed: 1,
        ..TrainConfig::default()
    };
    let stage = train_first_stage(&train_windows, &fcfg, &mcfg, &stage_tcfg).unwrap();

    let score_split = |recs: &[Recording]| {
        recs.iter()
            .map(|r| score_recording(&stage, r, &wcfg).unwrap())
            .collect::<Vec<_>>()
    };
    let train_scores = score_split(&train);
    let test_scores = score_split(&test);

    let arb_tcfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 400,
        seed: 2,
        ..TrainConfig::default()
    };
    let arb_mcfg = MlpConfig::new(14, 0, 10, Activation::Relu);
    let model = train_arbitration(
        &train_scores,
        ArbitrationKind::Hybrid,
        4,
        10,
        &arb_mcfg,
        &arb_tcfg,
    )
    .unwrap();

    let truth: Vec<Label> = test_scores.iter().map(|r| r.true_label).collect();
    let learned: Vec<Label> = test_scores.iter().map(|r| arbitrate(&model, r).unwrap()).collect();
    let mean_rule: Vec<Label> = test_scores.iter().map(|r| mean_arbitrate(r).unwrap()).collect();
    let learned_metrics = compute_metrics(&learned, &truth).unwrap();
    let mean_metrics = compute_metrics(&mean_rule, &truth).unwrap();
    assert!(
        learned_metrics.accuracy >= mean_metrics.accuracy,
        "learned arbitration {} should not trail the mean rule {}",
        learned_metrics.accuracy,
        mean_metrics.accuracy
    );
    // sane on this easy configuration
    assert!(learned_metrics.accuracy > 0.7, "{learned_metrics:?}");
}
