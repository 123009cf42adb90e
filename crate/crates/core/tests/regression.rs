use orderinfo::consistency::ConsistencyRecord;
use orderinfo::regression::{
    compare, holdout_comparison, predict, rope, simulate_curves, simulate_dataset, standardize, FitConfig, MixedModelSpec,
    PosteriorDraws, RegressionError, SdConvention, SimConfig, DEFAULT_ROPE,
};

fn fast() -> FitConfig {
    FitConfig { warmup: 300, draws: 300, ..Default::default() }
}

fn sample(design: &orderinfo::regression::DesignMatrix, spec: &MixedModelSpec) -> PosteriorDraws {
    orderinfo::regression::sample(design, spec, &fast()).unwrap()
}

fn without_length() -> MixedModelSpec {
    MixedModelSpec { include_length: false, ..Default::default() }
}

#[test]
fn bic_prefers_length_only_when_it_matters() {
    let (recs, _) = simulate_dataset(&SimConfig { beta_len: -0.8, seed: 3, ..Default::default() }).unwrap();
    let d = standardize(&recs, SdConvention::Sample).unwrap();
    let c = compare(&d, &sample(&d, &MixedModelSpec::default()), &sample(&d, &without_length())).unwrap();
    assert!(c.log_bf > 5.0, "{c:?}");

    let (recs, _) = simulate_dataset(&SimConfig { beta_len: 0.0, seed: 3, ..Default::default() }).unwrap();
    let d = standardize(&recs, SdConvention::Sample).unwrap();
    let c = compare(&d, &sample(&d, &MixedModelSpec::default()), &sample(&d, &without_length())).unwrap();
    assert!(c.log_bf < 2.0, "{c:?}");
}

#[test]
fn holdout_comparison_agrees_on_a_strong_effect() {
    let (recs, _) = simulate_dataset(&SimConfig { beta_len: -0.8, seed: 4, ..Default::default() }).unwrap();
    let d = standardize(&recs, SdConvention::Sample).unwrap();
    let train = d.subset(|i| i % 4 != 0);
    let test = d.subset(|i| i % 4 == 0);
    let h = holdout_comparison(&test, &sample(&train, &MixedModelSpec::default()), &sample(&train, &without_length())).unwrap();
    assert_eq!(h.n_rows, 500);
    assert!(h.diff > 2.0 * h.diff_se, "{h:?}");
    let with = sample(&train, &MixedModelSpec::default());
    assert!(matches!(compare(&d, &with, &with), Err(RegressionError::RowMismatch)));
}

#[test]
fn rope_decision_ignores_task_labels() {
    let (recs, _) = simulate_dataset(&SimConfig { seed: 5, ..Default::default() }).unwrap();
    // task0..task4 become x4..x0, reversing the task order.
    let relabelled: Vec<ConsistencyRecord> = recs
        .iter()
        .map(|r| {
            let k: usize = r.task["task".len()..].parse().unwrap();
            ConsistencyRecord { task: format!("x{}", 4 - k), ..r.clone() }
        })
        .collect();
    let a = standardize(&recs, SdConvention::Sample).unwrap();
    let b = standardize(&relabelled, SdConvention::Sample).unwrap();
    let ra = rope(&sample(&a, &MixedModelSpec::default()), "beta_pmi", DEFAULT_ROPE).unwrap();
    let rb = rope(&sample(&b, &MixedModelSpec::default()), "beta_pmi", DEFAULT_ROPE).unwrap();
    assert_eq!(ra.effective, rb.effective);
    assert!(ra.effective);
    assert!((ra.mass_outside - rb.mass_outside).abs() < 0.02);
}

#[test]
fn curve_points_match_pointwise_predictions() {
    let (recs, _) = simulate_dataset(&SimConfig { n_rows: 600, seed: 6, ..Default::default() }).unwrap();
    let d = standardize(&recs, SdConvention::Sample).unwrap();
    let draws = sample(&d, &MixedModelSpec::default());
    let curves = simulate_curves(&draws, &d, 11);
    for (k, task) in d.tasks.iter().enumerate() {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| d.task[i] == k).collect();
        let lowest = *rows.iter().min_by(|&&a, &&b| d.pmi_raw[a].total_cmp(&d.pmi_raw[b])).unwrap();
        let mean_len = rows.iter().map(|&i| d.x_len[i]).sum::<f64>() / rows.len() as f64;
        let first = curves.iter().find(|c| &c.task == task).unwrap();
        assert_eq!(first.pmi_bits, d.pmi_raw[lowest]);
        let p = predict(&draws, d.x_pmi[lowest], mean_len, Some(k));
        assert!((first.mean - p.mean).abs() < 1e-12);
        let pts: Vec<f64> = curves.iter().filter(|c| &c.task == task).map(|c| c.mean).collect();
        assert_eq!(pts.len(), 11);
    }
}

#[test]
fn zero_weights_predict_even_odds() {
    let (recs, _) = simulate_dataset(&SimConfig { n_rows: 100, ..Default::default() }).unwrap();
    let d = standardize(&recs, SdConvention::Sample).unwrap();
    let mut draws = sample(&d, &MixedModelSpec::default());
    for chain in &mut draws.chains {
        for draw in chain {
            draw.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    for k in 0..d.n_tasks() {
        assert_eq!(predict(&draws, 0.0, 0.0, Some(k)).mean, 0.5);
    }
}
