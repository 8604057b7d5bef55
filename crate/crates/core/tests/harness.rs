mod common;

use std::sync::Arc;

use common::*;
use treeinf::data_io::SplitSpec;
use treeinf::gbdt::{train, Dataset, LossFamily, TaskKind, TrainConfig};
use treeinf::harness::protocols::{corrupt_labels, noise_labels, regression_y_star};
use treeinf::harness::{
    affinity_counts, affinity_delta, choose_y_star, correlation_matrix, run_experiment, single_removal_experiment,
    DatasetSource, ExperimentReport, ExperimentSpec, Generator, Method, NamedConfig, Protocol, RunContext, SynthSpec,
};
use treeinf::influence::{EstimatorKind, EstimatorOptions, ModelCache, Target};
use treeinf::Error;

fn synth(generator: Generator, n: usize, seed: u64) -> DatasetSource {
    DatasetSource::Synth(SynthSpec {
        generator,
        n,
        seed,
        flip_fraction: 0.0,
    })
}

fn small_named(n_trees: usize) -> NamedConfig {
    NamedConfig {
        name: "small".into(),
        config: TrainConfig {
            n_trees,
            ..TrainConfig::default()
        },
    }
}

fn small_spec(protocol: Protocol, source: DatasetSource) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(protocol, vec![source]);
    spec.estimators = vec![
        Method::Estimator(EstimatorKind::BoostIn),
        Method::Estimator(EstimatorKind::TreeSim),
        Method::Estimator(EstimatorKind::Random),
    ];
    spec.n_targets = 4;
    spec.model_configs = vec![small_named(8)];
    spec
}

fn strip_environment(report: &ExperimentReport) -> serde_json::Value {
    let mut v = serde_json::to_value(report).unwrap();
    v.as_object_mut().unwrap().remove("environment");
    v
}

#[test]
fn zero_fraction_reproduces_the_baseline() {
    for protocol in [Protocol::SingleRemoval, Protocol::TargetedEdit, Protocol::MultiRemoval, Protocol::AddNoise] {
        let report = run_experiment(&small_spec(protocol, synth(Generator::Planted, 200, 1))).unwrap();
        assert!(report.audit.is_empty(), "{protocol}: {:?}", report.audit);
        for metric in ["loss", "delta_loss"] {
            let firsts: Vec<f64> = report.curves.iter().filter(|c| c.metric == metric).map(|c| c.values[0]).collect();
            assert_eq!(firsts.len(), 3, "{protocol} {metric}");
            assert!(firsts.iter().all(|&v| v == firsts[0]), "{protocol} {metric}: {firsts:?}");
            if metric == "delta_loss" {
                assert_eq!(firsts[0], 0.0);
            }
        }
        for c in &report.curves {
            assert_eq!((c.checkpoints[0], c.counts[0]), (0.0, 0));
            assert_eq!(c.checkpoints.len(), c.values.len());
        }
    }
}

#[test]
fn multi_removal_grid_is_five_percent_batches() {
    let grid = Protocol::MultiRemoval.default_checkpoints();
    let expect: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05).collect();
    assert_eq!(grid, expect);
}

#[test]
fn loo_single_removal_round_trip() {
    let data = synth(Generator::Planted, 120, 2).load().unwrap();
    let named = small_named(5);
    let ctx = RunContext::prepare(
        "planted",
        &data,
        &named,
        3,
        &SplitSpec::default(),
        &EstimatorOptions::default(),
        Arc::new(ModelCache::new(1 << 26)),
    )
    .unwrap();
    let n = ctx.n_train();
    let mut spec = ExperimentSpec::new(Protocol::SingleRemoval, vec![]);
    spec.estimators = vec![Method::Estimator(EstimatorKind::Loo)];
    spec.checkpoints = Some(vec![1.0 / n as f64]);
    spec.n_targets = 6;
    let out = single_removal_experiment(&ctx, &spec).unwrap();
    let curve = out.curves.iter().find(|c| c.metric == "delta_loss").unwrap();
    assert_eq!(curve.counts, vec![0, 1]);
    let loo = ctx.fit(Method::Estimator(EstimatorKind::Loo)).unwrap();
    let targets = ctx.sample_targets(6);
    let tops: Vec<f64> = targets
        .iter()
        .map(|&t| {
            let v = loo.influence(&ctx.target(t)).unwrap();
            v.values[v.ranking_descending()[0]]
        })
        .collect();
    let expect = tops.iter().sum::<f64>() / tops.len() as f64;
    assert!((curve.values[1] - expect).abs() < 1e-12, "{} vs {expect}", curve.values[1]);
}

#[test]
fn binary_y_star_opposes_the_prediction() {
    let data = random_dataset(4, 80, 2, TaskKind::Binary);
    let model = train(&data, &small_config(5, 1.0), LossFamily::Logistic).unwrap();
    for i in 0..data.n_rows() {
        let target = Target::from_row(&data, i);
        let y_star = choose_y_star(&model, &data, &target, 9).unwrap();
        assert_eq!(y_star, 1.0 - model.predict_label(&target.x).unwrap());
    }
    assert_eq!(regression_y_star(10.0, 12.0), 5.0);
}

#[test]
fn regression_noise_stays_in_range() {
    let data = random_dataset(5, 300, 2, TaskKind::Regression);
    let (lo, hi) = data.targets().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    for seed in 0..5 {
        assert!(noise_labels(&data, seed).iter().all(|&y| (lo..=hi).contains(&y)));
    }
}

#[test]
fn multiclass_noise_is_uniform_over_classes() {
    let data = random_dataset(6, 10_000, 2, TaskKind::Multiclass);
    let noise = noise_labels(&data, 11);
    let mut counts = [0.0f64; 3];
    for y in noise {
        counts[y as usize] += 1.0;
    }
    let expect = 10_000.0 / 3.0;
    let chi2: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
    // 99.9% quantile of chi-square with 2 degrees of freedom.
    assert!(chi2 < 13.82, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn corruption_changes_each_chosen_label_once() {
    let data = random_dataset(7, 200, 2, TaskKind::Multiclass);
    let changes = corrupt_labels(&data, 0.4, 3);
    assert_eq!(changes.len(), 80);
    let mut ids: Vec<usize> = changes.iter().map(|c| c.0).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 80);
    assert!(changes.iter().all(|&(i, y)| y != data.target(i)));
}

#[test]
fn fix_mislabeled_detection_is_monotone_and_complete() {
    let mut spec = small_spec(Protocol::FixMislabeled, synth(Generator::Flipped, 200, 3));
    spec.estimators.push(Method::Estimator(EstimatorKind::Loss));
    spec.estimators.push(Method::BoostInSelf);
    spec.checkpoints = Some(vec![0.1, 0.3, 0.6, 1.0]);
    let report = run_experiment(&spec).unwrap();
    let corrupted = report.runs[0].corrupted.unwrap() as f64;
    let curves: Vec<_> = report.curves.iter().filter(|c| c.metric == "detected").collect();
    assert_eq!(curves.len(), 5);
    for c in curves {
        assert!(c.values.windows(2).all(|w| w[0] <= w[1]), "{}: {:?}", c.estimator, c.values);
        assert_eq!(*c.values.last().unwrap(), corrupted, "{}", c.estimator);
    }
}

#[test]
fn random_order_detection_matches_the_binomial_expectation() {
    let seeds = 20;
    let mut spec = small_spec(Protocol::FixMislabeled, synth(Generator::Flipped, 250, 4));
    spec.estimators = vec![Method::Estimator(EstimatorKind::Random)];
    spec.checkpoints = Some(vec![0.3]);
    spec.n_seeds = seeds;
    let report = run_experiment(&spec).unwrap();
    let n = report.runs[0].n_train as f64;
    let corrupted = report.runs[0].corrupted.unwrap() as f64;
    let checked = report.curves[0].counts[1] as f64;
    let detected: Vec<f64> = report.curves_for("random", "detected").map(|c| c.values[1]).collect();
    assert_eq!(detected.len(), seeds as usize);
    let mean = detected.iter().sum::<f64>() / seeds as f64;
    let p = corrupted / n;
    let sd = (checked * p * (1.0 - p) / seeds as f64).sqrt();
    assert!((mean - checked * p).abs() <= 3.0 * sd, "mean {mean}, expected {}", checked * p);
}

#[test]
fn experiments_are_deterministic() {
    let mut spec = small_spec(Protocol::MultiRemoval, synth(Generator::Planted, 200, 5));
    spec.n_seeds = 2;
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(strip_environment(&a), strip_environment(&b));
}

#[test]
fn ranking_contexts_are_permutation_averages() {
    let report = run_experiment(&small_spec(Protocol::SingleRemoval, synth(Generator::Planted, 200, 6))).unwrap();
    let table = report.ranking.unwrap();
    let k = table.entries.len() as f64;
    assert_eq!(k, 3.0);
    assert!(!table.contexts.is_empty());
    for ctx in &table.contexts {
        assert!(ctx.checkpoint > 0.0);
        let sum: f64 = ctx.ranks.iter().sum();
        assert!((sum - k * (k + 1.0) / 2.0).abs() < 1e-12);
    }
    let random = table.entries.iter().find(|e| e.estimator == "random").unwrap();
    assert_eq!(random.relative_magnitude, Some(1.0));
}

#[test]
fn sequential_removal_starts_at_zero() {
    let mut spec = small_spec(Protocol::SequentialRemoval, synth(Generator::Planted, 150, 7));
    spec.checkpoints = Some(vec![0.03]);
    spec.reestimate = true;
    let report = run_experiment(&spec).unwrap();
    assert!(!report.trajectories.is_empty());
    for t in &report.trajectories {
        assert_eq!(t.delta_loss[0], 0.0);
        assert_eq!(t.removed.len() + 1, t.loss.len());
        let mut ids = t.removed.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), t.removed.len());
    }
}

#[test]
fn retrain_budget_is_enforced() {
    let mut spec = small_spec(Protocol::SingleRemoval, synth(Generator::Planted, 200, 8));
    spec.estimators = vec![Method::Estimator(EstimatorKind::Loo)];
    spec.max_retrains = 10;
    match run_experiment(&spec) {
        Err(Error::Budget { projected, cap }) => assert!(projected > cap && cap == 10),
        other => panic!("expected a budget error, got {other:?}"),
    }
}

#[test]
fn correlation_matrix_is_symmetric_with_unit_diagonal() {
    let data = Arc::new(random_dataset(9, 60, 3, TaskKind::Regression));
    let cfg = small_config(6, 1.0);
    let model = Arc::new(train(&data, &cfg, LossFamily::SquaredError).unwrap());
    let retrainer = treeinf::influence::Retrainer::new(data.clone(), cfg, LossFamily::SquaredError);
    let targets: Vec<Target> = (0..5).map(|i| Target::from_row(&data, i * 3)).collect();
    let sets: Vec<(String, Vec<_>)> = [EstimatorKind::BoostIn, EstimatorKind::LeafInfSp, EstimatorKind::TreeSim]
        .iter()
        .map(|&k| {
            let e = treeinf::influence::Explainer::fit(k, model.clone(), &retrainer, &EstimatorOptions::default()).unwrap();
            (k.name().to_string(), e.influence_many(&targets).unwrap())
        })
        .collect();
    let report = correlation_matrix(&sets).unwrap();
    for m in [&report.spearman, &report.pearson] {
        for i in 0..3 {
            assert_eq!(m[i][i], Some(1.0));
            for j in 0..3 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
    }
}

#[test]
fn affinity_counts_every_tree_for_identical_rows() {
    let data = random_dataset(10, 50, 2, TaskKind::Multiclass);
    let model = train(&data, &small_config(4, 1.0), LossFamily::Softmax).unwrap();
    let counts = affinity_counts(&model, &data, data.row(7)).unwrap();
    assert_eq!(counts[7], 4 * 3);
    assert!(counts.iter().all(|&c| c <= 12));
}

#[test]
fn stump_affinity_delta_is_zero() {
    let data = stump();
    let cfg = stump_config();
    let before = train(&data, &cfg, LossFamily::SquaredError).unwrap();
    let kept = vec![1];
    let after = train(&data.subset(&kept).unwrap(), &cfg, LossFamily::SquaredError).unwrap();
    let delta = affinity_delta(&before, &after, &data, &kept, data.row(0)).unwrap();
    assert_eq!(delta, vec![0]);
    let single = Dataset::regression(vec![0.0], 1, vec![1.0]).unwrap();
    assert!(affinity_counts(&before, &single, &[0.0]).unwrap() == vec![1]);
}
