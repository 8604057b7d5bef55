//! Remove-and-retrain protocols.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::analysis::rank_aggregate;
use super::report::{AuditRecord, ExperimentReport, MetricCurve, RunSummary, Trajectory};
use super::spec::{checkpoint_count, inspection_count, ExperimentSpec, Method, NamedConfig, Protocol};
use super::stats::{evaluate, PredictiveMetric};
use crate::data_io::{split_indices, SplitSpec};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{Dataset, GbdtModel, LossFamily, TaskKind};
use crate::influence::{aggregate_influence, EstimatorKind, EstimatorOptions, Explainer, InfluenceVector, ModelCache, Retrainer, Target};

const TARGET_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const CORRUPT_STREAM: u64 = 4;
const EDIT_STREAM: u64 = 1 << 32;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One (dataset, model config, seed) run: split, base model and retrainer.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub dataset: String,
    pub model_config: String,
    pub seed: u64,
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
    pub retrainer: Retrainer,
    pub model: Arc<GbdtModel>,
    pub options: EstimatorOptions,
    cache: Arc<ModelCache>,
}

impl RunContext {
    pub fn prepare(
        dataset_name: &str,
        data: &Dataset,
        config: &NamedConfig,
        seed: u64,
        split: &SplitSpec,
        options: &EstimatorOptions,
        cache: Arc<ModelCache>,
    ) -> Result<Self> {
        let split = SplitSpec {
            rng_seed: seed,
            ..split.clone()
        };
        let idx = split_indices(data, &split)?;
        let train = Arc::new(data.subset(&idx.train)?);
        let test = Arc::new(data.subset(&idx.test)?);
        let loss = LossFamily::for_task(data.task());
        let retrainer = Retrainer::new(train.clone(), config.config.clone(), loss)
            .with_cache(cache.clone())
            .with_env_disk_cache();
        let model = Arc::new(retrainer.train_full()?);
        Ok(Self {
            dataset: dataset_name.to_string(),
            model_config: config.name.clone(),
            seed,
            train,
            test,
            retrainer,
            model,
            options: EstimatorOptions {
                seed,
                ..options.clone()
            },
            cache,
        })
    }

    /// Same run on a different training set.
    pub fn with_train(&self, train: Dataset) -> Result<Self> {
        let train = Arc::new(train);
        let retrainer = Retrainer::new(train.clone(), self.retrainer.config().clone(), self.retrainer.loss())
            .with_cache(self.cache.clone())
            .with_env_disk_cache();
        let model = Arc::new(retrainer.train_full()?);
        Ok(Self {
            train,
            retrainer,
            model,
            ..self.clone()
        })
    }

    pub fn fit(&self, method: Method) -> Result<Explainer> {
        Explainer::fit(method.estimator(), self.model.clone(), &self.retrainer, &self.options)
    }

    pub fn n_train(&self) -> usize {
        self.train.n_rows()
    }

    pub fn target(&self, test_index: usize) -> Target {
        Target::from_row(&self.test, test_index)
    }

    /// Test rows used as targets, ascending.
    pub fn sample_targets(&self, k: usize) -> Vec<usize> {
        let n = self.test.n_rows();
        let mut rng = stream_rng(self.seed, TARGET_STREAM);
        let mut picked = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
        picked.sort_unstable();
        picked
    }

    /// Validation targets and held-out rows drawn from the test set.
    pub fn validation_split(&self, fraction: f64, min_size: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = self.test.n_rows();
        if n < 2 {
            return Err(invalid("test set needs at least two rows for a validation split"));
        }
        let k = ((fraction * n as f64).ceil() as usize).max(min_size).min(n - 1);
        let mut rng = stream_rng(self.seed, VALIDATION_STREAM);
        let mut val = rand::seq::index::sample(&mut rng, n, k).into_vec();
        val.sort_unstable();
        let chosen: HashSet<usize> = val.iter().copied().collect();
        let held = (0..n).filter(|i| !chosen.contains(i)).collect();
        Ok((val, held))
    }

    fn audit(&self, method: Option<Method>, target_id: Option<usize>, message: String) -> AuditRecord {
        AuditRecord {
            dataset: self.dataset.clone(),
            model_config: self.model_config.clone(),
            seed: self.seed,
            estimator: method.map(|m| m.name().to_string()),
            target_id,
            message,
        }
    }

    fn curve(&self, method: Method, metric: &str, fractions: &[f64], counts: &[usize], values: Vec<f64>) -> MetricCurve {
        MetricCurve {
            dataset: self.dataset.clone(),
            model_config: self.model_config.clone(),
            estimator: method.name().to_string(),
            seed: self.seed,
            metric: metric.to_string(),
            checkpoints: std::iter::once(0.0).chain(fractions.iter().copied()).collect(),
            counts: std::iter::once(0).chain(counts.iter().copied()).collect(),
            values,
        }
    }
}

/// Curves, trajectories and skips produced by one protocol on one run.
#[derive(Debug, Clone, Default)]
pub struct ProtocolOutput {
    pub curves: Vec<MetricCurve>,
    pub trajectories: Vec<Trajectory>,
    pub audit: Vec<AuditRecord>,
    pub corrupted: Option<usize>,
    pub n_targets: usize,
    pub predictive_metric: Option<PredictiveMetric>,
}

/// Edit label `y*` for a target: the other class for binary tasks, a
/// random other class for multiclass, `ȳ ∓ ȳ/2` for regression.
pub fn choose_y_star(model: &GbdtModel, train: &Dataset, target: &Target, seed: u64) -> Result<f64> {
    let raw = model.predict_raw(&target.x)?;
    Ok(match train.task() {
        TaskKind::Binary => 1.0 - model.predict_label(&target.x)?,
        TaskKind::Multiclass => {
            let c = train.n_classes();
            let pred = model.predict_label(&target.x)? as usize;
            let mut rng = stream_rng(seed, EDIT_STREAM + target.id as u64);
            ((pred + 1 + rng.random_range(0..c - 1)) % c) as f64
        }
        TaskKind::Regression => regression_y_star(train.mean_target(), raw[0]),
    })
}

pub fn regression_y_star(mean: f64, prediction: f64) -> f64 {
    if prediction > mean {
        mean - mean / 2.0
    } else {
        mean + mean / 2.0
    }
}

/// Replacement labels for the noise protocol, one per training row:
/// flipped for binary, uniform over all classes for multiclass, uniform
/// over `[min y, max y]` for regression.
pub fn noise_labels(train: &Dataset, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, NOISE_STREAM);
    let (lo, hi) = target_range(train);
    train
        .targets()
        .iter()
        .map(|&y| match train.task() {
            TaskKind::Binary => 1.0 - y,
            TaskKind::Multiclass => rng.random_range(0..train.n_classes()) as f64,
            TaskKind::Regression => uniform(&mut rng, lo, hi),
        })
        .collect()
}

/// Corrupts `fraction` of the training labels.  Returns the corrupted
/// indices (ascending) with their new labels; multiclass labels move to a
/// different class.
pub fn corrupt_labels(train: &Dataset, fraction: f64, seed: u64) -> Vec<(usize, f64)> {
    let n = train.n_rows();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut rng = stream_rng(seed, CORRUPT_STREAM);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    let (lo, hi) = target_range(train);
    idx.into_iter()
        .map(|i| {
            let y = train.target(i);
            let new = match train.task() {
                TaskKind::Binary => 1.0 - y,
                TaskKind::Multiclass => {
                    let c = train.n_classes();
                    ((y as usize + 1 + rng.random_range(0..c - 1)) % c) as f64
                }
                TaskKind::Regression => uniform(&mut rng, lo, hi),
            };
            (i, new)
        })
        .collect()
}

fn target_range(d: &Dataset) -> (f64, f64) {
    d.targets()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn counts_for(fractions: &[f64], n: usize) -> Vec<usize> {
    fractions.iter().map(|&f| checkpoint_count(f, n)).collect()
}

/// Scores one target; BoostIn self-influence ignores the target.
fn target_scores(ex: &Explainer, method: Method, target: &Target) -> Result<InfluenceVector> {
    match method {
        Method::BoostInSelf => ex
            .self_influence()
            .ok_or_else(|| invalid("self-influence needs BoostIn")),
        Method::Estimator(_) => ex.influence(target),
    }
}

/// Ordering scores summed over validation targets.
fn aggregate_scores(ex: &Explainer, method: Method, targets: &[Target]) -> Result<InfluenceVector> {
    match method {
        Method::BoostInSelf => target_scores(ex, method, &targets[0]),
        Method::Estimator(EstimatorKind::Loss) => ex.influence(&targets[0]),
        Method::Estimator(_) => aggregate_influence(&ex.influence_many(targets)?),
    }
}

/// Averages per-target series over the targets that succeeded.
fn average_targets(
    ctx: &RunContext,
    method: Method,
    targets: &[usize],
    run: impl Fn(usize) -> Result<Vec<f64>> + Sync,
    out: &mut ProtocolOutput,
) -> Option<Vec<f64>> {
    let results: Vec<(usize, Result<Vec<f64>>)> = targets.par_iter().map(|&t| (t, run(t))).collect();
    let mut sum: Option<Vec<f64>> = None;
    let mut ok = 0usize;
    for (t, r) in results {
        match r {
            Ok(v) => {
                ok += 1;
                match &mut sum {
                    None => sum = Some(v),
                    Some(s) => s.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
                }
            }
            Err(e) => {
                log::warn!("{} on {} target {t}: {e}", method, ctx.dataset);
                out.audit.push(ctx.audit(Some(method), Some(t), e.to_string()));
            }
        }
    }
    sum.map(|s| s.into_iter().map(|x| x / ok as f64).collect())
}

/// Mean target loss and its change from the base model.
fn target_loss_curves(ctx: &RunContext, method: Method, fractions: &[f64], counts: &[usize], losses: Vec<f64>) -> [MetricCurve; 2] {
    let delta = losses.iter().map(|l| l - losses[0]).collect();
    [
        ctx.curve(method, "loss", fractions, counts, losses),
        ctx.curve(method, "delta_loss", fractions, counts, delta),
    ]
}

/// Remove the top-ranked training instances for each target and measure
/// the target's loss change.
pub fn single_removal_experiment(ctx: &RunContext, spec: &ExperimentSpec) -> Result<ProtocolOutput> {
    let fractions = spec.checkpoint_fractions();
    let counts = counts_for(&fractions, ctx.n_train());
    let targets = ctx.sample_targets(spec.n_targets);
    let mut out = ProtocolOutput {
        n_targets: targets.len(),
        ..Default::default()
    };
    for &method in &spec.estimators {
        let ex = ctx.fit(method)?;
        let run = |t: usize| -> Result<Vec<f64>> {
            let target = ctx.target(t);
            let base = ctx.model.loss_at(&target.x, target.y)?;
            let order = target_scores(&ex, method, &target)?.ranking_descending();
            let mut losses = vec![base];
            for &k in &counts {
                let keep = ctx.retrainer.complement(&order[..k])?;
                let m = ctx.retrainer.compact_on(&keep, &[])?;
                losses.push(m.loss_at(&target.x, target.y)?);
            }
            Ok(losses)
        };
        if let Some(losses) = average_targets(ctx, method, &targets, run, &mut out) {
            out.curves.extend(target_loss_curves(ctx, method, &fractions, &counts, losses));
        }
    }
    Ok(out)
}

/// Relabel the top-ranked training instances to `y*` and measure the
/// target's loss change.
pub fn targeted_edit_experiment(ctx: &RunContext, spec: &ExperimentSpec) -> Result<ProtocolOutput> {
    let fractions = spec.checkpoint_fractions();
    let counts = counts_for(&fractions, ctx.n_train());
    let targets = ctx.sample_targets(spec.n_targets);
    let mut out = ProtocolOutput {
        n_targets: targets.len(),
        ..Default::default()
    };
    let all: Vec<usize> = (0..ctx.n_train()).collect();
    for &method in &spec.estimators {
        let ex = ctx.fit(method)?;
        let run = |t: usize| -> Result<Vec<f64>> {
            let target = ctx.target(t);
            let base = ctx.model.loss_at(&target.x, target.y)?;
            let y_star = choose_y_star(&ctx.model, &ctx.train, &target, ctx.seed)?;
            let scores = if method.is_random() {
                ex.influence(&target)?
            } else {
                ex.edit_influence(&target, y_star)?
            };
            let order = scores.ranking_descending();
            let mut losses = vec![base];
            for &k in &counts {
                let relabel: Vec<(usize, f64)> = order[..k].iter().map(|&i| (i, y_star)).collect();
                let m = ctx.retrainer.compact_on(&all, &relabel)?;
                losses.push(m.loss_at(&target.x, target.y)?);
            }
            Ok(losses)
        };
        if let Some(losses) = average_targets(ctx, method, &targets, run, &mut out) {
            out.curves.extend(target_loss_curves(ctx, method, &fractions, &counts, losses));
        }
    }
    Ok(out)
}

struct Holdout {
    validation: Vec<Target>,
    held_out: Dataset,
    metric: PredictiveMetric,
}

fn holdout(ctx: &RunContext, spec: &ExperimentSpec) -> Result<Holdout> {
    let (val, held) = ctx.validation_split(spec.validation_fraction, spec.min_validation)?;
    if val.len() < spec.min_validation {
        log::warn!(
            "{}: only {} validation targets available (floor {})",
            ctx.dataset,
            val.len(),
            spec.min_validation
        );
    }
    let held_out = ctx.test.subset(&held)?;
    let metric = PredictiveMetric::for_dataset(&ctx.train, &held_out);
    Ok(Holdout {
        validation: val.iter().map(|&t| ctx.target(t)).collect(),
        held_out,
        metric,
    })
}

/// Held-out loss, loss change and predictive metric for each model, with
/// the base model first.
fn metric_curves(
    ctx: &RunContext,
    method: Method,
    h: &Holdout,
    fractions: &[f64],
    counts: &[usize],
    base: &GbdtModel,
    models: &[Arc<GbdtModel>],
) -> Vec<MetricCurve> {
    let (base_loss, base_metric) = evaluate(base, &h.held_out, h.metric);
    let mut loss = vec![base_loss];
    let mut metric = vec![base_metric];
    for m in models {
        let (l, v) = evaluate(m, &h.held_out, h.metric);
        loss.push(l);
        metric.push(v);
    }
    let delta: Vec<f64> = loss.iter().map(|l| l - base_loss).collect();
    vec![
        ctx.curve(method, "loss", fractions, counts, loss),
        ctx.curve(method, "delta_loss", fractions, counts, delta),
        ctx.curve(method, h.metric.name(), fractions, counts, metric),
    ]
}

/// Remove growing batches ranked by influence aggregated over a
/// validation set, measuring held-out metrics.
pub fn multi_removal_experiment(ctx: &RunContext, spec: &ExperimentSpec) -> Result<ProtocolOutput> {
    perturb_batches(ctx, spec, None)
}

/// Corrupt the labels of growing batches ranked like `multi_removal`.
pub fn add_noise_experiment(ctx: &RunContext, spec: &ExperimentSpec) -> Result<ProtocolOutput> {
    let labels = noise_labels(&ctx.train, ctx.seed);
    perturb_batches(ctx, spec, Some(&labels))
}

fn perturb_batches(ctx: &RunContext, spec: &ExperimentSpec, noise: Option<&[f64]>) -> Result<ProtocolOutput> {
    let fractions = spec.checkpoint_fractions();
    let n = ctx.n_train();
    let counts = counts_for(&fractions, n);
    let h = holdout(ctx, spec)?;
    let mut out = ProtocolOutput {
        n_targets: h.validation.len(),
        predictive_metric: Some(h.metric),
        ..Default::default()
    };
    let all: Vec<usize> = (0..n).collect();
    for &method in &spec.estimators {
        let ex = ctx.fit(method)?;
        let order = aggregate_scores(&ex, method, &h.validation)?.ranking_descending();
        let models: Result<Vec<Arc<GbdtModel>>> = counts
            .par_iter()
            .map(|&k| match noise {
                None => ctx.retrainer.compact_on(&ctx.retrainer.complement(&order[..k])?, &[]),
                Some(labels) => {
                    let relabel: Vec<(usize, f64)> = order[..k].iter().map(|&i| (i, labels[i])).collect();
                    ctx.retrainer.compact_on(&all, &relabel)
                }
            })
            .collect();
        match models {
            Ok(models) => out
                .curves
                .extend(metric_curves(ctx, method, &h, &fractions, &counts, &ctx.model, &models)),
            Err(e) => out.audit.push(ctx.audit(Some(method), None, e.to_string())),
        }
    }
    Ok(out)
}

/// Corrupt a fraction of the training labels, then inspect instances in
/// order (most negative aggregated influence first), counting corrupted
/// ones found and retraining with those fixed.
pub fn fix_mislabeled_experiment(ctx: &RunContext, spec: &ExperimentSpec) -> Result<ProtocolOutput> {
    let fractions = spec.checkpoint_fractions();
    let n = ctx.n_train();
    let counts: Vec<usize> = fractions.iter().map(|&f| inspection_count(f, n)).collect();
    let corrupt = corrupt_labels(&ctx.train, spec.noise_fraction, ctx.seed);
    let noisy = ctx.with_train(ctx.train.with_targets(&corrupt)?)?;
    let is_corrupt: HashSet<usize> = corrupt.iter().map(|&(i, _)| i).collect();
    let h = holdout(&noisy, spec)?;
    let mut out = ProtocolOutput {
        n_targets: h.validation.len(),
        corrupted: Some(corrupt.len()),
        predictive_metric: Some(h.metric),
        ..Default::default()
    };
    let all: Vec<usize> = (0..n).collect();
    for &method in &spec.estimators {
        let ex = noisy.fit(method)?;
        let scores = aggregate_scores(&ex, method, &h.validation)?;
        let order = match method {
            Method::BoostInSelf | Method::Estimator(EstimatorKind::Loss) => scores.ranking_descending(),
            Method::Estimator(_) => scores.ranking_ascending(),
        };
        let mut detected = vec![0.0];
        let mut fixes_at = Vec::with_capacity(counts.len());
        for &k in &counts {
            let fixes: Vec<(usize, f64)> = order[..k]
                .iter()
                .filter(|i| is_corrupt.contains(i))
                .map(|&i| (i, ctx.train.target(i)))
                .collect();
            detected.push(fixes.len() as f64);
            fixes_at.push(fixes);
        }
        out.curves
            .push(noisy.curve(method, "detected", &fractions, &counts, detected));
        let models: Result<Vec<Arc<GbdtModel>>> = fixes_at
            .par_iter()
            .map(|fixes| noisy.retrainer.compact_on(&all, fixes))
            .collect();
        match models {
            Ok(models) => out
                .curves
                .extend(metric_curves(&noisy, method, &h, &fractions, &counts, &noisy.model, &models)),
            Err(e) => out.audit.push(noisy.audit(Some(method), None, e.to_string())),
        }
    }
    Ok(out)
}

/// Number of one-at-a-time removals the sequential protocol performs.
pub fn sequential_steps(spec: &ExperimentSpec, n: usize) -> usize {
    let max = spec.checkpoint_fractions().last().copied().unwrap_or(0.0);
    checkpoint_count(max, n)
}

/// Remove the top-ranked instance one step at a time, either from a fixed
/// ordering or re-estimating influence on the remaining data each step.
pub fn sequential_removal_experiment(ctx: &RunContext, spec: &ExperimentSpec) -> Result<ProtocolOutput> {
    let n = ctx.n_train();
    let steps = sequential_steps(spec, n);
    let counts: Vec<usize> = (1..=steps).collect();
    let fractions: Vec<f64> = counts.iter().map(|&s| s as f64 / n as f64).collect();
    let targets = ctx.sample_targets(spec.n_targets);
    let mut out = ProtocolOutput {
        n_targets: targets.len(),
        ..Default::default()
    };
    for &method in &spec.estimators {
        let ex = ctx.fit(method)?;
        let results: Vec<(usize, Result<(Vec<usize>, Vec<f64>)>)> = targets
            .par_iter()
            .map(|&t| {
                let target = ctx.target(t);
                let r = if spec.reestimate {
                    reestimated_path(ctx, &ex, method, &target, steps)
                } else {
                    fixed_path(ctx, &ex, method, &target, steps)
                };
                (t, r)
            })
            .collect();
        let mut sum = vec![0.0; steps + 1];
        let mut ok = 0usize;
        for (t, r) in results {
            match r {
                Ok((removed, loss)) => {
                    ok += 1;
                    sum.iter_mut().zip(&loss).for_each(|(s, l)| *s += l);
                    let delta = loss.iter().map(|l| l - loss[0]).collect();
                    out.trajectories.push(Trajectory {
                        dataset: ctx.dataset.clone(),
                        model_config: ctx.model_config.clone(),
                        estimator: method.name().to_string(),
                        seed: ctx.seed,
                        target_id: t,
                        removed,
                        loss,
                        delta_loss: delta,
                    });
                }
                Err(e) => out.audit.push(ctx.audit(Some(method), Some(t), e.to_string())),
            }
        }
        if ok > 0 {
            let losses = sum.into_iter().map(|s| s / ok as f64).collect();
            out.curves.extend(target_loss_curves(ctx, method, &fractions, &counts, losses));
        }
    }
    Ok(out)
}

fn fixed_path(ctx: &RunContext, ex: &Explainer, method: Method, target: &Target, steps: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let base = ctx.model.loss_at(&target.x, target.y)?;
    let order = target_scores(ex, method, target)?.ranking_descending();
    let mut losses = vec![base];
    for s in 1..=steps {
        let keep = ctx.retrainer.complement(&order[..s])?;
        losses.push(ctx.retrainer.compact_on(&keep, &[])?.loss_at(&target.x, target.y)?);
    }
    Ok((order[..steps].to_vec(), losses))
}

fn reestimated_path(
    ctx: &RunContext,
    first: &Explainer,
    method: Method,
    target: &Target,
    steps: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let base = ctx.model.loss_at(&target.x, target.y)?;
    let mut keep: Vec<usize> = (0..ctx.n_train()).collect();
    let mut removed = Vec::with_capacity(steps);
    let mut losses = vec![base];
    let mut owned: Option<Explainer> = None;
    for s in 1..=steps {
        let ex = owned.as_ref().unwrap_or(first);
        let pick = target_scores(ex, method, target)?.ranking_descending()[0];
        removed.push(keep.remove(pick));
        let model = Arc::new(ctx.retrainer.train_on(&keep, &[])?);
        losses.push(model.loss_at(&target.x, target.y)?);
        if s < steps {
            let sub = Retrainer::new(
                Arc::new(ctx.train.subset(&keep)?),
                ctx.retrainer.config().clone(),
                ctx.retrainer.loss(),
            )
            .with_cache(ctx.cache.clone());
            owned = Some(Explainer::fit(method.estimator(), model, &sub, &ctx.options)?);
        }
    }
    Ok((removed, losses))
}

fn fit_retrains(method: Method, spec: &ExperimentSpec, n: usize, n_labels: u64) -> u64 {
    match method.estimator() {
        EstimatorKind::Loo => n as u64 * if spec.protocol == Protocol::TargetedEdit { n_labels } else { 1 },
        EstimatorKind::SubSample => {
            let cfg = &spec.estimator_options.subsample;
            if cfg.exhaustive {
                binomial(n as u64, cfg.subset_size(n) as u64)
            } else {
                cfg.tau as u64
            }
        }
        _ => 0,
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Upper bound on retrains one run performs on `n` training rows.
pub fn projected_retrains(spec: &ExperimentSpec, n: usize, n_test: usize, n_labels: u64) -> u64 {
    let checkpoints = spec.checkpoint_fractions().len() as u64;
    let targets = spec.n_targets.min(n_test) as u64;
    let base = 1 + u64::from(spec.protocol == Protocol::FixMislabeled);
    spec.estimators
        .iter()
        .map(|&m| {
            let fit = fit_retrains(m, spec, n, n_labels);
            match spec.protocol {
                Protocol::SingleRemoval | Protocol::TargetedEdit => fit + targets * checkpoints,
                Protocol::MultiRemoval | Protocol::AddNoise | Protocol::FixMislabeled => fit + checkpoints,
                Protocol::SequentialRemoval => {
                    let steps = sequential_steps(spec, n) as u64;
                    if spec.reestimate {
                        fit + targets * (steps + (steps - 1) * fit_retrains(m, spec, n, n_labels))
                    } else {
                        fit + targets * steps
                    }
                }
            }
        })
        .fold(base, u64::saturating_add)
}

/// Runs `spec` over every dataset, model config and seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut loaded = Vec::with_capacity(spec.datasets.len());
    let mut projected = 0u64;
    for source in &spec.datasets {
        let data = source.load()?;
        let n_train = ((data.n_rows() as f64) * spec.split.train_fraction).round() as usize;
        let labels = data.n_classes().max(2) as u64;
        let per_run = projected_retrains(spec, n_train, data.n_rows() - n_train.min(data.n_rows()), labels);
        projected = projected.saturating_add(per_run.saturating_mul(spec.n_seeds * spec.model_configs.len() as u64));
        loaded.push((source.name(), data));
    }
    if projected > spec.max_retrains {
        return Err(Error::Budget {
            projected,
            cap: spec.max_retrains,
        });
    }
    log::info!("{}: projected at most {projected} retrains", spec.protocol);
    let cache = Arc::new(ModelCache::new(spec.cache_bytes));
    let mut report = ExperimentReport::new(spec);
    for (name, data) in &loaded {
        for config in &spec.model_configs {
            for s in 0..spec.n_seeds {
                let seed = spec.rng_seed + s;
                let ctx = RunContext::prepare(name, data, config, seed, &spec.split, &spec.estimator_options, cache.clone())?;
                let out = match spec.protocol {
                    Protocol::SingleRemoval => single_removal_experiment(&ctx, spec)?,
                    Protocol::TargetedEdit => targeted_edit_experiment(&ctx, spec)?,
                    Protocol::MultiRemoval => multi_removal_experiment(&ctx, spec)?,
                    Protocol::AddNoise => add_noise_experiment(&ctx, spec)?,
                    Protocol::FixMislabeled => fix_mislabeled_experiment(&ctx, spec)?,
                    Protocol::SequentialRemoval => sequential_removal_experiment(&ctx, spec)?,
                };
                report.runs.push(RunSummary {
                    dataset: name.clone(),
                    model_config: config.name.clone(),
                    seed,
                    task: data.task(),
                    n_train: ctx.n_train(),
                    n_test: ctx.test.n_rows(),
                    predictive_metric: out
                        .predictive_metric
                        .map(|m| m.name().to_string())
                        .unwrap_or_else(|| "loss".into()),
                    n_targets: out.n_targets,
                    corrupted: out.corrupted,
                });
                report.curves.extend(out.curves);
                report.trajectories.extend(out.trajectories);
                report.audit.extend(out.audit);
            }
        }
    }
    report.ranking = Some(rank_aggregate(
        &report.curves,
        spec.protocol.primary_metric(),
        spec.protocol.magnitude_metric(),
    )?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_y_star_rule() {
        assert_eq!(regression_y_star(10.0, 12.0), 5.0);
        assert_eq!(regression_y_star(10.0, 8.0), 15.0);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(10, 10), 1);
        assert_eq!(binomial(5, 2), 10);
    }
}
