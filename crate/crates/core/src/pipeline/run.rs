//! Pretraining and the alternating adaptation loop.

use ndarray::Axis;
use rand::seq::SliceRandom;

use super::config::{PseudoSource, RunConfig};
use super::metrics::{evaluate, label_accuracy, Evaluation, MetricsRecord, MetricsSink, RefineStats};
use crate::alignment::{alignment_gradients, sample_class_batch, LossBreakdown};
use crate::assignment::{assign_pseudolabels, build_cost, hungarian, PseudoLabelSet};
use crate::clustering::{kmeans, moving_average_update, source_centroids, CentroidSet};
use crate::datagen::{LabeledSet, UnlabeledSet};
use crate::model::{cross_entropy_grad, sgd_step, NetworkParams, OptimizerState, Upstream};
use crate::refinement::{confidence_check, refine, FilteredTargetSet};
use crate::{derive_seed, rng_from_seed, Error, Result};

// seed sub-streams; data generation uses 1 and 2
const STREAM_INIT: u64 = 10;
const STREAM_PRETRAIN: u64 = 11;
const STREAM_AUX_INIT: u64 = 20;
const STREAM_REFINE: u64 = 1_000;
const STREAM_ALIGN: u64 = 2_000;

/// Supervised cross-entropy training of a freshly initialized network on the
/// source set. Emits one `pretrain` record.
pub fn pretrain(config: &RunConfig, source: &LabeledSet, sink: &mut dyn MetricsSink) -> Result<NetworkParams> {
    config.validate()?;
    let mut params = NetworkParams::init(
        source.dim(),
        &config.hidden,
        source.num_classes(),
        &mut rng_from_seed(derive_seed(config.seed, STREAM_INIT)),
    )?;
    let mut rng = rng_from_seed(derive_seed(config.seed, STREAM_PRETRAIN));
    let mut opt = OptimizerState::new(config.sgd)?;
    let n = source.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total = config.pretrain_epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    let mut last_loss = f64::NAN;
    for _ in 0..config.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            opt.set_step(step, total);
            step += 1;
            let x = source.features().select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| source.labels()[i]).collect();
            let trace = params.forward(x.view())?;
            let (loss, d) = cross_entropy_grad(&trace, &y)?;
            sum += loss * batch.len() as f64;
            let grads = params.backward(&trace, &Upstream::logits(d))?;
            sgd_step(&mut params, &grads, &mut opt)?;
        }
        last_loss = sum / n as f64;
    }

    let eval = evaluate(&params, source.features(), source.labels())?;
    let mut rec = MetricsRecord::new(config.pretrain_epochs, "pretrain");
    rec.source_accuracy = Some(eval.accuracy);
    if last_loss.is_finite() {
        rec.loss = Some(LossBreakdown {
            total: last_loss,
            ce: last_loss,
            ..LossBreakdown::default()
        });
    }
    sink.record(&rec)?;
    Ok(params)
}

/// Per-iteration quantities used by the summaries and ablations.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationStats {
    pub epoch: usize,
    /// Accuracy of the pseudo-labels on the whole target set.
    pub pseudo_accuracy: Option<f64>,
    /// Accuracy of the pseudo-labels on the filtered target set, when it is
    /// non-empty.
    pub pseudo_accuracy_filtered: Option<f64>,
    pub filtered_size: usize,
    pub target_accuracy: Option<f64>,
    pub alignment_steps: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub params: NetworkParams,
    pub aux: Option<NetworkParams>,
    pub target_centroids: Option<CentroidSet>,
    /// Target evaluation of the pretrained network.
    pub source_only: Option<Evaluation>,
    pub final_source: Evaluation,
    pub final_target: Option<Evaluation>,
    pub iterations: Vec<IterationStats>,
}

impl RunReport {
    pub fn source_only_accuracy(&self) -> Option<f64> {
        self.source_only.as_ref().map(|e| e.accuracy)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.final_target.as_ref().map(|e| e.accuracy)
    }

    /// Mean whole-set pseudo-label accuracy over all iterations.
    pub fn mean_pseudo_accuracy(&self) -> Option<f64> {
        mean(self.iterations.iter().filter_map(|s| s.pseudo_accuracy))
    }

    /// Mean pseudo-label accuracy on the filtered set and on the whole set,
    /// both over the iterations where the filtered set was non-empty.
    pub fn filtered_vs_full(&self) -> Option<(f64, f64)> {
        let pairs: Vec<(f64, f64)> = self
            .iterations
            .iter()
            .filter_map(|s| Some((s.pseudo_accuracy_filtered?, s.pseudo_accuracy?)))
            .collect();
        Some((mean(pairs.iter().map(|p| p.0))?, mean(pairs.iter().map(|p| p.1))?))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Loads the data, pretrains, then adapts.
pub fn run(config: &RunConfig, sink: &mut dyn MetricsSink) -> Result<RunReport> {
    config.validate()?;
    let (source, target) = config.load_data()?;
    let pretrained = pretrain(config, &source, sink).map_err(|e| e.in_stage("pretrain"))?;
    run_with_pretrained(config, &source, &target, pretrained, sink)
}

/// The alternating loop starting from an already pretrained network.
///
/// Each outer iteration: pseudo-label the target (k-means seeded from the
/// source centroids plus Hungarian matching, or the network's own argmax),
/// refine and filter them with the auxiliary network, then train the main
/// network on class-aware batches. Stage failures are reported with the
/// stage name; records emitted before the failure stay in `sink`.
pub fn run_with_pretrained(
    config: &RunConfig,
    source: &LabeledSet,
    target: &UnlabeledSet,
    pretrained: NetworkParams,
    sink: &mut dyn MetricsSink,
) -> Result<RunReport> {
    config.validate()?;
    let k = source.num_classes();
    if pretrained.num_classes() != k || pretrained.input_dim() != source.dim() {
        return Err(Error::config(format!(
            "network {} -> {} does not fit data {} -> {k}",
            pretrained.input_dim(),
            pretrained.num_classes(),
            source.dim()
        )));
    }
    if target.dim() != source.dim() {
        return Err(Error::data("source and target differ in feature width"));
    }
    if let Some(h) = target.hidden_labels() {
        if h.iter().any(|&y| y >= k) {
            return Err(Error::data(format!("hidden target label out of range for K={k}")));
        }
    }
    let truth = target.hidden_labels();
    let xs = source.features();
    let xt = target.features();
    let objective = config.objective();

    let mut params = pretrained;
    let source_only = evaluate_on_target(&params, target)?;
    let mut rec = MetricsRecord::new(0, "source_only");
    rec.source_accuracy = Some(evaluate(&params, xs, source.labels())?.accuracy);
    rec.target_accuracy = source_only.as_ref().map(|e| e.accuracy);
    rec.confusion = source_only.as_ref().map(|e| e.confusion.clone());
    sink.record(&rec)?;

    let k_b = config.class_batch_size(k);
    let steps_per_epoch = source.len().div_ceil(k_b * config.source_per_class).max(1);
    let total_steps = config.outer_iterations * config.align_epochs * steps_per_epoch;
    let mut opt = OptimizerState::new(config.sgd)?;
    let mut aux_opt = OptimizerState::new(config.sgd)?;
    let mut aux: Option<NetworkParams> = None;
    let mut cache: Option<CentroidSet> = None;
    let mut step = 0usize;
    let mut iterations = Vec::with_capacity(config.outer_iterations);

    for it in 0..config.outer_iterations {
        // pseudo-labels
        let pseudo = (|| -> Result<PseudoLabelSet> {
            let mut rec = MetricsRecord::new(it, "assignment");
            let pseudo = match config.pseudo_source {
                PseudoSource::OptimalAssignment => {
                    let fs = params.embed(xs)?;
                    let ft = params.embed(xt)?;
                    let src_c = source_centroids(fs.view(), source.labels(), k)?;
                    let init = cache.as_ref().unwrap_or(&src_c);
                    let km = kmeans(ft.view(), init, config.kmeans_max_iters, config.kmeans_tol)?;
                    let updated = match &cache {
                        None => km.centroids.clone(),
                        Some(prev) => moving_average_update(prev, ft.view(), &km.assignment, config.centroid_alpha)?,
                    };
                    let matching = hungarian(&build_cost(&src_c, &updated)?);
                    rec.assignment_cost = Some(matching.total_cost);
                    rec.kmeans_iterations = Some(km.iterations);
                    rec.cluster_sizes = Some(updated.counts.clone());
                    cache = Some(updated);
                    assign_pseudolabels(&km.assignment, &matching)?
                }
                PseudoSource::Network => {
                    let labels = params.forward(xt)?.predictions();
                    PseudoLabelSet {
                        cluster_of: labels.clone(),
                        labels,
                    }
                }
            };
            rec.pseudo_accuracy = truth.map(|t| label_accuracy(&pseudo.labels, t));
            sink.record(&rec)?;
            Ok(pseudo)
        })()
        .map_err(|e| e.in_stage("assignment"))?;

        // refinement and confidence check
        let filtered = (|| -> Result<FilteredTargetSet> {
            if config.no_refinement {
                return Ok(FilteredTargetSet::all(&pseudo));
            }
            let start = match aux.take() {
                Some(p) => p,
                None => NetworkParams::init(
                    target.dim(),
                    &config.hidden,
                    k,
                    &mut rng_from_seed(derive_seed(config.seed, STREAM_AUX_INIT)),
                )?,
            };
            aux_opt.set_step(it, config.outer_iterations);
            let mut rng = rng_from_seed(derive_seed(config.seed, STREAM_REFINE + it as u64));
            let schedule = config.schedule.at(0);
            let outcome = refine(start, xt, &pseudo, schedule, &mut aux_opt, config.batch_size, &mut rng)?;
            for ep in &outcome.epochs {
                let mut rec = MetricsRecord::new(it, "refine_epoch");
                rec.refine = Some(RefineStats {
                    n: ep.n,
                    threshold: ep.threshold,
                    selected: ep.selected,
                    mean_nll: ep.mean_nll,
                });
                sink.record(&rec)?;
            }
            let checked = confidence_check(&outcome.params, xt, &pseudo, config.schedule.lambda)?;
            aux = Some(outcome.params);
            Ok(if config.no_confidence_check {
                FilteredTargetSet::all(&pseudo)
            } else {
                checked
            })
        })()
        .map_err(|e| e.in_stage("refinement"))?;

        let full_acc = truth.map(|t| label_accuracy(&pseudo.labels, t));
        let filtered_acc = match truth {
            Some(t) if !filtered.is_empty() => {
                let sub: Vec<usize> = filtered.indices.iter().map(|&i| t[i]).collect();
                Some(label_accuracy(&filtered.pseudo_labels, &sub))
            }
            _ => None,
        };
        let mut rec = MetricsRecord::new(it, "refinement");
        rec.pseudo_accuracy = full_acc;
        rec.pseudo_accuracy_filtered = filtered_acc;
        rec.filtered_size = Some(filtered.len());
        sink.record(&rec)?;

        // class-aware alignment
        let (loss, steps) = (|| -> Result<(LossBreakdown, usize)> {
            let mut rng = rng_from_seed(derive_seed(config.seed, STREAM_ALIGN + it as u64));
            let mut acc = LossBreakdown::default();
            let mut done = 0usize;
            for _ in 0..config.align_epochs * steps_per_epoch {
                opt.set_step(step, total_steps);
                step += 1;
                let Some(batch) = sample_class_batch(
                    source,
                    &filtered,
                    k_b,
                    config.source_per_class,
                    config.target_per_class,
                    &mut rng,
                )?
                else {
                    continue;
                };
                let (l, grads) = alignment_gradients(&params, &batch, xs, xt, &objective)?;
                sgd_step(&mut params, &grads, &mut opt)?;
                acc.total += l.total;
                acc.ce += l.ce;
                acc.c2c += l.c2c;
                acc.p2p += l.p2p;
                acc.target_ce += l.target_ce;
                done += 1;
            }
            if done == 0 {
                log::warn!("iteration {it}: no class has filtered target samples, alignment skipped");
            } else {
                let inv = 1.0 / done as f64;
                acc.total *= inv;
                acc.ce *= inv;
                acc.c2c *= inv;
                acc.p2p *= inv;
                acc.target_ce *= inv;
            }
            Ok((acc, done))
        })()
        .map_err(|e| e.in_stage("alignment"))?;

        let src_eval = evaluate(&params, xs, source.labels())?;
        let tgt_eval = evaluate_on_target(&params, target)?;
        let mut rec = MetricsRecord::new(it, "alignment");
        rec.source_accuracy = Some(src_eval.accuracy);
        rec.target_accuracy = tgt_eval.as_ref().map(|e| e.accuracy);
        rec.loss = (steps > 0).then_some(loss);
        rec.steps = Some(steps);
        sink.record(&rec)?;
        log::info!(
            "iteration {it}: pseudo {:?} filtered {} ({:?}) target {:?}",
            full_acc,
            filtered.len(),
            filtered_acc,
            rec.target_accuracy
        );

        iterations.push(IterationStats {
            epoch: it,
            pseudo_accuracy: full_acc,
            pseudo_accuracy_filtered: filtered_acc,
            filtered_size: filtered.len(),
            target_accuracy: rec.target_accuracy,
            alignment_steps: steps,
        });
    }

    let final_source = evaluate(&params, xs, source.labels())?;
    let final_target = evaluate_on_target(&params, target)?;
    let mut rec = MetricsRecord::new(config.outer_iterations, "final");
    rec.source_accuracy = Some(final_source.accuracy);
    rec.target_accuracy = final_target.as_ref().map(|e| e.accuracy);
    rec.confusion = final_target.as_ref().map(|e| e.confusion.clone());
    sink.record(&rec)?;

    Ok(RunReport {
        params,
        aux,
        target_centroids: cache,
        source_only,
        final_source,
        final_target,
        iterations,
    })
}

fn evaluate_on_target(params: &NetworkParams, target: &UnlabeledSet) -> Result<Option<Evaluation>> {
    target
        .hidden_labels()
        .map(|t| evaluate(params, target.features(), t))
        .transpose()
}
