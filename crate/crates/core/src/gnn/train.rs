use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{
    graph_loss_and_grad, predict, softmax, GnnError, GraphInput, Mode, ModelParams,
    DEFAULT_DROPOUT, DEFAULT_HIDDEN,
};
use crate::crbg::Crbg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Graphs per gradient step; `None` means the whole training set.
    pub batch: Option<usize>,
    pub seed: u64,
    pub mode: Mode,
    pub hidden: usize,
    pub dropout: f64,
    pub include_self: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-3,
            batch: None,
            seed: 0,
            mode: Mode::DfCf,
            hidden: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            include_self: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub params: ModelParams,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [a, b] {
        h = (h ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// Plain gradient descent. Per-graph gradients run in parallel and are
/// summed in dataset order, so results do not depend on thread count.
pub fn train(data: &[GraphInput], config: &TrainConfig) -> Result<TrainedModel, GnnError> {
    let labels: Vec<usize> = data
        .iter()
        .map(|g| g.label.ok_or_else(|| GnnError::Unlabeled(String::new())))
        .collect::<Result<_, _>>()?;
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(GnnError::SingleClass);
    }
    let mut params = ModelParams::init(config.hidden, config.seed);
    params.dropout = config.dropout;
    params.include_self = config.include_self;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, u64::MAX, 0));
    let batch = config.batch.unwrap_or(data.len()).clamp(1, data.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < data.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let w = 1.0 / chunk.len() as f64;
            let parts: Vec<Result<(f64, ModelParams), GnnError>> = chunk
                .par_iter()
                .map(|&i| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix(config.seed, epoch as u64, i as u64));
                    let mut grad = params.zeros_like();
                    let loss =
                        graph_loss_and_grad(&data[i], &params, true, &mut rng, w, &mut grad)?;
                    Ok((loss, grad))
                })
                .collect();
            let mut total = params.zeros_like();
            for part in parts {
                let (loss, grad) = part?;
                epoch_loss += loss * chunk.len() as f64 / data.len() as f64;
                total.add_scaled(1.0, &grad);
            }
            params.add_scaled(-config.lr, &total);
            if !params.is_finite() {
                return Err(GnnError::NonFinite("parameters after update"));
            }
        }
        history.push(epoch_loss);
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
    }
    Ok(TrainedModel {
        config: config.clone(),
        params,
        history,
    })
}

pub fn prepare(graphs: &[Crbg], mode: Mode) -> Vec<GraphInput> {
    graphs
        .par_iter()
        .map(|g| GraphInput::from_crbg(g, mode))
        .collect()
}

/// Probability of the Ponzi class in evaluation mode.
pub fn ponzi_probability(g: &GraphInput, params: &ModelParams) -> Result<f64, GnnError> {
    Ok(softmax(&predict(g, params)?)[1])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Ponzi is the positive class. With no positive predictions precision
    /// is reported as 0.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            log::warn!("no positive predictions; precision reported as 0");
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    pub fn from_predictions(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (truth, pred) in pairs {
            match (truth, pred) {
                (1, 1) => tp += 1,
                (0, 1) => fp += 1,
                (1, _) => fn_ += 1,
                _ => tn += 1,
            }
        }
        Metrics::from_counts(tp, fp, tn, fn_)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn evaluate(data: &[GraphInput], params: &ModelParams) -> Result<Metrics, GnnError> {
    let preds: Vec<Result<(usize, usize), GnnError>> = data
        .par_iter()
        .map(|g| {
            let truth = g.label.ok_or_else(|| GnnError::Unlabeled(String::new()))?;
            let logits = predict(g, params)?;
            Ok((truth, usize::from(logits[1] > logits[0])))
        })
        .collect();
    Ok(Metrics::from_predictions(
        preds.into_iter().collect::<Result<Vec<_>, _>>()?,
    ))
}

/// Stratified k-fold: each class is shuffled then dealt round-robin, the
/// deal continuing across classes so fold sizes differ by at most one.
pub fn kfold(labels: &[usize], k: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    assert!(
        k >= 2 && labels.len() >= k,
        "need k >= 2 and at least k items"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0usize;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    (0..k)
        .map(|f| {
            let mut test = folds[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> = (0..k)
                .filter(|&o| o != f)
                .flat_map(|o| folds[o].iter().copied())
                .collect();
            train.sort_unstable();
            (train, test)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub mode: Mode,
    pub folds: Vec<Metrics>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn summarize(folds: &[Metrics]) -> (MetricSummary, MetricSummary) {
    let n = folds.len() as f64;
    let mean_of = |f: &dyn Fn(&Metrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
    let std_of = |f: &dyn Fn(&Metrics) -> f64, m: f64| {
        (folds.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / n).sqrt()
    };
    let mean = MetricSummary {
        precision: mean_of(&|m| m.precision),
        recall: mean_of(&|m| m.recall),
        f1: mean_of(&|m| m.f1),
    };
    let std = MetricSummary {
        precision: std_of(&|m| m.precision, mean.precision),
        recall: std_of(&|m| m.recall, mean.recall),
        f1: std_of(&|m| m.f1, mean.f1),
    };
    (mean, std)
}

/// Trains and tests on each fold; reports per-fold and aggregate metrics.
pub fn cross_validate(
    graphs: &[Crbg],
    k: usize,
    config: &TrainConfig,
) -> Result<CrossValidation, GnnError> {
    let data = prepare(graphs, config.mode);
    let labels: Vec<usize> = data
        .iter()
        .zip(graphs)
        .map(|(g, c)| g.label.ok_or_else(|| GnnError::Unlabeled(c.name.clone())))
        .collect::<Result<_, _>>()?;
    let mut folds = Vec::with_capacity(k);
    for (train_idx, test_idx) in kfold(&labels, k, config.seed) {
        let train_set: Vec<GraphInput> = train_idx.iter().map(|&i| data[i].clone()).collect();
        let test_set: Vec<GraphInput> = test_idx.iter().map(|&i| data[i].clone()).collect();
        let model = train(&train_set, config)?;
        folds.push(evaluate(&test_set, &model.params)?);
    }
    let (mean, std) = summarize(&folds);
    Ok(CrossValidation {
        mode: config.mode,
        folds,
        mean,
        std,
    })
}
