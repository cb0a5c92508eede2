use esg_neuro::loss::{argmax, mape, mse, mse_with_grad, scce, softmax_cross_entropy};
use esg_neuro::{Context, NeuroError, RAdam, RAdamConfig, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::control::TrainControl;
use super::metrics::HeadMetrics;
use super::TrainConfig;
use crate::error::{EsgError, Result};
use crate::features::CompanyYearSeries;
use crate::models::{batch_tensor, output_to_rating, quantize_target, Head, Network};

/// Inference batch size; only bounds memory.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Shuffled minibatches; a trailing batch of one joins the previous batch so
/// batch normalization never sees a single sample.
fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

fn classes(head: Head, targets: &[f64]) -> Result<Vec<usize>> {
    match head {
        Head::Classification { n_classes } => targets.iter().map(|&t| quantize_target(t, n_classes)).collect(),
        Head::Regression => Ok(Vec::new()),
    }
}

/// Loss of raw network output and its gradient.
fn loss_and_grad<T: Scalar>(head: Head, out: &Tensor<T>, targets: &[f64]) -> Result<(f64, Tensor<T>)> {
    match head {
        Head::Classification { .. } => {
            let (loss, _, grad) = softmax_cross_entropy(out, &classes(head, targets)?)?;
            Ok((loss.as_f64(), grad))
        }
        Head::Regression => {
            let y: Vec<T> = targets.iter().map(|&t| T::of(t)).collect();
            let (loss, grad) = mse_with_grad(out.data(), &y)?;
            Ok((loss.as_f64(), Tensor::from_vec(out.shape(), grad)?))
        }
    }
}

/// Trains in place and restores the parameters of the best validation epoch.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train: &[&CompanyYearSeries],
    val: &[&CompanyYearSeries],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(EsgError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(EsgError::EmptySplit("validation"));
    }
    let head = net.spec().head;
    let targets: Vec<f64> = train.iter().map(|s| s.target).collect();
    classes(head, &targets)?;
    let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut optimizer = RAdam::<T>::new(RAdamConfig { lr: cfg.lr, ..RAdamConfig::default() });
    let mut control = TrainControl::new(cfg);
    let mut history = Vec::new();
    let mut best_snapshot = None;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs_for(net.spec()) {
        let lr = control.lr();
        optimizer.set_lr(lr);
        let mut total = 0.0;
        for batch in batches(train.len(), cfg.batch_size, &mut rng) {
            let members: Vec<&CompanyYearSeries> = batch.iter().map(|&i| train[i]).collect();
            let batch_targets: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let x = batch_tensor::<T>(&members)?;
            let out = net.forward(&x, &mut Context::train(rng.random()))?;
            let (loss, grad) = loss_and_grad(head, &out, &batch_targets)?;
            net.zero_grad();
            net.backward(&grad)?;
            optimizer.step(&mut net.parameters_mut()).map_err(|e| match e {
                NeuroError::NonFiniteGradient { param } => {
                    let name = param.strip_prefix('#').and_then(|i| i.parse::<usize>().ok()).and_then(|i| names.get(i));
                    NeuroError::NonFiniteGradient { param: name.cloned().unwrap_or(param) }
                }
                other => other,
            })?;
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = evaluate(net, val)?.loss;
        history.push(EpochRecord { epoch, train_loss, val_loss, lr });
        let decision = control.observe(val_loss);
        if decision.improved {
            best_snapshot = Some(net.snapshot());
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    if let Some(snapshot) = &best_snapshot {
        net.restore(snapshot);
    }
    Ok(TrainOutcome {
        best_epoch: control.best_epoch().unwrap_or(history.len()),
        best_val_loss: control.best_loss().unwrap_or(f64::NAN),
        history,
        stopped_early,
    })
}

/// Eval-mode predictions and head metrics on a set of series.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Ratings in `[0, 100]`, in input order.
    pub predictions: Vec<f64>,
    pub metrics: HeadMetrics,
    /// Training objective: cross-entropy or mean squared error.
    pub loss: f64,
}

pub fn evaluate<T: Scalar>(net: &mut Network<T>, series: &[&CompanyYearSeries]) -> Result<Evaluation> {
    if series.is_empty() {
        return Err(EsgError::EmptySplit("evaluation"));
    }
    if let Some(s) = series.iter().find(|s| s.scaled_by.is_none()) {
        return Err(EsgError::Unscaled(format!("{} {}", s.company_id, s.year)));
    }
    let head = net.spec().head;
    let width = head.outputs();
    let mut raw: Vec<T> = Vec::with_capacity(series.len() * width);
    for chunk in series.chunks(EVAL_CHUNK) {
        raw.extend_from_slice(net.predict(&batch_tensor::<T>(chunk)?)?.data());
    }
    let targets: Vec<f64> = series.iter().map(|s| s.target).collect();
    let predictions = raw.chunks(width).map(|row| output_to_rating(head, row)).collect();
    let (metrics, loss) = match head {
        Head::Classification { n_classes } => {
            let probs = Tensor::from_vec(&[series.len(), n_classes], raw)?;
            let classes = classes(head, &targets)?;
            let scc = scce(&probs, &classes)?.as_f64();
            let hits = probs.data().chunks(n_classes).zip(&classes).filter(|(row, &c)| argmax(row) == c).count();
            (HeadMetrics::Classification { accuracy: hits as f64 / series.len() as f64, scc }, scc)
        }
        Head::Regression => {
            let y: Vec<T> = targets.iter().map(|&t| T::of(t)).collect();
            let mse = mse(&raw, &y)?.as_f64();
            let m = mape(&raw, &y)?;
            (HeadMetrics::Regression { mape: m.value.map(|v| v.as_f64()), mape_excluded: m.excluded, mse }, mse)
        }
    };
    Ok(Evaluation { predictions, metrics, loss })
}
