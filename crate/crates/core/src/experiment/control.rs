//! Early stopping and learning-rate reduction driven by validation loss.

use serde::{Deserialize, Serialize};

use super::TrainConfig;

/// Outcome of observing one epoch's validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDecision {
    /// Strictly below every earlier validation loss.
    pub improved: bool,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub lr_reduced: bool,
    pub stop: bool,
}

/// Tracks validation losses epoch by epoch.
///
/// Stopping: `es_patience` consecutive epochs without a new best.
/// LR reduction: `lr_patience` consecutive epochs whose loss dropped by less
/// than `lr_min_delta` relative to the previous epoch; the counter restarts
/// after each reduction. Non-finite losses count as neither improving nor
/// dropping.
#[derive(Clone, Debug)]
pub struct TrainControl {
    es_patience: usize,
    lr_patience: usize,
    lr_factor: f64,
    lr_min_delta: f64,
    lr: f64,
    epoch: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
    previous: Option<f64>,
    small_steps: usize,
}

impl TrainControl {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            es_patience: cfg.es_patience,
            lr_patience: cfg.lr_patience,
            lr_factor: cfg.lr_factor,
            lr_min_delta: cfg.lr_min_delta,
            lr: cfg.lr,
            epoch: 0,
            best: None,
            since_best: 0,
            previous: None,
            small_steps: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// 1-based epoch of the lowest validation loss so far.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.map(|(_, l)| l)
    }

    pub fn observe(&mut self, val_loss: f64) -> EpochDecision {
        self.epoch += 1;
        let finite = val_loss.is_finite();
        let improved = finite && self.best.is_none_or(|(_, b)| val_loss < b);
        if improved {
            self.best = Some((self.epoch, val_loss));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }

        let mut lr_reduced = false;
        if let Some(prev) = self.previous {
            let small = !finite || prev - val_loss < self.lr_min_delta;
            self.small_steps = if small { self.small_steps + 1 } else { 0 };
            if self.small_steps >= self.lr_patience {
                self.lr *= self.lr_factor;
                self.small_steps = 0;
                lr_reduced = true;
            }
        }
        self.previous = finite.then_some(val_loss).or(self.previous);

        EpochDecision { improved, lr: self.lr, lr_reduced, stop: self.since_best >= self.es_patience }
    }
}

/// Result of replaying a validation-loss sequence through [`TrainControl`].
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    /// Number of epochs run.
    pub epochs: usize,
    pub stopped_early: bool,
    pub best_epoch: Option<usize>,
    /// Learning rate in effect during each epoch run.
    pub lrs: Vec<f64>,
}

/// Replays `val_losses` (truncated to `max_epochs`) as if produced by training.
pub fn simulate(cfg: &TrainConfig, val_losses: &[f64], max_epochs: usize) -> Simulation {
    let mut control = TrainControl::new(cfg);
    let mut lrs = Vec::new();
    let mut stopped_early = false;
    for &loss in val_losses.iter().take(max_epochs) {
        lrs.push(control.lr());
        if control.observe(loss).stop {
            stopped_early = true;
            break;
        }
    }
    Simulation { epochs: lrs.len(), stopped_early, best_epoch: control.best_epoch(), lrs }
}
