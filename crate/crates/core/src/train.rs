//! Full-batch training: Adam, a plateau-halving learning-rate schedule and
//! the fitting loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::model::{Model, ModelConfig};
use crate::params::Param;
use crate::signal::image::ImageSignal;
use crate::signal::metrics::psnr_values;
use crate::signal::grid::make_grid;
use crate::tensor::ValueGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub lr0: f64,
    pub max_iters: usize,
    pub patience: usize,
    pub lr_factor: f64,
    pub plateau_rel_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub min_lr: f64,
    /// Recorded in the report; training itself draws no random numbers.
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: 1,
            lr0: 2e-2,
            max_iters: 5000,
            patience: 100,
            lr_factor: 0.5,
            plateau_rel_threshold: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            min_lr: 1e-6,
            seed: 0,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, reason: &str| {
            Err(TrainError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.schema_version != 1 {
            return bad("schema_version", "expected 1");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("lr0", "must be finite and positive");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor", "must lie in (0, 1)");
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.plateau_rel_threshold) {
            return bad("plateau_rel_threshold", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta", "must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("eps", "must be positive");
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.lr0) {
            return bad("min_lr", "must lie in [0, lr0]");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite gradient for `{param}` at iteration {iteration}")]
    NonFiniteGradient { iteration: u64, param: String },
    #[error("adam state does not match the parameters")]
    StateMismatch,
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize, report: Box<FitReport> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// First and second moment estimates, one pair per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<ValueGrid>,
    pub v: Vec<ValueGrid>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| ValueGrid::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter. Nothing is
/// modified when any gradient is non-finite.
pub fn adam_step(
    params: &mut [Param],
    grads: &[ValueGrid],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::StateMismatch);
    }
    for (p, g) in params.iter().zip(grads) {
        if g.shape() != p.value.shape() {
            return Err(TrainError::StateMismatch);
        }
        if p.trainable && !g.is_finite() {
            return Err(TrainError::NonFiniteGradient {
                iteration: state.t + 1,
                param: p.name.clone(),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, theta) in p.value.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrChange {
    pub iteration: usize,
    pub old: f64,
    pub new: f64,
}

/// Halves (or scales by `factor`) the learning rate after `patience`
/// consecutive iterations without relative improvement of the best loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub best: f64,
    pub counter: usize,
    pub patience: usize,
    pub factor: f64,
    pub threshold: f64,
    pub min_lr: f64,
}

impl PlateauScheduler {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.lr0,
            best: f64::INFINITY,
            counter: 0,
            patience: cfg.patience,
            factor: cfg.lr_factor,
            threshold: cfg.plateau_rel_threshold,
            min_lr: cfg.min_lr,
        }
    }

    /// Feeds the loss of `iteration`; returns the change if the rate moved.
    pub fn observe(&mut self, iteration: usize, loss: f64) -> Option<LrChange> {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.counter = 0;
            return None;
        }
        self.counter += 1;
        if self.counter < self.patience {
            return None;
        }
        self.counter = 0;
        let old = self.lr;
        self.lr = (old * self.factor).max(self.min_lr);
        (self.lr != old).then_some(LrChange {
            iteration,
            old,
            new: self.lr,
        })
    }
}

/// Coordinates and targets for one fitting problem, full batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub coords: ValueGrid,
    pub targets: ValueGrid,
    /// Image shape `(width, height)` when the targets are pixels.
    pub image_dims: Option<(usize, usize)>,
}

impl FitData {
    pub fn from_image(img: &ImageSignal) -> Result<Self, crate::error::SignalError> {
        let grid = make_grid(img.width(), img.height())?;
        Ok(Self {
            coords: grid.coords,
            targets: img.to_targets(),
            image_dims: Some((img.width(), img.height())),
        })
    }

    pub fn new(coords: ValueGrid, targets: ValueGrid) -> Self {
        Self {
            coords,
            targets,
            image_dims: None,
        }
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsnrPoint {
    pub iteration: usize,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub parameter_count: usize,
    pub iterations: usize,
    /// Loss before the update of each iteration.
    pub losses: Vec<f64>,
    pub psnr: Vec<PsnrPoint>,
    pub lr_events: Vec<LrChange>,
    /// Loss and PSNR of the parameters after the last update.
    pub final_loss: f64,
    pub final_psnr: f64,
    pub best_psnr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub amplitudes: Option<Vec<f64>>,
    pub wall_seconds: f64,
    pub seed: u64,
    #[serde(skip)]
    pub reconstruction: Option<ValueGrid>,
}

/// Trains `model` in place on the full batch for `cfg.max_iters` iterations.
///
/// `on_metric` sees every iteration's loss and learning rate, plus the PSNR
/// every `eval_every` iterations.
pub fn fit(
    model: &mut Model,
    data: &FitData,
    cfg: &TrainConfig,
    mut on_metric: impl FnMut(&MetricRecord),
) -> Result<FitReport, TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = AdamState::new(model.params());
    let mut sched = PlateauScheduler::new(cfg);
    let mut report = FitReport {
        model: model.config().clone(),
        train: cfg.clone(),
        parameter_count: model.parameter_count(),
        iterations: 0,
        losses: Vec::with_capacity(cfg.max_iters),
        psnr: Vec::new(),
        lr_events: Vec::new(),
        final_loss: f64::NAN,
        final_psnr: f64::NAN,
        best_psnr: f64::NEG_INFINITY,
        amplitudes: None,
        wall_seconds: 0.0,
        seed: cfg.seed,
        reconstruction: None,
    };
    for it in 0..cfg.max_iters {
        let (loss, grads) = model.loss_and_gradients(&data.coords, &data.targets)?;
        report.losses.push(loss);
        report.iterations = it + 1;
        if !loss.is_finite() {
            report.wall_seconds = start.elapsed().as_secs_f64();
            return Err(TrainError::Diverged {
                iteration: it,
                report: Box::new(report),
            });
        }
        let psnr = if it % cfg.eval_every == 0 {
            let p = eval_psnr(model, data)?;
            report.psnr.push(PsnrPoint { iteration: it, psnr: p });
            report.best_psnr = report.best_psnr.max(p);
            Some(p)
        } else {
            None
        };
        on_metric(&MetricRecord {
            iteration: it,
            loss,
            psnr,
            lr: sched.lr,
        });
        adam_step(model.params_mut(), &grads, &mut state, sched.lr, cfg)?;
        if let Some(change) = sched.observe(it, loss) {
            report.lr_events.push(change);
        }
    }
    let pred = model.predict(&data.coords)?;
    report.final_loss = crate::model::chunked_loss(&pred, &data.targets);
    report.final_psnr = psnr_values(pred.data(), data.targets.data()).map_err(|_| shape_error(&pred, &data.targets))?;
    report.best_psnr = report.best_psnr.max(report.final_psnr);
    report.amplitudes = model.amplitudes();
    report.reconstruction = Some(pred);
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn shape_error(a: &ValueGrid, b: &ValueGrid) -> TrainError {
    TrainError::Model(ModelError::Tensor(crate::error::TensorError::Shape {
        op: "psnr",
        left: a.shape(),
        right: b.shape(),
    }))
}

fn eval_psnr(model: &Model, data: &FitData) -> Result<f64, TrainError> {
    let pred = model.predict(&data.coords)?;
    psnr_values(pred.data(), data.targets.data()).map_err(|_| shape_error(&pred, &data.targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Vec<Param> {
        vec![Param {
            name: "theta".into(),
            value: ValueGrid::scalar(v),
            trainable: true,
        }]
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lr0, c.max_iters, c.patience, c.lr_factor), (2e-2, 5000, 100, 0.5));
        assert_eq!((c.beta1, c.beta2, c.eps, c.min_lr), (0.9, 0.999, 1e-8, 1e-6));
        c.validate().unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_param(0.7);
        let mut s = AdamState::new(&p);
        for _ in 0..50 {
            adam_step(&mut p, &[ValueGrid::scalar(0.0)], &mut s, 0.1, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p[0].value.item(), 0.7);
        assert_eq!(s.t, 50);
    }

    #[test]
    fn first_step_is_lr() {
        let mut p = scalar_param(0.0);
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &[ValueGrid::scalar(1.0)], &mut s, 0.01, &cfg).unwrap();
        assert!((p[0].value.item() + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_reports_iteration() {
        let mut p = scalar_param(0.0);
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &[ValueGrid::scalar(1.0)], &mut s, 0.01, &cfg).unwrap();
        let err = adam_step(&mut p, &[ValueGrid::scalar(f64::NAN)], &mut s, 0.01, &cfg).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { iteration: 2, .. }));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn frozen_parameter_untouched() {
        let mut p = scalar_param(0.3);
        p[0].trainable = false;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[ValueGrid::scalar(5.0)], &mut s, 0.1, &TrainConfig::default()).unwrap();
        assert_eq!(p[0].value.item(), 0.3);
    }

    #[test]
    fn flat_loss_halves_at_patience() {
        let mut s = PlateauScheduler::new(&TrainConfig::default());
        let events: Vec<LrChange> = (0..=250).filter_map(|i| s.observe(i, 1.0)).collect();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].iteration, 100);
        assert_eq!(events[1].iteration, 200);
        assert_eq!((events[0].old, events[0].new), (2e-2, 1e-2));
    }

    #[test]
    fn min_lr_floor_stops_events() {
        let cfg = TrainConfig {
            lr0: 4e-6,
            patience: 1,
            ..TrainConfig::default()
        };
        let mut s = PlateauScheduler::new(&cfg);
        let events: Vec<LrChange> = (0..10).filter_map(|i| s.observe(i, 1.0)).collect();
        assert_eq!(events.len(), 2);
        assert_eq!(s.lr, 1e-6);
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrainConfig { lr_factor: 1.0, ..TrainConfig::default() },
            TrainConfig { patience: 0, ..TrainConfig::default() },
            TrainConfig { lr0: f64::NAN, ..TrainConfig::default() },
            TrainConfig { eval_every: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig { .. })));
        }
    }
}
