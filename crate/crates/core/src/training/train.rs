use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{
    loss_data, loss_data_grad, loss_deepritz_ac, loss_deepritz_ac_grad, loss_deepritz_dendrite,
    loss_deepritz_dendrite_grad, loss_scheme_residual, loss_scheme_residual_grad,
};
use super::{Adam, Dataset, Sample, TrainError};
use crate::metrics::Physics;
use crate::neural::{init_weights, ArchitectureSpec, Model, ModelWeights, Tensor4};
use crate::Field2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    DeepRitz,
    Data,
    Residual,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::DeepRitz => "deepritz",
            LossKind::Data => "data",
            LossKind::Residual => "residual",
        })
    }
}

impl FromStr for LossKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deepritz" => Ok(LossKind::DeepRitz),
            "data" => Ok(LossKind::Data),
            "residual" => Ok(LossKind::Residual),
            _ => Err(TrainError::InvalidConfig(format!("unknown loss {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub early_stop_window: usize,
    pub early_stop_threshold: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Batch 32, Adam at 1e-3, 50-epoch window, 3‰ threshold.
    pub fn allen_cahn(loss: LossKind) -> Self {
        Self {
            loss,
            batch_size: 32,
            lr: 1e-3,
            max_epochs: 1000,
            early_stop_window: 50,
            early_stop_threshold: 3e-3,
            seed: 0,
        }
    }

    pub fn dendrite(loss: LossKind) -> Self {
        Self { batch_size: 16, ..Self::allen_cahn(loss) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.early_stop_threshold > 0.0) {
            return bad("early-stop threshold must be positive");
        }
        if self.early_stop_window == 0 {
            return bad("early-stop window must be at least 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub wall_seconds: f64,
    pub train_loss: f64,
    pub moving_avg: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub history: Vec<HistoryRow>,
    pub stopped_early: bool,
}

pub fn write_history_csv(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "wall_seconds", "train_loss", "moving_avg", "lr"])?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.6}", r.wall_seconds),
            format!("{:e}", r.train_loss),
            format!("{:e}", r.moving_avg),
            format!("{:e}", r.lr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Network inputs of a sample: `u`, or `(φ, U)` for two-input architectures.
pub fn model_inputs(spec: &ArchitectureSpec, samples: &[&Sample]) -> Result<Vec<Tensor4>, TrainError> {
    let first = samples.first().ok_or_else(|| TrainError::InvalidDataset("empty batch".into()))?;
    let n = first.phase.n();
    let stack = |f: &dyn Fn(&Sample) -> Option<&Field2D>| -> Result<Tensor4, TrainError> {
        let mut data = Vec::with_capacity(samples.len() * n * n);
        for s in samples {
            let field = f(s).ok_or_else(|| TrainError::InvalidDataset("sample lacks a temperature field".into()))?;
            data.extend_from_slice(field.values());
        }
        Ok(Tensor4::from_vec([samples.len(), 1, n, n], data)?)
    };
    let mut out = vec![stack(&|s| Some(&s.phase))?];
    if spec.input_count() == 2 {
        out.push(stack(&|s| s.temperature.as_ref())?);
    }
    Ok(out)
}

/// Loss of one prediction and its derivative with respect to the prediction's nodal values.
pub fn sample_loss(kind: LossKind, physics: &Physics, pred: &Field2D, s: &Sample) -> Result<(f64, Field2D), TrainError> {
    let temperature = || s.temperature.as_ref().ok_or_else(|| TrainError::InvalidDataset("missing temperature".into()));
    match (kind, physics) {
        (LossKind::Data, _) => {
            let t = s.target.as_ref().ok_or_else(|| TrainError::InvalidDataset("data loss needs targets".into()))?;
            Ok((loss_data(pred, t), loss_data_grad(pred, t)))
        }
        (LossKind::DeepRitz, Physics::AllenCahn(p)) => {
            Ok((loss_deepritz_ac(pred, &s.phase, p), loss_deepritz_ac_grad(pred, &s.phase, p)))
        }
        (LossKind::DeepRitz, Physics::Dendrite(p)) => {
            let u = temperature()?;
            Ok((loss_deepritz_dendrite(pred, &s.phase, u, p), loss_deepritz_dendrite_grad(pred, &s.phase, u, p)))
        }
        (LossKind::Residual, Physics::Dendrite(p)) => {
            let u = temperature()?;
            Ok((loss_scheme_residual(pred, &s.phase, u, p), loss_scheme_residual_grad(pred, &s.phase, u, p)))
        }
        (LossKind::Residual, Physics::AllenCahn(_)) => {
            Err(TrainError::InvalidConfig("the scheme-residual loss is defined for the dendrite model only".into()))
        }
    }
}

/// Mean loss over `batch` and the batch-mean gradient with respect to all parameters.
pub fn batch_loss(
    model: &Model,
    w: &ModelWeights,
    batch: &[&Sample],
    kind: LossKind,
    physics: &Physics,
) -> Result<(f64, std::collections::BTreeMap<String, Vec<f64>>), TrainError> {
    let inputs = model_inputs(model.spec(), batch)?;
    let cache = model.forward_cached(w, &inputs)?;
    let out = cache.output();
    let grid = *batch[0].phase.grid();
    let b = batch.len();
    let mut total = 0.0;
    let mut cot = Vec::with_capacity(out.data().len());
    for (i, s) in batch.iter().enumerate() {
        let pred = Field2D::from_values(grid, out.plane(i, 0).to_vec()).map_err(|_| TrainError::NonFinitePrediction)?;
        let (l, g) = sample_loss(kind, physics, &pred, s)?;
        total += l;
        cot.extend(g.values().iter().map(|v| v / b as f64));
    }
    let grads = model.backward(w, &cache, Tensor4::from_vec(out.dims(), cot)?)?;
    Ok((total / b as f64, grads.params))
}

/// Mean of the last `window` entries.
fn moving_average(losses: &[f64], window: usize) -> f64 {
    let tail = &losses[losses.len().saturating_sub(window)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Adam over shuffled mini-batches with moving-average early stopping.
/// Residual-loss training requires warm-start weights.
pub fn train(
    spec: &ArchitectureSpec,
    init: Option<ModelWeights>,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    dataset.validate()?;
    if cfg.loss == LossKind::Data && !dataset.has_targets() {
        return Err(TrainError::InvalidConfig("data loss needs a dataset with targets".into()));
    }
    if cfg.loss == LossKind::Residual && init.is_none() {
        return Err(TrainError::InvalidConfig("residual training must start from trained weights".into()));
    }
    if spec.input_count() == 2 && !matches!(dataset.physics, Physics::Dendrite(_)) {
        return Err(TrainError::InvalidConfig(format!("{} needs dendrite samples", spec.kind())));
    }
    let model = Model::new(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = match init {
        Some(w) => {
            w.check(spec)?;
            if w.spec_text() != spec.to_text() {
                return Err(TrainError::InvalidConfig("warm-start weights belong to another architecture".into()));
            }
            w
        }
        None => init_weights(spec, &mut rng),
    };
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..dataset.samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let start = Instant::now();
    let mut prev_avg: Option<f64> = None;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            let result = batch_loss(&model, &w, &batch, cfg.loss, &dataset.physics);
            let (loss, grads) = match result {
                Ok(v) if v.0.is_finite() => v,
                Ok(_) | Err(TrainError::NonFinitePrediction) => {
                    return Err(TrainError::NonFiniteLoss { epoch, weights: Box::new(w) });
                }
                Err(e) => return Err(e),
            };
            sum += loss * batch.len() as f64;
            adam.step(&mut w, &grads);
        }
        let epoch_loss = sum / dataset.samples.len() as f64;
        losses.push(epoch_loss);
        let avg = moving_average(&losses, cfg.early_stop_window);
        history.push(HistoryRow {
            epoch,
            wall_seconds: start.elapsed().as_secs_f64(),
            train_loss: epoch_loss,
            moving_avg: avg,
            lr: cfg.lr,
        });
        log::debug!("epoch {epoch}: loss {epoch_loss:e}, moving average {avg:e}");
        if losses.len() > cfg.early_stop_window {
            if let Some(prev) = prev_avg {
                if ((avg - prev) / avg).abs() < cfg.early_stop_threshold {
                    stopped_early = true;
                    break;
                }
            }
        }
        prev_avg = Some(avg);
    }
    if w.iter().any(|(_, t)| t.data.iter().any(|v| !v.is_finite())) {
        let epoch = history.len();
        return Err(TrainError::NonFiniteLoss { epoch, weights: Box::new(w) });
    }
    Ok(TrainOutcome { weights: w, history, stopped_early })
}
