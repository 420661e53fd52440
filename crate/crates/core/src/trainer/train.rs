use super::linalg::axpy;
use super::loss::{stage_loss, stage_loss_and_gradient};
use super::model::ToyModelParams;
use super::{Stage, TrainerConfig, TrainerError, TrainingSample};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ToyModelParams,
    /// Mean dataset loss before each step, plus the loss after the last one
    /// (`steps + 1` entries).
    pub loss_curve: Vec<f64>,
}

fn batch_loss_and_gradient(
    params: &ToyModelParams,
    dataset: &[TrainingSample],
    stage: Stage,
    cfg: &TrainerConfig,
) -> Result<(f64, ToyModelParams), TrainerError> {
    let mut total = 0.0;
    let mut grad = params.zeros_like();
    let n = dataset.len() as f64;
    for sample in dataset {
        let (l, g) = stage_loss_and_gradient(params, sample, stage, cfg.lambda, cfg.smoothing)?;
        total += l;
        for &group in stage.trainable() {
            axpy(grad.group_mut(group), 1.0 / n, g.group(group));
        }
    }
    Ok((total / n, grad))
}

fn batch_loss(
    params: &ToyModelParams,
    dataset: &[TrainingSample],
    stage: Stage,
    cfg: &TrainerConfig,
) -> Result<f64, TrainerError> {
    let mut total = 0.0;
    for sample in dataset {
        total += stage_loss(params, sample, stage, cfg.lambda, cfg.smoothing)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Full-batch gradient descent on the stage loss for `cfg.steps` steps.
///
/// Only the stage's trainable groups move; the backbone never does.
pub fn train(
    mut params: ToyModelParams,
    dataset: &[TrainingSample],
    stage: Stage,
    cfg: &TrainerConfig,
) -> Result<TrainOutcome, TrainerError> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    if dataset.is_empty() {
        return Err(TrainerError::Schema {
            index: 0,
            reason: "empty dataset".into(),
        });
    }
    for (i, s) in dataset.iter().enumerate() {
        s.check(stage, cfg.points, cfg.frames, i)?;
    }
    let mut curve = Vec::with_capacity(cfg.steps + 1);
    for step in 0..cfg.steps {
        let (loss, grad) = batch_loss_and_gradient(&params, dataset, stage, cfg)?;
        curve.push(loss);
        for &group in stage.trainable() {
            axpy(params.group_mut(group), -cfg.lr, grad.group(group));
        }
        if step % 100 == 0 {
            log::debug!("stage {stage} step {step}: loss {loss:.6}");
        }
    }
    curve.push(batch_loss(&params, dataset, stage, cfg)?);
    Ok(TrainOutcome {
        params,
        loss_curve: curve,
    })
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over every trainable
/// scalar of `stage`, using central differences with step `eps`.
pub fn grad_check(
    params: &ToyModelParams,
    sample: &TrainingSample,
    stage: Stage,
    lambda: f64,
    smoothing: f64,
    eps: f64,
) -> Result<f64, TrainerError> {
    if !(eps > 0.0) {
        return Err(TrainerError::Config("eps must be positive".into()));
    }
    let (_, analytic) = stage_loss_and_gradient(params, sample, stage, lambda, smoothing)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for &group in stage.trainable() {
        for idx in 0..params.group(group).len() {
            let orig = params.group(group)[idx];
            probe.group_mut(group)[idx] = orig + eps;
            let up = stage_loss(&probe, sample, stage, lambda, smoothing)?;
            probe.group_mut(group)[idx] = orig - eps;
            let down = stage_loss(&probe, sample, stage, lambda, smoothing)?;
            probe.group_mut(group)[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic.group(group)[idx] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
