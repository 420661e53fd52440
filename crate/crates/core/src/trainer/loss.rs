use super::linalg::axpy;
use super::model::{forward, ForwardOutput, ToyModelParams};
use super::{ParamGroup, Stage, TrainerError, TrainingSample};
use crate::trajectory::SENTINEL;

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Cross-entropy against the smoothed target `(1 - ε)·onehot + ε/|V|`.
pub fn smoothed_cross_entropy(logits: &[f64], target: usize, smoothing: f64) -> f64 {
    let v = logits.len() as f64;
    let logp = log_softmax(logits);
    let uniform: f64 = logp.iter().sum::<f64>() / v;
    -((1.0 - smoothing) * logp[target] + smoothing * uniform)
}

/// Entropy of the smoothed target distribution, the minimum of
/// [`smoothed_cross_entropy`] over all logits.
pub fn smoothed_label_entropy(vocab: usize, smoothing: f64) -> f64 {
    let v = vocab as f64;
    let off = smoothing / v;
    let on = 1.0 - smoothing + off;
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(on) + (v - 1.0) * term(off)
}

/// `softmax - q`, the gradient of the smoothed cross-entropy.
fn ce_grad(logits: &[f64], target: usize, smoothing: f64) -> Vec<f64> {
    let off = smoothing / logits.len() as f64;
    let mut g: Vec<f64> = log_softmax(logits).into_iter().map(|l| l.exp() - off).collect();
    g[target] -= 1.0 - smoothing;
    g
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradients of the loss with respect to the model outputs.
pub(crate) struct OutputGrads {
    logits: Vec<Vec<f64>>,
    locs: Vec<Option<[f64; 2]>>,
    trajs: Vec<Option<Vec<f64>>>,
}

fn loss_terms(
    out: &ForwardOutput,
    sample: &TrainingSample,
    stage: Stage,
    lambda: f64,
    smoothing: f64,
    with_grad: bool,
) -> (f64, Option<OutputGrads>) {
    let len = sample.tokens.len();
    let scale = 1.0 / len as f64;
    let mut total = 0.0;
    let mut grads = with_grad.then(|| OutputGrads {
        logits: Vec::with_capacity(len),
        locs: vec![None; len],
        trajs: vec![None; len],
    });
    for (i, &tok) in sample.tokens.iter().enumerate() {
        total += smoothed_cross_entropy(&out.logits[i], tok, smoothing);
        if let Some(g) = grads.as_mut() {
            let mut gl = ce_grad(&out.logits[i], tok, smoothing);
            gl.iter_mut().for_each(|x| *x *= scale);
            g.logits.push(gl);
        }
        if !sample.is_supervised(i) {
            continue;
        }
        match stage {
            Stage::Localization => {
                let target = sample
                    .loc_targets
                    .as_ref()
                    .and_then(|t| t[i])
                    .expect("checked: supervised tokens have locations");
                let pred = out.locs[i];
                total += lambda * ((pred[0] - target[0]).abs() + (pred[1] - target[1]).abs());
                if let Some(g) = grads.as_mut() {
                    let c = lambda * scale;
                    g.locs[i] = Some([
                        c * sign(pred[0] - target[0]),
                        c * sign(pred[1] - target[1]),
                    ]);
                }
            }
            Stage::Trajectory => {
                let pred = &out.trajs[i];
                let cells = pred.len() / 2;
                let weight = lambda / cells as f64;
                let target = sample.traj_targets.as_ref().and_then(|t| t[i].as_ref());
                let target_at = |o: usize| match target {
                    Some(m) => m.cells()[o / 2][o % 2],
                    None => SENTINEL[o % 2],
                };
                let mut l1 = 0.0;
                for (o, &p) in pred.iter().enumerate() {
                    l1 += (p - target_at(o)).abs();
                }
                total += weight * l1;
                if let Some(g) = grads.as_mut() {
                    let c = weight * scale;
                    g.trajs[i] = Some(
                        pred.iter()
                            .enumerate()
                            .map(|(o, &p)| c * sign(p - target_at(o)))
                            .collect(),
                    );
                }
            }
            Stage::Instruction => {}
        }
    }
    (total * scale, grads)
}

/// Stage loss evaluated on precomputed outputs; the sample is assumed valid.
pub fn loss_from_outputs(
    out: &ForwardOutput,
    sample: &TrainingSample,
    stage: Stage,
    lambda: f64,
    smoothing: f64,
) -> f64 {
    loss_terms(out, sample, stage, lambda, smoothing, false).0
}

fn checked_forward(
    params: &ToyModelParams,
    sample: &TrainingSample,
    stage: Stage,
) -> Result<ForwardOutput, TrainerError> {
    sample.check(stage, params.points, params.frames, 0)?;
    forward(params, &sample.frames, &sample.tokens)
}

pub fn stage_loss(
    params: &ToyModelParams,
    sample: &TrainingSample,
    stage: Stage,
    lambda: f64,
    smoothing: f64,
) -> Result<f64, TrainerError> {
    let out = checked_forward(params, sample, stage)?;
    Ok(loss_from_outputs(&out, sample, stage, lambda, smoothing))
}

/// Mean over tokens of smoothed CE plus `λ·|p̂ - p|₁` on supervised tokens.
pub fn loss_stage1(
    params: &ToyModelParams,
    sample: &TrainingSample,
    lambda: f64,
    smoothing: f64,
) -> Result<f64, TrainerError> {
    stage_loss(params, sample, Stage::Localization, lambda, smoothing)
}

/// Mean over tokens of smoothed CE plus `λ/(P·N)·Σ|p̂ - p|₁` over every
/// trajectory cell of supervised tokens; sentinel cells count like any other.
pub fn loss_stage2(
    params: &ToyModelParams,
    sample: &TrainingSample,
    lambda: f64,
    smoothing: f64,
) -> Result<f64, TrainerError> {
    stage_loss(params, sample, Stage::Trajectory, lambda, smoothing)
}

/// Mean smoothed CE.
pub fn loss_stage3(
    params: &ToyModelParams,
    sample: &TrainingSample,
    smoothing: f64,
) -> Result<f64, TrainerError> {
    stage_loss(params, sample, Stage::Instruction, 0.0, smoothing)
}

fn backprop(
    params: &ToyModelParams,
    sample: &TrainingSample,
    out: &ForwardOutput,
    g: &OutputGrads,
) -> ToyModelParams {
    let d = params.hidden_dim();
    let len = sample.tokens.len();
    let mut grad = params.zeros_like();
    let mut dz = vec![0.0; d];
    let mut dprefix: Vec<Vec<f64>> = Vec::with_capacity(len);
    for i in 0..len {
        let h = &out.hidden[i];
        grad.vocab_map.add_outer(1.0, &g.logits[i], h);
        let mut dh = params.vocab_map.matvec_t(&g.logits[i]);
        if let Some(gl) = &g.locs[i] {
            grad.loc_proj.weight.add_outer(1.0, gl, h);
            axpy(&mut grad.loc_proj.bias, 1.0, gl);
            axpy(&mut dh, 1.0, &params.loc_proj.weight.matvec_t(gl));
        }
        if let Some(gt) = &g.trajs[i] {
            grad.traj_proj.weight.add_outer(1.0, gt, h);
            axpy(&mut grad.traj_proj.bias, 1.0, gt);
            axpy(&mut dh, 1.0, &params.traj_proj.weight.matvec_t(gt));
        }
        let da: Vec<f64> = dh.iter().zip(h).map(|(g, h)| g * (1.0 - h * h)).collect();
        let du = params.backbone.weight.matvec_t(&da);
        axpy(&mut dz, 1.0, &du[..d]);
        dprefix.push(du[d..2 * d].to_vec());
    }
    // token j feeds the prefix mean of every later position i with weight 1/i
    let mut running = vec![0.0; d];
    for i in (1..len).rev() {
        axpy(&mut running, 1.0 / i as f64, &dprefix[i]);
        let tok = sample.tokens[i - 1];
        axpy(grad.embeddings.row_mut(tok), 1.0, &running);
    }
    grad.adapter.add_outer(1.0, &dz, &out.trace.pooled_frames);
    grad
}

/// Loss and analytic gradient. Groups not trained in `stage` (and the
/// backbone, always) have exactly zero gradient.
pub fn stage_loss_and_gradient(
    params: &ToyModelParams,
    sample: &TrainingSample,
    stage: Stage,
    lambda: f64,
    smoothing: f64,
) -> Result<(f64, ToyModelParams), TrainerError> {
    let out = checked_forward(params, sample, stage)?;
    let (loss, g) = loss_terms(&out, sample, stage, lambda, smoothing, true);
    let mut grad = backprop(params, sample, &out, &g.expect("requested"));
    for group in ParamGroup::ALL {
        if !stage.is_trainable(group) {
            grad.group_mut(group).fill(0.0);
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::model::Trace;

    fn outputs(logits: Vec<Vec<f64>>, locs: Vec<[f64; 2]>, trajs: Vec<Vec<f64>>) -> ForwardOutput {
        ForwardOutput {
            hidden: vec![vec![]; logits.len()],
            logits,
            locs,
            trajs,
            trace: Trace {
                pooled_frames: vec![],
            },
        }
    }

    fn one_hot(v: usize, t: usize) -> Vec<f64> {
        (0..v).map(|i| if i == t { 1000.0 } else { 0.0 }).collect()
    }

    #[test]
    fn ce_uniform_is_ln_v() {
        for eps in [0.0, 0.1, 0.5] {
            let ce = smoothed_cross_entropy(&[0.3; 8], 5, eps);
            assert!((ce - 8f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_floor_is_attained_at_smoothed_target() {
        let (v, eps) = (6usize, 0.2);
        let q: Vec<f64> = (0..v)
            .map(|i| if i == 2 { 1.0 - eps + eps / v as f64 } else { eps / v as f64 })
            .collect();
        let logits: Vec<f64> = q.iter().map(|p| p.ln()).collect();
        let ce = smoothed_cross_entropy(&logits, 2, eps);
        assert!((ce - smoothed_label_entropy(v, eps)).abs() < 1e-12);
        assert!(smoothed_cross_entropy(&[0.0, 3.0, -1.0, 0.5, 0.0, 2.0], 2, eps) > ce);
        assert_eq!(smoothed_label_entropy(v, 0.0), 0.0);
    }

    #[test]
    fn stage1_perfect_is_zero() {
        let s = TrainingSample {
            loc_targets: Some(vec![Some([0.2, 0.3]), None]),
            supervised: vec![true, false],
            ..TrainingSample::new(vec![vec![0.0]], vec![1, 3])
        };
        let out = outputs(
            vec![one_hot(4, 1), one_hot(4, 3)],
            vec![[0.2, 0.3], [0.9, 0.9]],
            vec![vec![]; 2],
        );
        assert_eq!(loss_from_outputs(&out, &s, Stage::Localization, 1.0, 0.0), 0.0);
    }

    #[test]
    fn stage1_l1_arithmetic() {
        let s = TrainingSample {
            loc_targets: Some(vec![Some([0.2, 0.3]), Some([0.5, 0.5])]),
            supervised: vec![true, true],
            ..TrainingSample::new(vec![vec![0.0]], vec![0, 2])
        };
        let out = outputs(
            vec![one_hot(3, 0), one_hot(3, 2)],
            vec![[0.3, 0.4], [0.6, 0.6]],
            vec![vec![]; 2],
        );
        let l = loss_from_outputs(&out, &s, Stage::Localization, 1.0, 0.0);
        assert!((l - 0.2).abs() < 1e-12, "{l}");
    }

    #[test]
    fn stage2_sentinel_prediction_matches_sentinel_target() {
        use crate::trajectory::TrajectoryMatrix;
        let target = TrajectoryMatrix::sentinel(2, 3);
        let s = TrainingSample {
            traj_targets: Some(vec![Some(target), None]),
            supervised: vec![true, true],
            ..TrainingSample::new(vec![vec![0.0]], vec![0, 1])
        };
        let out = outputs(
            vec![one_hot(2, 0), one_hot(2, 1)],
            vec![[0.0; 2]; 2],
            vec![vec![-1.0; 12], vec![-1.0; 12]],
        );
        assert_eq!(loss_from_outputs(&out, &s, Stage::Trajectory, 1.0, 0.0), 0.0);
        // unsupervised second token: no trajectory term even when far off
        let s2 = TrainingSample {
            supervised: vec![true, false],
            ..s.clone()
        };
        let out2 = outputs(
            out.logits.clone(),
            out.locs.clone(),
            vec![vec![-1.0; 12], vec![0.5; 12]],
        );
        assert_eq!(loss_from_outputs(&out2, &s2, Stage::Trajectory, 1.0, 0.0), 0.0);
        // supervised without a target trains towards the sentinel: 12 cells
        // off by 1.5, λ/(P·N) = 1/6, over ℓ = 2 tokens
        let l = loss_from_outputs(&out2, &s, Stage::Trajectory, 1.0, 0.0);
        assert!((l - 12.0 * 1.5 / 6.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn stage3_ignores_regression_outputs() {
        let s = TrainingSample::new(vec![vec![0.0]], vec![1]);
        let out = outputs(vec![vec![0.0; 8]], vec![[5.0, 5.0]], vec![vec![9.0; 2]]);
        let l = loss_from_outputs(&out, &s, Stage::Instruction, 1.0, 0.1);
        assert!((l - 8f64.ln()).abs() < 1e-12);
    }
}
