use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::linalg::{axpy, Matrix};
use super::{TrainerConfig, TrainerError};

/// Affine map `x -> weight · x + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Projector {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Projector {
            weight: Matrix::zeros(out, inp),
            bias: vec![0.0; out],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        axpy(&mut y, 1.0, &self.bias);
        y
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Initializes the trajectory projector from the localization projector by
/// stacking `points · frames` copies of it (weights and bias alike).
pub fn tile_init(loc_proj: &Projector, points: usize, frames: usize) -> Projector {
    let copies = points * frames;
    let rows = loc_proj.out_dim();
    let cols = loc_proj.in_dim();
    let weight = Matrix::from_fn(copies * rows, cols, |r, c| loc_proj.weight.get(r % rows, c));
    let bias = (0..copies * rows).map(|r| loc_proj.bias[r % rows]).collect();
    Projector { weight, bias }
}

/// Named flat views over the model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Adapter,
    Embeddings,
    BackboneWeight,
    BackboneBias,
    VocabMap,
    LocWeight,
    LocBias,
    TrajWeight,
    TrajBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 9] = [
        ParamGroup::Adapter,
        ParamGroup::Embeddings,
        ParamGroup::BackboneWeight,
        ParamGroup::BackboneBias,
        ParamGroup::VocabMap,
        ParamGroup::LocWeight,
        ParamGroup::LocBias,
        ParamGroup::TrajWeight,
        ParamGroup::TrajBias,
    ];
}

/// All weights of the surrogate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelParams {
    pub points: usize,
    pub frames: usize,
    /// `d × d_v`, frame feature to hidden space.
    pub adapter: Matrix,
    /// `|V| × d`
    pub embeddings: Matrix,
    /// Frozen `d × (2d + 1)` layer over `[pooled frames; pooled prefix; position]`.
    pub backbone: Projector,
    /// `|V| × d`
    pub vocab_map: Matrix,
    /// `2 × d`
    pub loc_proj: Projector,
    /// `(2·P·N) × d`
    pub traj_proj: Projector,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let dist = Normal::new(0.0, std).expect("finite std");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

pub(crate) fn group_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl ToyModelParams {
    /// Seeded random initialization. Each parameter group draws from its own
    /// stream so that groups can be re-drawn independently.
    pub fn init(cfg: &TrainerConfig) -> Self {
        let (d, dv, v) = (cfg.d, cfg.d_v, cfg.vocab);
        let adapter = normal_matrix(&mut group_rng(cfg.seed, 1), d, dv, (1.0 / dv as f64).sqrt());
        let backbone = {
            let mut rng = group_rng(cfg.seed, 2);
            let weight = normal_matrix(&mut rng, d, 2 * d + 1, (1.0 / (2 * d + 1) as f64).sqrt());
            let bias = normal_matrix(&mut rng, 1, d, 0.1).data().to_vec();
            Projector { weight, bias }
        };
        let mut params = ToyModelParams {
            points: cfg.points,
            frames: cfg.frames,
            adapter,
            embeddings: Matrix::zeros(v, d),
            backbone,
            vocab_map: Matrix::zeros(v, d),
            loc_proj: Projector::zeros(2, d),
            traj_proj: Projector::zeros(2 * cfg.points * cfg.frames, d),
        };
        params.redraw_heads(cfg.seed, 3);
        params
    }

    /// Re-draws embeddings, vocabulary map and projectors from `stream` and
    /// onward; adapter and backbone are left as they are.
    pub(crate) fn redraw_heads(&mut self, seed: u64, stream: u64) {
        let (v, d) = self.embeddings.shape();
        self.embeddings = normal_matrix(&mut group_rng(seed, stream), v, d, 1.0);
        self.vocab_map =
            normal_matrix(&mut group_rng(seed, stream + 1), v, d, (1.0 / d as f64).sqrt());
        let weight = normal_matrix(&mut group_rng(seed, stream + 2), 2, d, 0.1 / (d as f64).sqrt());
        self.loc_proj = Projector {
            weight,
            bias: vec![0.5, 0.5],
        };
        self.traj_proj = tile_init(&self.loc_proj, self.points, self.frames);
    }

    pub fn hidden_dim(&self) -> usize {
        self.adapter.rows()
    }

    pub fn visual_dim(&self) -> usize {
        self.adapter.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.rows()
    }

    /// Re-initializes the trajectory projector from the localization projector.
    pub fn tile_trajectory_projector(&mut self) {
        self.traj_proj = tile_init(&self.loc_proj, self.points, self.frames);
    }

    /// Checks every shape against `cfg`.
    pub fn check_shapes(&self, cfg: &TrainerConfig) -> Result<(), TrainerError> {
        let (d, dv, v) = (cfg.d, cfg.d_v, cfg.vocab);
        let cells = 2 * cfg.points * cfg.frames;
        let expect = [
            ("adapter", self.adapter.shape(), (d, dv)),
            ("embeddings", self.embeddings.shape(), (v, d)),
            ("backbone", self.backbone.weight.shape(), (d, 2 * d + 1)),
            ("backbone bias", (self.backbone.bias.len(), 1), (d, 1)),
            ("vocab_map", self.vocab_map.shape(), (v, d)),
            ("loc_proj", self.loc_proj.weight.shape(), (2, d)),
            ("loc_proj bias", (self.loc_proj.bias.len(), 1), (2, 1)),
            ("traj_proj", self.traj_proj.weight.shape(), (cells, d)),
            ("traj_proj bias", (self.traj_proj.bias.len(), 1), (cells, 1)),
            ("points/frames", (self.points, self.frames), (cfg.points, cfg.frames)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(TrainerError::Shape(format!(
                    "{name} is {got:?}, config expects {want:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        match g {
            ParamGroup::Adapter => self.adapter.data(),
            ParamGroup::Embeddings => self.embeddings.data(),
            ParamGroup::BackboneWeight => self.backbone.weight.data(),
            ParamGroup::BackboneBias => &self.backbone.bias,
            ParamGroup::VocabMap => self.vocab_map.data(),
            ParamGroup::LocWeight => self.loc_proj.weight.data(),
            ParamGroup::LocBias => &self.loc_proj.bias,
            ParamGroup::TrajWeight => self.traj_proj.weight.data(),
            ParamGroup::TrajBias => &self.traj_proj.bias,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        match g {
            ParamGroup::Adapter => self.adapter.data_mut(),
            ParamGroup::Embeddings => self.embeddings.data_mut(),
            ParamGroup::BackboneWeight => self.backbone.weight.data_mut(),
            ParamGroup::BackboneBias => &mut self.backbone.bias,
            ParamGroup::VocabMap => self.vocab_map.data_mut(),
            ParamGroup::LocWeight => self.loc_proj.weight.data_mut(),
            ParamGroup::LocBias => &mut self.loc_proj.bias,
            ParamGroup::TrajWeight => self.traj_proj.weight.data_mut(),
            ParamGroup::TrajBias => &mut self.traj_proj.bias,
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for g in ParamGroup::ALL {
            z.group_mut(g).fill(0.0);
        }
        z
    }
}

/// Per-token outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `ℓ × d`
    pub hidden: Vec<Vec<f64>>,
    /// `ℓ × |V|`
    pub logits: Vec<Vec<f64>>,
    /// `ℓ × 2`
    pub locs: Vec<[f64; 2]>,
    /// `ℓ × (P·N·2)`, cell `(j, k)` at `2·(j·N + k)`.
    pub trajs: Vec<Vec<f64>>,
    pub(crate) trace: Trace,
}

impl ForwardOutput {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Predicted coordinate of key point `j` at frame `k` for token `i`.
    pub fn traj_cell(&self, i: usize, j: usize, k: usize, frames: usize) -> [f64; 2] {
        let o = 2 * (j * frames + k);
        [self.trajs[i][o], self.trajs[i][o + 1]]
    }
}

/// Intermediates kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Trace {
    /// Mean frame feature (`d_v`).
    pub pooled_frames: Vec<f64>,
}

pub(crate) fn check_inputs(
    params: &ToyModelParams,
    frames: &[Vec<f64>],
    tokens: &[usize],
) -> Result<(), TrainerError> {
    if tokens.is_empty() {
        return Err(TrainerError::Shape("token sequence is empty".into()));
    }
    if frames.is_empty() {
        return Err(TrainerError::Shape("no frame features".into()));
    }
    let dv = params.visual_dim();
    if let Some(f) = frames.iter().find(|f| f.len() != dv) {
        return Err(TrainerError::Shape(format!(
            "frame feature has {} dims, adapter expects {dv}",
            f.len()
        )));
    }
    let v = params.vocab_size();
    if let Some(&t) = tokens.iter().find(|&&t| t >= v) {
        return Err(TrainerError::Shape(format!(
            "token id {t} outside vocabulary of {v}"
        )));
    }
    Ok(())
}

pub(crate) fn pool_frames(frames: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = vec![0.0; frames[0].len()];
    for f in frames {
        axpy(&mut mean, 1.0, f);
    }
    let n = frames.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Backbone input `[pooled z; prefix mean; position]` for token `i` of `len`.
pub(crate) fn backbone_input(z: &[f64], prefix_sum: &[f64], i: usize, len: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(2 * z.len() + 1);
    u.extend_from_slice(z);
    if i == 0 {
        u.extend(std::iter::repeat_n(0.0, prefix_sum.len()));
    } else {
        u.extend(prefix_sum.iter().map(|s| s / i as f64));
    }
    u.push((i + 1) as f64 / len as f64);
    u
}

fn hidden_state(params: &ToyModelParams, u: &[f64]) -> Vec<f64> {
    let mut h = params.backbone.apply(u);
    h.iter_mut().for_each(|x| *x = x.tanh());
    h
}

/// Runs the surrogate model over one token sequence.
///
/// Frame features are projected by the adapter and mean-pooled; token `i`'s
/// hidden state sees the pooled frames, the mean embedding of tokens before
/// it, and its relative position `(i + 1) / ℓ`.
pub fn forward(
    params: &ToyModelParams,
    frames: &[Vec<f64>],
    tokens: &[usize],
) -> Result<ForwardOutput, TrainerError> {
    check_inputs(params, frames, tokens)?;
    let pooled = pool_frames(frames);
    // mean of adapter outputs equals the adapter applied to the mean
    let z = params.adapter.matvec(&pooled);
    let len = tokens.len();
    let d = params.hidden_dim();
    let mut prefix = vec![0.0; d];
    let mut out = ForwardOutput {
        hidden: Vec::with_capacity(len),
        logits: Vec::with_capacity(len),
        locs: Vec::with_capacity(len),
        trajs: Vec::with_capacity(len),
        trace: Trace {
            pooled_frames: pooled,
        },
    };
    for (i, &tok) in tokens.iter().enumerate() {
        let u = backbone_input(&z, &prefix, i, len);
        let h = hidden_state(params, &u);
        out.logits.push(params.vocab_map.matvec(&h));
        let loc = params.loc_proj.apply(&h);
        out.locs.push([loc[0], loc[1]]);
        out.trajs.push(params.traj_proj.apply(&h));
        out.hidden.push(h);
        axpy(&mut prefix, 1.0, params.embeddings.row(tok));
    }
    Ok(out)
}

/// Autoregressive argmax decoding of `len` tokens (lowest id on ties).
pub fn greedy_decode(
    params: &ToyModelParams,
    frames: &[Vec<f64>],
    len: usize,
) -> Result<Vec<usize>, TrainerError> {
    check_inputs(params, frames, &[0])?;
    let z = params.adapter.matvec(&pool_frames(frames));
    let mut prefix = vec![0.0; params.hidden_dim()];
    let mut tokens = Vec::with_capacity(len);
    for i in 0..len {
        let h = hidden_state(params, &backbone_input(&z, &prefix, i, len));
        let logits = params.vocab_map.matvec(&h);
        let best = logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (t, &l)| if l > b.1 { (t, l) } else { b })
            .0;
        tokens.push(best);
        axpy(&mut prefix, 1.0, params.embeddings.row(best));
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainerConfig {
        TrainerConfig {
            d_v: 5,
            d: 6,
            vocab: 7,
            points: 3,
            frames: 4,
            ..Default::default()
        }
    }

    #[test]
    fn tile_copies() {
        let loc = Projector {
            weight: Matrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64),
            bias: vec![0.25, -0.5],
        };
        let t = tile_init(&loc, 3, 4);
        assert_eq!(t.weight.shape(), (24, 3));
        for m in 0..12 {
            assert_eq!(t.weight.row(2 * m), loc.weight.row(0));
            assert_eq!(t.weight.row(2 * m + 1), loc.weight.row(1));
            assert_eq!(&t.bias[2 * m..2 * m + 2], &loc.bias[..]);
        }
        assert_eq!(tile_init(&loc, 1, 1), loc);
    }

    #[test]
    fn init_shapes_and_tiling() {
        let cfg = small();
        let p = ToyModelParams::init(&cfg);
        p.check_shapes(&cfg).unwrap();
        assert_eq!(p.traj_proj, tile_init(&p.loc_proj, 3, 4));
        assert_eq!(p, ToyModelParams::init(&cfg));
    }

    #[test]
    fn shape_contract_single_token() {
        let cfg = small();
        let p = ToyModelParams::init(&cfg);
        let out = forward(&p, &[vec![0.1; 5]], &[3]).unwrap();
        assert_eq!(out.hidden.len(), 1);
        assert_eq!(out.hidden[0].len(), 6);
        assert_eq!(out.logits[0].len(), 7);
        assert_eq!(out.locs.len(), 1);
        assert_eq!(out.trajs[0].len(), 3 * 4 * 2);
    }

    #[test]
    fn forward_errors() {
        let p = ToyModelParams::init(&small());
        assert!(forward(&p, &[vec![0.0; 5]], &[]).is_err());
        assert!(forward(&p, &[vec![0.0; 4]], &[1]).is_err());
        assert!(forward(&p, &[vec![0.0; 5]], &[7]).is_err());
        assert!(forward(&p, &[], &[1]).is_err());
    }

    #[test]
    fn zero_inputs_without_position_weight_give_identical_states() {
        let cfg = small();
        let mut p = ToyModelParams::init(&cfg);
        p.adapter.data_mut().fill(0.0);
        p.embeddings.data_mut().fill(0.0);
        let pos_col = 2 * cfg.d;
        for r in 0..cfg.d {
            p.backbone.weight.row_mut(r)[pos_col] = 0.0;
        }
        let out = forward(&p, &[vec![1.0; 5], vec![-2.0; 5]], &[1, 4, 2, 0]).unwrap();
        let expect: Vec<f64> = p.backbone.bias.iter().map(|b| b.tanh()).collect();
        for i in 0..4 {
            assert_eq!(out.hidden[i], expect);
            assert_eq!(out.logits[i], out.logits[0]);
        }
    }

    #[test]
    fn position_feature_separates_tokens() {
        let cfg = small();
        let mut p = ToyModelParams::init(&cfg);
        p.adapter.data_mut().fill(0.0);
        p.embeddings.data_mut().fill(0.0);
        let out = forward(&p, &[vec![1.0; 5]], &[1, 4]).unwrap();
        assert_ne!(out.hidden[0], out.hidden[1]);
    }

    #[test]
    fn forward_is_deterministic() {
        let p = ToyModelParams::init(&small());
        let frames = vec![vec![0.3, -0.1, 0.2, 0.0, 1.0]; 3];
        let a = forward(&p, &frames, &[1, 2, 3]).unwrap();
        let b = forward(&p, &frames, &[1, 2, 3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_slices_equal_locs_after_tiling() {
        let cfg = small();
        let mut p = ToyModelParams::init(&cfg);
        p.traj_proj = Projector::zeros(24, 6);
        p.tile_trajectory_projector();
        let out = forward(&p, &[vec![0.5; 5]], &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(out.traj_cell(i, j, k, 4), out.locs[i]);
                }
            }
        }
    }

    #[test]
    fn decode_matches_forward_argmax() {
        let p = ToyModelParams::init(&small());
        let frames = vec![vec![0.2, 0.4, -0.3, 0.9, 0.0]];
        let toks = greedy_decode(&p, &frames, 5).unwrap();
        let out = forward(&p, &frames, &toks).unwrap();
        for (i, l) in out.logits.iter().enumerate() {
            let best = (0..l.len()).fold(0, |b, t| if l[t] > l[b] { t } else { b });
            assert_eq!(toks[i], best);
        }
    }
}
