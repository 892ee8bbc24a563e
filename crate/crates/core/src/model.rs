//! The sequence model: an encoder and an autoregressive decoder sharing one
//! recurrent cell.
//!
//! The encoder walks the observed frames feeding pose, finite-difference
//! velocity, and a temporal position embedding into the cell. The decoder
//! then rolls forward: each step regresses a velocity from the hidden state,
//! adds it to the previous pose (a residual connection), and feeds its own
//! prediction back in as the next input. Training backpropagates through
//! every path of that loop — including the fed-back poses and velocities —
//! by hand.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MotionSequence;
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::linalg::{self, Mat};
use crate::net::{
    adam_step, cell_backward, cell_forward, clip_global_norm, dropout, linear_backward,
    linear_forward, AdamState, ModelParams, StepCache,
};
use crate::posembed::embed_position;
use crate::rotmath::{pose_to_quats, pose_to_quats_backward};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean (over predicted frames) L1 distance between the quaternion
    /// transforms of truth and prediction.
    QuatL1,
    /// Mean (over predicted frames) L2 distance on raw pose channels.
    EulerMse,
}

/// Decoder wiring. `Red` is the plain encoder-decoder baseline whose decoder
/// consumes poses only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pvred,
    Red,
}

/// Architecture and input wiring. `use_velocity` / `use_position` gate the
/// extra cell input channels, `use_qt` gates the quaternion loss, `use_bias`
/// gates training of the cell biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pose_dim: usize,
    pub pos_dim: usize,
    pub hidden: usize,
    pub obs_frames: usize,
    pub pred_frames: usize,
    pub variant: Variant,
    pub loss: LossKind,
    pub use_velocity: bool,
    pub use_position: bool,
    pub use_qt: bool,
    pub use_bias: bool,
    pub dropout: f64,
    pub fps: f64,
}

impl ModelConfig {
    /// Desk-scale defaults for a given pose dimensionality.
    pub fn desk_default(pose_dim: usize) -> Self {
        ModelConfig {
            pose_dim,
            pos_dim: pose_dim,
            hidden: 64,
            obs_frames: 50,
            pred_frames: 25,
            variant: Variant::Pvred,
            loss: LossKind::QuatL1,
            use_velocity: true,
            use_position: true,
            use_qt: true,
            use_bias: true,
            dropout: 0.2,
            fps: 25.0,
        }
    }

    /// The loss actually trained: the quaternion loss requires the
    /// quaternion-transformation toggle; with it off the raw-pose loss is
    /// used regardless of `loss`.
    pub fn effective_loss(&self) -> LossKind {
        if self.use_qt {
            self.loss
        } else {
            LossKind::EulerMse
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pose_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidInput("pose and hidden sizes must be positive".into()));
        }
        if self.pos_dim < 2 {
            return Err(Error::InvalidInput(format!(
                "position embedding dimension must be at least 2, got {}",
                self.pos_dim
            )));
        }
        if self.obs_frames < 2 {
            return Err(Error::InvalidInput(
                "need at least 2 observed frames for a nonzero velocity".into(),
            ));
        }
        if self.pred_frames == 0 {
            return Err(Error::InvalidInput("need at least 1 predicted frame".into()));
        }
        if self.effective_loss() == LossKind::QuatL1 && self.pose_dim % 3 != 0 {
            return Err(Error::InvalidInput(format!(
                "the quaternion loss needs 3 channels per joint; pose dimension {} is not a multiple of 3",
                self.pose_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    /// Which channels the decoder feeds back into the cell.
    fn decoder_feeds(&self) -> (bool, bool) {
        match self.variant {
            Variant::Pvred => (self.use_velocity, self.use_position),
            Variant::Red => (false, false),
        }
    }
}

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 16,
            learning_rate: 1e-4,
            clip_norm: 5.0,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        Ok(())
    }
}

/// Frame-difference velocities: row 0 is zero, row t is `x_t − x_{t−1}`.
pub fn compute_velocities(frames: &Mat) -> Mat {
    let mut v = Mat::zeros(frames.rows(), frames.cols());
    for t in 1..frames.rows() {
        let (prev, cur) = (frames.row(t - 1), frames.row(t));
        let out = v.row_mut(t);
        for c in 0..frames.cols() {
            out[c] = cur[c] - prev[c];
        }
    }
    v
}

/// Encoder output: the final hidden state plus per-step caches for backward.
#[derive(Debug, Clone)]
pub struct EncodeResult {
    pub hidden: Vec<f64>,
    pub caches: Vec<StepCache>,
}

/// Decoder output. Row `s` of `poses` is the prediction for observed-frame
/// index `n+s+1`; `velocities` row `s` is the step that produced it.
#[derive(Debug, Clone)]
pub struct PredictionBatch {
    pub poses: Mat,
    pub velocities: Mat,
    /// Hidden states entering each decoder step: `h_n .. h_{n+m−1}`.
    pub hiddens: Vec<Vec<f64>>,
    /// Dropout multiplier masks, one per decoder step.
    pub masks: Vec<Vec<f64>>,
    /// Caches of the decoder cell steps (there are `steps − 1` of them).
    pub cell_caches: Vec<StepCache>,
}

fn position_input(cfg: &ModelConfig, t: usize, enabled: bool) -> Result<Vec<f64>> {
    if enabled {
        embed_position(t, cfg.pos_dim)
    } else {
        Ok(vec![0.0; cfg.pos_dim])
    }
}

/// Run the encoder over `observed` (must be `cfg.obs_frames` rows of
/// `cfg.pose_dim` channels), frame indices 1-based from the clip start.
pub fn encode(params: &ModelParams, observed: &Mat, cfg: &ModelConfig) -> Result<EncodeResult> {
    cfg.validate()?;
    if observed.rows() != cfg.obs_frames || observed.cols() != cfg.pose_dim {
        return Err(Error::ShapeMismatch(format!(
            "encoder expects {}×{} observations, got {}×{}",
            cfg.obs_frames,
            cfg.pose_dim,
            observed.rows(),
            observed.cols()
        )));
    }
    let velocities = compute_velocities(observed);
    let zero_velocity = vec![0.0; cfg.pose_dim];

    let mut hidden = vec![0.0; cfg.hidden];
    let mut caches = Vec::with_capacity(cfg.obs_frames);
    for t in 0..cfg.obs_frames {
        let vel: &[f64] = if cfg.use_velocity { velocities.row(t) } else { &zero_velocity };
        let pos = position_input(cfg, t + 1, cfg.use_position)?;
        let (next, cache) = cell_forward(&params.cell, observed.row(t), vel, &pos, &hidden)?;
        hidden = next;
        caches.push(cache);
    }
    Ok(EncodeResult { hidden, caches })
}

fn decode_with_feeds(
    params: &ModelParams,
    start_hidden: &[f64],
    last_pose: &[f64],
    steps: usize,
    cfg: &ModelConfig,
    feed_velocity: bool,
    feed_position: bool,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<PredictionBatch> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::InvalidInput("need at least 1 decode step".into()));
    }
    if start_hidden.len() != cfg.hidden || last_pose.len() != cfg.pose_dim {
        return Err(Error::ShapeMismatch(format!(
            "decoder expects state {} and pose {}, got {} and {}",
            cfg.hidden,
            cfg.pose_dim,
            start_hidden.len(),
            last_pose.len()
        )));
    }

    let zero_velocity = vec![0.0; cfg.pose_dim];
    let mut poses = Mat::zeros(steps, cfg.pose_dim);
    let mut velocities = Mat::zeros(steps, cfg.pose_dim);
    let mut hiddens = Vec::with_capacity(steps);
    let mut masks = Vec::with_capacity(steps);
    let mut cell_caches = Vec::with_capacity(steps.saturating_sub(1));

    let mut hidden = start_hidden.to_vec();
    let mut pose = last_pose.to_vec();
    for s in 0..steps {
        hiddens.push(hidden.clone());
        let (dropped, mask) = dropout(&hidden, cfg.dropout, training, rng)?;
        masks.push(mask);
        let velocity = linear_forward(&params.head, &dropped)?;
        for (p, v) in pose.iter_mut().zip(&velocity) {
            *p += v;
        }
        poses.row_mut(s).copy_from_slice(&pose);
        velocities.row_mut(s).copy_from_slice(&velocity);

        if s + 1 < steps {
            let vel_in: &[f64] = if feed_velocity { &velocity } else { &zero_velocity };
            // The cell producing h_{n+s+1} sees the embedding of its own
            // (1-based) frame index, continuing the encoder's numbering.
            let pos_in = position_input(cfg, cfg.obs_frames + s + 1, feed_position)?;
            let (next, cache) = cell_forward(&params.cell, &pose, vel_in, &pos_in, &hidden)?;
            hidden = next;
            cell_caches.push(cache);
        }
    }
    Ok(PredictionBatch { poses, velocities, hiddens, masks, cell_caches })
}

/// Autoregressive decoding with the configured input channels.
pub fn decode(
    params: &ModelParams,
    start_hidden: &[f64],
    last_pose: &[f64],
    steps: usize,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<PredictionBatch> {
    let (feed_velocity, feed_position) = cfg.decoder_feeds();
    decode_with_feeds(
        params,
        start_hidden,
        last_pose,
        steps,
        cfg,
        feed_velocity,
        feed_position,
        rng,
        training,
    )
}

/// Baseline decoding: the cell sees the fed-back pose only. The velocity is
/// still predicted and still added residually — it is just not an input.
pub fn red_decode(
    params: &ModelParams,
    start_hidden: &[f64],
    last_pose: &[f64],
    steps: usize,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<PredictionBatch> {
    decode_with_feeds(
        params, start_hidden, last_pose, steps, cfg, false, false, rng, training,
    )
}

/// One full pass: encode the observation, decode `cfg.pred_frames` steps.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub encoded: EncodeResult,
    pub prediction: PredictionBatch,
}

pub fn forward(
    params: &ModelParams,
    observed: &Mat,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<ForwardPass> {
    let encoded = encode(params, observed, cfg)?;
    let last_pose = observed.row(cfg.obs_frames - 1).to_vec();
    let prediction = decode(
        params,
        &encoded.hidden,
        &last_pose,
        cfg.pred_frames,
        cfg,
        rng,
        training,
    )?;
    Ok(ForwardPass { encoded, prediction })
}

fn check_loss_shapes(prediction: &Mat, truth: &Mat) -> Result<()> {
    if prediction.rows() != truth.rows() || prediction.cols() != truth.cols() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}×{}, truth is {}×{}",
            prediction.rows(),
            prediction.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    if prediction.rows() == 0 {
        return Err(Error::InvalidInput("need at least one frame to score".into()));
    }
    Ok(())
}

/// Mean over frames of the L1 distance between quaternion transforms.
pub fn loss_quat_l1(prediction: &Mat, truth: &Mat) -> Result<f64> {
    check_loss_shapes(prediction, truth)?;
    let mut total = 0.0;
    for (pred_row, truth_row) in prediction.iter_rows().zip(truth.iter_rows()) {
        let qp = pose_to_quats(pred_row)?;
        let qt = pose_to_quats(truth_row)?;
        total += qp.iter().zip(&qt).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / prediction.rows() as f64)
}

/// Mean over frames of the L2 distance on raw pose channels.
pub fn loss_mse(prediction: &Mat, truth: &Mat) -> Result<f64> {
    check_loss_shapes(prediction, truth)?;
    let mut total = 0.0;
    for (pred_row, truth_row) in prediction.iter_rows().zip(truth.iter_rows()) {
        total += linalg::l2_norm(&linalg::sub(pred_row, truth_row));
    }
    Ok(total / prediction.rows() as f64)
}

pub fn loss_value(kind: LossKind, prediction: &Mat, truth: &Mat) -> Result<f64> {
    match kind {
        LossKind::QuatL1 => loss_quat_l1(prediction, truth),
        LossKind::EulerMse => loss_mse(prediction, truth),
    }
}

/// d loss / d prediction, one row per predicted frame. Both losses use the
/// zero subgradient wherever they are non-differentiable (exact hits).
fn loss_gradient(kind: LossKind, prediction: &Mat, truth: &Mat) -> Result<Mat> {
    check_loss_shapes(prediction, truth)?;
    let frames = prediction.rows() as f64;
    let mut grad = Mat::zeros(prediction.rows(), prediction.cols());
    for s in 0..prediction.rows() {
        let pred_row = prediction.row(s);
        let truth_row = truth.row(s);
        match kind {
            LossKind::QuatL1 => {
                let qp = pose_to_quats(pred_row)?;
                let qt = pose_to_quats(truth_row)?;
                // ∂/∂q |q − q*| is the sign, 0 at an exact hit.
                let signs: Vec<f64> = qp
                    .iter()
                    .zip(&qt)
                    .map(|(a, b)| {
                        if a > b {
                            1.0 / frames
                        } else if a < b {
                            -1.0 / frames
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let back = pose_to_quats_backward(pred_row, &signs)?;
                grad.row_mut(s).copy_from_slice(&back);
            }
            LossKind::EulerMse => {
                let diff = linalg::sub(pred_row, truth_row);
                let norm = linalg::l2_norm(&diff);
                if norm > 0.0 {
                    let row = grad.row_mut(s);
                    for (g, d) in row.iter_mut().zip(&diff) {
                        *g = d / (norm * frames);
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Full backward pass: loss gradient pulled through the decoder (residual
/// chain, fed-back inputs, dropout, head) and on through the encoder.
/// Returns parameter gradients shaped like `params`.
pub fn backward(
    params: &ModelParams,
    pass: &ForwardPass,
    truth: &Mat,
    cfg: &ModelConfig,
) -> Result<ModelParams> {
    let prediction = &pass.prediction;
    let steps = prediction.poses.rows();
    if prediction.hiddens.len() != steps
        || prediction.masks.len() != steps
        || prediction.cell_caches.len() + 1 != steps.max(1)
    {
        return Err(Error::State(format!(
            "decoder caches hold {} states, {} masks and {} cell steps for {} outputs",
            prediction.hiddens.len(),
            prediction.masks.len(),
            prediction.cell_caches.len(),
            steps
        )));
    }
    if pass.encoded.caches.len() != cfg.obs_frames {
        return Err(Error::State(format!(
            "encoder cached {} steps for {} observed frames",
            pass.encoded.caches.len(),
            cfg.obs_frames
        )));
    }

    let mut grads = params.zeros_like();
    let (feed_velocity, _) = cfg.decoder_feeds();

    // Gradient w.r.t. each predicted pose, seeded by the loss.
    let loss_grad = loss_gradient(cfg.effective_loss(), &prediction.poses, truth)?;
    let mut d_poses: Vec<Vec<f64>> = (0..steps).map(|s| loss_grad.row(s).to_vec()).collect();
    // Gradient w.r.t. each decoder-step hidden state h_{n+s}.
    let mut d_hiddens: Vec<Vec<f64>> = vec![vec![0.0; cfg.hidden]; steps];

    for s in (0..steps).rev() {
        let mut d_velocity = vec![0.0; cfg.pose_dim];

        // Cell that consumed this step's outputs (produced h_{n+s+1}).
        if s + 1 < steps {
            let d_next = std::mem::take(&mut d_hiddens[s + 1]);
            let (d_pose_in, d_vel_in, d_h_prev) =
                cell_backward(&params.cell, &prediction.cell_caches[s], &d_next, &mut grads.cell)?;
            linalg::axpy(1.0, &d_pose_in, &mut d_poses[s]);
            if feed_velocity {
                linalg::axpy(1.0, &d_vel_in, &mut d_velocity);
            }
            linalg::axpy(1.0, &d_h_prev, &mut d_hiddens[s]);
        }

        // Residual: x̂_s = x̂_{s−1} + v̂_s.
        let d_pose = std::mem::take(&mut d_poses[s]);
        linalg::axpy(1.0, &d_pose, &mut d_velocity);
        if s > 0 {
            linalg::axpy(1.0, &d_pose, &mut d_poses[s - 1]);
        }

        // Head applied to the dropped-out hidden state.
        let dropped = linalg::hadamard(&prediction.hiddens[s], &prediction.masks[s]);
        let d_dropped = linear_backward(&params.head, &dropped, &d_velocity, &mut grads.head)?;
        linalg::hadamard_add(&d_dropped, &prediction.masks[s], &mut d_hiddens[s]);
    }

    // Encoder: plain backpropagation through time; data inputs need no grads.
    let mut d_hidden = std::mem::take(&mut d_hiddens[0]);
    for cache in pass.encoded.caches.iter().rev() {
        let (_, _, d_prev) = cell_backward(&params.cell, cache, &d_hidden, &mut grads.cell)?;
        d_hidden = d_prev;
    }

    // Bias ablation: freeze cell biases by dropping their gradients.
    if !cfg.use_bias {
        for gate in [
            &mut grads.cell.update,
            &mut grads.cell.reset,
            &mut grads.cell.candidate,
        ] {
            for b in &mut gate.bias {
                *b = 0.0;
            }
        }
    }
    Ok(grads)
}

/// Train in place; returns the per-iteration mean batch loss.
///
/// Deterministic in `train_cfg.seed`: one stream drives clip sampling, an
/// independent stream drives dropout.
pub fn train(
    params: &mut ModelParams,
    dataset: &[MotionSequence],
    cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    train_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let needed = cfg.obs_frames + cfg.pred_frames;
    for (i, seq) in dataset.iter().enumerate() {
        if seq.num_channels() != cfg.pose_dim {
            return Err(Error::ShapeMismatch(format!(
                "sequence {} has {} channels, the model expects {}",
                i,
                seq.num_channels(),
                cfg.pose_dim
            )));
        }
        if seq.num_frames() < needed {
            return Err(Error::InsufficientLength { needed, have: seq.num_frames() });
        }
    }

    let mut clip_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    dropout_rng.set_stream(1);

    let mut adam = AdamState::new(params);
    let mut history = Vec::with_capacity(train_cfg.iterations);
    let loss_kind = cfg.effective_loss();

    for iteration in 0..train_cfg.iterations {
        let mut batch_grads = params.zeros_like();
        let mut batch_loss = 0.0;
        for _ in 0..train_cfg.batch_size {
            let seq = &dataset[rand::Rng::gen_range(&mut clip_rng, 0..dataset.len())];
            let (observed, future) =
                crate::data::sample_clip(seq, cfg.obs_frames, cfg.pred_frames, &mut clip_rng)?;
            let pass = forward(params, &observed, cfg, &mut dropout_rng, true)?;
            if !pass.prediction.poses.as_slice().iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { iteration });
            }
            batch_loss += loss_value(loss_kind, &pass.prediction.poses, &future)?;
            let grads = backward(params, &pass, &future, cfg)?;
            batch_grads.add_assign(&grads);
        }
        let scale = 1.0 / train_cfg.batch_size as f64;
        batch_grads.scale(scale);
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        clip_global_norm(&mut batch_grads, train_cfg.clip_norm);
        adam_step(params, &batch_grads, &mut adam, train_cfg.learning_rate)
            .map_err(|_| Error::Divergence { iteration })?;
        history.push(batch_loss);
    }
    Ok(history)
}

/// A trained (or fresh) model applied as a sequence predictor: encodes the
/// last `obs_frames` rows of the observation, then decodes with dropout off.
pub struct ModelPredictor<'a> {
    pub params: &'a ModelParams,
    pub config: &'a ModelConfig,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, observed: &Mat, steps: usize) -> Result<Mat> {
        let n = self.config.obs_frames;
        if observed.rows() < n {
            return Err(Error::InsufficientLength { needed: n, have: observed.rows() });
        }
        let window = observed.slice_rows(observed.rows() - n, observed.rows());
        let encoded = encode(self.params, &window, self.config)?;
        let last_pose = window.row(n - 1).to_vec();
        // Inference: dropout is inert, so the stream never draws.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = decode(
            self.params,
            &encoded.hidden,
            &last_pose,
            steps,
            self.config,
            &mut rng,
            false,
        )?;
        Ok(batch.poses)
    }
}

// ─── persistence ───

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Everything needed to reload and rerun a model: format tag, both configs,
/// and the raw parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub config: ModelConfig,
    pub train: TrainConfig,
    pub params: ModelParams,
}

/// Serialise as a self-describing JSON document. Numbers round-trip
/// bit-for-bit (shortest-representation float printing).
pub fn encode_model(file: &ModelFile) -> Result<String> {
    serde_json::to_string_pretty(file)
        .map_err(|e| Error::InvalidInput(format!("model not serialisable: {e}")))
}

pub fn decode_model(text: &str) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unsupported model format {} (this build reads {})",
                file.format_version, MODEL_FORMAT_VERSION
            ),
        });
    }
    file.config.validate()?;
    Ok(file)
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    let mut text = encode_model(file)?;
    text.push('\n');
    crate::write_atomic(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    decode_model(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthSpec;
    use crate::net::init_params;
    use std::f64::consts::PI;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            pose_dim: 3,
            pos_dim: 4,
            hidden: 5,
            obs_frames: 6,
            pred_frames: 4,
            variant: Variant::Pvred,
            loss: LossKind::QuatL1,
            use_velocity: true,
            use_position: true,
            use_qt: true,
            use_bias: true,
            dropout: 0.0,
            fps: 25.0,
        }
    }

    fn ramp(rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |r, c| 0.1 * r as f64 + 0.01 * c as f64)
    }

    #[test]
    fn velocities_of_constant_motion_are_zero() {
        let frames = Mat::from_fn(5, 3, |_, c| c as f64);
        let v = compute_velocities(&frames);
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn velocities_of_a_ramp_are_constant_after_the_first_frame() {
        let v = compute_velocities(&ramp(6, 2));
        assert_eq!(v.row(0), &[0.0, 0.0]);
        for t in 1..6 {
            for c in 0..2 {
                assert!((v.row(t)[c] - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn velocities_of_a_single_frame_are_one_zero_row() {
        let v = compute_velocities(&Mat::from_fn(1, 4, |_, c| c as f64));
        assert_eq!(v.rows(), 1);
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn encode_with_zero_params_keeps_the_hidden_state_at_zero() {
        let cfg = tiny_config();
        let params = ModelParams::zeros(cfg.pose_dim, cfg.pos_dim, cfg.hidden);
        let out = encode(&params, &ramp(cfg.obs_frames, cfg.pose_dim), &cfg).unwrap();
        // z = σ(0) = 1/2 everywhere but the candidate is tanh(0) = 0, so the
        // state stays pinned at the origin.
        assert!(out.hidden.iter().all(|&h| h == 0.0));
        assert_eq!(out.caches.len(), cfg.obs_frames);
    }

    #[test]
    fn encode_rejects_wrong_shapes() {
        let cfg = tiny_config();
        let params = ModelParams::zeros(cfg.pose_dim, cfg.pos_dim, cfg.hidden);
        assert!(matches!(
            encode(&params, &ramp(3, cfg.pose_dim), &cfg),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            encode(&params, &ramp(cfg.obs_frames, 2), &cfg),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn input_toggles_change_the_encoding() {
        let cfg = tiny_config();
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 11);
        let observed = ramp(cfg.obs_frames, cfg.pose_dim);
        let full = encode(&params, &observed, &cfg).unwrap().hidden;
        let mut no_vel = cfg.clone();
        no_vel.use_velocity = false;
        let mut no_pos = cfg.clone();
        no_pos.use_position = false;
        let hv = encode(&params, &observed, &no_vel).unwrap().hidden;
        let hp = encode(&params, &observed, &no_pos).unwrap().hidden;
        assert!(full.iter().zip(&hv).any(|(a, b)| (a - b).abs() > 1e-12));
        assert!(full.iter().zip(&hp).any(|(a, b)| (a - b).abs() > 1e-12));
        assert!(hv.iter().zip(&hp).any(|(a, b)| (a - b).abs() > 1e-12));
    }

    #[test]
    fn zero_head_weights_decode_to_a_repeat_of_the_last_pose() {
        let cfg = tiny_config();
        // Random cell, zero head: every predicted velocity is exactly zero.
        let mut params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 3);
        params.head.weight.scale(0.0);
        let last = [0.4, -1.2, PI];
        let h = vec![0.3; cfg.hidden];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = decode(&params, &h, &last, 5, &cfg, &mut rng, false).unwrap();
        for s in 0..5 {
            assert_eq!(out.poses.row(s), &last[..]);
        }
        assert!(out.velocities.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(out.cell_caches.len(), 4);
    }

    #[test]
    fn decoded_poses_are_running_sums_of_decoded_velocities() {
        let cfg = tiny_config();
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 9);
        let last = [0.2, 0.1, -0.3];
        let h: Vec<f64> = (0..cfg.hidden).map(|i| 0.1 * i as f64 - 0.2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = decode(&params, &h, &last, 6, &cfg, &mut rng, false).unwrap();
        let mut acc = last.to_vec();
        for s in 0..6 {
            for c in 0..3 {
                acc[c] += out.velocities.row(s)[c];
            }
            assert_eq!(out.poses.row(s), &acc[..]);
        }
    }

    #[test]
    fn single_step_decode_needs_no_cell_step() {
        let cfg = tiny_config();
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = decode(&params, &vec![0.1; cfg.hidden], &[0.0, 0.0, 0.0], 1, &cfg, &mut rng, false)
            .unwrap();
        assert_eq!(out.poses.rows(), 1);
        assert!(out.cell_caches.is_empty());
    }

    #[test]
    fn red_decode_matches_decode_with_channels_toggled_off() {
        let mut cfg = tiny_config();
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 21);
        let h: Vec<f64> = (0..cfg.hidden).map(|i| (i as f64).sin() * 0.3).collect();
        let last = [0.5, -0.5, 0.25];
        let mut rng_a = ChaCha8Rng::seed_from_u64(0);
        let red = red_decode(&params, &h, &last, 4, &cfg, &mut rng_a, false).unwrap();
        cfg.use_velocity = false;
        cfg.use_position = false;
        let mut rng_b = ChaCha8Rng::seed_from_u64(0);
        let plain = decode(&params, &h, &last, 4, &cfg, &mut rng_b, false).unwrap();
        assert_eq!(red.poses.as_slice(), plain.poses.as_slice());
        assert_eq!(red.velocities.as_slice(), plain.velocities.as_slice());
    }

    #[test]
    fn the_red_variant_ignores_decoder_velocity_and_position_channels() {
        let mut cfg = tiny_config();
        cfg.variant = Variant::Red;
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 21);
        let h = vec![0.2; cfg.hidden];
        let last = [0.1, 0.2, 0.3];
        let mut rng_a = ChaCha8Rng::seed_from_u64(0);
        let via_variant = decode(&params, &h, &last, 4, &cfg, &mut rng_a, false).unwrap();
        let mut rng_b = ChaCha8Rng::seed_from_u64(0);
        let via_red = red_decode(&params, &h, &last, 4, &cfg, &mut rng_b, false).unwrap();
        assert_eq!(via_variant.poses.as_slice(), via_red.poses.as_slice());
    }

    #[test]
    fn input_toggle_combinations_decode_to_distinct_trajectories() {
        let base = tiny_config();
        let params = init_params(base.pose_dim, base.pos_dim, base.hidden, 33);
        let h: Vec<f64> = (0..base.hidden).map(|i| 0.21 * (i as f64 + 1.0).cos()).collect();
        let last = [0.3, -0.2, 0.9];
        let combos = [(true, true), (true, false), (false, true), (false, false)];
        let mut outputs: Vec<Vec<f64>> = Vec::new();
        for (vel, pos) in combos {
            let mut cfg = base.clone();
            cfg.use_velocity = vel;
            cfg.use_position = pos;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = decode(&params, &h, &last, 4, &cfg, &mut rng, false).unwrap();
            outputs.push(out.poses.as_slice().to_vec());
        }
        for i in 0..outputs.len() {
            for j in (i + 1)..outputs.len() {
                let max_gap = outputs[i]
                    .iter()
                    .zip(&outputs[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(max_gap > 1e-9, "combos {i} and {j} decode identically");
            }
        }
    }

    #[test]
    fn loss_of_a_perfect_prediction_is_zero() {
        let truth = ramp(4, 3);
        assert_eq!(loss_quat_l1(&truth, &truth).unwrap(), 0.0);
        assert_eq!(loss_mse(&truth, &truth).unwrap(), 0.0);
    }

    #[test]
    fn quat_loss_of_a_half_turn_against_identity_is_two() {
        // One joint rotated by π about x against no rotation: the transforms
        // are (0,1,0,0) and (1,0,0,0), so the L1 gap is exactly 2.
        let pred = Mat::from_rows(&[vec![PI, 0.0, 0.0]]).unwrap();
        let truth = Mat::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!((loss_quat_l1(&pred, &truth).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mse_loss_is_the_mean_frame_distance() {
        let pred = Mat::from_rows(&[vec![3.0, 4.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let truth = Mat::zeros(2, 3);
        // Frame distances 5 and 0 average to 2.5.
        assert!((loss_mse(&pred, &truth).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn losses_reject_mismatched_shapes() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(3, 3);
        assert!(matches!(loss_quat_l1(&a, &b), Err(Error::ShapeMismatch(_))));
        assert!(matches!(loss_mse(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn the_two_losses_disagree_away_from_the_optimum() {
        let pred = Mat::from_rows(&[vec![0.3, -0.1, 0.2]]).unwrap();
        let truth = Mat::from_rows(&[vec![0.1, 0.1, 0.0]]).unwrap();
        let a = loss_quat_l1(&pred, &truth).unwrap();
        let b = loss_mse(&pred, &truth).unwrap();
        assert!((a - b).abs() > 1e-6);
        let ga = loss_gradient(LossKind::QuatL1, &pred, &truth).unwrap();
        let gb = loss_gradient(LossKind::EulerMse, &pred, &truth).unwrap();
        let gap = ga
            .as_slice()
            .iter()
            .zip(gb.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap > 1e-6);
    }

    #[test]
    fn qt_off_swaps_the_trained_loss_to_mse() {
        let mut cfg = tiny_config();
        assert_eq!(cfg.effective_loss(), LossKind::QuatL1);
        cfg.use_qt = false;
        assert_eq!(cfg.effective_loss(), LossKind::EulerMse);
        cfg.use_qt = true;
        cfg.loss = LossKind::EulerMse;
        assert_eq!(cfg.effective_loss(), LossKind::EulerMse);
    }

    #[test]
    fn backward_of_a_perfect_prediction_is_all_zero() {
        for loss in [LossKind::QuatL1, LossKind::EulerMse] {
            let mut cfg = tiny_config();
            cfg.loss = loss;
            let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 5);
            let observed = ramp(cfg.obs_frames, cfg.pose_dim);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let pass = forward(&params, &observed, &cfg, &mut rng, false).unwrap();
            let truth = pass.prediction.poses.clone();
            let grads = backward(&params, &pass, &truth, &cfg).unwrap();
            for slice in grads.tensors() {
                assert!(slice.iter().all(|&g| g == 0.0), "{loss:?} leaks gradient at the optimum");
            }
        }
    }

    #[test]
    fn config_validation_catches_bad_settings() {
        let good = tiny_config();
        assert!(good.validate().is_ok());
        let mut c = good.clone();
        c.obs_frames = 1;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.pred_frames = 0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.pose_dim = 4; // not a joint multiple while the quat loss is active
        assert!(c.validate().is_err());
        c.use_qt = false; // …but fine once the loss falls back to MSE
        assert!(c.validate().is_ok());
        let mut c = good;
        c.pos_dim = 1;
        assert!(c.validate().is_err());
    }

    fn small_training_setup(seed: u64) -> (ModelConfig, TrainConfig, Vec<MotionSequence>) {
        let mut cfg = tiny_config();
        cfg.pose_dim = 6;
        cfg.pos_dim = 6;
        cfg.hidden = 12;
        cfg.obs_frames = 8;
        cfg.pred_frames = 4;
        cfg.dropout = 0.2;
        let tcfg = TrainConfig {
            iterations: 5,
            batch_size: 3,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed,
        };
        let spec = SynthSpec {
            num_sequences: 3,
            frames: 40,
            joints: 2,
            seed: 13,
            ..SynthSpec::default()
        };
        let data = crate::data::generate_synthetic(&spec).unwrap();
        (cfg, tcfg, data)
    }

    #[test]
    fn zero_iterations_leave_the_parameters_untouched() {
        let (cfg, mut tcfg, data) = small_training_setup(1);
        tcfg.iterations = 0;
        let mut params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        let before = params.clone();
        let history = train(&mut params, &data, &cfg, &tcfg).unwrap();
        assert!(history.is_empty());
        let same = params
            .tensors()
            .iter()
            .zip(before.tensors().iter())
            .all(|(a, b)| a == b);
        assert!(same);
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let (cfg, tcfg, data) = small_training_setup(42);
        let mut p1 = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        let mut p2 = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        let h1 = train(&mut p1, &data, &cfg, &tcfg).unwrap();
        let h2 = train(&mut p2, &data, &cfg, &tcfg).unwrap();
        assert_eq!(h1, h2);
        let f1 = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: cfg.clone(),
            train: tcfg.clone(),
            params: p1,
        };
        let f2 = ModelFile { params: p2, ..f1.clone() };
        assert_eq!(encode_model(&f1).unwrap(), encode_model(&f2).unwrap());
    }

    #[test]
    fn different_seeds_give_different_histories() {
        let (cfg, tcfg, data) = small_training_setup(1);
        let mut tcfg2 = tcfg.clone();
        tcfg2.seed = 2;
        let mut p1 = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        let mut p2 = p1.clone();
        let h1 = train(&mut p1, &data, &cfg, &tcfg).unwrap();
        let h2 = train(&mut p2, &data, &cfg, &tcfg2).unwrap();
        assert_ne!(h1, h2);
    }

    #[test]
    fn training_on_constant_motion_drives_the_loss_to_nearly_zero() {
        // Constant frames make "predict zero velocity" exactly optimal, so a
        // modest learning rate should reach a tiny loss quickly.
        let frames = Mat::from_fn(60, 3, |_, c| 0.3 * (c as f64 + 1.0));
        let data = vec![MotionSequence {
            frames,
            fps: 25.0,
            channel_names: crate::data::default_channel_names(1),
        }];
        let mut cfg = tiny_config();
        cfg.hidden = 8;
        cfg.obs_frames = 8;
        cfg.pred_frames = 4;
        let tcfg = TrainConfig {
            iterations: 2500,
            batch_size: 4,
            learning_rate: 0.001,
            clip_norm: 5.0,
            seed: 3,
        };
        let mut params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 4);
        let history = train(&mut params, &data, &cfg, &tcfg).unwrap();
        // Two claims: almost all of the loss is gone within 200 iterations,
        // and the long-run plateau is tiny. (A constant learning rate on an
        // L1-flavoured objective leaves a small step-size-proportional
        // oscillation floor, so exact zero is not reachable.)
        assert!(
            history[199] < 0.05 * history[0],
            "loss only fell from {} to {} in 200 iterations",
            history[0],
            history[199]
        );
        let tail: f64 = history[history.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail < 5e-3, "loss plateaued at {tail}");
    }

    #[test]
    fn training_reduces_the_loss_on_periodic_motion() {
        let (mut cfg, mut tcfg, data) = small_training_setup(6);
        cfg.dropout = 0.0;
        tcfg.iterations = 150;
        tcfg.learning_rate = 3e-3;
        let mut params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        let history = train(&mut params, &data, &cfg, &tcfg).unwrap();
        let head: f64 = history[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = history[history.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(
            tail < 0.6 * head,
            "loss went from {head} to {tail} over {} iterations",
            tcfg.iterations
        );
    }

    #[test]
    fn an_absurd_learning_rate_reports_divergence_with_its_iteration() {
        let (cfg, mut tcfg, data) = small_training_setup(1);
        tcfg.learning_rate = 1e308;
        tcfg.iterations = 6;
        let mut params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        match train(&mut params, &data, &cfg, &tcfg) {
            Err(Error::Divergence { iteration }) => assert!(iteration > 0 && iteration < 6),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn frozen_biases_stay_at_their_initial_values() {
        let (mut cfg, tcfg, data) = small_training_setup(9);
        cfg.use_bias = false;
        let mut params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 2);
        train(&mut params, &data, &cfg, &tcfg).unwrap();
        for gate in [&params.cell.update, &params.cell.reset, &params.cell.candidate] {
            assert!(gate.bias.iter().all(|&b| b == 0.0));
        }
        // The head bias is not part of the ablation and should have moved.
        assert!(params.head.bias.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn model_files_round_trip_bit_for_bit() {
        let cfg = tiny_config();
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 77);
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: cfg,
            train: TrainConfig::default(),
            params,
        };
        let text = encode_model(&file).unwrap();
        let back = decode_model(&text).unwrap();
        assert_eq!(back, file);
        // And the re-encoding is byte-identical.
        assert_eq!(encode_model(&back).unwrap(), text);
    }

    #[test]
    fn model_files_survive_a_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = tiny_config();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: cfg.clone(),
            train: TrainConfig::default(),
            params: init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 5),
        };
        save_model(&path, &file).unwrap();
        assert_eq!(load_model(&path).unwrap(), file);
    }

    #[test]
    fn corrupted_model_files_fail_to_parse() {
        assert!(matches!(decode_model("{ not json"), Err(Error::Parse { .. })));
        let cfg = tiny_config();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION + 9,
            config: cfg.clone(),
            train: TrainConfig::default(),
            params: ModelParams::zeros(cfg.pose_dim, cfg.pos_dim, cfg.hidden),
        };
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(decode_model(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn the_predictor_uses_the_last_window_and_matches_decode() {
        let cfg = tiny_config();
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, 8);
        // 10 rows observed, config window 6: only the tail should matter.
        let long = ramp(10, cfg.pose_dim);
        let tail = long.slice_rows(4, 10);
        let predictor = ModelPredictor { params: &params, config: &cfg };
        let from_long = predictor.predict(&long, 3).unwrap();
        let from_tail = predictor.predict(&tail, 3).unwrap();
        assert_eq!(from_long.as_slice(), from_tail.as_slice());

        let encoded = encode(&params, &tail, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let manual = decode(
            &params,
            &encoded.hidden,
            tail.row(5),
            3,
            &cfg,
            &mut rng,
            false,
        )
        .unwrap();
        assert_eq!(from_tail.as_slice(), manual.poses.as_slice());

        let short = ramp(3, cfg.pose_dim);
        assert!(matches!(
            predictor.predict(&short, 3),
            Err(Error::InsufficientLength { needed: 6, have: 3 })
        ));
    }
}
