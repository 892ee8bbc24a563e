//! The position-velocity recurrent cell and its training machinery: manual
//! forward/backward passes, the linear regression head, inverted dropout,
//! Xavier initialisation, global-norm gradient clipping, and Adam.
//!
//! The cell is a GRU with three extra input channels per gate. For gate
//! pre-activations
//! `a_g = U_x^g·x + U_v^g·v + U_p^g·p + W_g·s + b_g` (s = previous state for
//! the update/reset gates, `reset ∘ h_prev` for the candidate):
//!
//! ```text
//! z = σ(a_z)            update gate
//! r = σ(a_r)            reset gate
//! g = tanh(a_c)         candidate state
//! h = (1 − z) ∘ h_prev + z ∘ g
//! ```
//!
//! Every gradient below is derived by hand from these four lines; the
//! `gradcheck` module and the test suite verify them against central finite
//! differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hadamard, Mat};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-gate weights: one matrix per input channel, one recurrent matrix,
/// one bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub pose: Mat,
    pub velocity: Mat,
    pub position: Mat,
    pub recurrent: Mat,
    pub bias: Vec<f64>,
}

impl GateWeights {
    fn zeros(pose_dim: usize, pos_dim: usize, hidden: usize) -> Self {
        GateWeights {
            pose: Mat::zeros(hidden, pose_dim),
            velocity: Mat::zeros(hidden, pose_dim),
            position: Mat::zeros(hidden, pos_dim),
            recurrent: Mat::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
        }
    }
}

/// All weights of the recurrent cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub update: GateWeights,
    pub reset: GateWeights,
    pub candidate: GateWeights,
}

/// The linear regression head that maps a hidden state to a velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

/// Cell plus head: everything the optimiser updates. The same structure is
/// reused to hold gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub cell: CellParams,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn zeros(pose_dim: usize, pos_dim: usize, hidden: usize) -> Self {
        ModelParams {
            cell: CellParams {
                update: GateWeights::zeros(pose_dim, pos_dim, hidden),
                reset: GateWeights::zeros(pose_dim, pos_dim, hidden),
                candidate: GateWeights::zeros(pose_dim, pos_dim, hidden),
            },
            head: HeadParams {
                weight: Mat::zeros(pose_dim, hidden),
                bias: vec![0.0; pose_dim],
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.pose_dim(), self.pos_dim(), self.hidden())
    }

    pub fn pose_dim(&self) -> usize {
        self.head.weight.rows()
    }

    pub fn hidden(&self) -> usize {
        self.head.weight.cols()
    }

    pub fn pos_dim(&self) -> usize {
        self.cell.update.position.cols()
    }

    /// All tensors in a fixed, documented order: update/reset/candidate gate
    /// (pose, velocity, position, recurrent, bias each), then head weight and
    /// bias. Optimiser state is aligned to this order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(17);
        for gate in [&self.cell.update, &self.cell.reset, &self.cell.candidate] {
            out.push(gate.pose.as_slice());
            out.push(gate.velocity.as_slice());
            out.push(gate.position.as_slice());
            out.push(gate.recurrent.as_slice());
            out.push(gate.bias.as_slice());
        }
        out.push(self.head.weight.as_slice());
        out.push(self.head.bias.as_slice());
        out
    }

    /// Mutable view in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let ModelParams { cell, head } = self;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(17);
        for gate in [&mut cell.update, &mut cell.reset, &mut cell.candidate] {
            out.push(gate.pose.as_mut_slice());
            out.push(gate.velocity.as_mut_slice());
            out.push(gate.position.as_mut_slice());
            out.push(gate.recurrent.as_mut_slice());
            out.push(gate.bias.as_mut_slice());
        }
        out.push(head.weight.as_mut_slice());
        out.push(head.bias.as_mut_slice());
        out
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= s;
            }
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (mine, theirs) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }
}

/// Everything the backward pass needs about one forward step of the cell.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub pose: Vec<f64>,
    pub velocity: Vec<f64>,
    pub position: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gate_preactivation(
    g: &GateWeights,
    pose: &[f64],
    velocity: &[f64],
    position: &[f64],
    state: &[f64],
) -> Vec<f64> {
    let mut a = g.bias.clone();
    g.pose.matvec_add(pose, &mut a);
    g.velocity.matvec_add(velocity, &mut a);
    g.position.matvec_add(position, &mut a);
    g.recurrent.matvec_add(state, &mut a);
    a
}

fn check_cell_shapes(
    params: &CellParams,
    pose: &[f64],
    velocity: &[f64],
    position: &[f64],
    h_prev: &[f64],
) -> Result<()> {
    let g = &params.update;
    if pose.len() != g.pose.cols()
        || velocity.len() != g.velocity.cols()
        || position.len() != g.position.cols()
        || h_prev.len() != g.recurrent.cols()
    {
        return Err(Error::ShapeMismatch(format!(
            "cell expects pose {}, velocity {}, position {}, state {}; got {}, {}, {}, {}",
            g.pose.cols(),
            g.velocity.cols(),
            g.position.cols(),
            g.recurrent.cols(),
            pose.len(),
            velocity.len(),
            position.len(),
            h_prev.len()
        )));
    }
    Ok(())
}

/// One step of the cell. Returns the next hidden state and the cache the
/// backward pass consumes.
pub fn cell_forward(
    params: &CellParams,
    pose: &[f64],
    velocity: &[f64],
    position: &[f64],
    h_prev: &[f64],
) -> Result<(Vec<f64>, StepCache)> {
    check_cell_shapes(params, pose, velocity, position, h_prev)?;

    let z: Vec<f64> = gate_preactivation(&params.update, pose, velocity, position, h_prev)
        .into_iter()
        .map(stable_sigmoid)
        .collect();
    let r: Vec<f64> = gate_preactivation(&params.reset, pose, velocity, position, h_prev)
        .into_iter()
        .map(stable_sigmoid)
        .collect();
    let gated_state = hadamard(&r, h_prev);
    let g: Vec<f64> = gate_preactivation(&params.candidate, pose, velocity, position, &gated_state)
        .into_iter()
        .map(f64::tanh)
        .collect();

    let h: Vec<f64> = h_prev
        .iter()
        .zip(&z)
        .zip(&g)
        .map(|((hp, zi), gi)| (1.0 - zi) * hp + zi * gi)
        .collect();

    let cache = StepCache {
        pose: pose.to_vec(),
        velocity: velocity.to_vec(),
        position: position.to_vec(),
        h_prev: h_prev.to_vec(),
        update: z,
        reset: r,
        candidate: g,
    };
    Ok((h, cache))
}

/// Backward pass of one cell step. `d_h` is the gradient flowing into the
/// step's output state. Weight gradients accumulate into `grads`; the
/// returned triple is (d_pose, d_velocity, d_h_prev). (No gradient is needed
/// for the position input — embeddings are a fixed function of time.)
pub fn cell_backward(
    params: &CellParams,
    cache: &StepCache,
    d_h: &[f64],
    grads: &mut CellParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let hidden = cache.h_prev.len();
    if d_h.len() != hidden {
        return Err(Error::ShapeMismatch(format!(
            "upstream state gradient has length {}, expected {}",
            d_h.len(),
            hidden
        )));
    }

    let z = &cache.update;
    let r = &cache.reset;
    let g = &cache.candidate;
    let gated_state = hadamard(r, &cache.h_prev);

    // h = (1 − z) ∘ h_prev + z ∘ g
    let mut d_h_prev: Vec<f64> = d_h.iter().zip(z).map(|(d, zi)| d * (1.0 - zi)).collect();
    let d_z: Vec<f64> = d_h
        .iter()
        .zip(g)
        .zip(&cache.h_prev)
        .map(|((d, gi), hp)| d * (gi - hp))
        .collect();
    let d_g: Vec<f64> = d_h.iter().zip(z).map(|(d, zi)| d * zi).collect();

    let mut d_pose = vec![0.0; cache.pose.len()];
    let mut d_velocity = vec![0.0; cache.velocity.len()];

    // Candidate: g = tanh(a_c), a_c = ... + W_c·(r ∘ h_prev) + b_c
    let d_ac: Vec<f64> = d_g.iter().zip(g).map(|(d, gi)| d * (1.0 - gi * gi)).collect();
    grads.candidate.pose.add_outer(&d_ac, &cache.pose);
    grads.candidate.velocity.add_outer(&d_ac, &cache.velocity);
    grads.candidate.position.add_outer(&d_ac, &cache.position);
    grads.candidate.recurrent.add_outer(&d_ac, &gated_state);
    for (b, d) in grads.candidate.bias.iter_mut().zip(&d_ac) {
        *b += d;
    }
    params.candidate.pose.matvec_t_add(&d_ac, &mut d_pose);
    params.candidate.velocity.matvec_t_add(&d_ac, &mut d_velocity);
    let mut d_gated = vec![0.0; hidden];
    params.candidate.recurrent.matvec_t_add(&d_ac, &mut d_gated);
    let d_r: Vec<f64> = d_gated.iter().zip(&cache.h_prev).map(|(d, hp)| d * hp).collect();
    for ((dhp, d), ri) in d_h_prev.iter_mut().zip(&d_gated).zip(r) {
        *dhp += d * ri;
    }

    // Update gate: z = σ(a_z)
    let d_az: Vec<f64> = d_z.iter().zip(z).map(|(d, zi)| d * zi * (1.0 - zi)).collect();
    grads.update.pose.add_outer(&d_az, &cache.pose);
    grads.update.velocity.add_outer(&d_az, &cache.velocity);
    grads.update.position.add_outer(&d_az, &cache.position);
    grads.update.recurrent.add_outer(&d_az, &cache.h_prev);
    for (b, d) in grads.update.bias.iter_mut().zip(&d_az) {
        *b += d;
    }
    params.update.pose.matvec_t_add(&d_az, &mut d_pose);
    params.update.velocity.matvec_t_add(&d_az, &mut d_velocity);
    params.update.recurrent.matvec_t_add(&d_az, &mut d_h_prev);

    // Reset gate: r = σ(a_r)
    let d_ar: Vec<f64> = d_r.iter().zip(r).map(|(d, ri)| d * ri * (1.0 - ri)).collect();
    grads.reset.pose.add_outer(&d_ar, &cache.pose);
    grads.reset.velocity.add_outer(&d_ar, &cache.velocity);
    grads.reset.position.add_outer(&d_ar, &cache.position);
    grads.reset.recurrent.add_outer(&d_ar, &cache.h_prev);
    for (b, d) in grads.reset.bias.iter_mut().zip(&d_ar) {
        *b += d;
    }
    params.reset.pose.matvec_t_add(&d_ar, &mut d_pose);
    params.reset.velocity.matvec_t_add(&d_ar, &mut d_velocity);
    params.reset.recurrent.matvec_t_add(&d_ar, &mut d_h_prev);

    Ok((d_pose, d_velocity, d_h_prev))
}

/// `weight·h + bias`.
pub fn linear_forward(params: &HeadParams, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != params.weight.cols() {
        return Err(Error::ShapeMismatch(format!(
            "head expects state of length {}, got {}",
            params.weight.cols(),
            h.len()
        )));
    }
    let mut out = params.bias.clone();
    params.weight.matvec_add(h, &mut out);
    Ok(out)
}

/// Backward pass of the head. Accumulates weight gradients into `grads` and
/// returns the gradient with respect to `h`.
pub fn linear_backward(
    params: &HeadParams,
    h: &[f64],
    d_out: &[f64],
    grads: &mut HeadParams,
) -> Result<Vec<f64>> {
    if d_out.len() != params.weight.rows() || h.len() != params.weight.cols() {
        return Err(Error::ShapeMismatch(format!(
            "head backward got output {} / state {}, expected {} / {}",
            d_out.len(),
            h.len(),
            params.weight.rows(),
            params.weight.cols()
        )));
    }
    grads.weight.add_outer(d_out, h);
    for (b, d) in grads.bias.iter_mut().zip(d_out) {
        *b += d;
    }
    let mut d_h = vec![0.0; h.len()];
    params.weight.matvec_t_add(d_out, &mut d_h);
    Ok(d_h)
}

/// Inverted dropout. Returns the (possibly) masked values and the multiplier
/// mask — entries are `0` or `1/(1−rate)` — so backward is just an
/// elementwise product with the mask. Outside training (or at rate 0) this
/// is the identity with an all-ones mask and consumes no randomness.
pub fn dropout(
    values: &[f64],
    rate: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((values.to_vec(), vec![1.0; values.len()]));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..values.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep_scale })
        .collect();
    Ok((hadamard(values, &mask), mask))
}

/// Optimiser state: first/second moment estimates aligned with
/// [`ModelParams::tensors`], plus the step counter used for bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam update with bias correction and a constant learning rate.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for t in grads.tensors() {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: state.step as usize });
        }
    }
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);

    let grad_tensors = grads.tensors();
    for (idx, param) in params.tensors_mut().into_iter().enumerate() {
        let grad = grad_tensors[idx];
        let m = &mut state.first[idx];
        let v = &mut state.second[idx];
        for i in 0..param.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Scale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for t in grads.tensors() {
        for v in t {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Xavier-uniform initialisation: every weight matrix is drawn from
/// `U(−L, L)` with `L = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
/// Deterministic in `seed`.
///
/// The output head is drawn from a range shrunk by 10×. Predicted poses are
/// residual (previous pose + predicted velocity), so a near-zero head makes
/// the freshly initialised model start out repeating the last observed frame
/// — already a strong predictor — instead of integrating large random
/// velocities it then has to unlearn.
pub fn init_params(pose_dim: usize, pos_dim: usize, hidden: usize, seed: u64) -> ModelParams {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(pose_dim, pos_dim, hidden);

    let mut fill = |m: &mut Mat, shrink: f64| {
        let limit = (6.0 / (m.cols() + m.rows()) as f64).sqrt() * shrink;
        for v in m.as_mut_slice() {
            *v = rng.gen_range(-limit..limit);
        }
    };
    for gate in [
        &mut params.cell.update,
        &mut params.cell.reset,
        &mut params.cell.candidate,
    ] {
        fill(&mut gate.pose, 1.0);
        fill(&mut gate.velocity, 1.0);
        fill(&mut gate.position, 1.0);
        fill(&mut gate.recurrent, 1.0);
    }
    fill(&mut params.head.weight, 0.1);
    params
}
