//! Finite-difference harnesses for every hand-derived gradient in the crate:
//! the quaternion-map Jacobian, the recurrent cell, and the whole model end
//! to end. The CLI surfaces these as `gradcheck`; the test suite runs them
//! directly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    backward, forward, loss_value, LossKind, ModelConfig, Variant,
};
use crate::net::{cell_backward, cell_forward, init_params, ModelParams};
use crate::rotmath::{expmap_to_quat, expmap_to_quat_jacobian, Vec3};

/// Default pass bar for single-layer checks (Jacobian, cell).
pub const UNIT_TOLERANCE: f64 = 1e-6;
/// Default pass bar for the full-model check (longer chains, more rounding).
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

const FD_STEP: f64 = 1e-6;

/// Relative error with the denominator floored at 1 so that near-zero
/// entries are compared absolutely.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Outcome of one finite-difference suite.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < self.tolerance
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 0.1 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Compare the analytic quaternion-map Jacobian against central finite
/// differences at `samples` points. The sampled norms cycle through the
/// regimes that matter — deep inside the series branch, near the seam, at
/// moderate angles, and at the π boundary — plus random norms in between.
/// `corrupt` injects a deliberate fault into the comparison (not the
/// library) so the harness itself can be shown to catch errors.
pub fn check_qt_jacobian(seed: u64, samples: usize, corrupt: bool) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    for i in 0..samples {
        let norm = match i % 5 {
            0 => 1e-7,
            1 => 1e-3,
            2 => 1.0,
            3 => PI,
            _ => rng.gen_range(1e-3..PI),
        };
        let dir = random_direction(&mut rng);
        let e = [dir[0] * norm, dir[1] * norm, dir[2] * norm];

        let mut analytic = expmap_to_quat_jacobian(&e)?;
        if corrupt {
            analytic[0][0] += 1e-3;
        }
        for axis in 0..3 {
            let mut plus = e;
            plus[axis] += FD_STEP;
            let mut minus = e;
            minus[axis] -= FD_STEP;
            let qp = expmap_to_quat(&plus)?;
            let qm = expmap_to_quat(&minus)?;
            for row in 0..4 {
                let numeric = (qp[row] - qm[row]) / (2.0 * FD_STEP);
                max_rel = max_rel.max(rel_error(analytic[row][axis], numeric));
            }
        }
    }
    Ok(CheckReport {
        name: "qt_jacobian".into(),
        max_rel_error: max_rel,
        tolerance: UNIT_TOLERANCE,
    })
}

/// Compare the cell's hand-derived backward pass against finite differences
/// on several random configurations: every parameter entry and every input
/// entry, using a random upstream vector to scalarise the output.
pub fn check_cell(seed: u64, configurations: usize) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    for c in 0..configurations {
        let pose_dim = 2 + c % 3;
        let pos_dim = 2 + (c + 1) % 3;
        let hidden = 2 + c % 4;
        let params = init_params(pose_dim, pos_dim, hidden, seed.wrapping_add(c as u64));
        let pose: Vec<f64> = (0..pose_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let velocity: Vec<f64> = (0..pose_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let position: Vec<f64> = (0..pos_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h_prev: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let scalar = |p: &ModelParams, x: &[f64], v: &[f64], pos: &[f64], h: &[f64]| -> Result<f64> {
            let (out, _) = cell_forward(&p.cell, x, v, pos, h)?;
            Ok(out.iter().zip(&upstream).map(|(a, b)| a * b).sum())
        };

        let (_, cache) = cell_forward(&params.cell, &pose, &velocity, &position, &h_prev)?;
        let mut grad_holder = params.zeros_like();
        let (d_pose, d_vel, d_h) =
            cell_backward(&params.cell, &cache, &upstream, &mut grad_holder.cell)?;

        // Parameters. The head plays no role in a bare cell check, so only
        // the cell tensors (the first 15) are perturbed.
        let analytic_cell: Vec<f64> = grad_holder
            .tensors()
            .into_iter()
            .take(15)
            .flat_map(|s| s.to_vec())
            .collect();
        let mut offset = 0;
        let tensor_sizes: Vec<usize> =
            params.tensors().iter().take(15).map(|s| s.len()).collect();
        for (tensor_idx, size) in tensor_sizes.iter().enumerate() {
            for k in 0..*size {
                let mut perturbed = params.clone();
                perturbed.tensors_mut()[tensor_idx][k] += FD_STEP;
                let fp = scalar(&perturbed, &pose, &velocity, &position, &h_prev)?;
                let mut perturbed = params.clone();
                perturbed.tensors_mut()[tensor_idx][k] -= FD_STEP;
                let fm = scalar(&perturbed, &pose, &velocity, &position, &h_prev)?;
                let numeric = (fp - fm) / (2.0 * FD_STEP);
                max_rel = max_rel.max(rel_error(analytic_cell[offset + k], numeric));
            }
            offset += size;
        }

        // Inputs.
        let fd_input = |values: &[f64],
                        idx: usize,
                        apply: &dyn Fn(&[f64]) -> Result<f64>|
         -> Result<f64> {
            let mut plus = values.to_vec();
            plus[idx] += FD_STEP;
            let mut minus = values.to_vec();
            minus[idx] -= FD_STEP;
            Ok((apply(&plus)? - apply(&minus)?) / (2.0 * FD_STEP))
        };
        for i in 0..pose_dim {
            let n = fd_input(&pose, i, &|x| scalar(&params, x, &velocity, &position, &h_prev))?;
            max_rel = max_rel.max(rel_error(d_pose[i], n));
            let n = fd_input(&velocity, i, &|v| scalar(&params, &pose, v, &position, &h_prev))?;
            max_rel = max_rel.max(rel_error(d_vel[i], n));
        }
        for i in 0..hidden {
            let n = fd_input(&h_prev, i, &|h| scalar(&params, &pose, &velocity, &position, h))?;
            max_rel = max_rel.max(rel_error(d_h[i], n));
        }
    }
    Ok(CheckReport {
        name: "pvgru_cell".into(),
        max_rel_error: max_rel,
        tolerance: UNIT_TOLERANCE,
    })
}

fn tiny_config(variant: Variant, loss: LossKind) -> ModelConfig {
    ModelConfig {
        pose_dim: 3,
        pos_dim: 4,
        hidden: 4,
        obs_frames: 4,
        pred_frames: 2,
        variant,
        loss,
        use_velocity: true,
        use_position: true,
        use_qt: loss == LossKind::QuatL1,
        use_bias: true,
        dropout: 0.0,
        fps: 25.0,
    }
}

fn combo_name(variant: Variant, loss: LossKind) -> String {
    let v = match variant {
        Variant::Pvred => "pvred",
        Variant::Red => "red",
    };
    let l = match loss {
        LossKind::QuatL1 => "quat_l1",
        LossKind::EulerMse => "euler_mse",
    };
    format!("end_to_end_{v}_{l}")
}

/// Finite-difference the whole pipeline — encoder, decoder feedback,
/// residual chain, loss — against [`backward`] on a tiny model, for all four
/// variant/loss combinations. Every parameter entry is perturbed.
pub fn check_end_to_end(seed: u64) -> Result<Vec<CheckReport>> {
    let combos = [
        (Variant::Pvred, LossKind::QuatL1),
        (Variant::Pvred, LossKind::EulerMse),
        (Variant::Red, LossKind::QuatL1),
        (Variant::Red, LossKind::EulerMse),
    ];
    let mut reports = Vec::with_capacity(combos.len());
    for (variant, loss) in combos {
        let cfg = tiny_config(variant, loss);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(cfg.pose_dim, cfg.pos_dim, cfg.hidden, seed.wrapping_add(1));
        let observed = Mat::from_fn(cfg.obs_frames, cfg.pose_dim, |_, _| rng.gen_range(-0.9..0.9));
        let truth = Mat::from_fn(cfg.pred_frames, cfg.pose_dim, |_, _| rng.gen_range(-0.9..0.9));
        let kind = cfg.effective_loss();

        let objective = |p: &ModelParams| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(0); // dropout 0: never drawn
            let pass = forward(p, &observed, &cfg, &mut rng, false)?;
            loss_value(kind, &pass.prediction.poses, &truth)
        };

        let mut rng_fwd = ChaCha8Rng::seed_from_u64(0);
        let pass = forward(&params, &observed, &cfg, &mut rng_fwd, false)?;
        let grads = backward(&params, &pass, &truth, &cfg)?;
        let analytic: Vec<f64> = grads.tensors().into_iter().flat_map(|s| s.to_vec()).collect();

        let mut max_rel: f64 = 0.0;
        let mut offset = 0;
        let sizes: Vec<usize> = params.tensors().iter().map(|s| s.len()).collect();
        for (tensor_idx, size) in sizes.iter().enumerate() {
            for k in 0..*size {
                let mut perturbed = params.clone();
                perturbed.tensors_mut()[tensor_idx][k] += FD_STEP;
                let fp = objective(&perturbed)?;
                let mut perturbed = params.clone();
                perturbed.tensors_mut()[tensor_idx][k] -= FD_STEP;
                let fm = objective(&perturbed)?;
                let numeric = (fp - fm) / (2.0 * FD_STEP);
                max_rel = max_rel.max(rel_error(analytic[offset + k], numeric));
            }
            offset += size;
        }
        reports.push(CheckReport {
            name: combo_name(variant, loss),
            max_rel_error: max_rel,
            tolerance: END_TO_END_TOLERANCE,
        });
    }
    Ok(reports)
}

/// Run every suite. `unit_tol` / `e2e_tol` override the default pass bars;
/// `corrupt_jacobian` injects the deliberate comparison fault.
pub fn run_all(
    seed: u64,
    corrupt_jacobian: bool,
    unit_tol: f64,
    e2e_tol: f64,
) -> Result<Vec<CheckReport>> {
    if !(unit_tol.is_finite() && unit_tol > 0.0 && e2e_tol.is_finite() && e2e_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let mut reports = Vec::new();
    let mut jac = check_qt_jacobian(seed, 1000, corrupt_jacobian)?;
    jac.tolerance = unit_tol;
    reports.push(jac);
    let mut cell = check_cell(seed, 6)?;
    cell.tolerance = unit_tol;
    reports.push(cell);
    for mut report in check_end_to_end(seed)? {
        report.tolerance = e2e_tol;
        reports.push(report);
    }
    Ok(reports)
}
