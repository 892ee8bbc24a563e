//! Evaluation protocol: mean Euler-angle error at fixed millisecond
//! horizons, averaged over seeded clips, plus the two reference predictors
//! (zero-velocity and moving-average) that every model result is judged
//! against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{sample_clip, MotionSequence};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rotmath::{expmap_to_euler, wrap_angle};

/// One scored horizon: the offset in milliseconds, the mean error in
/// radians, and how many clips the mean is over.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRow {
    pub horizon_ms: u64,
    pub mean_error: f64,
    pub clips: usize,
}

/// Per-horizon errors, kept in the order the horizons were requested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HorizonTable {
    pub rows: Vec<HorizonRow>,
}

impl HorizonTable {
    pub fn error_at(&self, horizon_ms: u64) -> Option<f64> {
        self.rows.iter().find(|r| r.horizon_ms == horizon_ms).map(|r| r.mean_error)
    }

    /// Sum of the mean errors across horizons (the ablation-ranking scalar).
    pub fn total_error(&self) -> f64 {
        self.rows.iter().map(|r| r.mean_error).sum()
    }

    /// Pool tables over clips: errors are averaged weighted by each table's
    /// clip count (plain arithmetic mean when every input covers one clip),
    /// clip counts add. All tables must list the same horizons in the same
    /// order.
    pub fn mean_of(tables: &[HorizonTable]) -> Result<HorizonTable> {
        let first = tables
            .first()
            .ok_or_else(|| Error::InvalidInput("no tables to average".into()))?;
        let mut rows: Vec<HorizonRow> = first
            .rows
            .iter()
            .map(|r| HorizonRow { horizon_ms: r.horizon_ms, mean_error: 0.0, clips: 0 })
            .collect();
        for table in tables {
            if table.rows.len() != rows.len()
                || table
                    .rows
                    .iter()
                    .zip(&rows)
                    .any(|(a, b)| a.horizon_ms != b.horizon_ms)
            {
                return Err(Error::InvalidInput(
                    "cannot average tables over different horizons".into(),
                ));
            }
            for (acc, row) in rows.iter_mut().zip(&table.rows) {
                acc.mean_error += row.mean_error * row.clips as f64;
                acc.clips += row.clips;
            }
        }
        for row in &mut rows {
            if row.clips == 0 {
                return Err(Error::InvalidInput("tables cover zero clips".into()));
            }
            row.mean_error /= row.clips as f64;
        }
        Ok(HorizonTable { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon_ms,mean_error,clips\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.horizon_ms, row.mean_error, row.clips));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<HorizonTable> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == "horizon_ms,mean_error,clips" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header `horizon_ms,mean_error,clips`".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let horizon_ms = fields[0].trim().parse::<u64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad horizon `{}`: {e}", fields[0]),
            })?;
            let mean_error = fields[1].trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad error `{}`: {e}", fields[1]),
            })?;
            if !mean_error.is_finite() || mean_error < 0.0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("error must be finite and non-negative, got {mean_error}"),
                });
            }
            let clips = fields[2].trim().parse::<usize>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad clip count `{}`: {e}", fields[2]),
            })?;
            rows.push(HorizonRow { horizon_ms, mean_error, clips });
        }
        Ok(HorizonTable { rows })
    }
}

/// Anything that can roll a pose sequence forward.
pub trait Predictor {
    /// Predict `steps` future frames from the observed `rows × channels`
    /// window.
    fn predict(&self, observed: &Mat, steps: usize) -> Result<Mat>;
}

/// Repeat the last observed frame forever.
pub fn zero_velocity_predict(observed: &Mat, steps: usize) -> Result<Mat> {
    if observed.rows() == 0 {
        return Err(Error::InvalidInput("cannot predict from an empty observation".into()));
    }
    let last = observed.row(observed.rows() - 1);
    Ok(Mat::from_fn(steps, observed.cols(), |_, c| last[c]))
}

/// Each next frame is the mean of the previous `window` frames, observed or
/// already predicted, rolled forward autoregressively.
pub fn moving_average_predict(observed: &Mat, steps: usize, window: usize) -> Result<Mat> {
    if window == 0 {
        return Err(Error::InvalidInput("moving-average window must be at least 1".into()));
    }
    if observed.rows() < window {
        return Err(Error::InsufficientLength { needed: window, have: observed.rows() });
    }
    let cols = observed.cols();
    // Ring of the last `window` frames, oldest first.
    let mut recent: Vec<Vec<f64>> = (observed.rows() - window..observed.rows())
        .map(|r| observed.row(r).to_vec())
        .collect();
    let mut out = Mat::zeros(steps, cols);
    for s in 0..steps {
        let mut next = vec![0.0; cols];
        for frame in &recent {
            for (n, v) in next.iter_mut().zip(frame) {
                *n += v;
            }
        }
        for n in &mut next {
            *n /= window as f64;
        }
        out.row_mut(s).copy_from_slice(&next);
        recent.remove(0);
        recent.push(next);
    }
    Ok(out)
}

pub struct ZeroVelocity;

impl Predictor for ZeroVelocity {
    fn predict(&self, observed: &Mat, steps: usize) -> Result<Mat> {
        zero_velocity_predict(observed, steps)
    }
}

pub struct MovingAverage {
    pub window: usize,
}

impl Predictor for MovingAverage {
    fn predict(&self, observed: &Mat, steps: usize) -> Result<Mat> {
        moving_average_predict(observed, steps, self.window)
    }
}

/// 1-based future-frame index a horizon lands on: ⌈ms·fps/1000⌉, with exact
/// integer products snapped before the ceiling so float noise cannot push a
/// horizon into the next frame.
pub fn horizon_frame(horizon_ms: u64, fps: f64) -> Result<usize> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
    }
    let raw = horizon_ms as f64 * fps / 1000.0;
    let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    let frame = snapped as usize;
    if frame == 0 {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon_ms} ms maps to frame 0 at {fps} fps"
        )));
    }
    Ok(frame)
}

fn pose_to_eulers(pose: &[f64]) -> Result<Vec<f64>> {
    if pose.len() % 3 != 0 || pose.is_empty() {
        return Err(Error::InvalidInput(format!(
            "Euler scoring needs 3 channels per joint, got {}",
            pose.len()
        )));
    }
    let mut out = Vec::with_capacity(pose.len());
    for joint in pose.chunks_exact(3) {
        out.extend(expmap_to_euler(&[joint[0], joint[1], joint[2]])?);
    }
    Ok(out)
}

/// Euclidean distance between two poses in Euler-angle space, every angle
/// difference wrapped to (−π, π] before squaring. `mask`, when present,
/// selects which channels count.
fn euler_distance(prediction: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    let ep = pose_to_eulers(prediction)?;
    let et = pose_to_eulers(truth)?;
    let mut sum = 0.0;
    for (c, (a, b)) in ep.iter().zip(&et).enumerate() {
        if mask.map_or(true, |m| m[c]) {
            let d = wrap_angle(a - b);
            sum += d * d;
        }
    }
    Ok(sum.sqrt())
}

/// Score a prediction against the ground truth at each horizon. Column
/// counts must match and be a joint multiple; every horizon must land within
/// the predicted frames.
pub fn euler_error(
    prediction: &Mat,
    truth: &Mat,
    horizons_ms: &[u64],
    fps: f64,
) -> Result<HorizonTable> {
    euler_error_masked(prediction, truth, horizons_ms, fps, None)
}

/// As [`euler_error`], optionally restricted to the channels marked `true`
/// (mocap protocols conventionally exclude root/global channels this way).
/// The mask indexes the converted Euler channels: entries `3k..3k+3` are
/// joint `k`'s `(z, y, x)` angles.
pub fn euler_error_masked(
    prediction: &Mat,
    truth: &Mat,
    horizons_ms: &[u64],
    fps: f64,
    mask: Option<&[bool]>,
) -> Result<HorizonTable> {
    if prediction.rows() != truth.rows() || prediction.cols() != truth.cols() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}×{}, truth is {}×{}",
            prediction.rows(),
            prediction.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    if let Some(m) = mask {
        if m.len() != prediction.cols() {
            return Err(Error::ShapeMismatch(format!(
                "mask covers {} channels, poses have {}",
                m.len(),
                prediction.cols()
            )));
        }
    }
    let mut rows = Vec::with_capacity(horizons_ms.len());
    for &ms in horizons_ms {
        let frame = horizon_frame(ms, fps)?;
        if frame > prediction.rows() {
            return Err(Error::InvalidInput(format!(
                "horizon {ms} ms needs frame {frame} but only {} were predicted",
                prediction.rows()
            )));
        }
        let err = euler_distance(prediction.row(frame - 1), truth.row(frame - 1), mask)?;
        rows.push(HorizonRow { horizon_ms: ms, mean_error: err, clips: 1 });
    }
    Ok(HorizonTable { rows })
}

/// How a model (or baseline) gets scored: clip geometry, horizons, clip
/// count, sampling seed, and an optional channel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub obs_frames: usize,
    pub pred_frames: usize,
    pub horizons_ms: Vec<u64>,
    pub num_clips: usize,
    pub seed: u64,
    pub channel_mask: Option<Vec<bool>>,
}

impl EvalProtocol {
    /// The desk-scale protocol: 50 observed frames, 25 predicted, the six
    /// standard horizons, 8 seed clips.
    pub fn desk_default() -> Self {
        EvalProtocol {
            obs_frames: 50,
            pred_frames: 25,
            horizons_ms: vec![80, 160, 320, 400, 560, 1000],
            num_clips: 8,
            seed: 7,
            channel_mask: None,
        }
    }

    /// Deterministically sample clips (clip `i` draws from sequence
    /// `i mod len`), run the predictor on each observation, and average the
    /// per-clip horizon tables arithmetically.
    pub fn evaluate(
        &self,
        predictor: &dyn Predictor,
        sequences: &[MotionSequence],
    ) -> Result<HorizonTable> {
        if sequences.is_empty() {
            return Err(Error::InvalidInput("no sequences to evaluate on".into()));
        }
        if self.num_clips == 0 {
            return Err(Error::InvalidInput("need at least one evaluation clip".into()));
        }
        if self.horizons_ms.is_empty() {
            return Err(Error::InvalidInput("need at least one horizon".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut tables = Vec::with_capacity(self.num_clips);
        for i in 0..self.num_clips {
            let seq = &sequences[i % sequences.len()];
            let (observed, future) =
                sample_clip(seq, self.obs_frames, self.pred_frames, &mut rng)?;
            let prediction = predictor.predict(&observed, self.pred_frames)?;
            if prediction.rows() != self.pred_frames || prediction.cols() != future.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "predictor returned {}×{}, expected {}×{}",
                    prediction.rows(),
                    prediction.cols(),
                    self.pred_frames,
                    future.cols()
                )));
            }
            tables.push(euler_error_masked(
                &prediction,
                &future,
                &self.horizons_ms,
                seq.fps,
                self.channel_mask.as_deref(),
            )?);
        }
        HorizonTable::mean_of(&tables)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn constant_mat(rows: usize, cols: usize, value: f64) -> Mat {
        Mat::from_fn(rows, cols, |_, _| value)
    }

    #[test]
    fn zero_velocity_repeats_the_last_frame() {
        let observed = Mat::from_fn(4, 3, |r, c| r as f64 + 0.1 * c as f64);
        let pred = zero_velocity_predict(&observed, 5).unwrap();
        for s in 0..5 {
            assert_eq!(pred.row(s), observed.row(3));
        }
        assert!(zero_velocity_predict(&Mat::zeros(0, 3), 2).is_err());
    }

    #[test]
    fn zero_velocity_is_exact_on_constant_continuations() {
        let observed = constant_mat(6, 3, 0.4);
        let truth = constant_mat(4, 3, 0.4);
        let pred = zero_velocity_predict(&observed, 4).unwrap();
        let table = euler_error(&pred, &truth, &[80, 160], 25.0).unwrap();
        assert!(table.rows.iter().all(|r| r.mean_error == 0.0));
    }

    #[test]
    fn zero_velocity_error_grows_with_horizon_on_linear_motion() {
        // Channel 0 ramps steadily; the later the horizon, the further the
        // held frame falls behind.
        let observed = Mat::from_fn(10, 3, |r, c| if c == 0 { 0.02 * r as f64 } else { 0.0 });
        let truth = Mat::from_fn(10, 3, |r, c| if c == 0 { 0.02 * (10 + r) as f64 } else { 0.0 });
        let pred = zero_velocity_predict(&observed, 10).unwrap();
        let table = euler_error(&pred, &truth, &[80, 160, 320, 400], 25.0).unwrap();
        for pair in table.rows.windows(2) {
            assert!(pair[1].mean_error > pair[0].mean_error);
        }
    }

    #[test]
    fn moving_average_follows_the_hand_rolled_recurrence() {
        let observed = Mat::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let pred = moving_average_predict(&observed, 3, 2).unwrap();
        assert_eq!(pred.row(0), &[1.0]);
        assert_eq!(pred.row(1), &[1.5]);
        assert_eq!(pred.row(2), &[1.25]);
    }

    #[test]
    fn moving_average_of_constant_input_stays_constant() {
        let observed = constant_mat(5, 2, -0.7);
        let pred = moving_average_predict(&observed, 6, 2).unwrap();
        assert!(pred.as_slice().iter().all(|&v| v == -0.7));
    }

    #[test]
    fn window_one_moving_average_is_the_zero_velocity_baseline() {
        let observed = Mat::from_fn(7, 4, |r, c| (r as f64 * 1.3 + c as f64).sin());
        let ma = moving_average_predict(&observed, 5, 1).unwrap();
        let zv = zero_velocity_predict(&observed, 5).unwrap();
        assert_eq!(ma.as_slice(), zv.as_slice());
    }

    #[test]
    fn moving_average_rejects_bad_windows() {
        let observed = constant_mat(3, 2, 0.0);
        assert!(matches!(
            moving_average_predict(&observed, 2, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            moving_average_predict(&observed, 2, 4),
            Err(Error::InsufficientLength { needed: 4, have: 3 })
        ));
    }

    #[test]
    fn horizons_map_to_the_standard_frames_at_25_fps() {
        let expected = [(80, 2), (160, 4), (320, 8), (400, 10), (560, 14), (1000, 25)];
        for (ms, frame) in expected {
            assert_eq!(horizon_frame(ms, 25.0).unwrap(), frame, "{ms} ms");
        }
        assert_eq!(horizon_frame(40, 25.0).unwrap(), 1);
        assert_eq!(horizon_frame(41, 25.0).unwrap(), 2);
        assert!(horizon_frame(0, 25.0).is_err());
        assert!(horizon_frame(80, 0.0).is_err());
    }

    #[test]
    fn perfect_predictions_score_zero_at_every_horizon() {
        let truth = Mat::from_fn(8, 6, |r, c| 0.1 * r as f64 - 0.05 * c as f64);
        let table = euler_error(&truth, &truth, &[80, 160, 320], 25.0).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(table.rows.iter().all(|r| r.mean_error == 0.0 && r.clips == 1));
    }

    #[test]
    fn half_turn_error_matches_a_direct_euler_computation() {
        let pred = Mat::from_rows(&[vec![PI, 0.0, 0.0]]).unwrap();
        let truth = Mat::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let table = euler_error(&pred, &truth, &[40], 25.0).unwrap();
        // Independent route: convert both poses and take the wrapped L2 gap.
        let ep = expmap_to_euler(&[PI, 0.0, 0.0]).unwrap();
        let et = expmap_to_euler(&[0.0, 0.0, 0.0]).unwrap();
        let expected = ep
            .iter()
            .zip(&et)
            .map(|(a, b)| wrap_angle(a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((table.rows[0].mean_error - expected).abs() < 1e-12);
        assert!((expected - PI).abs() < 1e-12);
    }

    #[test]
    fn angle_differences_wrap_before_squaring() {
        // Euler x-angles just inside ±π: the raw gap is nearly 2π but the
        // rotations are 0.02 rad apart.
        let pred = Mat::from_rows(&[vec![PI - 0.01, 0.0, 0.0]]).unwrap();
        let truth = Mat::from_rows(&[vec![-(PI - 0.01), 0.0, 0.0]]).unwrap();
        let table = euler_error(&pred, &truth, &[40], 25.0).unwrap();
        assert!((table.rows[0].mean_error - 0.02).abs() < 1e-9);
    }

    #[test]
    fn horizons_beyond_the_prediction_are_rejected() {
        let frames = constant_mat(5, 3, 0.1);
        // 320 ms at 25 fps needs frame 8; only 5 exist.
        assert!(matches!(
            euler_error(&frames, &frames, &[320], 25.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn the_channel_mask_excludes_channels_from_the_error() {
        // A pure x rotation converts to Euler (z, y, x) = (0, 0, 0.5), so
        // the disagreement sits in the joint's THIRD Euler channel.
        let pred = Mat::from_rows(&[vec![0.5, 0.0, 0.0]]).unwrap();
        let truth = Mat::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let all = euler_error_masked(&pred, &truth, &[40], 25.0, None).unwrap();
        assert!(all.rows[0].mean_error > 0.0);
        let masked =
            euler_error_masked(&pred, &truth, &[40], 25.0, Some(&[true, true, false])).unwrap();
        assert_eq!(masked.rows[0].mean_error, 0.0);
        assert!(matches!(
            euler_error_masked(&pred, &truth, &[40], 25.0, Some(&[true, false])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    fn wavy_sequence(frames: usize, joints: usize) -> MotionSequence {
        let channels = 3 * joints;
        MotionSequence {
            frames: Mat::from_fn(frames, channels, |r, c| {
                0.4 * ((0.31 * r as f64) + 0.7 * c as f64).sin()
            }),
            fps: 25.0,
            channel_names: crate::data::default_channel_names(joints),
        }
    }

    /// A predictor that already knows the future (only usable when the clip
    /// start is forced, i.e. the sequence is exactly n+m frames long).
    struct Oracle {
        future: Mat,
    }

    impl Predictor for Oracle {
        fn predict(&self, _observed: &Mat, _steps: usize) -> Result<Mat> {
            Ok(self.future.clone())
        }
    }

    #[test]
    fn a_ground_truth_oracle_scores_zero() {
        let protocol = EvalProtocol {
            obs_frames: 6,
            pred_frames: 4,
            horizons_ms: vec![40, 80, 160],
            num_clips: 5,
            seed: 9,
            channel_mask: None,
        };
        let seq = wavy_sequence(10, 2); // exactly n+m: the only clip start is 0
        let oracle = Oracle { future: seq.frames.slice_rows(6, 10) };
        let table = protocol.evaluate(&oracle, &[seq]).unwrap();
        assert!(table.rows.iter().all(|r| r.mean_error == 0.0 && r.clips == 5));
    }

    #[test]
    fn zero_velocity_scores_zero_on_constant_sequences() {
        let protocol = EvalProtocol {
            obs_frames: 5,
            pred_frames: 5,
            horizons_ms: vec![80, 160],
            num_clips: 4,
            seed: 1,
            channel_mask: None,
        };
        let seq = MotionSequence {
            frames: constant_mat(30, 3, 0.25),
            fps: 25.0,
            channel_names: crate::data::default_channel_names(1),
        };
        let table = protocol.evaluate(&ZeroVelocity, &[seq]).unwrap();
        assert!(table.rows.iter().all(|r| r.mean_error == 0.0));
    }

    #[test]
    fn evaluation_is_the_arithmetic_mean_of_per_clip_tables() {
        let protocol = EvalProtocol {
            obs_frames: 6,
            pred_frames: 6,
            horizons_ms: vec![80, 160, 240],
            num_clips: 3,
            seed: 21,
            channel_mask: None,
        };
        let sequences = vec![wavy_sequence(30, 1), wavy_sequence(24, 1)];
        let combined = protocol.evaluate(&ZeroVelocity, &sequences).unwrap();

        // Re-derive the same clips with the same stream and score them one
        // at a time.
        let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
        let mut tables = Vec::new();
        for i in 0..protocol.num_clips {
            let seq = &sequences[i % sequences.len()];
            let (observed, future) = sample_clip(seq, 6, 6, &mut rng).unwrap();
            let pred = zero_velocity_predict(&observed, 6).unwrap();
            tables.push(euler_error(&pred, &future, &protocol.horizons_ms, seq.fps).unwrap());
        }
        let manual = HorizonTable::mean_of(&tables).unwrap();
        assert_eq!(combined, manual);
    }

    #[test]
    fn tables_round_trip_through_csv() {
        let table = HorizonTable {
            rows: vec![
                HorizonRow { horizon_ms: 80, mean_error: 0.12345678901234567, clips: 8 },
                HorizonRow { horizon_ms: 1000, mean_error: 1.5, clips: 8 },
            ],
        };
        let csv = table.to_csv();
        assert!(csv.starts_with("horizon_ms,mean_error,clips\n"));
        assert_eq!(HorizonTable::from_csv(&csv).unwrap(), table);
    }

    #[test]
    fn csv_errors_name_the_offending_line() {
        match HorizonTable::from_csv("wrong,header\n80,0.1,1\n") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected a header error, got {other:?}"),
        }
        match HorizonTable::from_csv("horizon_ms,mean_error,clips\n80,0.1,1\noops\n") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("expected a line-3 error, got {other:?}"),
        }
        match HorizonTable::from_csv("horizon_ms,mean_error,clips\n80,-0.5,1\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("expected a negative-error rejection, got {other:?}"),
        }
    }

    #[test]
    fn table_lookup_and_totals_work() {
        let table = HorizonTable {
            rows: vec![
                HorizonRow { horizon_ms: 80, mean_error: 0.25, clips: 2 },
                HorizonRow { horizon_ms: 160, mean_error: 0.5, clips: 2 },
            ],
        };
        assert_eq!(table.error_at(80), Some(0.25));
        assert_eq!(table.error_at(320), None);
        assert!((table.total_error() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mean_of_rejects_mismatched_horizons() {
        let a = HorizonTable {
            rows: vec![HorizonRow { horizon_ms: 80, mean_error: 0.1, clips: 1 }],
        };
        let b = HorizonTable {
            rows: vec![HorizonRow { horizon_ms: 160, mean_error: 0.1, clips: 1 }],
        };
        assert!(HorizonTable::mean_of(&[a.clone(), b]).is_err());
        assert!(HorizonTable::mean_of(&[]).is_err());
        // Weighted pooling: 2 clips at 0.1 with 1 clip at 0.4 pools to 0.2.
        let c = HorizonTable {
            rows: vec![HorizonRow { horizon_ms: 80, mean_error: 0.1, clips: 2 }],
        };
        let d = HorizonTable {
            rows: vec![HorizonRow { horizon_ms: 80, mean_error: 0.4, clips: 1 }],
        };
        let pooled = HorizonTable::mean_of(&[c, d]).unwrap();
        assert!((pooled.rows[0].mean_error - 0.2).abs() < 1e-15);
        assert_eq!(pooled.rows[0].clips, 3);
    }
}
