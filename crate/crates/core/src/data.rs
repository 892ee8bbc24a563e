//! Motion sequences: synthetic generation, the on-disk text format, and
//! clip sampling for training.
//!
//! Synthetic channels are sums of sinusoids — `Σ_k a_k·sin(2π f_k t/fps + φ_k)`
//! plus Gaussian noise — with an optional linear drift that makes a sequence
//! aperiodic. Odd-indexed sequences drift, even-indexed ones are periodic, so
//! a generated set covers both regimes.
//!
//! File format (UTF-8 text):
//!
//! ```text
//! # fps=25 channels=12
//! # names=j0_x,j0_y,j0_z,...
//! 0.1,0.2,...            one frame per line, comma-separated
//! ```
//!
//! Any later line starting with `#` is a comment. Values are written with
//! enough digits to parse back bit-for-bit.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// A pose sequence: `frames` is T×D (row per frame), sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Mat,
    pub fps: f64,
    pub channel_names: Vec<String>,
}

impl MotionSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn num_channels(&self) -> usize {
        self.frames.cols()
    }
}

/// Parameters for synthetic data. Ranges are inclusive-exclusive draws per
/// channel and harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_sequences: usize,
    pub frames: usize,
    pub joints: usize,
    pub fps: f64,
    pub harmonics: usize,
    pub amp_range: (f64, f64),
    pub freq_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub noise_std: f64,
    /// Maximum |slope| (radians/second) of the linear drift applied to
    /// odd-indexed sequences. Zero keeps every sequence periodic.
    pub drift_max: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_sequences: 24,
            frames: 500,
            joints: 4,
            fps: 25.0,
            harmonics: 2,
            amp_range: (0.2, 0.8),
            freq_range: (0.15, 0.45),
            phase_range: (0.0, std::f64::consts::TAU),
            noise_std: 0.005,
            drift_max: 0.05,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_sequences == 0 || self.frames == 0 || self.joints == 0 {
            return Err(Error::InvalidSpec(
                "sequence count, frame count and joint count must be positive".into(),
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidSpec(format!("fps must be positive, got {}", self.fps)));
        }
        if self.harmonics == 0 {
            return Err(Error::InvalidSpec("need at least one harmonic".into()));
        }
        let ranges = [
            ("amplitude", self.amp_range),
            ("frequency", self.freq_range),
            ("phase", self.phase_range),
        ];
        for (what, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidSpec(format!("bad {what} range [{lo}, {hi}]")));
            }
        }
        if self.amp_range.0 < 0.0 || self.amp_range.1 > std::f64::consts::PI {
            return Err(Error::InvalidSpec(format!(
                "amplitudes must lie in [0, π], got [{}, {}]",
                self.amp_range.0, self.amp_range.1
            )));
        }
        if self.freq_range.0 < 0.0 {
            return Err(Error::InvalidSpec("frequencies must be non-negative".into()));
        }
        if self.freq_range.1 >= self.fps / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "max frequency {} violates the Nyquist limit {} for fps {}",
                self.freq_range.1,
                self.fps / 2.0,
                self.fps
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0)
            || !(self.drift_max.is_finite() && self.drift_max >= 0.0)
        {
            return Err(Error::InvalidSpec(
                "noise level and drift bound must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Generate `spec.num_sequences` sequences, deterministically in `spec.seed`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<MotionSequence>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let channels = 3 * spec.joints;
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;

    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    };

    // One harmonic bank for the whole dataset: channel c swings at the same
    // rates, strengths and base phases everywhere, the way a skeleton's
    // joints keep their characteristic tempos and ranges of motion across
    // recordings of one activity. The sequences are consecutive windows of
    // that one long virtual recording — sequence s covers master frames
    // [s·T, (s+1)·T) — so a train/test split over sequences is a split of
    // the recording in time. Per-sequence drift slopes and fresh per-frame
    // noise carry the rest of the clip-to-clip variation.
    let bank: Vec<Vec<(f64, f64, f64)>> = (0..channels)
        .map(|_| {
            (0..spec.harmonics)
                .map(|_| {
                    (
                        draw(&mut rng, spec.amp_range),
                        draw(&mut rng, spec.freq_range),
                        draw(&mut rng, spec.phase_range),
                    )
                })
                .collect()
        })
        .collect();

    let mut sequences = Vec::with_capacity(spec.num_sequences);
    for seq_idx in 0..spec.num_sequences {
        let drifting = seq_idx % 2 == 1 && spec.drift_max > 0.0;
        let slopes: Vec<f64> = (0..channels)
            .map(|_| if drifting { rng.gen_range(-spec.drift_max..spec.drift_max) } else { 0.0 })
            .collect();

        let mut frames = Mat::zeros(spec.frames, channels);
        for t in 0..spec.frames {
            let local_seconds = t as f64 / spec.fps;
            let master_seconds = (seq_idx * spec.frames + t) as f64 / spec.fps;
            let row = frames.row_mut(t);
            for c in 0..channels {
                let mut v = slopes[c] * local_seconds;
                for &(a, f, phi) in &bank[c] {
                    v += a * (std::f64::consts::TAU * f * master_seconds + phi).sin();
                }
                if spec.noise_std > 0.0 {
                    v += noise.sample(&mut rng);
                }
                row[c] = v;
            }
        }
        sequences.push(MotionSequence {
            frames,
            fps: spec.fps,
            channel_names: default_channel_names(spec.joints),
        });
    }
    Ok(sequences)
}

/// `j0_x, j0_y, j0_z, j1_x, ...`
pub fn default_channel_names(joints: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * joints);
    for j in 0..joints {
        for axis in ["x", "y", "z"] {
            names.push(format!("j{j}_{axis}"));
        }
    }
    names
}

/// Render a sequence in the on-disk text format.
pub fn encode_sequence(seq: &MotionSequence) -> Result<String> {
    if seq.channel_names.len() != seq.num_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} channel names for {} channels",
            seq.channel_names.len(),
            seq.num_channels()
        )));
    }
    for name in &seq.channel_names {
        if name.contains(',') || name.contains('\n') || name.is_empty() {
            return Err(Error::InvalidInput(format!("invalid channel name {name:?}")));
        }
    }
    if !seq.frames.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("sequence contains non-finite values".into()));
    }
    if !(seq.fps.is_finite() && seq.fps > 0.0) {
        return Err(Error::InvalidInput(format!("fps must be positive, got {}", seq.fps)));
    }

    let mut out = String::new();
    out.push_str(&format!("# fps={} channels={}\n", seq.fps, seq.num_channels()));
    out.push_str(&format!("# names={}\n", seq.channel_names.join(",")));
    for row in seq.frames.iter_rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&v.to_string());
            first = false;
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parse the on-disk text format. Line numbers in errors are 1-based.
pub fn parse_sequence(text: &str) -> Result<MotionSequence> {
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let rest = header
        .strip_prefix("# fps=")
        .ok_or_else(|| parse_err(1, "expected '# fps=<fps> channels=<count>'".into()))?;
    let (fps_text, channels_text) = rest
        .split_once(" channels=")
        .ok_or_else(|| parse_err(1, "expected '# fps=<fps> channels=<count>'".into()))?;
    let fps: f64 = fps_text
        .parse()
        .map_err(|_| parse_err(1, format!("bad fps value {fps_text:?}")))?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(parse_err(1, format!("fps must be positive, got {fps}")));
    }
    let channels: usize = channels_text
        .parse()
        .map_err(|_| parse_err(1, format!("bad channel count {channels_text:?}")))?;
    if channels == 0 {
        return Err(parse_err(1, "channel count must be positive".into()));
    }

    let (_, names_line) = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing '# names=' line".into()))?;
    let names_text = names_line
        .strip_prefix("# names=")
        .ok_or_else(|| parse_err(2, "expected '# names=<labels>'".into()))?;
    let channel_names: Vec<String> = names_text.split(',').map(str::to_owned).collect();
    if channel_names.len() != channels {
        return Err(parse_err(
            2,
            format!("{} names for {} channels", channel_names.len(), channels),
        ));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(channels);
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad value {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {field:?}")));
            }
            row.push(v);
        }
        if row.len() != channels {
            return Err(parse_err(
                line_no,
                format!("{} values in a {}-channel file", row.len(), channels),
            ));
        }
        rows.push(row);
    }

    Ok(MotionSequence {
        frames: Mat::from_rows(&rows)?,
        fps,
        channel_names,
    })
}

/// Write a sequence file. The write is atomic: the content lands in a
/// temporary sibling first and is renamed into place.
pub fn save_sequence(path: &Path, seq: &MotionSequence) -> Result<()> {
    let text = encode_sequence(seq)?;
    crate::write_atomic(path, text.as_bytes())
}

pub fn load_sequence(path: &Path) -> Result<MotionSequence> {
    let text = fs::read_to_string(path)?;
    parse_sequence(&text)
}

/// Draw one (observed, future) clip pair: `obs` frames followed by `pred`
/// frames, starting uniformly at random anywhere the pair fits.
pub fn sample_clip(
    seq: &MotionSequence,
    obs: usize,
    pred: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Mat, Mat)> {
    let needed = obs + pred;
    if obs == 0 || pred == 0 {
        return Err(Error::InvalidInput("clip lengths must be positive".into()));
    }
    if seq.num_frames() < needed {
        return Err(Error::InsufficientLength {
            needed,
            have: seq.num_frames(),
        });
    }
    let start = rng.gen_range(0..=seq.num_frames() - needed);
    Ok((
        seq.frames.slice_rows(start, start + obs),
        seq.frames.slice_rows(start + obs, start + needed),
    ))
}
