//! `pvred` — command-line driver for the pose-prediction library.
//!
//! Six subcommands cover the full loop: `gen-data` writes a synthetic
//! dataset, `train` fits a model, `evaluate` scores it against baselines,
//! `predict` rolls a trained model forward, `gradcheck` audits the analytic
//! gradients against finite differences, and `emit-plot` flattens result
//! CSVs into one tidy file for plotting elsewhere.
//!
//! Conventions shared by every command:
//! * options resolve as command-line flag > `--config` file > default;
//! * with a fixed `--seed`, every file an invocation writes is bitwise
//!   reproducible;
//! * file writes are atomic (temp file + rename);
//! * exit code 0 means success, 1 a runtime or check failure, 2 a usage
//!   error.

mod config;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pvred_core::data::{self, MotionSequence};
use pvred_core::eval::{self, EvalProtocol, HorizonTable, Predictor};
use pvred_core::gradcheck;
use pvred_core::model::{
    self, LossKind, ModelConfig, ModelFile, ModelPredictor, TrainConfig, Variant,
    MODEL_FORMAT_VERSION,
};
use pvred_core::net::init_params;
use pvred_core::{write_atomic, SynthSpec};

use config::{parse_horizons, parse_mask, FileConfig};

/// What went wrong, split by exit code: usage errors exit 2, everything that
/// fails after the arguments were sound exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<pvred_core::Error> for CliError {
    fn from(e: pvred_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "pvred", version, about = "Pose-sequence prediction: data, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic motion dataset (train/test split + manifest)
    GenData(GenDataArgs),
    /// Train a model and write model.json, loss.csv and report.txt
    Train(TrainArgs),
    /// Score a predictor on test data at fixed millisecond horizons
    Evaluate(EvaluateArgs),
    /// Roll a trained model forward from a seed sequence
    Predict(PredictArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Merge result CSVs into one long-format table for plotting
    EmitPlot(EmitPlotArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: data]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generation seed [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sequences [default: 24]
    #[arg(long)]
    sequences: Option<usize>,
    /// Frames per sequence [default: 500]
    #[arg(long)]
    frames: Option<usize>,
    /// Joints per skeleton, three channels each [default: 4]
    #[arg(long)]
    joints: Option<usize>,
    /// Sampling rate in frames per second [default: 25]
    #[arg(long)]
    fps: Option<f64>,
    /// Sinusoids per channel [default: 2]
    #[arg(long)]
    harmonics: Option<usize>,
    /// Minimum harmonic amplitude, radians [default: 0.2]
    #[arg(long)]
    amp_min: Option<f64>,
    /// Maximum harmonic amplitude, radians [default: 0.8]
    #[arg(long)]
    amp_max: Option<f64>,
    /// Minimum harmonic frequency, Hz [default: 0.15]
    #[arg(long)]
    freq_min: Option<f64>,
    /// Maximum harmonic frequency, Hz [default: 0.45]
    #[arg(long)]
    freq_max: Option<f64>,
    /// Additive Gaussian noise level [default: 0.005]
    #[arg(long)]
    noise_std: Option<f64>,
    /// Max |slope| of linear drift on odd sequences, rad/s [default: 0.05]
    #[arg(long)]
    drift_max: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset directory [default: data/train]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for model.json, loss.csv, report.txt [default: run]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training seed: initialisation, clip sampling, dropout [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Training iterations; 0 writes the freshly initialised model [default: 2000]
    #[arg(long)]
    iters: Option<usize>,
    /// Clips per iteration [default: 16]
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate, constant throughout [default: 0.0001]
    #[arg(long)]
    lr: Option<f64>,
    /// Global gradient-norm ceiling [default: 5]
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Recurrent state width [default: 64]
    #[arg(long)]
    hidden: Option<usize>,
    /// Position-embedding width [default: the pose dimension]
    #[arg(long)]
    pos_dim: Option<usize>,
    /// Observed frames per clip (encoder length) [default: 50]
    #[arg(long)]
    obs: Option<usize>,
    /// Predicted frames per clip (decoder length) [default: 25]
    #[arg(long)]
    pred: Option<usize>,
    /// Dropout rate on the decoder hidden state [default: 0.2]
    #[arg(long)]
    dropout: Option<f64>,
    /// Architecture: pvred or red [default: pvred]
    #[arg(long)]
    variant: Option<String>,
    /// Training loss: quat_l1 or euler_mse [default: quat_l1]
    #[arg(long)]
    loss: Option<String>,
    /// Drop velocity channels from the cell input
    #[arg(long = "no-vel")]
    no_vel: bool,
    /// Drop position embeddings from the cell input
    #[arg(long = "no-pos")]
    no_pos: bool,
    /// Skip the quaternion transformation before the loss
    #[arg(long = "no-qt")]
    no_qt: bool,
    /// Drop the learned bias vectors
    #[arg(long = "no-bias")]
    no_bias: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PredictorKind {
    Model,
    ZeroVelocity,
    MovingAverage,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model file [default: run/model.json]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test dataset directory [default: data/test]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for the horizon-table CSVs [default: run]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clip-sampling seed [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated horizons in ms [default: 80,160,320,400,560,1000]
    #[arg(long)]
    horizons: Option<String>,
    /// Evaluation clips sampled across the test set [default: 8]
    #[arg(long)]
    clips: Option<usize>,
    /// What to score
    #[arg(long, value_enum, default_value_t = PredictorKind::Model)]
    predictor: PredictorKind,
    /// Moving-average baseline window, frames [default: 4]
    #[arg(long)]
    window: Option<usize>,
    /// Comma-separated 0/1 per channel; masked-out channels are not scored
    #[arg(long)]
    mask: Option<String>,
    /// Also score the zero-velocity and moving-average baselines
    #[arg(long)]
    baselines: bool,
    /// Observed frames per clip when no model is loaded [default: 50]
    #[arg(long)]
    obs: Option<usize>,
    /// Predicted frames per clip when no model is loaded [default: 25]
    #[arg(long)]
    pred: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model file [default: run/model.json]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seed sequence; the last n observed frames prime the decoder
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output sequence file [default: run/prediction.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Frames to generate; may exceed the trained decoder length
    /// [default: the model's decoder length]
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the sampled check points [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Relative-error tolerance for the end-to-end checks
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Relative-error tolerance for the unit-level checks
    #[arg(long, default_value_t = 1e-6)]
    unit_tol: f64,
    /// Deliberately corrupt the QT Jacobian to prove the harness catches it
    #[arg(long = "corrupt-jacobian")]
    corrupt_jacobian: bool,
}

#[derive(Args, Debug)]
struct EmitPlotArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Horizon-table or loss-history CSVs to merge
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output CSV [default: plot.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::EmitPlot(a) => cmd_emit_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

// ─── shared plumbing ───

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    ensure_parent(path)?;
    write_atomic(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Load every `*.csv` in `dir`, sorted by file name.
fn load_dataset(dir: &Path) -> Result<Vec<MotionSequence>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Runtime(format!("cannot read dataset {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Runtime(format!(
            "no .csv sequences in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            data::load_sequence(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn parse_variant(text: &str) -> Result<Variant, CliError> {
    match text {
        "pvred" => Ok(Variant::Pvred),
        "red" => Ok(Variant::Red),
        other => Err(usage(format!("variant must be pvred or red, got `{other}`"))),
    }
}

fn parse_loss(text: &str) -> Result<LossKind, CliError> {
    match text {
        "quat_l1" => Ok(LossKind::QuatL1),
        "euler_mse" => Ok(LossKind::EulerMse),
        other => Err(usage(format!("loss must be quat_l1 or euler_mse, got `{other}`"))),
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Pvred => "pvred",
        Variant::Red => "red",
    }
}

fn loss_name(l: LossKind) -> &'static str {
    match l {
        LossKind::QuatL1 => "quat_l1",
        LossKind::EulerMse => "euler_mse",
    }
}

// ─── gen-data ───

fn cmd_gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let spec = SynthSpec {
        num_sequences: cfg.get(a.sequences, "sequences")?,
        frames: cfg.get(a.frames, "frames")?,
        joints: cfg.get(a.joints, "joints")?,
        fps: cfg.get(a.fps, "fps")?,
        harmonics: cfg.get(a.harmonics, "harmonics")?,
        amp_range: (cfg.get(a.amp_min, "amp_min")?, cfg.get(a.amp_max, "amp_max")?),
        freq_range: (cfg.get(a.freq_min, "freq_min")?, cfg.get(a.freq_max, "freq_max")?),
        phase_range: (cfg.get(None, "phase_min")?, cfg.get(None, "phase_max")?),
        noise_std: cfg.get(a.noise_std, "noise_std")?,
        drift_max: cfg.get(a.drift_max, "drift_max")?,
        seed: cfg.get(a.seed, "seed")?,
    };
    spec.validate().map_err(usage)?;

    let sequences = data::generate_synthetic(&spec)?;
    let out = cfg.get_path(a.out, "out", "data");

    // Hold out the tail of the set: sequences are consecutive windows of one
    // recording, so a tail split tests extrapolation rather than interpolation.
    let test = if spec.num_sequences >= 2 { (spec.num_sequences / 6).max(1) } else { 0 };
    let train = spec.num_sequences - test;

    let mut manifest = format!(
        "# pvred dataset: seed={} sequences={} frames={} joints={} fps={}\n",
        spec.seed, spec.num_sequences, spec.frames, spec.joints, spec.fps
    );
    for (i, seq) in sequences.iter().enumerate() {
        let rel = if i < train {
            format!("train/seq_{i:03}.csv")
        } else {
            format!("test/seq_{i:03}.csv")
        };
        let path = out.join(&rel);
        ensure_parent(&path)?;
        data::save_sequence(&path, seq)?;
        manifest.push_str(&rel);
        manifest.push('\n');
    }
    write_file(&out.join("manifest.txt"), manifest.as_bytes())?;
    print!("{manifest}");
    Ok(())
}

// ─── train ───

fn resolve_pos_dim(
    cfg: &FileConfig,
    flag: Option<usize>,
    pose_dim: usize,
) -> Result<usize, CliError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    let text = cfg.get_str(None, "pos_dim");
    if text.is_empty() {
        return Ok(pose_dim);
    }
    text.parse()
        .map_err(|e| usage(format!("config key `pos_dim`: cannot parse `{text}`: {e}")))
}

fn render_report(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data_dir: &Path,
    out_dir: &Path,
    wall_seconds: f64,
    final_loss: Option<&f64>,
) -> String {
    let mut r = String::new();
    r.push_str("# pvred training report — the key = value lines below are a\n");
    r.push_str("# complete config file; rerunning with --config <this file>\n");
    r.push_str("# and the same dataset reproduces the run bit for bit.\n");
    r.push_str(&format!("# version = {}\n", env!("CARGO_PKG_VERSION")));
    r.push_str(&format!("# wall_clock_seconds = {wall_seconds:.3}\n"));
    if let Some(l) = final_loss {
        r.push_str(&format!("# final_loss = {l}\n"));
    }
    r.push_str(&format!("data = {}\n", data_dir.display()));
    r.push_str(&format!("out = {}\n", out_dir.display()));
    r.push_str(&format!("seed = {}\n", train_cfg.seed));
    r.push_str(&format!("iters = {}\n", train_cfg.iterations));
    r.push_str(&format!("batch = {}\n", train_cfg.batch_size));
    r.push_str(&format!("lr = {}\n", train_cfg.learning_rate));
    r.push_str(&format!("clip_norm = {}\n", train_cfg.clip_norm));
    r.push_str(&format!("hidden = {}\n", model_cfg.hidden));
    r.push_str(&format!("pos_dim = {}\n", model_cfg.pos_dim));
    r.push_str(&format!("obs = {}\n", model_cfg.obs_frames));
    r.push_str(&format!("pred = {}\n", model_cfg.pred_frames));
    r.push_str(&format!("variant = {}\n", variant_name(model_cfg.variant)));
    r.push_str(&format!("loss = {}\n", loss_name(model_cfg.loss)));
    r.push_str(&format!("velocity = {}\n", model_cfg.use_velocity));
    r.push_str(&format!("position = {}\n", model_cfg.use_position));
    r.push_str(&format!("qt = {}\n", model_cfg.use_qt));
    r.push_str(&format!("bias = {}\n", model_cfg.use_bias));
    r.push_str(&format!("dropout = {}\n", model_cfg.dropout));
    r
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let data_dir = cfg.get_path(a.data, "data", "data/train");
    let dataset = load_dataset(&data_dir)?;
    let pose_dim = dataset[0].num_channels();
    let fps = dataset[0].fps;

    let variant = parse_variant(&cfg.get_str(a.variant, "variant"))?;
    let mut model_cfg = ModelConfig {
        pose_dim,
        pos_dim: resolve_pos_dim(&cfg, a.pos_dim, pose_dim)?,
        hidden: cfg.get(a.hidden, "hidden")?,
        obs_frames: cfg.get(a.obs, "obs")?,
        pred_frames: cfg.get(a.pred, "pred")?,
        variant,
        loss: parse_loss(&cfg.get_str(a.loss, "loss"))?,
        use_velocity: cfg.get_bool(a.no_vel.then_some(false), "velocity")?,
        use_position: cfg.get_bool(a.no_pos.then_some(false), "position")?,
        use_qt: cfg.get_bool(a.no_qt.then_some(false), "qt")?,
        use_bias: cfg.get_bool(a.no_bias.then_some(false), "bias")?,
        dropout: cfg.get(a.dropout, "dropout")?,
        fps,
    };
    if variant == Variant::Red {
        // Plain encoder-decoder: poses only, on both sides of the bottleneck.
        model_cfg.use_velocity = false;
        model_cfg.use_position = false;
    }
    model_cfg.validate().map_err(usage)?;

    let train_cfg = TrainConfig {
        iterations: cfg.get(a.iters, "iters")?,
        batch_size: cfg.get(a.batch, "batch")?,
        learning_rate: cfg.get(a.lr, "lr")?,
        clip_norm: cfg.get(a.clip_norm, "clip_norm")?,
        seed: cfg.get(a.seed, "seed")?,
    };
    train_cfg.validate().map_err(usage)?;

    let mut params =
        init_params(model_cfg.pose_dim, model_cfg.pos_dim, model_cfg.hidden, train_cfg.seed);
    let started = Instant::now();
    let history = model::train(&mut params, &dataset, &model_cfg, &train_cfg)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let out = cfg.get_path(a.out, "out", "run");
    let model_path = out.join("model.json");
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        config: model_cfg.clone(),
        train: train_cfg.clone(),
        params,
    };
    write_file(&model_path, model::encode_model(&file)?.as_bytes())?;

    let mut loss_csv = String::from("iteration,loss\n");
    for (i, l) in history.iter().enumerate() {
        loss_csv.push_str(&format!("{i},{l}\n"));
    }
    write_file(&out.join("loss.csv"), loss_csv.as_bytes())?;

    let report = render_report(&model_cfg, &train_cfg, &data_dir, &out, wall_seconds, history.last());
    write_file(&out.join("report.txt"), report.as_bytes())?;

    println!(
        "trained {} iterations in {:.1}s; wrote {}",
        history.len(),
        wall_seconds,
        model_path.display()
    );
    if let Some(l) = history.last() {
        println!("final loss {l:.6}");
    }
    Ok(())
}

// ─── evaluate ───

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let sequences = load_dataset(&cfg.get_path(a.data, "data", "data/test"))?;

    let horizons = parse_horizons(&cfg.get_str(a.horizons, "horizons"))?;
    let mask = parse_mask(&cfg.get_str(a.mask, "mask"))?;
    if let Some(m) = &mask {
        if m.len() != sequences[0].num_channels() {
            return Err(usage(format!(
                "mask has {} entries but the data has {} channels",
                m.len(),
                sequences[0].num_channels()
            )));
        }
    }
    let window: usize = cfg.get(a.window, "window")?;
    if window == 0 {
        return Err(usage("moving-average window must be at least 1"));
    }

    // A model run takes its clip geometry from the model file; a pure
    // baseline run has no model to consult and falls back to obs/pred.
    let loaded = if a.predictor == PredictorKind::Model {
        Some(model::load_model(&cfg.get_path(a.model, "model", "run/model.json"))?)
    } else {
        None
    };
    let (obs_frames, pred_frames) = match &loaded {
        Some(f) => (f.config.obs_frames, f.config.pred_frames),
        None => (cfg.get(a.obs, "obs")?, cfg.get(a.pred, "pred")?),
    };
    let protocol = EvalProtocol {
        obs_frames,
        pred_frames,
        horizons_ms: horizons,
        num_clips: cfg.get(a.clips, "clips")?,
        seed: cfg.get(a.seed, "seed")?,
        channel_mask: mask,
    };

    let (label, table) = match (&loaded, a.predictor) {
        (Some(f), _) => (
            "model",
            protocol.evaluate(&ModelPredictor { params: &f.params, config: &f.config }, &sequences)?,
        ),
        (None, PredictorKind::ZeroVelocity) => {
            ("zero_velocity", protocol.evaluate(&eval::ZeroVelocity, &sequences)?)
        }
        (None, PredictorKind::MovingAverage) => {
            ("moving_average", protocol.evaluate(&eval::MovingAverage { window }, &sequences)?)
        }
        (None, PredictorKind::Model) => unreachable!("model predictor always loads a model"),
    };

    let out = cfg.get_path(a.out, "out", "run");
    write_file(&out.join("eval.csv"), table.to_csv().as_bytes())?;

    let baselines = if a.baselines {
        let zero = protocol.evaluate(&eval::ZeroVelocity, &sequences)?;
        let moving = protocol.evaluate(&eval::MovingAverage { window }, &sequences)?;
        write_file(&out.join("eval_zero_velocity.csv"), zero.to_csv().as_bytes())?;
        write_file(&out.join("eval_moving_average.csv"), moving.to_csv().as_bytes())?;
        Some((zero, moving))
    } else {
        None
    };

    match &baselines {
        Some((zero, moving)) => {
            println!("{:>10}  {:>14}  {:>14}  {:>14}", "horizon_ms", label, "zero_velocity", "moving_average");
            for (i, row) in table.rows.iter().enumerate() {
                println!(
                    "{:>10}  {:>14.4}  {:>14.4}  {:>14.4}",
                    row.horizon_ms, row.mean_error, zero.rows[i].mean_error, moving.rows[i].mean_error
                );
            }
        }
        None => {
            println!("{:>10}  {:>14}", "horizon_ms", label);
            for row in &table.rows {
                println!("{:>10}  {:>14.4}", row.horizon_ms, row.mean_error);
            }
        }
    }
    Ok(())
}

// ─── predict ───

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let input = cfg.get_path(a.input, "input", "");
    if input.as_os_str().is_empty() {
        return Err(usage("predict needs --input <sequence.csv> (or the `input` config key)"));
    }
    let file = model::load_model(&cfg.get_path(a.model, "model", "run/model.json"))?;
    let seq = data::load_sequence(&input)?;

    let steps = a.frames.unwrap_or(file.config.pred_frames);
    if steps == 0 {
        return Err(usage("--frames must be at least 1"));
    }
    let predictor = ModelPredictor { params: &file.params, config: &file.config };
    let predicted = predictor.predict(&seq.frames, steps)?;

    let out = cfg.get_path(a.out, "out", "run/prediction.csv");
    ensure_parent(&out)?;
    data::save_sequence(
        &out,
        &MotionSequence { frames: predicted, fps: seq.fps, channel_names: seq.channel_names },
    )?;
    println!("wrote {steps} predicted frames to {}", out.display());
    Ok(())
}

// ─── gradcheck ───

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let seed = cfg.get(a.seed, "seed")?;
    for (name, tol) in [("--tol", a.tol), ("--unit-tol", a.unit_tol)] {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(usage(format!("{name} must be positive, got {tol}")));
        }
    }

    let reports = gradcheck::run_all(seed, a.corrupt_jacobian, a.unit_tol, a.tol)?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.pass() { "ok" } else { "FAILED" };
        println!("{}: max rel error {:.3e} (tol {:.0e}) {verdict}", r.name, r.max_rel_error, r.tolerance);
        if !r.pass() {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        println!("all gradient checks passed");
        Ok(())
    } else {
        Err(CliError::Runtime(format!("gradient checks failed: {}", failed.join(", "))))
    }
}

// ─── emit-plot ───

const HORIZON_HEADER: &str = "horizon_ms,mean_error,clips";
const LOSS_HEADER: &str = "iteration,loss";

fn cmd_emit_plot(a: EmitPlotArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let mut merged = String::from("series,horizon_ms,value\n");
    for path in &a.inputs {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let series = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("series")
            .to_string();
        let header = text.lines().next().unwrap_or("").trim();
        if header == HORIZON_HEADER {
            let table = HorizonTable::from_csv(&text)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            for row in &table.rows {
                merged.push_str(&format!("{series},{},{}\n", row.horizon_ms, row.mean_error));
            }
        } else if header == LOSS_HEADER {
            // Loss histories reuse the horizon_ms column for the iteration
            // index, so one schema serves both kinds of series.
            for (idx, line) in text.lines().enumerate().skip(1) {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let bad = || {
                    CliError::Runtime(format!(
                        "{}:{}: expected `iteration,loss`, got `{line}`",
                        path.display(),
                        idx + 1
                    ))
                };
                let (iter, loss) = line.split_once(',').ok_or_else(bad)?;
                let iter: u64 = iter.trim().parse().map_err(|_| bad())?;
                let loss: f64 = loss.trim().parse().map_err(|_| bad())?;
                merged.push_str(&format!("{series},{iter},{loss}\n"));
            }
        } else {
            return Err(CliError::Runtime(format!(
                "{}: unrecognised CSV header `{header}`",
                path.display()
            )));
        }
    }
    let out = cfg.get_path(a.out, "out", "plot.csv");
    write_file(&out, merged.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
