//! `fsad`: generate synthetic corpora, train the two-stage detector and
//! evaluate checkpoints.

mod run_manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fsad_core::data::{
    corpus_fingerprint, filter_blurred, generate_synthetic_corpus, load_image_folder, manifest_path, preprocess,
    default_label_map, read_corpus, sample_abnormal_subset, split_patientwise, write_corpus, CorpusSplit, LabeledFrame,
    TARGET_SIZE,
};
use fsad_core::evaluation::{emit_report, run_sweep, FrameScore, MetricsSummary, SweepResult};
use fsad_core::models::{load_checkpoint, save_checkpoint};
use fsad_core::training::{score_frames, train_encoder_stage, train_sin_stage, Preset};
use fsad_core::Error;

use run_manifest::{now_unix, RunManifest};

const OUTPUT_ROOT_ENV: &str = "FSAD_OUTPUT_ROOT";
const CONFIG_FILE: &str = "config.json";
const CORPUS_DIR: &str = "corpus";
const ENCODER_CHECKPOINT: &str = "encoder.json";
const MODEL_CHECKPOINT: &str = "model.json";
const ENCODER_LOG: &str = "encoder_log.ndjson";
const SIN_LOG: &str = "sin_log.ndjson";
const EVAL_DIR: &str = "eval";

#[derive(Parser, Debug)]
#[command(name = "fsad", version, about = "Few-shot anomaly detection runner")]
struct Cli {
    /// Directory receiving every artifact.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "runs")]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Render a synthetic corpus and its manifest.
    GenerateData(GenerateArgs),
    /// Train the encoder, the score network, or both.
    Train(TrainArgs),
    /// Score the test split with a trained model, optionally sweeping k.
    Evaluate(EvalArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Built-in preset (paper, desk, smoke).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON preset file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patients: Option<usize>,
    #[arg(long)]
    frames_per_patient: Option<usize>,
    /// Corpus directory; defaults to `<output-root>/corpus`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Stage {
    Encoder,
    Sin,
    All,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "all")]
    stage: Stage,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Number of abnormal training frames.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus directory or image folder; defaults to `<output-root>/corpus`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Checkpoint manifest; defaults to `<output-root>/model.json`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated abnormal counts to sweep.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_)) | Some(Error::PatientId(_)) => 2,
        Some(Error::Contract(_)) | Some(Error::Shape(_)) => 3,
        Some(Error::MissingInput(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::GenerateData(a) => generate(&cli.output_root, a),
        Cmd::Train(a) => train(&cli.output_root, a),
        Cmd::Evaluate(a) => evaluate(&cli.output_root, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// `--config` wins over `--preset`; with neither, a config saved by an
/// earlier `train` under the output root is reused, else `desk`.
fn resolve_preset(args: &ConfigArgs, root: &Path) -> Result<Preset> {
    let from_file = |p: &Path| -> Result<Preset> {
        if !p.is_file() {
            return Err(Error::MissingInput(p.to_path_buf()).into());
        }
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(Preset::from_json(&text)?)
    };
    if let Some(p) = &args.config {
        return from_file(p);
    }
    if let Some(name) = &args.preset {
        return Ok(Preset::builtin(name)?);
    }
    let saved = root.join(CONFIG_FILE);
    if saved.is_file() {
        return from_file(&saved);
    }
    Ok(Preset::builtin("desk")?)
}

fn generate(root: &Path, args: &GenerateArgs) -> Result<()> {
    let started = now_unix();
    let preset = resolve_preset(&args.cfg, root)?;
    let mut synth = preset.data.synth.clone();
    if let Some(s) = args.seed {
        synth.rng_seed = s;
    }
    if let Some(n) = args.patients {
        synth.n_patients = n;
    }
    if let Some(n) = args.frames_per_patient {
        synth.frames_per_patient = n;
    }
    synth.validate()?;
    let out = args.out.clone().unwrap_or_else(|| root.join(CORPUS_DIR));
    let frames = generate_synthetic_corpus(&synth)?;
    let total = frames.len();
    let kept = filter_blurred(frames, preset.data.blur_threshold)?;
    let dropped = total - kept.len();
    let manifest = write_corpus(&kept, &out, Some(synth.clone()), preset.data.blur_threshold, dropped)?;

    let mut run = RunManifest::new("generate-data", preset.hash(), synth.rng_seed, started);
    run.dataset_fingerprint = Some(manifest.fingerprint.clone());
    let mut files = vec![manifest_path(&out)];
    files.extend(manifest.frames.iter().map(|e| out.join(&e.path)));
    run.finish(&files, &out.join("run_generate_data.json"))?;
    println!("wrote {} frames to {} ({} dropped as blurred)", manifest.len(), out.display(), dropped);
    Ok(())
}

/// Frames plus fingerprint from a corpus directory, or from a plain
/// `normal/`/`abnormal/` image folder (resized and blur-filtered).
fn load_frames(path: &Path, preset: &Preset) -> Result<(Vec<LabeledFrame>, String)> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()).into());
    }
    if manifest_path(path).is_file() {
        let (manifest, frames) = read_corpus(path)?;
        return Ok((frames, manifest.fingerprint));
    }
    let load = load_image_folder(path, &default_label_map())?;
    for r in &load.rejected {
        eprintln!("skipped {}: {}", r.path.display(), r.reason);
    }
    let frames = load.frames.iter().map(|f| preprocess(f, TARGET_SIZE)).collect::<fsad_core::Result<Vec<_>>>()?;
    let frames = filter_blurred(frames, preset.data.blur_threshold)?;
    let fp = corpus_fingerprint(&frames);
    Ok((frames, fp))
}

fn load_split(data: &Option<PathBuf>, root: &Path, preset: &Preset) -> Result<(CorpusSplit, String)> {
    let path = data.clone().unwrap_or_else(|| root.join(CORPUS_DIR));
    let (frames, fp) = load_frames(&path, preset)?;
    let split = split_patientwise(&frames, &preset.data.split, preset.data.split_seed)?;
    Ok((split, fp))
}

fn train(root: &Path, args: &TrainArgs) -> Result<()> {
    let started = now_unix();
    let mut preset = resolve_preset(&args.cfg, root)?;
    if let Some(s) = args.seed {
        preset.train.rng_seed = s;
    }
    if let Some(k) = args.k {
        preset.train.k_abnormal = k;
    }
    preset.validate()?;
    let cfg = preset.train.clone();
    if args.stage != Stage::Encoder && cfg.k_abnormal == 0 {
        return Err(Error::config("score-network training needs k >= 1").into());
    }
    // Fail on a missing encoder before touching the data.
    let encoder_path = root.join(ENCODER_CHECKPOINT);
    if args.stage == Stage::Sin && !encoder_path.is_file() {
        return Err(Error::MissingInput(encoder_path))
            .context("stage sin needs an encoder checkpoint; run `train --stage encoder` first");
    }
    let (split, fingerprint) = load_split(&args.data, root, &preset)?;
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let config_path = root.join(CONFIG_FILE);
    fs::write(&config_path, serde_json::to_string_pretty(&preset)? + "\n")
        .with_context(|| format!("writing {}", config_path.display()))?;
    let hash = cfg.hash();
    let mut files = vec![config_path];

    let bundle = if args.stage == Stage::Sin {
        let (bundle, _) = load_checkpoint(&encoder_path)?;
        bundle
    } else {
        eprintln!("training encoder on {} normal frames", split.train_normal.len());
        let (bundle, log) = train_encoder_stage(&split.train_normal, &cfg)?;
        save_checkpoint(&bundle, &hash, &encoder_path)?;
        let log_path = root.join(ENCODER_LOG);
        log.write_ndjson(&log_path)?;
        files.extend([encoder_path.clone(), encoder_path.with_extension("bin"), log_path]);
        bundle
    };

    if args.stage != Stage::Encoder {
        let abnormal = sample_abnormal_subset(&split.train_abnormal, cfg.k_abnormal, cfg.rng_seed)?;
        eprintln!("training score network with {} abnormal frames", abnormal.len());
        let (bundle, log) = train_sin_stage(bundle, &split.train_normal, &abnormal, Some(&split.validation), &cfg)?;
        let model_path = root.join(MODEL_CHECKPOINT);
        save_checkpoint(&bundle, &hash, &model_path)?;
        let log_path = root.join(SIN_LOG);
        log.write_ndjson(&log_path)?;
        files.extend([model_path.clone(), model_path.with_extension("bin"), log_path]);
    }

    let stage = format!("{:?}", args.stage).to_lowercase();
    let mut run = RunManifest::new(&format!("train --stage {stage}"), preset.hash(), cfg.rng_seed, started);
    run.dataset_fingerprint = Some(fingerprint);
    run.k_abnormal = (args.stage != Stage::Encoder).then_some(cfg.k_abnormal);
    run.finish(&files, &root.join(format!("run_train_{stage}.json")))?;
    Ok(())
}

fn evaluate(root: &Path, args: &EvalArgs) -> Result<()> {
    let started = now_unix();
    let mut preset = resolve_preset(&args.cfg, root)?;
    if let Some(s) = args.seed {
        preset.train.rng_seed = s;
    }
    preset.validate()?;
    let cfg = preset.train.clone();
    let checkpoint = args.checkpoint.clone().unwrap_or_else(|| root.join(MODEL_CHECKPOINT));
    let (mut bundle, _) = load_checkpoint(&checkpoint)?;
    let (split, fingerprint) = load_split(&args.data, root, &preset)?;

    let sweep = match &args.sweep {
        Some(ks) => {
            let repeats = args.repeats.unwrap_or(preset.sweep.repeats);
            Some(run_sweep(&bundle, &split, ks, repeats, &cfg)?)
        }
        None => None,
    };
    let (scores, mut summary) = if bundle.state.sin_trained {
        let scored = score_frames(&mut bundle, &split.test)?;
        let scores: Vec<FrameScore> = split
            .test
            .frames
            .iter()
            .zip(&scored.items)
            .map(|(f, &(score, label))| FrameScore { frame_id: f.id.clone(), patient_id: f.patient_id, label, score })
            .collect();
        let summary = MetricsSummary::from_scores(&scores, bundle.state.threshold)?;
        (scores, summary)
    } else if sweep.is_some() {
        (Vec::new(), MetricsSummary::default())
    } else {
        return Err(Error::contract(format!("{} holds no trained score network", checkpoint.display())).into());
    };
    summary.seed = Some(cfg.rng_seed);
    summary.k_abnormal = bundle.state.sin_trained.then_some(cfg.k_abnormal);

    let out = root.join(EVAL_DIR);
    let files = emit_report(&scores, &summary, sweep.as_ref(), &out)?;
    let mut run = RunManifest::new("evaluate", preset.hash(), cfg.rng_seed, started);
    run.dataset_fingerprint = Some(fingerprint);
    run.k_abnormal = summary.k_abnormal;
    run.finish(&files.all(), &out.join("run_evaluate.json"))?;

    if let Some(auc) = summary.auc {
        println!("AUC: {auc}");
    }
    if let Some(s) = &sweep {
        print_sweep(s);
    }
    Ok(())
}

fn print_sweep(s: &SweepResult) {
    for e in &s.entries {
        println!("k={} AUC mean {:.4} std {:.4}", e.k, e.mean_auc, e.std_auc);
    }
}
