//! Command-line entry point.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    read_captions, read_jsonl, synth_dataset, tokenize, write_jsonl, Dataset, DatasetManifest, Split, SynthConfig,
};
use crate::metrics::{bleu, cider, rouge_l, BleuSmoothing, EvalRecord, MetricsError};
use crate::model::{DecodeMode, InferOptions, ModelError};
use crate::multitask::{loss_gradcheck, GradCheckSetup};
use crate::semantics::{augment, build_sdm, EmbeddingMode, PrecomputedEmbedder, StopWordList};
use crate::trainer::{load_checkpoint, save_checkpoint, train, write_loss_csv, TrainConfig, TrainError, TrainResources};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "mtle", version, about = "Multitask video captioning with a shared encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (manifest, captions, feature files) into --out.
    Synth(SynthArgs),
    /// Train and write a checkpoint to --out plus a loss CSV next to it.
    Train(TrainArgs),
    /// Caption every video of a manifest, writing JSON Lines predictions.
    Infer(InferArgs),
    /// Score predictions against reference captions.
    Eval(EvalArgs),
    /// Write per-video semantic distance matrices.
    Sdm(SdmArgs),
    /// Write the stop-word-stripped form of every caption.
    Augment(AugmentArgs),
    /// Check the analytic gradient of the joint loss on a small random model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub videos: usize,
    #[arg(long, default_value_t = 20)]
    pub vocab: usize,
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub captions: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to manifest.json in the working directory.
    #[arg(long, default_value = "manifest.json")]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// greedy, beam, beam:K or ensemble. Plain `beam` uses the checkpoint's beam width.
    #[arg(long, default_value = "greedy")]
    pub mode: String,
    /// train, val, test or all.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Decoder used by greedy and beam modes.
    #[arg(long, default_value_t = 0)]
    pub decoder: usize,
    /// Accepted for uniformity; inference draws no random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON Lines of {"video_id", "caption"}.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Reference captions file; alternatively taken from --manifest.
    #[arg(long, required_unless_present = "manifest")]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SdmArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Captions file; alternatively taken from --manifest.
    #[arg(long, required_unless_present = "manifest")]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }

    fn numeric(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: e.to_string(),
        }
    }

    fn usage(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            Self::numeric(e)
        } else {
            Self::data(e)
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(_) => Self::numeric(e),
            ModelError::UnknownMode(_) | ModelError::NoSuchDecoder { .. } => Self::usage(e),
            _ => Self::data(e),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Runs one command, returning its one-line summary.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sdm(a) => cmd_sdm(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn stopwords(path: Option<&Path>) -> Result<StopWordList, CliError> {
    match path {
        Some(p) => StopWordList::load(p).map_err(CliError::data),
        None => Ok(StopWordList::default()),
    }
}

fn embedder(path: Option<&Path>) -> Result<EmbeddingMode, CliError> {
    match path {
        Some(p) => Ok(EmbeddingMode::Precomputed(PrecomputedEmbedder::load(p).map_err(CliError::data)?)),
        None => Ok(EmbeddingMode::Surrogate),
    }
}

/// The captions file named on the command line or by the manifest.
fn captions_path(captions: Option<&Path>, manifest: Option<&Path>) -> Result<PathBuf, CliError> {
    if let Some(c) = captions {
        return Ok(c.to_path_buf());
    }
    let m = manifest.ok_or_else(|| CliError::usage("either --captions or --manifest is required"))?;
    let parsed = DatasetManifest::load(m).map_err(CliError::data)?;
    let rel = Path::new(&parsed.captions);
    Ok(if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        m.parent().unwrap_or(Path::new("")).join(rel)
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<String, CliError> {
    let config = SynthConfig {
        seed: a.seed,
        n_videos: a.videos,
        vocab_size: a.vocab,
        frames_per_video: a.frames,
        feature_dim: a.dim,
        captions_per_video: a.captions,
    };
    fs::create_dir_all(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    let (path, manifest) = synth_dataset(&config, &a.out).map_err(CliError::data)?;
    Ok(format!(
        "synth: {} videos ({}) -> {}",
        manifest.videos.len(),
        manifest.kind,
        path.display()
    ))
}

fn cmd_train(a: &TrainArgs) -> Result<String, CliError> {
    let mut config = TrainConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let dataset = Dataset::load(&a.manifest).map_err(CliError::data)?;
    let resources = TrainResources {
        embedder: embedder(a.embeddings.as_deref())?,
        stopwords: stopwords(a.stopwords.as_deref())?,
    };
    let checkpoint = train(&dataset, &config, &resources)?;
    save_checkpoint(&a.out, &checkpoint)?;
    let csv = a.out.with_extension("loss.csv");
    write_loss_csv(&csv, &checkpoint.loss_log)?;
    let last = checkpoint
        .loss_log
        .last()
        .map(|e| format!("final loss {}", e.total))
        .unwrap_or_else(|| "no epochs".into());
    Ok(format!(
        "train: {} epochs, {last} -> {} and {}",
        checkpoint.epoch,
        a.out.display(),
        csv.display()
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub caption: String,
}

fn cmd_infer(a: &InferArgs) -> Result<String, CliError> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let mode = if a.mode.trim() == "beam" {
        DecodeMode::Beam {
            width: checkpoint.config.beam_width,
        }
    } else {
        a.mode.parse::<DecodeMode>()?
    };
    let split = match a.split.as_str() {
        "all" => None,
        s => Some(s.parse::<Split>().map_err(CliError::usage)?),
    };
    let dataset = Dataset::load(&a.manifest).map_err(CliError::data)?;
    let opts = InferOptions {
        mode,
        max_len: checkpoint.config.max_caption_len,
        decoder: a.decoder,
    };
    let mut predictions = Vec::new();
    for video in dataset.videos.iter().filter(|v| split.is_none_or(|s| v.split == s)) {
        let tokens = checkpoint.model.infer(&video.frames, &opts)?;
        predictions.push(Prediction {
            video_id: video.video_id.clone(),
            caption: checkpoint.vocab.decode(&tokens).join(" "),
        });
    }
    write_jsonl(&a.out, &predictions).map_err(CliError::data)?;
    Ok(format!(
        "infer: {} captions ({mode}) -> {}",
        predictions.len(),
        a.out.display()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu4: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    /// Absent when the references are too uniform for IDF weighting.
    pub cider: Option<f64>,
    pub n_records: usize,
}

/// Scores predictions against a captions file.
pub fn evaluate(predictions: &[Prediction], references: &BTreeMap<String, Vec<Vec<String>>>) -> Result<EvalReport, CliError> {
    let records = predictions
        .iter()
        .map(|p| {
            let refs = references
                .get(&p.video_id)
                .ok_or_else(|| CliError::data(format!("no reference captions for video {:?}", p.video_id)))?;
            Ok(EvalRecord::new(p.video_id.clone(), tokenize(&p.caption), refs.clone()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let cider = match cider(&records, 4, 6.0) {
        Ok(v) => Some(v),
        Err(MetricsError::TooFewReferences(_)) => None,
        Err(e) => return Err(CliError::data(e)),
    };
    Ok(EvalReport {
        bleu4: bleu(&records, 4, BleuSmoothing::None).map_err(CliError::data)?,
        rouge_l: rouge_l(&records, 1.2).map_err(CliError::data)?,
        cider,
        n_records: records.len(),
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<String, CliError> {
    let predictions: Vec<Prediction> = read_jsonl(&a.predictions).map_err(CliError::data)?;
    let caps = captions_path(a.captions.as_deref(), a.manifest.as_deref())?;
    let mut references: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for r in read_captions(&caps).map_err(CliError::data)? {
        references.entry(r.video_id).or_default().push(tokenize(&r.caption));
    }
    let report = evaluate(&predictions, &references)?;
    write_json(&a.out, &report)?;
    Ok(format!(
        "eval: {} records, bleu4 {:.4}, rougeL {:.4}, cider {} -> {}",
        report.n_records,
        report.bleu4,
        report.rouge_l,
        report.cider.map_or("n/a".into(), |c| format!("{c:.4}")),
        a.out.display()
    ))
}

fn cmd_sdm(a: &SdmArgs) -> Result<String, CliError> {
    let dataset = Dataset::load(&a.manifest).map_err(CliError::data)?;
    let embedder = embedder(a.embeddings.as_deref())?;
    let matrices = dataset
        .videos
        .iter()
        .map(|v| build_sdm(&v.video_id, &v.captions, &embedder))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::data)?;
    write_json(&a.out, &matrices)?;
    Ok(format!("sdm: {} videos -> {}", matrices.len(), a.out.display()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub video_id: String,
    pub caption: String,
    pub augmented: String,
    pub degenerate: bool,
}

fn cmd_augment(a: &AugmentArgs) -> Result<String, CliError> {
    let caps = captions_path(a.captions.as_deref(), a.manifest.as_deref())?;
    let words = stopwords(a.stopwords.as_deref())?;
    let out: Vec<AugmentedRecord> = read_captions(&caps)
        .map_err(CliError::data)?
        .into_iter()
        .map(|r| {
            let aug = augment(&tokenize(&r.caption), &words);
            AugmentedRecord {
                video_id: r.video_id,
                caption: r.caption,
                augmented: aug.tokens.join(" "),
                degenerate: aug.degenerate,
            }
        })
        .collect();
    write_jsonl(&a.out, &out).map_err(CliError::data)?;
    Ok(format!("augment: {} captions -> {}", out.len(), a.out.display()))
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<String, CliError> {
    let setup = GradCheckSetup {
        seed: a.seed,
        ..GradCheckSetup::default()
    };
    let report = loss_gradcheck(&setup).map_err(CliError::numeric)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let line = format!(
        "gradcheck: {} entries, max relative error {:.3e}",
        report.entries_checked, report.max_rel_error
    );
    if report.passed(GRADCHECK_TOL) {
        Ok(format!("{line} (pass)"))
    } else {
        Err(CliError::numeric(format!("{line} exceeds {GRADCHECK_TOL:e}")))
    }
}
