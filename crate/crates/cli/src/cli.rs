//! Argument parsing and subcommand implementations.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sqa_core::dataset::{self, SynthSpec};
use sqa_core::eval::{self, Head, ScorePair};
use sqa_core::model::{self, MosScores, TrainConfig};

use crate::scoring::{expand_inputs, format_records, OutputFormat, Scorer};
use crate::service::{self, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sqa", version, about = "Non-intrusive P.835 speech quality scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score WAV files, directories or glob patterns.
    Score(ScoreArgs),
    /// Train a model from a manifest.
    Train(TrainArgs),
    /// Correlate a model's scores with a manifest's labels.
    Eval(EvalArgs),
    /// Run the local HTTP scoring service.
    Serve(ServeArgs),
    /// Generate a synthetic rated corpus.
    Synth(SynthArgs),
    /// Simulate rater panels of different sizes over a manifest.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct FormatArg {
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
    /// Shorthand for `--format json`.
    #[arg(long)]
    pub json: bool,
}

impl FormatArg {
    fn get(&self) -> OutputFormat {
        if self.json {
            OutputFormat::Json
        } else {
            self.format
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub format: FormatArg,
    /// Files, directories or glob patterns.
    pub inputs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Validation manifest; without one a seeded share of the training set is held out.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// TOML file with training hyper-parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output weight file; `loss_curve.csv` is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Weight bundle; repeat to serve several variants.
    #[arg(long, required = true)]
    pub weights: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Longest accepted clip, in seconds.
    #[arg(long, default_value_t = service::DEFAULT_MAX_SECONDS)]
    pub max_seconds: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub models: usize,
    #[arg(long, default_value_t = 100)]
    pub clips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Prefix for model and clip ids.
    #[arg(long, default_value = "")]
    pub prefix: String,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Panel sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5,30")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = ["sig", "bak", "ovrl"], default_value = "ovrl")]
    pub head: String,
}

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<i32> {
    match cmd {
        Command::Score(a) => cmd_score(&a, out, err),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Serve(a) => cmd_serve(&a),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Study(a) => cmd_study(&a, out),
    }
}

pub fn cmd_score(a: &ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<i32> {
    let paths = expand_inputs(&a.inputs)?;
    if paths.is_empty() {
        writeln!(err, "error: no inputs")?;
        return Ok(EXIT_USAGE);
    }
    let scorer = Scorer::load(&a.weights)?;
    let mut records = Vec::with_capacity(paths.len());
    let mut failures = 0;
    for p in &paths {
        let result = sqa_core::audio::load_wav(p)
            .map_err(anyhow::Error::from)
            .and_then(|clip| Ok(scorer.score(&clip)?));
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                failures += 1;
                writeln!(err, "failed: {}: {e}", p.display())?;
            }
        }
    }
    out.write_all(format_records(&records, a.format.get()).as_bytes())?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_FAILURE })
}

/// Path of the loss curve written alongside a weight file.
pub fn loss_curve_path(weights: &Path) -> PathBuf {
    weights
        .parent()
        .map(|d| d.join("loss_curve.csv"))
        .unwrap_or_else(|| PathBuf::from("loss_curve.csv"))
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let manifest = dataset::read_manifest(&a.manifest)?;
    let val = a.val_manifest.as_ref().map(dataset::read_manifest).transpose()?;
    let report = model::train(cfg.initial_model()?, &manifest, val.as_ref(), &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model::save_weights(&report.bundle, &a.out)?;
    let curve = loss_curve_path(&a.out);
    report.write_loss_curve(&curve)?;
    writeln!(
        out,
        "wrote {} (hash {}), best epoch {} val_mse {:.6}; loss curve {}",
        a.out.display(),
        report.bundle.digest(),
        report.best_epoch,
        report.best_val_mse(),
        curve.display()
    )?;
    Ok(EXIT_OK)
}

/// Scores every manifest clip and pairs it with its labels.
pub fn score_manifest(scorer: &Scorer, manifest: &dataset::Manifest) -> anyhow::Result<Vec<ScorePair>> {
    manifest
        .clips()
        .iter()
        .map(|c| {
            let clip = sqa_core::audio::load_wav(manifest.resolve(c))
                .with_context(|| format!("clip {}", c.clip_id))?;
            let r = scorer.score(&clip)?;
            Ok(ScorePair {
                clip_id: c.clip_id.clone(),
                model_id: c.model_id.clone(),
                human: MosScores::full(c.mos_sig, c.mos_bak, c.mos_ovrl),
                predicted: MosScores {
                    sig: r.sig,
                    bak: r.bak,
                    ovrl: r.ovrl,
                },
                num_ratings: c.num_ratings,
            })
        })
        .collect()
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let scorer = Scorer::load(&a.weights)?;
    let manifest = dataset::read_manifest(&a.manifest)?;
    let pairs = score_manifest(&scorer, &manifest)?;
    let report = eval::correlation_report(&pairs)?;
    let text = match a.format.get() {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => report.to_json() + "\n",
    };
    out.write_all(text.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_serve(a: &ServeArgs) -> anyhow::Result<i32> {
    let scorers = a.weights.iter().map(Scorer::load).collect::<anyhow::Result<Vec<_>>>()?;
    let state = Arc::new(AppState::new(scorers, a.max_seconds)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", a.host, a.port))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(addr, state))?;
    Ok(EXIT_OK)
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let spec = SynthSpec {
        num_models: a.models,
        clips_per_model: a.clips,
        seed: a.seed,
        duration_secs: a.duration,
        id_prefix: a.prefix.clone(),
        ..SynthSpec::default()
    };
    let m = dataset::generate_synthetic_corpus(&spec, &a.out)?;
    writeln!(
        out,
        "wrote {} clips from {} models to {}",
        m.len(),
        m.model_ids().len(),
        a.out.join("manifest.csv").display()
    )?;
    Ok(EXIT_OK)
}

fn cmd_study(a: &StudyArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let manifest = dataset::read_manifest(&a.manifest)?;
    let head = match a.head.as_str() {
        "sig" => Head::Sig,
        "bak" => Head::Bak,
        _ => Head::Ovrl,
    };
    let study = eval::ratings_study(&manifest, head, &a.n, a.noise_sd, a.trials, a.seed)?;
    out.write_all(study.to_table().as_bytes())?;
    Ok(EXIT_OK)
}
