//! The `mmvt` command line.
//!
//! Exit codes: 0 on success, 1 when a command fails while working, 2 for
//! usage errors and missing input paths (checked before any work starts).

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmvt_core::metrics::{aggregate, compute_metrics};
use mmvt_core::passthrough::passthrough_store;
use mmvt_core::synth::{Motion, SynthConfig, SynthSequence};
use mmvt_core::weights::init_random;
use mmvt_core::{Model, ModelConfig, Variant, WeightStore};

use crate::dataset::{discover, Layout};
use crate::{bench, fixture, report, results, run, selfcheck, store};

#[derive(Debug, Parser)]
#[command(
    name = "mmvt",
    version,
    about = "RGB-T tracking with separable-attention transformers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track every sequence of a dataset and write one result file each.
    Track(TrackArgs),
    /// Score result files against the dataset ground truth.
    Eval(EvalArgs),
    /// Time separable against softmax attention as the token count grows.
    Bench(BenchArgs),
    /// Parameter census of a weight file.
    Inspect(InspectArgs),
    /// Run the oracle suites.
    Selfcheck(SelfcheckArgs),
    /// Write a synthetic RGB-T sequence in the dataset layout.
    Synth(SynthArgs),
    /// Write a seeded random or pass-through weight file.
    Init(InitArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `.mmvt` weight file.
    #[arg(long)]
    pub weights: PathBuf,
    /// full, base_rgb or no_fusion_transformer.
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: Variant,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// A sequence folder or a folder of sequences.
    #[arg(long)]
    pub dataset: PathBuf,
    /// lasher, rgbt234 or gtot.
    #[arg(long, default_value = "lasher", value_parser = parse_layout)]
    pub layout: Layout,
    /// Output folder for `<sequence>.txt` result files.
    #[arg(long)]
    pub out: PathBuf,
    /// Sequences tracked in parallel (0 = one per core).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Also write `<sequence>.csv` with per-frame confidence.
    #[arg(long)]
    pub records: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Folder of `<sequence>.txt` result files.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "lasher", value_parser = parse_layout)]
    pub layout: Layout,
    /// Report folder (metrics.json and curve CSVs).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Ascending token counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4096,8192")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Also check the file binds as this variant.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Sequence folder to write (its name becomes the sequence name).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    /// static or linear.
    #[arg(long, default_value = "linear", value_parser = parse_motion)]
    pub motion: Motion,
    /// Occlude the RGB target over the second half of the sequence.
    #[arg(long)]
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Random,
    Passthrough,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    pub kind: InitKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: Variant,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: mmvt_core::Error| e.to_string())
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    s.parse().map_err(|e: mmvt_core::Error| e.to_string())
}

fn parse_motion(s: &str) -> Result<Motion, String> {
    s.parse().map_err(|e: mmvt_core::Error| e.to_string())
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn load_model(args: &ModelArgs) -> anyhow::Result<Model> {
    let store = store::load(&args.weights).context("weights_io")?;
    let config = ModelConfig::default().with_variant(args.variant);
    Model::bind(&config, &store)
        .with_context(|| format!("binding {} as {}", args.weights.display(), args.variant))
}

fn cmd_track(args: &TrackArgs) -> Result<(), CliError> {
    require(&args.model.weights, "weights file")?;
    require(&args.dataset, "dataset")?;
    let model = load_model(&args.model)?;
    let sequences = discover(&args.dataset, args.layout).context("dataset")?;
    eprintln!(
        "tracking {} sequence(s) with {} on {} thread(s)",
        sequences.len(),
        args.model.variant,
        args.threads
    );
    let runs = run::track_all(&model, &sequences, args.threads).context("tracker")?;
    for r in &runs {
        results::write_boxes(&results::result_path(&args.out, &r.name), &r.boxes())
            .context("results")?;
        if args.records {
            results::write_records(&args.out.join(format!("{}.csv", r.name)), &r.records)
                .context("results")?;
        }
        eprintln!("{}: {} frames", r.name, r.records.len());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    require(&args.results, "results folder")?;
    require(&args.dataset, "dataset")?;
    let sequences = discover(&args.dataset, args.layout).context("dataset")?;
    let mut reports = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let pred = results::read_results(&args.results, &seq.name).context("results")?;
        let (gt_rgb, gt_ir) = seq.scored_gt();
        let r = compute_metrics(&pred, &gt_rgb, gt_ir.as_deref(), args.layout)
            .with_context(|| format!("evaluation of sequence {}", seq.name))?;
        reports.push((seq.name.clone(), r));
    }
    let all: Vec<_> = reports.iter().map(|(_, r)| r.clone()).collect();
    let total = aggregate(&all).context("evaluation")?;
    report::write_report(&args.out, args.layout, &total, &reports).context("report")?;
    let mut out = std::io::stdout().lock();
    for (name, r) in &reports {
        writeln!(out, "{}", report::summary_line(name, r)).context("stdout")?;
    }
    writeln!(out, "{}", report::summary_line("aggregate", &total)).context("stdout")?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let rows = bench::bench_attention(&args.k, args.dim, args.reps, args.seed).context("bench")?;
    let csv = bench::to_csv(&rows);
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    Ok(())
}

/// Parameter counts per `a.b` name prefix, in name order, plus the total.
pub fn census(store: &WeightStore) -> Vec<(String, usize)> {
    let mut rows: Vec<(String, usize)> = Vec::new();
    for (name, t) in store.iter() {
        let prefix = name.split('.').take(2).collect::<Vec<_>>().join(".");
        match rows.iter_mut().find(|(p, _)| *p == prefix) {
            Some((_, n)) => *n += t.len(),
            None => rows.push((prefix, t.len())),
        }
    }
    rows.sort();
    rows.push(("total".into(), store.param_count(None)));
    rows
}

fn cmd_inspect(args: &InspectArgs) -> Result<(), CliError> {
    require(&args.weights, "weights file")?;
    let store = store::load(&args.weights).context("weights_io")?;
    let mut out = std::io::stdout().lock();
    for (prefix, n) in census(&store) {
        writeln!(out, "{prefix:<24} {n:>10}").context("stdout")?;
    }
    if let Some(variant) = args.variant {
        let config = ModelConfig::default().with_variant(variant);
        Model::bind(&config, &store).with_context(|| format!("binding as {variant}"))?;
        writeln!(out, "binds as {variant}").context("stdout")?;
    }
    Ok(())
}

fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<(), CliError> {
    let checks = selfcheck::run_all(args.seed);
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(anyhow::anyhow!("{failed} oracle suite(s) failed").into());
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut config = SynthConfig::new(args.seed, args.frames).with_motion(args.motion);
    if args.degraded {
        config = config.rgb_degraded();
    }
    let seq = SynthSequence::new(config).map_err(|e| CliError::Usage(format!("synth: {e}")))?;
    fixture::write_sequence(&seq, &args.out).context("synth")?;
    eprintln!("wrote {} frames to {}", seq.len(), args.out.display());
    Ok(())
}

fn cmd_init(args: &InitArgs) -> Result<(), CliError> {
    let config = ModelConfig::default().with_variant(args.variant);
    let weights = match args.kind {
        InitKind::Random => init_random(&config, args.seed),
        InitKind::Passthrough => passthrough_store(&config),
    }
    .context("weights")?;
    store::save(&weights, &args.out).context("weights_io")?;
    eprintln!(
        "wrote {} parameters to {}",
        weights.param_count(None),
        args.out.display()
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Selfcheck(a) => cmd_selfcheck(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Init(a) => cmd_init(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to standard error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Failed(err) => eprintln!("error: {err:#}"),
            }
            e.code()
        }
    }
}
