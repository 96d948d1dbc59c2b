//! Command-line front end: `synth`, `train`, `estimate`, `eval`, `resynth`.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{MethodKind, RunConfig};
use crate::dataset::wav::{write_wav, WavEncoding};
use crate::dataset::{
    load_external, load_utterance, read_manifest, split_indices, write_corpus, CorpusSpec,
    DatasetKind, GroundTruth, LfRanges, Utterance,
};
use crate::frontend::FeatureKind;
use crate::nn::checkpoint::{self, Metadata};
use crate::nn::{train, MlpModel};
use crate::pipeline::{
    resynthesize, run_utterance, training_set, ErrorAccumulator, ErrorReport, EstimateOptions,
    EstimationResult, GciMode, LfGrid, Method, UtteranceOutcome,
};
use crate::{Error, Result, Waveform};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Run(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "armax-lf", version, about = "LF glottal source and ARMAX vocal tract analysis")]
pub struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    All,
    Train,
    HeldOut,
}

/// Analysis options shared by the estimation subcommands.
#[derive(Debug, Args)]
pub struct AnalysisArgs {
    #[arg(long, value_parser = parse_kind::<FeatureKind>)]
    pub frontend: Option<FeatureKind>,
    /// ARMAX orders as `p,q`.
    #[arg(long, value_parser = parse_orders)]
    pub orders: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_kind::<MethodKind>)]
    pub method: Option<MethodKind>,
    #[arg(long, value_parser = parse_kind::<GciMode>)]
    pub gci: Option<GciMode>,
    /// Use the true LF shapes from the ground truth instead of a model.
    #[arg(long)]
    pub oracle: bool,
    /// Model checkpoint (required for `--method dnn` without `--oracle`).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a corpus.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_parser = parse_kind::<DatasetKind>)]
        dataset: Option<DatasetKind>,
        #[arg(long)]
        scale: Option<f64>,
        /// Seconds per utterance.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Train the LF estimator on the training split of a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint path; the loss curve goes to `<out>.loss.csv`.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_parser = parse_kind::<FeatureKind>)]
        frontend: Option<FeatureKind>,
        #[arg(long, value_parser = parse_kind::<GciMode>)]
        gci: Option<GciMode>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// Training windows per utterance (0 = all).
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        held_out: Option<f64>,
    },
    /// Estimate source and tract parameters, writing per-utterance results.
    Estimate {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Single WAV to analyze.
        #[arg(long, conflicts_with = "corpus")]
        input: Option<PathBuf>,
        /// Ground-truth JSON for `--input`.
        #[arg(long, requires = "input")]
        truth: Option<PathBuf>,
        #[arg(long, required_unless_present = "input")]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "held-out")]
        split: Split,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write resynthesized speech.
        #[arg(long)]
        resynth: bool,
    },
    /// Print an error report over a corpus split.
    Eval {
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "held-out")]
        split: Split,
        /// Also write the report as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Analyze one WAV and write its resynthesis.
    Resynth {
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn parse_kind<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn parse_orders(s: &str) -> std::result::Result<(usize, usize), String> {
    let (p, q) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `p,q`, got '{s}'"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    Ok((n(p)?, n(q)?))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// The configuration a command line resolves to.
pub fn resolve_config(cli: &Cli) -> std::result::Result<RunConfig, CliError> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, cli.seed);
    set(&mut c.jobs, cli.jobs);
    c.train.seed = c.seed;
    match &cli.command {
        Command::Synth {
            dataset,
            scale,
            duration,
            ..
        } => {
            set(&mut c.dataset, *dataset);
            set(&mut c.scale, *scale);
            set(&mut c.duration_s, *duration);
        }
        Command::Train {
            frontend,
            gci,
            epochs,
            lr,
            batch,
            windows,
            held_out,
            ..
        } => {
            set(&mut c.frontend, *frontend);
            set(&mut c.gci, *gci);
            set(&mut c.train.epochs, *epochs);
            set(&mut c.train.lr, *lr);
            set(&mut c.train.batch, *batch);
            set(&mut c.windows_per_utterance, *windows);
            set(&mut c.held_out, *held_out);
        }
        Command::Estimate { analysis, .. }
        | Command::Eval { analysis, .. }
        | Command::Resynth { analysis, .. } => {
            set(&mut c.frontend, analysis.frontend);
            set(&mut c.orders, analysis.orders);
            set(&mut c.method, analysis.method);
            set(&mut c.gci, analysis.gci);
        }
    }
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

pub fn execute(cli: &Cli) -> std::result::Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth { out, .. } => cmd_synth(&cfg, out),
        Command::Train { corpus, out, .. } => cmd_train(&cfg, corpus, out),
        Command::Estimate {
            analysis,
            input,
            truth,
            corpus,
            split,
            out,
            resynth,
        } => {
            let source = match (input, corpus) {
                (Some(wav), _) => Source::File(wav.clone(), truth.clone()),
                (None, Some(dir)) => Source::Corpus(dir.clone(), *split),
                (None, None) => return Err(CliError::Usage("need --input or --corpus".into())),
            };
            cmd_estimate(&cfg, analysis, &source, out, *resynth)
        }
        Command::Eval {
            analysis,
            corpus,
            split,
            report,
        } => cmd_eval(&cfg, analysis, corpus, *split, report.as_deref()),
        Command::Resynth {
            analysis,
            input,
            truth,
            out,
        } => cmd_resynth(&cfg, analysis, input, truth.as_deref(), out),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> std::result::Result<(), CliError> {
    let mut spec = CorpusSpec::scaled(cfg.dataset, cfg.scale, cfg.seed);
    spec.duration_s = cfg.duration_s;
    let manifest = write_corpus(out, &spec, cfg.jobs.max(rayon::current_num_threads()))?;
    println!(
        "synth: {} utterances ({} F0 x {} combos x {} syllables) -> {}",
        manifest.len(),
        spec.f0_grid.len(),
        spec.combos_per_cell,
        spec.syllables.len(),
        out.display()
    );
    Ok(())
}

/// Loads the utterances of `split` (utterance-level split seeded by the run seed).
pub fn load_split(dir: &Path, split: Split, cfg: &RunConfig) -> Result<Vec<Utterance>> {
    let manifest = read_manifest(&dir.join("manifest.jsonl"))?;
    let (train, held) = split_indices(manifest.len(), cfg.held_out, cfg.seed);
    let idx: Vec<usize> = match split {
        Split::All => (0..manifest.len()).collect(),
        Split::Train => train,
        Split::HeldOut => held,
    };
    if idx.is_empty() {
        return Err(Error::InvalidInput(format!("{split:?} split of {} is empty", dir.display())));
    }
    idx.par_iter()
        .map(|&i| load_utterance(dir, &manifest[i]))
        .collect()
}

pub fn cmd_train(cfg: &RunConfig, corpus: &Path, out: &Path) -> std::result::Result<(), CliError> {
    let utts = load_split(corpus, Split::Train, cfg)?;
    let keep = (cfg.windows_per_utterance > 0).then_some(cfg.windows_per_utterance);
    let data = training_set(&utts, cfg.frontend, cfg.gci, cfg.f0_range_hz, keep)?;
    log::info!("training on {} windows from {} utterances", data.len(), utts.len());
    let (model, report) = train(&data, &cfg.train)?;
    let meta = Metadata {
        train_config: Some(cfg.train),
        frontend: Some(cfg.frontend),
        final_loss: Some(report.final_loss),
    };
    checkpoint::save(out, &model, &meta)?;
    let curve_path = loss_curve_path(out);
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in report.loss_curve.iter().enumerate() {
        let _ = writeln!(csv, "{},{l}", i + 1);
    }
    std::fs::write(&curve_path, csv).map_err(io_err(&curve_path))?;
    println!(
        "train: {} windows, {} epochs, loss {:.6} -> {:.6}; wrote {}",
        data.len(),
        report.loss_curve.len(),
        report.initial_loss,
        report.final_loss,
        out.display()
    );
    Ok(())
}

pub fn loss_curve_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

enum Source {
    File(PathBuf, Option<PathBuf>),
    Corpus(PathBuf, Split),
}

/// An analysis target: id, speech and whatever truth is known.
struct Target {
    id: String,
    speech: Waveform,
    truth: GroundTruth,
}

fn load_targets(source: &Source, cfg: &RunConfig) -> Result<Vec<Target>> {
    match source {
        Source::File(wav, truth) => {
            let (speech, truth) = load_external(wav, truth.as_deref())?;
            let id = wav
                .file_stem()
                .map_or("input".into(), |s| s.to_string_lossy().into_owned());
            Ok(vec![Target { id, speech, truth }])
        }
        Source::Corpus(dir, split) => Ok(load_split(dir, *split, cfg)?
            .into_iter()
            .map(|u| Target {
                id: u.spec.id,
                speech: u.speech,
                truth: u.truth,
            })
            .collect()),
    }
}

/// Model, grid and options resolved from the analysis flags.
struct Analyzer {
    model: Option<MlpModel>,
    grid: LfGrid,
    opts: EstimateOptions,
    oracle: bool,
    method: MethodKind,
    gci: GciMode,
}

impl Analyzer {
    fn new(cfg: &RunConfig, args: &AnalysisArgs) -> std::result::Result<Self, CliError> {
        let mut frontend = cfg.frontend;
        let model = match (&args.model, cfg.method, args.oracle) {
            (Some(path), MethodKind::Dnn, false) => {
                let (m, meta) = checkpoint::load(path)?;
                match (meta.frontend, args.frontend) {
                    (Some(trained), Some(asked)) if trained != asked => {
                        return Err(Error::InvalidInput(format!(
                            "{} was trained on {trained:?} input, not {asked:?}",
                            path.display()
                        ))
                        .into())
                    }
                    (Some(trained), None) => frontend = trained,
                    _ => {}
                }
                Some(m)
            }
            (None, MethodKind::Dnn, false) => {
                return Err(CliError::Usage("--method dnn needs --model or --oracle".into()))
            }
            _ => None,
        };
        let g = cfg.grid;
        Ok(Self {
            model,
            grid: LfGrid::uniform(&LfRanges::default(), g.te, g.tp_over_te, g.ta),
            opts: EstimateOptions {
                frontend,
                orders: cfg.orders,
                f0_range_hz: cfg.f0_range_hz,
            },
            oracle: args.oracle,
            method: cfg.method,
            gci: cfg.gci,
        })
    }

    fn method(&self) -> Method<'_> {
        match (self.method, &self.model) {
            (MethodKind::Grid, _) => Method::Grid(&self.grid),
            (MethodKind::Dnn, Some(m)) if !self.oracle => Method::Dnn(m),
            _ => Method::Oracle,
        }
    }

    fn label(&self) -> String {
        match self.method() {
            Method::Grid(_) => "GRID-ABS".into(),
            Method::Dnn(_) => format!("{:?}-DNN", self.opts.frontend).to_uppercase(),
            Method::Oracle => "ORACLE".into(),
        }
    }

    fn run(&self, t: &Target) -> Result<EstimationResult> {
        run_utterance(&t.speech, &t.truth, &self.method(), &self.opts, self.gci)
    }
}

/// Analyzes every target in parallel; `sink` sees each successful result.
fn analyze_all<F>(
    analyzer: &Analyzer,
    targets: &[Target],
    sink: F,
) -> (ErrorReport, Vec<UtteranceOutcome>, Option<Error>)
where
    F: Fn(&Target, &EstimationResult) -> Result<()> + Sync,
{
    let per: Vec<(ErrorAccumulator, UtteranceOutcome, Option<Error>)> = targets
        .par_iter()
        .map(|t| {
            let mut acc = ErrorAccumulator::default();
            let result = analyzer.run(t).and_then(|r| {
                acc.add_result(&r, &t.speech, &t.truth)?;
                sink(t, &r)?;
                Ok(r)
            });
            let outcome = UtteranceOutcome::new(&t.id, &result);
            let err = result.err();
            if let Some(e) = &err {
                log::warn!("{}: {e}", t.id);
            }
            (acc, outcome, err)
        })
        .collect();
    let mut total = ErrorAccumulator::default();
    let mut outcomes = Vec::new();
    let mut first_error = None;
    let mut any_ok = false;
    for (a, o, e) in per {
        total = total.merge(a);
        any_ok |= e.is_none();
        if first_error.is_none() {
            first_error = e;
        }
        outcomes.push(o);
    }
    // Only a run where nothing succeeded is a failure.
    (total.finish(), outcomes, if any_ok { None } else { first_error })
}

fn outcome_csv(outcomes: &[UtteranceOutcome]) -> String {
    let mut s = String::from("id,periods,rejected,seconds,error\n");
    for o in outcomes {
        let err = o.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(s, "{},{},{},{:.6},{err}", o.id, o.periods, o.rejected, o.seconds);
    }
    s
}

/// Full-length rendering of a resynthesis, zero outside the analyzed span.
fn full_length(result: &EstimationResult, len: usize) -> Result<Waveform> {
    let y = resynthesize(result)?;
    let mut out = Waveform::zeros(len, result.fs_hz);
    let span = result.span();
    let end = span.end.min(len);
    out.samples[span.start..end].copy_from_slice(&y.samples[..end - span.start]);
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn cmd_estimate(
    cfg: &RunConfig,
    args: &AnalysisArgs,
    source: &Source,
    out: &Path,
    resynth: bool,
) -> std::result::Result<(), CliError> {
    let analyzer = Analyzer::new(cfg, args)?;
    let targets = load_targets(source, cfg)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let (report, outcomes, failure) = analyze_all(&analyzer, &targets, |t, r| {
        let json = serde_json::to_string(r).expect("result serializes");
        write_text(&out.join(format!("{}.json", t.id)), &json)?;
        if resynth {
            let path = out.join(format!("{}_resynth.wav", t.id));
            write_wav(&path, &full_length(r, t.speech.len())?, WavEncoding::Float32)?;
        }
        Ok(())
    });
    write_text(&out.join("utterances.csv"), &outcome_csv(&outcomes))?;
    write_text(&out.join("report.csv"), &report.csv())?;
    let table = report.table(&analyzer.label());
    write_text(&out.join("report.txt"), &table)?;
    print!("{table}");
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    println!("estimate: {} of {} utterances analyzed -> {}", outcomes.len() - failed, outcomes.len(), out.display());
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_eval(
    cfg: &RunConfig,
    args: &AnalysisArgs,
    corpus: &Path,
    split: Split,
    report_path: Option<&Path>,
) -> std::result::Result<(), CliError> {
    let analyzer = Analyzer::new(cfg, args)?;
    let targets = load_targets(&Source::Corpus(corpus.to_path_buf(), split), cfg)?;
    let (report, _, failure) = analyze_all(&analyzer, &targets, |_, _| Ok(()));
    print!("{}", report.table(&analyzer.label()));
    if let Some(p) = report_path {
        write_text(p, &report.csv())?;
    }
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_resynth(
    cfg: &RunConfig,
    args: &AnalysisArgs,
    input: &Path,
    truth: Option<&Path>,
    out: &Path,
) -> std::result::Result<(), CliError> {
    let analyzer = Analyzer::new(cfg, args)?;
    let targets = load_targets(&Source::File(input.to_path_buf(), truth.map(Path::to_path_buf)), cfg)?;
    let t = &targets[0];
    let r = analyzer.run(t)?;
    write_wav(out, &full_length(&r, t.speech.len())?, WavEncoding::Float32)?;
    println!(
        "resynth: {} periods ({} rejected) in {:.3} s -> {}",
        r.periods.len(),
        r.rejected.len(),
        r.elapsed_s,
        out.display()
    );
    Ok(())
}
