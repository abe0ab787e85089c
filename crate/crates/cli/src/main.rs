mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use minimap_oracle::dataset::{Dataset, DiskFrames, Split};
use minimap_oracle::eval::{self, AccuracyReport};
use minimap_oracle::fusion::EventVocab;
use minimap_oracle::model::{check_random_sample_gradients, ModelConfig};
use minimap_oracle::synth::{generate_dataset_with, split_counts, FrameFormat, GenerateOptions};
use minimap_oracle::train::{self, Checkpoint, RoundSet};
use minimap_oracle::vision::extract::extract_to_dir;
use minimap_oracle::vision::Extractor;
use serde::Serialize;

use config::{Layers, RUN_CONFIG_FILE};

/// Round outcome prediction from minimap video.
#[derive(Parser)]
#[command(name = "minimap-oracle", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all logical cores).
    #[arg(long, global = true, env = "MINIMAP_ORACLE_THREADS")]
    threads: Option<usize>,
    /// TOML file with `seed`, `preset` and `[sim]`, `[split]`, `[vision]`, `[model]`, `[train]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate rounds and write a dataset directory.
    Synth(SynthArgs),
    /// Recover rounds and events from frames alone.
    Extract(ExtractArgs),
    /// Train Model A (`--events off`) or Model B (`--events on`).
    Train(TrainArgs),
    /// Per-second predictions for one round.
    Predict(PredictArgs),
    /// Accuracy report over a sample of held-out rounds.
    Eval(EvalArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck(GradcheckArgs),
    /// Draw curves.svg from a curve.csv.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    rounds: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Png,
    Raw,
    None,
}

#[derive(Args)]
struct ExtractArgs {
    /// A dataset directory or a directory of frame folders / raw streams.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed of the train/val/test assignment.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    events: OnOff,
    /// Model preset: paper | desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    samples_per_epoch: Option<usize>,
    /// Validate every n-th second.
    #[arg(long)]
    val_stride: Option<usize>,
    #[arg(long)]
    val_rounds: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    round: String,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint(s); two give a side-by-side comparison.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// Row names, one per model (default: "Model A" / "Model B" by event use).
    #[arg(long)]
    name: Vec<String>,
    #[arg(long)]
    data: PathBuf,
    /// Rounds drawn at random from the split.
    #[arg(long, default_value_t = 100)]
    sample: usize,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Entries checked per parameter tensor (0 checks every entry).
    #[arg(long, default_value_t = 2)]
    entries: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Bad input (exit 2) or a failure while running (exit 1).
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<minimap_oracle::Error> for Failure {
    fn from(e: minimap_oracle::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: u8,
    message: String,
}

fn report_failure(kind: &str, code: u8, msg: String) -> ExitCode {
    let line = ErrorLine { error: kind, exit_code: code, message: msg };
    eprintln!("{}", serde_json::to_string(&line).expect("plain struct"));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return report_failure("usage", 2, e.kind().to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => report_failure("usage", 2, format!("{e:#}")),
        Err(Failure::Runtime(e)) => report_failure("runtime", 1, format!("{e:#}")),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().usage()?;
    }
    let layers = Layers::load(cli.config.as_deref()).usage()?;
    match cli.command {
        Command::Synth(a) => synth(&layers, cli.threads, a),
        Command::Extract(a) => extract(&layers, cli.threads, a),
        Command::Train(a) => train_cmd(&layers, cli.threads, a),
        Command::Predict(a) => predict(&layers, cli.threads, a),
        Command::Eval(a) => eval_cmd(&layers, cli.threads, a),
        Command::Gradcheck(a) => gradcheck(&layers, cli.threads, a),
        Command::Plot(a) => plot(&layers, cli.threads, a),
    }
}

fn create_dir(p: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    Ok(())
}

fn synth(layers: &Layers, threads: Option<usize>, a: SynthArgs) -> Result<(), Failure> {
    let mut rc = layers.resolve("synth", a.seed, None, threads).usage()?;
    rc.sim.validate().usage()?;
    let format = match a.format {
        FormatArg::Png => FrameFormat::Png,
        FormatArg::Raw => FrameFormat::Raw,
        FormatArg::None => FrameFormat::None,
    };
    rc.path("out", &a.out);
    rc.arg("rounds", a.rounds);
    rc.arg("format", format);
    create_dir(&a.out)?;
    let manifest = generate_dataset_with(&rc.sim, a.rounds, &a.out, GenerateOptions { split: rc.split, format })?;
    rc.write(&a.out.join(RUN_CONFIG_FILE))?;
    let (tr, va, te) = split_counts(&manifest.rounds);
    println!("wrote {} rounds ({tr} train / {va} val / {te} test) and {} events to {}", manifest.rounds.len(), manifest.n_events, a.out.display());
    Ok(())
}

fn extract(layers: &Layers, threads: Option<usize>, a: ExtractArgs) -> Result<(), Failure> {
    let mut rc = layers.resolve("extract", a.seed, None, threads).usage()?;
    rc.path("input", &a.input);
    rc.path("out", &a.out);
    if !a.input.is_dir() {
        return Err(Failure::Usage(anyhow!("input {} is not a directory", a.input.display())));
    }
    let extractor = Extractor::new(rc.sim.map.clone(), rc.sim.roster.clone(), rc.vision.clone());
    let summary = extract_to_dir(&extractor, &a.input, &a.out, rc.sim.seed, rc.split)?;
    rc.write(&a.out.join(RUN_CONFIG_FILE))?;
    println!("{}", serde_json::to_string(&summary).context("summary")?);
    Ok(())
}

fn train_cmd(layers: &Layers, threads: Option<usize>, a: TrainArgs) -> Result<(), Failure> {
    let mut rc = layers.resolve("train", a.seed, a.preset.as_deref(), threads).usage()?;
    let t = &mut rc.train;
    t.events_enabled = a.events == OnOff::On;
    if let Some(v) = a.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.lr {
        t.lr_max = v;
    }
    if let Some(v) = a.warmup_steps {
        t.warmup_steps = v;
    }
    if a.total_steps.is_some() {
        t.total_steps = a.total_steps;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if a.samples_per_epoch.is_some() {
        t.samples_per_epoch = a.samples_per_epoch;
    }
    if let Some(v) = a.val_stride {
        t.val_stride_s = v;
    }
    if a.val_rounds.is_some() {
        t.val_rounds = a.val_rounds;
    }
    rc.train.validate().usage()?;
    rc.model.validate().usage()?;
    rc.path("data", &a.data);
    rc.path("out", &a.out);

    let ds = Dataset::load(&a.data)?;
    let n_train = ds.indices(Split::Train).len();
    rc.train.schedule(n_train.max(1)).usage()?;
    create_dir(&a.out)?;
    rc.write(&a.out.join(RUN_CONFIG_FILE))?;
    let frames = DiskFrames { dataset: &ds };
    let set = RoundSet::new(&ds.rounds, &ds.events, &frames);
    let vocab = EventVocab::new(&rc.sim.roster, &rc.sim.map);
    let outcome = train::train(&set, &rc.model, &vocab, &rc.train, |r| {
        eprintln!("epoch {:>3}  train_loss {:.4}  val_accuracy {:.4}  lr {:.3e}", r.epoch, r.train_loss, r.val_accuracy, r.lr);
    })?;
    outcome.best.save(&a.out.join("model.ckpt"))?;
    train::write_history_csv(&a.out.join("history.csv"), &outcome.history)?;
    println!(
        "best epoch {} (val accuracy {:.4}) of {}{}; rejected steps {}; wrote {}",
        outcome.best.epoch,
        outcome.best.val_accuracy,
        outcome.history.len(),
        if outcome.stopped_early { ", stopped early" } else { "" },
        outcome.rejected_steps,
        a.out.join("model.ckpt").display()
    );
    Ok(())
}

fn load_checkpoint(p: &Path) -> Result<Checkpoint, Failure> {
    if !p.is_file() {
        return Err(Failure::Usage(anyhow!("checkpoint {} does not exist", p.display())));
    }
    Ok(Checkpoint::load(p)?)
}

fn predict(layers: &Layers, threads: Option<usize>, a: PredictArgs) -> Result<(), Failure> {
    let mut rc = layers.resolve("predict", None, None, threads).usage()?;
    let ck = load_checkpoint(&a.model)?;
    let ds = Dataset::load(&a.data)?;
    let idx = ds
        .rounds
        .iter()
        .position(|r| r.round_id == a.round)
        .ok_or_else(|| Failure::Usage(anyhow!("round '{}' not in {}", a.round, a.data.display())))?;
    let frames = DiskFrames { dataset: &ds };
    let set = RoundSet::new(&ds.rounds, &ds.events, &frames);
    let seconds = eval::eval_seconds(ds.rounds[idx].n_frames(), ck.weights.config.fps, 1);
    let preds = eval::predict_round(&ck.weights, &set.round(idx), ck.train.clip_mode, ck.train.events_enabled, &seconds)?;
    let mut text = String::from("t,prediction\n");
    for (t, p) in seconds.iter().zip(&preds) {
        text.push_str(&format!("{t},{}\n", serde_json::to_value(p).context("outcome")?.as_str().unwrap_or_default()));
    }
    match &a.out {
        Some(path) => {
            std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            rc.model = ck.weights.config.clone();
            rc.train = ck.train.clone();
            rc.path("model", &a.model);
            rc.path("data", &a.data);
            rc.path("out", path);
            rc.arg("round", &a.round);
            rc.write(&path.with_extension("run_config.json"))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn eval_cmd(layers: &Layers, threads: Option<usize>, a: EvalArgs) -> Result<(), Failure> {
    let mut rc = layers.resolve("eval", a.seed, None, threads).usage()?;
    if !a.name.is_empty() && a.name.len() != a.model.len() {
        return Err(Failure::Usage(anyhow!("give one --name per --model")));
    }
    if a.sample == 0 {
        return Err(Failure::Usage(anyhow!("--sample must be positive")));
    }
    let checkpoints = a.model.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>, _>>()?;
    let ds = Dataset::load(&a.data)?;
    let split: Split = a.split.into();
    let pool = ds.indices(split);
    let chosen = eval::sample_indices(&pool, a.sample, rc.sim.seed);
    let frames = DiskFrames { dataset: &ds };
    let set = RoundSet::new(&ds.rounds, &ds.events, &frames);
    let mut reports: Vec<AccuracyReport> = Vec::new();
    for (i, ck) in checkpoints.iter().enumerate() {
        let name = a.name.get(i).cloned().unwrap_or_else(|| if ck.train.events_enabled { "Model B" } else { "Model A" }.to_string());
        let preds = eval::predict_rounds(&ck.weights, &set, &chosen, ck.train.clip_mode, ck.train.events_enabled, 1)?;
        reports.push(eval::accuracy_curve(&name, &preds)?);
    }
    let refs: Vec<&AccuracyReport> = reports.iter().collect();
    eval::emit_report(&refs, &a.out)?;
    for p in &a.model {
        rc.paths.insert(format!("model.{}", rc.paths.len()), p.clone());
    }
    rc.path("data", &a.data);
    rc.path("out", &a.out);
    rc.arg("sample", a.sample);
    rc.arg("split", split);
    rc.arg("rounds", chosen.iter().map(|&i| ds.rounds[i].round_id.clone()).collect::<Vec<_>>());
    rc.write(&a.out.join(RUN_CONFIG_FILE))?;
    print!("{}", eval::report_csv(&refs));
    Ok(())
}

fn gradcheck(layers: &Layers, threads: Option<usize>, a: GradcheckArgs) -> Result<(), Failure> {
    let rc = layers.resolve("gradcheck", a.seed, a.preset.as_deref(), threads).usage()?;
    let model: &ModelConfig = &rc.model;
    model.validate().usage()?;
    let vocab = EventVocab::new(&rc.sim.roster, &rc.sim.map);
    let entries = (a.entries > 0).then_some(a.entries);
    let report = check_random_sample_gradients(model, &vocab, rc.seed.unwrap_or(0), entries)?;
    println!("max_relative_error {:.3e} over {} entries", report.max_relative_error, report.entries_checked);
    if report.max_relative_error > a.tolerance {
        return Err(Failure::Runtime(anyhow!("max relative error {:.3e} exceeds {:.0e}", report.max_relative_error, a.tolerance)));
    }
    Ok(())
}

fn plot(layers: &Layers, threads: Option<usize>, a: PlotArgs) -> Result<(), Failure> {
    let mut rc = layers.resolve("plot", None, None, threads).usage()?;
    let text = std::fs::read_to_string(&a.curve).with_context(|| format!("reading {}", a.curve.display())).usage()?;
    let series = eval::parse_curve_csv(&text)?;
    std::fs::write(&a.out, eval::render_svg(&series)).with_context(|| format!("writing {}", a.out.display()))?;
    rc.path("curve", &a.curve);
    rc.path("out", &a.out);
    rc.write(&a.out.with_extension("run_config.json"))?;
    println!("wrote {} ({} series)", a.out.display(), series.len());
    Ok(())
}
