//! One binary, five subcommands: read a plate from an image, benchmark
//! pipelines over a dataset, run a simulated patrol, render synthetic
//! plates, and serve the HTTP API.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

mod service;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use platewatch_core::bench::{
    emit_summaries, load_dataset, run_bench_with_context, BenchOptions, TableFormat,
};
use platewatch_core::config::{load_scenario, AppConfig};
use platewatch_core::detection::{write_sidecar, DetectorKind};
use platewatch_core::imaging::save_png;
use platewatch_core::notify::{DeliveryStatus, NotifyQueue};
use platewatch_core::patrol::{generate_lot, run_patrol, PatrolContext, SweepPlan};
use platewatch_core::recognizer::{
    build_recognizer, normalize_plate, ImageSource, OcrKind, PipelineConfig, RoiVariant,
};
use platewatch_core::registry::{load_registry, EventStore, Registry};
use platewatch_core::synth::{degrade, render_plate, DegradeSpec, GlyphAtlas};

#[derive(Parser)]
#[command(
    name = "platewatch",
    version,
    about = "License plate toolkit: synthetic plates, dual-pipeline and model-backed \
             recognition, benchmarks, patrol simulation, and an HTTP service"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read a plate from one image file
    Recognize(RecognizeArgs),
    /// Score pipelines over a directory of stem-annotated images
    Bench(BenchArgs),
    /// Sweep a simulated lot, log events, send notifications
    Patrol(PatrolArgs),
    /// Render a synthetic plate image plus its ground-truth sidecar
    Synth(SynthArgs),
    /// Serve the recognition HTTP API
    Serve(ServeArgs),
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum BackendArg {
    Dual,
    Lmm,
}

#[derive(Copy, Clone, ValueEnum)]
enum DetectorArg {
    Oracle,
    Heuristic,
    External,
}

impl From<DetectorArg> for DetectorKind {
    fn from(v: DetectorArg) -> Self {
        match v {
            DetectorArg::Oracle => DetectorKind::Oracle,
            DetectorArg::Heuristic => DetectorKind::Heuristic,
            DetectorArg::External => DetectorKind::External,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum OcrArg {
    Baseline,
    External,
}

impl From<OcrArg> for OcrKind {
    fn from(v: OcrArg) -> Self {
        match v {
            OcrArg::Baseline => OcrKind::Baseline,
            OcrArg::External => OcrKind::External,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum VariantArg {
    Original,
    Gray,
    Binary,
}

impl From<VariantArg> for RoiVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Original => RoiVariant::Original,
            VariantArg::Gray => RoiVariant::Gray,
            VariantArg::Binary => RoiVariant::Binary,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Image file to read
    file: PathBuf,
    #[arg(long, value_enum, default_value = "dual")]
    backend: BackendArg,
    #[arg(long, value_enum, default_value = "heuristic")]
    detector: DetectorArg,
    #[arg(long, value_enum, default_value = "baseline")]
    ocr: OcrArg,
    #[arg(long, value_enum, default_value = "binary")]
    variant: VariantArg,
    /// TOML config for model endpoint and external engines
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of images whose file stems are the true plates
    #[arg(long)]
    dataset: PathBuf,
    /// Repeatable; one table row family per backend
    #[arg(long, value_enum, default_values_t = vec![BackendArg::Dual])]
    backend: Vec<BackendArg>,
    #[arg(long, value_enum, default_value = "heuristic")]
    detector: DetectorArg,
    #[arg(long, value_enum, default_value = "baseline")]
    ocr: OcrArg,
    /// Repeatable; one dual-pipeline column per variant
    #[arg(long, value_enum, default_values_t = vec![VariantArg::Binary])]
    variant: Vec<VariantArg>,
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Parallel scoring; timing columns are blanked under parallelism
    #[arg(long)]
    parallel: bool,
    /// Write the table here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PatrolArgs {
    /// Scenario TOML: lot shape, seed, sweep angles, registry, event log
    #[arg(long)]
    scenario: PathBuf,
    /// TOML config for model endpoint and external engines
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Plate text (6-7 of A-Z0-9; hyphens and case are normalized away)
    #[arg(long)]
    plate: String,
    /// Output PNG path
    #[arg(long)]
    out: PathBuf,
    /// White border around the plate, in pixels
    #[arg(long, default_value_t = 20)]
    margin: u32,
    /// Gaussian pixel noise sigma
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Rotation in degrees (|deg| <= 10)
    #[arg(long, default_value_t = 0.0)]
    rotate: f64,
    /// Box blur radius in pixels
    #[arg(long, default_value_t = 0)]
    blur: u32,
    /// Degradation seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the ground-truth sidecar next to the PNG
    #[arg(long)]
    no_sidecar: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bind address; overrides the config (use port 0 for an ephemeral port)
    #[arg(long)]
    addr: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Recognize(args) => cmd_recognize(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Patrol(args) => cmd_patrol(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Serve(args) => service::run(args.config, args.addr),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<AppConfig> {
    match path {
        Some(p) => AppConfig::load(p).with_context(|| format!("config {}", p.display())),
        None => Ok(AppConfig::default()),
    }
}

fn pipeline_for(
    backend: BackendArg,
    detector: DetectorArg,
    ocr: OcrArg,
    variant: VariantArg,
) -> PipelineConfig {
    match backend {
        BackendArg::Dual => PipelineConfig::dual(detector.into(), ocr.into(), variant.into()),
        BackendArg::Lmm => PipelineConfig::lmm(),
    }
}

fn cmd_recognize(args: RecognizeArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref())?;
    let ctx = config.build_context()?;
    let pipeline = pipeline_for(args.backend, args.detector, args.ocr, args.variant);
    let recognizer = build_recognizer(&pipeline, &ctx)?;
    let result = recognizer.recognize(&ImageSource::path(&args.file));
    match result.plate {
        Ok(plate) => {
            println!("plate: {plate}");
            if result.raw_text != plate.as_str() {
                println!("raw: {}", result.raw_text);
            }
            println!("backend: {}", result.backend);
            println!("time: {:.4} s", result.elapsed.as_secs_f64());
            println!("attempts: {}", result.attempts);
            Ok(())
        }
        Err(failure) => bail!(
            "{}: no plate ({} stage: {})",
            args.file.display(),
            failure.stage.as_str(),
            failure.reason
        ),
    }
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref())?;
    let ctx = config.build_context()?;
    let items = load_dataset(&args.dataset)?;

    let mut configs = Vec::new();
    for backend in &args.backend {
        match backend {
            BackendArg::Dual => {
                for variant in &args.variant {
                    configs.push(pipeline_for(*backend, args.detector, args.ocr, *variant));
                }
            }
            BackendArg::Lmm => configs.push(PipelineConfig::lmm()),
        }
    }

    let opts = BenchOptions {
        repeats: args.repeats,
        parallel: args.parallel,
    };
    let summaries = run_bench_with_context(&items, &configs, &opts, &ctx);

    let format = match args.format {
        FormatArg::Markdown => TableFormat::Markdown,
        FormatArg::Csv => TableFormat::Csv,
    };
    let table = emit_summaries(&summaries, format);
    match &args.out {
        Some(path) => std::fs::write(path, &table)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{table}"),
    }

    let aborted: Vec<&str> = summaries
        .iter()
        .filter_map(|s| s.aborted.as_deref())
        .collect();
    if !aborted.is_empty() {
        bail!("aborted rows: {}", aborted.join("; "));
    }
    Ok(())
}

fn cmd_patrol(args: PatrolArgs) -> anyhow::Result<()> {
    let scenario = load_scenario(&args.scenario)
        .with_context(|| format!("scenario {}", args.scenario.display()))?;
    let config = load_config(args.config.as_deref())?;
    let ctx = config.build_context()?;

    let registry = match &scenario.registry {
        Some(path) => load_registry(path)?,
        None => Registry::default(),
    };
    let lot = generate_lot(
        scenario.n_slots,
        scenario.n_occupied,
        &registry,
        scenario.n_illegal,
        scenario.seed,
    )?;
    let plan = SweepPlan::full_lot(&lot, scenario.angles.clone());
    let recognizer = build_recognizer(&scenario.pipeline, &ctx)?;
    let store = EventStore::open(&scenario.events)?;
    let first_seq = store.next_seq();
    let queue = scenario.notify.clone().map(NotifyQueue::start);

    let patrol_ctx = PatrolContext {
        registry: &registry,
        store: &store,
        notifier: queue.as_ref(),
        atlas: &ctx.atlas,
        clock_start: scenario.clock_start,
        step_secs: scenario.step_secs,
    };
    let report = run_patrol(&lot, &plan, recognizer.as_ref(), &patrol_ctx)?;

    println!("patrol report");
    println!("  legal: {}", report.legal);
    println!("  illegal: {}", report.illegal);
    println!("  unreadable: {}", report.unreadable);
    println!("  empty: {}", report.empty);
    let appended = store.next_seq() - first_seq;
    println!(
        "events: {appended} appended to {} (seq {first_seq}..{})",
        scenario.events.display(),
        store.next_seq() - 1
    );

    if let Some(queue) = queue {
        let records = queue.shutdown();
        let failed: Vec<String> = records
            .iter()
            .filter(|r| r.status != DeliveryStatus::Delivered)
            .map(|r| {
                format!(
                    "seq {}: {}",
                    r.notification.event_seq,
                    r.last_error.as_deref().unwrap_or("undelivered")
                )
            })
            .collect();
        println!(
            "notifications: {} delivered, {} failed",
            records.len() - failed.len(),
            failed.len()
        );
        if !failed.is_empty() {
            bail!("undelivered notifications: {}", failed.join("; "));
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let plate = normalize_plate(&args.plate)?;
    let atlas = GlyphAtlas::built_in();
    let (mut img, truth) = render_plate(&plate, &atlas, args.margin)?;
    if args.noise != 0.0 || args.rotate != 0.0 || args.blur != 0 {
        let spec = DegradeSpec::new(args.noise, args.rotate, args.blur, args.seed)?;
        img = degrade(&img, &spec);
    }
    save_png(&img, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let rect = truth.rect();
    println!(
        "wrote {} ({}x{}), plate {plate} at {},{} {}x{}",
        args.out.display(),
        img.width(),
        img.height(),
        rect.x,
        rect.y,
        rect.w,
        rect.h
    );
    if !args.no_sidecar {
        write_sidecar(&args.out, &rect)?;
    }
    Ok(())
}
