//! Command-line front end: predict, synthesize, validate, parse, compare,
//! sweep, and estimate communication behavior for distributed transformer
//! training runs.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 comparison tolerance
//! failure (so `compare` can gate CI). Diagnostics go to stderr, data to
//! the selected output stream.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commscope::analytic::predict_volume;
use commscope::config::{parse_fabric_config, parse_layout_config, parse_model_config};
use commscope::oracle::validate_schedule;
use commscope::report::{
    compare, estimate_time, render, sweep, CompareOpts, Format, PredictionReport, Report, SweepVar,
};
use commscope::schedule::{build_schedule, summarize, ScheduleOpts, Zero3Granularity};
use commscope::traceio::{aggregate_trace, parse_trace_str, serialize_events, VolumeConvention};
use commscope::{ModelConfig, ParallelLayout, ZeroStage};

#[derive(Debug)]
enum CliError {
    Core(commscope::Error),
    Io { path: PathBuf, source: std::io::Error },
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(msg) => f.write_str(msg),
        }
    }
}

impl From<commscope::Error> for CliError {
    fn from(e: commscope::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "commscope",
    about = "Model and analyze collective communication in distributed transformer training",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict per-iteration communication volumes for a model and layout
    Predict(PredictArgs),
    /// Emit the synthesized per-iteration event schedule as a trace log
    Schedule(ScheduleCmdArgs),
    /// Check the analytic volumes against step-wise collective simulation
    Validate(ValidateArgs),
    /// Parse a trace log and report per-kind totals and message sizes
    Parse(ParseArgs),
    /// Compare a prediction against an observed trace (exit 2 on drift)
    Compare(CompareArgs),
    /// Evaluate predictions across a swept variable
    Sweep(SweepArgs),
    /// Estimate communication time under an alpha-beta fabric
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model config file (flat key = value)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Vocabulary size
    #[arg(long)]
    vocab: Option<u64>,
    /// Hidden dimension
    #[arg(long)]
    hidden: Option<u64>,
    /// Transformer layer count
    #[arg(long)]
    layers: Option<u64>,
    /// Sequence length
    #[arg(long)]
    seq: Option<u64>,
    /// Micro-batch size
    #[arg(long)]
    mbs: Option<u64>,
    /// Attention head count (default 1)
    #[arg(long)]
    heads: Option<u64>,
    /// MLP expansion factor (default 4)
    #[arg(long)]
    expansion: Option<u64>,
    /// Payload element width in bytes (default 2)
    #[arg(long)]
    elem_bytes: Option<u32>,
    /// Tie embedding and unembedding parameters
    #[arg(long)]
    tied: bool,
}

impl ModelArgs {
    fn resolve(&self) -> CliResult<ModelConfig> {
        let inline_used = self.vocab.is_some()
            || self.hidden.is_some()
            || self.layers.is_some()
            || self.seq.is_some()
            || self.mbs.is_some()
            || self.heads.is_some()
            || self.expansion.is_some()
            || self.elem_bytes.is_some()
            || self.tied;
        if let Some(path) = &self.model {
            if inline_used {
                return Err(CliError::Usage(
                    "--model conflicts with inline model flags (--vocab, --hidden, ...)".into(),
                ));
            }
            return Ok(parse_model_config(&read_file(path)?)?);
        }
        let require = |name: &str, v: Option<u64>| {
            v.ok_or_else(|| CliError::Usage(format!("missing --model or --{name}")))
        };
        let mut cfg = ModelConfig::new(
            require("vocab", self.vocab)?,
            require("hidden", self.hidden)?,
            require("layers", self.layers)?,
            require("seq", self.seq)?,
            require("mbs", self.mbs)?,
        );
        if let Some(heads) = self.heads {
            cfg.attn_heads = heads;
        }
        if let Some(x) = self.expansion {
            cfg.mlp_expansion = x;
        }
        if let Some(eb) = self.elem_bytes {
            cfg.elem_bytes = eb;
        }
        cfg.tied_embeddings = self.tied;
        Ok(cfg.validated()?)
    }
}

#[derive(Args)]
struct LayoutArgs {
    /// Layout config file (flat key = value)
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Total device count
    #[arg(long)]
    devices: Option<u64>,
    /// Tensor-parallel degree (default 1)
    #[arg(long)]
    tp: Option<u64>,
    /// Pipeline-parallel degree (default 1)
    #[arg(long)]
    pp: Option<u64>,
    /// ZeRO stage: none, 1, 2 or 3 (default none)
    #[arg(long)]
    zero: Option<String>,
    /// Micro-batches per iteration (default 1)
    #[arg(long)]
    microbatches: Option<u64>,
}

impl LayoutArgs {
    fn resolve(&self) -> CliResult<ParallelLayout> {
        let inline_used = self.devices.is_some()
            || self.tp.is_some()
            || self.pp.is_some()
            || self.zero.is_some()
            || self.microbatches.is_some();
        if let Some(path) = &self.layout {
            if inline_used {
                return Err(CliError::Usage(
                    "--layout conflicts with inline layout flags (--devices, --tp, ...)".into(),
                ));
            }
            return Ok(parse_layout_config(&read_file(path)?)?);
        }
        let devices = self
            .devices
            .ok_or_else(|| CliError::Usage("missing --layout or --devices".into()))?;
        let mut layout = ParallelLayout::new(devices);
        if let Some(tp) = self.tp {
            layout.tensor = tp;
        }
        if let Some(pp) = self.pp {
            layout.pipeline = pp;
        }
        if let Some(zero) = &self.zero {
            layout.zero_stage = ZeroStage::from_token(zero).ok_or_else(|| {
                CliError::Usage(format!("--zero must be none, 1, 2 or 3 (got `{zero}`)"))
            })?;
        }
        if let Some(mb) = self.microbatches {
            layout.num_microbatches = mb;
        }
        Ok(layout.validated()?)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output format
    #[arg(long, default_value = "table")]
    format: Format,
    /// Output destination: a path, or `stdout`
    #[arg(long, default_value = "stdout")]
    out: String,
}

impl OutputArgs {
    fn write(&self, data: &str) -> CliResult<()> {
        write_out(&self.out, data)
    }

    fn write_report(&self, report: &dyn Report) -> CliResult<()> {
        self.write(&render(report, self.format))
    }
}

#[derive(Args)]
struct ScheduleOptArgs {
    /// Gradient bucket size in elements
    #[arg(long, default_value_t = 500_000_000)]
    bucket_elems: u64,
    /// Skip the start-of-training parameter broadcast
    #[arg(long)]
    no_init_broadcast: bool,
    /// Model a run without activation recomputation
    #[arg(long)]
    no_recompute: bool,
    /// ZeRO-3 forward allgather granularity: per-layer or per-tensor
    #[arg(long, default_value = "per-layer")]
    granularity: Zero3Granularity,
}

impl ScheduleOptArgs {
    fn opts(&self) -> ScheduleOpts {
        ScheduleOpts {
            include_init_broadcast: !self.no_init_broadcast,
            recompute: !self.no_recompute,
            bucket_elems: self.bucket_elems,
            zero3_granularity: self.granularity,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Model a run without activation recomputation
    #[arg(long)]
    no_recompute: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScheduleCmdArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    opts: ScheduleOptArgs,
    /// Iteration number stamped on every record
    #[arg(long, default_value_t = 0)]
    iteration: u64,
    /// Output destination: a path, or `stdout`
    #[arg(long, default_value = "stdout")]
    out: String,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    opts: ScheduleOptArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ParseArgs {
    /// Trace file to parse, or `-` for stdin
    #[arg(long)]
    trace: String,
    /// Keep only records from this iteration
    #[arg(long)]
    iteration: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Trace file with the observed run, or `-` for stdin
    #[arg(long)]
    trace: String,
    /// Keep only records from this iteration
    #[arg(long)]
    iteration: Option<u64>,
    /// Relative tolerance on observed/predicted ratios
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    /// What the trace's bytes field records: logical payload or wire volume
    #[arg(long, default_value = "logical")]
    trace_volume_convention: VolumeConvention,
    /// Model a run without activation recomputation
    #[arg(long)]
    no_recompute: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Variable to sweep: seq, devices, tp, pp, or zero
    #[arg(long)]
    var: SweepVar,
    /// Comma-separated values for the swept variable
    #[arg(long)]
    values: String,
    /// Model a run without activation recomputation
    #[arg(long)]
    no_recompute: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Fabric config file (alpha/beta parameters)
    #[arg(long)]
    fabric: PathBuf,
    /// Estimate from an observed trace instead of a synthesized schedule
    #[arg(long)]
    trace: Option<String>,
    /// Keep only records from this iteration
    #[arg(long)]
    iteration: Option<u64>,
    /// Compute time per iteration, for a communication-fraction figure
    #[arg(long)]
    compute_us: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    opts: ScheduleOptArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_trace_input(spec: &str) -> CliResult<String> {
    if spec == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdin>"),
                source,
            })?;
        Ok(buf)
    } else {
        read_file(Path::new(spec))
    }
}

fn write_out(out: &str, data: &str) -> CliResult<()> {
    if out == "stdout" {
        print!("{data}");
        Ok(())
    } else {
        fs::write(out, data).map_err(|source| CliError::Io {
            path: PathBuf::from(out),
            source,
        })
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Predict(args) => {
            let cfg = args.model.resolve()?;
            let layout = args.layout.resolve()?;
            let prediction = predict_volume(&cfg, &layout, !args.no_recompute)?;
            let report = PredictionReport {
                prediction,
                elem_bytes: cfg.elem_bytes,
            };
            args.output.write_report(&report)?;
            Ok(0)
        }
        Command::Schedule(args) => {
            let cfg = args.model.resolve()?;
            let layout = args.layout.resolve()?;
            let events = build_schedule(&cfg, &layout, &args.opts.opts())?;
            let text = serialize_events(&events, args.iteration, cfg.elem_bytes);
            write_out(&args.out, &text)?;
            Ok(0)
        }
        Command::Validate(args) => {
            let cfg = args.model.resolve()?;
            let layout = args.layout.resolve()?;
            let events = build_schedule(&cfg, &layout, &args.opts.opts())?;
            let report = validate_schedule(&events)?;
            args.output.write_report(&report)?;
            Ok(0)
        }
        Command::Parse(args) => {
            let records = parse_trace_str(&read_trace_input(&args.trace)?)?;
            let summary = aggregate_trace(&records, args.iteration);
            args.output.write_report(&summary)?;
            Ok(0)
        }
        Command::Compare(args) => {
            let cfg = args.model.resolve()?;
            let layout = args.layout.resolve()?;
            let predicted = predict_volume(&cfg, &layout, !args.no_recompute)?;
            let records = parse_trace_str(&read_trace_input(&args.trace)?)?;
            let observed = aggregate_trace(&records, args.iteration);
            let report = compare(
                &predicted,
                &observed,
                &CompareOpts {
                    tolerance: args.tolerance,
                    convention: args.trace_volume_convention,
                    elem_bytes: cfg.elem_bytes,
                },
            );
            args.output.write_report(&report)?;
            Ok(if report.passed { 0 } else { 2 })
        }
        Command::Sweep(args) => {
            let cfg = args.model.resolve()?;
            let layout = args.layout.resolve()?;
            let values: Vec<String> = args
                .values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(CliError::Usage("--values must list at least one value".into()));
            }
            let report = sweep(&cfg, &layout, args.var, &values, !args.no_recompute);
            args.output.write_report(&report)?;
            Ok(0)
        }
        Command::Estimate(args) => {
            let fabric = parse_fabric_config(&read_file(&args.fabric)?)?;
            let summary = match &args.trace {
                Some(trace) => {
                    let records = parse_trace_str(&read_trace_input(trace)?)?;
                    aggregate_trace(&records, args.iteration)
                }
                None => {
                    let cfg = args.model.resolve()?;
                    let layout = args.layout.resolve()?;
                    let events = build_schedule(&cfg, &layout, &args.opts.opts())?;
                    summarize(&events, cfg.elem_bytes)
                }
            };
            let estimate = estimate_time(&summary, &fabric, args.compute_us);
            args.output.write_report(&estimate)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
