//! Command-line front end: run experiments, recompute summaries from trace
//! files, print the length-scale lower-bound table and run region
//! identification on a CSV point cloud.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use mglbo_core::harness::{self, ExperimentConfig};
use mglbo_core::{identify_regions, length_scale_lower_bound, Dataset, LmriConfig};

#[derive(Parser)]
#[command(name = "mglbo", version, about = "Bayesian optimization experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment matrix and write CSV artifacts.
    Run(RunArgs),
    /// Recompute per-cell summaries from previously written trace files.
    Summarize(SummarizeArgs),
    /// Print the length-scale lower bound per sample count.
    LowerBound(LowerBoundArgs),
    /// Identify local minimum regions in a CSV point cloud.
    Regions(RegionsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per cell (overrides the config).
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; 0 picks automatically (overrides the config).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Experiment directory containing the per-cell trace files.
    #[arg(long)]
    traces: PathBuf,
    /// Where to write the summaries (defaults to the trace directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
}

#[derive(Args)]
struct LowerBoundArgs {
    /// Search-space dimension.
    #[arg(long)]
    dim: usize,
    /// Minimum correlation in (0, 1).
    #[arg(long, default_value_t = 0.2)]
    min_correlation: f64,
    /// Largest sample count to tabulate.
    #[arg(long, default_value_t = 50)]
    max_n: usize,
}

#[derive(Args)]
struct RegionsArgs {
    /// CSV with header `x1,..,xd,y`; coordinates must lie in [0, 1].
    #[arg(long)]
    input: PathBuf,
    /// Convergence tolerance.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Minimum clearance outside samples must keep from a candidate ball.
    #[arg(long, default_value_t = 0.05)]
    ignorance: f64,
    /// Advance to the next neighborhood size on rejection instead of
    /// abandoning the seed.
    #[arg(long)]
    continue_on_reject: bool,
    /// Use the alternate printed stationary-point convention.
    #[arg(long)]
    paper_literal: bool,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Summarize(args) => summarize(args),
        Command::LowerBound(args) => lower_bound(args),
        Command::Regions(args) => regions(args),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env_overrides()?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.repetitions = reps;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }

    let outcome = harness::run_experiment(&cfg)?;
    println!(
        "wrote {} trace files and {} summaries under {}",
        outcome.trace_files.len(),
        outcome.summary_files.len(),
        cfg.output_dir.display()
    );
    println!("manifest: {}", outcome.manifest_file.display());
    if outcome.failures > 0 {
        eprintln!("{} run(s) failed; see the manifest", outcome.failures);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(args: SummarizeArgs) -> Result<ExitCode> {
    let out = args.out.unwrap_or_else(|| args.traces.clone());
    let written = harness::summarize_traces(&args.traces, &out, args.resamples)?;
    for path in &written {
        println!("{}", path.display());
    }
    if written.is_empty() {
        bail!("no trace cells found under {}", args.traces.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn lower_bound(args: LowerBoundArgs) -> Result<ExitCode> {
    if args.dim < 1 || args.max_n < 1 {
        bail!("dim and max-n must be positive");
    }
    println!("n,lower_bound");
    for n in 1..=args.max_n {
        let l = length_scale_lower_bound(args.dim, n, args.min_correlation)?;
        println!("{n},{}", harness::fmt_f64(l));
    }
    Ok(ExitCode::SUCCESS)
}

fn regions(args: RegionsArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty input")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols.last() != Some(&"y") {
        bail!("expected header `x1,..,xd,y`, got `{header}`");
    }
    let dim = cols.len() - 1;

    let mut data = Dataset::new(dim);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            bail!("row {} has {} fields, expected {}", i + 2, fields.len(), dim + 1);
        }
        let parse = |s: &str| -> Result<f64> { s.trim().parse().with_context(|| format!("row {}", i + 2)) };
        let point = DVector::from_fn(dim, |j, _| parse(fields[j]).unwrap_or(f64::NAN));
        let y = parse(fields[dim])?;
        data.push(point, y).with_context(|| format!("row {}", i + 2))?;
    }

    let cfg = LmriConfig {
        epsilon: args.epsilon,
        ignorance_threshold: args.ignorance,
        continue_on_reject: args.continue_on_reject,
        paper_literal_minimizer: args.paper_literal,
        ..LmriConfig::default()
    };
    let found = identify_regions(&data, &cfg);

    let xs: Vec<String> = (1..=dim).map(|i| format!("center_x{i}")).collect();
    let ms: Vec<String> = (1..=dim).map(|i| format!("min_x{i}")).collect();
    println!("{},radius,{},predicted_min_value,members", xs.join(","), ms.join(","));
    for r in &found {
        let c: Vec<String> = r.center.iter().map(|&v| harness::fmt_f64(v)).collect();
        let m: Vec<String> = r.predicted_min_point.iter().map(|&v| harness::fmt_f64(v)).collect();
        println!(
            "{},{},{},{},{}",
            c.join(","),
            harness::fmt_f64(r.radius),
            m.join(","),
            harness::fmt_f64(r.predicted_min_value),
            r.member_indices.len()
        );
    }
    eprintln!("{} region(s) found in {} samples", found.len(), data.len());
    Ok(ExitCode::SUCCESS)
}
