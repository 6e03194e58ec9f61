//! Experiment harness: runs seeded repetitions of (benchmark x method)
//! cells, writes one trace CSV per run plus per-cell bootstrap summaries and
//! a manifest, and can recompute summaries from trace files alone.
//!
//! All floats are serialized with 17 significant digits so that re-runs with
//! an identical config produce byte-identical artifacts.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::benchmarks::{by_name, optimal_hyperparameters, Benchmark};
use crate::bo::{run_bo, BoConfig, BoError, IterationRecord, KernelMode, RunTrace, SearchConfig};
use crate::gp::GpError;
use crate::lengthscale::CoolDownConfig;
use crate::regions::LmriConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("malformed trace {path}: {reason}")]
    MalformedTrace { path: PathBuf, reason: String },
    #[error(transparent)]
    Gp(#[from] GpError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Experiment matrix and shared run settings. Every field has a default, so
/// an empty config file (or none at all) gives a working smoke run.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub benchmarks: Vec<String>,
    pub methods: Vec<KernelMode>,
    pub repetitions: usize,
    /// Per-cell iteration budget; `None` uses [`default_iterations`].
    pub iterations: Option<usize>,
    pub base_seed: u64,
    pub bootstrap_resamples: usize,
    pub output_dir: PathBuf,
    /// Worker threads for runs; 0 lets the pool pick.
    pub jobs: usize,
    pub initial_design_size: usize,
    pub variance_downscale: f64,
    pub detect_regions: bool,
    pub cool_down: CoolDownConfig,
    pub lmri: LmriConfig,
    pub search: SearchConfig,
    pub optimal_baseline: OptimalBaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmarks: vec!["quadratic-2d".into()],
            methods: vec![KernelMode::SeAr, KernelMode::MglAr],
            repetitions: 32,
            iterations: None,
            base_seed: 42,
            bootstrap_resamples: 1000,
            output_dir: PathBuf::from("out"),
            jobs: 0,
            initial_design_size: 3,
            variance_downscale: 100.0,
            detect_regions: true,
            cool_down: CoolDownConfig::default(),
            lmri: LmriConfig::default(),
            search: SearchConfig::default(),
            optimal_baseline: OptimalBaselineConfig::default(),
        }
    }
}

/// Sampling budget for the fixed-hyperparameter baseline.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct OptimalBaselineConfig {
    pub samples: usize,
    pub loo_subsample: usize,
}

impl Default for OptimalBaselineConfig {
    fn default() -> Self {
        Self { samples: 1000, loo_subsample: 300 }
    }
}

/// Iteration budgets used when the config does not pin one.
pub fn default_iterations(benchmark: &str) -> usize {
    match benchmark {
        "quadratic-2d" | "branin-hoo" => 60,
        "rosenbrock-2d" | "hartmann-3d" => 80,
        _ => 100,
    }
}

impl ExperimentConfig {
    /// Loads a TOML config file.
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Applies `MGLBO_*` environment overrides. Section keys are flattened as
    /// `MGLBO_<SECTION>_<KEY>`, e.g. `MGLBO_LMRI_EPSILON` or
    /// `MGLBO_COOL_DOWN_MIN_CORRELATION`.
    pub fn apply_env_overrides(&mut self) -> Result<(), HarnessError> {
        fn parse<T: std::str::FromStr>(name: &str, slot: &mut T) -> Result<(), HarnessError>
        where
            T::Err: std::fmt::Display,
        {
            if let Ok(raw) = std::env::var(name) {
                *slot = raw
                    .parse()
                    .map_err(|e| HarnessError::Config(format!("{name}={raw}: {e}")))?;
            }
            Ok(())
        }

        if let Ok(raw) = std::env::var("MGLBO_BENCHMARKS") {
            self.benchmarks = raw.split(',').map(|s| s.trim().to_string()).collect();
        }
        if let Ok(raw) = std::env::var("MGLBO_METHODS") {
            self.methods = raw
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(HarnessError::Config)?;
        }
        parse("MGLBO_REPETITIONS", &mut self.repetitions)?;
        if let Ok(raw) = std::env::var("MGLBO_ITERATIONS") {
            let v = raw
                .parse()
                .map_err(|e| HarnessError::Config(format!("MGLBO_ITERATIONS={raw}: {e}")))?;
            self.iterations = Some(v);
        }
        parse("MGLBO_BASE_SEED", &mut self.base_seed)?;
        parse("MGLBO_BOOTSTRAP_RESAMPLES", &mut self.bootstrap_resamples)?;
        parse("MGLBO_OUTPUT_DIR", &mut self.output_dir)?;
        parse("MGLBO_JOBS", &mut self.jobs)?;
        parse("MGLBO_INITIAL_DESIGN_SIZE", &mut self.initial_design_size)?;
        parse("MGLBO_VARIANCE_DOWNSCALE", &mut self.variance_downscale)?;
        parse("MGLBO_DETECT_REGIONS", &mut self.detect_regions)?;
        parse("MGLBO_COOL_DOWN_MIN_CORRELATION", &mut self.cool_down.min_correlation)?;
        parse("MGLBO_COOL_DOWN_ALPHA_RATIO_THRESHOLD", &mut self.cool_down.alpha_ratio_threshold)?;
        parse("MGLBO_COOL_DOWN_RECOMPUTE_REFERENCE", &mut self.cool_down.recompute_reference)?;
        parse("MGLBO_COOL_DOWN_INITIAL_LENGTH_SCALE", &mut self.cool_down.initial_length_scale)?;
        parse("MGLBO_COOL_DOWN_ABSOLUTE_FLOOR", &mut self.cool_down.absolute_floor)?;
        parse("MGLBO_LMRI_EPSILON", &mut self.lmri.epsilon)?;
        parse("MGLBO_LMRI_IGNORANCE_THRESHOLD", &mut self.lmri.ignorance_threshold)?;
        parse("MGLBO_LMRI_PD_TOLERANCE", &mut self.lmri.pd_tolerance)?;
        parse("MGLBO_LMRI_CONTINUE_ON_REJECT", &mut self.lmri.continue_on_reject)?;
        parse("MGLBO_LMRI_PAPER_LITERAL_MINIMIZER", &mut self.lmri.paper_literal_minimizer)?;
        parse("MGLBO_SEARCH_CANDIDATES_PER_DIM", &mut self.search.candidates_per_dim)?;
        parse("MGLBO_SEARCH_REFINE_TOP", &mut self.search.refine_top)?;
        parse("MGLBO_SEARCH_REFINE_ITERS", &mut self.search.refine_iters)?;
        parse("MGLBO_OPTIMAL_BASELINE_SAMPLES", &mut self.optimal_baseline.samples)?;
        parse("MGLBO_OPTIMAL_BASELINE_LOO_SUBSAMPLE", &mut self.optimal_baseline.loo_subsample)?;
        Ok(())
    }
}

/// One summary row: bootstrap statistics of the immediate regret at one
/// iteration of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub benchmark: String,
    pub method: String,
    pub iteration: usize,
    pub log10_median_ir: f64,
    /// Bootstrap standard deviation of the median (of the raw regrets).
    pub median_std: f64,
    pub n_runs: usize,
}

/// Paths and failure count produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub trace_files: Vec<PathBuf>,
    pub summary_files: Vec<PathBuf>,
    pub manifest_file: PathBuf,
    pub failures: usize,
}

/// Formats a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other.parse().map_err(|e| format!("bad float `{other}`: {e}")),
    }
}

/// Trace CSV header for dimension `d`: `iteration,x1..xd,y,best_so_far,
/// immediate_regret,length_scale,alpha_ratio,region_count,reduced`.
pub fn trace_header(dim: usize) -> String {
    let xs: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    format!(
        "iteration,{},y,best_so_far,immediate_regret,length_scale,alpha_ratio,region_count,reduced",
        xs.join(",")
    )
}

/// Serializes a trace to CSV text.
pub fn trace_to_csv(trace: &RunTrace) -> String {
    let mut out = String::new();
    out.push_str(&trace_header(trace.dim));
    out.push('\n');
    for r in &trace.records {
        let coords: Vec<String> = r.point.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iteration,
            coords.join(","),
            fmt_f64(r.value),
            fmt_f64(r.best_so_far),
            fmt_f64(r.immediate_regret),
            fmt_f64(r.length_scale),
            fmt_f64(r.alpha_ratio),
            r.region_count,
            r.reduced,
        ));
    }
    out
}

/// Parses a trace CSV produced by [`trace_to_csv`].
pub fn trace_from_csv(path: &Path, text: &str) -> Result<RunTrace, HarnessError> {
    let malformed = |reason: String| HarnessError::MalformedTrace { path: path.to_path_buf(), reason };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 9 || cols[0] != "iteration" {
        return Err(malformed(format!("unexpected header `{header}`")));
    }
    let dim = cols.len() - 8;
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 8 {
            return Err(malformed(format!("row {} has {} fields", lineno + 2, fields.len())));
        }
        let err = |e: String| malformed(format!("row {}: {e}", lineno + 2));
        let iteration: usize = fields[0].parse().map_err(|e| err(format!("{e}")))?;
        let point = DVector::from_fn(dim, |i, _| parse_f64(fields[1 + i]).unwrap_or(f64::NAN));
        let value = parse_f64(fields[dim + 1]).map_err(err)?;
        let best_so_far = parse_f64(fields[dim + 2]).map_err(err)?;
        let immediate_regret = parse_f64(fields[dim + 3]).map_err(err)?;
        let length_scale = parse_f64(fields[dim + 4]).map_err(err)?;
        let alpha_ratio = parse_f64(fields[dim + 5]).map_err(err)?;
        let region_count: usize = fields[dim + 6].parse().map_err(|e| err(format!("{e}")))?;
        let reduced: bool = fields[dim + 7].parse().map_err(|e| err(format!("{e}")))?;
        records.push(IterationRecord {
            iteration,
            point,
            value,
            best_so_far,
            immediate_regret,
            length_scale,
            alpha_ratio,
            region_count,
            reduced,
        });
    }
    let (best_point, best_value) = records
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .map(|r| (r.point.clone(), r.value))
        .ok_or_else(|| malformed("no records".into()))?;
    Ok(RunTrace { dim, records, best_point, best_value })
}

/// Median of `values` and the standard deviation of the median across
/// `resamples` bootstrap resamples (with replacement, same size).
/// Deterministic per seed.
pub fn bootstrap_median_std(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    assert!(!values.is_empty());
    let median = median_of(values);
    if values.len() == 1 || resamples < 2 {
        return (median, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medians = Vec::with_capacity(resamples);
    let mut draw = vec![0.0; values.len()];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = values[rng.gen_range(0..values.len())];
        }
        medians.push(median_of(&draw));
    }
    let mean = medians.iter().sum::<f64>() / medians.len() as f64;
    let var = medians.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (medians.len() - 1) as f64;
    (median, var.sqrt())
}

fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

/// Bootstrap seed for one summary row, derived from the cell identity only so
/// that `summarize` reproduces `run` byte-for-byte.
fn summary_seed(benchmark: &str, method: &str, iteration: usize) -> u64 {
    fnv1a(&format!("{benchmark}|{method}|{iteration}"))
}

const LOG_FLOOR: f64 = 1e-16;

/// Computes summary rows from per-run traces of one cell.
pub fn summarize_cell(
    benchmark: &str,
    method: &str,
    traces: &[RunTrace],
    resamples: usize,
) -> Vec<SummaryRow> {
    let iterations = traces.iter().map(|t| t.records.iter().map(|r| r.iteration).max().unwrap_or(0)).max().unwrap_or(0);
    let mut rows = Vec::new();
    for iter in 1..=iterations {
        let regrets: Vec<f64> = traces
            .iter()
            .filter_map(|t| t.records.iter().find(|r| r.iteration == iter))
            .map(|r| r.immediate_regret)
            .collect();
        if regrets.is_empty() {
            continue;
        }
        let seed = summary_seed(benchmark, method, iter);
        let (median, std) = bootstrap_median_std(&regrets, resamples, seed);
        rows.push(SummaryRow {
            benchmark: benchmark.to_string(),
            method: method.to_string(),
            iteration: iter,
            log10_median_ir: median.max(LOG_FLOOR).log10(),
            median_std: std,
            n_runs: regrets.len(),
        });
    }
    rows
}

pub const SUMMARY_HEADER: &str = "benchmark,method,iteration,log10_median_ir,median_std,n_runs";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.benchmark,
            r.method,
            r.iteration,
            fmt_f64(r.log10_median_ir),
            fmt_f64(r.median_std),
            r.n_runs
        ));
    }
    out
}

fn cell_dir_name(benchmark: &str, method: KernelMode) -> String {
    format!("{benchmark}__{method}")
}

struct RunOutcome {
    run_index: usize,
    seed: u64,
    trace: Result<RunTrace, BoError>,
}

/// Executes the experiment matrix. Per-run failures are recorded in the
/// manifest and do not stop the experiment; `failures` counts them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    if cfg.repetitions < 1 {
        return Err(HarnessError::Config("repetitions must be at least 1".into()));
    }
    let benchmarks: Vec<Benchmark> = cfg
        .benchmarks
        .iter()
        .map(|name| by_name(name).ok_or_else(|| HarnessError::UnknownBenchmark(name.clone())))
        .collect::<Result<_, _>>()?;

    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let mut trace_files = Vec::new();
    let mut summary_files = Vec::new();
    let mut manifest = String::from("benchmark,method,run_index,seed,trace_file,status,message\n");
    let mut failures = 0usize;

    for benchmark in &benchmarks {
        // The fixed-hyperparameter baseline is estimated once per benchmark
        // from its own deterministic sample.
        let fixed_hyper = if cfg.methods.contains(&KernelMode::SeFixed) {
            Some(optimal_hyperparameters(
                benchmark,
                cfg.optimal_baseline.samples,
                cfg.base_seed ^ fnv1a(&benchmark.name),
                cfg.optimal_baseline.loo_subsample,
                cfg.cool_down.min_correlation,
            )?)
        } else {
            None
        };

        for &method in &cfg.methods {
            let cell = cell_dir_name(&benchmark.name, method);
            let dir = cfg.output_dir.join(&cell);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let iterations = cfg.iterations.unwrap_or_else(|| default_iterations(&benchmark.name));

            let run_cfgs: Vec<(usize, BoConfig)> = (0..cfg.repetitions)
                .map(|idx| {
                    let mut run = BoConfig::new(method, iterations, cfg.base_seed + idx as u64);
                    run.initial_design_size = cfg.initial_design_size;
                    run.cool_down = cfg.cool_down.clone();
                    run.lmri = cfg.lmri.clone();
                    run.variance_downscale = cfg.variance_downscale;
                    run.search = cfg.search.clone();
                    run.detect_regions = cfg.detect_regions;
                    run.known_optimum = benchmark.known_optimum_value;
                    run.fixed_hyper = fixed_hyper.clone();
                    (idx, run)
                })
                .collect();

            let mut outcomes: Vec<RunOutcome> = pool.install(|| {
                use rayon::prelude::*;
                run_cfgs
                    .par_iter()
                    .map(|(idx, run_cfg)| RunOutcome {
                        run_index: *idx,
                        seed: run_cfg.seed,
                        trace: run_bo(&benchmark.unit_objective(), benchmark.dim, run_cfg),
                    })
                    .collect()
            });
            outcomes.sort_by_key(|o| o.run_index);

            let mut cell_traces = Vec::new();
            for outcome in outcomes {
                let file = dir.join(format!("trace_{:03}.csv", outcome.run_index));
                match outcome.trace {
                    Ok(trace) => {
                        write_atomic(&file, &trace_to_csv(&trace))?;
                        manifest.push_str(&format!(
                            "{},{},{},{},{},ok,\n",
                            benchmark.name,
                            method,
                            outcome.run_index,
                            outcome.seed,
                            file.display()
                        ));
                        trace_files.push(file);
                        cell_traces.push(trace);
                    }
                    Err(e) => {
                        failures += 1;
                        let msg = e.to_string().replace([',', '\n'], ";");
                        manifest.push_str(&format!(
                            "{},{},{},{},,error,{}\n",
                            benchmark.name, method, outcome.run_index, outcome.seed, msg
                        ));
                    }
                }
            }

            if !cell_traces.is_empty() {
                let rows = summarize_cell(&benchmark.name, method.as_str(), &cell_traces, cfg.bootstrap_resamples);
                let file = dir.join("summary.csv");
                write_atomic(&file, &summary_to_csv(&rows))?;
                summary_files.push(file);
            }
        }
    }

    let manifest_file = cfg.output_dir.join("manifest.csv");
    write_atomic(&manifest_file, &manifest)?;
    Ok(ExperimentOutcome { trace_files, summary_files, manifest_file, failures })
}

fn write_atomic(path: &Path, content: &str) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(content.as_bytes()).map_err(io_err(path))?;
    Ok(())
}

/// Recomputes the per-cell summaries from the trace files under
/// `experiment_dir` (written by [`run_experiment`]); summaries land in
/// `output_dir` under the same cell layout. Returns the summary paths.
pub fn summarize_traces(
    experiment_dir: &Path,
    output_dir: &Path,
    resamples: usize,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut cells: Vec<PathBuf> = fs::read_dir(experiment_dir)
        .map_err(io_err(experiment_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().contains("__")))
        .collect();
    cells.sort();

    let mut written = Vec::new();
    for cell in cells {
        let name = cell.file_name().expect("filtered").to_string_lossy().to_string();
        let (benchmark, method) = name
            .split_once("__")
            .ok_or_else(|| HarnessError::Config(format!("bad cell dir {name}")))?;
        let mut trace_paths: Vec<PathBuf> = fs::read_dir(&cell)
            .map_err(io_err(&cell))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("trace_"))
            })
            .collect();
        trace_paths.sort();
        let mut traces = Vec::new();
        for p in trace_paths {
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            traces.push(trace_from_csv(&p, &text)?);
        }
        if traces.is_empty() {
            continue;
        }
        let rows = summarize_cell(benchmark, method, &traces, resamples);
        let out_cell = output_dir.join(&name);
        fs::create_dir_all(&out_cell).map_err(io_err(&out_cell))?;
        let file = out_cell.join("summary.csv");
        write_atomic(&file, &summary_to_csv(&rows))?;
        written.push(file);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -1.5, 1.0 / 3.0, 1e-300, 2.2250738585072014e-308, 12345.6789e37] {
            let s = fmt_f64(v);
            let back: f64 = parse_f64(&s).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert!(parse_f64("NaN").unwrap().is_nan());
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        assert_eq!(bootstrap_median_std(&[3.0, 3.0, 3.0], 100, 1), (3.0, 0.0));
        assert_eq!(bootstrap_median_std(&[7.5], 100, 1), (7.5, 0.0));
    }

    #[test]
    fn bootstrap_matches_independent_estimate() {
        // Second independent implementation: different resampling loop order
        // and a different seed; estimates must land within 20%.
        let values: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let (median, std) = bootstrap_median_std(&values, 1000, 11);
        assert_eq!(median, 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut medians = Vec::new();
        for _ in 0..2000 {
            let draw: Vec<f64> = (0..values.len()).map(|_| values[rng.gen_range(0..values.len())]).collect();
            medians.push(median_of(&draw));
        }
        let mean = medians.iter().sum::<f64>() / medians.len() as f64;
        let var = medians.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (medians.len() - 1) as f64;
        let reference = var.sqrt();
        assert!(
            (std - reference).abs() <= 0.2 * reference,
            "bootstrap std {std} vs independent {reference}"
        );
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_of(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn trace_csv_round_trip() {
        let cfg = crate::bo::BoConfig::new(KernelMode::SeAr, 3, 5);
        let trace = crate::bo::run_bo(&|x| (x[0] - 0.4).powi(2), 1, &cfg).unwrap();
        let csv = trace_to_csv(&trace);
        let back = trace_from_csv(Path::new("test"), &csv).unwrap();
        assert_eq!(trace.records.len(), back.records.len());
        for (a, b) in trace.records.iter().zip(&back.records) {
            assert_eq!(a.iteration, b.iteration);
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.length_scale.to_bits(), b.length_scale.to_bits());
            assert_eq!(a.alpha_ratio.is_nan(), b.alpha_ratio.is_nan());
            assert_eq!(a.reduced, b.reduced);
        }
    }

    #[test]
    fn header_shape() {
        assert_eq!(
            trace_header(2),
            "iteration,x1,x2,y,best_so_far,immediate_regret,length_scale,alpha_ratio,region_count,reduced"
        );
    }

    #[test]
    fn env_overrides_apply() {
        let mut cfg = ExperimentConfig::default();
        std::env::set_var("MGLBO_REPETITIONS", "5");
        std::env::set_var("MGLBO_LMRI_EPSILON", "1e-6");
        std::env::set_var("MGLBO_METHODS", "se_ar");
        cfg.apply_env_overrides().unwrap();
        std::env::remove_var("MGLBO_REPETITIONS");
        std::env::remove_var("MGLBO_LMRI_EPSILON");
        std::env::remove_var("MGLBO_METHODS");
        assert_eq!(cfg.repetitions, 5);
        assert_relative_eq!(cfg.lmri.epsilon, 1e-6);
        assert_eq!(cfg.methods, vec![KernelMode::SeAr]);
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            benchmarks = ["branin-hoo"]
            methods = ["se_loocv", "mgl_ar"]
            repetitions = 4
            iterations = 12

            [cool_down]
            min_correlation = 0.25

            [lmri]
            epsilon = 1e-8
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.benchmarks, vec!["branin-hoo"]);
        assert_eq!(cfg.methods, vec![KernelMode::SeLoocv, KernelMode::MglAr]);
        assert_eq!(cfg.iterations, Some(12));
        assert_relative_eq!(cfg.cool_down.min_correlation, 0.25);
        assert_relative_eq!(cfg.lmri.epsilon, 1e-8);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.bootstrap_resamples, 1000);
    }

    #[test]
    fn small_experiment_structure() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            benchmarks: vec!["quadratic-2d".into()],
            methods: vec![KernelMode::SeAr],
            repetitions: 1,
            iterations: Some(2),
            output_dir: tmp.path().to_path_buf(),
            jobs: 1,
            ..ExperimentConfig::default()
        };
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.failures, 0);
        assert_eq!(outcome.trace_files.len(), 1);
        let text = fs::read_to_string(&outcome.trace_files[0]).unwrap();
        // Header + initial design + iterations.
        assert_eq!(text.lines().count(), 1 + 3 + 2);
        let summary = fs::read_to_string(&outcome.summary_files[0]).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2);
        let manifest = fs::read_to_string(&outcome.manifest_file).unwrap();
        assert_eq!(manifest.lines().count(), 1 + 1);
    }

    #[test]
    fn summarize_matches_run_output() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            benchmarks: vec!["quadratic-2d".into()],
            methods: vec![KernelMode::SeAr],
            repetitions: 3,
            iterations: Some(3),
            output_dir: tmp.path().join("run"),
            jobs: 1,
            ..ExperimentConfig::default()
        };
        let outcome = run_experiment(&cfg).unwrap();
        let recomputed = summarize_traces(&cfg.output_dir, &tmp.path().join("re"), cfg.bootstrap_resamples).unwrap();
        assert_eq!(recomputed.len(), 1);
        let a = fs::read_to_string(&outcome.summary_files[0]).unwrap();
        let b = fs::read_to_string(&recomputed[0]).unwrap();
        assert_eq!(a, b);
    }
}
