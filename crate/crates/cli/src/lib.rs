//! Command-line front end: run scenarios, solve region selection on attention
//! dumps, and render heatmaps.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 1    | malformed input, bad flag, or invalid configuration  |
//! | 2    | I/O failure                                          |
//! | 3    | `--exact` instance exceeds the enumeration bound     |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use maskdiff::formats::{
    encode_pgm, heatmap, metrics_rows, parse_amap, parse_scen, render_mask, render_metrics,
    render_regions, render_scen, render_state, render_verdicts, RegionBlock, Solver,
};
use maskdiff::harness::{run_pipeline, PipelineConfig};
use maskdiff::{
    objective_exact, objective_surrogate, smooth_tokens, solve_regions_approx, solve_regions_exact,
    top_fraction_score, AttentionKind, GaussianKernel, GaussianKernelSpec, RegionSelectionConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_TOO_LARGE: i32 = 3;

/// Fraction of pixels averaged by the printed strength score.
const SCORE_FRACTION: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Input {
        context: String,
        source: maskdiff::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input {
                source: maskdiff::Error::TooLarge(_),
                ..
            } => EXIT_TOO_LARGE,
            CliError::Input { .. } | CliError::Usage(_) => EXIT_INPUT,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn input(context: impl Into<String>) -> impl FnOnce(maskdiff::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Input { context, source }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "maskdiff", version, about = "Adaptive cross-attention masking toolkit")]
#[command(after_help = "Exit codes: 0 ok, 1 malformed input, 2 I/O failure, 3 exact solve out of bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file (or every *.scen file in a directory) through the pipeline.
    Simulate(SimulateArgs),
    /// Select per-token regions on a PROBS attention dump.
    SelectRegions(SelectArgs),
    /// Render one token of an attention dump as a PGM heatmap.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SmoothingArgs {
    /// Gaussian smoothing radius in pixels.
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    /// Gaussian smoothing standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
}

impl SmoothingArgs {
    fn spec(&self) -> GaussianKernelSpec<f64> {
        GaussianKernelSpec {
            radius: self.radius,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    /// Overlap penalty weight.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Eligibility threshold as a fraction of each token's maximum.
    #[arg(long, default_value_t = 0.5)]
    pub threshold_ratio: f64,
    /// Keep at most this many eligible pixels per token.
    #[arg(long)]
    pub top_k: Option<usize>,
}

impl RegionArgs {
    fn config(&self) -> RegionSelectionConfig<f64> {
        RegionSelectionConfig {
            lambda: self.lambda,
            threshold_ratio: self.threshold_ratio,
            top_k: self.top_k,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file, or a directory of *.scen files.
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Apply adaptive masks (default).
    #[arg(long, conflicts_with = "unmasked")]
    pub masked: bool,
    /// Run the baseline without masks.
    #[arg(long)]
    pub unmasked: bool,
    #[command(flatten)]
    pub regions: RegionArgs,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    /// Mask weight added to selected (pixel, token) logits.
    #[arg(long, default_value_t = 5.0)]
    pub w0: f64,
    /// Momentum weight of the carried map.
    #[arg(long, default_value_t = 0.03)]
    pub alpha: f64,
    /// Momentum weight of the current map.
    #[arg(long, default_value_t = 0.99)]
    pub beta: f64,
    /// Square grid sides that receive masks.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize])]
    pub masked_resolutions: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// AMAP file of kind PROBS.
    pub amap: PathBuf,
    #[command(flatten)]
    pub regions: RegionArgs,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    /// Also run the exhaustive solver.
    #[arg(long)]
    pub exact: bool,
    /// Token columns to select regions for (default: all).
    #[arg(long, value_delimiter = ',')]
    pub tokens: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// AMAP file of any kind.
    pub amap: PathBuf,
    /// Token column to render.
    #[arg(long)]
    pub token: usize,
    /// Output PGM path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command, writing its report to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write) -> CliResult<()> {
    let text = match cli.command {
        Command::Simulate(args) => simulate(&args)?,
        Command::SelectRegions(args) => select_regions(&args)?,
        Command::Render(args) => render(&args)?,
    };
    stdout
        .write_all(text.as_bytes())
        .map_err(io(Path::new("<stdout>")))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(io(path))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    tmp.write_all(bytes).map_err(io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn pipeline_config(args: &SimulateArgs) -> PipelineConfig<f64> {
    let mut cfg = PipelineConfig {
        smoothing: args.smoothing.spec(),
        regions: args.regions.config(),
        ..Default::default()
    };
    cfg.mask.w0 = args.w0;
    cfg.mask.masked_resolutions = args.masked_resolutions.iter().copied().collect::<BTreeSet<_>>();
    cfg.momentum.alpha = args.alpha;
    cfg.momentum.beta = args.beta;
    cfg
}

fn scenario_files(path: &Path) -> CliResult<Vec<(PathBuf, Option<String>)>> {
    if !path.is_dir() {
        return Ok(vec![(path.to_path_buf(), None)]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(io(path))? {
        let p = entry.map_err(io(path))?.path();
        if p.extension().is_some_and(|e| e == "scen") {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.push((p, Some(stem)));
        }
    }
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no .scen files", path.display())));
    }
    files.sort();
    Ok(files)
}

/// Everything one scenario run writes, keyed by file name.
struct RunOutput {
    summary: String,
    files: Vec<(String, Vec<u8>)>,
}

fn simulate_one(path: &Path, cfg: &PipelineConfig<f64>, masked: bool) -> CliResult<RunOutput> {
    let ctx = path.display().to_string();
    let spec = parse_scen::<f64>(&read_text(path)?).map_err(input(ctx.clone()))?;
    let report = run_pipeline(&spec, masked, cfg).map_err(input(ctx.clone()))?;

    let mut files = vec![("scenario.scen".to_string(), render_scen(&spec).into_bytes())];
    for rec in &report.steps {
        let probs = render_state(&rec.probabilities).map_err(input(ctx.clone()))?;
        files.push((format!("step_{:04}_probs.amap", rec.step), probs.into_bytes()));
        files.push((format!("step_{:04}_mask.amap", rec.step), render_mask(&rec.mask).into_bytes()));
    }
    files.push(("metrics.txt".into(), render_metrics(&metrics_rows(&report)).into_bytes()));
    files.push(("verdicts.txt".into(), render_verdicts(&report.findings).into_bytes()));
    for (picked, map) in report.selection.picked().iter().zip(&report.averaged_maps) {
        files.push((
            format!("average_token_{}.pgm", picked.index),
            encode_pgm(&heatmap(map)),
        ));
    }

    let mut summary = format!(
        "{}: {} steps, masking {}\n",
        path.file_name().unwrap_or_default().to_string_lossy(),
        report.steps.len(),
        if report.masking_enabled { "on" } else { "off" }
    );
    summary.push_str(&render_verdicts(&report.findings));
    Ok(RunOutput { summary, files })
}

fn simulate(args: &SimulateArgs) -> CliResult<String> {
    let cfg = pipeline_config(args);
    let masked = !args.unmasked;
    let jobs = scenario_files(&args.scenario)?;
    // Runs are independent; results are collected in input order.
    let outputs = jobs
        .par_iter()
        .map(|(path, stem)| simulate_one(path, &cfg, masked).map(|o| (stem.clone(), o)))
        .collect::<CliResult<Vec<_>>>()?;

    let mut text = String::new();
    for (stem, output) in outputs {
        let dir = match stem {
            Some(s) => args.out.join(s),
            None => args.out.clone(),
        };
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        for (name, bytes) in &output.files {
            write_atomic(&dir.join(name), bytes)?;
        }
        text.push_str(&output.summary);
    }
    Ok(text)
}

fn select_regions(args: &SelectArgs) -> CliResult<String> {
    let ctx = args.amap.display().to_string();
    let state = parse_amap::<f64>(&read_text(&args.amap)?)
        .and_then(|a| a.into_state())
        .map_err(input(ctx.clone()))?;
    if state.kind() != AttentionKind::Probabilities {
        return Err(CliError::Usage(format!("{ctx}: expected a PROBS map")));
    }
    let tokens = args
        .tokens
        .clone()
        .unwrap_or_else(|| (0..state.num_tokens()).collect());
    let unique: BTreeSet<_> = tokens.iter().collect();
    if unique.len() != tokens.len() {
        return Err(CliError::Usage("--tokens lists a token twice".into()));
    }
    let cfg = args.regions.config();
    let kernel = GaussianKernel::new(args.smoothing.spec()).map_err(input("smoothing"))?;
    let maps = smooth_tokens(&state, &tokens, &kernel).map_err(input(ctx.clone()))?;

    let approx = solve_regions_approx(&maps, &tokens, &cfg).map_err(input(ctx.clone()))?;
    let surrogate = objective_surrogate(&approx.regions, &approx.approx_regions, &maps, cfg.lambda)
        .map_err(input(ctx.clone()))?;
    let exact_value = objective_exact(&approx.regions, &maps, cfg.lambda).map_err(input(ctx.clone()))?;
    let mut blocks = vec![RegionBlock::from_assignment(Solver::Approx, &approx)
        .with_objective("surrogate", surrogate)
        .with_objective("exact", exact_value)];

    if args.exact {
        let exact = solve_regions_exact(&maps, &tokens, &cfg).map_err(input(ctx.clone()))?;
        let value = objective_exact(&exact.regions, &maps, cfg.lambda).map_err(input(ctx))?;
        blocks.push(RegionBlock::from_assignment(Solver::Exact, &exact).with_objective("exact", value));
    }
    Ok(render_regions(&blocks))
}

fn render(args: &RenderArgs) -> CliResult<String> {
    let ctx = args.amap.display().to_string();
    let amap = parse_amap::<f64>(&read_text(&args.amap)?).map_err(input(ctx.clone()))?;
    let map = amap.token_map(args.token).map_err(input(ctx.clone()))?;
    let score = top_fraction_score(&map, SCORE_FRACTION).map_err(input(ctx))?;
    write_atomic(&args.out, &encode_pgm(&heatmap(&map)))?;
    let mut text = String::new();
    writeln!(text, "{score}").unwrap();
    Ok(text)
}
