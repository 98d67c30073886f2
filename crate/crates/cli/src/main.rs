//! `probit-mix`: meeting-time tables, TV curves, theoretical bounds and raw
//! draws for probit data-augmentation samplers.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use probit_mixing::bounds::{bound_report, random_design_limits, recipe_bound, BoundReport};
use probit_mixing::couplings::{CouplingConfig, MeetingRecord};
use probit_mixing::datagen::DesignKind;
use probit_mixing::diagnostics::{summarize, tv_bound_curve, MixingSummary};
use probit_mixing::farm::{replicate_seed, rng_for, run_meeting_times, stream_id};
use probit_mixing::io::{write_curve_csv, write_draws_csv, write_meeting_csv, write_model_bundle};
use probit_mixing::model::{build_cache, PriorPrecision};
use probit_mixing::samplers::{run_chain, start_for, RwmConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{build_model, CellConfig, ScenarioConfig};

#[derive(Parser)]
#[command(name = "probit-mix", version, about = "Mixing-time experiments for probit data-augmentation samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meeting-time based mixing-time estimates for every configured cell.
    BenchTable(RunArgs),
    /// TV upper-bound curves d̄(t) for every configured cell and kernel.
    TvCurve(RunArgs),
    /// Closed-form bounds for every configured cell.
    Bounds(CommonArgs),
    /// Run a single chain per cell and write its draws.
    Sample(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Only run cells with these labels.
    #[arg(long = "cell")]
    cells: Vec<String>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Overrides the number of replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Compare against reference values; exit non-zero on any miss.
    #[arg(long)]
    check: bool,
}

const CHECK_POLICY: &str = "pass if |estimate - reference| <= max(5, 3 * bootstrap se, 0.5 * reference)";

fn check_band(estimate: f64, se: f64, reference: f64) -> bool {
    (estimate - reference).abs() <= 5f64.max(3.0 * se).max(0.5 * reference)
}

struct Session {
    config: ScenarioConfig,
    config_hash: String,
    base_dir: PathBuf,
    seed: u64,
    pool: rayon::ThreadPool,
    out: PathBuf,
}

impl Session {
    fn load(args: &CommonArgs) -> Result<Self> {
        let (config, bytes) = ScenarioConfig::from_path(&args.config)?;
        let config_hash = format!("{:x}", Sha256::digest(&bytes));
        let seed = args.seed.unwrap_or(config.master_seed);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads.unwrap_or(0))
            .build()?;
        let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
        fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        Ok(Self {
            config,
            config_hash,
            base_dir,
            seed,
            pool,
            out: args.out.clone(),
        })
    }

    fn cells<'a>(&'a self, filter: &'a [String]) -> impl Iterator<Item = &'a CellConfig> + 'a {
        self.config
            .cells
            .iter()
            .filter(move |c| filter.is_empty() || filter.contains(&c.label))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    master_seed: u64,
    threads: usize,
    versions: Versions,
    timing: Timing,
    check_policy: &'a str,
}

#[derive(Serialize)]
struct Versions {
    probit_mix: &'static str,
}

#[derive(Serialize)]
struct Timing {
    started_unix: u64,
    elapsed_seconds: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn write_manifest(ctx: &Session, command: &str, started: SystemTime, clock: Instant) -> Result<()> {
    let manifest = Manifest {
        command,
        config_hash: &ctx.config_hash,
        master_seed: ctx.seed,
        threads: ctx.pool.current_num_threads(),
        versions: Versions {
            probit_mix: env!("CARGO_PKG_VERSION"),
        },
        timing: Timing {
            started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            elapsed_seconds: clock.elapsed().as_secs_f64(),
        },
        check_policy: CHECK_POLICY,
    };
    write_json(&ctx.path("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct TableRow {
    label: String,
    kernel: String,
    n: usize,
    p: usize,
    #[serde(rename = "L")]
    lag: usize,
    epsilon: f64,
    t_mix_upper: Option<usize>,
    t_mix_se: Option<f64>,
    n_used: Option<usize>,
    n_censored: Option<usize>,
    reference: Option<f64>,
    check: Option<bool>,
    error: Option<String>,
}

struct CellRun {
    records: Vec<MeetingRecord>,
    summary: MixingSummary,
    curve: probit_mixing::diagnostics::TVBoundCurve,
}

fn run_cell_kernel(
    ctx: &Session,
    cell: &CellConfig,
    kernel: probit_mixing::samplers::Kernel,
    replicates: usize,
    default_lag: usize,
) -> Result<(usize, usize, usize, CellRun)> {
    let (model, _) = build_model(cell, ctx.seed, &ctx.base_dir)?;
    let cache = build_cache(&model)?;
    let lag = cell.lag.or(ctx.config.lag).unwrap_or(default_lag);
    let mut cfg = CouplingConfig::for_kernel(kernel, lag);
    cfg.max_sweeps = ctx.config.max_sweeps;
    if let Some(e) = ctx.config.coupling_epsilon {
        cfg.epsilon = e;
    }
    let rwm = RwmConfig::new(ctx.config.rwm_sigma)?;
    let stream = stream_id(&format!("{}/{}", cell.label, kernel));
    let records = ctx
        .pool
        .install(|| run_meeting_times(kernel, &model, &cache, &cfg, rwm, replicates, ctx.seed, stream))?;
    let curve = tv_bound_curve(&records, None)?;
    let summary = summarize(&curve, &records, ctx.config.epsilon, replicate_seed(ctx.seed, stream, u64::MAX - 1))?;
    Ok((model.n(), model.p(), lag, CellRun { records, summary, curve }))
}

fn write_cell_outputs(ctx: &Session, stem: &str, run: &CellRun) -> Result<()> {
    write_meeting_csv(BufWriter::new(File::create(ctx.path(&format!("{stem}_meetings.csv")))?), &run.records)?;
    write_curve_csv(BufWriter::new(File::create(ctx.path(&format!("{stem}_curve.csv")))?), &run.curve)?;
    write_json(&ctx.path(&format!("{stem}_summary.json")), &run.summary)
}

fn cmd_meetings(args: &RunArgs, command: &str, default_lag: usize) -> Result<bool> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let ctx = Session::load(&args.common)?;
    let replicates = args.replicates.unwrap_or(ctx.config.replicates);
    let mut rows = Vec::new();
    let mut all_pass = true;
    for cell in ctx.cells(&args.common.cells) {
        for &kernel in &cell.kernels {
            let stem = format!("{}_{}", cell.label, kernel);
            let cell_clock = Instant::now();
            let reference = cell.reference.get(kernel.name()).copied();
            let mut row = TableRow {
                label: cell.label.clone(),
                kernel: kernel.name().to_string(),
                n: 0,
                p: 0,
                lag: 0,
                epsilon: ctx.config.epsilon,
                t_mix_upper: None,
                t_mix_se: None,
                n_used: None,
                n_censored: None,
                reference,
                check: None,
                error: None,
            };
            match run_cell_kernel(&ctx, cell, kernel, replicates, default_lag) {
                Ok((n, p, lag, run)) => {
                    write_cell_outputs(&ctx, &stem, &run)?;
                    let s = &run.summary;
                    row.n = n;
                    row.p = p;
                    row.lag = lag;
                    row.t_mix_upper = Some(s.t_mix_upper);
                    row.t_mix_se = Some(s.t_mix_se);
                    row.n_used = Some(s.n_used);
                    row.n_censored = Some(s.n_censored);
                    if s.n_censored > 0 {
                        log::warn!("{stem}: {} censored replicates excluded", s.n_censored);
                    }
                    if args.check {
                        if let Some(r) = reference {
                            let ok = check_band(s.t_mix_upper as f64, s.t_mix_se, r);
                            row.check = Some(ok);
                            all_pass &= ok;
                        }
                    }
                    log::info!(
                        "{stem}: t_mix <= {} (se {:.1}) in {:.1}s",
                        s.t_mix_upper,
                        s.t_mix_se,
                        cell_clock.elapsed().as_secs_f64()
                    );
                }
                Err(e) => {
                    log::error!("{stem}: {e:#}");
                    row.error = Some(format!("{e:#}"));
                    if args.check {
                        row.check = Some(false);
                        all_pass = false;
                    }
                }
            }
            print_row(&row);
            rows.push(row);
        }
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(ctx.path(&format!("{command}.csv")))?));
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    write_manifest(&ctx, command, started, clock)?;
    Ok(all_pass)
}

fn print_row(row: &TableRow) {
    let estimate = match (row.t_mix_upper, row.t_mix_se) {
        (Some(t), Some(se)) => format!("{t:>6} ± {se:<5.1}"),
        _ => format!("{:>14}", "failed"),
    };
    let reference = row.reference.map_or(String::from("-"), |r| format!("{r}"));
    let check = match row.check {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "",
    };
    println!(
        "{:<28} {:<12} n={:<5} p={:<5} {estimate} ref {reference:<6} {check}",
        row.label, row.kernel, row.n, row.p
    );
}

#[derive(Serialize)]
struct BoundsEntry {
    label: String,
    #[serde(flatten)]
    report: BoundReport,
    /// `(c(1+√r)², c(1-√min{1,r})²)` for isotropic random designs.
    random_design_limits: Option<(f64, f64)>,
    /// `(2+g, 1+g)` factors under a g prior.
    g_prior_factors: Option<(f64, f64)>,
    /// `(2+2b, 1+2b)` factors under the recipe prior.
    recipe_factors: Option<(f64, f64)>,
}

fn cmd_bounds(args: &CommonArgs) -> Result<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let ctx = Session::load(args)?;
    let mut entries = Vec::new();
    println!(
        "{:<28} {:>6} {:>5} {:>10} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "cell", "n", "p", "lam_max", "lam_min", "log KL/e", "DA", "CG", "CG refined"
    );
    for cell in ctx.cells(&args.cells) {
        let (model, _) = build_model(cell, ctx.seed, &ctx.base_dir)?;
        let cache = build_cache(&model)?;
        let report = bound_report(&model, &cache, ctx.config.epsilon)?;
        let r = model.n() as f64 / model.p() as f64;
        let random_design_limits = match (&cell.data.design, &model.prior.precision) {
            (Some(d), PriorPrecision::Isotropic { variance }) if d.kind == DesignKind::ScaledEntries => {
                Some(random_design_limits(*variance, r))
            }
            (Some(d), PriorPrecision::ScaledIsotropic { c }) if d.kind == DesignKind::RawEntries => {
                Some(random_design_limits(*c, r))
            }
            _ => None,
        };
        let (g_prior_factors, recipe_factors) = match model.prior.precision {
            PriorPrecision::GPrior { g, .. } => (Some((2.0 + g, 1.0 + g)), None),
            PriorPrecision::Recipe { b } => (None, Some(recipe_bound(b))),
            _ => (None, None),
        };
        println!(
            "{:<28} {:>6} {:>5} {:>10.3} {:>8.3} {:>10.3} {:>10.1} {:>10.1} {:>10.1}",
            cell.label,
            report.n,
            report.p,
            report.lam_max,
            report.lam_min,
            report.log_kl_over_eps,
            report.da_upper,
            report.cg_upper,
            report.cg_refined_upper
        );
        entries.push(BoundsEntry {
            label: cell.label.clone(),
            report,
            random_design_limits,
            g_prior_factors,
            recipe_factors,
        });
    }
    write_json(&ctx.path("bounds.json"), &entries)?;
    write_manifest(&ctx, "bounds", started, clock)
}

fn cmd_sample(args: &CommonArgs) -> Result<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let ctx = Session::load(args)?;
    let settings = ctx
        .config
        .sample
        .clone()
        .context("config has no [sample] section")?;
    let rwm = RwmConfig::new(ctx.config.rwm_sigma)?;
    for cell in ctx.cells(&args.cells) {
        let (model, beta_true) = build_model(cell, ctx.seed, &ctx.base_dir)?;
        let cache = build_cache(&model)?;
        let mut rng = rng_for(replicate_seed(ctx.seed, stream_id(&format!("{}/sample", cell.label)), 0));
        let start = start_for(settings.kernel, &cache, &model, &mut rng);
        let run = run_chain(settings.kernel, start, &cache, &model, rwm, settings.run, &mut rng)?;
        let indexed: Vec<_> = run
            .draws
            .into_iter()
            .enumerate()
            .map(|(k, s)| (settings.run.burn_in + k * settings.run.thin + 1, s))
            .collect();
        let path = ctx.path(&format!("{}_{}_draws.csv", cell.label, settings.kernel));
        write_draws_csv(BufWriter::new(File::create(&path)?), &indexed, settings.include_z)?;
        let beta = beta_true.map(nalgebra::DVector::from_vec);
        write_model_bundle(&ctx.path(&format!("{}_model.json", cell.label)), &model, beta.as_ref())?;
        match run.acceptance_rate {
            Some(rate) => println!("{}: {} draws, intercept acceptance {rate:.3}", cell.label, indexed.len()),
            None => println!("{}: {} draws", cell.label, indexed.len()),
        }
    }
    write_manifest(&ctx, "sample", started, clock)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BenchTable(args) => cmd_meetings(args, "bench-table", 200),
        Command::TvCurve(args) => cmd_meetings(args, "tv-curve", 500),
        Command::Bounds(args) => cmd_bounds(args).map(|()| true),
        Command::Sample(args) => cmd_sample(args).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed: at least one cell is outside the tolerance band");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::check_band;

    #[test]
    fn tolerance_band() {
        assert!(check_band(6.0, 0.0, 11.0));
        assert!(!check_band(5.0, 0.0, 11.0));
        assert!(check_band(120.0, 1.0, 81.0));
        assert!(!check_band(130.0, 1.0, 81.0));
        assert!(check_band(40.0, 10.0, 10.0));
    }
}
