//! The `cbf` command surface.
//!
//! Subcommands: `simulate` (one Itô trajectory with diagnostics), `converge`
//! (the Wong-Zakai strong-convergence study), `skeleton` (the realized-drive
//! identity plus the controlled-system convergence table) and `verify` (the
//! full operator-inequality battery). Exit status 0 means every assertion
//! passed, 1 means some assertion failed, 2 means the configuration was
//! rejected. Identical `(config, seed)` runs write byte-identical artifacts.

pub mod config;
pub mod output;

use clap::{Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use cbf_core::experiments::{
    convergence_study, derive_seed, energy_budget, identity_suite, monotonicity_suite,
    skeleton_consistency, skeleton_wz_convergence, unit_control, InequalityReport,
};
use cbf_core::integrator::integrate_scbf;
use cbf_core::noise::{hypothesis_audit, BrownianPath};
use config::{parse_config, ConfigError, RunConfig};
use output::{Format, Provenance};

const TREND_RATIO_BOUND: f64 = 0.2;

#[derive(Parser)]
#[command(
    name = "cbf",
    version,
    about = "Pseudospectral 2D stochastic convective Brinkman-Forchheimer simulator and verification harness"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; the built-in default benchmark when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: config value, then $CBF_OUT_DIR, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Result file format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one Itô trajectory and write its diagnostics.
    Simulate,
    /// Monte-Carlo Wong-Zakai convergence study with the trend gate.
    Converge,
    /// Realized-drive skeleton identity and the controlled convergence table.
    Skeleton,
    /// Operator identity, monotonicity and noise-hypothesis batteries.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Both => Format::Both,
        }
    }
}

/// Parses arguments, runs the selected command, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap already prefixes errors with "error:"; help/version go to
            // stdout with status 0
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(pass) => {
            if pass {
                0
            } else {
                1
            }
        }
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

enum RunError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<cbf_core::Error> for RunError {
    fn from(e: cbf_core::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(format!("i/o: {e}"))
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                RunError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_config(&text)?
        }
        None => RunConfig::default_benchmark(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("CBF_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<bool, RunError> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg);
    let format: Format = cli.format.into();
    let prov = Provenance {
        config_hash: cfg.hash(),
        master_seed: cfg.experiment.master_seed,
    };
    match cli.command {
        Command::Simulate => simulate(&cfg, &dir, format, &prov),
        Command::Converge => converge(&cfg, &dir, format, &prov),
        Command::Skeleton => skeleton(&cfg, &dir, format, &prov),
        Command::Verify => verify(&cfg, &dir, format, &prov),
    }
}

fn simulate(
    cfg: &RunConfig,
    dir: &Path,
    format: Format,
    prov: &Provenance,
) -> Result<bool, RunError> {
    let p = cfg.fluid_params()?;
    let model = cfg.noise_model()?;
    let solver = cfg.solver_config()?;
    let x0 = cfg.initial_field()?;
    let seed = derive_seed(cfg.experiment.master_seed, 0x51_3A, 0);
    let path = BrownianPath::sample(
        seed,
        cfg.solver.t_horizon,
        cfg.experiment.path_level,
        model.k_dim(),
    )?;
    let rec = integrate_scbf(&x0, &p, &model, &path, &solver)?;
    let budget = energy_budget(&rec);
    let files = output::write_trajectory(dir, "trajectory", &rec, &budget, prov, format)?;
    println!(
        "simulate: {} steps, final |u|_H = {}, energy budget = {}, max |cumulative residual| = {}",
        solver.steps(),
        rec.h_series.last().expect("nonempty"),
        budget.budget,
        budget.max_abs_cumulative
    );
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(true)
}

fn print_table(table: &cbf_core::experiments::ConvergenceTable) {
    println!("  n  samples  err            ci_half_width");
    for row in &table.rows {
        println!(
            "  {:<2} {:<8} {:<14.6e} {:.6e}",
            row.level, row.samples, row.err, row.ci_half_width
        );
    }
}

fn converge(
    cfg: &RunConfig,
    dir: &Path,
    format: Format,
    prov: &Provenance,
) -> Result<bool, RunError> {
    let p = cfg.fluid_params()?;
    let model = cfg.noise_model()?;
    let solver = cfg.solver_config()?;
    let x0 = cfg.initial_field()?;
    let table = convergence_study(
        &x0,
        &p,
        &model,
        &cfg.experiment.levels,
        cfg.experiment.samples,
        cfg.experiment.master_seed,
        cfg.experiment.path_level,
        &solver,
    )?;
    let files = output::write_convergence(dir, "wz_convergence", &table, prov, format)?;
    println!("wong-zakai convergence, E[sup_t |u - u^n|_H^2]:");
    print_table(&table);
    let trend = table.trend();
    let pass = table.trend_ok(TREND_RATIO_BOUND) && table.failures == 0;
    println!(
        "trend: soft_inversions={} hard_inversions={} err(finest)/err(coarsest)={:.4} failures={} => {}",
        trend.soft_inversions,
        trend.hard_inversions,
        trend.ratio,
        table.failures,
        if pass { "PASS" } else { "FAIL" }
    );
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(pass)
}

fn skeleton(
    cfg: &RunConfig,
    dir: &Path,
    format: Format,
    prov: &Provenance,
) -> Result<bool, RunError> {
    let p = cfg.fluid_params()?;
    let model = cfg.noise_model()?;
    let solver = cfg.solver_config()?;
    let x0 = cfg.initial_field()?;
    let n = *cfg.experiment.levels.iter().max().expect("validated");

    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..cfg.experiment.skeleton_seeds {
        let seed = derive_seed(cfg.experiment.master_seed, 0x5E_17, i as u64);
        let path = BrownianPath::sample(
            seed,
            cfg.solver.t_horizon,
            cfg.experiment.path_level,
            model.k_dim(),
        )?;
        let dev = skeleton_consistency(&x0, &p, &model, &path, n, &solver)?;
        worst = worst.max(dev);
        rows.push(output::SkeletonRow {
            seed,
            family: cfg.noise.family.clone(),
            level: n,
            sup_deviation: dev,
        });
    }
    let mut files = output::write_skeleton(dir, "skeleton_identity", &rows, prov, format)?;
    println!(
        "skeleton identity over {} seeds at n={}: max sup-deviation = {} ({})",
        cfg.experiment.skeleton_seeds,
        n,
        worst,
        if worst == 0.0 { "exact" } else { "NONZERO" }
    );

    let ctrl = unit_control(
        cfg.experiment.control_mesh_log2,
        model.k_dim(),
        cfg.solver.t_horizon,
        cfg.experiment.master_seed,
    );
    let table = skeleton_wz_convergence(
        &x0,
        &p,
        &model,
        &ctrl,
        &cfg.experiment.levels,
        cfg.experiment.samples,
        cfg.experiment.master_seed,
        cfg.experiment.path_level,
        &solver,
    )?;
    files.extend(output::write_convergence(
        dir,
        "stwz_convergence",
        &table,
        prov,
        format,
    )?);
    println!("controlled convergence with unit-norm control, E[sup_t |Y^n_k - Y_k|_H^2]:");
    print_table(&table);
    let trend = table.trend();
    let trend_pass = table.trend_ok(TREND_RATIO_BOUND) && table.failures == 0;
    println!(
        "trend: soft_inversions={} hard_inversions={} ratio={:.4} failures={} => {}",
        trend.soft_inversions,
        trend.hard_inversions,
        trend.ratio,
        table.failures,
        if trend_pass { "PASS" } else { "FAIL" }
    );
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(worst == 0.0 && trend_pass)
}

fn verify(
    cfg: &RunConfig,
    dir: &Path,
    format: Format,
    prov: &Provenance,
) -> Result<bool, RunError> {
    let grid = cbf_core::grid::GridSpec::new(cfg.experiment.verify_grid)
        .map_err(|e| RunError::Config(format!("experiment.verify_grid: {e}")))?;
    let seed = cfg.experiment.master_seed;
    let trials = cfg.experiment.verify_trials;
    let mut reports: Vec<InequalityReport> = identity_suite(grid, trials, seed)?;
    reports.extend(monotonicity_suite(
        grid,
        cfg.fluid.mu,
        cfg.fluid.alpha,
        cfg.fluid.beta,
        trials,
        derive_seed(seed, 0x00FE, 0),
    )?);
    let model = cfg.noise_model()?;
    reports.extend(hypothesis_audit(
        &model,
        cfg.experiment.audit_samples,
        derive_seed(seed, 0x00A0, 0),
    ));
    let files = output::write_reports(dir, "verify_report", &reports, prov, format)?;
    let mut pass = true;
    for r in &reports {
        println!(
            "{} {:<28} trials={:<6} worst_margin={:<+14.6e} tolerance={:.1e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.trials,
            r.worst_margin,
            r.tolerance
        );
        pass &= r.pass;
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(pass)
}
