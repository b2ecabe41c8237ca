mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use pme_core::analysis::{convergence_study, report_table, write_report};
use pme_core::checks::{run_all, CheckOptions};
use pme_core::stepper::run;
use pme_core::{Grid64, ProblemSpec64, RunConfig, StudySetup64};

use config::Config;

const OUTPUT_ENV: &str = "PME_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "pme-output";

#[derive(Parser, Debug)]
#[command(
    name = "pme",
    version,
    about = "Porous medium equation in trajectory form"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for convergence studies.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for the property sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Negate W inside the property sweeps (negative control).
    #[arg(long, global = true, hide = true)]
    flip_w_sign: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Advance one problem to t_final, writing snapshots and traces.
    Solve,
    /// Refinement study against a nested fine-grid reference.
    Convergence,
    /// Seeded property sweeps over the scheme's calculus and identities.
    Check,
}

fn output_dir(cfg: &Config) -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn load(path: Option<&Path>) -> anyhow::Result<Config> {
    let Some(path) = path else {
        bail!("this command needs --config <path>");
    };
    Ok(Config::load(path)?)
}

fn cmd_solve(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = load(cli.config.as_deref())?;
    let m = cfg.require_m()?;
    let cells = cfg.require_cells()?;
    let t_final = cfg.require_t_final()?;
    let grid = Grid64::new(cfg.domain.0, cfg.domain.1, cells)?;
    let mut params = cfg.params;
    params.tau = cfg.tau.unwrap_or(grid.h());
    let spec = ProblemSpec64::new(m, grid, cfg.initial_data.clone())?;
    let dir = output_dir(&cfg);
    let result = run(&RunConfig {
        spec,
        params,
        t_final,
        snapshot_every: cfg.snapshot_every,
        output_dir: Some(dir.clone()),
    })
    .with_context(|| format!("solve failed (output in {})", dir.display()))?;
    println!(
        "steps={} newton_iterations={} energy_drop={:.6e} output={}",
        result.steps(),
        result.total_newton_iterations(),
        result.energy_drop(),
        dir.display()
    );
    Ok(true)
}

fn cmd_convergence(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = load(cli.config.as_deref())?;
    let study = cfg.study()?;
    let dir = output_dir(&cfg);
    for &m in &study.m_list {
        let setup = StudySetup64 {
            x_left: cfg.domain.0,
            x_right: cfg.domain.1,
            initial_data: cfg.initial_data.clone(),
            cells: study.cells.clone(),
            reference_cells: study.reference_cells,
            t_eval: study.t_eval,
            params: cfg.params,
            jobs: cli.jobs,
        };
        let report = convergence_study(m, &setup).with_context(|| format!("study for m = {m}"))?;
        let (csv, _) = write_report(&report, &dir)?;
        print!("{}", report_table(&report));
        println!("wrote {}", csv.display());
    }
    Ok(true)
}

fn cmd_check(cli: &Cli) -> anyhow::Result<bool> {
    let opts = CheckOptions {
        seed: cli.seed,
        flip_w_sign: cli.flip_w_sign,
    };
    let outcomes = run_all(&opts)?;
    let mut ok = true;
    for o in &outcomes {
        println!("{o}");
        ok &= o.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve => cmd_solve(&cli),
        Command::Convergence => cmd_convergence(&cli),
        Command::Check => cmd_check(&cli),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: property check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
