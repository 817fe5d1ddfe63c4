use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morrisk_core::greedy_sampling::{write_trace_csv, GreedyMode};
use morrisk_core::grid_control::write_grid_study_csv;
use morrisk_core::pod_core::write_checkpoint;
use morrisk_core::risk_pipeline::{
    discretize, emit_report, percentile_scenarios, prepare, read_scenarios_csv, run_greedy, run_pipeline,
    PipelineConfig,
};

#[derive(Parser)]
#[command(name = "morrisk", version, about = "Error-controlled reduced-order scenario valuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed of the greedy sampling (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline and write the report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Time-step control and grid selection only.
    GridStudy {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Greedy basis construction on the selected grid.
    Greedy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<GreedyMode>,
    },
    /// Pipeline run with the Sobol ranking of the error parts.
    Sensitivity {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Samples per error distribution.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Percentiles of a previous run's scenarios.csv.
    Report {
        /// Directory holding scenarios.csv.
        #[arg(long)]
        input: PathBuf,
    },
}

fn load(path: Option<&Path>, common: &Common) -> morrisk_core::Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.sampling.greedy.seed = s;
    }
    if let Some(o) = &common.output {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn code(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: &Cli) -> morrisk_core::Result<ExitCode> {
    let common = &cli.common;
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(Some(config), common)?;
            let report = run_pipeline(&cfg)?;
            emit_report(&report, &cfg.output)?;
            println!(
                "ε_T = {:.3e} (e_tol {:e}), d = {}, ℓ = {}, VEV = {:.4}%, class {}, converged: {}",
                report.budget.eps_total,
                report.budget.e_tol,
                report.d,
                report.counts.full,
                100.0 * report.var.vev,
                report.market_risk_class,
                report.converged
            );
            Ok(code(report.converged))
        }
        Command::GridStudy { config } => {
            let cfg = load(config.as_deref(), common)?;
            let prep = prepare(&cfg)?;
            let disc = discretize(&prep)?;
            std::fs::create_dir_all(&cfg.output)?;
            write_grid_study_csv(&disc.grid.history, &cfg.output.join("grid_study.csv"))?;
            println!(
                "Δt = {:.6}, M = {}, ε_h = {:.3e}, converged: {}",
                disc.dt, disc.grid.m_selected, disc.grid.study.eps_h, disc.grid.converged && disc.time_step_converged
            );
            Ok(code(disc.grid.converged && disc.time_step_converged))
        }
        Command::Greedy { config, mode } => {
            let cfg = load(config.as_deref(), common)?;
            let prep = prepare(&cfg)?;
            let disc = discretize(&prep)?;
            let out = run_greedy(&prep, &disc, mode.unwrap_or(cfg.sampling.mode))?;
            std::fs::create_dir_all(&cfg.output)?;
            write_trace_csv(&out.trace, &cfg.output.join("greedy_trace.csv"))?;
            write_checkpoint(&out.basis, &cfg.output.join("basis.morq"))?;
            println!(
                "{} full solves, d = {}, max residual {:.3e}, converged: {}",
                out.full_solves(),
                out.basis.d(),
                out.final_max_residual(),
                out.converged
            );
            Ok(code(out.converged))
        }
        Command::Sensitivity { config, samples } => {
            let mut cfg = load(config.as_deref(), common)?;
            let mut sc = cfg.sensitivity.unwrap_or_default();
            if let Some(s) = samples {
                sc.samples = *s;
            }
            cfg.sensitivity = Some(sc);
            let report = run_pipeline(&cfg)?;
            emit_report(&report, &cfg.output)?;
            if let Some(s) = &report.sensitivity {
                for f in &s.factors {
                    println!("{:<9} S_i = {:.3}  S_Ti = {:.3}", f.factor, f.s_i, f.s_ti);
                }
            }
            Ok(code(report.converged))
        }
        Command::Report { input } => {
            let rows = read_scenarios_csv(&input.join("scenarios.csv"))?;
            let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
            let p = percentile_scenarios(&values)?;
            println!(
                "{} scenarios: favorable {:.6} (id {}), moderate {:.6} (id {}), unfavorable {:.6} (id {})",
                rows.len(),
                p.favorable,
                rows[p.positions[0]].scenario_id,
                p.moderate,
                rows[p.positions[1]].scenario_id,
                p.unfavorable,
                rows[p.positions[2]].scenario_id
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
