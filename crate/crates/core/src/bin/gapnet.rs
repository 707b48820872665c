//! Batch front-end: training runs, seed studies, sweeps, the finite
//! difference reference solver and checkpoint diagnostics, all emitting
//! plot-ready CSVs.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gapnet::config::{build_train_config, parse_config, ConfigFile};
use gapnet::losses::{gap_estimate, GapConfig};
use gapnet::metrics::{network_complementarity, EvalGrid};
use gapnet::nn::{load_checkpoint, save_checkpoint};
use gapnet::oracle::{linf_vs_exact_1d, optimal_omega, pgs_solve_2d, psor_solve_1d};
use gapnet::problems::ProblemSpec;
use gapnet::sampler::experiment_id;
use gapnet::trainer::{
    build_bc, gda_train, run_experiment, summary_csv, sweep, sweep_csv, write_trajectory_csv,
    SweepGrid, TrainConfig,
};

#[derive(Parser)]
#[command(name = "gapnet", about = "Adversarial solver for obstacle problems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One training run; writes the trajectory CSV and a checkpoint.
    Run {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Independent runs over a seed list, with a percentile summary.
    Seeds {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma list (3,5,8) or inclusive range (0..9).
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Mean errors over a parameter grid.
    Sweep {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// obstacle-weight, gap-weight or network-size.
        #[arg(long)]
        kind: String,
        /// Comma list of weights, or of depth x width pairs (e.g. 2x20,4x40).
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Projected-SOR reference solution on a uniform grid.
    Oracle {
        #[arg(long)]
        problem: String,
        /// Interior nodes per axis.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Gap estimate of a checkpointed solution by test-function ascent.
    Gap {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed of the run that produced the checkpoint (rebuilds the lift).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Ascent steps.
        #[arg(long, default_value_t = 200)]
        epochs: usize,
    },
    /// Complementarity residuals of a checkpointed solution.
    Diagnose {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Nodes per axis of the diagnostic grid.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("WAN_OBSTACLE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("thread pool not yet initialized");
            }
            _ => {
                eprintln!("WAN_OBSTACLE_THREADS must be a positive integer");
                return ExitCode::FAILURE;
            }
        }
    }
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

fn load_config(
    path: &Option<PathBuf>,
    problem: &ProblemSpec,
    seed: u64,
    epochs: Option<usize>,
) -> Result<TrainConfig, AnyError> {
    let file = match path {
        Some(p) => parse_config(p)?,
        None => ConfigFile::default(),
    };
    let mut config = build_train_config(&file, problem, seed)?;
    if let Some(m) = epochs {
        config.epochs = m;
    }
    Ok(config)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, AnyError> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse()?;
        let b: u64 = b.trim().parse()?;
        if b < a {
            return Err(format!("empty seed range {spec}").into());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(Into::into))
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), AnyError> {
    match cli.cmd {
        Cmd::Run {
            problem,
            config,
            seed,
            out,
            epochs,
        } => {
            let spec = ProblemSpec::by_name(&problem)?;
            let cfg = load_config(&config, &spec, seed, epochs)?;
            fs::create_dir_all(&out)?;
            let (params, record) = gda_train(&spec, &cfg)?;
            let stem = format!("{problem}_seed{seed}");
            write_trajectory_csv(&out.join(format!("{stem}.csv")), &record)?;
            save_checkpoint(&out.join(format!("{stem}.ckpt")), &params)?;
            if let Some(e) = &record.final_errors {
                println!(
                    "{problem} seed {seed}: L2 {:.6} Linf {:.6} H1 {:.6} ({} epochs)",
                    e.l2, e.linf, e.h1, cfg.epochs
                );
            } else {
                println!("{problem} seed {seed}: trained, no closed form to compare");
            }
            Ok(())
        }
        Cmd::Seeds {
            problem,
            config,
            seeds,
            out,
            epochs,
        } => {
            let spec = ProblemSpec::by_name(&problem)?;
            let seeds = parse_seeds(&seeds)?;
            let cfg = load_config(&config, &spec, seeds[0], epochs)?;
            fs::create_dir_all(&out)?;
            let summary = run_experiment(&cfg, &seeds)?;
            for rec in &summary.records {
                let path = out.join(format!("{problem}_seed{}.csv", rec.seed));
                write_trajectory_csv(&path, rec)?;
            }
            for (seed, err) in &summary.failures {
                eprintln!("seed {seed} failed: {err}");
            }
            fs::write(
                out.join(format!("{problem}_summary.csv")),
                summary_csv(&problem, &summary),
            )?;
            if let Some(q) = summary.l2_quartiles {
                println!(
                    "{problem}: final L2 p25 {:.6} p50 {:.6} p75 {:.6} over {} seeds",
                    q.p25,
                    q.p50,
                    q.p75,
                    summary.records.len()
                );
            }
            Ok(())
        }
        Cmd::Sweep {
            problem,
            config,
            kind,
            grid,
            seeds,
            out,
            epochs,
        } => {
            let spec = ProblemSpec::by_name(&problem)?;
            let seeds = parse_seeds(&seeds)?;
            let cfg = load_config(&config, &spec, seeds[0], epochs)?;
            let parse_f64s = |s: &str| -> Result<Vec<f64>, AnyError> {
                s.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(Into::into))
                    .collect()
            };
            let grid = match kind.as_str() {
                "obstacle-weight" => SweepGrid::ObstacleWeight(parse_f64s(&grid)?),
                "gap-weight" => SweepGrid::GapWeight(parse_f64s(&grid)?),
                "network-size" => {
                    let sizes = grid
                        .split(',')
                        .map(|s| {
                            let (d, w) = s
                                .trim()
                                .split_once('x')
                                .ok_or_else(|| format!("expected depth x width, got `{s}`"))?;
                            Ok((d.trim().parse::<usize>()?, w.trim().parse::<usize>()?))
                        })
                        .collect::<Result<Vec<_>, AnyError>>()?;
                    SweepGrid::NetworkSize(sizes)
                }
                other => return Err(format!("unknown sweep kind `{other}`").into()),
            };
            fs::create_dir_all(&out)?;
            let rows = sweep(&grid, &cfg, &seeds)?;
            fs::write(
                out.join(format!("{problem}_sweep_{kind}.csv")),
                sweep_csv(&rows),
            )?;
            for r in &rows {
                println!("{}: mean L2 {:.6} mean H1 {:.6}", r.label, r.mean_l2, r.mean_h1);
            }
            Ok(())
        }
        Cmd::Oracle { problem, grid, out } => {
            let spec = ProblemSpec::by_name(&problem)?;
            fs::create_dir_all(&out)?;
            let path = out.join(format!("{problem}_oracle.csv"));
            if spec.dim() == 1 {
                let m = grid.unwrap_or(2048);
                let h = spec.domain.volume() / (m + 1) as f64;
                let sol = psor_solve_1d(&spec, m, optimal_omega(h), 1e-10, 200_000);
                let mut csv = String::from("x,u\n");
                for (x, u) in sol.xs.iter().zip(&sol.u) {
                    writeln!(csv, "{x},{u}")?;
                }
                fs::write(&path, csv)?;
                let mut line = format!(
                    "{problem}: {} interior nodes, {} iterations, converged {}",
                    m, sol.iterations, sol.converged
                );
                if spec.exact.is_some() {
                    write!(line, ", Linf vs closed form {:.3e}", linf_vs_exact_1d(&spec, &sol))?;
                }
                println!("{line}");
            } else {
                let m = grid.unwrap_or(255);
                let bounds = spec.domain.bounds();
                let h = (bounds[0].1 - bounds[0].0) / (m + 1) as f64;
                let sol = pgs_solve_2d(&spec, m, m, optimal_omega(h), 1e-10, 200_000);
                let mut csv = String::from("x,y,u\n");
                for (i, x) in sol.xs.iter().enumerate() {
                    for (j, y) in sol.ys.iter().enumerate() {
                        writeln!(csv, "{x},{y},{}", sol.u[[i, j]])?;
                    }
                }
                fs::write(&path, csv)?;
                println!(
                    "{problem}: {m}x{m} interior nodes, {} iterations, converged {}",
                    sol.iterations, sol.converged
                );
            }
            Ok(())
        }
        Cmd::Gap {
            problem,
            checkpoint,
            seed,
            out,
            epochs,
        } => {
            let spec = ProblemSpec::by_name(&problem)?;
            let params = load_checkpoint(&checkpoint)?;
            let cfg = load_config(&None, &spec, seed, None)?;
            let (bc, _) = build_bc(&spec, &cfg)?;
            let gap_cfg = GapConfig {
                ascent_epochs: epochs,
                lr: cfg.lr_testfn,
                n_interior: cfg.n_interior,
                seed,
                experiment: experiment_id(&problem),
            };
            let estimate = gap_estimate(&spec, &params, &bc, &cfg.weights, &gap_cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(
                out.join(format!("{problem}_gap.csv")),
                format!("gap_estimate\n{estimate}\n"),
            )?;
            println!("{problem}: gap estimate {estimate:.6e} after {epochs} ascent steps");
            Ok(())
        }
        Cmd::Diagnose {
            problem,
            checkpoint,
            seed,
            grid,
            out,
        } => {
            let spec = ProblemSpec::by_name(&problem)?;
            let params = load_checkpoint(&checkpoint)?;
            let cfg = load_config(&None, &spec, seed, None)?;
            let (bc, _) = build_bc(&spec, &cfg)?;
            let shape = vec![grid.unwrap_or(if spec.dim() == 1 { 1025 } else { 257 }); spec.dim()];
            let eval = EvalGrid::with_shape(spec.domain, &shape);
            let report = network_complementarity(&params, &bc, &spec, &eval);
            fs::create_dir_all(&out)?;
            fs::write(
                out.join(format!("{problem}_diagnose.csv")),
                format!(
                    "negativity,residual,product\n{},{},{}\n",
                    report.negativity, report.residual, report.product
                ),
            )?;
            println!(
                "{problem}: max (psi-u)+ {:.3e}, max (f-Au)+ {:.3e}, max |(Au-f)(u-psi)| {:.3e}",
                report.negativity, report.residual, report.product
            );
            Ok(())
        }
    }
}
