//! Lift pretraining and the alternating descent-ascent loop.
//!
//! One epoch trains exactly one network: even epochs take a descent step on
//! the solution, odd epochs an ascent step on the test function, each on a
//! fresh collocation batch.  The opposing network enters the tape as
//! constants, so a reverse pass only ever touches the branch being updated.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::losses::{
    objective_bc, obstacle_loss, point_constants, InteriorNodes, LossError, PenaltyWeights,
};
use crate::metrics::{network_errors, quartiles, EvalGrid, ErrorReport, Quartiles};
use crate::nn::{
    bc_constants, build_eta, constant_net, eval_value_grad, forward_value_grad, wrap_bc,
    wrap_plain, Architecture, BcWrapper, NetworkParams,
};
use crate::optimizer::{adamw_step, lr_at, AdamState, LrSchedule, OptimError};
use crate::problems::{ProblemError, ProblemSpec};
use crate::sampler::{experiment_id, sample_boundary, sample_interior, Purpose, StreamKey};
use crate::autodiff::{Tape, TapeError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("non-finite objective {value} at epoch {epoch} (seed {seed}, stream {stream:?})")]
    NonFinite {
        value: f64,
        epoch: usize,
        seed: u64,
        stream: StreamKey,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one run needs; see the tables of defaults in [`TrainConfig::defaults`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub problem: String,
    pub solution_arch: Architecture,
    pub test_arch: Architecture,
    pub lift_arch: Architecture,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub epochs: usize,
    pub lr_soln: f64,
    pub lr_testfn: f64,
    pub t_0: usize,
    pub t_mult: usize,
    pub weights: PenaltyWeights,
    pub seed: u64,
    pub cadence: usize,
}

impl TrainConfig {
    /// Published defaults: DRR 4 x 80 everywhere; 1D runs use
    /// N = 1024, N_b = 2, lr 0.002/0.001, weights (8000, 1500), gap 1e-4;
    /// 2D runs use N_b = 256, lr 0.003/0.0047, weights (5000, 5000),
    /// gap 5e-4.  12000 epochs with restarts at 2001 and 6003.
    pub fn defaults(problem: &ProblemSpec, seed: u64) -> Self {
        let dim = problem.dim();
        let arch = Architecture::drr(dim, 4, 80);
        let (n_boundary, lr_soln, lr_testfn, w_o1, w_o2) = if dim == 1 {
            (2, 0.002, 0.001, 8000.0, 1500.0)
        } else {
            (256, 0.003, 0.0047, 5000.0, 5000.0)
        };
        TrainConfig {
            problem: problem.name.to_string(),
            solution_arch: arch,
            test_arch: arch,
            lift_arch: arch,
            n_interior: 1024,
            n_boundary,
            epochs: 12000,
            lr_soln,
            lr_testfn,
            t_0: 2001,
            t_mult: 2,
            weights: PenaltyWeights::bc(w_o1, w_o2, problem.gap_weight),
            seed,
            cadence: 50,
        }
    }

    fn schedule(&self, base_lr: f64) -> LrSchedule {
        LrSchedule {
            base_lr,
            t_0: self.t_0,
            t_mult: self.t_mult,
            eta_min: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        assert!(self.n_interior > 0 && self.n_boundary > 0 && self.cadence > 0);
        self.weights.validate(None)?;
        Ok(())
    }
}

/// One logged trajectory row.
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub epoch: usize,
    pub error_l2: f64,
    pub error_linfty: f64,
    pub h_one_norm: f64,
    pub objective: f64,
}

/// Trajectory of one run plus its final evaluation.
#[derive(Debug, Clone)]
pub struct TrainingRecord {
    pub seed: u64,
    pub rows: Vec<LogRow>,
    pub final_errors: Option<ErrorReport>,
    pub lift_converged: bool,
}

impl TrainingRecord {
    pub fn final_l2(&self) -> f64 {
        self.final_errors.as_ref().map_or(f64::NAN, |e| e.l2)
    }

    pub fn final_h1(&self) -> f64 {
        self.final_errors.as_ref().map_or(f64::NAN, |e| e.h1)
    }
}

/// "epoch,error_l2,error_linfty,H_one_norm,objective" rows of one record.
pub fn trajectory_csv(record: &TrainingRecord) -> String {
    let mut out = String::from("epoch,error_l2,error_linfty,H_one_norm,objective\n");
    for r in &record.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.error_l2, r.error_linfty, r.h_one_norm, r.objective
        )
        .expect("string write");
    }
    out
}

pub fn write_trajectory_csv(path: &Path, record: &TrainingRecord) -> std::io::Result<()> {
    fs::write(path, trajectory_csv(record))
}

// Distinct deterministic init seeds per network role (splitmix64).
fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Outcome of the lift pretraining; `converged` is false when the boundary
/// loss never reached the threshold within the epoch budget.
pub struct LiftResult {
    pub params: NetworkParams<f64>,
    pub converged: bool,
    pub final_boundary_loss: f64,
    pub epochs_used: usize,
}

const LIFT_THRESHOLD: f64 = 1e-4;
const LIFT_MAX_EPOCHS: usize = 5000;
const LIFT_LR: f64 = 1e-3;

/// Fit an unconstrained network to the Dirichlet data: plain descent on
/// L_b + L_o until L_b drops below 1e-4, at most 5000 epochs.  The best
/// iterate by boundary loss is returned either way.
pub fn pretrain_lift(
    problem: &ProblemSpec,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<LiftResult, TrainError> {
    let experiment = experiment_id(&config.problem);
    let mut params: NetworkParams<f64> = crate::nn::init_params(arch, derive_seed(config.seed, 3));
    let view = arch.param_view();
    let mut adam = AdamState::new(params.theta.len());
    let volume = problem.domain.volume();
    let perimeter = problem.domain.boundary_measure();
    let nb = config.n_boundary.max(16);

    let mut best = params.clone();
    let mut best_lb = f64::INFINITY;
    let mut epochs_used = 0;
    for epoch in 0..LIFT_MAX_EPOCHS {
        epochs_used = epoch + 1;
        let key = |purpose| StreamKey {
            experiment,
            seed: config.seed,
            epoch: epoch as u64,
            purpose,
        };
        let xs = sample_interior(&problem.domain, config.n_interior, &key(Purpose::LiftInterior));
        let xb = sample_boundary(&problem.domain, nb, &key(Purpose::LiftBoundary));

        let mut tape: Tape<f64> = Tape::new();
        let group = tape.register_params(&params.theta, &view)?;
        let x_node = tape.constant(xs.clone());
        let net = forward_value_grad(&mut tape, group, &arch, x_node)?;
        let psi = point_constants(&mut tape, &xs, &problem.obstacle);
        let lo = obstacle_loss(&mut tape, net.u, psi, volume)?;

        let xb_node = tape.constant(xb.clone());
        let net_b = forward_value_grad(&mut tape, group, &arch, xb_node)?;
        let h = point_constants(&mut tape, &xb, &problem.boundary);
        let lb = crate::losses::boundary_loss(&mut tape, net_b.u, h, perimeter)?;
        let total = tape.add(lo, lb)?;

        let lb_val = tape.scalar_value(lb);
        if lb_val < best_lb {
            best_lb = lb_val;
            best = params.clone();
        }
        if lb_val <= LIFT_THRESHOLD {
            return Ok(LiftResult {
                params,
                converged: true,
                final_boundary_loss: lb_val,
                epochs_used,
            });
        }
        tape.backward(total)?;
        let g = tape.grad(group).to_vec();
        adamw_step(&mut params.theta, &g, &mut adam, LIFT_LR)?;
    }
    Ok(LiftResult {
        params: best,
        converged: false,
        final_boundary_loss: best_lb,
        epochs_used,
    })
}

/// Boundary wrapper of one run: the cutoff always, a pretrained lift only
/// when the Dirichlet data is nonzero.
pub fn build_bc(problem: &ProblemSpec, config: &TrainConfig) -> Result<(BcWrapper, bool), TrainError> {
    let eta = build_eta(&problem.domain);
    if problem.has_nonzero_boundary() {
        let lift = pretrain_lift(problem, config.lift_arch, config)?;
        Ok((
            BcWrapper {
                eta,
                lift: Some(lift.params),
            },
            lift.converged,
        ))
    } else {
        Ok((BcWrapper { eta, lift: None }, true))
    }
}

struct Branch {
    params: NetworkParams<f64>,
    adam: AdamState<f64>,
    schedule: LrSchedule,
    steps: usize,
}

impl Branch {
    fn new(params: NetworkParams<f64>, schedule: LrSchedule) -> Self {
        let adam = AdamState::new(params.theta.len());
        Branch {
            params,
            adam,
            schedule,
            steps: 0,
        }
    }
}

// One branch update: record the live network against the frozen opponent,
// backprop, and step.  `ascent` negates the gradient.
fn branch_step(
    live: &mut Branch,
    frozen: &NetworkParams<f64>,
    problem: &ProblemSpec,
    bc: &BcWrapper,
    weights: &PenaltyWeights,
    xs: &ndarray::Array2<f64>,
    ascent: bool,
) -> Result<f64, TrainError> {
    let volume = problem.domain.volume();
    let arch = live.params.arch;
    let view = arch.param_view();

    let bc_data = bc.eval_batch(xs);
    let (fz_u, fz_g) = eval_value_grad(frozen, xs);
    let (fz_u, fz_g) = wrap_plain(&fz_u, &fz_g, &bc_data);

    let mut tape: Tape<f64> = Tape::new();
    let group = tape.register_params(&live.params.theta, &view)?;
    let x_node = tape.constant(xs.clone());
    let raw = forward_value_grad(&mut tape, group, &arch, x_node)?;
    let bc_nodes = bc_constants(&mut tape, &bc_data);
    let live_net = wrap_bc(&mut tape, &raw, &bc_nodes)?;
    let frozen_net = constant_net(&mut tape, &fz_u, &fz_g);

    let interior = InteriorNodes {
        f: point_constants(&mut tape, xs, &problem.source),
        psi: point_constants(&mut tape, xs, &problem.obstacle),
    };
    let (u_net, v_net) = if ascent {
        (&frozen_net, &live_net)
    } else {
        (&live_net, &frozen_net)
    };
    let obj = objective_bc(
        &mut tape,
        u_net,
        v_net,
        &interior,
        problem.reaction,
        &problem.drift,
        volume,
        weights,
    )?;
    let value = tape.scalar_value(obj);
    tape.backward(obj)?;
    let g: Vec<f64> = if ascent {
        tape.grad(group).iter().map(|&x| -x).collect()
    } else {
        tape.grad(group).to_vec()
    };
    let lr = lr_at(&live.schedule, live.steps);
    adamw_step(&mut live.params.theta, &g, &mut live.adam, lr)?;
    live.steps += 1;
    Ok(value)
}

/// Algorithm 1: alternating single AdamW steps, the solution branch on
/// even epochs and the test-function branch on odd ones, metrics every
/// `cadence` epochs on the fixed held-out grid.
pub fn gda_train(
    problem: &ProblemSpec,
    config: &TrainConfig,
) -> Result<(NetworkParams<f64>, TrainingRecord), TrainError> {
    config.validate()?;
    let experiment = experiment_id(&config.problem);
    let (bc, lift_converged) = build_bc(problem, config)?;
    let grid = EvalGrid::dense(problem.domain);

    let mut soln = Branch::new(
        crate::nn::init_params(config.solution_arch, derive_seed(config.seed, 1)),
        config.schedule(config.lr_soln),
    );
    let mut test = Branch::new(
        crate::nn::init_params(config.test_arch, derive_seed(config.seed, 2)),
        config.schedule(config.lr_testfn),
    );

    let mut rows = Vec::new();
    for epoch in 0..config.epochs {
        let stream = StreamKey {
            experiment,
            seed: config.seed,
            epoch: epoch as u64,
            purpose: Purpose::Interior,
        };
        let xs = sample_interior(&problem.domain, config.n_interior, &stream);
        let ascent = epoch % 2 == 1;
        let value = if ascent {
            branch_step(&mut test, &soln.params, problem, &bc, &config.weights, &xs, true)
        } else {
            branch_step(&mut soln, &test.params, problem, &bc, &config.weights, &xs, false)
        }?;
        if !value.is_finite() {
            return Err(TrainError::NonFinite {
                value,
                epoch,
                seed: config.seed,
                stream,
            });
        }
        if epoch % config.cadence == 0 || epoch + 1 == config.epochs {
            let row = match network_errors(&soln.params, &bc, problem, &grid) {
                Ok(e) => LogRow {
                    epoch,
                    error_l2: e.l2,
                    error_linfty: e.linf,
                    h_one_norm: e.h1,
                    objective: value,
                },
                Err(_) => LogRow {
                    epoch,
                    error_l2: f64::NAN,
                    error_linfty: f64::NAN,
                    h_one_norm: f64::NAN,
                    objective: value,
                },
            };
            rows.push(row);
        }
    }

    let final_errors = network_errors(&soln.params, &bc, problem, &grid).ok();
    Ok((
        soln.params,
        TrainingRecord {
            seed: config.seed,
            rows,
            final_errors,
            lift_converged,
        },
    ))
}

/// Per-seed outcome of a batch run; failures are kept, not propagated.
pub struct ExperimentSummary {
    pub records: Vec<TrainingRecord>,
    pub failures: Vec<(u64, String)>,
    pub l2_quartiles: Option<Quartiles>,
}

/// "example,p25,p50,p75" of the final L2 errors.
pub fn summary_csv(problem: &str, summary: &ExperimentSummary) -> String {
    let mut out = String::from("example,p25,p50,p75\n");
    if let Some(q) = summary.l2_quartiles {
        writeln!(out, "{},{},{},{}", problem, q.p25, q.p50, q.p75).expect("string write");
    }
    out
}

/// Independent runs over a seed list.  Aggregation sorts by seed first, so
/// the summary is independent of completion order.
pub fn run_experiment(
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<ExperimentSummary, TrainError> {
    assert!(!seeds.is_empty());
    let problem = ProblemSpec::by_name(&base.problem)?;
    let outcomes: Vec<(u64, Result<TrainingRecord, String>)> = {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|&seed| {
                let problem = ProblemSpec::by_name(&base.problem).expect("name already resolved");
                let config = TrainConfig {
                    seed,
                    ..base.clone()
                };
                let r = gda_train(&problem, &config)
                    .map(|(_, rec)| rec)
                    .map_err(|e| e.to_string());
                (seed, r)
            })
            .collect()
    };
    drop(problem);
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|(seed, _)| *seed);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in outcomes {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((seed, e)),
        }
    }
    let finals: Vec<f64> = records
        .iter()
        .map(TrainingRecord::final_l2)
        .filter(|v| v.is_finite())
        .collect();
    let l2_quartiles = if finals.len() >= 2 {
        Some(quartiles(&finals))
    } else {
        None
    };
    Ok(ExperimentSummary {
        records,
        failures,
        l2_quartiles,
    })
}

#[derive(Debug, Clone)]
pub enum SweepGrid {
    /// Scales w_o1 and w_o2 together by value / w_o1.
    ObstacleWeight(Vec<f64>),
    GapWeight(Vec<f64>),
    /// (depth, width) of both live networks.
    NetworkSize(Vec<(usize, usize)>),
}

/// One aggregated grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    /// depth * width for network-size sweeps, the weight value otherwise.
    pub value: f64,
    pub mean_l2: f64,
    pub mean_h1: f64,
    pub n_runs: usize,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("point,value,mean_l2,mean_h1,n_runs\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.label, r.value, r.mean_l2, r.mean_h1, r.n_runs
        )
        .expect("string write");
    }
    out
}

/// Mean final errors over `seeds` at every grid point.
pub fn sweep(grid: &SweepGrid, base: &TrainConfig, seeds: &[u64]) -> Result<Vec<SweepRow>, TrainError> {
    let configs: Vec<(String, f64, TrainConfig)> = match grid {
        SweepGrid::ObstacleWeight(vals) => vals
            .iter()
            .map(|&w| {
                let mut c = base.clone();
                let ratio = if base.weights.w_o1 > 0.0 {
                    base.weights.w_o2 / base.weights.w_o1
                } else {
                    1.0
                };
                c.weights.w_o1 = w;
                c.weights.w_o2 = w * ratio;
                (format!("w_o1={w}"), w, c)
            })
            .collect(),
        SweepGrid::GapWeight(vals) => vals
            .iter()
            .map(|&g| {
                let mut c = base.clone();
                c.weights.gap = g;
                (format!("gap={g}"), g, c)
            })
            .collect(),
        SweepGrid::NetworkSize(sizes) => sizes
            .iter()
            .map(|&(d, w)| {
                let mut c = base.clone();
                let dim = c.solution_arch.input_dim;
                c.solution_arch = Architecture::drr(dim, d, w);
                c.test_arch = c.solution_arch;
                (format!("{d}x{w}"), (d * w) as f64, c)
            })
            .collect(),
    };
    assert!(!configs.is_empty());
    let mut rows = Vec::new();
    for (label, value, config) in configs {
        let summary = run_experiment(&config, seeds)?;
        let l2: Vec<f64> = summary
            .records
            .iter()
            .map(TrainingRecord::final_l2)
            .filter(|v| v.is_finite())
            .collect();
        let h1: Vec<f64> = summary
            .records
            .iter()
            .map(TrainingRecord::final_h1)
            .filter(|v| v.is_finite())
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        rows.push(SweepRow {
            label,
            value,
            mean_l2: mean(&l2),
            mean_h1: mean(&h1),
            n_runs: summary.records.len(),
        });
    }
    Ok(rows)
}
