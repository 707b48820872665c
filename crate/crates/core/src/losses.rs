//! Discrete minmax objectives.
//!
//! All losses are recorded on a tape over batched 1 x N rows, so one
//! reverse pass gives the parameter gradient of the full objective.  The
//! networks enter as [`TapeNet`]s: live networks as recorded forward
//! passes, frozen ones as constants (see [`crate::nn::constant_net`]).

use thiserror::Error;

use ndarray::{Array1, Array2};

use crate::autodiff::{NodeId, Tape, TapeError};
use crate::nn::{
    constant_net, eval_value_grad, forward_value_grad, wrap_plain, BcWrapper, NetworkParams,
    TapeNet,
};
use crate::optimizer::{adamw_step, AdamState, OptimError};
use crate::problems::ProblemSpec;
use crate::sampler::{sample_interior, Purpose, StreamKey};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("negative weight {name} = {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("non-finite objective value {value} at ascent step {step}")]
    NonFiniteObjective { value: f64, step: usize },
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Penalty weights of the discrete objectives; `gap` is 1/(2 gamma).
#[derive(Debug, Clone, Copy)]
pub struct PenaltyWeights {
    pub w_o1: f64,
    pub w_o2: f64,
    pub w_b1: f64,
    pub w_b2: f64,
    pub gap: f64,
}

impl PenaltyWeights {
    /// Weights for the boundary-condition formulation (no boundary penalty).
    pub fn bc(w_o1: f64, w_o2: f64, gap: f64) -> Self {
        PenaltyWeights {
            w_o1,
            w_o2,
            w_b1: 0.0,
            w_b2: 0.0,
            gap,
        }
    }

    /// Rejects negative weights.  When a coercivity constant is supplied,
    /// returns an advisory warning if gamma = 1/(2 gap) fails the margin
    /// condition gamma > 1/(2 C_a) that the gap reformulation assumes.
    pub fn validate(&self, coercivity: Option<f64>) -> Result<Option<String>, LossError> {
        for (name, value) in [
            ("w_o1", self.w_o1),
            ("w_o2", self.w_o2),
            ("w_b1", self.w_b1),
            ("w_b2", self.w_b2),
            ("gap", self.gap),
        ] {
            if value < 0.0 {
                return Err(LossError::NegativeWeight { name, value });
            }
        }
        if let Some(c_a) = coercivity {
            if self.gap > 0.0 {
                let gamma = 1.0 / (2.0 * self.gap);
                if gamma <= 1.0 / (2.0 * c_a) {
                    return Ok(Some(format!(
                        "gamma = {gamma} does not exceed 1/(2 C_a) = {}; \
                         the gap term may break coercivity",
                        1.0 / (2.0 * c_a)
                    )));
                }
            }
        }
        Ok(None)
    }
}

fn batch_len<S: Scalar>(tape: &Tape<S>, node: NodeId) -> usize {
    tape.value(node).ncols()
}

/// The discrete bilinear form
/// (|Omega|/N) sum [grad u . (grad u - grad v) + (b . grad u)(u - v)
///                  + k u (u - v) - f (u - v)].
pub fn hat_l<S: Scalar>(
    tape: &mut Tape<S>,
    u: &TapeNet,
    v: &TapeNet,
    f_vals: NodeId,
    k: f64,
    drift: &[f64],
    volume: f64,
) -> Result<NodeId, LossError> {
    let n = batch_len(tape, u.u);
    let uv = tape.sub(u.u, v.u)?;
    let mut total = None;
    let push = |tape: &mut Tape<S>, term: NodeId, total: &mut Option<NodeId>| -> Result<(), TapeError> {
        *total = Some(match *total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
        Ok(())
    };
    for (p, &gu) in u.grad.iter().enumerate() {
        let dg = tape.sub(gu, v.grad[p])?;
        let term = tape.dot(gu, dg)?;
        push(tape, term, &mut total)?;
    }
    if drift.iter().any(|&b| b != 0.0) {
        let mut bg = None;
        for (p, &b) in drift.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let scaled = tape.scale(u.grad[p], S::cast(b));
            bg = Some(match bg {
                Some(acc) => tape.add(acc, scaled)?,
                None => scaled,
            });
        }
        let term = tape.dot(bg.expect("nonzero drift"), uv)?;
        push(tape, term, &mut total)?;
    }
    if k != 0.0 {
        let ku = tape.scale(u.u, S::cast(k));
        let term = tape.dot(ku, uv)?;
        push(tape, term, &mut total)?;
    }
    let fterm = tape.dot(f_vals, uv)?;
    let neg_f = tape.scale(fterm, -S::one());
    push(tape, neg_f, &mut total)?;
    Ok(tape.scale(total.expect("at least one term"), S::cast(volume / n as f64)))
}

/// The nonnegative quadratic penalty
/// (|Omega| gap / N) sum [(u - v)^2 + |grad u - grad v|^2];
/// the caller subtracts it from `hat_l`.
pub fn gap_term<S: Scalar>(
    tape: &mut Tape<S>,
    u: &TapeNet,
    v: &TapeNet,
    gap_weight: f64,
    volume: f64,
) -> Result<NodeId, LossError> {
    if gap_weight < 0.0 {
        return Err(LossError::NegativeWeight {
            name: "gap",
            value: gap_weight,
        });
    }
    let n = batch_len(tape, u.u);
    let coeff = S::cast(volume * gap_weight / n as f64);
    let duv = tape.sub(u.u, v.u)?;
    let sq = tape.square(duv);
    let mut total = tape.sum_scaled(sq, coeff);
    for (p, &gu) in u.grad.iter().enumerate() {
        let dg = tape.sub(gu, v.grad[p])?;
        let sq = tape.square(dg);
        let term = tape.sum_scaled(sq, coeff);
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// (|Omega|/N) sum |(psi - u)^+|^2.
pub fn obstacle_loss<S: Scalar>(
    tape: &mut Tape<S>,
    u: NodeId,
    psi_vals: NodeId,
    volume: f64,
) -> Result<NodeId, LossError> {
    let n = batch_len(tape, u);
    let d = tape.sub(psi_vals, u)?;
    let pos = tape.positive_part(d);
    let sq = tape.square(pos);
    Ok(tape.sum_scaled(sq, S::cast(volume / n as f64)))
}

/// (|boundary|/N_b) sum (u - h)^2 over boundary samples.
pub fn boundary_loss<S: Scalar>(
    tape: &mut Tape<S>,
    u_b: NodeId,
    h_vals: NodeId,
    perimeter: f64,
) -> Result<NodeId, LossError> {
    let nb = batch_len(tape, u_b);
    let d = tape.sub(u_b, h_vals)?;
    let sq = tape.square(d);
    Ok(tape.sum_scaled(sq, S::cast(perimeter / nb as f64)))
}

/// Interior constants of one collocation batch.
pub struct InteriorNodes {
    pub f: NodeId,
    pub psi: NodeId,
}

/// The minmax objective of the boundary-condition formulation:
/// hat_L - gap term + w_o1 L_o(u) - w_o2 L_o(v).
#[allow(clippy::too_many_arguments)]
pub fn objective_bc<S: Scalar>(
    tape: &mut Tape<S>,
    u: &TapeNet,
    v: &TapeNet,
    interior: &InteriorNodes,
    k: f64,
    drift: &[f64],
    volume: f64,
    weights: &PenaltyWeights,
) -> Result<NodeId, LossError> {
    let l = hat_l(tape, u, v, interior.f, k, drift, volume)?;
    let d = gap_term(tape, u, v, weights.gap, volume)?;
    let mut total = tape.sub(l, d)?;
    if weights.w_o1 != 0.0 {
        let lo = obstacle_loss(tape, u.u, interior.psi, volume)?;
        let w = tape.scale(lo, S::cast(weights.w_o1));
        total = tape.add(total, w)?;
    }
    if weights.w_o2 != 0.0 {
        let lo = obstacle_loss(tape, v.u, interior.psi, volume)?;
        let w = tape.scale(lo, S::cast(weights.w_o2));
        total = tape.sub(total, w)?;
    }
    Ok(total)
}

/// The full-penalty objective: `objective_bc` plus
/// w_b1 L_b(u) - w_b2 L_b(v) on a boundary batch.
#[allow(clippy::too_many_arguments)]
pub fn objective_pen<S: Scalar>(
    tape: &mut Tape<S>,
    u: &TapeNet,
    v: &TapeNet,
    interior: &InteriorNodes,
    u_b: NodeId,
    v_b: NodeId,
    h_vals: NodeId,
    k: f64,
    drift: &[f64],
    volume: f64,
    perimeter: f64,
    weights: &PenaltyWeights,
) -> Result<NodeId, LossError> {
    let mut total = objective_bc(tape, u, v, interior, k, drift, volume, weights)?;
    if weights.w_b1 != 0.0 {
        let lb = boundary_loss(tape, u_b, h_vals, perimeter)?;
        let w = tape.scale(lb, S::cast(weights.w_b1));
        total = tape.add(total, w)?;
    }
    if weights.w_b2 != 0.0 {
        let lb = boundary_loss(tape, v_b, h_vals, perimeter)?;
        let w = tape.scale(lb, S::cast(weights.w_b2));
        total = tape.sub(total, w)?;
    }
    Ok(total)
}

/// Ascent settings for [`gap_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct GapConfig {
    pub ascent_epochs: usize,
    pub lr: f64,
    pub n_interior: usize,
    pub seed: u64,
    pub experiment: u64,
}

/// Lower bound on the discrete gap function of a frozen solution network:
/// gradient ascent over a test network initialized as a copy of the
/// solution, returning the best objective value seen.
pub fn gap_estimate(
    problem: &ProblemSpec,
    solution: &NetworkParams<f64>,
    bc: &BcWrapper,
    weights: &PenaltyWeights,
    cfg: &GapConfig,
) -> Result<f64, LossError> {
    weights.validate(None)?;
    let volume = problem.domain.volume();
    let mut v_params = solution.clone();
    let view = v_params.arch.param_view();
    let mut adam = AdamState::new(v_params.theta.len());
    let mut best = f64::NEG_INFINITY;

    let steps = cfg.ascent_epochs.max(1);
    for step in 0..steps {
        let key = StreamKey {
            experiment: cfg.experiment,
            seed: cfg.seed,
            epoch: step as u64,
            purpose: Purpose::GapAscent,
        };
        let xs = sample_interior(&problem.domain, cfg.n_interior, &key);
        let bc_data = bc.eval_batch(&xs);
        let (u_raw, gu_raw) = eval_value_grad(solution, &xs);
        let (u_vals, u_grads) = wrap_plain(&u_raw, &gu_raw, &bc_data);

        let mut tape: Tape<f64> = Tape::new();
        let group = tape.register_params(&v_params.theta, &view)?;
        let x_node = tape.constant(xs.clone());
        let v_raw = forward_value_grad(&mut tape, group, &v_params.arch, x_node)?;
        let bc_nodes = crate::nn::bc_constants(&mut tape, &bc_data);
        let v_net = crate::nn::wrap_bc(&mut tape, &v_raw, &bc_nodes)?;
        let u_net = constant_net(&mut tape, &u_vals, &u_grads);

        let interior = InteriorNodes {
            f: point_constants(&mut tape, &xs, &problem.source),
            psi: point_constants(&mut tape, &xs, &problem.obstacle),
        };
        let obj = objective_bc(
            &mut tape,
            &u_net,
            &v_net,
            &interior,
            problem.reaction,
            &problem.drift,
            volume,
            weights,
        )?;
        let value = tape.scalar_value(obj);
        if !value.is_finite() {
            return Err(LossError::NonFiniteObjective { value, step });
        }
        best = best.max(value);
        if cfg.ascent_epochs == 0 || cfg.lr == 0.0 {
            // no ascent: the estimate is the initialization value
            return Ok(value);
        }
        tape.backward(obj)?;
        let g: Vec<f64> = tape.grad(group).iter().map(|&x| -x).collect();
        adamw_step(&mut v_params.theta, &g, &mut adam, cfg.lr)?;
    }
    Ok(best)
}

/// Evaluate a pointwise function on each column and record it as a
/// constant 1 x N row.
pub fn point_constants<S: Scalar>(
    tape: &mut Tape<S>,
    xs: &Array2<f64>,
    f: &crate::problems::PointFn,
) -> NodeId {
    let vals: Vec<S> = xs
        .columns()
        .into_iter()
        .map(|c| S::cast(f(&c.to_vec())))
        .collect();
    tape.constant_row(&vals)
}

/// Constant 1 x N row from an existing array.
pub fn row_constant<S: Scalar>(tape: &mut Tape<S>, vals: &Array1<f64>) -> NodeId {
    let v: Vec<S> = vals.iter().map(|&x| S::cast(x)).collect();
    tape.constant_row(&v)
}
