//! Network architectures with coupled value-and-gradient forward passes.
//!
//! Two architectures are supported: the Deep Ritz residual network (blocks
//! of two affine+tanh maps with a skip connection) and a plain feedforward
//! network.  The forward pass is batched: the input is an n x N matrix of
//! collocation points and every intermediate is a width x N matrix, so one
//! pass is a handful of matrix products.
//!
//! Spatial gradients are produced by propagating the input Jacobian
//! alongside the values.  With s = tanh(pre-activation) the chain is
//! J(l) = (1 - s^2) o (A(l) J(l-1)) + J(l-2) (skip on even layers), and
//! every step is recorded on the tape, so one reverse pass differentiates
//! losses containing both u and its spatial gradient.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{GroupId, NodeId, ParamView, Tape, TapeError};
use crate::problems::Domain;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint header `{0}`")]
    BadHeader(String),
    #[error("checkpoint payload has {got} values, architecture needs {expected}")]
    BadLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Drr,
    Ffn,
}

/// Shape of one network; the activation is tanh throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub kind: NetKind,
    pub input_dim: usize,
    pub depth: usize,
    pub width: usize,
}

impl Architecture {
    pub fn drr(input_dim: usize, depth: usize, width: usize) -> Self {
        assert!(input_dim >= 1 && depth >= 1 && width >= 1);
        assert!(width >= input_dim, "first affine map must lift the input");
        Architecture {
            kind: NetKind::Drr,
            input_dim,
            depth,
            width,
        }
    }

    pub fn ffn(input_dim: usize, depth: usize, width: usize) -> Self {
        assert!(input_dim >= 1 && depth >= 1 && width >= 1);
        Architecture {
            kind: NetKind::Ffn,
            input_dim,
            depth,
            width,
        }
    }

    /// (rows, cols) of every weight and bias, in flat storage order.
    fn param_shapes(&self) -> Vec<(usize, usize)> {
        let (n, w) = (self.input_dim, self.width);
        let mut shapes = vec![(w, n), (w, 1)];
        let hidden = match self.kind {
            NetKind::Drr => 2 * self.depth,
            NetKind::Ffn => self.depth,
        };
        for _ in 0..hidden {
            shapes.push((w, w));
            shapes.push((w, 1));
        }
        shapes.push((1, w));
        shapes.push((1, 1));
        shapes
    }

    pub fn param_view(&self) -> ParamView {
        ParamView::new(&self.param_shapes())
    }

    /// Total number of learnable parameters.  For DRR this is the closed
    /// formula 2 d w^2 + (n + 2d + 2) w + 1.
    pub fn param_count(&self) -> usize {
        let count = self.param_view().len();
        if self.kind == NetKind::Drr {
            let (n, d, w) = (self.input_dim, self.depth, self.width);
            debug_assert_eq!(count, 2 * d * w * w + (n + 2 * d + 2) * w + 1);
        }
        count
    }

    fn kind_str(&self) -> &'static str {
        match self.kind {
            NetKind::Drr => "DRR",
            NetKind::Ffn => "FFN",
        }
    }
}

/// All weights and biases of one network in one flat vector.
#[derive(Debug, Clone)]
pub struct NetworkParams<S> {
    pub arch: Architecture,
    pub theta: Vec<S>,
}

impl<S: Scalar> NetworkParams<S> {
    pub fn zeros(arch: Architecture) -> Self {
        NetworkParams {
            arch,
            theta: vec![S::zero(); arch.param_count()],
        }
    }
}

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases
/// using their layer's fan-in; deterministic in the seed.
pub fn init_params<S: Scalar>(arch: Architecture, seed: u64) -> NetworkParams<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = arch.param_shapes();
    let mut theta = Vec::with_capacity(arch.param_count());
    for pair in shapes.chunks(2) {
        let fan_in = pair[0].1; // weight columns
        let bound = 1.0 / (fan_in as f64).sqrt();
        for &(r, c) in pair {
            for _ in 0..r * c {
                theta.push(S::cast(rng.gen_range(-bound..bound)));
            }
        }
    }
    NetworkParams { arch, theta }
}

/// Tape nodes of a batched network evaluation: `u` is 1 x N, `grad[p]` is
/// the 1 x N row of spatial derivatives along axis p.
pub struct TapeNet {
    pub u: NodeId,
    pub grad: Vec<NodeId>,
}

/// Record the forward pass of a registered parameter group on a batch of
/// points `x` (an input_dim x N constant node).
pub fn forward_value_grad<S: Scalar>(
    tape: &mut Tape<S>,
    group: GroupId,
    arch: &Architecture,
    x: NodeId,
) -> Result<TapeNet, TapeError> {
    let n = arch.input_dim;
    let batch = tape.value(x).ncols();
    assert_eq!(tape.value(x).nrows(), n, "input must be input_dim x N");

    let nsegs = arch.param_view().num_segments();
    let leaves: Vec<NodeId> = (0..nsegs).map(|s| tape.leaf(group, s)).collect();

    // basis matrices for the Jacobian seed: row p of ones
    let seeds: Vec<NodeId> = (0..n)
        .map(|p| {
            let mut e = Array2::zeros((n, batch));
            e.row_mut(p).fill(S::one());
            tape.constant(e)
        })
        .collect();

    let mut f = tape.affine(leaves[0], x, Some(leaves[1]))?;
    let mut jac: Vec<NodeId> = seeds
        .iter()
        .map(|&e| tape.affine(leaves[0], e, None))
        .collect::<Result<_, _>>()?;

    match arch.kind {
        NetKind::Drr => {
            let mut f_prev2 = None;
            let mut jac_prev2: Option<Vec<NodeId>> = None;
            for l in 1..=2 * arch.depth {
                let wseg = 2 * l;
                let pre = tape.affine(leaves[wseg], f, Some(leaves[wseg + 1]))?;
                let s = tape.tanh(pre);
                let sp = tape.tanh_prime(s);
                let even = l % 2 == 0;
                let f_new = if even {
                    tape.add(s, f_prev2.unwrap())?
                } else {
                    s
                };
                let mut jac_new = Vec::with_capacity(n);
                for (p, &jp) in jac.iter().enumerate() {
                    let aj = tape.affine(leaves[wseg], jp, None)?;
                    let mut jn = tape.hadamard(sp, aj)?;
                    if even {
                        jn = tape.add(jn, jac_prev2.as_ref().unwrap()[p])?;
                    }
                    jac_new.push(jn);
                }
                f_prev2 = Some(f);
                jac_prev2 = Some(jac);
                f = f_new;
                jac = jac_new;
            }
        }
        NetKind::Ffn => {
            // activation follows every affine map except the last
            let s = tape.tanh(f);
            let sp = tape.tanh_prime(s);
            f = s;
            for j in jac.iter_mut() {
                *j = tape.hadamard(sp, *j)?;
            }
            for l in 1..=arch.depth {
                let wseg = 2 * l;
                let pre = tape.affine(leaves[wseg], f, Some(leaves[wseg + 1]))?;
                let s = tape.tanh(pre);
                let sp = tape.tanh_prime(s);
                f = s;
                for j in jac.iter_mut() {
                    let aj = tape.affine(leaves[wseg], *j, None)?;
                    *j = tape.hadamard(sp, aj)?;
                }
            }
        }
    }

    let last = leaves.len() - 2;
    let u = tape.affine(leaves[last], f, Some(leaves[last + 1]))?;
    let grad = jac
        .into_iter()
        .map(|j| tape.affine(leaves[last], j, None))
        .collect::<Result<_, _>>()?;
    Ok(TapeNet { u, grad })
}

/// Same forward pass without a tape, for frozen networks and evaluation
/// grids.  Returns u (length N) and the spatial gradient (input_dim x N).
pub fn eval_value_grad<S: Scalar>(
    params: &NetworkParams<S>,
    xs: &Array2<S>,
) -> (Array1<S>, Array2<S>) {
    let arch = &params.arch;
    let n = arch.input_dim;
    let batch = xs.ncols();
    assert_eq!(xs.nrows(), n);
    let view = arch.param_view();
    let mat = |s: usize| view.matrix(&params.theta, s);

    let affine = |w: &Array2<S>, x: &Array2<S>, b: &Array2<S>| -> Array2<S> {
        let mut y = w.dot(x);
        let bcol = b.column(0).to_owned();
        for mut col in y.axis_iter_mut(Axis(1)) {
            col += &bcol;
        }
        y
    };

    let a0 = mat(0);
    let mut f = affine(&a0, xs, &mat(1));
    let mut jac: Vec<Array2<S>> = (0..n)
        .map(|p| {
            let col = a0.column(p).to_owned();
            let mut j = Array2::zeros((arch.width, batch));
            for mut c in j.axis_iter_mut(Axis(1)) {
                c.assign(&col);
            }
            j
        })
        .collect();

    let step = |f: &mut Array2<S>,
                    jac: &mut Vec<Array2<S>>,
                    f_prev2: Option<&Array2<S>>,
                    jac_prev2: Option<&Vec<Array2<S>>>,
                    wseg: usize| {
        let w = mat(wseg);
        let pre = affine(&w, f, &mat(wseg + 1));
        let s = pre.mapv(|v| v.tanh());
        let sp = s.mapv(|v| S::one() - v * v);
        for (p, j) in jac.iter_mut().enumerate() {
            let mut aj = w.dot(&*j);
            aj *= &sp;
            if let Some(j2) = jac_prev2 {
                aj += &j2[p];
            }
            *j = aj;
        }
        *f = if let Some(f2) = f_prev2 { s + f2 } else { s };
    };

    match arch.kind {
        NetKind::Drr => {
            let mut f_prev2: Option<Array2<S>> = None;
            let mut jac_prev2: Option<Vec<Array2<S>>> = None;
            for l in 1..=2 * arch.depth {
                let even = l % 2 == 0;
                let f_save = f.clone();
                let jac_save = jac.clone();
                step(
                    &mut f,
                    &mut jac,
                    if even { f_prev2.as_ref() } else { None },
                    if even { jac_prev2.as_ref() } else { None },
                    2 * l,
                );
                f_prev2 = Some(f_save);
                jac_prev2 = Some(jac_save);
            }
        }
        NetKind::Ffn => {
            let s = f.mapv(|v| v.tanh());
            let sp = s.mapv(|v| S::one() - v * v);
            for j in jac.iter_mut() {
                *j *= &sp;
            }
            f = s;
            for l in 1..=arch.depth {
                step(&mut f, &mut jac, None, None, 2 * l);
            }
        }
    }

    let last = view.num_segments() - 2;
    let al = mat(last);
    let u = al.dot(&f).row(0).to_owned() + mat(last + 1)[[0, 0]];
    let mut grad = Array2::zeros((n, batch));
    for (p, j) in jac.iter().enumerate() {
        grad.row_mut(p).assign(&al.dot(j).row(0));
    }
    (u, grad)
}

/// Wrap precomputed (frozen) network values and gradients as constant tape
/// nodes, so a frozen network enters a loss without being differentiated.
pub fn constant_net<S: Scalar>(
    tape: &mut Tape<S>,
    u: &Array1<f64>,
    grad: &Array2<f64>,
) -> TapeNet {
    let cast_row = |tape: &mut Tape<S>, row: Vec<f64>| {
        let v: Vec<S> = row.into_iter().map(S::cast).collect();
        tape.constant_row(&v)
    };
    let u_node = cast_row(tape, u.to_vec());
    let grad_nodes = (0..grad.nrows())
        .map(|p| cast_row(tape, grad.row(p).to_vec()))
        .collect();
    TapeNet {
        u: u_node,
        grad: grad_nodes,
    }
}

/// Closed-form cutoff vanishing on the boundary of an interval or
/// rectangle, normalized to maximum 1 so penalty weights transfer across
/// domain sizes.
#[derive(Debug, Clone)]
pub struct Eta {
    bounds: Vec<(f64, f64)>,
}

/// 1D: eta(x) = 4 (x-a)(b-x)/(b-a)^2; products of those per axis in 2D.
pub fn build_eta(domain: &Domain) -> Eta {
    Eta {
        bounds: domain.bounds(),
    }
}

impl Eta {
    fn factor(&self, axis: usize, x: f64) -> (f64, f64) {
        let (a, b) = self.bounds[axis];
        let den = (b - a) * (b - a);
        let val = 4.0 * (x - a) * (b - x) / den;
        let der = 4.0 * (a + b - 2.0 * x) / den;
        (val, der)
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        (0..self.bounds.len())
            .map(|i| self.factor(i, p[i]).0)
            .product()
    }

    pub fn grad(&self, p: &[f64]) -> Vec<f64> {
        let factors: Vec<(f64, f64)> = (0..self.bounds.len())
            .map(|i| self.factor(i, p[i]))
            .collect();
        (0..self.bounds.len())
            .map(|i| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(j, &(v, d))| if i == j { d } else { v })
                    .product()
            })
            .collect()
    }
}

/// Boundary treatment: u = u_raw * eta + lift, with the lift a frozen
/// pretrained network (absent when the Dirichlet data is zero).
pub struct BcWrapper {
    pub eta: Eta,
    pub lift: Option<NetworkParams<f64>>,
}

/// Cutoff and lift evaluated on one batch of points.
pub struct BcData {
    pub eta_vals: Array1<f64>,
    pub eta_grads: Array2<f64>,
    pub lift_vals: Array1<f64>,
    pub lift_grads: Array2<f64>,
}

impl BcWrapper {
    pub fn eval_batch(&self, xs: &Array2<f64>) -> BcData {
        let n = xs.nrows();
        let batch = xs.ncols();
        let mut eta_vals = Array1::zeros(batch);
        let mut eta_grads = Array2::zeros((n, batch));
        for (i, col) in xs.axis_iter(Axis(1)).enumerate() {
            let p: Vec<f64> = col.to_vec();
            eta_vals[i] = self.eta.eval(&p);
            for (q, g) in self.eta.grad(&p).into_iter().enumerate() {
                eta_grads[[q, i]] = g;
            }
        }
        let (lift_vals, lift_grads) = match &self.lift {
            Some(net) => eval_value_grad(net, xs),
            None => (Array1::zeros(batch), Array2::zeros((n, batch))),
        };
        BcData {
            eta_vals,
            eta_grads,
            lift_vals,
            lift_grads,
        }
    }
}

/// Constant tape nodes for one batch of boundary data.
pub struct BcNodes {
    pub eta: NodeId,
    pub eta_grad: Vec<NodeId>,
    pub lift: NodeId,
    pub lift_grad: Vec<NodeId>,
}

pub fn bc_constants<S: Scalar>(tape: &mut Tape<S>, data: &BcData) -> BcNodes {
    let n = data.eta_grads.nrows();
    let row = |t: &mut Tape<S>, v: &Array1<f64>| {
        let cast: Vec<S> = v.iter().map(|&x| S::cast(x)).collect();
        t.constant_row(&cast)
    };
    let eta = row(tape, &data.eta_vals);
    let lift = row(tape, &data.lift_vals);
    let eta_grad = (0..n)
        .map(|p| row(tape, &data.eta_grads.row(p).to_owned()))
        .collect();
    let lift_grad = (0..n)
        .map(|p| row(tape, &data.lift_grads.row(p).to_owned()))
        .collect();
    BcNodes {
        eta,
        eta_grad,
        lift,
        lift_grad,
    }
}

/// u = u_raw * eta + lift with the product-rule gradient, recorded on the
/// tape so both networks stay differentiable through the wrapper.
pub fn wrap_bc<S: Scalar>(
    tape: &mut Tape<S>,
    raw: &TapeNet,
    bc: &BcNodes,
) -> Result<TapeNet, TapeError> {
    let ue = tape.hadamard(raw.u, bc.eta)?;
    let u = tape.add(ue, bc.lift)?;
    let mut grad = Vec::with_capacity(raw.grad.len());
    for (p, &gp) in raw.grad.iter().enumerate() {
        let a = tape.hadamard(gp, bc.eta)?;
        let b = tape.hadamard(raw.u, bc.eta_grad[p])?;
        let ab = tape.add(a, b)?;
        grad.push(tape.add(ab, bc.lift_grad[p])?);
    }
    Ok(TapeNet { u, grad })
}

/// Plain-array version of [`wrap_bc`] for frozen networks and metrics.
pub fn wrap_plain(
    u_raw: &Array1<f64>,
    grad_raw: &Array2<f64>,
    data: &BcData,
) -> (Array1<f64>, Array2<f64>) {
    let u = u_raw * &data.eta_vals + &data.lift_vals;
    let mut grad = grad_raw * &data.eta_vals;
    for (p, mut row) in grad.axis_iter_mut(Axis(0)).enumerate() {
        row += &(&data.eta_grads.row(p) * u_raw);
        row += &data.lift_grads.row(p);
    }
    (u, grad)
}

/// Write a checkpoint: one text header line, then the flat parameter
/// vector as little-endian f64.
pub fn save_checkpoint(path: &Path, params: &NetworkParams<f64>) -> Result<(), CheckpointError> {
    let arch = &params.arch;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "{} n={} d={} w={}",
        arch.kind_str(),
        arch.input_dim,
        arch.depth,
        arch.width
    )?;
    for v in &params.theta {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams<f64>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let header = String::from_utf8(header).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad = || CheckpointError::BadHeader(header.clone());
    if parts.len() != 4 {
        return Err(bad());
    }
    let field = |s: &str, key: &str| -> Result<usize, CheckpointError> {
        s.strip_prefix(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)
    };
    let n = field(parts[1], "n=")?;
    let d = field(parts[2], "d=")?;
    let w = field(parts[3], "w=")?;
    let arch = match parts[0] {
        "DRR" => Architecture::drr(n, d, w),
        "FFN" => Architecture::ffn(n, d, w),
        _ => return Err(bad()),
    };
    let expected = arch.param_count();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 8 {
        return Err(CheckpointError::BadLength {
            got: bytes.len() / 8,
            expected,
        });
    }
    let theta = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(NetworkParams { arch, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::Rng;

    #[test]
    fn drr_param_counts() {
        assert_eq!(Architecture::drr(1, 4, 80).param_count(), 52081);
        assert_eq!(Architecture::drr(1, 1, 1).param_count(), 8);
        assert_eq!(Architecture::drr(2, 4, 80).param_count(), 52161);
    }

    #[test]
    fn view_matches_count_across_shapes() {
        for d in 1..=8 {
            for w in 1..=16 {
                for n in 1..=2usize.min(w) {
                    let arch = Architecture::drr(n, d, w);
                    assert_eq!(arch.param_view().len(), arch.param_count());
                }
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = Architecture::drr(1, 4, 80);
        let a: NetworkParams<f64> = init_params(arch, 7);
        let b: NetworkParams<f64> = init_params(arch, 7);
        let c: NetworkParams<f64> = init_params(arch, 8);
        assert_eq!(a.theta, b.theta);
        assert!(a.theta.iter().zip(&c.theta).any(|(x, y)| x != y));
        assert!(a.theta.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_params_give_final_bias() {
        let arch = Architecture::drr(1, 2, 4);
        let mut params: NetworkParams<f64> = NetworkParams::zeros(arch);
        let m = params.theta.len();
        params.theta[m - 1] = 5.0; // final bias
        let xs = Array2::from_shape_vec((1, 3), vec![0.1, 0.5, 0.9]).unwrap();
        let (u, g) = eval_value_grad(&params, &xs);
        assert!(u.iter().all(|&v| (v - 5.0).abs() < 1e-15));
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_single_block() {
        // all weights 1, all biases 0, one block of width 1, at x = 0:
        // u = tanh(tanh(0)) + 0 = 0 and u' = s'(0) s'(0) + 1 = 2
        let arch = Architecture::drr(1, 1, 1);
        let params = NetworkParams {
            arch,
            theta: vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        };
        let xs: Array2<f64> = Array2::zeros((1, 1));
        let (u, g) = eval_value_grad(&params, &xs);
        assert!(u[0].abs() < 1e-15);
        assert!((g[[0, 0]] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tape_forward_matches_plain_eval() {
        for arch in [Architecture::drr(2, 2, 6), Architecture::ffn(2, 3, 5)] {
            let params: NetworkParams<f64> = init_params(arch, 3);
            let xs = Array2::from_shape_fn((2, 7), |(i, j)| 0.1 * (i + 1) as f64 * (j as f64 - 3.0));
            let (u, g) = eval_value_grad(&params, &xs);

            let mut tape = Tape::new();
            let group = tape
                .register_params(&params.theta, &arch.param_view())
                .unwrap();
            let x = tape.constant(xs.clone());
            let net = forward_value_grad(&mut tape, group, &arch, x).unwrap();
            for j in 0..7 {
                assert!((tape.value(net.u)[[0, j]] - u[j]).abs() < 1e-13);
                for p in 0..2 {
                    assert!((tape.value(net.grad[p])[[0, j]] - g[[p, j]]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn spatial_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for arch in [Architecture::drr(1, 1, 8), Architecture::drr(2, 2, 8)] {
            let params: NetworkParams<f64> = init_params(arch, 11);
            let n = arch.input_dim;
            for _ in 0..20 {
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect();
                let xs = Array2::from_shape_vec((n, 1), p.clone()).unwrap();
                let (_, g) = eval_value_grad(&params, &xs);
                let h = 1e-6;
                for q in 0..n {
                    let mut lo = p.clone();
                    let mut hi = p.clone();
                    lo[q] -= h;
                    hi[q] += h;
                    let (ul, _) =
                        eval_value_grad(&params, &Array2::from_shape_vec((n, 1), lo).unwrap());
                    let (uh, _) =
                        eval_value_grad(&params, &Array2::from_shape_vec((n, 1), hi).unwrap());
                    let fd = (uh[0] - ul[0]) / (2.0 * h);
                    let denom = fd.abs().max(1e-8);
                    assert!(
                        ((g[[q, 0]] - fd) / denom).abs() < 1e-6,
                        "axis {q}: {} vs {}",
                        g[[q, 0]],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn eta_values() {
        let eta = build_eta(&Domain::Interval { a: 0.0, b: 1.0 });
        assert_eq!(eta.eval(&[0.5]), 1.0);
        assert_eq!(eta.eval(&[0.0]), 0.0);
        assert_eq!(eta.eval(&[1.0]), 0.0);

        let eta = build_eta(&Domain::Interval { a: -2.0, b: 2.0 });
        assert_eq!(eta.eval(&[0.0]), 1.0);

        let eta = build_eta(&Domain::Rectangle {
            x: (-1.0, 1.0),
            y: (-1.0, 1.0),
        });
        assert_eq!(eta.eval(&[0.0, 0.0]), 1.0);
        assert_eq!(eta.eval(&[1.0, 0.3]), 0.0);
        // gradient vs finite differences
        let h = 1e-7;
        let p = [0.3, -0.6];
        let g = eta.grad(&p);
        let fdx = (eta.eval(&[p[0] + h, p[1]]) - eta.eval(&[p[0] - h, p[1]])) / (2.0 * h);
        let fdy = (eta.eval(&[p[0], p[1] + h]) - eta.eval(&[p[0], p[1] - h])) / (2.0 * h);
        assert!((g[0] - fdx).abs() < 1e-6 && (g[1] - fdy).abs() < 1e-6);
    }

    #[test]
    fn wrapped_network_vanishes_on_boundary() {
        let arch = Architecture::drr(1, 2, 6);
        let params: NetworkParams<f64> = init_params(arch, 5);
        let wrapper = BcWrapper {
            eta: build_eta(&Domain::Interval { a: 0.0, b: 1.0 }),
            lift: None,
        };
        let xs = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        let (u_raw, g_raw) = eval_value_grad(&params, &xs);
        let data = wrapper.eval_batch(&xs);
        let (u, _) = wrap_plain(&u_raw, &g_raw, &data);
        assert!(u.iter().all(|&v| v.abs() <= 1e-12));
    }

    #[test]
    fn wrap_bc_constant_network() {
        // u_raw = 1 with zero gradient: u = eta, u' = eta'
        let arch = Architecture::drr(1, 1, 2);
        let mut params: NetworkParams<f64> = NetworkParams::zeros(arch);
        let m = params.theta.len();
        params.theta[m - 1] = 1.0;
        let wrapper = BcWrapper {
            eta: build_eta(&Domain::Interval { a: 0.0, b: 1.0 }),
            lift: None,
        };
        let xs = Array2::from_shape_vec((1, 1), vec![0.5]).unwrap();
        let (u_raw, g_raw) = eval_value_grad(&params, &xs);
        let data = wrapper.eval_batch(&xs);
        let (u, g) = wrap_plain(&u_raw, &g_raw, &data);
        assert!((u[0] - 1.0).abs() < 1e-15);
        assert!(g[[0, 0]].abs() < 1e-12);
    }

    #[test]
    fn tape_wrap_matches_plain_wrap() {
        let arch = Architecture::drr(2, 1, 4);
        let params: NetworkParams<f64> = init_params(arch, 9);
        let lift: NetworkParams<f64> = init_params(arch, 10);
        let wrapper = BcWrapper {
            eta: build_eta(&Domain::Rectangle {
                x: (-1.0, 1.0),
                y: (-1.0, 1.0),
            }),
            lift: Some(lift),
        };
        let xs = Array2::from_shape_fn((2, 5), |(i, j)| 0.15 * (j as f64 - 2.0) * (i as f64 + 1.0));
        let (u_raw, g_raw) = eval_value_grad(&params, &xs);
        let data = wrapper.eval_batch(&xs);
        let (u, g) = wrap_plain(&u_raw, &g_raw, &data);

        let mut tape: Tape<f64> = Tape::new();
        let group = tape
            .register_params(&params.theta, &arch.param_view())
            .unwrap();
        let x = tape.constant(xs.clone());
        let raw = forward_value_grad(&mut tape, group, &arch, x).unwrap();
        let nodes = bc_constants(&mut tape, &data);
        let wrapped = wrap_bc(&mut tape, &raw, &nodes).unwrap();
        for j in 0..5 {
            assert!((tape.value(wrapped.u)[[0, j]] - u[j]).abs() < 1e-13);
            for p in 0..2 {
                assert!((tape.value(wrapped.grad[p])[[0, j]] - g[[p, j]]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let arch = Architecture::drr(2, 2, 5);
        let params: NetworkParams<f64> = init_params(arch, 1);
        let dir = std::env::temp_dir().join("gapnet_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.ckpt");
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.arch, arch);
        assert_eq!(loaded.theta, params.theta);
    }
}
