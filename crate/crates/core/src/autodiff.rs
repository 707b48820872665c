//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records primitive operations eagerly during the forward pass
//! and replays them in reverse to accumulate adjoints.  Values are `r x c`
//! matrices; the batch of collocation points lives in the column dimension,
//! so the network forward pass is a handful of matrix products per layer
//! rather than a per-point scalar graph.
//!
//! Parameters enter the graph as leaves backed by one flat vector per
//! network (see [`ParamView`]); `backward` scatters their adjoints back into
//! a flat gradient of the same length.  Reductions run in node order, so a
//! replay with the same inputs is bit-identical.

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::Scalar;

/// Index of a recorded node.
pub type NodeId = usize;
/// Index of a registered parameter group (one per network on the tape).
pub type GroupId = usize;

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("shape mismatch in `{prim}`: {lhs:?} incompatible with {rhs:?}")]
    ShapeMismatch {
        prim: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward root must be 1x1, got {rows}x{cols}")]
    RootNotScalar { rows: usize, cols: usize },
    #[error("non-finite adjoint at node {node} (`{prim}`)")]
    NonFiniteAdjoint { node: NodeId, prim: &'static str },
    #[error("non-finite loss value at coordinate {coord} during finite differencing")]
    NonFiniteLoss { coord: usize },
    #[error("parameter vector length {got} does not match view length {expected}")]
    ParamLength { got: usize, expected: usize },
}

/// Location of one weight matrix or bias vector inside a flat parameter
/// vector.  Matrices are stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Layout of a network's parameters inside one flat vector: disjoint
/// segments covering exactly `len` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamView {
    segments: Vec<Segment>,
    len: usize,
}

impl ParamView {
    /// Build a view from segment shapes, packed contiguously in order.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let mut segments = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for &(rows, cols) in shapes {
            segments.push(Segment { offset, rows, cols });
            offset += rows * cols;
        }
        ParamView {
            segments,
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, i: usize) -> Segment {
        self.segments[i]
    }

    /// View one segment of a flat vector as a matrix.
    pub fn matrix<S: Scalar>(&self, flat: &[S], i: usize) -> Array2<S> {
        let seg = self.segments[i];
        Array2::from_shape_vec(
            (seg.rows, seg.cols),
            flat[seg.offset..seg.offset + seg.len()].to_vec(),
        )
        .expect("segment shape consistent by construction")
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Constant,
    Leaf {
        group: GroupId,
        segment: usize,
    },
    /// `W x + b 1^T` with an optional column-vector bias.
    Affine {
        weight: NodeId,
        input: NodeId,
        bias: Option<NodeId>,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Tanh(NodeId),
    /// `1 - s^2` where `s` is a tanh output node; used for Jacobian chains.
    TanhPrime(NodeId),
    Square(NodeId),
    PositivePart(NodeId),
    Scale(NodeId, S),
    /// Full contraction `sum(a o b)` producing a 1x1 node.
    Dot(NodeId, NodeId),
    /// `c * sum(entries)` producing a 1x1 node.
    SumScaled(NodeId, S),
}

impl<S> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Leaf { .. } => "leaf",
            Op::Affine { .. } => "affine",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Tanh(..) => "tanh",
            Op::TanhPrime(..) => "tanh-prime",
            Op::Square(..) => "square",
            Op::PositivePart(..) => "positive-part",
            Op::Scale(..) => "scale",
            Op::Dot(..) => "dot",
            Op::SumScaled(..) => "sum-mean",
        }
    }
}

struct Node<S> {
    value: Array2<S>,
    op: Op<S>,
}

struct ParamGroup<S> {
    flat: Vec<S>,
    view: ParamView,
    grad: Vec<S>,
}

/// A recorded computation.  Confined to one logical thread; independent
/// tapes may run in parallel.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    groups: Vec<ParamGroup<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            groups: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<S>, op: Op<S>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        let s = self.nodes[id].value.dim();
        (s.0, s.1)
    }

    pub fn value(&self, id: NodeId) -> &Array2<S> {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> S {
        debug_assert_eq!(self.nodes[id].value.dim(), (1, 1));
        self.nodes[id].value[[0, 0]]
    }

    /// Copy a flat parameter vector onto the tape as a new group.
    pub fn register_params(&mut self, flat: &[S], view: &ParamView) -> Result<GroupId, TapeError> {
        if flat.len() != view.len() {
            return Err(TapeError::ParamLength {
                got: flat.len(),
                expected: view.len(),
            });
        }
        self.groups.push(ParamGroup {
            flat: flat.to_vec(),
            view: view.clone(),
            grad: vec![S::zero(); flat.len()],
        });
        Ok(self.groups.len() - 1)
    }

    /// Materialize one segment of a registered group as a leaf node.
    pub fn leaf(&mut self, group: GroupId, segment: usize) -> NodeId {
        let value = {
            let g = &self.groups[group];
            g.view.matrix(&g.flat, segment)
        };
        self.push(value, Op::Leaf { group, segment })
    }

    pub fn constant(&mut self, value: Array2<S>) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn constant_row(&mut self, row: &[S]) -> NodeId {
        let value = Array2::from_shape_vec((1, row.len()), row.to_vec())
            .expect("row shape consistent");
        self.push(value, Op::Constant)
    }

    pub fn affine(
        &mut self,
        weight: NodeId,
        input: NodeId,
        bias: Option<NodeId>,
    ) -> Result<NodeId, TapeError> {
        let (wr, wc) = self.shape(weight);
        let (xr, xc) = self.shape(input);
        if wc != xr {
            return Err(TapeError::ShapeMismatch {
                prim: "affine",
                lhs: (wr, wc),
                rhs: (xr, xc),
            });
        }
        if let Some(b) = bias {
            let (br, bc) = self.shape(b);
            if br != wr || bc != 1 {
                return Err(TapeError::ShapeMismatch {
                    prim: "affine",
                    lhs: (wr, 1),
                    rhs: (br, bc),
                });
            }
        }
        let mut value = self.nodes[weight].value.dot(&self.nodes[input].value);
        if let Some(b) = bias {
            let bcol = self.nodes[b].value.column(0).to_owned();
            for (mut col, _) in value.axis_iter_mut(Axis(1)).zip(0..xc) {
                col += &bcol;
            }
        }
        Ok(self.push(value, Op::Affine { weight, input, bias }))
    }

    fn binary(
        &mut self,
        prim: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), TapeError> {
        if self.shape(a) != self.shape(b) {
            return Err(TapeError::ShapeMismatch {
                prim,
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("add", a, b)?;
        let value = &self.nodes[a].value + &self.nodes[b].value;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("sub", a, b)?;
        let value = &self.nodes[a].value - &self.nodes[b].value;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("hadamard", a, b)?;
        let value = &self.nodes[a].value * &self.nodes[b].value;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.mapv(|x| x.tanh());
        self.push(value, Op::Tanh(a))
    }

    /// `1 - s^2` for a node `s` holding tanh outputs.
    pub fn tanh_prime(&mut self, s: NodeId) -> NodeId {
        let value = self.nodes[s].value.mapv(|x| S::one() - x * x);
        self.push(value, Op::TanhPrime(s))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.mapv(|x| x * x);
        self.push(value, Op::Square(a))
    }

    /// Elementwise `max(x, 0)`; subgradient 0 at the kink.
    pub fn positive_part(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.mapv(|x| x.max(S::zero()));
        self.push(value, Op::PositivePart(a))
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let value = self.nodes[a].value.mapv(|x| x * c);
        self.push(value, Op::Scale(a, c))
    }

    /// Full contraction `sum_ij a_ij b_ij` as a 1x1 node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("dot", a, b)?;
        let mut acc = S::zero();
        for (x, y) in self.nodes[a].value.iter().zip(self.nodes[b].value.iter()) {
            acc += *x * *y;
        }
        Ok(self.push(
            Array2::from_elem((1, 1), acc),
            Op::Dot(a, b),
        ))
    }

    /// `c * sum(entries)` as a 1x1 node; `c = 1/len` gives the mean.
    pub fn sum_scaled(&mut self, a: NodeId, c: S) -> NodeId {
        let mut acc = S::zero();
        for x in self.nodes[a].value.iter() {
            acc += *x;
        }
        self.push(Array2::from_elem((1, 1), acc * c), Op::SumScaled(a, c))
    }

    /// Reverse pass from a scalar root.  Parameter adjoints accumulate into
    /// the per-group flat gradients (query with [`Tape::grad`]); constant
    /// leaves accumulate nothing persistent.
    pub fn backward(&mut self, root: NodeId) -> Result<(), TapeError> {
        let (rr, rc) = self.shape(root);
        if (rr, rc) != (1, 1) {
            return Err(TapeError::RootNotScalar { rows: rr, cols: rc });
        }
        for g in &mut self.groups {
            for x in g.grad.iter_mut() {
                *x = S::zero();
            }
        }
        let mut adjoints: Vec<Option<Array2<S>>> = vec![None; self.nodes.len()];
        adjoints[root] = Some(Array2::from_elem((1, 1), S::one()));

        for id in (0..self.nodes.len()).rev() {
            let Some(g) = adjoints[id].take() else {
                continue;
            };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TapeError::NonFiniteAdjoint {
                    node: id,
                    prim: self.nodes[id].op.name(),
                });
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Constant => {}
                Op::Leaf { group, segment } => {
                    let seg = self.groups[group].view.segment(segment);
                    let dst = &mut self.groups[group].grad[seg.offset..seg.offset + seg.len()];
                    for (d, s) in dst.iter_mut().zip(g.iter()) {
                        *d += *s;
                    }
                }
                Op::Affine { weight, input, bias } => {
                    let gw = g.dot(&self.nodes[input].value.t());
                    let gx = self.nodes[weight].value.t().dot(&g);
                    accumulate(&mut adjoints[weight], gw);
                    accumulate(&mut adjoints[input], gx);
                    if let Some(b) = bias {
                        let gb = g
                            .sum_axis(Axis(1))
                            .insert_axis(Axis(1));
                        accumulate(&mut adjoints[b], gb);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoints[a], g.clone());
                    accumulate(&mut adjoints[b], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adjoints[a], g.clone());
                    accumulate(&mut adjoints[b], g.mapv(|x| -x));
                }
                Op::Hadamard(a, b) => {
                    let ga = &g * &self.nodes[b].value;
                    let gb = &g * &self.nodes[a].value;
                    accumulate(&mut adjoints[a], ga);
                    accumulate(&mut adjoints[b], gb);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    let ga = ndarray::Zip::from(&g)
                        .and(y)
                        .map_collect(|&gi, &yi| gi * (S::one() - yi * yi));
                    accumulate(&mut adjoints[a], ga);
                }
                Op::TanhPrime(s) => {
                    let two = S::cast(2.0);
                    let ga = ndarray::Zip::from(&g)
                        .and(&self.nodes[s].value)
                        .map_collect(|&gi, &si| -(two * si) * gi);
                    accumulate(&mut adjoints[s], ga);
                }
                Op::Square(a) => {
                    let two = S::cast(2.0);
                    let ga = ndarray::Zip::from(&g)
                        .and(&self.nodes[a].value)
                        .map_collect(|&gi, &ai| gi * two * ai);
                    accumulate(&mut adjoints[a], ga);
                }
                Op::PositivePart(a) => {
                    let ga = ndarray::Zip::from(&g)
                        .and(&self.nodes[a].value)
                        .map_collect(|&gi, &ai| if ai > S::zero() { gi } else { S::zero() });
                    accumulate(&mut adjoints[a], ga);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adjoints[a], g.mapv(|x| x * c));
                }
                Op::Dot(a, b) => {
                    let s = g[[0, 0]];
                    let ga = self.nodes[b].value.mapv(|x| x * s);
                    let gb = self.nodes[a].value.mapv(|x| x * s);
                    accumulate(&mut adjoints[a], ga);
                    accumulate(&mut adjoints[b], gb);
                }
                Op::SumScaled(a, c) => {
                    let s = g[[0, 0]] * c;
                    let dim = self.nodes[a].value.dim();
                    accumulate(&mut adjoints[a], Array2::from_elem(dim, s));
                }
            }
        }
        for (gi, grp) in self.groups.iter().enumerate() {
            if grp.grad.iter().any(|x| !x.is_finite()) {
                return Err(TapeError::NonFiniteAdjoint {
                    node: gi,
                    prim: "parameter-gradient",
                });
            }
        }
        Ok(())
    }

    /// Flat gradient of the last `backward` root w.r.t. a parameter group.
    pub fn grad(&self, group: GroupId) -> &[S] {
        &self.groups[group].grad
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Array2<S>>, g: Array2<S>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

/// Central finite differences of a scalar loss, the test oracle for
/// [`Tape::backward`].
pub fn finite_diff_gradient<S: Scalar>(
    loss: impl Fn(&[S]) -> S,
    theta: &[S],
    step: S,
) -> Result<Vec<S>, TapeError> {
    assert!(step > S::zero(), "finite-difference step must be positive");
    let mut work = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    let two = S::cast(2.0);
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + step;
        let up = loss(&work);
        work[i] = orig - step;
        let down = loss(&work);
        work[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(TapeError::NonFiniteLoss { coord: i });
        }
        grad.push((up - down) / (two * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn scalar_tape() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn tanh_at_zero() {
        let mut t = scalar_tape();
        let view = ParamView::new(&[(1, 1)]);
        let g = t.register_params(&[0.0], &view).unwrap();
        let x = t.leaf(g, 0);
        let y = t.tanh(x);
        assert_eq!(t.scalar_value(y), 0.0);
        let r = t.sum_scaled(y, 1.0);
        t.backward(r).unwrap();
        assert_eq!(t.grad(g), &[1.0]); // tanh'(0) = 1
    }

    #[test]
    fn affine_identity_returns_input() {
        let mut t = scalar_tape();
        let w = t.constant(arr2(&[[1.0, 0.0], [0.0, 1.0]]));
        let x = t.constant(arr2(&[[3.0], [4.0]]));
        let y = t.affine(w, x, None).unwrap();
        assert_eq!(t.value(y), &arr2(&[[3.0], [4.0]]));
    }

    #[test]
    fn square_value_and_derivative() {
        let mut t = scalar_tape();
        let view = ParamView::new(&[(1, 1)]);
        let g = t.register_params(&[3.0], &view).unwrap();
        let x = t.leaf(g, 0);
        let y = t.square(x);
        assert_eq!(t.scalar_value(y), 9.0);
        let r = t.sum_scaled(y, 1.0);
        t.backward(r).unwrap();
        assert_eq!(t.grad(g), &[6.0]);
    }

    #[test]
    fn theta_squared_gradient() {
        let mut t = scalar_tape();
        let view = ParamView::new(&[(1, 1)]);
        let g = t.register_params(&[2.0], &view).unwrap();
        let x = t.leaf(g, 0);
        let y = t.square(x);
        t.backward(y).unwrap();
        assert_eq!(t.grad(g), &[4.0]);
    }

    #[test]
    fn sum_of_tanh_at_zero_gives_ones() {
        let mut t = scalar_tape();
        let view = ParamView::new(&[(5, 1)]);
        let g = t.register_params(&[0.0; 5], &view).unwrap();
        let x = t.leaf(g, 0);
        let y = t.tanh(x);
        let r = t.sum_scaled(y, 1.0);
        t.backward(r).unwrap();
        assert_eq!(t.grad(g), &[1.0; 5]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut t = scalar_tape();
        let a = t.constant(arr2(&[[1.0, 2.0]]));
        let b = t.constant(arr2(&[[1.0], [2.0]]));
        let err = t.add(a, b).unwrap_err();
        assert!(matches!(err, TapeError::ShapeMismatch { prim: "add", .. }));
    }

    #[test]
    fn finite_diff_on_quadratic() {
        let grad =
            finite_diff_gradient(|th: &[f64]| th.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-6)
                .unwrap();
        assert!((grad[0] - 2.0).abs() < 1e-8);
        assert!((grad[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_on_constant_is_zero() {
        let grad = finite_diff_gradient(|_: &[f64]| 7.5, &[0.3, -0.4, 1.1], 1e-5).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn backward_is_linear_in_the_root() {
        // backward(a f + b g) = a backward(f) + b backward(g) for a fixed graph
        let mut t = scalar_tape();
        let view = ParamView::new(&[(3, 1)]);
        let g = t.register_params(&[0.3, -0.7, 1.1], &view).unwrap();
        let x = t.leaf(g, 0);
        let s = t.tanh(x);
        let f = t.dot(s, s).unwrap();
        let q = t.square(x);
        let h = t.sum_scaled(q, 1.0);
        let fa = t.scale(f, 2.5);
        let hb = t.scale(h, -1.25);
        let combo = t.add(fa, hb).unwrap();

        t.backward(f).unwrap();
        let gf: Vec<f64> = t.grad(g).to_vec();
        t.backward(h).unwrap();
        let gh: Vec<f64> = t.grad(g).to_vec();
        t.backward(combo).unwrap();
        let gc: Vec<f64> = t.grad(g).to_vec();
        for i in 0..3 {
            assert!((gc[i] - (2.5 * gf[i] - 1.25 * gh[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn positive_part_subgradient_zero_at_kink() {
        let mut t = scalar_tape();
        let view = ParamView::new(&[(1, 1)]);
        let g = t.register_params(&[0.0], &view).unwrap();
        let x = t.leaf(g, 0);
        let p = t.positive_part(x);
        let r = t.sum_scaled(p, 1.0);
        t.backward(r).unwrap();
        assert_eq!(t.grad(g), &[0.0]);
    }
}
