//! Error norms against closed-form solutions and VI diagnostics.

use ndarray::{Array1, Array2};

use crate::nn::{eval_value_grad, wrap_plain, BcWrapper, NetworkParams};
use crate::problems::{Domain, ProblemError, ProblemSpec};

/// Dense uniform evaluation grid, endpoints included; `shape` is nodes per
/// axis.  Flattening is x-major: index = i * ny + j in 2D.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub domain: Domain,
    pub shape: Vec<usize>,
}

impl EvalGrid {
    /// The fixed grids all trajectories are reported on: 4096 nodes in 1D,
    /// 256 x 256 in 2D.
    pub fn dense(domain: Domain) -> Self {
        let shape = match domain.dim() {
            1 => vec![4096],
            _ => vec![256, 256],
        };
        EvalGrid { domain, shape }
    }

    pub fn with_shape(domain: Domain, shape: &[usize]) -> Self {
        assert_eq!(shape.len(), domain.dim());
        assert!(shape.iter().all(|&n| n >= 2));
        EvalGrid {
            domain,
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis spacing.
    pub fn spacing(&self) -> Vec<f64> {
        self.domain
            .bounds()
            .iter()
            .zip(&self.shape)
            .map(|(&(a, b), &n)| (b - a) / (n - 1) as f64)
            .collect()
    }

    fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let (a, b) = self.domain.bounds()[axis];
        a + (b - a) * i as f64 / (self.shape[axis] - 1) as f64
    }

    /// All nodes as one dim x N matrix, in flattening order.
    pub fn points(&self) -> Array2<f64> {
        let n = self.len();
        let dim = self.shape.len();
        let mut pts = Array2::zeros((dim, n));
        match *self.shape.as_slice() {
            [nx] => {
                for i in 0..nx {
                    pts[[0, i]] = self.axis_coord(0, i);
                }
            }
            [nx, ny] => {
                for i in 0..nx {
                    for j in 0..ny {
                        let idx = i * ny + j;
                        pts[[0, idx]] = self.axis_coord(0, i);
                        pts[[1, idx]] = self.axis_coord(1, j);
                    }
                }
            }
            _ => unreachable!("grids are 1D or 2D"),
        }
        pts
    }

    /// Trapezoid quadrature weights (tensor product in 2D), aligned with
    /// `points`.
    pub fn weights(&self) -> Array1<f64> {
        let spacing = self.spacing();
        let axis_w = |axis: usize| -> Vec<f64> {
            let n = self.shape[axis];
            let h = spacing[axis];
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
                .collect()
        };
        match *self.shape.as_slice() {
            [_] => Array1::from_vec(axis_w(0)),
            [nx, ny] => {
                let wx = axis_w(0);
                let wy = axis_w(1);
                let mut w = Array1::zeros(nx * ny);
                for i in 0..nx {
                    for j in 0..ny {
                        w[i * ny + j] = wx[i] * wy[j];
                    }
                }
                w
            }
            _ => unreachable!(),
        }
    }

    pub fn descriptor(&self) -> String {
        self.shape
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// L2, Linf and full H1 errors against the closed-form solution.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub l2: f64,
    pub linf: f64,
    pub h1: f64,
    pub n_eval: usize,
    pub grid: String,
}

/// Errors of precomputed values and spatial gradients on `grid` (in
/// flattening order) against the problem's closed form.
pub fn errors(
    u: &Array1<f64>,
    grad: &Array2<f64>,
    problem: &ProblemSpec,
    grid: &EvalGrid,
) -> Result<ErrorReport, ProblemError> {
    let pts = grid.points();
    let w = grid.weights();
    let n = grid.len();
    assert_eq!(u.len(), n);
    let mut l2sq = 0.0;
    let mut seminorm_sq = 0.0;
    let mut linf: f64 = 0.0;
    for idx in 0..n {
        let p: Vec<f64> = pts.column(idx).to_vec();
        let (ue, ge) = problem.eval_exact(&p)?;
        let d = u[idx] - ue;
        linf = linf.max(d.abs());
        l2sq += w[idx] * d * d;
        for (q, &gq) in ge.iter().enumerate() {
            let dg = grad[[q, idx]] - gq;
            seminorm_sq += w[idx] * dg * dg;
        }
    }
    Ok(ErrorReport {
        l2: l2sq.sqrt(),
        linf,
        h1: (l2sq + seminorm_sq).sqrt(),
        n_eval: n,
        grid: grid.descriptor(),
    })
}

/// [`errors`] for a boundary-wrapped network.
pub fn network_errors(
    params: &NetworkParams<f64>,
    bc: &BcWrapper,
    problem: &ProblemSpec,
    grid: &EvalGrid,
) -> Result<ErrorReport, ProblemError> {
    let pts = grid.points();
    let (u_raw, g_raw) = eval_value_grad(params, &pts);
    let data = bc.eval_batch(&pts);
    let (u, g) = wrap_plain(&u_raw, &g_raw, &data);
    errors(&u, &g, problem, grid)
}

/// Pointwise violations of the complementarity system, each an Linf over
/// interior grid nodes: how far u dips below the obstacle, how negative
/// Au - f gets, and the product |(Au - f)(u - psi)| that should vanish.
#[derive(Debug, Clone)]
pub struct ComplementarityReport {
    pub negativity: f64,
    pub residual: f64,
    pub product: f64,
    pub spacing: Vec<f64>,
}

/// Diagnostics from grid values of u (in flattening order, boundary nodes
/// included).  Au is formed by second-order central differences, with the
/// drift and reaction terms of the problem's operator.
pub fn complementarity_report(
    u: &Array1<f64>,
    problem: &ProblemSpec,
    grid: &EvalGrid,
) -> ComplementarityReport {
    complementarity_report_margin(u, problem, grid, 1)
}

/// Same diagnostics, but the maxima run only over nodes at least `margin`
/// grid cells away from the boundary.  Useful for networks with exactly
/// enforced Dirichlet data: the cutoff factor leaves the second derivatives
/// untrained in a thin boundary layer, and the finite difference operator
/// amplifies that layer by 1/h^2.
pub fn complementarity_report_margin(
    u: &Array1<f64>,
    problem: &ProblemSpec,
    grid: &EvalGrid,
    margin: usize,
) -> ComplementarityReport {
    let margin = margin.max(1);
    let pts = grid.points();
    let spacing = grid.spacing();
    let mut negativity: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut product: f64 = 0.0;
    let k = problem.reaction;

    let mut visit = |idx: usize, au: f64| {
        let p: Vec<f64> = pts.column(idx).to_vec();
        let psi = (problem.obstacle)(&p);
        let f = (problem.source)(&p);
        let r = au - f;
        let slack = u[idx] - psi;
        negativity = negativity.max(-slack);
        residual = residual.max(-r);
        product = product.max((r * slack).abs());
    };

    match *grid.shape.as_slice() {
        [nx] => {
            let h = spacing[0];
            let b = problem.drift[0];
            for i in margin..nx - margin {
                let lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
                let dx = (u[i + 1] - u[i - 1]) / (2.0 * h);
                visit(i, -lap + b * dx + k * u[i]);
            }
        }
        [nx, ny] => {
            let (hx, hy) = (spacing[0], spacing[1]);
            let (bx, by) = (problem.drift[0], problem.drift[1]);
            let at = |i: usize, j: usize| u[i * ny + j];
            for i in margin..nx - margin {
                for j in margin..ny - margin {
                    let lap = (at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) / (hx * hx)
                        + (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / (hy * hy);
                    let dx = (at(i + 1, j) - at(i - 1, j)) / (2.0 * hx);
                    let dy = (at(i, j + 1) - at(i, j - 1)) / (2.0 * hy);
                    visit(i * ny + j, -lap + bx * dx + by * dy + k * at(i, j));
                }
            }
        }
        _ => unreachable!(),
    }
    ComplementarityReport {
        negativity: negativity.max(0.0),
        residual: residual.max(0.0),
        product,
        spacing,
    }
}

/// [`complementarity_report`] for a boundary-wrapped network.
pub fn network_complementarity(
    params: &NetworkParams<f64>,
    bc: &BcWrapper,
    problem: &ProblemSpec,
    grid: &EvalGrid,
) -> ComplementarityReport {
    network_complementarity_margin(params, bc, problem, grid, 1)
}

/// [`complementarity_report_margin`] for a boundary-wrapped network.
pub fn network_complementarity_margin(
    params: &NetworkParams<f64>,
    bc: &BcWrapper,
    problem: &ProblemSpec,
    grid: &EvalGrid,
    margin: usize,
) -> ComplementarityReport {
    let pts = grid.points();
    let (u_raw, g_raw) = eval_value_grad(params, &pts);
    let data = bc.eval_batch(&pts);
    let (u, _) = wrap_plain(&u_raw, &g_raw, &data);
    complementarity_report_margin(&u, problem, grid, margin)
}

/// Quartiles of final errors across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// Percentile by linear interpolation between order statistics: rank
/// p (n - 1) between the sorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn quartiles(values: &[f64]) -> Quartiles {
    assert!(values.len() >= 2, "need at least two records");
    Quartiles {
        p25: percentile(values, 0.25),
        p50: percentile(values, 0.50),
        p75: percentile(values, 0.75),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemSpec;
    use ndarray::Axis;

    fn exact_on_grid(problem: &ProblemSpec, grid: &EvalGrid) -> (Array1<f64>, Array2<f64>) {
        let pts = grid.points();
        let n = grid.len();
        let dim = problem.dim();
        let mut u = Array1::zeros(n);
        let mut g = Array2::zeros((dim, n));
        for (idx, col) in pts.axis_iter(Axis(1)).enumerate() {
            let (ue, ge) = problem.eval_exact(&col.to_vec()).unwrap();
            u[idx] = ue;
            for (q, gv) in ge.into_iter().enumerate() {
                g[[q, idx]] = gv;
            }
        }
        (u, g)
    }

    #[test]
    fn weights_sum_to_the_volume() {
        let g1 = EvalGrid::dense(Domain::Interval { a: 0.0, b: 1.0 });
        assert!((g1.weights().sum() - 1.0).abs() < 1e-12);
        let g2 = EvalGrid::dense(Domain::Rectangle {
            x: (0.0, 1.0),
            y: (-1.0, 1.0),
        });
        assert!((g2.weights().sum() - 2.0).abs() < 1e-11);
        assert_eq!(g2.descriptor(), "256x256");
        assert_eq!(g2.len(), 65536);
    }

    #[test]
    fn exact_against_itself_is_zero() {
        for name in ["example1", "example2", "example5"] {
            let problem = ProblemSpec::by_name(name).unwrap();
            let grid = EvalGrid::with_shape(problem.domain, &vec![65; problem.dim()]);
            let (u, g) = exact_on_grid(&problem, &grid);
            let r = errors(&u, &g, &problem, &grid).unwrap();
            assert!(r.l2 < 1e-13 && r.linf < 1e-13 && r.h1 < 1e-9, "{name}");
        }
    }

    #[test]
    fn zero_function_errors_match_closed_forms() {
        // Example 5: integral of (x^4)^2 over (0,1) x (-1,1) is 2/9
        let p5 = ProblemSpec::by_name("example5").unwrap();
        let grid = EvalGrid::dense(p5.domain);
        let u = Array1::zeros(grid.len());
        let g = Array2::zeros((2, grid.len()));
        let r = errors(&u, &g, &p5, &grid).unwrap();
        assert!((r.l2 - (2.0f64 / 9.0).sqrt()).abs() < 1e-4, "l2 {}", r.l2);
        assert!(r.l2 <= r.h1 + 1e-12);

        // Example 1: the parabola branch peaks at 12.5
        let p1 = ProblemSpec::by_name("example1").unwrap();
        let grid = EvalGrid::dense(p1.domain);
        let u = Array1::zeros(grid.len());
        let g = Array2::zeros((1, grid.len()));
        let r = errors(&u, &g, &p1, &grid).unwrap();
        assert!((r.linf - 12.5).abs() < 1e-3, "linf {}", r.linf);
    }

    #[test]
    fn refined_grid_changes_norms_little() {
        let problem = ProblemSpec::by_name("example2").unwrap();
        let coarse = EvalGrid::with_shape(problem.domain, &[2049]);
        let fine = EvalGrid::with_shape(problem.domain, &[4097]);
        let mk = |grid: &EvalGrid| {
            let u = Array1::zeros(grid.len());
            let g = Array2::zeros((1, grid.len()));
            errors(&u, &g, &problem, grid).unwrap()
        };
        let (a, b) = (mk(&coarse), mk(&fine));
        assert!((a.l2 - b.l2).abs() / b.l2 < 0.01);
        assert!((a.h1 - b.h1).abs() / b.h1 < 0.01);
    }

    #[test]
    fn complementarity_trivial_cases() {
        // constant u above psi with f = 0, k = 0, no drift: all residuals 0
        let problem = ProblemSpec::by_name("example1").unwrap();
        let grid = EvalGrid::with_shape(problem.domain, &[129]);
        let u = Array1::from_elem(grid.len(), 50.0);
        let r = complementarity_report(&u, &problem, &grid);
        assert_eq!(r.negativity, 0.0);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.product, 0.0);
    }

    #[test]
    fn complementarity_of_exact_solution_is_first_order() {
        let problem = ProblemSpec::by_name("example1").unwrap();
        let product_at = |m: usize| {
            let grid = EvalGrid::with_shape(problem.domain, &[m]);
            let (u, _) = exact_on_grid(&problem, &grid);
            complementarity_report(&u, &problem, &grid)
        };
        let coarse = product_at(257);
        let fine = product_at(513);
        // kink at the contact points keeps the FD residual O(1) in a band
        // of width h, but the product residual vanishes with h
        assert!(coarse.negativity < 1e-10);
        assert!(fine.product < coarse.product);
        assert!(fine.product < 60.0 * fine.spacing[0], "{}", fine.product);
    }

    #[test]
    fn margin_excludes_boundary_layer() {
        // a spike two nodes in from the left boundary dominates the default
        // report but is invisible once the frame is excluded
        let problem = ProblemSpec::by_name("example1").unwrap();
        let grid = EvalGrid::with_shape(problem.domain, &[129]);
        let mut u = Array1::from_elem(grid.len(), 50.0);
        u[2] = 120.0;
        let full = complementarity_report(&u, &problem, &grid);
        let inner = complementarity_report_margin(&u, &problem, &grid, 4);
        assert!(full.product > 1.0);
        assert_eq!(inner.product, 0.0);
        assert_eq!(inner.residual, 0.0);
    }

    #[test]
    fn percentile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.5);
        let q = quartiles(&v);
        assert_eq!(q.p25, 1.75);
        assert_eq!(q.p75, 3.25);
        let same = quartiles(&[7.0; 5]);
        assert_eq!(same, Quartiles { p25: 7.0, p50: 7.0, p75: 7.0 });
    }

    #[test]
    fn prescribed_order_statistics_are_reproduced() {
        // 50 evenly spaced values: percentile p is 1 + 49 p exactly
        let v: Vec<f64> = (0..50).map(|i| 1.0 + i as f64).collect();
        let q = quartiles(&v);
        assert!((q.p25 - (1.0 + 49.0 * 0.25)).abs() < 1e-12);
        assert!((q.p50 - (1.0 + 49.0 * 0.50)).abs() < 1e-12);
        assert!((q.p75 - (1.0 + 49.0 * 0.75)).abs() < 1e-12);
    }
}
