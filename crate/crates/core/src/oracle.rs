//! Finite-difference reference solver for the benchmark problems.
//!
//! Projected SOR in 1D and projected Gauss-Seidel/SOR in 2D on uniform
//! grids.  The iteration is the classical one: a Gauss-Seidel update per
//! node followed by a pointwise max against the obstacle.  This solver is
//! deliberately independent of the network machinery; it produces the
//! reference values the tests compare against.

use ndarray::Array2;

use crate::problems::{Domain, ProblemSpec};

/// 1D grid solution including the boundary nodes.
pub struct OracleSolution1D {
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// 2D grid solution, `u[[ix, iy]]`, boundary nodes included.
pub struct OracleSolution2D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub u: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Asymptotically optimal SOR relaxation factor for the model problem at
/// grid spacing fraction `h` (spacing divided by domain length).
pub fn optimal_omega(h: f64) -> f64 {
    2.0 / (1.0 + (std::f64::consts::PI * h).sin())
}

/// Projected SOR for a 1D problem with `m` interior nodes.
///
/// Central differences throughout, including the drift term; the M-matrix
/// condition h < 2/|b| is asserted so the projection iteration is safe.
/// Stops when the successive-iterate sup norm drops below `tol`.
pub fn psor_solve_1d(
    problem: &ProblemSpec,
    m: usize,
    omega: f64,
    tol: f64,
    max_iters: usize,
) -> OracleSolution1D {
    assert!(m >= 3, "need at least 3 interior nodes");
    assert!(tol > 0.0 && omega > 0.0 && omega < 2.0);
    let (a, b) = match problem.domain {
        Domain::Interval { a, b } => (a, b),
        _ => panic!("psor_solve_1d expects an interval domain"),
    };
    let h = (b - a) / (m + 1) as f64;
    let drift = problem.drift[0];
    assert!(
        drift.abs() * h < 2.0,
        "central drift differencing needs h < 2/|b|"
    );
    let k = problem.reaction;

    let xs: Vec<f64> = (0..m + 2).map(|i| a + i as f64 * h).collect();
    let fv: Vec<f64> = xs.iter().map(|&x| (problem.source)(&[x])).collect();
    let psi: Vec<f64> = xs.iter().map(|&x| (problem.obstacle)(&[x])).collect();
    let mut u = vec![0.0; m + 2];
    u[0] = (problem.boundary)(&[xs[0]]);
    u[m + 1] = (problem.boundary)(&[xs[m + 1]]);
    for i in 1..=m {
        u[i] = psi[i].max(0.0);
    }

    let inv_h2 = 1.0 / (h * h);
    let diag = 2.0 * inv_h2 + k;
    let cl = inv_h2 + drift / (2.0 * h); // coefficient of u_{i-1}
    let cr = inv_h2 - drift / (2.0 * h); // coefficient of u_{i+1}

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut diff: f64 = 0.0;
        for i in 1..=m {
            let gs = (fv[i] + cl * u[i - 1] + cr * u[i + 1]) / diag;
            let new = psi[i].max((1.0 - omega) * u[i] + omega * gs);
            diff = diff.max((new - u[i]).abs());
            u[i] = new;
        }
        if diff <= tol {
            converged = true;
            break;
        }
    }
    OracleSolution1D {
        xs,
        u,
        iterations,
        converged,
    }
}

/// Projected Gauss-Seidel/SOR for a 2D problem on an (mx+2) x (my+2) node
/// grid (`mx`, `my` interior nodes per axis).  `omega = 1` is the plain
/// projected Gauss-Seidel sweep.
pub fn pgs_solve_2d(
    problem: &ProblemSpec,
    mx: usize,
    my: usize,
    omega: f64,
    tol: f64,
    max_iters: usize,
) -> OracleSolution2D {
    assert!(mx >= 3 && my >= 3, "grid too coarse");
    assert!(tol > 0.0 && omega > 0.0 && omega < 2.0);
    let (xb, yb) = match problem.domain {
        Domain::Rectangle { x, y } => (x, y),
        _ => panic!("pgs_solve_2d expects a rectangle domain"),
    };
    let hx = (xb.1 - xb.0) / (mx + 1) as f64;
    let hy = (yb.1 - yb.0) / (my + 1) as f64;
    let (bx, by) = (problem.drift[0], problem.drift[1]);
    assert!(bx.abs() * hx < 2.0 && by.abs() * hy < 2.0);
    let k = problem.reaction;

    let xs: Vec<f64> = (0..mx + 2).map(|i| xb.0 + i as f64 * hx).collect();
    let ys: Vec<f64> = (0..my + 2).map(|j| yb.0 + j as f64 * hy).collect();
    let nx = mx + 2;
    let ny = my + 2;
    let mut fv = Array2::zeros((nx, ny));
    let mut psi = Array2::zeros((nx, ny));
    let mut u = Array2::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            let p = [xs[i], ys[j]];
            fv[[i, j]] = (problem.source)(&p);
            psi[[i, j]] = (problem.obstacle)(&p);
            let on_boundary = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
            u[[i, j]] = if on_boundary {
                (problem.boundary)(&p)
            } else {
                psi[[i, j]].max(0.0)
            };
        }
    }

    let ihx2 = 1.0 / (hx * hx);
    let ihy2 = 1.0 / (hy * hy);
    let diag = 2.0 * ihx2 + 2.0 * ihy2 + k;
    let cw = ihx2 + bx / (2.0 * hx);
    let ce = ihx2 - bx / (2.0 * hx);
    let cs = ihy2 + by / (2.0 * hy);
    let cn = ihy2 - by / (2.0 * hy);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut diff: f64 = 0.0;
        for i in 1..=mx {
            for j in 1..=my {
                let gs = (fv[[i, j]]
                    + cw * u[[i - 1, j]]
                    + ce * u[[i + 1, j]]
                    + cs * u[[i, j - 1]]
                    + cn * u[[i, j + 1]])
                    / diag;
                let new = psi[[i, j]].max((1.0 - omega) * u[[i, j]] + omega * gs);
                diff = diff.max((new - u[[i, j]]).abs());
                u[[i, j]] = new;
            }
        }
        if diff <= tol {
            converged = true;
            break;
        }
    }
    OracleSolution2D {
        xs,
        ys,
        u,
        iterations,
        converged,
    }
}

/// Sup norm of the fixed-point complementarity residual
/// |u_i - max(psi_i, GS(u)_i)| over interior nodes.  At the solution of the
/// discrete VI this vanishes; it equals the operator residual scaled by the
/// diagonal of the difference stencil.
pub fn projected_residual_1d(problem: &ProblemSpec, sol: &OracleSolution1D) -> f64 {
    let m = sol.xs.len() - 2;
    let h = sol.xs[1] - sol.xs[0];
    let drift = problem.drift[0];
    let inv_h2 = 1.0 / (h * h);
    let diag = 2.0 * inv_h2 + problem.reaction;
    let cl = inv_h2 + drift / (2.0 * h);
    let cr = inv_h2 - drift / (2.0 * h);
    let mut worst: f64 = 0.0;
    for i in 1..=m {
        let x = sol.xs[i];
        let gs = ((problem.source)(&[x]) + cl * sol.u[i - 1] + cr * sol.u[i + 1]) / diag;
        let target = (problem.obstacle)(&[x]).max(gs);
        worst = worst.max((sol.u[i] - target).abs());
    }
    worst
}

/// Sup-norm distance between the oracle grid values and the closed form.
pub fn linf_vs_exact_1d(problem: &ProblemSpec, sol: &OracleSolution1D) -> f64 {
    sol.xs
        .iter()
        .zip(&sol.u)
        .map(|(&x, &ui)| {
            let (ue, _) = problem.eval_exact(&[x]).expect("closed form required");
            (ui - ue).abs()
        })
        .fold(0.0, f64::max)
}

/// Sup-norm distance to a user-supplied candidate closed form in 2D.
pub fn linf_vs_candidate_2d(sol: &OracleSolution2D, candidate: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &x) in sol.xs.iter().enumerate() {
        for (j, &y) in sol.ys.iter().enumerate() {
            worst = worst.max((sol.u[[i, j]] - candidate(&[x, y])).abs());
        }
    }
    worst
}
