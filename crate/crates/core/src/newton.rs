//! Damped Newton solver for one time step.
//!
//! Each iteration solves the tridiagonal system `H d = -g`, measures the
//! Newton decrement `lambda^2 = (h/a) g.H^-1.g` (the `h` restores the scaling
//! of the functional whose gradient is `h g`), and moves by `omega(lambda) d`.

use crate::error::{Error, Result};
use crate::functional::{
    hessian_coefficients, positive_slopes, residual, SchemeCoefficients, SolverParams,
};
use crate::mesh::{Grid, NodeField};
use crate::problem::{is_admissible, ProblemSpec, TrajectoryState};
use crate::scalar::Scalar;

const MAX_HALVINGS: usize = 60;

/// Solves a symmetric tridiagonal system by Thomas elimination.
///
/// `diag` has length `n`, `offdiag` length `n - 1` (entry `k` couples rows
/// `k` and `k + 1`). No pivoting: the matrix is expected to be positive
/// definite, and a nonpositive pivot is reported as singular.
pub fn solve_tridiagonal<T: Scalar>(diag: &[T], offdiag: &[T], rhs: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n, "rhs length must match the diagonal");
    assert_eq!(
        offdiag.len(),
        n.saturating_sub(1),
        "offdiag length must be n - 1"
    );
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = diag.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::epsilon();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut pivot = diag[0];
    for k in 0..n {
        if k > 0 {
            pivot = diag[k] - offdiag[k - 1] * c[k - 1];
        }
        if !(pivot > tiny) || !pivot.is_finite() {
            return Err(Error::SingularSystem {
                row: k,
                pivot: pivot.to_f64_lossy(),
            });
        }
        if k + 1 < n {
            c[k] = offdiag[k] / pivot;
        }
        let prev = if k > 0 {
            offdiag[k - 1] * d[k - 1]
        } else {
            T::zero()
        };
        d[k] = (rhs[k] - prev) / pivot;
    }
    for k in (0..n - 1).rev() {
        d[k] = d[k] - c[k] * d[k + 1];
    }
    Ok(d)
}

/// `lambda = sqrt((h/a) * (-g.d))` for `d` solving `H d = -g`.
pub fn newton_decrement_lambda<T: Scalar>(g: &[T], delta: &[T], a: T, grid: &Grid<T>) -> Result<T> {
    assert_eq!(g.len(), delta.len());
    let dot = g
        .iter()
        .zip(delta)
        .fold(T::zero(), |s, (&gi, &di)| s - gi * di);
    if dot < -T::lit(1e-14) {
        return Err(Error::SpdViolation {
            value: dot.to_f64_lossy(),
        });
    }
    Ok((grid.h() / a * dot.max(T::zero())).sqrt())
}

/// Damping factor for a given decrement.
pub fn damping_omega<T: Scalar>(lambda: T, params: &SolverParams<T>) -> T {
    if lambda > params.lambda_prime {
        lambda.recip()
    } else if lambda >= params.lambda_star {
        (T::one() - lambda) / (lambda * (T::lit(3.0) - lambda))
    } else {
        T::one()
    }
}

/// Self-concordance scale `a = h min f0 / (2 C_Newton^2)`.
pub fn self_concordance_a<T: Scalar>(spec: &ProblemSpec<T>, params: &SolverParams<T>) -> T {
    spec.grid.h() * spec.f0_min / (T::lit(2.0) * params.c_newton * params.c_newton)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport<T> {
    pub iterations: usize,
    /// Decrement at every iterate, including the one that met the tolerance.
    pub lambda_history: Vec<T>,
    pub final_residual_norm: T,
    /// Iterations whose accepted step was shorter than the full Newton step.
    pub damped_steps: usize,
    pub converged: bool,
}

impl<T: Scalar> NewtonReport<T> {
    pub fn final_lambda(&self) -> T {
        self.lambda_history.last().copied().unwrap_or_else(T::zero)
    }
}

/// Runs the damped Newton iteration from `x^{n+1,0} = x^n`.
pub fn newton_step<T: Scalar>(
    state: &TrajectoryState<T>,
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
) -> Result<(NodeField<T>, NewtonReport<T>)> {
    newton_solve_from(state.x_curr.clone(), &state.x_curr, coeffs, spec, params)
}

/// Runs the damped Newton iteration for the step leaving `x_curr`, starting
/// from an arbitrary admissible `start`.
pub fn newton_solve_from<T: Scalar>(
    start: NodeField<T>,
    x_curr: &[T],
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
) -> Result<(NodeField<T>, NewtonReport<T>)> {
    newton_solve_observed(start, x_curr, coeffs, spec, params, |_| {})
}

/// As [`newton_solve_from`], calling `on_iterate` with every accepted iterate
/// (the start included).
pub fn newton_solve_observed<T: Scalar>(
    start: NodeField<T>,
    x_curr: &[T],
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
    mut on_iterate: impl FnMut(&[T]),
) -> Result<(NodeField<T>, NewtonReport<T>)> {
    let grid = &spec.grid;
    if !is_admissible(&start, grid) {
        return Err(Error::Inadmissible("Newton start is not admissible".into()));
    }
    let a = self_concordance_a(spec, params);
    let m = grid.cells();
    let mut x = start;
    let mut report = NewtonReport {
        final_residual_norm: T::infinity(),
        ..NewtonReport::default()
    };

    on_iterate(&x);
    for _ in 0..params.newton_max_iter {
        let g = residual(&x, x_curr, coeffs, spec, params)?;
        let hess = hessian_coefficients(&x, x_curr, coeffs, spec, params)?;
        let rhs: Vec<T> = g[1..m].iter().map(|&v| -v).collect();
        let interior = solve_tridiagonal(hess.interior_diag(), &hess.interior_offdiag(), &rhs)?;
        let mut delta = NodeField::zeros(grid);
        delta[1..m].copy_from_slice(&interior);

        let lambda = newton_decrement_lambda(&g, &delta, a, grid)?;
        report.lambda_history.push(lambda);
        report.final_residual_norm = g.max_abs();
        if lambda < params.newton_tol_lambda
            || report.final_residual_norm < params.newton_tol_residual
        {
            report.converged = true;
            return Ok((x, report));
        }

        report.iterations += 1;
        let mut omega = damping_omega(lambda, params);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: NodeField<T> = x
                .iter()
                .zip(delta.iter())
                .map(|(&xi, &di)| xi + omega * di)
                .collect();
            if is_admissible(&trial, grid) && positive_slopes(&trial, grid).is_ok() {
                accepted = Some(trial);
                break;
            }
            omega = omega * T::lit(0.5);
        }
        let Some(next) = accepted else {
            return Err(Error::Inadmissible(format!(
                "no admissible damped step after {MAX_HALVINGS} halvings"
            )));
        };
        if omega < T::one() {
            report.damped_steps += 1;
        }
        x = next;
        on_iterate(&x);
    }

    Err(Error::NewtonNonConvergence {
        iterations: report.iterations,
        last_lambda: report.final_lambda().to_f64_lossy(),
        residual: report.final_residual_norm.to_f64_lossy(),
        lambda_history: report
            .lambda_history
            .iter()
            .map(|v| v.to_f64_lossy())
            .collect(),
    })
}
