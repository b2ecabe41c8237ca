//! Nonlinear algebra of the second-order trajectory scheme.
//!
//! One time step solves `g(x) = 0` for the new trajectory `x`, where
//!
//! ```text
//! g_i = mass_i (x_i - x^n_i) / tau
//!     + d_h[ f0 R(D_h x, D_h x^n) - A0 tau D_h(x - x^n) + tau^2 (1/D_h x - 1/D_h x^n) ]_i
//! ```
//!
//! at the interior nodes, `R(y, y0) = (ln y - ln y0)/(y - y0)` and
//! `mass_i = f0(X_i)^(2-m) S_h^(m-1) / m`. The residual is the gradient of a
//! strictly convex functional `F` divided by `h`; [`eval_f`] evaluates `F`
//! and [`hessian_coefficients`] returns its Hessian divided by `h`.

use crate::error::{Error, Result};
use crate::mesh::{d_centered_to_nodes, d_forward, d_wide, CellField, Grid, NodeField};
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;

/// Step size and inner-solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams<T> {
    /// Artificial regularization weight `A0 >= 0`.
    pub a0: T,
    pub tau: T,
    /// Relative gap `|y - y0| / max(y, y0)` below which `R` and `W` use
    /// their equal-slope values.
    pub eps_switch: T,
    pub newton_tol_lambda: T,
    pub newton_tol_residual: T,
    pub newton_max_iter: usize,
    /// `2 - sqrt(3)`; below it the Newton step is undamped.
    pub lambda_star: T,
    /// Above it the Newton step is scaled by `1/lambda`.
    pub lambda_prime: T,
    pub c_newton: T,
}

impl<T: Scalar> SolverParams<T> {
    pub fn lambda_star_value() -> T {
        T::lit(2.0) - T::lit(3.0).sqrt()
    }

    /// Defaults for a given time step: `A0 = 1`, `eps_switch = 1e-8`,
    /// `tol_lambda = 1e-9`, `tol_residual = 1e-12`, 100 iterations,
    /// `lambda' = 0.9`, `C_Newton = 1`.
    pub fn with_tau(tau: T) -> Self {
        Self {
            a0: T::one(),
            tau,
            eps_switch: T::lit(1e-8),
            newton_tol_lambda: T::lit(1e-9),
            newton_tol_residual: T::lit(1e-12),
            newton_max_iter: 100,
            lambda_star: Self::lambda_star_value(),
            lambda_prime: T::lit(0.9),
            c_newton: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.tau > T::zero() && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.a0 >= T::zero() && self.a0.is_finite()) {
            return bad(format!("A0 must be nonnegative, got {}", self.a0));
        }
        if !(self.eps_switch >= T::zero()) {
            return bad(format!(
                "eps_switch must be nonnegative, got {}",
                self.eps_switch
            ));
        }
        if !(self.newton_tol_lambda > T::zero() && self.newton_tol_residual > T::zero()) {
            return bad("Newton tolerances must be positive".into());
        }
        if self.newton_max_iter == 0 {
            return bad("newton max_iter must be at least 1".into());
        }
        let star = Self::lambda_star_value();
        if (self.lambda_star - star).abs() > T::epsilon() * T::lit(4.0) {
            return bad(format!(
                "lambda_star must be 2 - sqrt(3), got {}",
                self.lambda_star
            ));
        }
        if !(self.lambda_prime >= self.lambda_star && self.lambda_prime < T::one()) {
            return bad(format!(
                "lambda_prime must lie in [2 - sqrt(3), 1), got {}",
                self.lambda_prime
            ));
        }
        if !(self.c_newton > T::zero() && self.c_newton.is_finite()) {
            return bad(format!("c_newton must be positive, got {}", self.c_newton));
        }
        Ok(())
    }
}

/// Coefficients frozen for one time step from `(x^n, x^{n-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients<T> {
    /// `f0(X_i) / (m (f0/S_h)_i^(m-1))` at every node.
    pub mass: NodeField<T>,
    pub s_h: NodeField<T>,
}

impl<T: Scalar> SchemeCoefficients<T> {
    pub fn build(
        x_curr: &[T],
        x_prev: &[T],
        spec: &ProblemSpec<T>,
        params: &SolverParams<T>,
    ) -> Result<Self> {
        let s_h = compute_s_h(x_curr, x_prev, params, &spec.grid);
        let mass = mass_coefficient(&s_h, spec)?;
        Ok(Self { mass, s_h })
    }
}

/// `S_h = max(D~_h(1.5 x^n - 0.5 x^{n-1}), tau^2)`.
pub fn compute_s_h<T: Scalar>(
    x_curr: &[T],
    x_prev: &[T],
    params: &SolverParams<T>,
    grid: &Grid<T>,
) -> NodeField<T> {
    assert_eq!(x_curr.len(), x_prev.len(), "trajectory lengths differ");
    let (a, b) = (T::lit(1.5), T::lit(0.5));
    let extrapolated: Vec<T> = x_curr
        .iter()
        .zip(x_prev)
        .map(|(&c, &p)| a * c - b * p)
        .collect();
    let floor = params.tau * params.tau;
    d_wide(&extrapolated, grid)
        .iter()
        .map(|&s| s.max(floor))
        .collect()
}

/// `f0^(2-m) S_h^(m-1) / m`, the mobility-weighted mass at each node.
pub fn mass_coefficient<T: Scalar>(s_h: &[T], spec: &ProblemSpec<T>) -> Result<NodeField<T>> {
    assert_eq!(
        s_h.len(),
        spec.grid.num_nodes(),
        "S_h must live on the nodes"
    );
    let m = spec.m;
    let two = T::lit(2.0);
    s_h.iter()
        .zip(spec.f0_nodes.iter())
        .enumerate()
        .map(|(i, (&s, &f0))| {
            if s > T::zero() {
                Ok(f0.powf(two - m) * s.powf(m - T::one()) / m)
            } else {
                Err(Error::DegenerateMesh {
                    location: "node",
                    index: i,
                    value: s.to_f64_lossy(),
                })
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(NodeField)
}

const SERIES_RADIUS: f64 = 0.25;
const SERIES_TERMS: usize = 40;

#[inline]
fn equal_branch<T: Scalar>(y: T, y0: T, eps_switch: T) -> bool {
    (y - y0).abs() <= eps_switch * y.max(y0)
}

/// `sum_{k>=0} u^k / (k + offset)` by Horner's rule.
#[inline]
fn log_series<T: Scalar>(u: T, offset: usize) -> T {
    (0..SERIES_TERMS).rev().fold(T::zero(), |acc, k| {
        acc * u + T::from_usize_lossy(k + offset).recip()
    })
}

/// Secant ratio for positive slopes, no argument checks.
#[inline]
pub(crate) fn secant_ratio_unchecked<T: Scalar>(y: T, y0: T, eps_switch: T) -> T {
    if equal_branch(y, y0, eps_switch) {
        return T::lit(2.0) / (y + y0);
    }
    let u = (y - y0) / y;
    if u.abs() < T::lit(SERIES_RADIUS) {
        // ln(y/y0) = -ln(1 - u) = sum u^(k+1)/(k+1), and y - y0 = u y.
        log_series(u, 1) / y
    } else {
        (y.ln() - y0.ln()) / (y - y0)
    }
}

/// `dR/dy` for positive slopes, no argument checks.
#[inline]
pub(crate) fn slope_derivative_unchecked<T: Scalar>(y: T, y0: T, eps_switch: T) -> T {
    let u = (y - y0) / y;
    if equal_branch(y, y0, eps_switch) {
        return -(T::lit(0.5) + u / T::lit(3.0)) / (y * y);
    }
    if u.abs() < T::lit(SERIES_RADIUS) {
        -log_series(u, 2) / (y * y)
    } else {
        let d = y - y0;
        ((T::one() - y0 / y) + (y0 / y).ln()) / (d * d)
    }
}

fn check_slope<T: Scalar>(v: T, index: usize) -> Result<()> {
    if v > T::zero() {
        Ok(())
    } else {
        Err(Error::DegenerateMesh {
            location: "cell",
            index,
            value: v.to_f64_lossy(),
        })
    }
}

/// `R(y, y0) = (ln y - ln y0)/(y - y0)`, with `2/(y + y0)` when the slopes
/// agree to within `eps_switch` (relative).
pub fn secant_ratio_r<T: Scalar>(y: T, y0: T, eps_switch: T) -> Result<T> {
    check_slope(y, 0)?;
    check_slope(y0, 0)?;
    Ok(secant_ratio_unchecked(y, y0, eps_switch))
}

/// `W(y, y0) = dR/dy = [(1 - y0/y) + ln(y0/y)] / (y - y0)^2 <= 0`; equals
/// `-1/(2 y^2)` at `y = y0`.
pub fn slope_derivative_w<T: Scalar>(y: T, y0: T, eps_switch: T) -> Result<T> {
    check_slope(y, 0)?;
    check_slope(y0, 0)?;
    Ok(slope_derivative_unchecked(y, y0, eps_switch))
}

/// Forward slopes of `x`, all required positive.
pub(crate) fn positive_slopes<T: Scalar>(x: &[T], grid: &Grid<T>) -> Result<CellField<T>> {
    let slopes = d_forward(x, grid);
    for (c, &v) in slopes.iter().enumerate() {
        check_slope(v, c)?;
    }
    Ok(slopes)
}

fn require_pinned<T: Scalar>(x: &[T], grid: &Grid<T>) -> Result<()> {
    if x.len() != grid.num_nodes() {
        return Err(Error::Inadmissible(format!(
            "trajectory has {} nodes, grid has {}",
            x.len(),
            grid.num_nodes()
        )));
    }
    if x[0] != grid.x_left() || x[grid.cells()] != grid.x_right() {
        return Err(Error::Inadmissible("endpoints are not pinned".into()));
    }
    Ok(())
}

/// Residual of the scheme at candidate `x_new`; zero at the boundary nodes.
pub fn residual<T: Scalar>(
    x_new: &[T],
    x_curr: &[T],
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
) -> Result<NodeField<T>> {
    let grid = &spec.grid;
    require_pinned(x_new, grid)?;
    let y = positive_slopes(x_new, grid)?;
    let y0 = positive_slopes(x_curr, grid)?;
    let tau = params.tau;
    let tau2 = tau * tau;
    let a0_tau = params.a0 * tau;
    let flux: CellField<T> = (0..grid.cells())
        .map(|c| {
            let (yc, y0c) = (y[c], y0[c]);
            spec.f0_cells[c] * secant_ratio_unchecked(yc, y0c, params.eps_switch)
                - a0_tau * (yc - y0c)
                + tau2 * (yc.recip() - y0c.recip())
        })
        .collect();
    let mut g = d_centered_to_nodes(&flux, grid);
    for i in 1..grid.cells() {
        g[i] = g[i] + coeffs.mass[i] * (x_new[i] - x_curr[i]) / tau;
    }
    Ok(g)
}

/// Residual Jacobian (Hessian of `F` divided by `h`) as a symmetric
/// tridiagonal operator on the interior nodes:
///
/// `(H d)_i = mass_i d_i / tau + [c_{i-1/2}(d_i - d_{i-1}) + c_{i+1/2}(d_i - d_{i+1})] / h^2`
///
/// with `c = -f0 W + A0 tau + tau^2 / (D_h x)^2 > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian<T> {
    /// Diagonal on the nodes; the two boundary entries are zero.
    pub diag: NodeField<T>,
    /// Cell coefficients `c_{i-1/2}`.
    pub cell: CellField<T>,
    inv_h2: T,
}

impl<T: Scalar> Hessian<T> {
    pub fn interior_len(&self) -> usize {
        self.diag.len() - 2
    }

    /// Matrix entry coupling interior nodes `i` and `i + 1`.
    pub fn offdiag(&self, i: usize) -> T {
        -self.cell[i] * self.inv_h2
    }

    /// Diagonal restricted to the interior nodes `1..M-1`.
    pub fn interior_diag(&self) -> &[T] {
        &self.diag[1..self.diag.len() - 1]
    }

    /// Off-diagonal entries between consecutive interior nodes.
    pub fn interior_offdiag(&self) -> Vec<T> {
        (1..self.interior_len()).map(|i| self.offdiag(i)).collect()
    }

    /// Applies `H` to a node field whose boundary entries are ignored.
    pub fn apply(&self, d: &[T]) -> NodeField<T> {
        let m = self.cell.len();
        assert_eq!(d.len(), m + 1);
        let mut out = vec![T::zero(); m + 1];
        let val = |i: usize| if i == 0 || i == m { T::zero() } else { d[i] };
        for i in 1..m {
            out[i] = self.diag[i] * d[i]
                + self.offdiag(i - 1) * val(i - 1)
                + self.offdiag(i) * val(i + 1);
        }
        NodeField(out)
    }
}

pub fn hessian_coefficients<T: Scalar>(
    x_new: &[T],
    x_curr: &[T],
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
) -> Result<Hessian<T>> {
    hessian_with_w_sign(x_new, x_curr, coeffs, spec, params, T::one())
}

/// `w_sign = -1` assembles a deliberately wrong Hessian for negative controls.
pub(crate) fn hessian_with_w_sign<T: Scalar>(
    x_new: &[T],
    x_curr: &[T],
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
    w_sign: T,
) -> Result<Hessian<T>> {
    let grid = &spec.grid;
    require_pinned(x_new, grid)?;
    let y = positive_slopes(x_new, grid)?;
    let y0 = positive_slopes(x_curr, grid)?;
    let tau = params.tau;
    let tau2 = tau * tau;
    let a0_tau = params.a0 * tau;
    let cell: CellField<T> = (0..grid.cells())
        .map(|c| {
            let w = w_sign * slope_derivative_unchecked(y[c], y0[c], params.eps_switch);
            -spec.f0_cells[c] * w + a0_tau + tau2 / (y[c] * y[c])
        })
        .collect();
    let h = grid.h();
    let inv_h2 = (h * h).recip();
    let mut diag = NodeField::zeros(grid);
    for i in 1..grid.cells() {
        diag[i] = coeffs.mass[i] / tau + (cell[i - 1] + cell[i]) * inv_h2;
    }
    Ok(Hessian { diag, cell, inv_h2 })
}

fn simpson_step<T: Scalar>(
    f: &impl Fn(T) -> T,
    a: T,
    fa: T,
    b: T,
    fb: T,
    m: T,
    fm: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let half = T::lit(0.5);
    let lm = half * (a + m);
    let rm = half * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let six = T::lit(6.0);
    let left = (m - a) / six * (fa + T::lit(4.0) * flm + fm);
    let right = (b - m) / six * (fm + T::lit(4.0) * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, half * tol, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, half * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let m = T::lit(0.5) * (a + b);
    let fm = f(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    simpson_step(&f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Absolute tolerance of the quadrature behind [`g_primitive`].
pub const G_QUADRATURE_TOL: f64 = 1e-12;

/// Convex primitive `G(y, y0) = int_y^1 (ln s - ln y0)/(s - y0) ds`, written in
/// terms of the slope `y = 1 + D_h x_hat`; `d^2G/dy^2 = -W(y, y0) >= 0`.
pub fn g_primitive<T: Scalar>(y: T, y0: T) -> Result<T> {
    check_slope(y, 0)?;
    check_slope(y0, 0)?;
    let integrand = |s: T| {
        if s == y0 {
            y0.recip()
        } else {
            ((s - y0) / y0).ln_1p() / (s - y0)
        }
    };
    Ok(adaptive_simpson(
        integrand,
        y,
        T::one(),
        T::lit(G_QUADRATURE_TOL),
    ))
}

/// `F = F1 + F2 + F3 + F4` at `x = X + x_hat`, all inner products weighted by `h`.
pub fn eval_f<T: Scalar>(
    x_hat: &[T],
    x_curr: &[T],
    coeffs: &SchemeCoefficients<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
) -> Result<T> {
    let grid = &spec.grid;
    let h = grid.h();
    let x: Vec<T> = x_hat
        .iter()
        .enumerate()
        .map(|(i, &v)| grid.node(i) + v)
        .collect();
    require_pinned(&x, grid)?;
    let y = positive_slopes(&x, grid)?;
    let y0 = positive_slopes(x_curr, grid)?;
    let d_hat = d_forward(x_hat, grid);
    let tau = params.tau;
    let half = T::lit(0.5);

    let mut f1 = T::zero();
    for i in 1..grid.cells() {
        let d = x[i] - x_curr[i];
        f1 = f1 + coeffs.mass[i] * d * d;
    }
    f1 = f1 * h / (tau + tau);

    let mut f2 = T::zero();
    let mut f3 = T::zero();
    let mut f4 = T::zero();
    for c in 0..grid.cells() {
        f2 = f2 + spec.f0_cells[c] * g_primitive(y[c], y0[c])?;
        f3 = f3 + half * d_hat[c] * d_hat[c] - d_hat[c] * y0[c];
        f4 = f4 - y[c].ln() + d_hat[c] / y0[c];
    }
    Ok(f1 + (f2 + params.a0 * tau * f3 + tau * tau * f4) * h)
}

/// `q1(x) = -(ln x - ln x0)/(x - x0)` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Q1<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

/// Closed forms for `q1` and its derivatives, switching to a Taylor series
/// in `r = (x - x0)/x0` when `|r| < 0.05`.
pub fn q1_oracle<T: Scalar>(x: T, x0: T) -> Result<Q1<T>> {
    if !(x > T::zero() && x0 > T::zero()) {
        return Err(Error::DegenerateMesh {
            location: "q1 argument",
            index: 0,
            value: x.min(x0).to_f64_lossy(),
        });
    }
    let r = (x - x0) / x0;
    if r.abs() < T::lit(0.05) {
        // -ln(1+r)/r = -sum (-r)^k/(k+1); differentiate termwise in x = x0 (1 + r).
        let terms = 30usize;
        let mut value = T::zero();
        let mut d1 = T::zero();
        let mut d2 = T::zero();
        for k in (0..terms).rev() {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            let kk = T::from_usize_lossy(k);
            value = value * r - sign / (kk + T::one());
            if k >= 1 {
                d1 = d1 * r - sign * kk / (kk + T::one());
            }
            if k >= 2 {
                d2 = d2 * r - sign * kk * (kk - T::one()) / (kk + T::one());
            }
        }
        return Ok(Q1 {
            value: value / x0,
            d1: d1 / (x0 * x0),
            d2: d2 / (x0 * x0 * x0),
        });
    }
    let d = x - x0;
    let l = x.ln() - x0.ln();
    let value = -l / d;
    let d1 = -(d / x - l) / (d * d);
    let d2 = -(-(d * d * d) / (x * x) - T::lit(2.0) * d * (d / x - l)) / (d * d * d * d);
    Ok(Q1 { value, d1, d2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::InitialDataKind;
    use approx::assert_relative_eq;

    const EPS: f64 = 1e-8;

    #[test]
    fn params_defaults_validate() {
        let p = SolverParams::<f64>::with_tau(0.01);
        p.validate().unwrap();
        assert!((p.lambda_star - (2.0 - 3f64.sqrt())).abs() < 1e-16);
        let mut q = p;
        q.lambda_prime = 0.1;
        assert!(q.validate().is_err());
        let mut q = p;
        q.tau = 0.0;
        assert!(q.validate().is_err());
        let mut q = p;
        q.a0 = -1.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn s_h_examples() {
        let g = Grid::<f64>::unit(10).unwrap();
        let p = SolverParams::with_tau(0.1);
        let x = g.nodes();
        for v in compute_s_h(&x, &x, &p, &g).iter() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-13);
        }
        // Extrapolated node 1 drops to 0.025: the one-sided stencil at node 0
        // goes negative and is floored, node 2 stretches to 1.375.
        let mut prev = x.clone();
        prev[1] = 0.25;
        let s = compute_s_h(&x, &prev, &p, &g);
        assert_eq!(s[0], p.tau * p.tau);
        assert_relative_eq!(s[2], 1.375, epsilon = 1e-13);
    }

    #[test]
    fn mass_coefficient_examples() {
        let g = Grid::<f64>::unit(4).unwrap();
        let spec = ProblemSpec::new(2.0, g, InitialDataKind::Constant(1.0)).unwrap();
        for v in mass_coefficient(&[1.0; 5], &spec).unwrap().iter() {
            assert_relative_eq!(*v, 0.5);
        }
        let spec = ProblemSpec::new(2.0, g, InitialDataKind::Constant(0.41)).unwrap();
        for v in mass_coefficient(&[1.0; 5], &spec).unwrap().iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
        let spec = ProblemSpec::new(5.0 / 3.0, g, InitialDataKind::Constant(0.5)).unwrap();
        let mass = mass_coefficient(&[1.0; 5], &spec).unwrap();
        assert_relative_eq!(mass[2], 0.47622, epsilon = 1e-5);
        assert_relative_eq!(mass[2], 0.5f64.powf(1.0 / 3.0) * 0.6, epsilon = 1e-15);
        assert!(mass_coefficient(&[1.0, 1.0, 0.0, 1.0, 1.0], &spec).is_err());
    }

    #[test]
    fn mass_bounded_below_when_guard_active() {
        let g = Grid::<f64>::unit(4).unwrap();
        let tau: f64 = 0.05;
        for m in [1.2, 5.0 / 3.0, 2.0, 3.0] {
            let spec = ProblemSpec::new(m, g, InitialDataKind::Constant(0.3)).unwrap();
            let mass = mass_coefficient(&[tau * tau; 5], &spec).unwrap();
            let bound = 0.3f64.powf(2.0 - m) * tau.powf(2.0 * (m - 1.0)) / m;
            assert_relative_eq!(mass[1], bound, max_relative = 1e-13);
        }
    }

    #[test]
    fn secant_ratio_examples() {
        assert_eq!(secant_ratio_r(0.5, 0.5, EPS).unwrap(), 2.0);
        assert_relative_eq!(
            secant_ratio_r(2.0, 1.0, EPS).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            secant_ratio_r(3.0 * (1.0 + 1e-12), 3.0, EPS).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-9
        );
        assert!(matches!(
            secant_ratio_r(0.0, 1.0, EPS),
            Err(Error::DegenerateMesh { .. })
        ));
    }

    #[test]
    fn slope_derivative_examples() {
        assert_eq!(slope_derivative_w(1.0, 1.0, EPS).unwrap(), -0.5);
        assert_relative_eq!(
            slope_derivative_w(2.0, 1.0, EPS).unwrap(),
            0.5 + 0.5f64.ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            slope_derivative_w(2.0, 1.0, EPS).unwrap(),
            -0.193147,
            epsilon = 1e-6
        );
        assert!(slope_derivative_w(1.0, -1.0, EPS).is_err());
    }

    /// Away from the diagonal the closed forms are well conditioned.
    #[test]
    fn stabilized_forms_match_closed_forms() {
        for &(y, y0) in &[
            (1.3, 1.0),
            (0.2, 0.9),
            (5.0, 4.1),
            (0.7, 0.69),
            (1.0, 1.001),
        ] {
            let r = (f64::ln(y) - f64::ln(y0)) / (y - y0);
            let w = ((1.0 - y0 / y) + f64::ln(y0 / y)) / ((y - y0) * (y - y0));
            assert_relative_eq!(secant_ratio_r(y, y0, EPS).unwrap(), r, max_relative = 1e-9);
            assert_relative_eq!(
                slope_derivative_w(y, y0, EPS).unwrap(),
                w,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn w_is_derivative_of_r() {
        for &(y, y0) in &[
            (1.3, 1.0),
            (0.2, 0.9),
            (5.0, 4.1),
            (1.0, 1.0 + 1e-6),
            (0.05, 7.0),
        ] {
            let s = 1e-6 * y;
            let fd = (secant_ratio_r(y + s, y0, EPS).unwrap()
                - secant_ratio_r(y - s, y0, EPS).unwrap())
                / (2.0 * s);
            assert_relative_eq!(
                slope_derivative_w(y, y0, EPS).unwrap(),
                fd,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn r_and_w_relate_to_q1() {
        for &(y, y0) in &[(1.3, 1.0), (0.2, 0.9), (5.0, 4.1), (2.0, 2.0), (1.0, 1.01)] {
            let q = q1_oracle(y, y0).unwrap();
            assert_relative_eq!(
                secant_ratio_r(y, y0, EPS).unwrap(),
                -q.value,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                slope_derivative_w(y, y0, EPS).unwrap(),
                -q.d1,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn q1_examples() {
        let q = q1_oracle(1.0, 1.0).unwrap();
        assert_eq!(q.value, -1.0);
        assert_relative_eq!(q.d1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(q.d2, -2.0 / 3.0, epsilon = 1e-15);
        let q = q1_oracle(2.0, 1.0).unwrap();
        assert_relative_eq!(q.value, -2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(q.d1, 2f64.ln() - 0.5, epsilon = 1e-15);
        assert!(q.d1 > 0.0 && q.d2 <= 0.0);
        assert!(q1_oracle(-1.0, 1.0).is_err());
    }

    #[test]
    fn q1_series_and_closed_form_agree_at_switch() {
        for x0 in [0.1, 1.0, 7.0] {
            for r in [0.0499, 0.0501, -0.0499, -0.0501] {
                let a = q1_oracle(x0 * (1.0 + r), x0).unwrap();
                let b = q1_oracle(x0 * (1.0 + r * 1.0000001), x0).unwrap();
                assert_relative_eq!(a.value, b.value, max_relative = 1e-7);
                assert_relative_eq!(a.d1, b.d1, max_relative = 1e-6);
                assert_relative_eq!(a.d2, b.d2, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn adaptive_simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert_relative_eq!(v, std::f64::consts::E - 1.0, epsilon = 1e-13);
        let v = adaptive_simpson(|x: f64| 1.0 / x, 2.0, 0.5, 1e-12);
        assert_relative_eq!(v, -(4f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn g_primitive_derivative_is_minus_r() {
        for &(y, y0) in &[(0.6, 1.0), (1.4, 0.8), (1.0, 1.0), (3.0, 3.0)] {
            let s = 1e-4;
            let fd =
                (g_primitive(y + s, y0).unwrap() - g_primitive(y - s, y0).unwrap()) / (2.0 * s);
            assert_relative_eq!(
                fd,
                -secant_ratio_r(y, y0, EPS).unwrap(),
                max_relative = 1e-7
            );
        }
        assert_eq!(g_primitive(1.0, 0.3).unwrap(), 0.0);
    }

    fn sample_step(
        cells: usize,
    ) -> (
        ProblemSpec<f64>,
        SolverParams<f64>,
        NodeField<f64>,
        SchemeCoefficients<f64>,
    ) {
        let g = Grid::unit(cells).unwrap();
        let spec = ProblemSpec::new(5.0 / 3.0, g, InitialDataKind::PaperQuadratic).unwrap();
        let params = SolverParams::with_tau(0.02);
        let x_curr = NodeField::from_fn(&g, |i| {
            let x = g.node(i);
            x + 0.05 * (std::f64::consts::PI * x).sin() * x
        });
        let coeffs = SchemeCoefficients::build(&x_curr, &g.nodes(), &spec, &params).unwrap();
        (spec, params, x_curr, coeffs)
    }

    #[test]
    fn residual_vanishes_for_constant_stationary_state() {
        let g = Grid::unit(8).unwrap();
        let spec = ProblemSpec::new(2.0, g, InitialDataKind::Constant(0.7)).unwrap();
        let p = SolverParams::with_tau(0.1);
        let x = g.nodes();
        let coeffs = SchemeCoefficients::build(&x, &x, &spec, &p).unwrap();
        let r = residual(&x, &x, &coeffs, &spec, &p).unwrap();
        assert!(r.max_abs() < 1e-12, "{:?}", r);
    }

    #[test]
    fn residual_at_current_state_is_flux_divergence() {
        let (spec, p, x_curr, coeffs) = sample_step(12);
        let g = residual(&x_curr, &x_curr, &coeffs, &spec, &p).unwrap();
        let y = d_forward(&x_curr, &spec.grid);
        let flux: Vec<f64> = (0..12).map(|c| spec.f0_cells[c] / y[c]).collect();
        let expected = d_centered_to_nodes(&flux, &spec.grid);
        for i in 1..12 {
            assert_relative_eq!(g[i], expected[i], max_relative = 1e-12, epsilon = 1e-12);
        }
        assert_eq!(g[0], 0.0);
        assert_eq!(g[12], 0.0);
    }

    #[test]
    fn residual_rejects_folded_trajectory() {
        let (spec, p, x_curr, coeffs) = sample_step(6);
        let mut bad = x_curr.clone();
        bad[3] = bad[2];
        assert!(matches!(
            residual(&bad, &x_curr, &coeffs, &spec, &p),
            Err(Error::DegenerateMesh { index: 2, .. })
        ));
        let mut unpinned = x_curr.clone();
        unpinned[6] = 0.9;
        assert!(matches!(
            residual(&unpinned, &x_curr, &coeffs, &spec, &p),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn hessian_of_zero_is_zero_and_positive_otherwise() {
        let (spec, p, x_curr, coeffs) = sample_step(10);
        let h = hessian_coefficients(&x_curr, &x_curr, &coeffs, &spec, &p).unwrap();
        assert!(h.apply(&[0.0; 11]).iter().all(|&v| v == 0.0));
        assert!(h.cell.iter().all(|&c| c > 0.0));
        let d: Vec<f64> = (0..11).map(|i| ((i * 7 % 5) as f64 - 2.0) * 1e-3).collect();
        let hd = h.apply(&d);
        let q: f64 = (1..10).map(|i| hd[i] * d[i]).sum();
        assert!(q > 0.0);
    }

    #[test]
    fn eval_f_is_zero_at_rest() {
        let g = Grid::unit(9).unwrap();
        let spec = ProblemSpec::new(2.0, g, InitialDataKind::PaperQuadratic).unwrap();
        let p = SolverParams::with_tau(0.05);
        let x = g.nodes();
        let coeffs = SchemeCoefficients::build(&x, &x, &spec, &p).unwrap();
        assert!(eval_f(&[0.0f64; 10], &x, &coeffs, &spec, &p).unwrap().abs() < 1e-15);
    }
}
