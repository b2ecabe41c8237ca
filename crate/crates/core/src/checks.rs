//! Seeded property sweeps over the calculus and discrete-operator identities
//! the scheme relies on. Each check reports its worst observed value against
//! a tolerance and the first counterexample it met.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::functional::{
    eval_f, g_primitive, hessian_with_w_sign, q1_oracle, residual, secant_ratio_unchecked,
    slope_derivative_unchecked, SchemeCoefficients, SolverParams,
};
use crate::mesh::{cell_l2_norm, d_centered_to_nodes, d_forward, d_wide, interior_l2_norm, Grid};
use crate::problem::{InitialDataKind, ProblemSpec};

pub const SCALAR_SAMPLES: usize = 1000;
pub const STATE_SAMPLES: usize = 20;
pub const FIELD_SAMPLES: usize = 100;
/// Relative offset `y = y0 (1 + eps)` at which branch continuity is measured.
pub const CONTINUITY_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    pub seed: u64,
    /// Negates `W` wherever the checks use it, as a negative control.
    pub flip_w_sign: bool,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub samples: usize,
    /// Largest violation measure seen; passing means `worst <= tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub counterexample: Option<String>,
    /// Extra figures worth printing.
    pub note: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none() && self.worst <= self.tolerance
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {} ({} samples, worst {:.3e}, tol {:.1e})",
            self.name, self.samples, self.worst, self.tolerance
        )?;
        if let Some(c) = &self.counterexample {
            write!(f, " counterexample: {c}")?;
        }
        if let Some(n) = &self.note {
            write!(f, " [{n}]")?;
        }
        Ok(())
    }
}

/// Tracks the worst value of a measure and the first input exceeding `tol`.
struct Tracker {
    worst: f64,
    tol: f64,
    counterexample: Option<String>,
}

impl Tracker {
    fn new(tol: f64) -> Self {
        Tracker {
            worst: 0.0,
            tol,
            counterexample: None,
        }
    }

    fn record(&mut self, value: f64, input: impl FnOnce() -> String) {
        let value = if value.is_nan() { f64::INFINITY } else { value };
        if value > self.worst {
            self.worst = value;
        }
        if value > self.tol && self.counterexample.is_none() {
            self.counterexample = Some(input());
        }
    }

    fn finish(self, name: &'static str, samples: usize, note: Option<String>) -> CheckOutcome {
        CheckOutcome {
            name,
            samples,
            worst: self.worst,
            tolerance: self.tol,
            counterexample: self.counterexample,
            note,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on `(0, 10]`.
fn positive_sample(rng: &mut ChaCha8Rng) -> f64 {
    10.0 * (1.0 - rng.gen::<f64>())
}

fn w_value(y: f64, y0: f64, eps: f64, opts: &CheckOptions) -> f64 {
    let w = slope_derivative_unchecked(y, y0, eps);
    if opts.flip_w_sign {
        -w
    } else {
        w
    }
}

/// `q1' > 0` and `q1'' <= 0` on random `(x, x0)`.
pub fn check_q1_shape(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 1);
    let mut t = Tracker::new(0.0);
    for _ in 0..SCALAR_SAMPLES {
        let (x, x0) = (positive_sample(&mut rng), positive_sample(&mut rng));
        let q = q1_oracle(x, x0)?;
        // Violation measure: how far the sign condition is missed.
        let v = (-q.d1).max(0.0).max(q.d2.max(0.0));
        let v = if q.d1 <= 0.0 {
            v.max(f64::MIN_POSITIVE)
        } else {
            v
        };
        t.record(v, || {
            format!("x={x:e} x0={x0:e} q1'={:e} q1''={:e}", q.d1, q.d2)
        });
    }
    Ok(t.finish("q1' > 0 and q1'' <= 0", SCALAR_SAMPLES, None))
}

/// `W(y, y0) <= 0` on random slopes.
pub fn check_w_nonpositive(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 2);
    let eps = SolverParams::<f64>::with_tau(1.0).eps_switch;
    let mut t = Tracker::new(0.0);
    for _ in 0..SCALAR_SAMPLES {
        let (y, y0) = (positive_sample(&mut rng), positive_sample(&mut rng));
        let w = w_value(y, y0, eps, opts);
        t.record(w.max(0.0), || format!("y={y:e} y0={y0:e} W={w:e}"));
    }
    Ok(t.finish("W <= 0", SCALAR_SAMPLES, None))
}

/// `G'' >= 0` from a central second difference of the quadrature primitive.
/// The measured curvature is also compared with `-W`, its exact value.
pub fn check_g_convex(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 3);
    let eps = SolverParams::<f64>::with_tau(1.0).eps_switch;
    let mut t = Tracker::new(0.0);
    let mut worst_vs_w = 0.0f64;
    for _ in 0..SCALAR_SAMPLES {
        let (y, y0) = (positive_sample(&mut rng), positive_sample(&mut rng));
        let d = 1e-2 * y;
        let g = |s: f64| g_primitive(s, y0);
        let curvature = (g(y + d)? - 2.0 * g(y)? + g(y - d)?) / (d * d);
        let exact = -w_value(y, y0, eps, opts);
        worst_vs_w = worst_vs_w.max((curvature - exact).abs() / exact.abs().max(1e-300));
        t.record((-curvature).max(0.0), || {
            format!("y={y:e} y0={y0:e} G''~{curvature:e}")
        });
    }
    Ok(t.finish(
        "G'' >= 0",
        SCALAR_SAMPLES,
        Some(format!("max rel. gap to -W {worst_vs_w:.1e}")),
    ))
}

/// Jump between the general and equal-slope branches of `R` and `W` at
/// `y = y0 (1 + eps)`, relative to the limit magnitude.
pub fn check_branch_continuity(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 4);
    let mut t = Tracker::new(1e-6);
    let mut literal = 0.0f64;
    for _ in 0..SCALAR_SAMPLES {
        let y0 = positive_sample(&mut rng);
        let y = y0 * (1.0 + CONTINUITY_EPS);
        let (general, equal) = (0.0, f64::INFINITY);
        let r_jump =
            (secant_ratio_unchecked(y, y0, general) - secant_ratio_unchecked(y, y0, equal)).abs()
                * y0;
        let w_gen = w_value(y, y0, general, opts);
        let w_eq = slope_derivative_unchecked(y, y0, equal);
        let w_jump = (w_gen - w_eq).abs() * 2.0 * y0 * y0;
        literal = literal.max((w_gen + 0.5 / (y0 * y0)).abs() * 2.0 * y0 * y0);
        t.record(r_jump.max(w_jump), || {
            format!("y0={y0:e} R jump={r_jump:e} W jump={w_jump:e}")
        });
    }
    Ok(t.finish(
        "R/W branch continuity",
        SCALAR_SAMPLES,
        Some(format!(
            "|W(y0(1+eps),y0) + 1/(2y0^2)| relative to 1/(2y0^2): {literal:.2e}"
        )),
    ))
}

/// A random admissible setting: grid, data, current/previous states and a
/// trial point near the current state.
struct RandomState {
    spec: ProblemSpec<f64>,
    params: SolverParams<f64>,
    coeffs: SchemeCoefficients<f64>,
    x_curr: Vec<f64>,
    x_trial: Vec<f64>,
}

fn jitter(grid: &Grid<f64>, base: &[f64], amount: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = grid.h();
    let mut x = base.to_vec();
    for v in x.iter_mut().take(grid.cells()).skip(1) {
        *v += amount * h * (rng.gen::<f64>() - 0.5);
    }
    x
}

fn random_state(rng: &mut ChaCha8Rng) -> Result<RandomState> {
    let cells = rng.gen_range(6usize..=24);
    let grid = Grid::unit(cells)?;
    let m = rng.gen_range(1.2..3.0);
    let spec = ProblemSpec::new(m, grid, InitialDataKind::PaperQuadratic)?;
    let h = spec.grid.h();
    let mut params = SolverParams::with_tau(h * rng.gen_range(0.5..2.0));
    params.a0 = rng.gen_range(0.5..4.0);
    let nodes = spec.grid.nodes();
    let x_curr = jitter(&spec.grid, &nodes, 0.6, rng);
    let x_prev = jitter(&spec.grid, &x_curr, 0.3, rng);
    let x_trial = jitter(&spec.grid, &x_curr, 0.3, rng);
    let coeffs = SchemeCoefficients::build(&x_curr, &x_prev, &spec, &params)?;
    Ok(RandomState {
        spec,
        params,
        coeffs,
        x_curr,
        x_trial,
    })
}

/// Fourth-order central difference of `f` along a direction, step `d`.
fn central_derivative(f: impl Fn(f64) -> Result<f64>, d: f64) -> Result<f64> {
    Ok((8.0 * (f(d)? - f(-d)?) - (f(2.0 * d)? - f(-2.0 * d)?)) / (12.0 * d))
}

/// `grad F = h g` against finite differences of `F`.
pub fn check_gradient(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 5);
    let mut t = Tracker::new(1e-6);
    for sample in 0..STATE_SAMPLES {
        let s = random_state(&mut rng)?;
        let grid = &s.spec.grid;
        let h = grid.h();
        let g = residual(&s.x_trial, &s.x_curr, &s.coeffs, &s.spec, &s.params)?;
        let x_hat: Vec<f64> = s
            .x_trial
            .iter()
            .enumerate()
            .map(|(i, &v)| v - grid.node(i))
            .collect();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 1..grid.cells() {
            let fd = central_derivative(
                |d| {
                    let mut p = x_hat.clone();
                    p[i] += d;
                    eval_f(&p, &s.x_curr, &s.coeffs, &s.spec, &s.params)
                },
                1e-3 * h,
            )?;
            err = err.max((fd - h * g[i]).abs());
            scale = scale.max((h * g[i]).abs());
        }
        let rel = err / scale;
        t.record(rel, || {
            format!("state #{sample} (M={}) rel. error {rel:e}", grid.cells())
        });
    }
    Ok(t.finish("gradient vs finite differences of F", STATE_SAMPLES, None))
}

/// Assembled Hessian against finite differences of the residual.
pub fn check_hessian(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 6);
    let mut t = Tracker::new(1e-6);
    let w_sign = if opts.flip_w_sign { -1.0 } else { 1.0 };
    for sample in 0..STATE_SAMPLES {
        let s = random_state(&mut rng)?;
        let grid = &s.spec.grid;
        let n = grid.cells();
        let hess =
            hessian_with_w_sign(&s.x_trial, &s.x_curr, &s.coeffs, &s.spec, &s.params, w_sign)?;
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for j in 1..n {
            let mut e = vec![0.0; n + 1];
            e[j] = 1.0;
            let column = hess.apply(&e);
            for i in 1..n {
                let fd = central_derivative(
                    |d| {
                        let mut p = s.x_trial.clone();
                        p[j] += d;
                        Ok(residual(&p, &s.x_curr, &s.coeffs, &s.spec, &s.params)?[i])
                    },
                    1e-4 * grid.h(),
                )?;
                err = err.max((fd - column[i]).abs());
                scale = scale.max(column[i].abs());
            }
        }
        let rel = err / scale;
        t.record(rel, || {
            format!("state #{sample} (M={n}) rel. error {rel:e}")
        });
    }
    Ok(t.finish(
        "Hessian vs finite differences of the gradient",
        STATE_SAMPLES,
        None,
    ))
}

fn random_zero_end_field(grid: &Grid<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut l: Vec<f64> = (0..grid.num_nodes())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    l[0] = 0.0;
    l[grid.cells()] = 0.0;
    l
}

/// `<d_h phi, l> = -<phi, D_h l>` for zero-endpoint `l`.
pub fn check_summation_by_parts(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 7);
    let mut t = Tracker::new(1e-12);
    for sample in 0..FIELD_SAMPLES {
        let grid = Grid::unit(rng.gen_range(2usize..=64))?;
        let h = grid.h();
        let l = random_zero_end_field(&grid, &mut rng);
        let phi: Vec<f64> = (0..grid.cells())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let dphi = d_centered_to_nodes(&phi, &grid);
        let dl = d_forward(&l, &grid);
        let lhs: f64 = (1..grid.cells()).map(|i| dphi[i] * l[i]).sum::<f64>() * h;
        let rhs: f64 = -phi.iter().zip(dl.iter()).map(|(a, b)| a * b).sum::<f64>() * h;
        let scale = (phi
            .iter()
            .zip(dl.iter())
            .map(|(a, b)| (a * b).abs())
            .sum::<f64>()
            * h)
            .max(f64::MIN_POSITIVE);
        let rel = (lhs - rhs).abs() / scale;
        t.record(rel, || {
            format!(
                "field #{sample} (M={}) lhs={lhs:e} rhs={rhs:e}",
                grid.cells()
            )
        });
    }
    Ok(t.finish("summation by parts", FIELD_SAMPLES, None))
}

/// `|D~_h l| <= |D_h l|` for zero-endpoint `l` (interior nodes on the left).
pub fn check_wide_difference_bound(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = rng_for(opts.seed, 8);
    let mut t = Tracker::new(0.0);
    for sample in 0..FIELD_SAMPLES {
        let grid = Grid::unit(rng.gen_range(2usize..=64))?;
        let l = random_zero_end_field(&grid, &mut rng);
        let wide = interior_l2_norm(&d_wide(&l, &grid), &grid);
        let narrow = cell_l2_norm(&d_forward(&l, &grid), &grid);
        let excess = (wide - narrow * (1.0 + 1e-14)).max(0.0);
        t.record(excess, || {
            format!(
                "field #{sample} (M={}) wide={wide:e} forward={narrow:e}",
                grid.cells()
            )
        });
    }
    Ok(t.finish("|D~_h l| <= |D_h l|", FIELD_SAMPLES, None))
}

/// Every sweep, in a fixed order.
pub fn run_all(opts: &CheckOptions) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_q1_shape(opts)?,
        check_w_nonpositive(opts)?,
        check_g_convex(opts)?,
        check_branch_continuity(opts)?,
        check_gradient(opts)?,
        check_hessian(opts)?,
        check_summation_by_parts(opts)?,
        check_wide_difference_bound(opts)?,
    ])
}
