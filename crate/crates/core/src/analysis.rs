//! Error norms against a nested fine-mesh reference, observed orders, and the
//! refinement study that drives them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functional::SolverParams;
use crate::mesh::Grid;
use crate::output::{csv_text, fmt_exact, fmt_short, write_atomic};
use crate::problem::{recover_density, InitialDataKind, ProblemSpec};
use crate::scalar::Scalar;
use crate::stepper::{run, RunConfig, RunResult};

pub const NORM_NAMES: [&str; 4] = ["err_f_L2", "err_f_inf", "err_x_L2", "err_x_inf"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord<T> {
    pub h: T,
    pub tau: T,
    pub err_f_l2: T,
    pub err_f_inf: T,
    pub err_x_l2: T,
    pub err_x_inf: T,
}

impl<T: Scalar> ErrorRecord<T> {
    /// Errors in [`NORM_NAMES`] order.
    pub fn norms(&self) -> [T; 4] {
        [self.err_f_l2, self.err_f_inf, self.err_x_l2, self.err_x_inf]
    }
}

/// Observed orders between consecutive records, one entry per norm.
/// `None` marks an order that is undefined because an error vanished.
pub type OrderRow<T> = [Option<T>; 4];

#[derive(Debug, Clone)]
pub struct ConvergenceReport<T> {
    pub m: T,
    pub t_eval: T,
    /// Sorted by decreasing `h`.
    pub records: Vec<ErrorRecord<T>>,
    /// `orders[k]` compares `records[k]` with `records[k + 1]`.
    pub orders: Vec<OrderRow<T>>,
    pub reference_cells: usize,
    pub reference_run: RunResult<T>,
    /// Same order as `records`.
    pub coarse_runs: Vec<RunResult<T>>,
}

impl<T: Scalar> ConvergenceReport<T> {
    /// Every run in the study, reference first.
    pub fn all_runs(&self) -> impl Iterator<Item = &RunResult<T>> {
        std::iter::once(&self.reference_run).chain(self.coarse_runs.iter())
    }
}

/// Stride `s` such that reference node `i*s` carries the label of coarse node `i`.
pub fn nesting_stride(coarse_cells: usize, reference_cells: usize) -> Result<usize> {
    if coarse_cells == 0
        || reference_cells < coarse_cells
        || !reference_cells.is_multiple_of(coarse_cells)
    {
        return Err(Error::Config(format!(
            "reference grid with {reference_cells} cells is not a refinement of a grid with {coarse_cells} cells"
        )));
    }
    Ok(reference_cells / coarse_cells)
}

fn check_nested(coarse_len: usize, reference_len: usize, stride: usize) -> Result<()> {
    if coarse_len < 2 || stride == 0 || (coarse_len - 1) * stride != reference_len - 1 {
        return Err(Error::Config(format!(
            "reference of {reference_len} nodes is not a stride-{stride} refinement of {coarse_len} nodes"
        )));
    }
    Ok(())
}

fn weighted_norms<T: Scalar>(err: &[T], weights: &[T]) -> (T, T) {
    let half = T::lit(0.5);
    let mut sum = T::zero();
    let mut sup = T::zero();
    for (&e, &w) in err.iter().zip(weights) {
        sum = sum + e * e * w;
        sup = sup.max(e.abs());
    }
    ((half * sum).sqrt(), sup)
}

/// Density errors at shared labels. The L2 weights come from the coarse
/// trajectory: `x1-x0`, `x_{i+1}-x_{i-1}`, `x_M-x_{M-1}`, halved.
pub fn density_error_norms<T: Scalar>(
    coarse: (&[T], &[T]),
    reference: (&[T], &[T]),
    stride: usize,
) -> Result<(T, T)> {
    let (x, f) = coarse;
    let (x_ref, f_ref) = reference;
    if x.len() != f.len() || x_ref.len() != f_ref.len() {
        return Err(Error::Config(
            "trajectory and density lengths differ".into(),
        ));
    }
    check_nested(x.len(), x_ref.len(), stride)?;
    if x.windows(2).any(|w| !(w[0] < w[1])) || x_ref.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Inadmissible(
            "error norms need increasing trajectories".into(),
        ));
    }
    let last = x.len() - 1;
    let err: Vec<T> = (0..=last).map(|i| f_ref[i * stride] - f[i]).collect();
    let weights: Vec<T> = (0..=last)
        .map(|i| match i {
            0 => x[1] - x[0],
            i if i == last => x[last] - x[last - 1],
            i => x[i + 1] - x[i - 1],
        })
        .collect();
    Ok(weighted_norms(&err, &weights))
}

/// Trajectory errors at shared labels with weights `h, 2h, ..., 2h, h`, halved.
pub fn trajectory_error_norms<T: Scalar>(
    coarse_x: &[T],
    reference_x: &[T],
    stride: usize,
    grid: &Grid<T>,
) -> Result<(T, T)> {
    check_nested(coarse_x.len(), reference_x.len(), stride)?;
    if coarse_x.len() != grid.num_nodes() {
        return Err(Error::Config(
            "trajectory does not match the coarse grid".into(),
        ));
    }
    let last = coarse_x.len() - 1;
    let h = grid.h();
    let err: Vec<T> = (0..=last)
        .map(|i| reference_x[i * stride] - coarse_x[i])
        .collect();
    let weights: Vec<T> = (0..=last)
        .map(|i| if i == 0 || i == last { h } else { h + h })
        .collect();
    Ok(weighted_norms(&err, &weights))
}

/// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})`, which is `log2` of the error
/// ratio when `h` halves.
pub fn observed_orders<T: Scalar>(records: &[ErrorRecord<T>]) -> Vec<OrderRow<T>> {
    records
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].norms(), w[1].norms());
            let scale = (w[0].h / w[1].h).ln();
            let mut row = [None; 4];
            for k in 0..4 {
                if a[k] > T::zero() && b[k] > T::zero() && scale != T::zero() {
                    row[k] = Some((a[k] / b[k]).ln() / scale);
                }
            }
            row
        })
        .collect()
}

/// Everything a refinement study needs besides the exponent.
#[derive(Debug, Clone)]
pub struct StudySetup<T> {
    pub x_left: T,
    pub x_right: T,
    pub initial_data: InitialDataKind,
    /// Coarse cell counts; `tau = h` on each.
    pub cells: Vec<usize>,
    pub reference_cells: usize,
    pub t_eval: T,
    /// Everything except `tau`, which is set per grid.
    pub params: SolverParams<T>,
    pub jobs: usize,
}

fn run_case<T: Scalar>(m: T, cells: usize, setup: &StudySetup<T>) -> Result<RunResult<T>> {
    let grid = Grid::new(setup.x_left, setup.x_right, cells)?;
    let tau = grid.h();
    let spec = ProblemSpec::new(m, grid, setup.initial_data.clone())?;
    let mut params = setup.params;
    params.tau = tau;
    run(&RunConfig {
        spec,
        params,
        t_final: setup.t_eval,
        snapshot_every: 0,
        output_dir: None,
    })
}

fn check_time_grid<T: Scalar>(t_eval: T, tau: T, cells: usize) -> Result<()> {
    let ratio = t_eval / tau;
    if (ratio - ratio.round()).abs() > T::lit(1e-9) * ratio.abs().max(T::one()) {
        return Err(Error::Config(format!(
            "t_eval = {t_eval} is not a multiple of tau = h = {tau} (M = {cells})"
        )));
    }
    Ok(())
}

/// Runs the reference and every coarse grid to `t_eval` with `tau = h` and
/// compares them at shared labels.
pub fn convergence_study<T: Scalar>(m: T, setup: &StudySetup<T>) -> Result<ConvergenceReport<T>> {
    if setup.cells.is_empty() {
        return Err(Error::Config("study needs at least one coarse grid".into()));
    }
    if !(setup.t_eval > T::zero()) {
        return Err(Error::Config(format!(
            "t_eval must be positive, got {}",
            setup.t_eval
        )));
    }
    let mut cells = setup.cells.clone();
    cells.sort_unstable();
    cells.dedup();
    let span = setup.x_right - setup.x_left;
    for &c in cells.iter().chain(std::iter::once(&setup.reference_cells)) {
        nesting_stride(c, setup.reference_cells)?;
        check_time_grid(setup.t_eval, span / T::from_usize_lossy(c), c)?;
    }

    let all: Vec<usize> = std::iter::once(setup.reference_cells)
        .chain(cells.iter().copied())
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(setup.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut runs = pool
        .install(|| {
            all.par_iter()
                .map(|&c| run_case(m, c, setup))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let coarse_runs = runs.split_off(1);
    let reference_run = runs.pop().expect("reference run present");

    let ref_spec = ProblemSpec::new(
        m,
        Grid::new(setup.x_left, setup.x_right, setup.reference_cells)?,
        setup.initial_data.clone(),
    )?;
    let x_ref = &reference_run.final_state.x_curr;
    let f_ref = recover_density(x_ref, &ref_spec)?;

    let mut records = Vec::with_capacity(cells.len());
    for (&c, result) in cells.iter().zip(&coarse_runs) {
        let grid = Grid::new(setup.x_left, setup.x_right, c)?;
        let spec = ProblemSpec::new(m, grid, setup.initial_data.clone())?;
        let x = &result.final_state.x_curr;
        let f = recover_density(x, &spec)?;
        let stride = nesting_stride(c, setup.reference_cells)?;
        let (err_f_l2, err_f_inf) = density_error_norms((x, &f), (x_ref, &f_ref), stride)?;
        let (err_x_l2, err_x_inf) = trajectory_error_norms(x, x_ref, stride, &spec.grid)?;
        records.push(ErrorRecord {
            h: spec.grid.h(),
            tau: spec.grid.h(),
            err_f_l2,
            err_f_inf,
            err_x_l2,
            err_x_inf,
        });
    }
    let orders = observed_orders(&records);
    Ok(ConvergenceReport {
        m,
        t_eval: setup.t_eval,
        records,
        orders,
        reference_cells: setup.reference_cells,
        reference_run,
        coarse_runs,
    })
}

/// Short file-name label for an exponent: `2`, `1.6667`.
pub fn exponent_label<T: Scalar>(m: T) -> String {
    let s = format!("{:.4}", m.to_f64_lossy());
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn report_csv<T: Scalar>(report: &ConvergenceReport<T>) -> String {
    let header = "h,tau,err_f_L2,order,err_f_inf,order,err_x_L2,order,err_x_inf,order";
    csv_text(
        header,
        report.records.iter().enumerate().map(|(k, r)| {
            let mut row = vec![fmt_exact(r.h), fmt_exact(r.tau)];
            for (j, e) in r.norms().into_iter().enumerate() {
                row.push(fmt_exact(e));
                let order = k
                    .checked_sub(1)
                    .and_then(|p| report.orders[p][j])
                    .map(fmt_exact)
                    .unwrap_or_default();
                row.push(order);
            }
            row
        }),
    )
}

/// Aligned text table; order columns are left out for a single grid.
pub fn report_table<T: Scalar>(report: &ConvergenceReport<T>) -> String {
    let with_orders = report.records.len() > 1;
    let mut head = vec!["h".to_string(), "tau".to_string()];
    for name in NORM_NAMES {
        head.push(name.to_string());
        if with_orders {
            head.push("order".into());
        }
    }
    let mut rows = vec![head];
    for (k, r) in report.records.iter().enumerate() {
        let mut row = vec![fmt_short(r.h), fmt_short(r.tau)];
        for (j, e) in r.norms().into_iter().enumerate() {
            row.push(fmt_short(e));
            if with_orders {
                row.push(match k.checked_sub(1) {
                    None => String::new(),
                    Some(p) => report.orders[p][j]
                        .map(|o| format!("{:.3}", o.to_f64_lossy()))
                        .unwrap_or_else(|| "n/a".into()),
                });
            }
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!(
        "m = {}, t = {}, reference M = {}\n",
        exponent_label(report.m),
        report.t_eval,
        report.reference_cells
    );
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// Writes `convergence_<m>.csv` and `convergence_<m>.txt` into `dir`.
pub fn write_report<T: Scalar>(
    report: &ConvergenceReport<T>,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let label = exponent_label(report.m);
    let csv = dir.join(format!("convergence_{label}.csv"));
    let txt = dir.join(format!("convergence_{label}.txt"));
    write_atomic(&csv, &report_csv(report))?;
    write_atomic(&txt, &report_table(report))?;
    Ok((csv, txt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(h: f64, e: [f64; 4]) -> ErrorRecord<f64> {
        ErrorRecord {
            h,
            tau: h,
            err_f_l2: e[0],
            err_f_inf: e[1],
            err_x_l2: e[2],
            err_x_inf: e[3],
        }
    }

    #[test]
    fn identical_inputs_give_zero_error() {
        let g = Grid::<f64>::unit(8).unwrap();
        let x = g.nodes();
        let f: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
        assert_eq!(
            density_error_norms((&x, &f), (&x, &f), 1).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(trajectory_error_norms(&x, &x, 1, &g).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn density_norm_hand_computation_on_two_cells() {
        // Coarse x = (0, 0.4, 1), error (1, 2, 3): weights 0.4, 1.0, 0.6.
        let x = [0.0, 0.4, 1.0];
        let f = [0.0; 3];
        let x_ref = [0.0, 0.2, 0.4, 0.7, 1.0];
        let f_ref = [1.0, 9.0, 2.0, 9.0, 3.0];
        let (l2, inf) = density_error_norms((&x, &f), (&x_ref, &f_ref), 2).unwrap();
        assert_relative_eq!(
            l2,
            (0.5f64 * (0.4 + 4.0 * 1.0 + 9.0 * 0.6)).sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(inf, 3.0);
    }

    #[test]
    fn constant_trajectory_error_has_unit_weight_sum() {
        let g = Grid::<f64>::unit(10).unwrap();
        let x = g.nodes();
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.25).collect();
        let (l2, inf) = trajectory_error_norms(&x, &shifted, 1, &g).unwrap();
        assert_relative_eq!(l2, 0.25, epsilon = 1e-15);
        assert_relative_eq!(inf, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn norms_are_absolutely_homogeneous() {
        let g = Grid::<f64>::unit(6).unwrap();
        let x = g.nodes();
        let err: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        let r1: Vec<f64> = x.iter().zip(&err).map(|(a, e)| a + e * 1e-3).collect();
        let r2: Vec<f64> = x.iter().zip(&err).map(|(a, e)| a - e * 3e-3).collect();
        let (a, b) = trajectory_error_norms(&x, &r1, 1, &g).unwrap();
        let (c, d) = trajectory_error_norms(&x, &r2, 1, &g).unwrap();
        assert_relative_eq!(c, 3.0 * a, max_relative = 1e-12);
        assert_relative_eq!(d, 3.0 * b, max_relative = 1e-12);
    }

    #[test]
    fn non_nested_reference_is_a_config_error() {
        assert!(matches!(nesting_stride(800, 10000), Err(Error::Config(_))));
        assert_eq!(nesting_stride(200, 10000).unwrap(), 50);
        let g = Grid::<f64>::unit(3).unwrap();
        let x = g.nodes();
        let r = Grid::<f64>::unit(7).unwrap().nodes();
        assert!(matches!(
            trajectory_error_norms(&x, &r, 2, &g),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn order_examples() {
        let o = observed_orders(&[record(0.1, [4e-4; 4]), record(0.05, [1e-4; 4])]);
        assert_relative_eq!(o[0][0].unwrap(), 2.0, epsilon = 1e-12);
        let o = observed_orders(&[
            record(1.0 / 200.0, [1.506e-4; 4]),
            record(1.0 / 400.0, [3.620e-5; 4]),
        ]);
        assert_relative_eq!(o[0][0].unwrap(), 2.056, epsilon = 1e-3);
        let o = observed_orders(&[record(0.1, [3e-3; 4]), record(0.05, [3e-3; 4])]);
        assert_eq!(o[0][2], Some(0.0));
        let o = observed_orders(&[
            record(0.1, [1e-3, 0.0, 1e-3, 1e-3]),
            record(0.05, [0.0, 0.0, 1e-3, 1e-3]),
        ]);
        assert_eq!(o[0][0], None);
        assert_eq!(o[0][1], None);
        assert!(observed_orders(&[record(0.1, [1.0; 4])]).is_empty());
    }

    #[test]
    fn orders_ignore_uniform_scaling() {
        let a = [
            record(0.1, [3e-3, 5e-3, 1e-3, 2e-3]),
            record(0.05, [8e-4, 1e-3, 2e-4, 6e-4]),
        ];
        let b: Vec<_> = a
            .iter()
            .map(|r| record(r.h, r.norms().map(|e| e * 17.0)))
            .collect();
        let (oa, ob) = (observed_orders(&a), observed_orders(&b));
        for k in 0..4 {
            assert_relative_eq!(oa[0][k].unwrap(), ob[0][k].unwrap(), epsilon = 1e-12);
        }
    }

    fn small_setup(cells: Vec<usize>, reference_cells: usize) -> StudySetup<f64> {
        StudySetup {
            x_left: 0.0,
            x_right: 1.0,
            // Flat at both ends, so compatible with the zero-flux boundary.
            initial_data: InitialDataKind::Polynomial(vec![0.3, 0.0, 1.0, -2.0, 1.0]),
            cells,
            reference_cells,
            t_eval: 0.05,
            params: SolverParams::with_tau(0.1),
            jobs: 2,
        }
    }

    #[test]
    fn small_study_shows_second_order() {
        let report = convergence_study(2.0, &small_setup(vec![40, 20], 320)).unwrap();
        assert_eq!(report.records.len(), 2);
        assert!(report.records[0].h > report.records[1].h);
        for o in report.orders[0] {
            let o = o.unwrap();
            assert!(o > 1.8 && o < 2.3, "order {o}");
        }
        let table = report_table(&report);
        assert!(table.lines().nth(1).unwrap().contains("order"));
        let csv = report_csv(&report);
        assert!(csv.starts_with("h,tau,err_f_L2,order,"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn single_grid_study_has_no_orders() {
        let report = convergence_study(2.0, &small_setup(vec![20], 80)).unwrap();
        assert!(report.orders.is_empty());
        assert!(!report_table(&report).contains("order"));
    }

    #[test]
    fn study_rejects_bad_time_or_nesting() {
        assert!(matches!(
            convergence_study(2.0, &small_setup(vec![30], 100)),
            Err(Error::Config(_))
        ));
        let mut s = small_setup(vec![20], 80);
        s.t_eval = 0.051;
        assert!(matches!(convergence_study(2.0, &s), Err(Error::Config(_))));
    }

    #[test]
    fn exponent_labels() {
        assert_eq!(exponent_label(2.0), "2");
        assert_eq!(exponent_label(5.0 / 3.0), "1.6667");
    }
}
