//! Outer time loop.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::functional::{SchemeCoefficients, SolverParams};
use crate::mesh::{cell_l2_norm, d_forward, NodeField};
use crate::newton::{newton_step, NewtonReport};
use crate::output::{csv_text, fmt_exact, read_snapshot_trajectory, write_atomic};
use crate::problem::{
    discrete_energy, discrete_mass, is_admissible, recover_density, ProblemSpec, TrajectoryState,
};
use crate::scalar::Scalar;

/// Slack on the per-step dissipation inequality, absorbing the Newton tolerance.
pub const ENERGY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RunConfig<T> {
    pub spec: ProblemSpec<T>,
    pub params: SolverParams<T>,
    pub t_final: T,
    /// Snapshot period in steps; 0 writes only the initial and final states.
    pub snapshot_every: usize,
    /// Where snapshots and traces go; `None` keeps the run in memory.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord<T> {
    pub n: usize,
    pub t: T,
    pub energy: T,
    /// `E_h(x^{n}) - E_h(x^{n-1})`.
    pub dissipation_lhs: T,
    /// `-A0 tau |D_h(x^{n} - x^{n-1})|^2`.
    pub dissipation_rhs: T,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassRecord<T> {
    pub n: usize,
    pub t: T,
    pub mass: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics<T> {
    pub tau: T,
    pub newton: NewtonReport<T>,
    pub energy_before: T,
    pub energy_after: T,
    pub dissipation_lhs: T,
    pub dissipation_rhs: T,
}

#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub final_state: TrajectoryState<T>,
    pub energy_trace: Vec<EnergyRecord<T>>,
    pub mass_trace: Vec<MassRecord<T>>,
    pub newton_reports: Vec<NewtonReport<T>>,
}

impl<T: Scalar> RunResult<T> {
    pub fn steps(&self) -> usize {
        self.newton_reports.len()
    }

    pub fn total_newton_iterations(&self) -> usize {
        self.newton_reports.iter().map(|r| r.iterations).sum()
    }

    /// `E_h(0) - E_h(t_final)`.
    pub fn energy_drop(&self) -> T {
        match (self.energy_trace.first(), self.energy_trace.last()) {
            (Some(a), Some(b)) => a.energy - b.energy,
            _ => T::zero(),
        }
    }
}

/// Initial state `x^0 = x^{-1} = X`.
pub fn bootstrap<T: Scalar>(spec: &ProblemSpec<T>) -> TrajectoryState<T> {
    let x = spec.grid.nodes();
    TrajectoryState {
        n: 0,
        t: T::zero(),
        x_curr: x.clone(),
        x_prev: x,
    }
}

/// One time step of size `params.tau`, checking the discrete dissipation
/// inequality on the result.
pub fn advance<T: Scalar>(
    state: &TrajectoryState<T>,
    spec: &ProblemSpec<T>,
    params: &SolverParams<T>,
) -> Result<(TrajectoryState<T>, StepDiagnostics<T>)> {
    let grid = &spec.grid;
    if !is_admissible(&state.x_curr, grid) || !is_admissible(&state.x_prev, grid) {
        return Err(Error::Inadmissible(format!("state at step {}", state.n)));
    }
    let coeffs = SchemeCoefficients::build(&state.x_curr, &state.x_prev, spec, params)?;
    let (x_new, report) = newton_step(state, &coeffs, spec, params)?;

    let energy_before = discrete_energy(&state.x_curr, spec)?;
    let energy_after = discrete_energy(&x_new, spec)?;
    let change: Vec<T> = x_new
        .iter()
        .zip(state.x_curr.iter())
        .map(|(&a, &b)| a - b)
        .collect();
    let norm = cell_l2_norm(&d_forward(&change, grid), grid);
    let lhs = energy_after - energy_before;
    let rhs = -params.a0 * params.tau * norm * norm;
    if lhs > rhs + T::lit(ENERGY_SLACK) {
        return Err(Error::EnergyIncrease {
            step: state.n + 1,
            lhs: lhs.to_f64_lossy(),
            rhs: rhs.to_f64_lossy(),
        });
    }

    let next = TrajectoryState {
        n: state.n + 1,
        t: state.t + params.tau,
        x_curr: x_new,
        x_prev: state.x_curr.clone(),
    };
    Ok((
        next,
        StepDiagnostics {
            tau: params.tau,
            newton: report,
            energy_before,
            energy_after,
            dissipation_lhs: lhs,
            dissipation_rhs: rhs,
        },
    ))
}

/// Step sizes that reach `t_final`: full steps of `tau`, the last one
/// shortened if `tau` does not divide `t_final`.
fn step_plan<T: Scalar>(t_final: T, tau: T) -> (usize, T) {
    let ratio = t_final / tau;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= T::lit(1e-9) * nearest.max(T::one()) {
        let n = nearest.to_usize().unwrap_or(0);
        return (n, tau);
    }
    let full = ratio.floor().to_usize().unwrap_or(0);
    (full + 1, t_final - T::from_usize_lossy(full) * tau)
}

fn snapshot_csv<T: Scalar>(x: &NodeField<T>, f: &NodeField<T>, spec: &ProblemSpec<T>) -> String {
    csv_text(
        "i,X,x,f",
        (0..x.len()).map(|i| {
            vec![
                i.to_string(),
                fmt_exact(spec.grid.node(i)),
                fmt_exact(x[i]),
                fmt_exact(f[i]),
            ]
        }),
    )
}

pub fn snapshot_path(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("snap_{n}.csv"))
}

/// Rebuilds a state from two consecutive snapshot files.
pub fn restart_from_snapshots<T: Scalar>(
    prev: &Path,
    curr: &Path,
    n: usize,
    t: T,
    spec: &ProblemSpec<T>,
) -> Result<TrajectoryState<T>> {
    let x_prev = read_snapshot_trajectory(prev)?;
    let x_curr = read_snapshot_trajectory(curr)?;
    for (x, p) in [(&x_prev, prev), (&x_curr, curr)] {
        if !is_admissible(x, &spec.grid) {
            return Err(Error::Inadmissible(format!("snapshot {}", p.display())));
        }
    }
    Ok(TrajectoryState {
        n,
        t,
        x_curr,
        x_prev,
    })
}

/// Advances from the bootstrap state to `t_final`, recording energy and mass
/// and writing snapshots when an output directory is set.
pub fn run<T: Scalar>(config: &RunConfig<T>) -> Result<RunResult<T>> {
    let spec = &config.spec;
    config.params.validate()?;
    if !(config.t_final >= T::zero()) || !config.t_final.is_finite() {
        return Err(Error::Config(format!(
            "t_final must be nonnegative, got {}",
            config.t_final
        )));
    }
    let (steps, last_tau) = step_plan(config.t_final, config.params.tau);

    let mut state = bootstrap(spec);
    let f0 = recover_density(&state.x_curr, spec)?;
    let e0 = discrete_energy(&state.x_curr, spec)?;
    let mut energy_trace = vec![EnergyRecord {
        n: 0,
        t: T::zero(),
        energy: e0,
        dissipation_lhs: T::zero(),
        dissipation_rhs: T::zero(),
        bound_ok: true,
    }];
    let mut mass_trace = vec![MassRecord {
        n: 0,
        t: T::zero(),
        mass: discrete_mass(&state.x_curr, &f0),
    }];
    let mut newton_reports = Vec::with_capacity(steps);
    if let Some(dir) = &config.output_dir {
        write_atomic(
            &snapshot_path(dir, 0),
            &snapshot_csv(&state.x_curr, &f0, spec),
        )?;
    }

    for k in 1..=steps {
        let mut params = config.params;
        if k == steps {
            params.tau = last_tau;
        }
        let (mut next, diag) = advance(&state, spec, &params)?;
        next.t = if k == steps {
            config.t_final
        } else {
            T::from_usize_lossy(k) * config.params.tau
        };
        state = next;
        let f = recover_density(&state.x_curr, spec)?;
        energy_trace.push(EnergyRecord {
            n: k,
            t: state.t,
            energy: diag.energy_after,
            dissipation_lhs: diag.dissipation_lhs,
            dissipation_rhs: diag.dissipation_rhs,
            bound_ok: diag.dissipation_lhs <= diag.dissipation_rhs + T::lit(ENERGY_SLACK),
        });
        mass_trace.push(MassRecord {
            n: k,
            t: state.t,
            mass: discrete_mass(&state.x_curr, &f),
        });
        newton_reports.push(diag.newton);
        if let Some(dir) = &config.output_dir {
            let due = config.snapshot_every > 0 && k % config.snapshot_every == 0;
            if due || k == steps {
                write_atomic(
                    &snapshot_path(dir, k),
                    &snapshot_csv(&state.x_curr, &f, spec),
                )?;
            }
        }
    }

    let result = RunResult {
        final_state: state,
        energy_trace,
        mass_trace,
        newton_reports,
    };
    if let Some(dir) = &config.output_dir {
        write_traces(dir, &result)?;
    }
    Ok(result)
}

fn write_traces<T: Scalar>(dir: &Path, result: &RunResult<T>) -> Result<()> {
    let energy = csv_text(
        "n,t,E_h,dissipation_lhs,dissipation_rhs",
        result.energy_trace.iter().map(|r| {
            vec![
                r.n.to_string(),
                fmt_exact(r.t),
                fmt_exact(r.energy),
                fmt_exact(r.dissipation_lhs),
                fmt_exact(r.dissipation_rhs),
            ]
        }),
    );
    write_atomic(&dir.join("energy.csv"), &energy)?;
    let mass = csv_text(
        "n,t,mass",
        result
            .mass_trace
            .iter()
            .map(|r| vec![r.n.to_string(), fmt_exact(r.t), fmt_exact(r.mass)]),
    );
    write_atomic(&dir.join("mass.csv"), &mass)
}
