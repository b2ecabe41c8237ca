//! Problem data (exponent, domain, initial density) and the quantities
//! recovered from a discrete trajectory: density, energy and mass.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{d_forward, d_wide, CellField, Grid, NodeField};
use crate::scalar::Scalar;

/// Catalog of initial densities.
///
/// Textual keys: `paper-quadratic`, `constant:<c>`, `poly:<c0,c1,...>`
/// (coefficients in increasing degree).
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDataKind {
    /// `f0(x) = 0.5 - (x - 0.5)^2`.
    PaperQuadratic,
    Constant(f64),
    Polynomial(Vec<f64>),
}

impl InitialDataKind {
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        match self {
            InitialDataKind::PaperQuadratic => {
                let d = x - T::lit(0.5);
                T::lit(0.5) - d * d
            }
            InitialDataKind::Constant(c) => T::lit(*c),
            InitialDataKind::Polynomial(coeffs) => coeffs
                .iter()
                .rev()
                .fold(T::zero(), |acc, &c| acc * x + T::lit(c)),
        }
    }
}

impl fmt::Display for InitialDataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialDataKind::PaperQuadratic => write!(f, "paper-quadratic"),
            InitialDataKind::Constant(c) => write!(f, "constant:{c}"),
            InitialDataKind::Polynomial(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
                write!(f, "poly:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for InitialDataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::InvalidProblem(format!("initial data '{s}': {why}"));
        if s == "paper-quadratic" {
            return Ok(InitialDataKind::PaperQuadratic);
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            let c = rest
                .trim()
                .parse::<f64>()
                .map_err(|_| bad("constant is not a number"))?;
            return Ok(InitialDataKind::Constant(c));
        }
        if let Some(rest) = s.strip_prefix("poly:") {
            let coeffs = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("coefficients must be comma-separated numbers"))?;
            if coeffs.is_empty() {
                return Err(bad("no coefficients"));
            }
            return Ok(InitialDataKind::Polynomial(coeffs));
        }
        Err(bad(
            "expected paper-quadratic, constant:<c> or poly:<c0,c1,...>",
        ))
    }
}

/// Exponent, grid and the initial density sampled at nodes and cell centers.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    pub m: T,
    pub grid: Grid<T>,
    pub initial_data: InitialDataKind,
    pub f0_nodes: NodeField<T>,
    pub f0_cells: CellField<T>,
    pub f0_min: T,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn new(m: T, grid: Grid<T>, initial_data: InitialDataKind) -> Result<Self> {
        if !(m > T::one()) || !m.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "exponent m must be finite and > 1, got {m}"
            )));
        }
        let f0_nodes = NodeField::from_fn(&grid, |i| initial_data.eval(grid.node(i)));
        let f0_cells = CellField::from_fn(&grid, |c| initial_data.eval(grid.cell_center(c)));
        let f0_min = f0_nodes.iter().copied().fold(T::infinity(), T::min);
        let cell_min = f0_cells.iter().copied().fold(T::infinity(), T::min);
        if !(f0_min > T::zero() && cell_min > T::zero()) {
            return Err(Error::InvalidProblem(format!(
                "initial density {initial_data} must be strictly positive on the domain \
                 (min node sample {f0_min}, min cell sample {cell_min})"
            )));
        }
        Ok(Self {
            m,
            grid,
            initial_data,
            f0_nodes,
            f0_cells,
            f0_min,
        })
    }
}

/// Discrete trajectory at time level `n` together with level `n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState<T> {
    pub n: usize,
    pub t: T,
    pub x_curr: NodeField<T>,
    pub x_prev: NodeField<T>,
}

/// Membership in the admissible set: endpoints pinned to the domain ends and
/// nodes strictly increasing.
pub fn is_admissible<T: Scalar>(x: &[T], grid: &Grid<T>) -> bool {
    x.len() == grid.num_nodes()
        && x[0] == grid.x_left()
        && x[grid.cells()] == grid.x_right()
        && x.windows(2).all(|w| w[0] < w[1])
        && x.iter().all(|v| v.is_finite())
}

fn require_admissible<T: Scalar>(x: &[T], grid: &Grid<T>) -> Result<()> {
    if x.len() != grid.num_nodes() {
        return Err(Error::Inadmissible(format!(
            "trajectory has {} nodes, grid has {}",
            x.len(),
            grid.num_nodes()
        )));
    }
    if x[0] != grid.x_left() || x[grid.cells()] != grid.x_right() {
        return Err(Error::Inadmissible(format!(
            "endpoints ({}, {}) not pinned to ({}, {})",
            x[0],
            x[grid.cells()],
            grid.x_left(),
            grid.x_right()
        )));
    }
    Ok(())
}

/// Density along the trajectory, `f_i = f0(X_i) / (D~_h x)_i`.
pub fn recover_density<T: Scalar>(x: &[T], spec: &ProblemSpec<T>) -> Result<NodeField<T>> {
    require_admissible(x, &spec.grid)?;
    let slope = d_wide(x, &spec.grid);
    slope
        .iter()
        .zip(spec.f0_nodes.iter())
        .enumerate()
        .map(|(i, (&s, &f0))| {
            if s > T::zero() {
                Ok(f0 / s)
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

/// `E_h(x) = -sum_i f0(X_{i-1/2}) ln((D_h x)_{i-1/2}) h`, the Lagrangian form of
/// `int f ln f` up to a constant. With this sign the scheme dissipates it.
pub fn discrete_energy<T: Scalar>(x: &[T], spec: &ProblemSpec<T>) -> Result<T> {
    require_admissible(x, &spec.grid)?;
    let slope = d_forward(x, &spec.grid);
    let mut e = T::zero();
    for (c, (&s, &f0)) in slope.iter().zip(spec.f0_cells.iter()).enumerate() {
        if !(s > T::zero()) {
            return Err(Error::DegenerateMesh {
                location: "cell",
                index: c,
                value: s.to_f64_lossy(),
            });
        }
        e = e + f0 * s.ln();
    }
    Ok(-e * spec.grid.h())
}

/// Trapezoidal mass `sum_i (f_{i-1} + f_i)/2 (x_i - x_{i-1})`.
pub fn discrete_mass<T: Scalar>(x: &[T], f: &[T]) -> T {
    assert_eq!(x.len(), f.len(), "trajectory and density lengths differ");
    let half = T::lit(0.5);
    x.windows(2)
        .zip(f.windows(2))
        .fold(T::zero(), |s, (xw, fw)| {
            s + half * (fw[0] + fw[1]) * (xw[1] - xw[0])
        })
}
