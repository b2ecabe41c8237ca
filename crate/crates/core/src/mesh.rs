//! Uniform Lagrangian reference grid and the difference operators between
//! node space (values at `X_i`, `i = 0..=M`) and cell space (values at
//! `X_{i-1/2}`, `i = 1..=M`, stored at slot `i - 1`).

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform grid on `[x_left, x_right]` with `cells` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    x_left: T,
    x_right: T,
    cells: usize,
    h: T,
}

impl<T: Scalar> Grid<T> {
    /// At least two cells are required so that the one-sided boundary
    /// stencils of [`d_wide`] exist and the scheme has an interior node.
    pub fn new(x_left: T, x_right: T, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells, got {cells}"
            )));
        }
        if !(x_left.is_finite() && x_right.is_finite()) || x_right <= x_left {
            return Err(Error::InvalidGrid(format!(
                "domain [{x_left}, {x_right}] is empty or not finite"
            )));
        }
        let h = (x_right - x_left) / T::from_usize_lossy(cells);
        Ok(Self {
            x_left,
            x_right,
            cells,
            h,
        })
    }

    /// Unit interval `[0, 1]`.
    pub fn unit(cells: usize) -> Result<Self> {
        Self::new(T::zero(), T::one(), cells)
    }

    pub fn x_left(&self) -> T {
        self.x_left
    }

    pub fn x_right(&self) -> T {
        self.x_right
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn num_nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn length(&self) -> T {
        self.x_right - self.x_left
    }

    /// Reference node `X_i`. The last node is returned as `x_right` exactly.
    pub fn node(&self, i: usize) -> T {
        debug_assert!(i <= self.cells);
        if i == self.cells {
            self.x_right
        } else {
            self.x_left + T::from_usize_lossy(i) * self.h
        }
    }

    /// Cell center `X_{i-1/2}` for the cell stored at slot `c` (so `i = c + 1`).
    pub fn cell_center(&self, c: usize) -> T {
        debug_assert!(c < self.cells);
        self.x_left + (T::from_usize_lossy(c) + T::lit(0.5)) * self.h
    }

    /// The identity trajectory `x = X`.
    pub fn nodes(&self) -> NodeField<T> {
        NodeField((0..=self.cells).map(|i| self.node(i)).collect())
    }

    pub fn cell_centers(&self) -> CellField<T> {
        CellField((0..self.cells).map(|c| self.cell_center(c)).collect())
    }
}

macro_rules! field_newtype {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Dense values ", $what, ".")]
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name<T>(pub Vec<T>);

        impl<T> $name<T> {
            pub fn from_vec(v: Vec<T>) -> Self {
                Self(v)
            }

            pub fn into_vec(self) -> Vec<T> {
                self.0
            }

            pub fn as_slice(&self) -> &[T] {
                &self.0
            }
        }

        impl<T> Deref for $name<T> {
            type Target = [T];
            fn deref(&self) -> &[T] {
                &self.0
            }
        }

        impl<T> DerefMut for $name<T> {
            fn deref_mut(&mut self) -> &mut [T] {
                &mut self.0
            }
        }

        impl<T> FromIterator<T> for $name<T> {
            fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
                Self(iter.into_iter().collect())
            }
        }
    };
}

field_newtype!(NodeField, "at the integer nodes `i = 0..=M`");
field_newtype!(
    CellField,
    "at the half-integer points `i - 1/2`, `i = 1..=M`"
);

impl<T: Scalar> NodeField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self(vec![T::zero(); grid.num_nodes()])
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(usize) -> T) -> Self {
        Self((0..grid.num_nodes()).map(f).collect())
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Scalar> CellField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self(vec![T::zero(); grid.cells()])
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(usize) -> T) -> Self {
        Self((0..grid.cells()).map(f).collect())
    }
}

#[track_caller]
fn check_nodes<T>(l: &[T], grid: &Grid<T>) {
    assert_eq!(
        l.len(),
        grid.cells + 1,
        "node field length must be M + 1 = {}",
        grid.cells + 1
    );
}

#[track_caller]
fn check_cells<T>(phi: &[T], grid: &Grid<T>) {
    assert_eq!(
        phi.len(),
        grid.cells,
        "cell field length must be M = {}",
        grid.cells
    );
}

/// Forward difference `(D_h l)_{i-1/2} = (l_i - l_{i-1}) / h`.
///
/// Panics if `l` does not have `M + 1` entries.
pub fn d_forward<T: Scalar>(l: &[T], grid: &Grid<T>) -> CellField<T> {
    check_nodes(l, grid);
    let inv_h = grid.h.recip();
    l.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
}

/// Difference of a cell field back to the nodes,
/// `(d_h phi)_i = (phi_{i+1/2} - phi_{i-1/2}) / h` for `i = 1..M-1`.
///
/// The two boundary entries are set to zero; they correspond to the pinned
/// Dirichlet nodes and are never read.
pub fn d_centered_to_nodes<T: Scalar>(phi: &[T], grid: &Grid<T>) -> NodeField<T> {
    check_cells(phi, grid);
    let inv_h = grid.h.recip();
    let mut out = NodeField::zeros(grid);
    for i in 1..grid.cells {
        out[i] = (phi[i] - phi[i - 1]) * inv_h;
    }
    out
}

/// Wide centered difference with second-order one-sided closures at both
/// ends. Exact on quadratics.
pub fn d_wide<T: Scalar>(l: &[T], grid: &Grid<T>) -> NodeField<T> {
    check_nodes(l, grid);
    let m = grid.cells;
    let inv_2h = (grid.h + grid.h).recip();
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    let mut out = NodeField::zeros(grid);
    out[0] = (four * l[1] - l[2] - three * l[0]) * inv_2h;
    for i in 1..m {
        out[i] = (l[i + 1] - l[i - 1]) * inv_2h;
    }
    out[m] = (l[m - 2] - four * l[m - 1] + three * l[m]) * inv_2h;
    out
}

/// `h`-weighted Euclidean norm of a cell field.
pub fn cell_l2_norm<T: Scalar>(phi: &[T], grid: &Grid<T>) -> T {
    (phi.iter().fold(T::zero(), |s, &v| s + v * v) * grid.h).sqrt()
}

/// `h`-weighted Euclidean norm over the interior nodes `1..M-1`.
pub fn interior_l2_norm<T: Scalar>(l: &[T], grid: &Grid<T>) -> T {
    check_nodes(l, grid);
    (l[1..grid.cells].iter().fold(T::zero(), |s, &v| s + v * v) * grid.h).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_rejects_too_few_cells() {
        assert!(matches!(Grid::<f64>::unit(1), Err(Error::InvalidGrid(_))));
        assert!(Grid::<f64>::new(1.0, 1.0, 4).is_err());
        assert!(Grid::<f64>::unit(2).is_ok());
    }

    #[test]
    fn last_node_is_pinned_exactly() {
        let g = Grid::new(0.1_f64, 0.7, 3);
        let g = g.unwrap();
        assert_eq!(g.node(3), 0.7);
        assert_relative_eq!(g.node(1), 0.3, epsilon = 1e-15);
        assert_relative_eq!(g.cell_center(0), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn forward_difference_examples() {
        let g = Grid::<f64>::unit(2).unwrap();
        assert_eq!(d_forward(&[0.0, 0.25, 1.0], &g).as_slice(), &[0.5, 1.5]);
        let g = Grid::<f64>::unit(7).unwrap();
        for v in d_forward(&g.nodes(), &g).iter() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-13);
        }
        assert!(d_forward(&[3.0; 8], &g).iter().all(|&v| v == 0.0));
    }

    #[test]
    #[should_panic(expected = "node field length")]
    fn forward_difference_length_mismatch_panics() {
        let g = Grid::<f64>::unit(4).unwrap();
        d_forward(&[0.0, 1.0], &g);
    }

    #[test]
    fn centered_to_nodes_examples() {
        let g = Grid::<f64>::unit(3).unwrap();
        let out = d_centered_to_nodes(&[1.0, 2.0, 4.0], &g);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[3], 0.0);
        assert_relative_eq!(out[1], 3.0, epsilon = 1e-13);
        assert_relative_eq!(out[2], 6.0, epsilon = 1e-13);
        assert!(d_centered_to_nodes(&[2.5; 3], &g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_difference_of_quadratic_is_exact() {
        // l = 3X^2 - X + 2 has l'' = 6 everywhere.
        let g = Grid::new(-1.0_f64, 2.0, 9).unwrap();
        let l = NodeField::from_fn(&g, |i| {
            let x = g.node(i);
            3.0 * x * x - x + 2.0
        });
        let dd = d_centered_to_nodes(&d_forward(&l, &g), &g);
        for i in 1..9 {
            assert_relative_eq!(dd[i], 6.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn wide_difference_examples() {
        let g = Grid::<f64>::unit(2).unwrap();
        assert_eq!(d_wide(&[0.0, 0.25, 1.0], &g).as_slice(), &[0.0, 1.0, 2.0]);
        let g = Grid::<f64>::unit(5).unwrap();
        for v in d_wide(&g.nodes(), &g).iter() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-13);
        }
        assert!(d_wide(&[1.5; 6], &g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wide_difference_exact_on_quadratics_everywhere() {
        let g = Grid::new(0.0_f64, 2.0, 6).unwrap();
        let l = NodeField::from_fn(&g, |i| {
            let x = g.node(i);
            x * x - 4.0 * x
        });
        let d = d_wide(&l, &g);
        for i in 0..=6 {
            assert_relative_eq!(d[i], 2.0 * g.node(i) - 4.0, epsilon = 1e-12);
        }
    }

    fn zero_ended(values: Vec<f64>) -> Vec<f64> {
        let mut u = values;
        u.insert(0, 0.0);
        u.push(0.0);
        u
    }

    proptest! {
        #[test]
        fn summation_by_parts(
            interior in prop::collection::vec(-2.0f64..2.0, 3..40),
            coef_seed in prop::collection::vec(0.1f64..5.0, 41),
        ) {
            let u = zero_ended(interior);
            let m = u.len() - 1;
            let g = Grid::<f64>::unit(m).unwrap();
            let c = &coef_seed[..m];
            let du = d_forward(&u, &g);
            let flux: Vec<f64> = c.iter().zip(du.iter()).map(|(a, b)| a * b).collect();
            let dd = d_centered_to_nodes(&flux, &g);
            let lhs: f64 = (1..m).map(|i| dd[i] * u[i] * g.h()).sum();
            let rhs: f64 = -c.iter().zip(du.iter()).map(|(a, b)| a * b * b * g.h()).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }

        #[test]
        fn wide_norm_bounded_by_forward_norm(
            interior in prop::collection::vec(-3.0f64..3.0, 1..60),
        ) {
            let u = zero_ended(interior);
            let g = Grid::<f64>::unit(u.len() - 1).unwrap();
            let wide = interior_l2_norm(&d_wide(&u, &g), &g);
            let fwd = cell_l2_norm(&d_forward(&u, &g), &g);
            prop_assert!(wide <= fwd * (1.0 + 1e-14));
        }
    }
}
