//! Capacity-region geometry of the `N × N` switch.
//!
//! The face `F` where every port is saturated has normal vectors spanned by
//! the row indicators `e^(i)` and column indicators `ẽ^(j)`. Their linear span
//! is the subspace `L`; their non-negative span is the cone `K ⊆ L`.

use crate::linalg::SquareMatrix;
use serde::Serialize;

/// Queue lengths (or arrivals, unused service) as a dense `N × N` matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueueMatrix {
    n: usize,
    entries: Vec<u64>,
}

impl QueueMatrix {
    pub fn zeros(n: usize) -> Self {
        QueueMatrix { n, entries: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(QueueMatrix { n, entries: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [u64] {
        &mut self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.entries[i * self.n + j] = v;
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.entries[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn to_real(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.get(i, j) as f64)
    }
}

/// Row indicator `e^(i)`.
pub fn row_generator(n: usize, i: usize) -> SquareMatrix {
    SquareMatrix::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })
}

/// Column indicator `ẽ^(j)`.
pub fn col_generator(n: usize, j: usize) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, c| if c == j { 1.0 } else { 0.0 })
}

/// The `2N` generators, rows first.
pub fn generators(n: usize) -> Vec<SquareMatrix> {
    (0..n).map(|i| row_generator(n, i)).chain((0..n).map(|j| col_generator(n, j))).collect()
}

/// `(row sums, column sums)`, i.e. the inner products with every generator.
pub fn marginals(x: &SquareMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.dim();
    ((0..n).map(|i| x.row_sum(i)).collect(), (0..n).map(|j| x.col_sum(j)).collect())
}

/// Orthogonal projection onto `L`: row mean + column mean − grand mean.
#[allow(non_snake_case)]
pub fn project_L(x: &SquareMatrix) -> SquareMatrix {
    let n = x.dim();
    if n == 0 {
        return x.clone();
    }
    let nf = n as f64;
    let (rows, cols) = marginals(x);
    let grand = x.total() / (nf * nf);
    SquareMatrix::from_fn(n, |i, j| rows[i] / nf + cols[j] / nf - grand)
}

/// `‖x_∥L‖²` from the marginals alone.
#[allow(non_snake_case)]
pub fn norm_parallel_L_sq(x: &SquareMatrix) -> f64 {
    let n = x.dim();
    if n == 0 {
        return 0.0;
    }
    let (rows, cols) = marginals(x);
    norm_parallel_l_sq_from_marginals(&rows, &cols, x.total())
}

pub(crate) fn norm_parallel_l_sq_from_marginals(rows: &[f64], cols: &[f64], total: f64) -> f64 {
    let nf = rows.len() as f64;
    let sq = |v: &[f64]| v.iter().map(|s| s * s).sum::<f64>();
    ((sq(cols) + sq(rows) - total * total / nf) / nf).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CapacityPosition {
    /// Every row and column sum below 1.
    Interior,
    /// Every row and column sum equal to 1: the fully saturated face.
    OnFaceF,
    /// Inside the region, some but not all ports saturated.
    BoundaryOther,
    Outside,
}

const FACE_TOL: f64 = 1e-10;

/// Location of a rate matrix relative to the capacity region (doubly
/// sub-stochastic matrices).
pub fn capacity_position(rates: &SquareMatrix) -> CapacityPosition {
    assert!(rates.min_entry() >= 0.0, "rates must be non-negative");
    let (rows, cols) = marginals(rates);
    let sums: Vec<f64> = rows.into_iter().chain(cols).collect();
    if sums.iter().any(|&s| s > 1.0 + FACE_TOL) {
        CapacityPosition::Outside
    } else if sums.iter().all(|&s| (s - 1.0).abs() <= FACE_TOL) {
        CapacityPosition::OnFaceF
    } else if sums.iter().all(|&s| s < 1.0 - FACE_TOL) {
        CapacityPosition::Interior
    } else {
        CapacityPosition::BoundaryOther
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn m(rows: &[Vec<f64>]) -> SquareMatrix {
        SquareMatrix::from_rows(rows).unwrap()
    }

    /// Least-squares projection onto span of the generators via SVD.
    fn lsq_project(x: &SquareMatrix) -> SquareMatrix {
        let n = x.dim();
        let gens = generators(n);
        let g = DMatrix::from_fn(n * n, 2 * n, |k, c| gens[c].as_slice()[k]);
        let b = DVector::from_column_slice(x.as_slice());
        let w = g.clone().svd(true, true).solve(&b, 1e-12).unwrap();
        let y = g * w;
        SquareMatrix::from_fn(n, |i, j| y[i * n + j])
    }

    #[test]
    fn projection_examples() {
        let ones = m(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(project_L(&ones).max_abs_diff(&ones) < 1e-15);
        assert!((norm_parallel_L_sq(&ones) - 4.0).abs() < 1e-12);

        let corner = m(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let expect = m(&[vec![0.75, 0.25], vec![0.25, -0.25]]);
        assert!(project_L(&corner).max_abs_diff(&expect) < 1e-15);
        assert!(lsq_project(&corner).max_abs_diff(&expect) < 1e-12);
        assert!((norm_parallel_L_sq(&corner) - 0.75).abs() < 1e-15);

        let balanced = m(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert_eq!(norm_parallel_L_sq(&balanced), 0.0);
    }

    #[test]
    fn capacity_examples() {
        let n = 3;
        let uniform = SquareMatrix::from_fn(n, |_, _| 1.0 / 3.0);
        assert_eq!(capacity_position(&uniform), CapacityPosition::OnFaceF);
        assert_eq!(capacity_position(&uniform.scale(0.9)), CapacityPosition::Interior);
        let mut over = uniform.clone();
        over[(0, 0)] += 0.2;
        assert_eq!(capacity_position(&over), CapacityPosition::Outside);
        let mut partial = uniform.scale(0.9);
        partial[(0, 0)] += 0.1;
        assert_eq!(capacity_position(&partial), CapacityPosition::BoundaryOther);
    }

    #[test]
    fn queue_matrix_marginals() {
        let q = QueueMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        assert_eq!(q.total(), 10);
        assert_eq!(q.row_sum(1), 6);
        assert_eq!(q.col_sum(0), 5);
        assert!(QueueMatrix::from_rows(&[vec![1, 2]]).is_none());
    }

    fn matrix(max_n: usize) -> impl Strategy<Value = SquareMatrix> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(-10.0f64..10.0, n * n)
                .prop_map(move |v| SquareMatrix::from_fn(n, |i, j| v[i * n + j]))
        })
    }

    proptest! {
        #[test]
        fn l_projection_identities(x in matrix(6), seed in any::<u64>()) {
            let n = x.dim();
            let p = project_L(&x);
            prop_assert!(project_L(&p).max_abs_diff(&p) < 1e-12);
            prop_assert!(lsq_project(&x).max_abs_diff(&p) < 1e-10);
            prop_assert!((norm_parallel_L_sq(&x) - p.norm_sq()).abs() < 1e-10 * (1.0 + x.norm_sq()));
            let perp = x.sub(&p);
            let y = SquareMatrix::from_fn(n, |i, j| ((seed >> ((i * n + j) % 60)) & 7) as f64 - 3.5);
            let y_par = project_L(&y);
            prop_assert!(perp.inner(&y_par).abs() <= 1e-9 * x.norm() * y.norm() + 1e-12);
        }
    }
}
