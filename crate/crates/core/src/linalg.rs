//! Small dense row-major matrices with compensated accumulation.
//!
//! Chains in this crate have a handful of states, so nothing here is blocked
//! or vectorised. What matters is accuracy: autocovariances at large lags are
//! tiny differences, and every inner product goes through a Neumaier sum.

use std::fmt;

/// Neumaier (improved Kahan) summation of an iterator of terms.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from nested rows. Returns `None` if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(SquareMatrix { n, data: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        neumaier_sum(self.row(i).iter().copied())
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        neumaier_sum((0..self.n).map(|i| self[(i, j)]))
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.data.iter().copied())
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &SquareMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, k: f64) -> SquareMatrix {
        SquareMatrix { n: self.n, data: self.data.iter().map(|v| v * k).collect() }
    }

    pub fn sub(&self, other: &SquareMatrix) -> SquareMatrix {
        SquareMatrix { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &SquareMatrix) -> SquareMatrix {
        SquareMatrix { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `self * rhs` with compensated inner products.
    pub fn matmul(&self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        let n = self.n;
        let cols: Vec<Vec<f64>> = (0..n).map(|j| rhs.column(j)).collect();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            let row = self.row(i);
            for (j, col) in cols.iter().enumerate() {
                out[(i, j)] = dot(row, col);
            }
        }
        out
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows().map(|r| dot(r, v)).collect()
    }

    /// Row vector times matrix, `v^T * self`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| neumaier_sum((0..self.n).map(|i| v[i] * self[(i, j)]))).collect()
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(terms), 2.0);
        assert_ne!(terms.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn matmul_identity_and_vec_products() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.matmul(&SquareMatrix::identity(2)), a);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![3.0, 7.0]);
        assert_eq!(a.vec_mul(&[1.0, 1.0]), vec![4.0, 6.0]);
        let sq = a.matmul(&a);
        assert_eq!(sq.to_rows(), vec![vec![7.0, 10.0], vec![15.0, 22.0]]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(SquareMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
        assert!(SquareMatrix::from_rows(&[vec![1.0, 2.0]]).is_none());
    }
}
