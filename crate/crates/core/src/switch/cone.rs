//! Euclidean projection onto the cone `K = {Σ w_i e^(i) + Σ w̃_j ẽ^(j) : w, w̃ ≥ 0}`.
//!
//! Solved as non-negative least squares in the `2N` generator weights with a
//! Lawson–Hanson active set. The Gram matrix is `N·I` within the row block and
//! the column block and all ones between them, so every passive-set
//! subproblem reduces to a 2×2 system in the block sums and costs `O(N)`.
//! The generators are linearly dependent (`Σ e^(i) = Σ ẽ^(j)`), so the
//! weights need not be unique even though the projection is.

use super::geometry::marginals;
use crate::linalg::SquareMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("cone projection did not converge in {iterations} iterations")]
    ConvergenceFailure { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeDecomposition {
    pub parallel: SquareMatrix,
    pub perp: SquareMatrix,
    pub row_weights: Vec<f64>,
    pub col_weights: Vec<f64>,
}

/// Reusable NNLS workspace for a fixed dimension.
#[derive(Debug, Clone)]
pub struct ConeSolver {
    n: usize,
    b: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
    passive: Vec<bool>,
}

impl ConeSolver {
    pub fn new(n: usize) -> Self {
        ConeSolver { n, b: vec![0.0; 2 * n], w: vec![0.0; 2 * n], z: vec![0.0; 2 * n], passive: vec![false; 2 * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(H w)_k` for the generator Gram matrix `H`.
    fn gram_apply(&self, w: &[f64], k: usize) -> f64 {
        let n = self.n;
        let nf = n as f64;
        if k < n {
            nf * w[k] + w[n..].iter().sum::<f64>()
        } else {
            w[..n].iter().sum::<f64>() + nf * w[k]
        }
    }

    /// Least squares restricted to the passive set, written into `z`.
    fn solve_passive(&mut self) {
        let n = self.n;
        let nf = n as f64;
        let (mut a, mut c, mut rs, mut cs) = (0.0, 0.0, 0.0, 0.0);
        let (mut min_r, mut min_c) = (f64::INFINITY, f64::INFINITY);
        for k in 0..n {
            if self.passive[k] {
                a += 1.0;
                rs += self.b[k];
                min_r = min_r.min(self.b[k]);
            }
            if self.passive[n + k] {
                c += 1.0;
                cs += self.b[n + k];
                min_c = min_c.min(self.b[n + k]);
            }
        }
        let det = nf * nf - a * c;
        let (big_w, big_wt) = if det > 0.5 {
            ((nf * rs - a * cs) / det, (nf * cs - c * rs) / det)
        } else {
            // Every generator passive: only W + W̃ = total/N is determined.
            // Row weights need W̃ ≤ min r, column weights need W ≤ min c;
            // take the middle of that interval.
            let half = rs / nf;
            let wt = 0.5 * ((half - min_c) + min_r);
            (half - wt, wt)
        };
        for k in 0..n {
            self.z[k] = if self.passive[k] { (self.b[k] - big_wt) / nf } else { 0.0 };
            self.z[n + k] = if self.passive[n + k] { (self.b[n + k] - big_w) / nf } else { 0.0 };
        }
    }

    /// NNLS weights for a matrix with the given row and column sums.
    pub fn solve(&mut self, rows: &[f64], cols: &[f64]) -> Result<(&[f64], &[f64]), ConeError> {
        let n = self.n;
        assert_eq!(rows.len(), n);
        assert_eq!(cols.len(), n);
        self.b[..n].copy_from_slice(rows);
        self.b[n..].copy_from_slice(cols);
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.passive.iter_mut().for_each(|p| *p = false);
        let scale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale * n as f64;
        let cap = 100 * n.max(1);

        let mut iterations = 0;
        loop {
            let mut best = None;
            let mut best_g = tol;
            for k in 0..2 * n {
                if !self.passive[k] {
                    let g = self.b[k] - self.gram_apply(&self.w, k);
                    if g > best_g {
                        best_g = g;
                        best = Some(k);
                    }
                }
            }
            let Some(entering) = best else { break };
            iterations += 1;
            if iterations > cap {
                return Err(ConeError::ConvergenceFailure { iterations: cap });
            }
            self.passive[entering] = true;
            loop {
                self.solve_passive();
                if (0..2 * n).all(|k| !self.passive[k] || self.z[k] > 0.0) {
                    self.w.copy_from_slice(&self.z);
                    break;
                }
                let mut step = 1.0f64;
                for k in 0..2 * n {
                    if self.passive[k] && self.z[k] <= 0.0 {
                        let denom = self.w[k] - self.z[k];
                        if denom > 0.0 {
                            step = step.min(self.w[k] / denom);
                        } else {
                            step = 0.0;
                        }
                    }
                }
                for k in 0..2 * n {
                    self.w[k] += step * (self.z[k] - self.w[k]);
                    if self.passive[k] && self.w[k] <= tol / scale {
                        self.w[k] = 0.0;
                        self.passive[k] = false;
                    }
                }
                iterations += 1;
                if iterations > cap {
                    return Err(ConeError::ConvergenceFailure { iterations: cap });
                }
                if !self.passive.iter().any(|&p| p) {
                    break;
                }
            }
        }
        Ok((&self.w[..n], &self.w[n..]))
    }

    /// `(‖x_∥K‖², ‖x_⊥K‖²)` for a row-major matrix without building the decomposition.
    pub fn norms(&mut self, x: &[f64], rows: &[f64], cols: &[f64]) -> Result<(f64, f64), ConeError> {
        let n = self.n;
        self.solve(rows, cols)?;
        let (mut par, mut perp) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let p = self.w[i] + self.w[n + j];
                let r = x[i * n + j] - p;
                par += p * p;
                perp += r * r;
            }
        }
        Ok((par, perp))
    }
}

/// Projection of `x` onto `K` and onto its polar cone `K°`.
#[allow(non_snake_case)]
pub fn project_K(x: &SquareMatrix) -> Result<ConeDecomposition, ConeError> {
    let n = x.dim();
    let (rows, cols) = marginals(x);
    let mut solver = ConeSolver::new(n);
    let (rw, cw) = solver.solve(&rows, &cols)?;
    let (row_weights, col_weights) = (rw.to_vec(), cw.to_vec());
    let parallel = SquareMatrix::from_fn(n, |i, j| row_weights[i] + col_weights[j]);
    let perp = x.sub(&parallel);
    Ok(ConeDecomposition { parallel, perp, row_weights, col_weights })
}

/// Exhaustive active-set projection onto `K`: least squares over every subset
/// of generators, keeping feasible solutions and returning the closest point.
/// Exponential in `N`; a test oracle only.
#[allow(non_snake_case)]
pub fn brute_force_project_K(x: &SquareMatrix) -> SquareMatrix {
    use nalgebra::{DMatrix, DVector};
    let n = x.dim();
    let gens = super::geometry::generators(n);
    let target = DVector::from_column_slice(x.as_slice());
    let mut best = SquareMatrix::zeros(n);
    let mut best_res = x.norm_sq();
    for mask in 1u32..(1 << (2 * n)) {
        let cols: Vec<usize> = (0..2 * n).filter(|k| mask & (1 << k) != 0).collect();
        let g = DMatrix::from_fn(n * n, cols.len(), |r, c| gens[cols[c]].as_slice()[r]);
        let Ok(w) = g.clone().svd(true, true).solve(&target, 1e-12) else { continue };
        if w.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let y = g * w;
        let cand = SquareMatrix::from_fn(n, |i, j| y[i * n + j]);
        let res = x.sub(&cand).norm_sq();
        if res < best_res {
            best_res = res;
            best = cand;
        }
    }
    best
}
