//! `N × N` input-queued switch under MaxWeight.
//!
//! With every port saturated by the limiting rate matrix, the scaled total
//! queue length `εE[Σ Q_ij]` tends to `(1 − 1/2N)‖σ‖²`, where `σ_ij²` is the
//! asymptotic variance of the arrivals to queue `(i, j)`. This is within a
//! factor `2 − 1/N` of the universal lower bound `‖σ‖²/2`.

pub mod cone;
pub mod geometry;
pub mod matching;
pub mod sim;

pub use cone::{brute_force_project_K, project_K, ConeDecomposition, ConeError, ConeSolver};
pub use geometry::{capacity_position, norm_parallel_L_sq, project_L, CapacityPosition, QueueMatrix};
pub use matching::{brute_force_schedules, max_weight_schedule, MatchingError, MaxWeight, Schedule};
pub use sim::{simulate_switch, switch_step, SwitchConfig, SwitchError, SwitchModel, SwitchStats};

use crate::linalg::SquareMatrix;

/// Heavy-traffic limit of `ε E[Σ Q_ij]`: `(1 − 1/2N) Σ σ_ij²`.
pub fn switch_prediction(sigma_sq: &SquareMatrix) -> f64 {
    assert!(sigma_sq.min_entry() >= 0.0 || sigma_sq.dim() == 0, "variances must be non-negative");
    let n = sigma_sq.dim() as f64;
    (1.0 - 1.0 / (2.0 * n)) * sigma_sq.total()
}

/// Lower bound on `ε E[Σ Q_ij]` for any scheduler: `Σ σ_ij² / 2`.
pub fn universal_lower(sigma_sq: &SquareMatrix) -> f64 {
    assert!(sigma_sq.min_entry() >= 0.0 || sigma_sq.dim() == 0, "variances must be non-negative");
    sigma_sq.total() / 2.0
}

/// `switch_prediction / universal_lower = 2 − 1/N`.
pub fn optimality_ratio(n: usize) -> f64 {
    2.0 - 1.0 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::{make_two_state_family, saturated_rate_matrix, RateMatrixSpec, Target};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prediction_examples() {
        let ones = SquareMatrix::from_fn(2, |_, _| 1.0);
        assert_eq!(switch_prediction(&ones), 3.0);
        assert_eq!(universal_lower(&ones), 2.0);
        assert_eq!(optimality_ratio(2), 1.5);
        assert_eq!(switch_prediction(&SquareMatrix::zeros(3)), 0.0);
        assert_eq!(universal_lower(&SquareMatrix::zeros(3)), 0.0);
        assert_eq!(optimality_ratio(8), 1.875);
        let s = SquareMatrix::from_fn(3, |_, _| 35.0 / 27.0);
        assert!((switch_prediction(&s) - 9.7222222).abs() < 1e-6);
        assert!((switch_prediction(&s) / universal_lower(&s) - optimality_ratio(3)).abs() < 1e-12);
    }

    #[test]
    fn uniform_two_state_limit_variances() {
        let v = saturated_rate_matrix(&RateMatrixSpec::Uniform { n: 3 }).unwrap();
        let fam = make_two_state_family(2, 0.4, Target::Matrix(v)).unwrap();
        let sigma = fam.limit_sigma_matrix().unwrap();
        assert!(sigma.as_slice().iter().all(|s| (s - 35.0 / 27.0).abs() < 1e-9));
    }

    /// MaxWeight gains at least `v_min ‖q_⊥K‖` over any saturated rate matrix.
    #[test]
    fn maxweight_dominates_cone_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..500 {
            let n = 2 + trial % 4;
            let v = saturated_rate_matrix(&RateMatrixSpec::Random { n, seed: trial as u64 }).unwrap();
            let q = QueueMatrix::from_rows(
                &(0..n).map(|_| (0..n).map(|_| rng.random_range(0..50u64)).collect()).collect::<Vec<_>>(),
            )
            .unwrap();
            let qr = q.to_real();
            let perp = project_K(&qr).unwrap().perp.norm();
            if perp == 0.0 {
                continue;
            }
            let s = max_weight_schedule(&q, &mut rng);
            let gain = s.weight(q.as_slice()) as f64 - qr.inner(&v);
            assert!(gain >= v.min_entry() * perp - 1e-6, "trial {trial}: {gain} vs {}", v.min_entry() * perp);
        }
    }
}
