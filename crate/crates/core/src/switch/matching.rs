//! MaxWeight scheduling: a maximum-weight perfect matching with uniform tie-breaking.
//!
//! The assignment is solved exactly in integers with the Hungarian method.
//! Its optimal dual potentials certify every optimal matching: by
//! complementary slackness a perfect matching is optimal iff it uses only
//! tight edges (zero reduced cost). So the maximizer set is the set of perfect
//! matchings of the tight subgraph, which we enumerate and sample uniformly.
//! When that set is too large to list, weights are scaled and perturbed by
//! small random keys instead, which is only approximately uniform.

use rand::Rng;
use thiserror::Error;

/// Above this many tied maximizers we stop enumerating and perturb instead.
pub const MAX_ENUMERATED_TIES: usize = 720;

/// Largest `N` accepted by [`brute_force_schedules`].
pub const BRUTE_FORCE_MAX_N: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("dimension {n} exceeds the brute-force limit {BRUTE_FORCE_MAX_N}")]
    DimensionTooLarge { n: usize },
}

/// Perfect matching: input `i` is connected to output `permutation[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Schedule {
    pub permutation: Vec<usize>,
}

impl Schedule {
    pub fn identity(n: usize) -> Self {
        Schedule { permutation: (0..n).collect() }
    }

    /// `None` unless `perm` is a bijection of `0..n`.
    pub fn new(permutation: Vec<usize>) -> Option<Self> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &j in &permutation {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return None;
            }
        }
        Some(Schedule { permutation })
    }

    pub fn dim(&self) -> usize {
        self.permutation.len()
    }

    /// `⟨w, s⟩` for a row-major weight matrix.
    pub fn weight<T: Copy + Into<i128>>(&self, w: &[T]) -> i128 {
        let n = self.dim();
        self.permutation.iter().enumerate().map(|(i, &j)| w[i * n + j].into()).sum()
    }

    pub fn serves(&self, i: usize, j: usize) -> bool {
        self.permutation[i] == j
    }
}

/// Hungarian method on an `n × n` cost matrix (minimization). Returns the
/// column assigned to each row and the row/column potentials `u`, `v` with
/// `cost[i][j] − u[i] − v[j] ≥ 0`, tight on the assignment.
fn hungarian_min(cost: &[i64], n: usize, buf: &mut HungarianBuffers) -> i128 {
    const INF: i64 = i64::MAX / 4;
    let HungarianBuffers { u, v, p, way, minv, used, .. } = buf;
    for x in [&mut *u, &mut *v, &mut *minv] {
        x.clear();
        x.resize(n + 1, 0);
    }
    p.clear();
    p.resize(n + 1, 0);
    way.clear();
    way.resize(n + 1, 0);
    let a = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = INF);
        used.clear();
        used.resize(n + 1, false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| a(p[j], j) as i128).sum()
}

#[derive(Debug, Clone, Default)]
struct HungarianBuffers {
    u: Vec<i64>,
    v: Vec<i64>,
    p: Vec<usize>,
    way: Vec<usize>,
    minv: Vec<i64>,
    used: Vec<bool>,
}

/// Reusable MaxWeight scheduler for a fixed port count.
#[derive(Debug, Clone)]
pub struct MaxWeight {
    n: usize,
    cost: Vec<i64>,
    buf: HungarianBuffers,
    tight: Vec<u64>,
    ties: Vec<Vec<usize>>,
    stack: Vec<usize>,
}

impl MaxWeight {
    pub fn new(n: usize) -> Self {
        assert!((1..=64).contains(&n), "port count must be in 1..=64");
        MaxWeight {
            n,
            cost: vec![0; n * n],
            buf: HungarianBuffers::default(),
            tight: vec![0; n],
            ties: Vec::new(),
            stack: Vec::with_capacity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Maximum total weight over perfect matchings.
    pub fn max_weight(&mut self, w: &[u64]) -> i128 {
        self.load(w, |x| -(x as i64));
        -hungarian_min(&self.cost, self.n, &mut self.buf)
    }

    fn load(&mut self, w: &[u64], f: impl Fn(u64) -> i64) {
        assert_eq!(w.len(), self.n * self.n, "weight matrix has wrong size");
        for (c, &x) in self.cost.iter_mut().zip(w) {
            *c = f(x);
        }
    }

    /// Maximum-weight perfect matching of `w`, uniform over all maximizers.
    pub fn schedule<R: Rng + ?Sized>(&mut self, w: &[u64], rng: &mut R) -> Schedule {
        let n = self.n;
        self.load(w, |x| -(i64::try_from(x).expect("queue length fits in i64")));
        hungarian_min(&self.cost, n, &mut self.buf);
        // Tight edges under the optimal potentials, as bitmasks per row.
        for i in 0..n {
            let mut mask = 0u64;
            for j in 0..n {
                if self.cost[i * n + j] - self.buf.u[i + 1] - self.buf.v[j + 1] == 0 {
                    mask |= 1 << j;
                }
            }
            self.tight[i] = mask;
        }
        self.ties.clear();
        self.stack.clear();
        if self.enumerate(0, 0) {
            let k = if self.ties.len() == 1 { 0 } else { rng.random_range(0..self.ties.len()) };
            return Schedule { permutation: self.ties[k].clone() };
        }
        self.perturbed(w, rng)
    }

    /// DFS over perfect matchings of the tight subgraph. Returns false once
    /// more than [`MAX_ENUMERATED_TIES`] have been found.
    fn enumerate(&mut self, row: usize, used: u64) -> bool {
        if row == self.n {
            if self.ties.len() == MAX_ENUMERATED_TIES {
                return false;
            }
            self.ties.push(self.stack.clone());
            return true;
        }
        let mut options = self.tight[row] & !used;
        while options != 0 {
            let j = options.trailing_zeros() as usize;
            options &= options - 1;
            self.stack.push(j);
            let ok = self.enumerate(row + 1, used | (1 << j));
            self.stack.pop();
            if !ok {
                return false;
            }
        }
        true
    }

    /// Scales weights by `K` and adds random keys whose total over any
    /// matching stays below `K/2`, so no key pattern can overturn a strict
    /// weight difference.
    fn perturbed<R: Rng + ?Sized>(&mut self, w: &[u64], rng: &mut R) -> Schedule {
        let n = self.n;
        let key_range: i64 = 1 << 20;
        let k = 2 * n as i64 * key_range;
        for (c, &x) in self.cost.iter_mut().zip(w) {
            let key = rng.random_range(0..key_range);
            *c = -((x as i64).checked_mul(k).expect("weights too large to perturb") + key);
        }
        hungarian_min(&self.cost, n, &mut self.buf);
        let mut perm = vec![0; n];
        for j in 1..=n {
            perm[self.buf.p[j] - 1] = j - 1;
        }
        Schedule { permutation: perm }
    }
}

/// Convenience wrapper over [`MaxWeight`] for one-off calls.
pub fn max_weight_schedule<R: Rng + ?Sized>(q: &super::QueueMatrix, rng: &mut R) -> Schedule {
    MaxWeight::new(q.dim()).schedule(q.as_slice(), rng)
}

/// Every permutation of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![perm.clone()];
    while let Some(i) = (1..n).rev().find(|&i| perm[i - 1] < perm[i]) {
        let j = (i..n).rev().find(|&j| perm[j] > perm[i - 1]).expect("successor exists");
        perm.swap(i - 1, j);
        perm[i..].reverse();
        out.push(perm.clone());
    }
    out
}

/// The exact argmax set by enumeration of all `N!` permutations.
pub fn brute_force_schedules(q: &super::QueueMatrix) -> Result<Vec<Schedule>, MatchingError> {
    let n = q.dim();
    if n > BRUTE_FORCE_MAX_N {
        return Err(MatchingError::DimensionTooLarge { n });
    }
    let mut best = i128::MIN;
    let mut out = Vec::new();
    for perm in all_permutations(n) {
        let s = Schedule { permutation: perm };
        let w = s.weight(q.as_slice());
        if w > best {
            best = w;
            out.clear();
        }
        if w == best {
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi_square_uniform_p;
    use crate::switch::QueueMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn q(rows: &[Vec<u64>]) -> QueueMatrix {
        QueueMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn small_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = q(&[vec![3, 1], vec![2, 4]]);
        assert_eq!(max_weight_schedule(&m, &mut rng), Schedule::identity(2));
        assert_eq!(brute_force_schedules(&m).unwrap(), vec![Schedule::identity(2)]);
        assert_eq!(brute_force_schedules(&QueueMatrix::zeros(2)).unwrap().len(), 2);
        assert_eq!(brute_force_schedules(&q(&[vec![1, 1], vec![1, 1]])).unwrap().len(), 2);
        let dominant = q(&[vec![9, 1, 0], vec![2, 8, 1], vec![0, 3, 7]]);
        for _ in 0..20 {
            assert_eq!(max_weight_schedule(&dominant, &mut rng), Schedule::identity(3));
        }
    }

    #[test]
    fn brute_force_rejects_large_dimension() {
        assert_eq!(brute_force_schedules(&QueueMatrix::zeros(9)), Err(MatchingError::DimensionTooLarge { n: 9 }));
    }

    #[test]
    fn permutations_enumerated() {
        assert_eq!(all_permutations(3).len(), 6);
        assert_eq!(all_permutations(5).len(), 120);
        assert_eq!(all_permutations(1), vec![vec![0]]);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(vec![1, 0, 2]).is_some());
        assert!(Schedule::new(vec![1, 1, 2]).is_none());
        assert!(Schedule::new(vec![0, 3, 1]).is_none());
    }

    #[test]
    fn optimal_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let n = 2 + trial % 4;
            let max = [2u64, 5, 100][trial % 3];
            let m = QueueMatrix::from_rows(
                &(0..n).map(|_| (0..n).map(|_| rng.random_range(0..=max)).collect()).collect::<Vec<_>>(),
            )
            .unwrap();
            let oracle = brute_force_schedules(&m).unwrap();
            let s = max_weight_schedule(&m, &mut rng);
            assert_eq!(s.weight(m.as_slice()), oracle[0].weight(m.as_slice()));
            assert!(oracle.contains(&s));
        }
    }

    #[test]
    fn full_tie_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mw = MaxWeight::new(3);
        let zeros = [0u64; 9];
        let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for _ in 0..6000 {
            *counts.entry(mw.schedule(&zeros, &mut rng).permutation).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let c: Vec<u64> = counts.values().copied().collect();
        assert!(chi_square_uniform_p(&c) > 0.01, "{c:?}");
        for &k in &c {
            assert!((k as f64 - 1000.0).abs() < 3.0 * (6000.0f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt());
        }
    }

    #[test]
    fn partial_tie_is_uniform_over_maximizers() {
        // Rows 0 and 1 tie on columns {0, 1}; row 2 must take column 2.
        let m = q(&[vec![5, 5, 0], vec![5, 5, 0], vec![0, 0, 9]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mw = MaxWeight::new(3);
        let mut hits = 0;
        for _ in 0..4000 {
            let s = mw.schedule(m.as_slice(), &mut rng);
            assert_eq!(s.permutation[2], 2);
            hits += (s.permutation[0] == 0) as u32;
        }
        assert!((hits as f64 - 2000.0).abs() < 4.0 * 1000f64.sqrt());
    }

    #[test]
    fn large_ties_fall_back_to_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut mw = MaxWeight::new(8);
        let w = vec![3u64; 64];
        let s = mw.schedule(&w, &mut rng);
        assert!(Schedule::new(s.permutation.clone()).is_some());
        let mut m = vec![1u64; 64];
        for i in 0..8 {
            m[i * 8 + (i + 3) % 8] = 2;
        }
        let s = mw.schedule(&m, &mut rng);
        assert_eq!(s.weight(&m), 16);
    }
}
