use std::collections::VecDeque;

use super::SparseSymmetricMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Reverse Cuthill–McKee ordering of the matrix graph; `perm[old] = new`.
pub fn rcm_ordering<T: Real>(a: &SparseSymmetricMatrix<T>) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &[bool]| -> Vec<Vec<usize>> {
        let mut seen = visited.to_vec();
        let mut levels = vec![vec![start]];
        seen[start] = true;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in a.row(v).0 {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                return levels;
            }
            levels.push(next);
        }
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let mut depth = bfs(start, &visited).len();
        loop {
            let levels = bfs(start, &visited);
            let cand = *levels.last().unwrap().iter().min_by_key(|&&v| degree[v]).unwrap();
            let d = bfs(cand, &visited).len();
            if d > depth {
                depth = d;
                start = cand;
            } else {
                break;
            }
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = a.row(v).0.iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    let mut perm = vec![0; n];
    for (k, &v) in order.iter().rev().enumerate() {
        perm[v] = k;
    }
    perm
}

/// Profile (skyline) `LDLᵀ` factorization without pivoting, after a
/// bandwidth-reducing reordering.
#[derive(Clone, Debug)]
pub struct Ldlt<T> {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> Ldlt<T> {
    pub fn factor(a: &SparseSymmetricMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let perm = rcm_ordering(a);
        let p = a.permuted(&perm);
        let mut first = Vec::with_capacity(n);
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            let f = p.row(i).0.first().copied().unwrap_or(i).min(i);
            first.push(f);
            start.push(start[i] + (i - f));
        }
        let mut l = vec![T::zero(); start[n]];
        let mut d = vec![T::zero(); n];
        let scale = (0..n)
            .map(|i| p.get(i, i).abs())
            .fold(T::zero(), T::max)
            .max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::lit(16.0);
        let mut w = vec![T::zero(); n];
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                w[j] = T::zero();
            }
            let (cols, vals) = p.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j < i {
                    w[j] = v;
                }
            }
            // w[j] becomes l_ij·d_j
            for j in fi..i {
                let k0 = fi.max(first[j]);
                let lj = &l[start[j] + (k0 - first[j])..start[j] + (j - first[j])];
                let s: T = w[k0..j].iter().zip(lj).map(|(&x, &y)| x * y).sum();
                w[j] -= s;
            }
            let mut di = p.get(i, i);
            let li = &mut l[start[i]..start[i + 1]];
            for j in fi..i {
                let lij = w[j] / d[j];
                li[j - fi] = lij;
                di -= lij * w[j];
            }
            if !(di.abs() > tiny) {
                return Err(Error::LinearSolver {
                    iteration: i,
                    detail: format!("zero pivot {di:e} at elimination step {i} of {n}"),
                });
            }
            d[i] = di;
        }
        Ok(Self {
            perm,
            first,
            start,
            l,
            d,
        })
    }

    /// Number of negative pivots, i.e. of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < T::zero()).count()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.negative_pivots() == 0
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.d.len();
        let mut x = vec![T::zero(); n];
        for (i, &v) in b.iter().enumerate() {
            x[self.perm[i]] = v;
        }
        for i in 0..n {
            let fi = self.first[i];
            let li = &self.l[self.start[i]..self.start[i + 1]];
            let s: T = li.iter().zip(&x[fi..i]).map(|(&a, &b)| a * b).sum();
            x[i] -= s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = x[i];
            let li = &self.l[self.start[i]..self.start[i + 1]];
            for (k, &a) in li.iter().enumerate() {
                x[fi + k] -= a * xi;
            }
        }
        (0..n).map(|i| x[self.perm[i]]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize, shift: f64) -> SparseSymmetricMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 - shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseSymmetricMatrix::from_triplets(n, &t)
    }

    #[test]
    fn solves_spd_and_counts_inertia() {
        let a = laplacian_1d(50, 0.0);
        let f = Ldlt::factor(&a).unwrap();
        assert!(f.is_positive_definite());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x);
        let y = f.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
        // eigenvalues 2 − 2cos(kπ/51); shifting by 0.5 leaves those below 0.5 negative
        let neg = (1..=50)
            .filter(|&k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 51.0).cos() < 0.5)
            .count();
        assert_eq!(Ldlt::factor(&laplacian_1d(50, 0.5)).unwrap().negative_pivots(), neg);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]);
        assert!(matches!(
            Ldlt::factor(&a),
            Err(Error::LinearSolver { iteration: 1, .. })
        ));
    }
}
