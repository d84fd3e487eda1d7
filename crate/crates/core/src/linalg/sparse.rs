use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

/// Symmetric matrix in CSR form holding both triangles. Symmetry is kept
/// exact by always adding the `(i, j)` and `(j, i)` entries together.
#[derive(Clone, Debug)]
pub struct SparseSymmetricMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> SparseSymmetricMatrix<T> {
    /// Zero matrix on the node adjacency pattern of `mesh` (diagonal included).
    pub fn zeros_like_mesh(mesh: &Mesh<T>) -> Self {
        let n = mesh.n_nodes();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let nb = mesh.neighbors(i);
            let pos = nb.partition_point(|&j| j < i);
            cols.extend_from_slice(&nb[..pos]);
            cols.push(i);
            cols.extend_from_slice(&nb[pos..]);
            row_ptr.push(cols.len());
        }
        let vals = vec![T::zero(); cols.len()];
        Self { n, row_ptr, cols, vals }
    }

    /// Builds from `(i, j, v)` triplets of the upper or lower triangle; each
    /// off-diagonal triplet is mirrored, duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, mut r) in rows.into_iter().enumerate() {
            r.push((i, T::zero()));
            r.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (j, v) in r {
                if j == last {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = j;
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.vals[k])
    }

    /// Adds `v` to `(i, j)` and, when off-diagonal, to `(j, i)`.
    pub fn add_symmetric(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        let k = self
            .slot(i, j)
            .ok_or_else(|| Error::Validation(format!("entry ({i}, {j}) outside the sparsity pattern")))?;
        self.vals[k] += v;
        if i != j {
            let k = self.slot(j, i).expect("pattern is symmetric");
            self.vals[k] += v;
        }
        Ok(())
    }

    /// Scatters a local symmetric element matrix.
    pub(crate) fn add_element(&mut self, idx: &[usize], local: &[[T; 3]; 3]) {
        for a in 0..idx.len() {
            for b in a..idx.len() {
                self.add_symmetric(idx[a], idx[b], local[a][b])
                    .expect("element entries lie in the mesh pattern");
            }
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        super::dot(x, &self.matvec(y))
    }

    /// `αA + βB`; both operands must share the pattern.
    pub fn combine(alpha: T, a: &Self, beta: T, b: &Self) -> Result<Self> {
        if a.row_ptr != b.row_ptr || a.cols != b.cols {
            return Err(Error::Validation("matrices have different sparsity patterns".into()));
        }
        let vals = a
            .vals
            .iter()
            .zip(&b.vals)
            .map(|(&x, &y)| alpha * x + beta * y)
            .collect();
        Ok(Self {
            n: a.n,
            row_ptr: a.row_ptr.clone(),
            cols: a.cols.clone(),
            vals,
        })
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Largest `|a_ij − a_ji|`; zero for matrices built through this API.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }

    /// `P A Pᵀ` with `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut trip = Vec::with_capacity(self.nnz() / 2 + self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if j >= i {
                    trip.push((perm[i], perm[j], a));
                }
            }
        }
        Self::from_triplets(self.n, &trip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_mirror_and_sum() {
        let m = SparseSymmetricMatrix::from_triplets(3, &[(0, 1, 2.0), (1, 0, 1.0), (2, 2, 4.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(2, 2), 4.0);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 4.0]);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn permutation_preserves_quadratic_form() {
        let m = SparseSymmetricMatrix::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 2, 2.0)],
        );
        let perm = [2, 0, 1];
        let p = m.permuted(&perm);
        let x = [0.3, -1.2, 0.7];
        let mut px = [0.0; 3];
        for i in 0..3 {
            px[perm[i]] = x[i];
        }
        let diff: f64 = m.bilinear(&x, &x) - p.bilinear(&px, &px);
        assert!(diff.abs() < 1e-14);
    }
}
