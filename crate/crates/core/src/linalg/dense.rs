use crate::scalar::Real;

/// Finite-difference weights (Fornberg) at `x0` for derivatives of order
/// `0..=m` on the nodes `xs`; `w[k][j]` multiplies `f(xs[j])` for order `k`.
pub fn fd_weights<T: Real>(x0: T, xs: &[T], m: usize) -> Vec<Vec<T>> {
    let n = xs.len();
    let mut c = vec![vec![T::zero(); n]; m + 1];
    let mut c1 = T::one();
    let mut c4 = xs[0] - x0;
    c[0][0] = T::one();
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let kk = T::from_usize_lossy(k);
                    c[k][i] = c1 * (kk * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                let kk = T::from_usize_lossy(k);
                c[k][j] = (c4 * c[k][j] - kk * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Least-squares solution of `A x ≈ b` by Householder QR; `None` when `A`
/// is numerically rank deficient.
pub fn least_squares<T: Real>(rows: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    least_squares_rcond(rows, b, T::zero())
}

/// As [`least_squares`], also rejecting fits whose smallest `|R_kk|` is
/// below `rcond` times the largest.
pub fn least_squares_rcond<T: Real>(rows: &[Vec<T>], b: &[T], rcond: T) -> Option<Vec<T>> {
    let m = rows.len();
    let n = rows.first()?.len();
    if m < n {
        return None;
    }
    let mut a: Vec<Vec<T>> = rows.to_vec();
    let mut rhs = b.to_vec();
    let mut diag_max = T::zero();
    for k in 0..n {
        let alpha = (k..m).map(|i| a[i][k] * a[i][k]).sum::<T>().sqrt();
        if alpha == T::zero() {
            return None;
        }
        let alpha = if a[k][k] > T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vv: T = v.iter().map(|&x| x * x).sum();
        if vv > T::zero() {
            for j in k..n {
                let s = (k..m).map(|i| v[i - k] * a[i][j]).sum::<T>() * T::lit(2.0) / vv;
                for i in k..m {
                    a[i][j] -= s * v[i - k];
                }
            }
            let s = (k..m).map(|i| v[i - k] * rhs[i]).sum::<T>() * T::lit(2.0) / vv;
            for i in k..m {
                rhs[i] -= s * v[i - k];
            }
        }
        diag_max = diag_max.max(a[k][k].abs());
    }
    let tol = diag_max * (T::epsilon() * T::from_usize_lossy(64 * m)).max(rcond);
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        if a[k][k].abs() <= tol {
            return None;
        }
        let s: T = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (rhs[k] - s) / a[k][k];
    }
    Some(x)
}

/// Eigenvalues (ascending) and column eigenvectors of a small symmetric
/// matrix by cyclic Jacobi rotations.
pub fn symmetric_eigen<T: Real>(a: &[Vec<T>]) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v = vec![vec![T::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let total: T = (0..n).map(|i| a[i][i] * a[i][i]).sum::<T>() + off;
        if off <= T::epsilon() * T::epsilon() * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = v.iter().map(|row| order.iter().map(|&i| row[i]).collect()).collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fd_weights_central() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_relative_eq!(w[1][0], -0.5);
        assert_relative_eq!(w[1][2], 0.5);
        assert_relative_eq!(w[2][0], 1.0);
        assert_relative_eq!(w[2][1], -2.0);
    }

    #[test]
    fn fd_weights_exact_on_quartics() {
        let xs = [-0.3, -0.1, 0.0, 0.15, 0.4];
        let w = fd_weights(0.0, &xs, 2);
        let f = |x: f64| 1.0 + 2.0 * x - 3.0 * x * x + x.powi(3) + 0.5 * x.powi(4);
        let d1: f64 = xs.iter().zip(&w[1]).map(|(&x, &c)| c * f(x)).sum();
        let d2: f64 = xs.iter().zip(&w[2]).map(|(&x, &c)| c * f(x)).sum();
        assert_relative_eq!(d1, 2.0, epsilon = 1e-10);
        assert_relative_eq!(d2, -6.0, epsilon = 1e-9);
    }

    #[test]
    fn least_squares_fits_exact_quadratic() {
        let pts = [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (1.0, 1.0),
            (0.5, 0.2),
            (0.3, 0.8),
            (0.9, 0.4),
        ];
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![1.0, x, y, x * x, x * y, y * y]).collect();
        let b: Vec<f64> = pts
            .iter()
            .map(|&(x, y)| 2.0 - x + 3.0 * y + x * x - 2.0 * x * y + 0.5 * y * y)
            .collect();
        let c = least_squares(&rows, &b).unwrap();
        for (got, want) in c.iter().zip([2.0, -1.0, 3.0, 1.0, -2.0, 0.5]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        let collinear: Vec<Vec<f64>> = (0..7)
            .map(|k| vec![1.0, k as f64])
            .map(|r| vec![r[0], r[1], 2.0 * r[1]])
            .collect();
        assert!(least_squares(&collinear, &[0.0; 7]).is_none());
    }

    #[test]
    fn jacobi_eigen() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(&a);
        let s = 2f64.sqrt();
        assert_relative_eq!(vals[0], 2.0 - s, epsilon = 1e-12);
        assert_relative_eq!(vals[2], 2.0 + s, epsilon = 1e-12);
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * vecs[j][k]).sum();
                assert_relative_eq!(av, vals[k] * vecs[i][k], epsilon = 1e-12);
            }
        }
    }
}
