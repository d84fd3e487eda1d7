//! Smallest eigenpairs of `Q φ = λ M φ` with `M` symmetric positive definite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, symmetric_eigen, Ldlt, SparseSymmetricMatrix};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct EigenOptions<T> {
    /// Target for `‖Qφ − λMφ‖/‖Mφ‖`.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Extra block vectors beyond the number requested.
    pub guard_vectors: usize,
    pub seed: u64,
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-10),
            max_iterations: 300,
            guard_vectors: 6,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair<T> {
    pub value: T,
    /// `M`-normalised: `φᵀMφ = 1`.
    pub vector: Vec<T>,
    /// `‖Qφ − λMφ‖/‖Mφ‖`.
    pub residual: T,
}

#[derive(Clone, Debug)]
pub struct EigenSolution<T> {
    pub pairs: Vec<Eigenpair<T>>,
    pub shift: T,
    pub iterations: usize,
}

fn residual<T: Real>(q: &SparseSymmetricMatrix<T>, m: &SparseSymmetricMatrix<T>, lambda: T, x: &[T]) -> T {
    let qx = q.matvec(x);
    let mx = m.matvec(x);
    let r: Vec<T> = qx.iter().zip(&mx).map(|(&a, &b)| a - lambda * b).collect();
    norm(&r) / norm(&mx)
}

/// Rayleigh–Ritz on the span of `basis`; returns ascending Ritz values and
/// `M`-orthonormal Ritz vectors.
fn rayleigh_ritz<T: Real>(
    q: &SparseSymmetricMatrix<T>,
    m: &SparseSymmetricMatrix<T>,
    basis: &[Vec<T>],
) -> (Vec<T>, Vec<Vec<T>>) {
    let p = basis.len();
    let qb: Vec<Vec<T>> = basis.par_iter().map(|b| q.matvec(b)).collect();
    let mb: Vec<Vec<T>> = basis.par_iter().map(|b| m.matvec(b)).collect();
    let mut qr = vec![vec![T::zero(); p]; p];
    let mut mr = vec![vec![T::zero(); p]; p];
    for i in 0..p {
        for j in 0..p {
            qr[i][j] = dot(&basis[i], &qb[j]);
            mr[i][j] = dot(&basis[i], &mb[j]);
        }
    }
    for i in 0..p {
        for j in 0..i {
            let a = T::lit(0.5) * (qr[i][j] + qr[j][i]);
            qr[i][j] = a;
            qr[j][i] = a;
            let b = T::lit(0.5) * (mr[i][j] + mr[j][i]);
            mr[i][j] = b;
            mr[j][i] = b;
        }
    }
    // Mr^{-1/2} through its eigendecomposition; nearly dependent directions are dropped
    let (dm, um) = symmetric_eigen(&mr);
    let dmax = dm.iter().copied().fold(T::zero(), T::max);
    let keep: Vec<usize> = (0..p).filter(|&k| dm[k] > dmax * T::epsilon() * T::lit(1e4)).collect();
    let r = keep.len();
    let w: Vec<Vec<T>> = (0..p)
        .map(|i| keep.iter().map(|&k| um[i][k] / dm[k].sqrt()).collect())
        .collect();
    let mut c = vec![vec![T::zero(); r]; r];
    for a in 0..r {
        for b in 0..r {
            let mut s = T::zero();
            for i in 0..p {
                for j in 0..p {
                    s += w[i][a] * qr[i][j] * w[j][b];
                }
            }
            c[a][b] = s;
        }
    }
    let (theta, v) = symmetric_eigen(&c);
    let n = basis[0].len();
    let vectors = (0..r)
        .into_par_iter()
        .map(|k| {
            let mut x = vec![T::zero(); n];
            for i in 0..p {
                let coef: T = (0..r).map(|a| w[i][a] * v[a][k]).sum();
                if coef != T::zero() {
                    for (xi, &bi) in x.iter_mut().zip(&basis[i]) {
                        *xi += coef * bi;
                    }
                }
            }
            x
        })
        .collect();
    (theta, vectors)
}

/// Factorises `Q − σM` for a shift `σ` strictly below the spectrum,
/// lowering `σ` until the factorization has no negative pivots.
fn shift_below<T: Real>(q: &SparseSymmetricMatrix<T>, m: &SparseSymmetricMatrix<T>) -> Result<(T, Ldlt<T>)> {
    let n = q.dim();
    let ones = vec![T::one(); n];
    let upper = q.bilinear(&ones, &ones) / m.bilinear(&ones, &ones);
    let diag_min = (0..n).map(|i| q.get(i, i) / m.get(i, i)).fold(T::infinity(), T::min);
    let upper = upper.min(diag_min);
    let mut delta = T::lit(1e-2) * upper.abs().max(T::one());
    for _ in 0..80 {
        let sigma = upper - delta;
        let shifted = SparseSymmetricMatrix::combine(T::one(), q, -sigma, m)?;
        match Ldlt::factor(&shifted) {
            Ok(f) if f.is_positive_definite() => return Ok((sigma, f)),
            _ => delta *= T::lit(4.0),
        }
    }
    Err(Error::LinearSolver {
        iteration: 0,
        detail: "no shift below the spectrum found".into(),
    })
}

/// The `count` smallest eigenpairs by shift-invert block subspace iteration.
pub fn smallest_eigenpairs<T: Real>(
    q: &SparseSymmetricMatrix<T>,
    m: &SparseSymmetricMatrix<T>,
    count: usize,
    opts: &EigenOptions<T>,
) -> Result<EigenSolution<T>> {
    let n = q.dim();
    let p = (count + opts.guard_vectors).min(n);
    let count = count.min(p);
    let (sigma, factor) = shift_below(q, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<T>> = (0..p)
        .map(|k| {
            if k == 0 {
                vec![T::one(); n]
            } else {
                (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()
            }
        })
        .collect();
    let mut best: Option<(T, Vec<T>, T)> = None;
    for it in 1..=opts.max_iterations {
        let next: Vec<Vec<T>> = basis.par_iter().map(|x| factor.solve(&m.matvec(x))).collect();
        let (theta, vectors) = rayleigh_ritz(q, m, &next);
        if vectors.len() < count {
            return Err(Error::LinearSolver {
                iteration: it,
                detail: "subspace collapsed during eigen iteration".into(),
            });
        }
        let res: Vec<T> = (0..count)
            .into_par_iter()
            .map(|k| residual(q, m, theta[k], &vectors[k]))
            .collect();
        if best.as_ref().is_none_or(|b| res[0] < b.2) {
            best = Some((theta[0], vectors[0].clone(), res[0]));
        }
        if res.iter().all(|&r| r <= opts.tolerance) {
            let pairs = (0..count)
                .map(|k| Eigenpair {
                    value: theta[k],
                    vector: vectors[k].clone(),
                    residual: res[k],
                })
                .collect();
            return Ok(EigenSolution {
                pairs,
                shift: sigma,
                iterations: it,
            });
        }
        basis = vectors;
        while basis.len() < p {
            basis.push((0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect());
        }
    }
    let (lambda, iterate, residual) = best.expect("at least one iteration");
    Err(Error::EigenStagnation {
        lambda: lambda.as_f64(),
        residual: residual.as_f64(),
        iterate: iterate.iter().map(|x| x.as_f64()).collect(),
    })
}

/// Smallest eigenpair of `Qφ = λMφ`.
pub fn smallest_eigenpair<T: Real>(q: &SparseSymmetricMatrix<T>, m: &SparseSymmetricMatrix<T>) -> Result<Eigenpair<T>> {
    let sol = smallest_eigenpairs(q, m, 1, &EigenOptions::default())?;
    Ok(sol.pairs.into_iter().next().expect("one pair requested"))
}

/// Eigenpair with eigenvalue closest to `target`, by shift-invert block
/// iteration around `target`.
pub fn nearest_eigenpair<T: Real>(
    a: &SparseSymmetricMatrix<T>,
    m: &SparseSymmetricMatrix<T>,
    target: T,
    opts: &EigenOptions<T>,
) -> Result<Eigenpair<T>> {
    let n = a.dim();
    let scale = (0..n).map(|i| (a.get(i, i) / m.get(i, i)).abs()).fold(T::one(), T::max);
    // offset so an exact eigenvalue at the target keeps the shifted matrix
    // well conditioned; Rayleigh–Ritz recovers the accuracy
    let mut sigma = target - T::lit(1e-4) * target.abs().max(T::one());
    let mut factor = None;
    for _ in 0..8 {
        let shifted = SparseSymmetricMatrix::combine(T::one(), a, -sigma, m)?;
        if let Ok(f) = Ldlt::factor(&shifted) {
            factor = Some(f);
            break;
        }
        sigma -= T::lit(1e-6) * scale;
    }
    let factor = factor.ok_or_else(|| Error::LinearSolver {
        iteration: 0,
        detail: format!("shifted operator singular near {target}"),
    })?;
    let p = (1 + opts.guard_vectors).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<T>> = (0..p)
        .map(|_| (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let mut best: Option<Eigenpair<T>> = None;
    for _ in 0..opts.max_iterations {
        let next: Vec<Vec<T>> = basis.par_iter().map(|x| factor.solve(&m.matvec(x))).collect();
        let (theta, vectors) = rayleigh_ritz(a, m, &next);
        let k = (0..theta.len())
            .min_by(|&i, &j| {
                (theta[i] - target)
                    .abs()
                    .partial_cmp(&(theta[j] - target).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty Ritz set");
        let r = residual(a, m, theta[k], &vectors[k]);
        if best.as_ref().is_none_or(|b| r < b.residual) {
            best = Some(Eigenpair {
                value: theta[k],
                vector: vectors[k].clone(),
                residual: r,
            });
        }
        if r <= opts.tolerance {
            break;
        }
        basis = vectors;
        while basis.len() < p {
            basis.push((0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect());
        }
    }
    let best = best.expect("at least one iteration");
    if best.residual > opts.tolerance {
        return Err(Error::EigenStagnation {
            lambda: best.value.as_f64(),
            residual: best.residual.as_f64(),
            iterate: best.vector.iter().map(|x| x.as_f64()).collect(),
        });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mass_matrix, stiffness_matrix};
    use crate::mesh::{generate, DomainSpec};

    #[test]
    fn neumann_kernel_and_shift_identity() {
        let mesh = generate::<f64>(&DomainSpec::disk(1.0, 0.15)).unwrap();
        let k = stiffness_matrix(&mesh);
        let m = mass_matrix(&mesh);
        let e = smallest_eigenpair(&k, &m).unwrap();
        assert!(e.value.abs() < 1e-9, "{}", e.value);
        let spread = e.vector.iter().fold(0.0f64, |a, &x| a.max((x - e.vector[0]).abs()));
        assert!(spread < 1e-7);
        let shifted = SparseSymmetricMatrix::combine(1.0, &k, -1.0, &m).unwrap();
        let e = smallest_eigenpair(&shifted, &m).unwrap();
        assert!((e.value + 1.0).abs() < 1e-9);
        assert!(e.residual <= 1e-8);
    }

    #[test]
    fn nearest_pair_on_disk() {
        let mesh = generate::<f64>(&DomainSpec::disk(1.0, 0.15)).unwrap();
        let k = stiffness_matrix(&mesh);
        let m = mass_matrix(&mesh);
        let all = smallest_eigenpairs(&k, &m, 4, &EigenOptions::default()).unwrap();
        let near = nearest_eigenpair(&k, &m, all.pairs[3].value - 1e-3, &EigenOptions::default()).unwrap();
        assert!(
            (near.value - all.pairs[3].value).abs() < 1e-8,
            "{} {:?}",
            near.value,
            all.pairs.iter().map(|p| p.value).collect::<Vec<_>>()
        );
        // first nonzero Neumann eigenvalue of the unit disk: j'_{1,1}² ≈ 3.3900
        assert!((all.pairs[1].value - 3.39).abs() < 0.05, "{}", all.pairs[1].value);
    }
}
