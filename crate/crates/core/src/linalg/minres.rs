use super::{dot, norm, SparseSymmetricMatrix};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct MinresOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// True relative residual `‖b − Ax‖/‖b‖` at exit.
    pub relative_residual: T,
    pub converged: bool,
}

/// MINRES for symmetric (possibly indefinite) systems with the diagonal
/// preconditioner `1/|a_ii|`.
pub fn minres<T: Real>(a: &SparseSymmetricMatrix<T>, b: &[T], rtol: T, max_iter: usize) -> MinresOutcome<T> {
    let n = b.len();
    let minv: Vec<T> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > T::zero() { d.abs().recip() } else { T::one() })
        .collect();
    let precond = |r: &[T]| -> Vec<T> { r.iter().zip(&minv).map(|(&x, &m)| x * m).collect() };
    let bnorm = norm(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return MinresOutcome {
            x,
            iterations: 0,
            relative_residual: T::zero(),
            converged: true,
        };
    }
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y).sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (T::zero(), beta1);
    let (mut dbar, mut epsln, mut phibar) = (T::zero(), T::zero(), beta1);
    let (mut cs, mut sn) = (-T::one(), T::zero());
    let mut w = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut iterations = 0;
    let true_residual = |x: &[T]| {
        let ax = a.matvec(x);
        norm(&b.iter().zip(&ax).map(|(&u, &v)| u - v).collect::<Vec<_>>()) / bnorm
    };
    let mut rel = T::one();
    for it in 1..=max_iter {
        iterations = it;
        let s = beta.recip();
        let v: Vec<T> = y.iter().map(|&t| s * t).collect();
        y = a.matvec(&v);
        if it >= 2 {
            let f = beta / oldb;
            for (yi, &ri) in y.iter_mut().zip(&r1) {
                *yi -= f * ri;
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for (yi, &ri) in y.iter_mut().zip(&r2) {
            *yi -= f * ri;
        }
        r1 = std::mem::replace(&mut r2, y.clone());
        y = precond(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(T::zero()).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(T::epsilon());
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;
        let denom = gamma.recip();
        let w1 = std::mem::replace(&mut w2, w.clone());
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) * denom;
            x[k] += phi * w[k];
        }
        // phibar tracks the preconditioned residual; confirm with the true one
        if phibar <= rtol * beta1 || beta == T::zero() {
            rel = true_residual(&x);
            if rel <= rtol || beta == T::zero() {
                break;
            }
        }
    }
    if iterations == max_iter {
        rel = true_residual(&x);
    }
    MinresOutcome {
        x,
        iterations,
        relative_residual: rel,
        converged: rel <= rtol,
    }
}
