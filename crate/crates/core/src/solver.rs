//! Damped Newton iteration for the discrete weak problem.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::coeff::{CoefficientFamily, FamilyKind};
use crate::eigen::{nearest_eigenpair, EigenOptions};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_residual, assemble_system, boundary_mass_matrix, mass_matrix, stiffness_matrix, Field, NonlinearProblem,
};
use crate::linalg::{minres, norm, Ldlt, SparseSymmetricMatrix};
use crate::mesh::Mesh;
use crate::scalar::{max_abs, Real};

#[derive(Clone, Debug)]
pub struct NewtonOptions<T> {
    pub max_iterations: usize,
    /// Stop when `max_i |R_i| <= residual_tolerance`.
    pub residual_tolerance: T,
    /// Backtracking factor in (0, 1).
    pub damping: T,
    pub max_halvings: usize,
    /// Equal steps of the `p` homotopy from 2 to the target exponent.
    pub continuation_steps: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            residual_tolerance: T::lit(1e-10),
            damping: T::lit(0.5),
            max_halvings: 30,
            continuation_steps: 1,
        }
    }
}

impl<T: Real> NewtonOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.continuation_steps == 0 || self.max_halvings == 0 {
            return Err(Error::Usage("newton counts must be positive".into()));
        }
        if !(self.residual_tolerance > T::zero()) {
            return Err(Error::Usage("residual tolerance must be positive".into()));
        }
        if !(self.damping > T::zero() && self.damping < T::one()) {
            return Err(Error::Usage("damping factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearMethod {
    /// Sparse `LDLᵀ` on a positive definite Jacobian.
    Factorization,
    /// Diagonally preconditioned MINRES when the unpivoted factorization
    /// fails or is inaccurate.
    Minres,
    /// `LDLᵀ` without pivoting on an indefinite Jacobian, accepted after a
    /// residual check.
    IndefiniteFactorization,
}

#[derive(Clone, Debug)]
pub struct NewtonStep<T> {
    pub iteration: usize,
    /// Max-norm residual after the step.
    pub residual: T,
    pub step_length: T,
    pub linear_method: Option<LinearMethod>,
}

#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm residual at the initial guess, then after every accepted step.
    pub residual_history: Vec<T>,
    pub steps: Vec<NewtonStep<T>>,
    pub final_residual: T,
}

impl<T: Real> SolveReport<T> {
    /// `iter,residual,step_length` rows; row 0 is the initial guess.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,residual,step_length\n");
        let _ = writeln!(s, "0,{:.6e},0", self.residual_history[0]);
        for st in &self.steps {
            let _ = writeln!(s, "{},{:.6e},{:.6e}", st.iteration, st.residual, st.step_length);
        }
        s
    }

    /// `r_{k+1}/r_k²` for the consecutive pairs with `r_k <= threshold`.
    pub fn quadratic_ratios(&self, threshold: T) -> Vec<T> {
        self.residual_history
            .windows(2)
            .filter(|w| w[0] <= threshold && w[0] > T::zero())
            .map(|w| w[1] / (w[0] * w[0]))
            .collect()
    }
}

/// Solves `J δ = b`: by factorization when `J` is positive definite;
/// otherwise by the unpivoted `LDLᵀ` with refinement when its residual
/// checks out, then by diagonally preconditioned MINRES. A factored
/// direction is accepted at relative residual `min(INEXACT_FORCING, ‖b‖₂)`,
/// a forcing term that shrinks with the Newton residual and so keeps the
/// local rate quadratic. As a last resort any direction within
/// `INEXACT_FORCING` is used, which keeps near-singular Jacobians usable.
fn linear_solve<T: Real>(j: &SparseSymmetricMatrix<T>, b: &[T], iteration: usize) -> Result<(Vec<T>, LinearMethod)> {
    let bnorm = norm(b).max(T::min_positive_value());
    let forcing = bnorm.min(T::lit(INEXACT_FORCING));
    let relres = |x: &[T]| -> T {
        let jx = j.matvec(x);
        norm(&b.iter().zip(&jx).map(|(&u, &v)| u - v).collect::<Vec<_>>()) / bnorm
    };
    let factor = Ldlt::factor(j);
    let mut direct = None;
    if let Ok(f) = &factor {
        if f.is_positive_definite() {
            return Ok((f.solve(b), LinearMethod::Factorization));
        }
        let mut x = f.solve(b);
        let mut rel = relres(&x);
        for _ in 0..REFINEMENT_STEPS {
            if !(rel > T::lit(INDEFINITE_RESIDUAL)) {
                break;
            }
            let jx = j.matvec(&x);
            let r: Vec<T> = b.iter().zip(&jx).map(|(&u, &v)| u - v).collect();
            let dx = f.solve(&r);
            let refined: Vec<T> = x.iter().zip(&dx).map(|(&a, &d)| a + d).collect();
            let next = relres(&refined);
            if !(next < rel) {
                break;
            }
            x = refined;
            rel = next;
        }
        if rel <= forcing {
            return Ok((x, LinearMethod::IndefiniteFactorization));
        }
        if rel.is_finite() {
            direct = Some((x, rel));
        }
    }
    let n = b.len();
    let out = minres(j, b, T::lit(1e-13), (2 * n).max(1000));
    if out.converged {
        return Ok((out.x, LinearMethod::Minres));
    }
    // an inexact direction still descends on ‖R‖₂ (inexact Newton)
    let best = match direct {
        Some((x, rel)) if rel < out.relative_residual => (x, rel, LinearMethod::IndefiniteFactorization),
        _ => (out.x, out.relative_residual, LinearMethod::Minres),
    };
    if best.1 <= T::lit(INEXACT_FORCING) {
        return Ok((best.0, best.2));
    }
    let detail = match factor {
        Err(Error::LinearSolver { detail, .. }) => detail,
        Err(e) => return Err(e),
        Ok(_) => "unpivoted factorization inaccurate".to_string(),
    };
    Err(Error::LinearSolver {
        iteration,
        detail: format!(
            "{detail}; MINRES stalled at relative residual {:e}",
            out.relative_residual
        ),
    })
}

// refinement stops once the indefinite factorization reaches this
const INDEFINITE_RESIDUAL: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 10;
// largest relative residual ever accepted for a Newton direction
const INEXACT_FORCING: f64 = 1e-3;

fn newton<T: Real>(
    problem: &NonlinearProblem<T>,
    guess: Field<T>,
    opts: &NewtonOptions<T>,
) -> Result<(Field<T>, SolveReport<T>)> {
    let mut u = guess;
    let (mut r, mut jac) = assemble_system(problem, &u)?;
    let mut rnorm = max_abs(&r);
    // line-search merit: the Newton direction always descends on ‖R‖₂
    let mut merit = norm(&r);
    let mut history = vec![rnorm];
    let mut steps = Vec::new();
    let sufficient = T::lit(1e-4);
    let mut converged = rnorm <= opts.residual_tolerance;
    let mut it = 0;
    while !converged && it < opts.max_iterations {
        it += 1;
        let minus_r: Vec<T> = r.iter().map(|&x| -x).collect();
        let (delta, method) = linear_solve(&jac, &minus_r, it)?;
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<T> = u.values().iter().zip(&delta).map(|(&a, &d)| a + t * d).collect();
            let trial = u.with_values(trial)?;
            match assemble_residual(problem, &trial) {
                Ok(rt) => {
                    let tm = norm(&rt);
                    if tm.is_finite() && tm <= (T::one() - sufficient * t) * merit {
                        accepted = Some((trial, max_abs(&rt), tm));
                        break;
                    }
                }
                Err(Error::DegenerateGradient { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= opts.damping;
        }
        let Some((next, tn, tm)) = accepted else {
            break;
        };
        u = next;
        rnorm = tn;
        merit = tm;
        history.push(rnorm);
        steps.push(NewtonStep {
            iteration: it,
            residual: rnorm,
            step_length: t,
            linear_method: Some(method),
        });
        converged = rnorm <= opts.residual_tolerance;
        if !converged {
            let sys = assemble_system(problem, &u)?;
            r = sys.0;
            jac = sys.1;
        }
    }
    Ok((
        u,
        SolveReport {
            converged,
            iterations: it,
            final_residual: rnorm,
            residual_history: history,
            steps,
        },
    ))
}

/// Damped Newton from `initial_guess`; for the p-Laplacian with
/// `continuation_steps > 1` the exponent is stepped from 2 to its target.
///
/// Non-convergence is reported through `converged = false`.
pub fn solve<T: Real>(
    problem: &NonlinearProblem<T>,
    initial_guess: &Field<T>,
    opts: &NewtonOptions<T>,
) -> Result<(Field<T>, SolveReport<T>)> {
    opts.validate()?;
    let target_p = match problem.family.kind() {
        FamilyKind::PLaplacian { p } if opts.continuation_steps > 1 => Some(*p),
        _ => None,
    };
    let Some(p) = target_p else {
        return newton(problem, initial_guess.clone(), opts);
    };
    let mut u = initial_guess.clone();
    let mut combined: Option<SolveReport<T>> = None;
    let steps = opts.continuation_steps;
    for k in 1..=steps {
        let pk = T::lit(2.0) + (p - T::lit(2.0)) * T::from_usize_lossy(k) / T::from_usize_lossy(steps);
        let family = CoefficientFamily::p_laplacian(pk)?.with_grad_floor(problem.family.grad_floor());
        let stage = NonlinearProblem::new(family, problem.f.clone(), problem.h.clone());
        let (next, rep) = newton(&stage, u, opts)?;
        u = next;
        combined = Some(match combined {
            None => rep,
            Some(mut c) => {
                let offset = c.iterations;
                c.residual_history.extend(rep.residual_history.iter().skip(1));
                c.steps.extend(rep.steps.into_iter().map(|mut s| {
                    s.iteration += offset;
                    s
                }));
                c.iterations += rep.iterations;
                c.converged = rep.converged;
                c.final_residual = rep.final_residual;
                c
            }
        });
        if !combined.as_ref().unwrap().converged {
            break;
        }
    }
    Ok((u, combined.expect("at least one continuation step")))
}

/// Discrete linear Robin problem `−Δφ = λφ`, `∂_νφ + αφ = 0`.
#[derive(Clone, Debug)]
pub struct LinearRobinSolution<T> {
    /// Discrete eigenfunction nearest to `λ`, scaled to `max |φ| = 1`.
    pub mode: Field<T>,
    /// Nodal residual `(K + αB − λM)φ` of that eigenfunction.
    pub residual: Field<T>,
    /// The discrete eigenvalue nearest to `λ`.
    pub eigenvalue: T,
    /// `|μ − λ|` for that eigenvalue `μ`: the smallest generalized singular
    /// value of `K + αB − λM`, zero exactly when `(α, λ)` is an eigenpair.
    pub defect: T,
}

/// Builds `K + αB` and `M` for the Laplacian with Robin coefficient `α`.
pub fn robin_matrices<T: Real>(
    mesh: &Mesh<T>,
    alpha: T,
) -> Result<(SparseSymmetricMatrix<T>, SparseSymmetricMatrix<T>)> {
    let k = stiffness_matrix(mesh);
    let b = boundary_mass_matrix(mesh);
    Ok((
        SparseSymmetricMatrix::combine(T::one(), &k, alpha, &b)?,
        mass_matrix(mesh),
    ))
}

pub fn solve_linear_robin<T: Real>(alpha: T, lambda: T, mesh: &Arc<Mesh<T>>) -> Result<LinearRobinSolution<T>> {
    let (a, m) = robin_matrices(mesh, alpha)?;
    let pair = nearest_eigenpair(&a, &m, lambda, &EigenOptions::default())?;
    let scale = max_abs(&pair.vector);
    // fix the sign so the largest entry is positive
    let imax = pair
        .vector
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap_or(std::cmp::Ordering::Equal))
        .map_or(0, |x| x.0);
    let s = if pair.vector[imax] < T::zero() { -scale } else { scale };
    let phi: Vec<T> = pair.vector.iter().map(|&x| x / s).collect();
    let ap = a.matvec(&phi);
    let mp = m.matvec(&phi);
    let res = ap.iter().zip(&mp).map(|(&x, &y)| x - lambda * y).collect();
    Ok(LinearRobinSolution {
        mode: Field::new(mesh.clone(), phi)?,
        residual: Field::new(mesh.clone(), res)?,
        eigenvalue: pair.value,
        defect: (pair.value - lambda).abs(),
    })
}

/// `c + A·cos(k·x)` at the mesh nodes.
pub fn cosine_seed<T: Real>(mesh: &Arc<Mesh<T>>, c: T, amplitude: T, k: [T; 2]) -> Field<T> {
    Field::from_fn(mesh.clone(), |x, y| c + amplitude * (k[0] * x + k[1] * y).cos())
}

/// `+1` for `x > width/2`, `−1` for `x < −width/2`, joined by a smooth step.
pub fn blended_seed<T: Real>(mesh: &Arc<Mesh<T>>, width: T) -> Field<T> {
    Field::from_fn(mesh.clone(), |x, _| {
        let s = ((x / width) + T::lit(0.5)).max(T::zero()).min(T::one());
        let smooth = s * s * s * (T::lit(10.0) - T::lit(15.0) * s + T::lit(6.0) * s * s);
        T::lit(2.0) * smooth - T::one()
    })
}

/// Ten reproducible cosine seeds around zero with different wave vectors.
pub fn standard_cosine_seeds<T: Real>(mesh: &Arc<Mesh<T>>) -> Vec<Field<T>> {
    (0..10)
        .map(|j| {
            let angle = T::lit(PI * j as f64 / 10.0);
            let freq = T::lit(1.0 + 0.5 * (j % 4) as f64);
            let c = T::lit(0.1 * ((j % 3) as f64 - 1.0));
            cosine_seed(mesh, c, T::lit(0.9), [freq * angle.cos(), freq * angle.sin()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::ScalarFn;
    use crate::mesh::{generate, DomainSpec};

    fn disk(h: f64) -> Arc<Mesh<f64>> {
        Arc::new(generate(&DomainSpec::disk(1.0, h)).unwrap())
    }

    #[test]
    fn relaxes_to_constant_root() {
        let m = disk(0.2);
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::Polynomial(vec![1.0, -1.0]));
        let (u, rep) = solve(&p, &Field::constant(m, 0.0), &NewtonOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(u.values().iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn homogeneous_robin_goes_to_zero() {
        let m = disk(0.2);
        let p = NonlinearProblem::new(CoefficientFamily::laplacian(), ScalarFn::Zero, ScalarFn::Linear(1.0));
        let (u, rep) = solve(&p, &Field::constant(m, 1.0), &NewtonOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(u.values().iter().all(|&x| x.abs() < 1e-9));
    }

    #[test]
    fn bistable_basin_of_one() {
        let m = disk(0.15);
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
        let (u, rep) = solve(&p, &Field::constant(m, 0.9), &NewtonOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(u.values().iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn linear_robin_defects() {
        let m = disk(0.15);
        let zero = solve_linear_robin(0.0, 0.0, &m).unwrap();
        assert!(zero.defect < 1e-8, "{}", zero.defect);
        let pos = solve_linear_robin(1.0, 0.0, &m).unwrap();
        assert!(pos.defect > 0.5, "{}", pos.defect);
    }

    #[test]
    fn p_laplacian_with_continuation() {
        let m = disk(0.2);
        let p = NonlinearProblem::neumann(
            CoefficientFamily::p_laplacian(3.0).unwrap(),
            ScalarFn::Polynomial(vec![0.5, -1.0]),
        );
        let opts = NewtonOptions {
            continuation_steps: 3,
            ..Default::default()
        };
        let (u, rep) = solve(&p, &cosine_seed(&m, 0.0, 0.3, [1.0, 0.0]), &opts).unwrap();
        assert!(rep.converged, "{:?}", rep.residual_history);
        assert!(u.values().iter().all(|&x| (x - 0.5).abs() < 1e-6));
    }
}
