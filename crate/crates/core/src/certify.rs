//! Boundary checks and experiments tied to the rigidity and instability
//! results: the conormal sign on convex domains, the normal-coordinate
//! frame along the boundary, the Robin instability certificate and the
//! seed sweep for nonconstant stable Neumann solutions.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{recover_derivatives, Field, NonlinearProblem, ScalarFn};
use crate::linalg::fd_weights;
use crate::mesh::{boundary_quadrature, Mesh};
use crate::scalar::{dot2, norm2, Real};
use crate::solver::{solve, NewtonOptions};
use crate::stability::{classify, Classification};

fn with_derivatives<T: Real>(u: &Field<T>) -> Cow<'_, Field<T>> {
    if u.recovered_hessian().is_some() && u.recovered_gradient().is_some() {
        Cow::Borrowed(u)
    } else {
        Cow::Owned(recover_derivatives(u))
    }
}

/// `a(|∇u|)⟨∇u, Hν⟩` at each boundary node.
#[derive(Clone, Debug)]
pub struct ConvexSign<T> {
    pub nodes: Vec<usize>,
    pub values: Vec<T>,
    /// Single boundary loop with `κ > 0` everywhere.
    pub convex: bool,
}

impl<T: Real> ConvexSign<T> {
    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Conormal derivative of `|∇u|²/2` along the boundary of a Neumann solution.
/// Nodes with `|∇u|` at or below the family's gradient floor give zero.
pub fn convex_boundary_sign<T: Real>(problem: &NonlinearProblem<T>, u: &Field<T>) -> Result<ConvexSign<T>> {
    if !problem.is_neumann() {
        return Err(Error::Usage(format!(
            "boundary sign check needs h ≡ 0, got h = {}",
            problem.h.describe()
        )));
    }
    let u = with_derivatives(u);
    let mesh = u.mesh();
    let grad = u.recovered_gradient().unwrap();
    let hess = u.recovered_hessian().unwrap();
    let floor = problem.family.grad_floor();
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for lp in mesh.boundary() {
        for (p, &i) in lp.nodes.iter().enumerate() {
            let g = grad[i];
            let n = norm2(g);
            let v = if n <= floor {
                T::zero()
            } else {
                let nu = lp.normal[p];
                let hn = [dot2(hess[i][0], nu), dot2(hess[i][1], nu)];
                problem.family.eval_a(n)? * dot2(g, hn)
            };
            nodes.push(i);
            values.push(v);
        }
    }
    Ok(ConvexSign {
        nodes,
        values,
        convex: mesh.is_convex(T::zero()),
    })
}

/// Boundary trace of `u` in normal coordinates `(s, t)`, `t` pointing inward.
#[derive(Clone, Debug, Default)]
pub struct BoundaryFrameData<T> {
    pub nodes: Vec<usize>,
    pub loop_index: Vec<usize>,
    pub arclength: Vec<T>,
    pub curvature: Vec<T>,
    pub u: Vec<T>,
    pub u_s: Vec<T>,
    pub u_ss: Vec<T>,
    /// `−∇u·ν`.
    pub u_t: Vec<T>,
    /// `u_t − αu`.
    pub residual_robin: Vec<T>,
    /// `|∇u|² − u_s² − u_t²`.
    pub residual_metric: Vec<T>,
    /// `⟨∇u, Hν⟩ + (α+κ)u_s² + κα²u² − αu·u_ss − αf(u)u`.
    pub residual_expansion: Vec<T>,
}

fn max_abs_of<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

impl<T: Real> BoundaryFrameData<T> {
    /// Max norms of the robin, metric and expansion residuals.
    pub fn residual_norms(&self) -> [T; 3] {
        [
            max_abs_of(&self.residual_robin),
            max_abs_of(&self.residual_metric),
            max_abs_of(&self.residual_expansion),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "# node[-] s[L] kappa[1/L] u[U] u_s[U/L] u_ss[U/L^2] u_t[U/L] \
             residual_robin[U/L] residual_metric[U^2/L^2] residual_expansion[U^2/L^3]\n",
        );
        for k in 0..self.nodes.len() {
            let _ = writeln!(
                s,
                "{} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e}",
                self.nodes[k],
                self.arclength[k],
                self.curvature[k],
                self.u[k],
                self.u_s[k],
                self.u_ss[k],
                self.u_t[k],
                self.residual_robin[k],
                self.residual_metric[k],
                self.residual_expansion[k]
            );
        }
        s
    }
}

fn loop_is_closed<T: Real>(mesh: &Mesh<T>, nodes: &[usize]) -> bool {
    if nodes.len() < 3 || nodes.first() == nodes.last() {
        return false;
    }
    nodes
        .iter()
        .zip(nodes.iter().cycle().skip(1))
        .all(|(&a, &b)| mesh.neighbors(a).binary_search(&b).is_ok() && mesh.is_boundary(b))
}

/// Arc-length derivatives of the boundary trace by periodic finite
/// differences (5 points, 3 on very short loops) together with the
/// residuals of the boundary relations for `Δu + f(u) = 0`, `u_t = αu`.
pub fn boundary_frame<T: Real>(u: &Field<T>, alpha: T, f: &ScalarFn<T>) -> Result<BoundaryFrameData<T>> {
    let u = with_derivatives(u);
    let mesh = u.mesh();
    let grad = u.recovered_gradient().unwrap();
    let hess = u.recovered_hessian().unwrap();
    let vals = u.values();
    let mut out = BoundaryFrameData::default();
    for (l, lp) in mesh.boundary().iter().enumerate() {
        if !loop_is_closed(mesh, &lp.nodes) {
            return Err(Error::Geometry(format!("boundary loop {l} is not closed")));
        }
        let m = lp.nodes.len();
        let half: isize = if m >= 5 { 2 } else { 1 };
        for p in 0..m {
            let mut taus = Vec::new();
            let mut us = Vec::new();
            for o in -half..=half {
                let q = (p as isize + o).rem_euclid(m as isize) as usize;
                let mut tau = lp.arclength[q] - lp.arclength[p];
                if o > 0 && q < p {
                    tau += lp.length;
                } else if o < 0 && q > p {
                    tau -= lp.length;
                }
                taus.push(tau);
                us.push(vals[lp.nodes[q]]);
            }
            let w = fd_weights(T::zero(), &taus, 2);
            let u_s: T = us.iter().zip(&w[1]).map(|(&a, &b)| a * b).sum();
            let u_ss: T = us.iter().zip(&w[2]).map(|(&a, &b)| a * b).sum();
            let i = lp.nodes[p];
            let nu = lp.normal[p];
            let kappa = lp.curvature[p];
            let g = grad[i];
            let uv = vals[i];
            let u_t = -dot2(g, nu);
            let hn = [dot2(hess[i][0], nu), dot2(hess[i][1], nu)];
            out.nodes.push(i);
            out.loop_index.push(l);
            out.arclength.push(lp.arclength[p]);
            out.curvature.push(kappa);
            out.u.push(uv);
            out.u_s.push(u_s);
            out.u_ss.push(u_ss);
            out.u_t.push(u_t);
            out.residual_robin.push(u_t - alpha * uv);
            out.residual_metric.push(dot2(g, g) - u_s * u_s - u_t * u_t);
            out.residual_expansion.push(
                dot2(g, hn) + (alpha + kappa) * u_s * u_s + kappa * alpha * alpha * uv * uv
                    - alpha * uv * u_ss
                    - alpha * f.value(uv) * uv,
            );
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RobinCertificate<T> {
    pub alpha: T,
    /// `∮ [α f(u)u − κα²u² + α³u²] dσ`.
    pub boundary_integral: T,
    pub min_alpha_plus_kappa: T,
    /// `boundary_integral < 0` and `min_alpha_plus_kappa ≥ 0`.
    pub fires: bool,
}

impl<T: Real> RobinCertificate<T> {
    /// `fires`, `silent`, or `vacuous (integral = 0)` when the integral is exactly zero.
    pub fn status(&self) -> &'static str {
        if self.fires {
            "fires"
        } else if self.boundary_integral == T::zero() {
            "vacuous (integral = 0)"
        } else {
            "silent"
        }
    }

    /// Key-value block with sorted keys.
    pub fn to_kv(&self) -> String {
        format!(
            "alpha = {:.12e}\nboundary_integral = {:.12e}\nfires = {}\nmin_alpha_plus_kappa = {:.12e}\nstatus = {}\n",
            self.alpha,
            self.boundary_integral,
            self.fires,
            self.min_alpha_plus_kappa,
            self.status()
        )
    }
}

/// Boundary sign condition that forces instability of a solution of
/// `Δu + f(u) = 0`, `∂_ν u + αu = 0` in the plane. The quotient
/// `f(u)/(αu)` is cleared before integration, so zeros of `u` are harmless.
pub fn robin_certificate<T: Real>(u: &Field<T>, alpha: T, f: &ScalarFn<T>) -> RobinCertificate<T> {
    let mesh = u.mesh();
    let vals = u.values();
    let a2 = alpha * alpha;
    let mut integral = T::zero();
    let mut min_sum = T::infinity();
    for (i, w) in boundary_quadrature(mesh) {
        let (l, p) = mesh.boundary_position(i).expect("boundary node");
        let kappa = mesh.boundary()[l].curvature[p];
        let uv = vals[i];
        integral += w * (alpha * f.value(uv) * uv - kappa * a2 * uv * uv + a2 * alpha * uv * uv);
        min_sum = min_sum.min(alpha + kappa);
    }
    RobinCertificate {
        alpha,
        boundary_integral: integral,
        min_alpha_plus_kappa: min_sum,
        fires: integral < T::zero() && min_sum >= T::zero(),
    }
}

#[derive(Clone, Debug)]
pub struct RigidityOptions<T> {
    pub newton: NewtonOptions<T>,
    /// Solutions with `‖u − mean‖∞ ≤ delta_const` count as constant;
    /// `None` takes `1e-4` times half the spread of the known roots of `f`.
    pub delta_const: Option<T>,
    /// Stability tolerance; `None` uses the classifier default.
    pub tolerance: Option<T>,
    /// Accept `κ ≥ 0` instead of `κ > 0` as the convexity precondition.
    pub weakly_convex: bool,
}

impl<T: Real> Default for RigidityOptions<T> {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            delta_const: None,
            tolerance: None,
            weakly_convex: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RigidityRow<T> {
    pub seed: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: T,
    /// `‖u − mean(u)‖∞`.
    pub nonconstancy: T,
    /// NaN when the solve did not converge.
    pub lambda_min: T,
    pub classification: Option<Classification>,
    pub violation: bool,
    /// Solver error text when the solve aborted.
    pub note: String,
    pub solution: Option<Field<T>>,
}

#[derive(Clone, Debug)]
pub struct RigidityReport<T> {
    pub rows: Vec<RigidityRow<T>>,
    pub convex: bool,
    pub delta_const: T,
}

impl<T: Real> RigidityReport<T> {
    pub const CSV_HEADER: &'static str =
        "seed,converged,iterations,final_residual,nonconstancy,lambda_min,classification,violation";

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violation).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let class = r.classification.map_or("none".to_string(), |c| c.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{:.6e},{:.6e},{:.10e},{},{}",
                r.seed, r.converged, r.iterations, r.final_residual, r.nonconstancy, r.lambda_min, class, r.violation
            );
        }
        s
    }
}

/// Default threshold separating constant from nonconstant solutions.
pub fn default_delta_const<T: Real>(f: &ScalarFn<T>) -> T {
    let half_spread = f
        .known_roots()
        .filter(|r| r.len() >= 2)
        .map(|r| {
            let lo = r.iter().copied().fold(T::infinity(), T::min);
            let hi = r.iter().copied().fold(T::neg_infinity(), T::max);
            T::lit(0.5) * (hi - lo)
        })
        .unwrap_or(T::one());
    T::lit(1e-4) * half_spread
}

/// Solves from every seed, classifies each converged solution and flags
/// nonconstant stable ones on convex meshes. Seeds run concurrently.
pub fn rigidity_experiment<T: Real>(
    problem: &NonlinearProblem<T>,
    mesh: &Arc<Mesh<T>>,
    seeds: &[Field<T>],
    opts: &RigidityOptions<T>,
) -> Result<RigidityReport<T>> {
    if !problem.is_neumann() {
        return Err(Error::Usage("rigidity experiment needs h ≡ 0".into()));
    }
    opts.newton.validate()?;
    let convex = if opts.weakly_convex {
        mesh.is_convex(-T::lit(1e-9))
    } else {
        mesh.is_convex(T::zero())
    };
    let delta = opts.delta_const.unwrap_or_else(|| default_delta_const(&problem.f));
    let rows = seeds
        .par_iter()
        .enumerate()
        .map(|(k, seed)| {
            let mut row = RigidityRow {
                seed: k,
                converged: false,
                iterations: 0,
                final_residual: T::nan(),
                nonconstancy: T::nan(),
                lambda_min: T::nan(),
                classification: None,
                violation: false,
                note: String::new(),
                solution: None,
            };
            let start = match seed.values().len() == mesh.n_nodes() {
                true => Field::new(mesh.clone(), seed.values().to_vec()),
                false => Err(Error::Validation(format!("seed {k} has the wrong length"))),
            };
            let outcome = start.and_then(|s| solve(problem, &s, &opts.newton));
            match outcome {
                Err(e) => row.note = e.to_string(),
                Ok((u, rep)) => {
                    row.converged = rep.converged;
                    row.iterations = rep.iterations;
                    row.final_residual = rep.final_residual;
                    row.nonconstancy = u.oscillation();
                    if rep.converged {
                        match classify(problem, &u, opts.tolerance) {
                            Ok(st) => {
                                row.lambda_min = st.lambda_min;
                                row.classification = Some(st.classification);
                                row.violation = convex && row.nonconstancy > delta && st.lambda_min > st.tolerance;
                            }
                            Err(e) => row.note = e.to_string(),
                        }
                    }
                    row.solution = Some(u);
                }
            }
            row
        })
        .collect();
    Ok(RigidityReport {
        rows,
        convex,
        delta_const: delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientFamily;
    use crate::mesh::{generate, DomainSpec};

    fn disk(h: f64) -> Arc<Mesh<f64>> {
        Arc::new(generate::<f64>(&DomainSpec::disk(1.0, h)).unwrap())
    }

    #[test]
    fn sign_check_rejects_robin_problems() {
        let m = disk(0.2);
        let p = NonlinearProblem::new(CoefficientFamily::laplacian(), ScalarFn::Zero, ScalarFn::Linear(1.0));
        assert!(matches!(
            convex_boundary_sign(&p, &Field::constant(m, 0.0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn constant_fields_give_zero_columns() {
        let m = disk(0.2);
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
        let s = convex_boundary_sign(&p, &Field::constant(m.clone(), 1.0)).unwrap();
        assert!(s.convex);
        assert!(s.values.iter().all(|&v| v == 0.0));
        let fr = boundary_frame(&Field::constant(m.clone(), 0.0), 0.7, &ScalarFn::bistable()).unwrap();
        assert!(fr.residual_norms().iter().all(|&v| v == 0.0));
        let fr = boundary_frame(&Field::constant(m, 1.0), 0.0, &ScalarFn::bistable()).unwrap();
        assert!(fr.u_s.iter().chain(&fr.u_t).all(|v| v.abs() < 1e-12));
        assert!(fr.residual_norms().iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn certificate_trivial_cases() {
        let m = disk(0.2);
        let zero = Field::constant(m.clone(), 0.0);
        for alpha in [0.0, 0.5, 3.0] {
            let c = robin_certificate(&zero, alpha, &ScalarFn::Zero);
            assert_eq!(c.boundary_integral, 0.0);
            assert!(!c.fires);
        }
        let u = Field::from_fn(m, |x, y| 1.0 + x * y);
        let c = robin_certificate(&u, 0.0, &ScalarFn::bistable());
        assert_eq!(c.boundary_integral, 0.0);
        assert_eq!(c.status(), "vacuous (integral = 0)");
    }

    #[test]
    fn constant_seeds_on_the_disk() {
        let m = disk(0.15);
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
        let seeds: Vec<_> = [-0.9, 0.0, 0.9]
            .iter()
            .map(|&c| Field::constant(m.clone(), c))
            .collect();
        let rep = rigidity_experiment(&p, &m, &seeds, &RigidityOptions::default()).unwrap();
        assert!(rep.convex);
        assert_eq!(rep.violations(), 0);
        let lam: Vec<f64> = rep.rows.iter().map(|r| r.lambda_min).collect();
        assert!((lam[0] - 2.0).abs() < 1e-6 && (lam[1] + 1.0).abs() < 1e-6 && (lam[2] - 2.0).abs() < 1e-6);
        assert!(rep.to_csv().starts_with(RigidityReport::<f64>::CSV_HEADER));
    }
}
