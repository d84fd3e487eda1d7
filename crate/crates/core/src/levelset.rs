//! Level-curve geometry of a recovered field and the term-by-term geometric
//! Poincaré inequality for stable solutions.
//!
//! With `g = ∇u/|∇u|` and `τ = g^⊥`, the Hessian in the `(g, τ)` frame has
//! entries `H_gg, H_gτ, H_ττ`; then `∇|∇u| = Hg`, `∇_T|∇u| = H_gτ τ` and
//! `|∇u| k₁ = H_ττ`. Everything here is nodal and uses recovered derivatives.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{average_gradient, recover_derivatives, Field, NonlinearProblem};
use crate::mesh::{boundary_quadrature, Mesh};
use crate::scalar::{dot2, norm2, Real};
use crate::stability::assemble_stability_form;

/// Relative threshold below which `|∇u|` counts as degenerate.
pub const DEFAULT_GRAD_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct LevelSetData<T> {
    pub grad_norm: Vec<T>,
    /// `H∇u/|∇u|`; zero at masked nodes.
    pub grad_of_grad_norm: Vec<[T; 2]>,
    pub tangential_grad_norm: Vec<T>,
    /// Curvature of the level curve with normal `∇u/|∇u|`.
    pub curvature: Vec<T>,
    /// `true` where `|∇u| < eps_grad`; other columns are zero there.
    pub mask: Vec<bool>,
    pub eps_grad: T,
}

impl<T: Real> LevelSetData<T> {
    pub fn unmasked(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| !m).map(|(i, _)| i)
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn with_derivatives<T: Real>(u: &Field<T>) -> Cow<'_, Field<T>> {
    if u.recovered_hessian().is_some() && u.recovered_gradient().is_some() {
        Cow::Borrowed(u)
    } else {
        Cow::Owned(recover_derivatives(u))
    }
}

fn default_eps<T: Real>(grad: &[[T; 2]]) -> T {
    let top = grad.iter().fold(T::zero(), |m, &g| m.max(norm2(g)));
    (T::lit(DEFAULT_GRAD_THRESHOLD) * top).max(T::lit(1e3) * T::epsilon())
}

/// Level-set quantities at every node, masking `|∇u| < ε` with
/// `ε = 1e-6 · max|∇u|` (at least a few hundred ulps).
pub fn levelset_quantities<T: Real>(u: &Field<T>) -> LevelSetData<T> {
    let u = with_derivatives(u);
    let eps = default_eps(u.recovered_gradient().unwrap());
    levelset_quantities_with(&u, eps)
}

/// As [`levelset_quantities`] with an explicit degeneracy threshold.
pub fn levelset_quantities_with<T: Real>(u: &Field<T>, eps_grad: T) -> LevelSetData<T> {
    let u = with_derivatives(u);
    let grad = u.recovered_gradient().unwrap();
    let hess = u.recovered_hessian().unwrap();
    let rows: Vec<(T, [T; 2], T, T, bool)> = grad
        .par_iter()
        .zip(hess.par_iter())
        .map(|(&g, h)| {
            let n = norm2(g);
            if n < eps_grad {
                return (n, [T::zero(); 2], T::zero(), T::zero(), true);
            }
            let e = [g[0] / n, g[1] / n];
            let t = [-e[1], e[0]];
            let he = [dot2(h[0], e), dot2(h[1], e)];
            let tang = dot2(he, t);
            let k1 =
                (g[1] * g[1] * h[0][0] - T::lit(2.0) * g[0] * g[1] * h[0][1] + g[0] * g[0] * h[1][1]) / (n * n * n);
            (n, he, tang.abs(), k1, false)
        })
        .collect();
    LevelSetData {
        grad_norm: rows.iter().map(|r| r.0).collect(),
        grad_of_grad_norm: rows.iter().map(|r| r.1).collect(),
        tangential_grad_norm: rows.iter().map(|r| r.2).collect(),
        curvature: rows.iter().map(|r| r.3).collect(),
        mask: rows.iter().map(|r| r.4).collect(),
        eps_grad,
    }
}

/// `∇|∇u|` by differentiating the nodal field `|∇u|` with area-weighted
/// gradient averaging. Independent of the Hessian recovery.
pub fn differentiated_grad_norm<T: Real>(u: &Field<T>) -> Vec<[T; 2]> {
    let u = with_derivatives(u);
    let norms: Vec<T> = u.recovered_gradient().unwrap().iter().map(|&g| norm2(g)).collect();
    average_gradient(u.mesh(), &norms)
}

/// Nodal residual of `‖H‖² − |∇|∇u||² − |∇_T|∇u||² − |∇u|²k₁²`.
///
/// `∇|∇u|` is taken from [`differentiated_grad_norm`], and its tangential
/// part is projected from that vector, while `H` and `k₁` come from the
/// recovered Hessian. With `∇|∇u| = H∇u/|∇u|` the expression vanishes
/// identically, so this is what makes the identity a test of the
/// discretisation. Masked nodes hold zero.
pub fn curvature_identity_residual<T: Real>(u: &Field<T>) -> Vec<T> {
    let u = with_derivatives(u);
    let data = levelset_quantities(&u);
    let dn = differentiated_grad_norm(&u);
    identity_residual_from(&u, &data, &dn)
}

/// Same residual with `∇|∇u|` from the Hessian; zero up to rounding.
pub fn curvature_identity_residual_algebraic<T: Real>(u: &Field<T>) -> Vec<T> {
    let u = with_derivatives(u);
    let data = levelset_quantities(&u);
    identity_residual_from(&u, &data, &data.grad_of_grad_norm)
}

fn identity_residual_from<T: Real>(u: &Field<T>, data: &LevelSetData<T>, dn: &[[T; 2]]) -> Vec<T> {
    let grad = u.recovered_gradient().unwrap();
    let hess = u.recovered_hessian().unwrap();
    (0..grad.len())
        .map(|i| {
            if data.mask[i] {
                return T::zero();
            }
            let g = grad[i];
            let n = data.grad_norm[i];
            let h = hess[i];
            let frob = h[0][0] * h[0][0] + T::lit(2.0) * h[0][1] * h[0][1] + h[1][1] * h[1][1];
            let t = [-g[1] / n, g[0] / n];
            let v = dn[i];
            let tang = dot2(v, t);
            frob - dot2(v, v) - tang * tang - n * n * data.curvature[i] * data.curvature[i]
        })
        .collect()
}

/// Node table with a `# name[unit]` header (`U` the unit of `u`, `L` of
/// length); masked nodes print `nan`.
pub fn levelset_table<T: Real>(data: &LevelSetData<T>, residual: &[T]) -> String {
    let mut s = String::from("# node[-] grad_norm[U/L] k1[1/L] tgrad[U/L^2] residual[U^2/L^4]\n");
    for i in 0..data.grad_norm.len() {
        if data.mask[i] {
            let _ = writeln!(s, "{i} {:.10e} nan nan nan", data.grad_norm[i]);
        } else {
            let _ = writeln!(
                s,
                "{i} {:.10e} {:.10e} {:.10e} {:.10e}",
                data.grad_norm[i], data.curvature[i], data.tangential_grad_norm[i], residual[i]
            );
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct PoincareBreakdown<T> {
    /// `∫ [λ₁|∇_T|∇u||² + a|∇u|²k₁²] φ²` over unmasked nodes.
    pub interior_lhs: T,
    /// `∮ [f(u)∂_ν u − a⟨∇u, Hν⟩ − h(u)Δu − h′(u)|∇u|²] φ²`.
    pub boundary_term: T,
    /// `∫ |∇u|²⟨A(∇u)∇φ, ∇φ⟩`, exact for P1 data.
    pub rhs: T,
    pub slack: T,
    /// `∫ [Σ⟨A∇u_i,∇u_i⟩ − ⟨A∇|∇u|,∇|∇u|⟩] φ²` with `∇|∇u|` from
    /// [`differentiated_grad_norm`].
    pub hessian_form_lhs: T,
    /// Discrete stability form at `|∇u|φ`; equals the slack for exact solutions.
    pub weighted_form: T,
    /// Boundary nodes with `|∇u| < ε`, where `a⟨∇u, Hν⟩` is set to zero.
    pub critical_boundary_nodes: Vec<usize>,
    pub masked_nodes: usize,
}

impl<T: Real> PoincareBreakdown<T> {
    /// `|interior_lhs| + |boundary_term| + |rhs|`.
    pub fn magnitude(&self) -> T {
        self.interior_lhs.abs() + self.boundary_term.abs() + self.rhs.abs()
    }

    pub const COLUMNS: [&'static str; 5] = ["interior_lhs", "boundary_term", "rhs", "slack", "hessian_form_lhs"];

    pub fn values(&self) -> [T; 5] {
        [
            self.interior_lhs,
            self.boundary_term,
            self.rhs,
            self.slack,
            self.hessian_form_lhs,
        ]
    }
}

/// Splits the geometric Poincaré inequality for `u` and test function `phi`
/// into its interior, boundary and right-hand terms.
pub fn poincare_breakdown<T: Real>(
    problem: &NonlinearProblem<T>,
    u: &Field<T>,
    phi: &Field<T>,
) -> Result<PoincareBreakdown<T>> {
    if !Arc::ptr_eq(u.mesh_arc(), phi.mesh_arc()) && u.mesh().n_nodes() != phi.mesh().n_nodes() {
        return Err(Error::Validation("test function lives on a different mesh".into()));
    }
    let u = with_derivatives(u);
    let mesh = u.mesh();
    let family = &problem.family;
    let data = levelset_quantities(&u);
    let grad = u.recovered_gradient().unwrap();
    let hess = u.recovered_hessian().unwrap();
    let dn = differentiated_grad_norm(&u);
    let lumped = mesh.lumped_mass();
    let ph = phi.values();

    let mut interior = T::zero();
    let mut hessian_form = T::zero();
    for i in data.unmasked() {
        let n = data.grad_norm[i];
        let w = lumped[i] * ph[i] * ph[i];
        let a = family.eval_a(n)?;
        let l1 = family.eval_lambda1(n)?;
        let tg = data.tangential_grad_norm[i];
        let k = data.curvature[i];
        interior += w * (l1 * tg * tg + a * n * n * k * k);
        let op = family.matrix_a(grad[i])?;
        let h = hess[i];
        let rows = op.form(h[0], h[0]) + op.form(h[1], h[1]);
        hessian_form += w * (rows - op.form(dn[i], dn[i]));
    }

    let mut boundary = T::zero();
    let mut critical = Vec::new();
    for (i, w) in boundary_quadrature(mesh) {
        let (l, p) = mesh.boundary_position(i).expect("boundary node");
        let nu = mesh.boundary()[l].normal[p];
        let g = grad[i];
        let h = hess[i];
        let uv = u.values()[i];
        let (hv, hd) = problem.h.eval(uv);
        let fv = problem.f.value(uv);
        let n = norm2(g);
        let conormal = if n < data.eps_grad {
            critical.push(i);
            T::zero()
        } else {
            let hn = [dot2(h[0], nu), dot2(h[1], nu)];
            family.eval_a(n)? * dot2(g, hn)
        };
        let integrand = fv * dot2(g, nu) - conormal - hv * (h[0][0] + h[1][1]) - hd * n * n;
        boundary += w * ph[i] * ph[i] * integrand;
    }

    let rhs = weighted_gradient_energy(problem, &u, ph)?;
    let q = assemble_stability_form(problem, &u)?;
    let psi: Vec<T> = (0..mesh.n_nodes()).map(|i| data.grad_norm[i] * ph[i]).collect();
    Ok(PoincareBreakdown {
        interior_lhs: interior,
        boundary_term: boundary,
        rhs,
        slack: rhs - interior - boundary,
        hessian_form_lhs: hessian_form,
        weighted_form: q.bilinear(&psi, &psi),
        critical_boundary_nodes: critical,
        masked_nodes: data.masked_count(),
    })
}

// ∫ |∇u|²⟨A(∇u)∇φ,∇φ⟩ with element gradients of both fields
fn weighted_gradient_energy<T: Real>(problem: &NonlinearProblem<T>, u: &Field<T>, phi: &[T]) -> Result<T> {
    let mesh = u.mesh();
    let family = &problem.family;
    let floor = family.grad_floor();
    let parts: Vec<std::result::Result<T, usize>> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|k| {
            let gu = u.element_gradient(k);
            let gp = crate::fem::element_gradient(mesh, phi, k);
            let n = norm2(gu);
            if n <= floor && !family.regular_at_zero() {
                return Err(k);
            }
            let op = family.matrix_a(gu).map_err(|_| k)?;
            Ok(mesh.triangle_area(k) * n * n * op.form(gp, gp))
        })
        .collect();
    let bad: Vec<usize> = parts.iter().filter_map(|p| p.err()).collect();
    if !bad.is_empty() {
        return Err(Error::DegenerateGradient { triangles: bad });
    }
    Ok(parts.into_iter().map(|p| p.unwrap()).sum())
}

/// `φ = ψ/|∇u|` on unmasked nodes and zero elsewhere, where `ψ` is typically
/// the eigenfunction of a negative eigenvalue; then `slack ≈ Q(ψ) < 0`.
pub fn instability_witness<T: Real>(u: &Field<T>, psi: &Field<T>) -> Result<Field<T>> {
    let data = levelset_quantities(u);
    let vals = (0..psi.values().len())
        .map(|i| {
            if data.mask[i] {
                T::zero()
            } else {
                psi.values()[i] / data.grad_norm[i]
            }
        })
        .collect();
    psi.with_values(vals)
}

/// Smooth random test functions `c₀ + Σ c_j cos(k_j·x + θ_j)` with `|k_j| ≤ 3π`
/// and unit-scale coefficients, reproducible from `seed`.
pub fn random_smooth_tests<T: Real>(mesh: &Arc<Mesh<T>>, count: usize, seed: u64) -> Vec<Field<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c0: f64 = rng.gen_range(-1.0..1.0);
            let modes: Vec<(f64, [f64; 2], f64)> = (0..4)
                .map(|_| {
                    let r: f64 = rng.gen_range(0.0..3.0 * std::f64::consts::PI);
                    let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (
                        rng.gen_range(-1.0..1.0),
                        [r * ang.cos(), r * ang.sin()],
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            Field::from_fn(mesh.clone(), |x, y| {
                let (x, y) = (x.as_f64(), y.as_f64());
                T::lit(
                    c0 + modes
                        .iter()
                        .map(|(c, k, th)| c * (k[0] * x + k[1] * y + th).cos())
                        .sum::<f64>(),
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientFamily;
    use crate::fem::ScalarFn;
    use crate::mesh::{generate, DomainSpec};

    fn disk(h: f64) -> Arc<Mesh<f64>> {
        Arc::new(generate::<f64>(&DomainSpec::disk(1.0, h)).unwrap())
    }

    #[test]
    fn affine_field_has_straight_level_lines() {
        let m = disk(0.15);
        let u = Field::from_fn(m, |x, _| x);
        let d = levelset_quantities(&u);
        assert_eq!(d.masked_count(), 0);
        assert!(d.curvature.iter().all(|k| k.abs() < 1e-7));
        assert!(d.tangential_grad_norm.iter().all(|t| t.abs() < 1e-7));
        assert!(curvature_identity_residual(&u).iter().all(|r| r.abs() < 1e-7));
    }

    #[test]
    fn hyperbola_curvature_from_formula() {
        // nodal data of x y: quadratic, so recovery is exact at every node
        let m = Arc::new(generate::<f64>(&DomainSpec::rectangle(3.0, 3.0, 0.2, 0.15)).unwrap());
        let u = Field::from_fn(m.clone(), |x, y| (x + 1.0) * (y + 1.0));
        let d = levelset_quantities(&u);
        let origin = (0..m.n_nodes())
            .min_by(|&a, &b| {
                let pa = m.nodes()[a];
                let pb = m.nodes()[b];
                (pa[0].hypot(pa[1])).partial_cmp(&pb[0].hypot(pb[1])).unwrap()
            })
            .unwrap();
        let p = m.nodes()[origin];
        // gradient (y+1, x+1), Hessian [[0,1],[1,0]]
        let (gx, gy) = (p[1] + 1.0, p[0] + 1.0);
        let expected = -2.0 * gx * gy / gx.hypot(gy).powi(3);
        assert!((d.curvature[origin] - expected).abs() < 1e-8);
        if p[0].abs() < 1e-12 && p[1].abs() < 1e-12 {
            assert!((d.curvature[origin] + 0.5f64.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn radial_quadratic_curvature_and_tangential_part() {
        let m = disk(0.1);
        let u = Field::from_fn(m.clone(), |x, y| 0.5 * (x * x + y * y));
        let d = levelset_quantities(&u);
        for i in d.unmasked() {
            let r = m.nodes()[i][0].hypot(m.nodes()[i][1]);
            if r > 0.3 {
                assert!((d.curvature[i] - 1.0 / r).abs() < 1e-6, "k1 at r={r}");
                assert!(d.tangential_grad_norm[i] < 1e-6);
            }
            let gn2 = dot2(d.grad_of_grad_norm[i], d.grad_of_grad_norm[i]);
            assert!(d.tangential_grad_norm[i].powi(2) <= gn2 + 1e-12);
        }
        assert!(curvature_identity_residual_algebraic(&u).iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn constant_solution_breakdown_vanishes() {
        let m = disk(0.15);
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
        let u = Field::constant(m.clone(), 1.0);
        for phi in random_smooth_tests(&m, 3, 7) {
            let b = poincare_breakdown(&p, &u, &phi).unwrap();
            for v in b.values() {
                assert!(v.abs() < 1e-20, "{v}");
            }
        }
    }

    #[test]
    fn degenerate_rhs_under_singular_family() {
        let m = disk(0.2);
        let p = NonlinearProblem::neumann(CoefficientFamily::p_laplacian(1.5).unwrap(), ScalarFn::Zero);
        let u = Field::constant(m.clone(), 0.3);
        let phi = Field::from_fn(m, |x, _| x);
        assert!(matches!(
            poincare_breakdown(&p, &u, &phi),
            Err(Error::DegenerateGradient { .. })
        ));
    }

    #[test]
    fn table_layout() {
        let m = disk(0.3);
        let u = Field::from_fn(m, |x, y| 0.5 * (x * x + y * y));
        let d = levelset_quantities(&u);
        let r = curvature_identity_residual(&u);
        let t = levelset_table(&d, &r);
        assert!(t.starts_with("# node[-] grad_norm[U/L] k1[1/L] tgrad[U/L^2] residual[U^2/L^4]\n"));
        assert_eq!(t.lines().filter(|l| !l.starts_with('#')).count(), d.grad_norm.len());
    }
}
