//! P1 finite elements for `div(a(|∇u|)∇u) + f(u) = 0` with `a ∂_ν u + h(u) = 0`.

mod field;
mod recovery;
mod scalar_fn;

use rayon::prelude::*;

pub use field::Field;
pub use recovery::{average_gradient, recover_derivatives, recover_gradient};
pub use scalar_fn::ScalarFn;

use crate::coeff::CoefficientFamily;
use crate::error::{Error, Result};
use crate::linalg::SparseSymmetricMatrix;
use crate::mesh::Mesh;
use crate::scalar::{norm2, Real};

/// Coefficient family plus interior reaction `f` and boundary flux `h`.
#[derive(Clone, Debug)]
pub struct NonlinearProblem<T: Real> {
    pub family: CoefficientFamily<T>,
    pub f: ScalarFn<T>,
    pub h: ScalarFn<T>,
}

impl<T: Real> NonlinearProblem<T> {
    pub fn new(family: CoefficientFamily<T>, f: ScalarFn<T>, h: ScalarFn<T>) -> Self {
        Self { family, f, h }
    }

    /// Neumann problem (`h ≡ 0`).
    pub fn neumann(family: CoefficientFamily<T>, f: ScalarFn<T>) -> Self {
        Self::new(family, f, ScalarFn::Zero)
    }

    pub fn is_neumann(&self) -> bool {
        self.h.is_zero()
    }
}

// 3-point Gauss–Legendre on [0, 1]
fn edge_rule<T: Real>() -> [(T, T); 3] {
    let d = T::lit(0.5 * (0.6f64).sqrt());
    let half = T::lit(0.5);
    [
        (half - d, T::lit(5.0 / 18.0)),
        (half, T::lit(8.0 / 18.0)),
        (half + d, T::lit(5.0 / 18.0)),
    ]
}

/// Per-element gradient of a nodal field.
pub(crate) fn element_gradient<T: Real>(mesh: &Mesh<T>, values: &[T], k: usize) -> [T; 2] {
    let (g, _) = mesh.shape_gradients(k);
    let t = mesh.triangles()[k];
    let mut out = [T::zero(); 2];
    for a in 0..3 {
        out[0] += values[t[a]] * g[a][0];
        out[1] += values[t[a]] * g[a][1];
    }
    out
}

struct ElementContribution<T> {
    nodes: [usize; 3],
    residual: [T; 3],
    matrix: [[T; 3]; 3],
}

// interior elements, then boundary edges
type ContributionLists<T> = (Vec<ElementContribution<T>>, Vec<ElementContribution<T>>);

fn check_length<T: Real>(mesh: &Mesh<T>, u: &[T]) -> Result<()> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::Validation(format!(
            "field has {} values for {} nodes",
            u.len(),
            mesh.n_nodes()
        )));
    }
    Ok(())
}

/// Element and boundary-edge contributions of the residual and (optionally)
/// the Jacobian, computed in parallel and scattered serially in element order.
fn element_terms<T: Real>(
    problem: &NonlinearProblem<T>,
    mesh: &Mesh<T>,
    u: &[T],
    with_matrix: bool,
) -> Result<ContributionLists<T>> {
    check_length(mesh, u)?;
    let family = &problem.family;
    let floor = family.grad_floor();
    let third = T::lit(1.0 / 3.0);
    let half = T::lit(0.5);
    let interior: Vec<Result<ElementContribution<T>, usize>> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|k| {
            let nodes = mesh.triangles()[k];
            let (g, area) = mesh.shape_gradients(k);
            let grad = element_gradient(mesh, u, k);
            if norm2(grad) <= floor && !family.regular_at_zero() {
                return Err(k);
            }
            let flux = family.flux(grad).map_err(|_| k)?;
            let mut residual = [T::zero(); 3];
            let mut matrix = [[T::zero(); 3]; 3];
            for a in 0..3 {
                residual[a] = area * (flux[0] * g[a][0] + flux[1] * g[a][1]);
            }
            if with_matrix {
                let op = family.matrix_a(grad).map_err(|_| k)?;
                for a in 0..3 {
                    let ag = op.apply(g[a]);
                    for b in 0..3 {
                        matrix[a][b] = area * (ag[0] * g[b][0] + ag[1] * g[b][1]);
                    }
                }
            }
            // edge-midpoint rule: exact for quadratics
            for e in 0..3 {
                let (p, q) = (e, (e + 1) % 3);
                let um = half * (u[nodes[p]] + u[nodes[q]]);
                let (fv, fd) = problem.f.eval(um);
                let w = area * third;
                residual[p] -= w * fv * half;
                residual[q] -= w * fv * half;
                if with_matrix {
                    let c = w * fd * half * half;
                    for &(x, y) in &[(p, p), (p, q), (q, p), (q, q)] {
                        matrix[x][y] -= c;
                    }
                }
            }
            Ok(ElementContribution {
                nodes,
                residual,
                matrix,
            })
        })
        .collect();
    let mut bad = Vec::new();
    let mut elements = Vec::with_capacity(interior.len());
    for r in interior {
        match r {
            Ok(c) => elements.push(c),
            Err(k) => bad.push(k),
        }
    }
    if !bad.is_empty() {
        return Err(Error::DegenerateGradient { triangles: bad });
    }

    let mut edges = Vec::new();
    if !problem.h.is_zero() {
        let rule = edge_rule::<T>();
        for (a, b) in mesh.boundary_edges() {
            let len = mesh.distance(a, b);
            let mut residual = [T::zero(); 3];
            let mut matrix = [[T::zero(); 3]; 3];
            for &(xi, w) in &rule {
                let phi = [T::one() - xi, xi];
                let uq = phi[0] * u[a] + phi[1] * u[b];
                let (hv, hd) = problem.h.eval(uq);
                for p in 0..2 {
                    residual[p] += w * len * hv * phi[p];
                    if with_matrix {
                        for q in 0..2 {
                            matrix[p][q] += w * len * hd * phi[p] * phi[q];
                        }
                    }
                }
            }
            edges.push(ElementContribution {
                nodes: [a, b, usize::MAX],
                residual,
                matrix,
            });
        }
    }
    Ok((elements, edges))
}

fn scatter_residual<T: Real>(n: usize, parts: &[&[ElementContribution<T>]]) -> Vec<T> {
    let mut r = vec![T::zero(); n];
    for part in parts {
        for c in part.iter() {
            for (a, &v) in c.nodes.iter().enumerate() {
                if v != usize::MAX {
                    r[v] += c.residual[a];
                }
            }
        }
    }
    r
}

fn scatter_matrix<T: Real>(mesh: &Mesh<T>, parts: &[&[ElementContribution<T>]]) -> SparseSymmetricMatrix<T> {
    let mut m = SparseSymmetricMatrix::zeros_like_mesh(mesh);
    for part in parts {
        for c in part.iter() {
            let k = if c.nodes[2] == usize::MAX { 2 } else { 3 };
            m.add_element(&c.nodes[..k], &c.matrix);
        }
    }
    m
}

/// Weak-form residual `∫ a(|∇u|)∇u·∇φ_i + ∮ h(u)φ_i − ∫ f(u)φ_i` for every node.
pub fn assemble_residual<T: Real>(problem: &NonlinearProblem<T>, u: &Field<T>) -> Result<Vec<T>> {
    let mesh = u.mesh();
    let (el, ed) = element_terms(problem, mesh, u.values(), false)?;
    Ok(scatter_residual(mesh.n_nodes(), &[&el, &ed]))
}

/// Exact derivative of [`assemble_residual`]:
/// `∫ ⟨A(∇u)∇φ_j, ∇φ_i⟩ + ∮ h′(u)φ_iφ_j − ∫ f′(u)φ_iφ_j`.
pub fn assemble_jacobian<T: Real>(problem: &NonlinearProblem<T>, u: &Field<T>) -> Result<SparseSymmetricMatrix<T>> {
    Ok(assemble_system(problem, u)?.1)
}

/// Residual and Jacobian from one pass over the elements.
pub fn assemble_system<T: Real>(
    problem: &NonlinearProblem<T>,
    u: &Field<T>,
) -> Result<(Vec<T>, SparseSymmetricMatrix<T>)> {
    let mesh = u.mesh();
    let (el, ed) = element_terms(problem, mesh, u.values(), true)?;
    Ok((
        scatter_residual(mesh.n_nodes(), &[&el, &ed]),
        scatter_matrix(mesh, &[&el, &ed]),
    ))
}

/// `∫ f(u_h)` with the edge-midpoint rule used by the residual. For a
/// Neumann problem this equals `−Σ_i R_i`, so it vanishes at a solution.
pub fn integrate_source<T: Real>(f: &ScalarFn<T>, u: &Field<T>) -> T {
    let mesh = u.mesh();
    let v = u.values();
    let half = T::lit(0.5);
    let parts: Vec<T> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|k| {
            let t = mesh.triangles()[k];
            let s: T = (0..3).map(|e| f.value(half * (v[t[e]] + v[t[(e + 1) % 3]]))).sum();
            mesh.triangle_area(k) * s / T::lit(3.0)
        })
        .collect();
    // summed in element order so the result does not depend on thread count
    parts.into_iter().sum()
}

/// Consistent P1 mass matrix.
pub fn mass_matrix<T: Real>(mesh: &Mesh<T>) -> SparseSymmetricMatrix<T> {
    let mut m = SparseSymmetricMatrix::zeros_like_mesh(mesh);
    let (d, o) = (T::lit(1.0 / 6.0), T::lit(1.0 / 12.0));
    for k in 0..mesh.n_triangles() {
        let a = mesh.triangle_area(k);
        let local = [[d * a, o * a, o * a], [o * a, d * a, o * a], [o * a, o * a, d * a]];
        m.add_element(&mesh.triangles()[k], &local);
    }
    m
}

/// P1 stiffness matrix `∫ ∇φ_i·∇φ_j`.
pub fn stiffness_matrix<T: Real>(mesh: &Mesh<T>) -> SparseSymmetricMatrix<T> {
    let mut m = SparseSymmetricMatrix::zeros_like_mesh(mesh);
    for k in 0..mesh.n_triangles() {
        let (g, area) = mesh.shape_gradients(k);
        let mut local = [[T::zero(); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                local[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        m.add_element(&mesh.triangles()[k], &local);
    }
    m
}

/// Boundary mass matrix `∮ φ_iφ_j dσ` on the boundary polygon.
pub fn boundary_mass_matrix<T: Real>(mesh: &Mesh<T>) -> SparseSymmetricMatrix<T> {
    let mut m = SparseSymmetricMatrix::zeros_like_mesh(mesh);
    let (d, o) = (T::lit(1.0 / 3.0), T::lit(1.0 / 6.0));
    for (a, b) in mesh.boundary_edges() {
        let l = mesh.distance(a, b);
        let z = T::zero();
        let local = [[d * l, o * l, z], [o * l, d * l, z], [z, z, z]];
        m.add_element(&[a, b], &local);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, DomainSpec};
    use std::sync::Arc;

    fn disk() -> Arc<Mesh<f64>> {
        Arc::new(generate(&DomainSpec::disk(1.0, 0.2)).unwrap())
    }

    #[test]
    fn source_integral_matches_residual_sum() {
        let m = disk();
        let one = Field::constant(m.clone(), 1.0);
        assert!((integrate_source(&ScalarFn::Constant(1.0), &one) - m.area()).abs() < 1e-12);
        let u = Field::from_fn(m, |x, y| 0.3 + x * y + 0.5 * x);
        let f = ScalarFn::bistable();
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), f.clone());
        let total: f64 = assemble_residual(&p, &u).unwrap().iter().sum();
        assert!((integrate_source(&f, &u) + total).abs() < 1e-12);
    }

    #[test]
    fn constant_solves_pure_neumann() {
        let m = disk();
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::Zero);
        let r = assemble_residual(&p, &Field::constant(m, 2.5)).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn unit_source_gives_lumped_areas() {
        let m = disk();
        let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::Constant(1.0));
        let r = assemble_residual(&p, &Field::constant(m.clone(), 0.0)).unwrap();
        for (ri, li) in r.iter().zip(m.lumped_mass()) {
            assert!((ri + li).abs() < 1e-14);
        }
    }

    #[test]
    fn mass_matrix_reference_triangle() {
        let mesh = Mesh::<f64>::new(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]],
            vec![[0, 1, 2]],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let m = mass_matrix(&mesh);
        assert!((m.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((m.get(0, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn singular_family_flags_flat_triangles() {
        let m = disk();
        let p = NonlinearProblem::neumann(CoefficientFamily::p_laplacian(1.5).unwrap(), ScalarFn::Zero);
        match assemble_residual(&p, &Field::constant(m.clone(), 1.0)) {
            Err(Error::DegenerateGradient { triangles }) => assert_eq!(triangles.len(), m.n_triangles()),
            other => panic!("{other:?}"),
        }
    }
}
