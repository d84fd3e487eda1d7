//! Nodal gradient and Hessian recovery from P1 data.
//!
//! The main route is polynomial-preserving recovery: a least-squares
//! quadratic fitted to the nodal values on a patch around each node, whose
//! linear part is the recovered gradient. It reproduces quadratics exactly
//! on any mesh. Hessians come from recovering each gradient component again.

use rayon::prelude::*;

use super::Field;
use crate::linalg::least_squares_rcond;
use crate::mesh::Mesh;
use crate::scalar::Real;

fn ring_patch<T: Real>(mesh: &Mesh<T>, i: usize, rings: usize) -> Vec<usize> {
    let mut patch = vec![i];
    let mut frontier = vec![i];
    for _ in 0..rings {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in mesh.neighbors(v) {
                if !patch.contains(&w) {
                    patch.push(w);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    patch
}

const FIT_RCOND: f64 = 1e-2;

/// Gradient at node `i` of the least-squares quadratic through the patch values.
fn fit_gradient<T: Real>(mesh: &Mesh<T>, values: &[T], i: usize) -> [T; 2] {
    let start = if mesh.is_boundary(i) || mesh.neighbors(i).len() < 6 {
        2
    } else {
        1
    };
    let xi = mesh.nodes()[i];
    for rings in start..=4 {
        let patch = ring_patch(mesh, i, rings);
        if patch.len() < 6 {
            continue;
        }
        let scale = patch
            .iter()
            .map(|&v| {
                let p = mesh.nodes()[v];
                (p[0] - xi[0]).hypot(p[1] - xi[1])
            })
            .fold(T::zero(), T::max);
        let rows: Vec<Vec<T>> = patch
            .iter()
            .map(|&v| {
                let p = mesh.nodes()[v];
                let (x, y) = ((p[0] - xi[0]) / scale, (p[1] - xi[1]) / scale);
                vec![T::one(), x, y, x * x, x * y, y * y]
            })
            .collect();
        let rhs: Vec<T> = patch.iter().map(|&v| values[v]).collect();
        // patches squeezed onto a few lines (thin necks) grow instead
        if let Some(c) = least_squares_rcond(&rows, &rhs, T::lit(FIT_RCOND)) {
            return [c[1] / scale, c[2] / scale];
        }
    }
    // tiny meshes without enough nodes for a quadratic
    average_at(mesh, values, i)
}

/// Recovered nodal gradient (polynomial-preserving).
pub fn recover_gradient<T: Real>(mesh: &Mesh<T>, values: &[T]) -> Vec<[T; 2]> {
    (0..mesh.n_nodes())
        .into_par_iter()
        .map(|i| fit_gradient(mesh, values, i))
        .collect()
}

fn average_at<T: Real>(mesh: &Mesh<T>, values: &[T], i: usize) -> [T; 2] {
    let mut g = [T::zero(); 2];
    let mut w = T::zero();
    for &k in mesh.triangles_of(i) {
        let a = mesh.triangle_area(k);
        let ge = super::element_gradient(mesh, values, k);
        g[0] += a * ge[0];
        g[1] += a * ge[1];
        w += a;
    }
    [g[0] / w, g[1] / w]
}

/// Area-weighted average of the element gradients around each node.
pub fn average_gradient<T: Real>(mesh: &Mesh<T>, values: &[T]) -> Vec<[T; 2]> {
    (0..mesh.n_nodes())
        .into_par_iter()
        .map(|i| average_at(mesh, values, i))
        .collect()
}

/// Copy of `u` with recovered gradient and symmetrised recovered Hessian.
pub fn recover_derivatives<T: Real>(u: &Field<T>) -> Field<T> {
    let mesh = u.mesh();
    let grad = recover_gradient(mesh, u.values());
    let gx: Vec<T> = grad.iter().map(|g| g[0]).collect();
    let gy: Vec<T> = grad.iter().map(|g| g[1]).collect();
    let hx = recover_gradient(mesh, &gx);
    let hy = recover_gradient(mesh, &gy);
    let half = T::lit(0.5);
    let hess = hx
        .iter()
        .zip(&hy)
        .map(|(a, b)| {
            let off = half * (a[1] + b[0]);
            [[a[0], off], [off, b[1]]]
        })
        .collect();
    let mut out = u.clone();
    out.gradient = Some(grad);
    out.hessian = Some(hess);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, DomainSpec};
    use std::sync::Arc;

    #[test]
    fn affine_and_quadratic_reproduction() {
        for spec in [DomainSpec::disk(1.0, 0.2), DomainSpec::rectangle(1.0, 1.0, 0.1, 0.1)] {
            let m = Arc::new(generate::<f64>(&spec).unwrap());
            let u = recover_derivatives(&Field::from_fn(m.clone(), |x, y| 3.0 * x - 2.0 * y));
            for (g, h) in u
                .recovered_gradient()
                .unwrap()
                .iter()
                .zip(u.recovered_hessian().unwrap())
            {
                assert!((g[0] - 3.0).abs() < 1e-10 && (g[1] + 2.0).abs() < 1e-10);
                assert!(h.iter().flatten().all(|x| x.abs() < 1e-8));
            }
            let q = recover_derivatives(&Field::from_fn(m, |x, y| 0.5 * (x * x + y * y)));
            for h in q.recovered_hessian().unwrap() {
                assert!((h[0][0] - 1.0).abs() < 1e-8 && (h[1][1] - 1.0).abs() < 1e-8 && h[0][1].abs() < 1e-8);
            }
        }
    }
}
