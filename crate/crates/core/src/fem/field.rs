use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

/// Nodal values on a mesh, optionally with recovered first and second derivatives.
#[derive(Clone, Debug)]
pub struct Field<T> {
    mesh: Arc<Mesh<T>>,
    values: Vec<T>,
    pub(crate) gradient: Option<Vec<[T; 2]>>,
    pub(crate) hessian: Option<Vec<[[T; 2]; 2]>>,
}

impl<T: Real> Field<T> {
    pub fn new(mesh: Arc<Mesh<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Validation(format!(
                "field has {} values for {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(Self {
            mesh,
            values,
            gradient: None,
            hessian: None,
        })
    }

    pub fn constant(mesh: Arc<Mesh<T>>, c: T) -> Self {
        let n = mesh.n_nodes();
        Self {
            mesh,
            values: vec![c; n],
            gradient: None,
            hessian: None,
        }
    }

    /// Nodal interpolant of `f(x, y)`.
    pub fn from_fn(mesh: Arc<Mesh<T>>, f: impl Fn(T, T) -> T) -> Self {
        let values = mesh.nodes().iter().map(|p| f(p[0], p[1])).collect();
        Self {
            mesh,
            values,
            gradient: None,
            hessian: None,
        }
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Replaces the values and drops recovered derivatives.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.mesh.clone(), values)
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn recovered_gradient(&self) -> Option<&[[T; 2]]> {
        self.gradient.as_deref()
    }

    pub fn recovered_hessian(&self) -> Option<&[[[T; 2]; 2]]> {
        self.hessian.as_deref()
    }

    /// Gradient of the piecewise-linear interpolant on triangle `k`.
    pub fn element_gradient(&self, k: usize) -> [T; 2] {
        super::element_gradient(&self.mesh, &self.values, k)
    }

    /// `∫ u dx / |Ω|` with the P1 interpolant.
    pub fn mean(&self) -> T {
        let lumped = self.mesh.lumped_mass();
        let total: T = lumped.iter().copied().sum();
        lumped.iter().zip(&self.values).map(|(&w, &v)| w * v).sum::<T>() / total
    }

    /// `max |u − mean(u)|`.
    pub fn oscillation(&self) -> T {
        let m = self.mean();
        self.values.iter().fold(T::zero(), |acc, &v| acc.max((v - m).abs()))
    }

    /// `node value` table, one row per node.
    pub fn to_table(&self) -> String {
        let mut s = String::from("# node[-] value[U]\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i} {v:.17e}");
        }
        s
    }

    /// Reads a `node value` table written by [`Field::to_table`].
    pub fn from_table(mesh: Arc<Mesh<T>>, text: &str) -> Result<Self> {
        let mut values = vec![T::nan(); mesh.n_nodes()];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parsed = (|| {
                let i: usize = it.next()?.parse().ok()?;
                let v: T = it.next()?.parse().ok()?;
                Some((i, v))
            })();
            match parsed {
                Some((i, v)) if i < values.len() => values[i] = v,
                _ => {
                    return Err(Error::Validation(format!(
                        "field table line {}: expected `node value`",
                        ln + 1
                    )))
                }
            }
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Validation(format!("field table has no value for node {i}")));
        }
        Self::new(mesh, values)
    }
}
