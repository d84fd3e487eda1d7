//! Second-variation form `Q(φ) = ∫⟨A(∇u)∇φ,∇φ⟩ + ∮ h′(u)φ² − ∫ f′(u)φ²`
//! and the sign of its smallest generalized eigenvalue.

use std::fmt;
use std::fmt::Write as _;

use crate::eigen::{smallest_eigenpairs, EigenOptions};
use crate::error::Result;
use crate::fem::{assemble_jacobian, mass_matrix, Field, NonlinearProblem};
use crate::linalg::SparseSymmetricMatrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Marginal => "marginal",
        })
    }
}

impl Classification {
    /// Unstable below `−tol`, marginal within `±tol`, stable above `tol`.
    pub fn from_eigenvalue<T: Real>(lambda: T, tol: T) -> Self {
        if lambda < -tol {
            Classification::Unstable
        } else if lambda > tol {
            Classification::Stable
        } else {
            Classification::Marginal
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityReport<T> {
    pub lambda_min: T,
    /// `M`-normalised eigenfunction of `lambda_min`.
    pub eigenfunction: Field<T>,
    pub classification: Classification,
    /// `‖Qφ − λMφ‖/‖Mφ‖`.
    pub eig_residual: T,
    pub tolerance: T,
    pub shift: T,
    pub iterations: usize,
}

impl<T: Real> StabilityReport<T> {
    /// Nonnegative form up to the tolerance: stable or marginal.
    pub fn is_nonnegative(&self) -> bool {
        self.classification != Classification::Unstable
    }

    /// Key-value block with sorted keys.
    pub fn to_kv(&self) -> String {
        let mut rows = [
            ("classification", self.classification.to_string()),
            ("eig_residual", format!("{:.6e}", self.eig_residual)),
            ("eigen_iterations", self.iterations.to_string()),
            ("lambda_min", format!("{:.12e}", self.lambda_min)),
            ("shift", format!("{:.6e}", self.shift)),
            ("tolerance", format!("{:.6e}", self.tolerance)),
        ];
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// The matrix of the stability form; identical to the Newton Jacobian.
pub fn assemble_stability_form<T: Real>(
    problem: &NonlinearProblem<T>,
    u: &Field<T>,
) -> Result<SparseSymmetricMatrix<T>> {
    assemble_jacobian(problem, u)
}

/// Scale of the form used for the default tolerance: `max(1, |Q(1)|/M(1))`.
pub fn form_scale<T: Real>(q: &SparseSymmetricMatrix<T>, m: &SparseSymmetricMatrix<T>) -> T {
    let ones = vec![T::one(); q.dim()];
    (q.bilinear(&ones, &ones) / m.bilinear(&ones, &ones))
        .abs()
        .max(T::one())
}

pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-6;

/// Smallest eigenpair of the form against the mass matrix and its sign.
/// `tolerance = None` uses `1e-6 · form_scale`.
pub fn classify<T: Real>(
    problem: &NonlinearProblem<T>,
    u: &Field<T>,
    tolerance: Option<T>,
) -> Result<StabilityReport<T>> {
    let q = assemble_stability_form(problem, u)?;
    let m = mass_matrix(u.mesh());
    classify_matrices(&q, &m, u, tolerance)
}

pub fn classify_matrices<T: Real>(
    q: &SparseSymmetricMatrix<T>,
    m: &SparseSymmetricMatrix<T>,
    u: &Field<T>,
    tolerance: Option<T>,
) -> Result<StabilityReport<T>> {
    let tol = tolerance.unwrap_or_else(|| T::lit(DEFAULT_RELATIVE_TOLERANCE) * form_scale(q, m));
    let sol = smallest_eigenpairs(q, m, 1, &EigenOptions::default())?;
    let pair = &sol.pairs[0];
    Ok(StabilityReport {
        lambda_min: pair.value,
        eigenfunction: u.with_values(pair.vector.clone())?,
        classification: Classification::from_eigenvalue(pair.value, tol),
        eig_residual: pair.residual,
        tolerance: tol,
        shift: sol.shift,
        iterations: sol.iterations,
    })
}
