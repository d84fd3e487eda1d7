//! Quasilinear coefficient families `a(t)` and the linearised operator
//! matrix `A(ξ) = a'(|ξ|)/|ξ| ξ⊗ξ + a(|ξ|) I`.

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{dot2, norm2, Real};

/// Default magnitude below which a discrete gradient is treated as zero.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-10;

type ScalarMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum FamilyKind<T: Real> {
    /// `a ≡ 1`.
    Laplacian,
    /// `a(t) = t^{p-2}`.
    PLaplacian { p: T },
    /// `a(t) = (1 + t²)^{-1/2}`.
    MeanCurvature,
    /// Piecewise cubic Hermite through tabulated `(t, a, a')`.
    Tabulated(Arc<Tabulated<T>>),
    /// Closed-form user functions; no structural guarantees.
    Custom { a: ScalarMap<T>, a_prime: ScalarMap<T> },
}

impl<T: Real> fmt::Debug for FamilyKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Laplacian => write!(f, "Laplacian"),
            FamilyKind::PLaplacian { p } => write!(f, "PLaplacian {{ p: {p} }}"),
            FamilyKind::MeanCurvature => write!(f, "MeanCurvature"),
            FamilyKind::Tabulated(t) => write!(f, "Tabulated({} samples)", t.t.len()),
            FamilyKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// A coefficient `a` together with its regularity data at `t = 0`.
#[derive(Clone, Debug)]
pub struct CoefficientFamily<T: Real> {
    name: String,
    kind: FamilyKind<T>,
    zero_limit: Option<T>,
    regular_at_zero: bool,
    grad_floor: T,
}

impl<T: Real> CoefficientFamily<T> {
    pub fn laplacian() -> Self {
        Self {
            name: "laplacian".into(),
            kind: FamilyKind::Laplacian,
            zero_limit: Some(T::one()),
            regular_at_zero: true,
            grad_floor: T::lit(DEFAULT_GRAD_FLOOR),
        }
    }

    /// p-Laplacian, `1 < p < ∞`. For `p < 2` the coefficient blows up at the
    /// origin and only nondegenerate gradients are admissible.
    pub fn p_laplacian(p: T) -> Result<Self> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(Error::Domain(format!("p-Laplacian needs 1 < p < inf, got {p}")));
        }
        let two = T::lit(2.0);
        let (zero_limit, regular) = if p > two {
            (Some(T::zero()), true)
        } else if p == two {
            (Some(T::one()), true)
        } else {
            (None, false)
        };
        Ok(Self {
            name: "p-laplacian".into(),
            kind: FamilyKind::PLaplacian { p },
            zero_limit,
            regular_at_zero: regular,
            grad_floor: T::lit(DEFAULT_GRAD_FLOOR),
        })
    }

    pub fn mean_curvature() -> Self {
        Self {
            name: "mean-curvature".into(),
            kind: FamilyKind::MeanCurvature,
            zero_limit: Some(T::one()),
            regular_at_zero: true,
            grad_floor: T::lit(DEFAULT_GRAD_FLOOR),
        }
    }

    pub fn tabulated(name: impl Into<String>, table: Tabulated<T>) -> Self {
        let regular = table.t[0] == T::zero();
        let zero_limit = regular.then(|| table.a[0]);
        Self {
            name: name.into(),
            kind: FamilyKind::Tabulated(Arc::new(table)),
            zero_limit,
            regular_at_zero: regular,
            grad_floor: T::lit(DEFAULT_GRAD_FLOOR),
        }
    }

    /// User family from closed-form `a` and `a'`. `zero_limit` marks it as
    /// regular at zero.
    pub fn custom(
        name: impl Into<String>,
        a: impl Fn(T) -> T + Send + Sync + 'static,
        a_prime: impl Fn(T) -> T + Send + Sync + 'static,
        zero_limit: Option<T>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FamilyKind::Custom {
                a: Arc::new(a),
                a_prime: Arc::new(a_prime),
            },
            zero_limit,
            regular_at_zero: zero_limit.is_some(),
            grad_floor: T::lit(DEFAULT_GRAD_FLOOR),
        }
    }

    pub fn with_grad_floor(mut self, floor: T) -> Self {
        self.grad_floor = floor;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FamilyKind<T> {
        &self.kind
    }

    pub fn zero_limit(&self) -> Option<T> {
        self.zero_limit
    }

    pub fn regular_at_zero(&self) -> bool {
        self.regular_at_zero
    }

    pub fn grad_floor(&self) -> T {
        self.grad_floor
    }

    /// Exponent for the p-Laplacian, `None` otherwise.
    pub fn exponent(&self) -> Option<T> {
        match self.kind {
            FamilyKind::PLaplacian { p } => Some(p),
            _ => None,
        }
    }

    /// Family parameters as `(key, value)` pairs for reports.
    pub fn parameters(&self) -> Vec<(&'static str, T)> {
        match &self.kind {
            FamilyKind::PLaplacian { p } => vec![("p", *p)],
            _ => Vec::new(),
        }
    }

    fn raw_a(&self, t: T) -> T {
        match &self.kind {
            FamilyKind::Laplacian => T::one(),
            FamilyKind::PLaplacian { p } => t.powf(*p - T::lit(2.0)),
            FamilyKind::MeanCurvature => (T::one() + t * t).sqrt().recip(),
            FamilyKind::Tabulated(tab) => tab.eval(t).0,
            FamilyKind::Custom { a, .. } => a(t),
        }
    }

    fn raw_a_prime(&self, t: T) -> T {
        match &self.kind {
            FamilyKind::Laplacian => T::zero(),
            FamilyKind::PLaplacian { p } => {
                let e = *p - T::lit(2.0);
                e * t.powf(e - T::one())
            }
            FamilyKind::MeanCurvature => {
                let s = T::one() + t * t;
                -t / (s * s.sqrt())
            }
            FamilyKind::Tabulated(tab) => tab.eval(t).1,
            FamilyKind::Custom { a_prime, .. } => a_prime(t),
        }
    }

    // closed forms where a + a't would cancel (mean curvature at large t)
    fn raw_lambda1(&self, t: T) -> T {
        match &self.kind {
            FamilyKind::Laplacian => T::one(),
            FamilyKind::PLaplacian { p } => (*p - T::one()) * t.powf(*p - T::lit(2.0)),
            FamilyKind::MeanCurvature => {
                let s = T::one() + t * t;
                (s * s.sqrt()).recip()
            }
            _ => self.raw_a(t) + self.raw_a_prime(t) * t,
        }
    }

    /// `a(t)`; at `t = 0` returns the limit for families regular at zero.
    pub fn eval_a(&self, t: T) -> Result<T> {
        if t > T::zero() {
            Ok(self.raw_a(t))
        } else if t == T::zero() {
            self.zero_limit
                .filter(|_| self.regular_at_zero)
                .ok_or_else(|| Error::Domain(format!("{}: a(0) undefined", self.name)))
        } else {
            Err(Error::Domain(format!("{}: a(t) needs t >= 0, got {t}", self.name)))
        }
    }

    pub fn eval_a_prime(&self, t: T) -> Result<T> {
        if t > T::zero() {
            Ok(self.raw_a_prime(t))
        } else {
            Err(Error::Domain(format!("{}: a'(t) needs t > 0, got {t}", self.name)))
        }
    }

    /// `λ₁(t) = a(t) + a'(t) t`, the eigenvalue of `A(ξ)` along `ξ`.
    pub fn eval_lambda1(&self, t: T) -> Result<T> {
        if t > T::zero() {
            Ok(self.raw_lambda1(t))
        } else {
            Err(Error::Domain(format!("{}: lambda1(t) needs t > 0, got {t}", self.name)))
        }
    }

    /// `a(|ξ|)` with `|ξ| <= grad_floor` treated as zero.
    pub fn a_at(&self, xi: [T; 2]) -> Result<T> {
        let t = norm2(xi);
        if t <= self.grad_floor {
            self.eval_a(T::zero())
        } else {
            Ok(self.raw_a(t))
        }
    }

    /// Flux `a(|ξ|) ξ`.
    pub fn flux(&self, xi: [T; 2]) -> Result<[T; 2]> {
        let a = self.a_at(xi)?;
        Ok([a * xi[0], a * xi[1]])
    }

    pub fn matrix_a(&self, xi: [T; 2]) -> Result<OperatorMatrix<T>> {
        let t = norm2(xi);
        if t <= self.grad_floor {
            let a0 = self.eval_a(T::zero())?;
            return Ok(OperatorMatrix::scaled_identity(a0));
        }
        Ok(OperatorMatrix::spectral(
            self.raw_lambda1(t),
            self.raw_a(t),
            [xi[0] / t, xi[1] / t],
        ))
    }

    /// Samples the structural conditions `a > 0` and `a + a' t > 0`.
    pub fn check_structural(&self, t_grid: &[T]) -> StructuralReport<T> {
        let mut report = StructuralReport::default();
        for &t in t_grid {
            if !(t > T::zero()) {
                report.invalid_points.push(t);
                continue;
            }
            if let FamilyKind::Tabulated(tab) = &self.kind {
                if tab.out_of_range(t) {
                    report.clamped.push(t);
                }
            }
            let a = self.raw_a(t);
            if !(a > T::zero()) {
                report.positivity.push(t);
            }
            if !(a + self.raw_a_prime(t) * t > T::zero()) {
                report.ellipticity.push(t);
            }
        }
        report
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StructuralReport<T> {
    /// Points where `a(t) <= 0`.
    pub positivity: Vec<T>,
    /// Points where `a(t) + a'(t) t <= 0`.
    pub ellipticity: Vec<T>,
    /// Tabulated families only: points outside the sampled range.
    pub clamped: Vec<T>,
    /// Non-positive grid entries, skipped.
    pub invalid_points: Vec<T>,
}

impl<T> StructuralReport<T> {
    pub fn passed(&self) -> bool {
        self.positivity.is_empty() && self.ellipticity.is_empty()
    }
}

/// Symmetric 2×2 matrix `A(ξ)`, kept together with its spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorMatrix<T> {
    pub entries: [[T; 2]; 2],
    spectrum: [T; 2],
}

impl<T: Real> OperatorMatrix<T> {
    pub fn scaled_identity(s: T) -> Self {
        Self {
            entries: [[s, T::zero()], [T::zero(), s]],
            spectrum: [s, s],
        }
    }

    /// `λ_e e⊗e + λ_τ τ⊗τ` for a unit vector `e` and `τ ⊥ e`.
    pub fn spectral(along: T, across: T, e: [T; 2]) -> Self {
        let off = (along - across) * e[0] * e[1];
        Self {
            entries: [
                [along * e[0] * e[0] + across * e[1] * e[1], off],
                [off, along * e[1] * e[1] + across * e[0] * e[0]],
            ],
            spectrum: [along.min(across), along.max(across)],
        }
    }

    /// Symmetric matrix from its entries; the spectrum is computed.
    pub fn from_entries(entries: [[T; 2]; 2]) -> Self {
        let half = T::lit(0.5);
        let mean = half * (entries[0][0] + entries[1][1]);
        let dev = (half * (entries[0][0] - entries[1][1])).hypot(entries[0][1]);
        Self {
            entries,
            spectrum: [mean - dev, mean + dev],
        }
    }

    #[inline]
    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        let m = &self.entries;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// `⟨A v, w⟩`.
    #[inline]
    pub fn form(&self, v: [T; 2], w: [T; 2]) -> T {
        dot2(self.apply(v), w)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [T; 2] {
        self.spectrum
    }
}

/// Tabulated coefficient with cubic Hermite interpolation.
///
/// Slopes come from the tabulated `a'` column, limited Fritsch–Carlson style
/// on intervals where the data is monotone. Evaluation outside the sampled
/// range clamps to the end values and counts the event.
#[derive(Debug)]
pub struct Tabulated<T> {
    t: Vec<T>,
    a: Vec<T>,
    slope: Vec<T>,
    clamp_events: AtomicUsize,
}

impl<T: Real> Tabulated<T> {
    pub fn new(t: Vec<T>, a: Vec<T>, a_prime: Vec<T>) -> Result<Self> {
        if t.len() < 2 || t.len() != a.len() || t.len() != a_prime.len() {
            return Err(Error::Domain("tabulated family needs >= 2 rows of (t, a, a')".into()));
        }
        if t[0] < T::zero() || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "tabulated t must be nonnegative and strictly increasing".into(),
            ));
        }
        let n = t.len();
        let mut scale = vec![T::one(); n];
        let three = T::lit(3.0);
        for k in 0..n - 1 {
            let secant = (a[k + 1] - a[k]) / (t[k + 1] - t[k]);
            if secant == T::zero() {
                continue;
            }
            let al = a_prime[k] / secant;
            let be = a_prime[k + 1] / secant;
            let r = al.hypot(be);
            if al >= T::zero() && be >= T::zero() && r > three {
                let s = three / r;
                scale[k] = scale[k].min(s);
                scale[k + 1] = scale[k + 1].min(s);
            }
        }
        let slope = a_prime.iter().zip(&scale).map(|(&m, &s)| m * s).collect();
        Ok(Self {
            t,
            a,
            slope,
            clamp_events: AtomicUsize::new(0),
        })
    }

    /// Parses a whitespace table with header `t a aprime`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty table".into()))?;
        let cols: Vec<_> = header.split_whitespace().collect();
        if cols != ["t", "a", "aprime"] {
            return Err(perr(hl, format!("expected header `t a aprime`, found `{header}`")));
        }
        let (mut t, mut a, mut ap) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in lines {
            let vals: Vec<T> = line
                .split_whitespace()
                .map(|s| s.parse::<T>().map_err(|_| perr(ln, format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != 3 {
                return Err(perr(ln, format!("expected 3 columns, found {}", vals.len())));
            }
            t.push(vals[0]);
            a.push(vals[1]);
            ap.push(vals[2]);
        }
        Self::new(t, a, ap).map_err(|e| perr(hl, e.to_string()))
    }

    pub fn range(&self) -> (T, T) {
        (self.t[0], self.t[self.t.len() - 1])
    }

    pub fn out_of_range(&self, t: T) -> bool {
        let (lo, hi) = self.range();
        t < lo || t > hi
    }

    /// Number of evaluations that fell outside the table.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events.load(Ordering::Relaxed)
    }

    fn eval(&self, t: T) -> (T, T) {
        let n = self.t.len();
        if self.out_of_range(t) {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            let k = if t < self.t[0] { 0 } else { n - 1 };
            return (self.a[k], T::zero());
        }
        let k = match self.t.partition_point(|&x| x <= t) {
            0 => 0,
            i => (i - 1).min(n - 2),
        };
        let h = self.t[k + 1] - self.t[k];
        let s = (t - self.t[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        let (y0, y1, m0, m1) = (self.a[k], self.a[k + 1], self.slope[k], self.slope[k + 1]);
        let val = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = six * s2 - six * s;
        let d10 = three * s2 - T::lit(4.0) * s + T::one();
        let d01 = six * s - six * s2;
        let d11 = three * s2 - two * s;
        let der = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
        (val, der)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn laplacian_values() {
        let fam = CoefficientFamily::<f64>::laplacian();
        assert_eq!(fam.eval_a(0.7).unwrap(), 1.0);
        assert_eq!(fam.eval_lambda1(3.1).unwrap(), 1.0);
        let m = fam.matrix_a([1.0, 0.0]).unwrap();
        assert_eq!(m.entries, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn p_laplacian_closed_forms() {
        let fam = CoefficientFamily::<f64>::p_laplacian(3.0).unwrap();
        assert_relative_eq!(fam.eval_a(2.0).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(fam.eval_lambda1(2.0).unwrap(), 4.0, max_relative = 1e-15);
        let fam4 = CoefficientFamily::<f64>::p_laplacian(4.0).unwrap();
        let m = fam4.matrix_a([2.0, 0.0]).unwrap();
        assert_relative_eq!(m.entries[0][0], 12.0, max_relative = 1e-14);
        assert_relative_eq!(m.entries[1][1], 4.0, max_relative = 1e-14);
        assert_eq!(m.entries[0][1], 0.0);
    }

    #[test]
    fn mean_curvature_values() {
        let fam = CoefficientFamily::<f64>::mean_curvature();
        assert_eq!(fam.eval_a(0.0).unwrap(), 1.0);
        assert_relative_eq!(fam.eval_lambda1(1.0).unwrap(), 2f64.powf(-1.5), max_relative = 1e-14);
    }

    #[test]
    fn singular_family_rejects_zero() {
        let fam = CoefficientFamily::<f64>::p_laplacian(1.5).unwrap();
        assert!(!fam.regular_at_zero());
        assert!(matches!(fam.eval_a(0.0), Err(Error::Domain(_))));
        assert!(matches!(fam.matrix_a([0.0, 0.0]), Err(Error::Domain(_))));
        assert!(fam.eval_lambda1(0.0).is_err());
        assert!(CoefficientFamily::<f64>::p_laplacian(1.0).is_err());
    }

    #[test]
    fn regular_families_at_zero() {
        let p3 = CoefficientFamily::<f64>::p_laplacian(3.0).unwrap();
        assert_eq!(p3.zero_limit(), Some(0.0));
        assert_eq!(p3.matrix_a([0.0, 0.0]).unwrap().entries, [[0.0; 2]; 2]);
        let p2 = CoefficientFamily::<f64>::p_laplacian(2.0).unwrap();
        assert_eq!(p2.zero_limit(), Some(1.0));
    }

    #[test]
    fn structural_checks() {
        let grid: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
        assert!(CoefficientFamily::p_laplacian(3.0)
            .unwrap()
            .check_structural(&grid)
            .passed());
        assert!(CoefficientFamily::mean_curvature().check_structural(&grid).passed());
        let bad = CoefficientFamily::custom("one-minus-t", |t: f64| 1.0 - t, |_| -1.0, None);
        let rep = bad.check_structural(&[0.5, 2.0]);
        assert_eq!(rep.positivity, vec![2.0]);
        assert!(!rep.passed());
    }

    #[test]
    fn tabulated_reproduces_cubic_data() {
        // a(t) = 1 + t^2 tabulated exactly is reproduced by Hermite cubics.
        let ts: Vec<f64> = (0..=10).map(|k| 0.3 * k as f64).collect();
        let a: Vec<f64> = ts.iter().map(|t| 1.0 + t * t).collect();
        let ap: Vec<f64> = ts.iter().map(|t| 2.0 * t).collect();
        let tab = Tabulated::new(ts, a, ap).unwrap();
        let fam = CoefficientFamily::tabulated("quad", tab);
        assert!(fam.regular_at_zero());
        for &t in &[0.05, 0.77, 1.3, 2.99] {
            assert_relative_eq!(fam.eval_a(t).unwrap(), 1.0 + t * t, max_relative = 1e-12);
            assert_relative_eq!(fam.eval_a_prime(t).unwrap(), 2.0 * t, max_relative = 1e-12);
        }
        let rep = fam.check_structural(&[1.0, 5.0]);
        assert_eq!(rep.clamped, vec![5.0]);
        if let FamilyKind::Tabulated(t) = fam.kind() {
            assert!(t.clamp_events() >= 1);
        }
    }

    #[test]
    fn tabulated_file_format() {
        let text = "t a aprime\n0.5 2.0 -4.0\n1.0 1.0 -1.0\n# comment\n2.0 0.5 -0.25\n";
        let tab = Tabulated::<f64>::parse(text, Path::new("mem")).unwrap();
        assert_eq!(tab.range(), (0.5, 2.0));
        let err = Tabulated::<f64>::parse("t a\n1 2\n", Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = Tabulated::<f64>::parse("t a aprime\n1 2 x\n", Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn operator_matrix_works_in_f32() {
        let fam = CoefficientFamily::<f32>::p_laplacian(4.0).unwrap();
        let ev = fam.matrix_a([2.0, 0.0]).unwrap().eigenvalues();
        assert!((ev[0] - 4.0).abs() < 1e-5 && (ev[1] - 12.0).abs() < 1e-4);
    }
}
