use std::fmt;
use std::sync::Arc;

use crate::scalar::Real;

type ValueAndSlope<T> = Arc<dyn Fn(T) -> (T, T) + Send + Sync>;

/// Scalar nonlinearity with its derivative, used for both `f` and `h`.
#[derive(Clone)]
pub enum ScalarFn<T: Real> {
    Zero,
    Constant(T),
    /// `c·u`.
    Linear(T),
    /// `s·(u − u³)`.
    Bistable {
        strength: T,
    },
    /// `Σ c_k u^k`, lowest degree first.
    Polynomial(Vec<T>),
    /// `A·e^{r u}`.
    Exponential {
        amplitude: T,
        rate: T,
    },
    Custom {
        name: String,
        eval: ValueAndSlope<T>,
    },
}

impl<T: Real> fmt::Debug for ScalarFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

impl<T: Real> ScalarFn<T> {
    /// `u − u³`.
    pub fn bistable() -> Self {
        ScalarFn::Bistable { strength: T::one() }
    }

    /// Value and derivative at `u`.
    #[inline]
    pub fn eval(&self, u: T) -> (T, T) {
        match self {
            ScalarFn::Zero => (T::zero(), T::zero()),
            ScalarFn::Constant(c) => (*c, T::zero()),
            ScalarFn::Linear(c) => (*c * u, *c),
            ScalarFn::Bistable { strength } => {
                let s = *strength;
                (s * (u - u * u * u), s * (T::one() - T::lit(3.0) * u * u))
            }
            ScalarFn::Polynomial(c) => {
                let (mut v, mut d) = (T::zero(), T::zero());
                for &ck in c.iter().rev() {
                    d = d * u + v;
                    v = v * u + ck;
                }
                (v, d)
            }
            ScalarFn::Exponential { amplitude, rate } => {
                let e = *amplitude * (*rate * u).exp();
                (e, *rate * e)
            }
            ScalarFn::Custom { eval, .. } => eval(u),
        }
    }

    pub fn value(&self, u: T) -> T {
        self.eval(u).0
    }

    pub fn derivative(&self, u: T) -> T {
        self.eval(u).1
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Zero => true,
            ScalarFn::Constant(c) | ScalarFn::Linear(c) => *c == T::zero(),
            ScalarFn::Bistable { strength } => *strength == T::zero(),
            ScalarFn::Polynomial(c) => c.iter().all(|&x| x == T::zero()),
            ScalarFn::Exponential { amplitude, .. } => *amplitude == T::zero(),
            ScalarFn::Custom { .. } => false,
        }
    }

    /// Real roots, for the catalogue entries where they are known in closed form.
    pub fn known_roots(&self) -> Option<Vec<T>> {
        match self {
            ScalarFn::Linear(c) if *c != T::zero() => Some(vec![T::zero()]),
            ScalarFn::Bistable { strength } if *strength != T::zero() => Some(vec![-T::one(), T::zero(), T::one()]),
            ScalarFn::Polynomial(c) if c.len() == 2 && c[1] != T::zero() => Some(vec![-c[0] / c[1]]),
            ScalarFn::Exponential { amplitude, .. } if *amplitude != T::zero() => Some(vec![]),
            ScalarFn::Constant(c) if *c != T::zero() => Some(vec![]),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ScalarFn::Zero => "zero".into(),
            ScalarFn::Constant(c) => format!("constant({c})"),
            ScalarFn::Linear(c) => format!("linear({c})"),
            ScalarFn::Bistable { strength } => format!("bistable({strength})"),
            ScalarFn::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                format!("polynomial({})", parts.join(","))
            }
            ScalarFn::Exponential { amplitude, rate } => format!("exponential({amplitude},{rate})"),
            ScalarFn::Custom { name, .. } => name.clone(),
        }
    }

    /// Largest gap between the derivative and a central difference of the
    /// value over `samples`, relative to `1 + |derivative|`.
    pub fn derivative_mismatch(&self, samples: &[T]) -> T {
        let d = T::lit(1e-5);
        samples
            .iter()
            .map(|&u| {
                let fd = (self.value(u + d) - self.value(u - d)) / (T::lit(2.0) * d);
                (fd - self.derivative(u)).abs() / (T::one() + self.derivative(u).abs())
            })
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_horner() {
        let p = ScalarFn::Polynomial(vec![1.0, -2.0, 0.0, 3.0]);
        let (v, d) = p.eval(2.0);
        assert_eq!(v, 1.0 - 4.0 + 24.0);
        assert_eq!(d, -2.0 + 36.0);
    }

    #[test]
    fn derivatives_match_differences() {
        let grid: Vec<f64> = (-20..=20).map(|k| 0.1 * k as f64).collect();
        for f in [
            ScalarFn::bistable(),
            ScalarFn::Linear(2.0),
            ScalarFn::Polynomial(vec![0.5, 1.0, -1.0, 0.25]),
            ScalarFn::Exponential {
                amplitude: 1.0,
                rate: 1.0,
            },
        ] {
            assert!(f.derivative_mismatch(&grid) < 1e-8, "{f:?}");
        }
    }
}
