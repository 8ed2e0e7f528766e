//! Fixed-step classical Runge-Kutta integration.
//!
//! All right-hand sides in this crate are autonomous once the input level is
//! frozen, so the stepper only sees the state.

use nalgebra::{DMatrix, DVector};

/// A state that can be linearly combined.
pub trait OdeState: Clone {
    /// `self + sum(c_i * x_i)`.
    fn add_scaled(&self, terms: &[(f64, &Self)]) -> Self;
}

impl OdeState for DVector<f64> {
    fn add_scaled(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for (c, x) in terms {
            out.axpy(*c, x, 1.0);
        }
        out
    }
}

impl OdeState for DMatrix<f64> {
    fn add_scaled(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for (c, x) in terms {
            out += *x * *c;
        }
        out
    }
}

impl<A: OdeState, B: OdeState> OdeState for (A, B) {
    fn add_scaled(&self, terms: &[(f64, &Self)]) -> Self {
        let a: Vec<(f64, &A)> = terms.iter().map(|(c, x)| (*c, &x.0)).collect();
        let b: Vec<(f64, &B)> = terms.iter().map(|(c, x)| (*c, &x.1)).collect();
        (self.0.add_scaled(&a), self.1.add_scaled(&b))
    }
}

impl<A: OdeState, B: OdeState, C: OdeState> OdeState for (A, B, C) {
    fn add_scaled(&self, terms: &[(f64, &Self)]) -> Self {
        let a: Vec<(f64, &A)> = terms.iter().map(|(c, x)| (*c, &x.0)).collect();
        let b: Vec<(f64, &B)> = terms.iter().map(|(c, x)| (*c, &x.1)).collect();
        let cc: Vec<(f64, &C)> = terms.iter().map(|(c, x)| (*c, &x.2)).collect();
        (self.0.add_scaled(&a), self.1.add_scaled(&b), self.2.add_scaled(&cc))
    }
}

/// One RK4 step of size `h` (negative `h` integrates backward).
pub fn rk4_step<T, F>(y: &T, h: f64, f: F) -> T
where
    T: OdeState,
    F: Fn(&T) -> T,
{
    let k1 = f(y);
    let k2 = f(&y.add_scaled(&[(0.5 * h, &k1)]));
    let k3 = f(&y.add_scaled(&[(0.5 * h, &k2)]));
    let k4 = f(&y.add_scaled(&[(h, &k3)]));
    y.add_scaled(&[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)])
}

/// Fallible variant used where the right-hand side can fail (observer gain).
pub fn try_rk4_step<T, F, E>(y: &T, h: f64, f: F) -> Result<T, E>
where
    T: OdeState,
    F: Fn(&T) -> Result<T, E>,
{
    let k1 = f(y)?;
    let k2 = f(&y.add_scaled(&[(0.5 * h, &k1)]))?;
    let k3 = f(&y.add_scaled(&[(0.5 * h, &k2)]))?;
    let k4 = f(&y.add_scaled(&[(h, &k3)]))?;
    Ok(y.add_scaled(&[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)]))
}
