//! Kalman-like observer with a Lyapunov-type gain equation
//!
//! ```text
//! xhat' = A(u) xhat + b(u) - S^{-1} C(u)' (C(u) xhat - y)
//! S'    = -A(u)' S - S A(u) - theta S + C(u)' C(u)
//! ```
//!
//! The gain equation is linear in `S`, so besides direct integration it has
//! a closed form through the transition matrix, which the tests use as an
//! independent oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_spd, sym_min_eig, symmetrize};
use crate::ode::rk4_step;
use crate::signal::{integrate, InputSignal};
use crate::system::{gramian, Evaluated, StateAffineSystem};

/// Condition estimate above which the gain is treated as singular.
pub const MAX_GAIN_CONDITION: f64 = 1e14;

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    pub xhat: DVector<f64>,
    pub s: DMatrix<f64>,
}

impl ObserverState {
    pub fn new(xhat: DVector<f64>, s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != xhat.len() || s.ncols() != xhat.len() {
            return Err(Error::Dimension("gain and estimate sizes differ".into()));
        }
        if !is_spd(&s, 1e-10) {
            return Err(Error::Validation("observer gain must be symmetric positive-definite".into()));
        }
        Ok(ObserverState { xhat, s })
    }
}

/// Solves `S z = v` through a Cholesky factorization.
pub fn gain_solve(s: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or(Error::GainSingular { condition: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
    let condition = (hi / lo).powi(2);
    if !(condition <= MAX_GAIN_CONDITION) {
        return Err(Error::GainSingular { condition });
    }
    Ok(chol.solve(v))
}

/// Right-hand side of the gain equation at frozen system matrices.
pub fn gain_rhs(e: &Evaluated, s: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    let m = -(e.a.transpose() * s);
    // m + m' is exactly symmetric, so a symmetric S stays symmetric.
    &m + m.transpose() - s * theta + &e.ctc
}

/// Time derivatives of the observer at input `u` and measurement `y`.
pub fn observer_rhs(
    sys: &StateAffineSystem,
    u: &[f64],
    state: &ObserverState,
    y: &DVector<f64>,
    theta: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let e = sys.at(u)?;
    if y.len() != sys.m() || state.xhat.len() != sys.n() {
        return Err(Error::Dimension("measurement or estimate has the wrong size".into()));
    }
    let innovation = &e.c * &state.xhat - y;
    let correction = gain_solve(&state.s, &(e.c.transpose() * innovation))?;
    let dxhat = &e.a * &state.xhat + &e.b - correction;
    Ok((dxhat, gain_rhs(&e, &state.s, theta)))
}

/// Unique solution of `A(0)'S + S A(0) + theta S = C(0)'C(0)`, found by
/// solving the vectorized `n^2 x n^2` system.
pub fn steady_state_gain(sys: &StateAffineSystem, theta: f64) -> Result<DMatrix<f64>> {
    if !(theta > 0.0) {
        return Err(Error::ThetaTooSmall(format!("theta must be positive, got {theta}")));
    }
    let n = sys.n();
    let e = sys.at(&vec![0.0; sys.p()])?;
    // S(t) converges to the fixed point iff every eigenvalue of A(0) has
    // real part above -theta/2.
    let min_re = e
        .a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    if !(min_re > -theta / 2.0) {
        return Err(Error::ThetaTooSmall(format!(
            "theta = {theta} must exceed 2 * {} (spectral abscissa of -A(0))",
            -min_re
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let at = e.a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye) + DMatrix::identity(n * n, n * n) * theta;
    let rhs = DVector::from_column_slice(e.ctc.as_slice());
    let vec_s = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ThetaTooSmall("vectorized Lyapunov system is singular".into()))?;
    let s = symmetrize(&DMatrix::from_column_slice(n, n, vec_s.as_slice()));
    if s.clone().cholesky().is_none() {
        return Err(Error::ThetaTooSmall("steady-state gain is not positive-definite".into()));
    }
    Ok(s)
}

/// `|A(0)'S + S A(0) + theta S - C(0)'C(0)|` (Frobenius).
pub fn steady_state_residual(sys: &StateAffineSystem, s: &DMatrix<f64>, theta: f64) -> Result<f64> {
    let e = sys.at(&vec![0.0; sys.p()])?;
    Ok((e.a.transpose() * s + s * &e.a + s * theta - &e.ctc).norm())
}

/// Integrates the gain equation from `t0` to `t` on the signal's grid.
pub fn integrate_gain(
    sys: &StateAffineSystem,
    signal: &InputSignal,
    s0: &DMatrix<f64>,
    theta: f64,
    t0: f64,
    t: f64,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    if t < t0 {
        return Err(Error::Argument(format!("need t0 <= t, got t0 = {t0}, t = {t}")));
    }
    let evals = sys.along(signal)?;
    integrate(signal, t0, t, substeps, symmetrize(s0), |k, s: &DMatrix<f64>| {
        gain_rhs(&evals[k], s, theta)
    })
}

/// Closed-form gain
/// `e^{-theta(t-t0)} Phi(t0,t)' S0 Phi(t0,t) + int e^{-theta(t-tau)} Phi(tau,t)' C'C Phi(tau,t) dtau`
/// with the integral done by composite Simpson on `2 * substeps` panels per
/// constant piece.
pub fn variation_of_constants_gain(
    sys: &StateAffineSystem,
    signal: &InputSignal,
    s0: &DMatrix<f64>,
    theta: f64,
    t0: f64,
    t: f64,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    if t < t0 {
        return Err(Error::Argument(format!("need t0 <= t, got t0 = {t0}, t = {t}")));
    }
    if substeps == 0 {
        return Err(Error::Argument("substeps must be at least 1".into()));
    }
    let n = sys.n();
    let evals = sys.along(signal)?;
    // psi(tau) = Phi(tau, t0); the integral is conjugated by psi(t)^{-1} at the end.
    let mut psi = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let integrand = |tau: f64, e: &Evaluated, psi: &DMatrix<f64>| {
        (psi.transpose() * &e.ctc * psi) * (-theta * (t - tau)).exp()
    };
    for piece in signal.pieces(t0, t)? {
        let e = &evals[piece.segment];
        let panels = 2 * substeps;
        let h = (piece.end - piece.start) / panels as f64;
        let mut sum = integrand(piece.start, e, &psi);
        for i in 1..=panels {
            psi = rk4_step(&psi, h, |y| &e.a * y);
            let tau = if i == panels { piece.end } else { piece.start + h * i as f64 };
            let w = if i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += integrand(tau, e, &psi) * w;
        }
        acc += sum * (h / 3.0);
    }
    let inv = psi
        .try_inverse()
        .ok_or_else(|| Error::Validation("transition matrix became singular".into()))?;
    let inner = symmetrize(s0) * (-theta * (t - t0)).exp() + acc;
    Ok(symmetrize(&(inv.transpose() * inner * inv)))
}

/// `e^{-theta (t1 - t0)} lambda_min(Gamma_u(t1, t0))`, clamped at 0.
///
/// For any gain flow started positive-definite at `t0`, this bounds the
/// smallest eigenvalue of `S(t1)` from below. `t` is the evaluation time of
/// the caller and only has to satisfy `t1 <= t`.
pub fn smin_lower_bound(
    sys: &StateAffineSystem,
    signal: &InputSignal,
    theta: f64,
    t0: f64,
    t1: f64,
    t: f64,
    substeps: usize,
) -> Result<f64> {
    if !(t0 <= t1 && t1 <= t) {
        return Err(Error::Argument(format!(
            "need t0 <= t1 <= t, got {t0}, {t1}, {t}"
        )));
    }
    let g = gramian(sys, signal, t0, t1, substeps)?;
    Ok((-theta * (t1 - t0)).exp() * sym_min_eig(&g).max(0.0))
}
