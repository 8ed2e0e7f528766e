//! State-affine systems `x' = A(u)x + b(u)`, `y = C(u)x` with polynomial
//! dependence on the input, together with their transition matrices,
//! observability Gramians and Kalman observability matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{numeric_rank, singular_values, symmetrize};
use crate::ode::rk4_step;
use crate::poly::{Degree, MultiPoly, PolyMatrix};
use crate::signal::{integrate, InputSignal};

/// Relative singular-value threshold used for numeric rank decisions.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct StateAffineSystem {
    n: usize,
    m: usize,
    p: usize,
    a: PolyMatrix,
    c: PolyMatrix,
    b: Vec<MultiPoly>,
}

/// System matrices at a fixed input value.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `C'C`, used by every Gramian-type integrand.
    pub ctc: DMatrix<f64>,
}

/// An `n`-row selection of the Kalman matrix with nonzero determinant.
#[derive(Clone, Debug)]
pub struct FullRankMinor {
    pub rows: Vec<usize>,
    pub det: MultiPoly,
    pub degree: Degree,
    pub degree_bound: u32,
}

impl StateAffineSystem {
    pub fn new(a: PolyMatrix, c: PolyMatrix, b: Vec<MultiPoly>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, must be square", a.rows(), a.cols())));
        }
        if c.cols() != n {
            return Err(Error::Dimension(format!("C has {} columns, expected {n}", c.cols())));
        }
        if b.len() != n {
            return Err(Error::Dimension(format!("b has {} entries, expected {n}", b.len())));
        }
        let p = a.num_vars();
        if p == 0 {
            return Err(Error::Dimension("systems need at least one input".into()));
        }
        if c.num_vars() != p || b.iter().any(|e| e.num_vars() != p) {
            return Err(Error::Dimension("A, C and b must share the input dimension".into()));
        }
        Ok(StateAffineSystem {
            n,
            m: c.rows(),
            p,
            a,
            c,
            b,
        })
    }

    /// Builds a system with input-independent `A` and `C` and `b = 0`.
    pub fn constant(a: &DMatrix<f64>, c: &DMatrix<f64>, p: usize) -> Result<Self> {
        let n = a.nrows();
        Self::new(
            PolyMatrix::from_constant(a, p),
            PolyMatrix::from_constant(c, p),
            vec![MultiPoly::zero(p); n],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn a(&self) -> &PolyMatrix {
        &self.a
    }

    pub fn c(&self) -> &PolyMatrix {
        &self.c
    }

    pub fn b(&self) -> &[MultiPoly] {
        &self.b
    }

    pub fn at(&self, u: &[f64]) -> Result<Evaluated> {
        let a = self.a.eval(u)?;
        let c = self.c.eval(u)?;
        let b = DVector::from_iterator(self.n, self.b.iter().map(|e| e.eval(u)).collect::<Result<Vec<_>>>()?);
        let ctc = c.transpose() * &c;
        Ok(Evaluated { a, c, b, ctc })
    }

    /// Evaluates the system once per segment of `signal`.
    pub fn along(&self, signal: &InputSignal) -> Result<Vec<Evaluated>> {
        if signal.dim() != self.p {
            return Err(Error::Dimension(format!(
                "input signal has dimension {}, system expects {}",
                signal.dim(),
                self.p
            )));
        }
        signal.levels().iter().map(|u| self.at(u.as_slice())).collect()
    }

    /// `n deg C + n(n-1)/2 deg A`, with the degree of a zero matrix taken as 0.
    pub fn degree_bound(&self) -> u32 {
        let n = self.n as u32;
        let deg_c = self.c.degree().finite().unwrap_or(0);
        let deg_a = self.a.degree().finite().unwrap_or(0);
        n * deg_c + n * (n - 1) / 2 * deg_a
    }

    /// Stacked blocks `C, CA, ..., CA^{n-1}` as an `mn x n` polynomial matrix.
    pub fn kalman_matrix(&self) -> Result<PolyMatrix> {
        let mut block = self.c.clone();
        let mut out = block.clone();
        for _ in 1..self.n {
            block = block.mul(&self.a)?;
            out = out.vstack(&block)?;
        }
        Ok(out)
    }

    pub fn kalman_rank_at(&self, u: &[f64]) -> Result<usize> {
        Ok(numeric_rank(&self.kalman_matrix()?.eval(u)?, RANK_TOL))
    }

    /// Picks `n` rows of the Kalman matrix that are independent at `u = 0`
    /// and returns their symbolic determinant.
    pub fn find_full_rank_minor(&self) -> Result<FullRankMinor> {
        let kalman = self.kalman_matrix()?;
        let at_zero = kalman.eval(&vec![0.0; self.p])?;
        let rank = numeric_rank(&at_zero, RANK_TOL);
        if rank < self.n {
            return Err(Error::NotObservableAtTarget(format!(
                "Kalman matrix at u = 0 has rank {rank} < n = {}",
                self.n
            )));
        }
        let mut rows: Vec<usize> = Vec::with_capacity(self.n);
        let mut current = 0;
        for r in 0..kalman.rows() {
            if rows.len() == self.n {
                break;
            }
            let mut trial = rows.clone();
            trial.push(r);
            let sub = at_zero.select_rows(trial.iter());
            let trial_rank = numeric_rank(&sub, RANK_TOL);
            if trial_rank > current {
                rows = trial;
                current = trial_rank;
            }
        }
        let det = kalman.select_rows(&rows)?.det()?;
        if det.is_zero() || det.eval(&vec![0.0; self.p])? == 0.0 {
            return Err(Error::NotObservableAtTarget(
                "selected minor vanishes at u = 0".into(),
            ));
        }
        Ok(FullRankMinor {
            rows,
            degree: det.degree(),
            det,
            degree_bound: self.degree_bound(),
        })
    }
}

/// `Phi_u(t, s)`: solution of `d/dt Phi = A(u(t)) Phi`, `Phi(s, s) = I`.
/// Either time order is accepted.
pub fn transition_matrix(
    sys: &StateAffineSystem,
    signal: &InputSignal,
    s: f64,
    t: f64,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    let evals = sys.along(signal)?;
    let eye = DMatrix::identity(sys.n(), sys.n());
    integrate(signal, s, t, substeps, eye, |k, phi: &DMatrix<f64>| &evals[k].a * phi)
}

/// Backward observability Gramian `Gamma_u(t, s)` for `s <= t`.
///
/// Integrates `Xi' = A Xi` and `G' = -Xi' C'C Xi` backward from `Xi(t) = I`,
/// `G(t) = 0`, so `Xi(tau) = Phi(tau, t)` and `G(s) = Gamma_u(t, s)`. No
/// transition matrix is inverted.
pub fn gramian(
    sys: &StateAffineSystem,
    signal: &InputSignal,
    s: f64,
    t: f64,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    if s > t {
        return Err(Error::Argument(format!("gramian needs s <= t, got s = {s}, t = {t}")));
    }
    let n = sys.n();
    let evals = sys.along(signal)?;
    let init = (DMatrix::identity(n, n), DMatrix::zeros(n, n));
    let (_, g) = integrate(signal, t, s, substeps, init, |k, (xi, _): &(DMatrix<f64>, DMatrix<f64>)| {
        let e = &evals[k];
        (&e.a * xi, -(xi.transpose() * &e.ctc * xi))
    })?;
    Ok(symmetrize(&g))
}

/// Smallest eigenvalue of the Gramian over `[0, horizon]` for a constant input.
///
/// Evaluated in square-root form: composite Simpson on `2 substeps` panels
/// gives `Gamma = M'M` with rows `sqrt(w_k) C Phi(tau_k, horizon)`, and the
/// result is `sigma_min(M)^2`. Forming `Gamma` would square the condition
/// number and lose small eigenvalues once its spread exceeds `1 / eps`.
pub fn constant_input_min_eig(
    sys: &StateAffineSystem,
    u: &[f64],
    horizon: f64,
    substeps: usize,
) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
    }
    if substeps == 0 {
        return Err(Error::Argument("substeps must be at least 1".into()));
    }
    let e = sys.at(u)?;
    let (n, m) = (sys.n(), sys.m());
    let panels = 2 * substeps;
    let h = horizon / panels as f64;
    let mut factor = DMatrix::zeros((panels + 1) * m, n);
    // Xi(tau) = Phi(tau, horizon), stepped backward from the identity.
    let mut xi = DMatrix::identity(n, n);
    for k in 0..=panels {
        let w = h / 3.0 * if k == 0 || k == panels { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        factor.rows_mut(k * m, m).copy_from(&((&e.c * &xi) * w.sqrt()));
        if k < panels {
            xi = rk4_step(&xi, -h, |x: &DMatrix<f64>| &e.a * x);
        }
    }
    let smin = singular_values(&factor).into_iter().fold(f64::INFINITY, f64::min);
    Ok(if factor.nrows() < n { 0.0 } else { smin * smin })
}

/// Observability for the constant input `u`, decided by the Gramian over
/// `[0, horizon]`.
pub fn observable_at(
    sys: &StateAffineSystem,
    u: &[f64],
    horizon: f64,
    tol: f64,
    substeps: usize,
) -> Result<bool> {
    Ok(constant_input_min_eig(sys, u, horizon, substeps)? > tol)
}
