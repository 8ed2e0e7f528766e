//! Sampled-template hybrid closed loop.
//!
//! Flow (timer `s < delta`): plant and observer driven by `u = mu R v(s)`,
//! with `mu`, `R` frozen. Jump (`s = delta`): `s <- 0`,
//! `mu <- |lambda(xhat)|`, `R <- rotation_to(lambda(xhat))`.
//!
//! The observer error `eps = xhat - x` obeys the linear homogeneous equation
//! `eps' = (A(u) - S^{-1} C'C) eps`, so it is integrated as
//! `eps = exp(sigma) eta` with `|eta| = 1` renormalized after every step.
//! This keeps the error exact in relative terms long after `xhat - x` would
//! have cancelled to zero in floating point.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{is_spd, orthogonality_defect, sym_eig_extremes};
use crate::observer::{gain_rhs, gain_solve};
use crate::ode::try_rk4_step;
use crate::system::{Evaluated, StateAffineSystem};
use crate::templates::{TemplateFamily, ORTHO_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct LoopState {
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    /// Observer gain `S`.
    pub gain: DMatrix<f64>,
    /// Sampling timer `s`, in `[0, delta]`.
    pub timer: f64,
    pub mu: f64,
    pub rotation: DMatrix<f64>,
    pub jumps: usize,
}

impl LoopState {
    /// State with `mu = 0` and `R = I`.
    pub fn initial(x: DVector<f64>, xhat: DVector<f64>, gain: DMatrix<f64>, timer: f64, p: usize) -> Self {
        LoopState {
            x,
            xhat,
            gain,
            timer,
            mu: 0.0,
            rotation: DMatrix::identity(p, p),
            jumps: 0,
        }
    }
}

pub type CustomLaw = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum FeedbackKind {
    /// `lambda(x) = K x`.
    Linear(DMatrix<f64>),
    /// Any map with `lambda(0) = 0`.
    Custom(CustomLaw),
}

#[derive(Clone)]
pub struct FeedbackLaw {
    pub kind: FeedbackKind,
    pub saturation: Option<f64>,
}

impl fmt::Debug for FeedbackLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            FeedbackKind::Linear(k) => format!("Linear({k:?})"),
            FeedbackKind::Custom(_) => "Custom(..)".to_string(),
        };
        f.debug_struct("FeedbackLaw")
            .field("kind", &kind)
            .field("saturation", &self.saturation)
            .finish()
    }
}

impl FeedbackLaw {
    pub fn linear(k: DMatrix<f64>) -> Self {
        FeedbackLaw {
            kind: FeedbackKind::Linear(k),
            saturation: None,
        }
    }

    pub fn custom(f: CustomLaw) -> Self {
        FeedbackLaw {
            kind: FeedbackKind::Custom(f),
            saturation: None,
        }
    }

    pub fn with_saturation(mut self, radius: Option<f64>) -> Self {
        self.saturation = radius;
        self
    }

    /// `lambda(sat(xhat))`.
    pub fn eval(&self, xhat: &DVector<f64>) -> DVector<f64> {
        let z = saturate(xhat, self.saturation);
        match &self.kind {
            FeedbackKind::Linear(k) => k * z,
            FeedbackKind::Custom(f) => f(&z),
        }
    }

    /// Upper bound of `|lambda(sat(z))|` over `|z| <= radius`, when one is
    /// available in closed form.
    pub fn sup_on_ball(&self, radius: f64) -> Option<f64> {
        let r = self.saturation.map_or(radius, |rho| radius.min(rho));
        match &self.kind {
            FeedbackKind::Linear(k) => Some(k.clone().singular_values().max() * r),
            FeedbackKind::Custom(_) => None,
        }
    }

    fn validate(&self, n: usize, p: usize) -> Result<()> {
        if let Some(rho) = self.saturation {
            if !(rho > 0.0) {
                return Err(Error::Validation(format!("saturation radius must be positive, got {rho}")));
            }
        }
        if let FeedbackKind::Linear(k) = &self.kind {
            if k.nrows() != p || k.ncols() != n {
                return Err(Error::Dimension(format!(
                    "feedback matrix is {}x{}, expected {p}x{n}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let at_zero = self.eval(&DVector::zeros(n));
        if at_zero.len() != p {
            return Err(Error::Dimension(format!("feedback returns {} values, expected {p}", at_zero.len())));
        }
        if at_zero.amax() > 1e-12 {
            return Err(Error::Validation("feedback must vanish at the origin".into()));
        }
        Ok(())
    }
}

/// Radial clamp onto the ball of radius `rho`.
pub fn saturate(x: &DVector<f64>, rho: Option<f64>) -> DVector<f64> {
    match rho {
        Some(rho) if x.norm() > rho => x * (rho / x.norm()),
        _ => x.clone(),
    }
}

/// An orthogonal `R` with `R (|v|, 0, ..., 0)' = v`: the Householder
/// reflection swapping `e1` and `v/|v|`, or the identity when none is needed.
pub fn rotation_to(v: &DVector<f64>) -> DMatrix<f64> {
    let p = v.len();
    let norm = v.norm();
    let eye = DMatrix::identity(p, p);
    if norm == 0.0 {
        return eye;
    }
    let w = v / norm;
    let tail: f64 = w.iter().skip(1).map(|x| x * x).sum();
    if tail == 0.0 && w[0] > 0.0 {
        return eye;
    }
    // u = e1 - w; 1 - w1 rewritten to avoid cancellation when w1 is near 1.
    let mut u = -&w;
    u[0] = if w[0] > 0.0 { tail / (1.0 + w[0]) } else { 1.0 - w[0] };
    let uu = u.norm_squared();
    eye - (&u * u.transpose()) * (2.0 / uu)
}

fn jump_update(xhat: &DVector<f64>, law: &FeedbackLaw) -> (f64, DMatrix<f64>) {
    let lam = law.eval(xhat);
    (lam.norm(), rotation_to(&lam))
}

/// Reset map: `x`, `xhat`, `S` are copied untouched.
pub fn jump(state: &LoopState, law: &FeedbackLaw) -> LoopState {
    let (mu, rotation) = jump_update(&state.xhat, law);
    LoopState {
        timer: 0.0,
        mu,
        rotation,
        jumps: state.jumps + 1,
        ..state.clone()
    }
}

/// One recorded point of the hybrid time domain.
#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    pub j: usize,
    pub state: LoopState,
    pub u: DVector<f64>,
    /// `ln |xhat - x|`, `-inf` when the error is zero.
    pub err_log: f64,
    /// `(xhat - x) / |xhat - x|`, zero when the error is zero.
    pub err_dir: DVector<f64>,
    pub s_min: f64,
    pub s_max: f64,
}

impl Sample {
    pub fn err_norm(&self) -> f64 {
        self.err_log.exp()
    }

    pub fn log10_err_norm(&self) -> f64 {
        self.err_log / std::f64::consts::LN_10
    }

    pub fn err(&self) -> DVector<f64> {
        &self.err_dir * self.err_log.exp()
    }

    /// `ln(eps' S eps)`.
    pub fn lyapunov_log(&self) -> f64 {
        2.0 * self.err_log + self.err_dir.dot(&(&self.state.gain * &self.err_dir)).ln()
    }
}

#[derive(Clone, Debug)]
pub struct HybridTrajectory {
    pub theta: f64,
    pub delta: f64,
    pub samples: Vec<Sample>,
    pub jump_times: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub final_t: f64,
    pub final_x_norm: f64,
    pub final_err_norm: f64,
    pub final_log10_err_norm: f64,
    pub jump_count: usize,
    pub samples: usize,
}

impl HybridTrajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    pub fn summary(&self) -> SimulationSummary {
        let last = self.last();
        SimulationSummary {
            final_t: last.t,
            final_x_norm: last.state.x.norm(),
            final_err_norm: last.err_norm(),
            final_log10_err_norm: last.log10_err_norm(),
            jump_count: last.j,
            samples: self.samples.len(),
        }
    }

    /// Largest `|x|` or `|xhat|` over all samples.
    pub fn max_state_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.state.x.norm().max(s.state.xhat.norm()))
            .fold(0.0, f64::max)
    }

    /// Largest increase of `ln(eps' S eps) + theta t` between consecutive
    /// samples with `t >= t0`; nonpositive when the weighted Lyapunov
    /// function is nonincreasing.
    pub fn lyapunov_increase(&self, t0: f64) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[0].t >= t0 && w[0].err_log.is_finite() && w[1].err_log.is_finite())
            .map(|w| w[1].lyapunov_log() + self.theta * w[1].t - w[0].lyapunov_log() - self.theta * w[0].t)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest value of `ln|eps(t)| - ln(bound(t))` over samples with
    /// `t >= t0`, where
    /// `bound(t) = exp(-theta (t - t0) / 2) sqrt(S_max(t0) / S_min(t)) |eps(t0)|`.
    /// Returns `None` when no sample sits at `t0`.
    pub fn error_bound_excess(&self, t0: f64) -> Option<f64> {
        let tol = 1e-9 * self.delta;
        let start = self.samples.iter().position(|s| (s.t - t0).abs() <= tol)?;
        let s0 = &self.samples[start];
        let excess = self.samples[start..]
            .iter()
            .filter(|s| s.err_log.is_finite())
            .map(|s| {
                let log_bound =
                    -self.theta * (s.t - s0.t) / 2.0 + 0.5 * (s0.s_max.ln() - s.s_min.ln()) + s0.err_log;
                s.err_log - log_bound
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Some(excess)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let first = &self.samples[0];
        let n = first.state.x.len();
        let p = first.u.len();
        let mut header = vec!["t".to_string(), "j".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("xhat_{i}")));
        header.push("err_norm".into());
        header.push("log10_err_norm".into());
        header.extend((1..=p).map(|i| format!("u_{i}")));
        for h in ["s_timer", "mu", "S_min_eig", "S_max_eig"] {
            header.push(h.into());
        }
        writeln!(w, "{}", header.join(","))?;
        let num = |x: f64| format!("{x:.16e}");
        for s in &self.samples {
            let mut row = vec![num(s.t), s.j.to_string()];
            row.extend(s.state.x.iter().map(|&v| num(v)));
            row.extend(s.state.xhat.iter().map(|&v| num(v)));
            row.push(num(s.err_norm()));
            row.push(num(s.log10_err_norm()));
            row.extend(s.u.iter().map(|&v| num(v)));
            row.push(num(s.state.timer));
            row.push(num(s.state.mu));
            row.push(num(s.s_min));
            row.push(num(s.s_max));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Integration state: plant, normalized error direction, gain.
type Flow = (DVector<f64>, DVector<f64>, DMatrix<f64>);

struct Internal {
    x: DVector<f64>,
    /// The configured estimate, reported verbatim until the first flow step.
    xhat_init: Option<DVector<f64>>,
    eta: DVector<f64>,
    sigma: f64,
    gain: DMatrix<f64>,
    timer: f64,
    mu: f64,
    rotation: DMatrix<f64>,
    jumps: usize,
}

impl Internal {
    fn from_state(init: &LoopState) -> Self {
        let eps = &init.xhat - &init.x;
        let r = eps.norm();
        let (sigma, eta) = if r > 0.0 { (r.ln(), eps / r) } else { (f64::NEG_INFINITY, eps) };
        Internal {
            x: init.x.clone(),
            xhat_init: Some(init.xhat.clone()),
            eta,
            sigma,
            gain: init.gain.clone(),
            timer: init.timer,
            mu: init.mu,
            rotation: init.rotation.clone(),
            jumps: init.jumps,
        }
    }

    fn xhat(&self) -> DVector<f64> {
        if let Some(xhat) = &self.xhat_init {
            return xhat.clone();
        }
        if self.sigma == f64::NEG_INFINITY {
            self.x.clone()
        } else {
            &self.x + &self.eta * self.sigma.exp()
        }
    }

    fn sample(&self, t: f64, u: DVector<f64>) -> Sample {
        let (s_min, s_max) = sym_eig_extremes(&self.gain);
        Sample {
            t,
            j: self.jumps,
            state: LoopState {
                x: self.x.clone(),
                xhat: self.xhat(),
                gain: self.gain.clone(),
                timer: self.timer,
                mu: self.mu,
                rotation: self.rotation.clone(),
                jumps: self.jumps,
            },
            u,
            err_log: self.sigma,
            err_dir: self.eta.clone(),
            s_min,
            s_max,
        }
    }

    fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
            && self.eta.iter().all(|v| v.is_finite())
            && self.gain.iter().all(|v| v.is_finite())
            && self.sigma < f64::INFINITY
            && self.xhat().iter().all(|v| v.is_finite())
    }
}

fn flow_rhs(e: &Evaluated, y: &Flow, theta: f64) -> Result<Flow> {
    let (x, eta, gain) = y;
    let dx = &e.a * x + &e.b;
    let deta = &e.a * eta - gain_solve(gain, &(&e.ctc * eta))?;
    Ok((dx, deta, gain_rhs(e, gain, theta)))
}

/// Simulates the closed loop on `[0, t_final]`.
///
/// Each template segment is split into `substeps` RK4 steps, so the grid
/// contains every template breakpoint and every jump time
/// `delta - s(0) + i delta`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    sys: &StateAffineSystem,
    family: &TemplateFamily,
    law: &FeedbackLaw,
    theta: f64,
    delta: f64,
    init: &LoopState,
    t_final: f64,
    substeps: usize,
) -> Result<HybridTrajectory> {
    let (n, p) = (sys.n(), sys.p());
    let template = family.generate(delta)?;
    if family.dim() != p {
        return Err(Error::Dimension(format!("template dimension {} but system has {p} inputs", family.dim())));
    }
    law.validate(n, p)?;
    if !(theta > 0.0) {
        return Err(Error::Argument(format!("theta must be positive, got {theta}")));
    }
    if substeps == 0 {
        return Err(Error::Argument("substeps must be at least 1".into()));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Argument(format!("final time must be finite and nonnegative, got {t_final}")));
    }
    if init.x.len() != n || init.xhat.len() != n || init.gain.shape() != (n, n) || init.rotation.shape() != (p, p) {
        return Err(Error::Dimension("initial state does not match the system".into()));
    }
    if !is_spd(&init.gain, 1e-10) {
        return Err(Error::Validation("initial gain must be symmetric positive-definite".into()));
    }
    if !(init.timer >= 0.0 && init.timer <= delta) {
        return Err(Error::Validation(format!("initial timer {} outside [0, {delta}]", init.timer)));
    }
    if !(init.mu >= 0.0) || orthogonality_defect(&init.rotation) > ORTHO_TOL {
        return Err(Error::Validation("initial mu must be nonnegative and R orthogonal".into()));
    }

    let levels = template.levels();
    let mut st = Internal::from_state(init);
    let s0 = init.timer;
    let input = |st: &Internal, k: usize| (&st.rotation * &levels[k]) * st.mu;
    let period_inputs = |st: &Internal| -> Result<(Vec<DVector<f64>>, Vec<Evaluated>)> {
        let us: Vec<DVector<f64>> = (0..levels.len()).map(|k| input(st, k)).collect();
        let evals = us.iter().map(|u| sys.at(u.as_slice())).collect::<Result<Vec<_>>>()?;
        Ok((us, evals))
    };

    let mut samples = vec![st.sample(0.0, input(&st, template.segment_index(s0)?))];
    let mut jump_times = Vec::new();
    // Time at which the current period's timer read 0.
    let mut period_start = -s0;
    // Jumps so far; the current period ends at delta - s0 + done * delta.
    let mut done = 0usize;
    let mut t = 0.0;
    let (mut us, mut evals) = period_inputs(&st)?;

    'outer: loop {
        if st.timer >= delta {
            if t >= t_final {
                break;
            }
            let (mu, rotation) = jump_update(&st.xhat(), law);
            st.mu = mu;
            st.rotation = rotation;
            st.timer = 0.0;
            st.jumps += 1;
            done += 1;
            jump_times.push(t);
            period_start = t;
            (us, evals) = period_inputs(&st)?;
            samples.push(st.sample(t, us[0].clone()));
        }
        if t >= t_final {
            break;
        }
        for piece in template.pieces(st.timer, delta)? {
            let e = &evals[piece.segment];
            let h = (piece.end - piece.start) / substeps as f64;
            for i in 0..substeps {
                let mut node = if i + 1 == substeps { piece.end } else { piece.start + h * (i + 1) as f64 };
                let mut t_next = if node == delta {
                    (delta - s0) + done as f64 * delta
                } else {
                    period_start + node
                };
                let mut step = node - st.timer;
                let last = t_next >= t_final - 1e-9 * h;
                if last {
                    // Shorten the step only when t_final is off the grid.
                    if (t_next - t_final).abs() > 1e-9 * h {
                        step = t_final - t;
                        node = (st.timer + step).min(delta);
                    }
                    t_next = t_final;
                }
                let y: Flow = (st.x.clone(), st.eta.clone(), st.gain.clone());
                let (x, eta, gain) = try_rk4_step(&y, step, |y| flow_rhs(e, y, theta))?;
                let r = eta.norm();
                st.x = x;
                st.xhat_init = None;
                st.gain = gain;
                if r > 0.0 {
                    st.sigma += r.ln();
                    st.eta = eta / r;
                } else {
                    st.eta = eta;
                }
                st.timer = node;
                t = t_next;
                if !st.is_finite() {
                    return Err(Error::Divergence {
                        t,
                        last_valid: Box::new(samples.last().cloned().expect("initial sample recorded")),
                    });
                }
                let k = template.segment_index(node)?;
                samples.push(st.sample(t, us[k].clone()));
                if last {
                    break 'outer;
                }
            }
        }
    }
    Ok(HybridTrajectory {
        theta,
        delta,
        samples,
        jump_times,
    })
}
