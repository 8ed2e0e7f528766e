//! Piecewise-constant input signals and breakpoint-aligned integration.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ode::{try_rk4_step, OdeState};

/// Piecewise-constant input on `[0, duration]`: level `k` is applied on
/// `[breakpoints[k], breakpoints[k+1])`. The last level also holds at the
/// right endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSignal {
    breakpoints: Vec<f64>,
    levels: Vec<DVector<f64>>,
}

/// Part of an integration interval lying inside one constant segment.
#[derive(Clone, Copy, Debug)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub segment: usize,
}

impl InputSignal {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<DVector<f64>>) -> Result<Self> {
        if levels.is_empty() || breakpoints.len() != levels.len() + 1 {
            return Err(Error::Validation(format!(
                "{} breakpoints for {} levels",
                breakpoints.len(),
                levels.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::Validation("first breakpoint must be 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || !breakpoints.iter().all(|b| b.is_finite()) {
            return Err(Error::Validation("breakpoints must be finite and strictly increasing".into()));
        }
        let p = levels[0].len();
        if levels.iter().any(|l| l.len() != p) {
            return Err(Error::Dimension("levels of differing dimension".into()));
        }
        if levels.iter().any(|l| l.iter().any(|x| !x.is_finite())) {
            return Err(Error::Validation("non-finite input level".into()));
        }
        Ok(InputSignal { breakpoints, levels })
    }

    pub fn constant(level: DVector<f64>, duration: f64) -> Result<Self> {
        Self::new(vec![0.0, duration], vec![level])
    }

    /// Levels held on consecutive subintervals of equal length `duration / N`.
    pub fn uniform(duration: f64, levels: Vec<DVector<f64>>) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::Argument(format!("duration must be positive, got {duration}")));
        }
        let n = levels.len();
        let mut breakpoints: Vec<f64> = (0..n).map(|k| duration * k as f64 / n as f64).collect();
        breakpoints.push(duration);
        Self::new(breakpoints, levels)
    }

    pub fn duration(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[DVector<f64>] {
        &self.levels
    }

    pub fn num_segments(&self) -> usize {
        self.levels.len()
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.duration();
        if !(t >= -slack && t <= self.duration() + slack) {
            return Err(Error::Domain(format!("t = {t} not in [0, {}]", self.duration())));
        }
        Ok(())
    }

    /// Index of the segment containing `s` (right-continuous).
    pub fn segment_index(&self, s: f64) -> Result<usize> {
        self.check_domain(s)?;
        let k = self.breakpoints[1..].partition_point(|&b| b <= s);
        Ok(k.min(self.levels.len() - 1))
    }

    pub fn value_at(&self, s: f64) -> Result<&DVector<f64>> {
        Ok(&self.levels[self.segment_index(s)?])
    }

    pub fn map_levels<F: Fn(&DVector<f64>) -> DVector<f64>>(&self, f: F) -> InputSignal {
        InputSignal {
            breakpoints: self.breakpoints.clone(),
            levels: self.levels.iter().map(f).collect(),
        }
    }

    /// `sup_s |v(s) - v(0)|`.
    pub fn max_deviation(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| (l - &self.levels[0]).norm())
            .fold(0.0, f64::max)
    }

    /// Splits `[a, b]` (with `a <= b`) at the signal breakpoints.
    pub fn pieces(&self, a: f64, b: f64) -> Result<Vec<Piece>> {
        self.check_domain(a)?;
        self.check_domain(b)?;
        if a > b {
            return Err(Error::Argument(format!("interval [{a}, {b}] reversed")));
        }
        let mut out = Vec::new();
        for k in 0..self.levels.len() {
            let start = self.breakpoints[k].max(a);
            let end = self.breakpoints[k + 1].min(b);
            if end > start {
                out.push(Piece { start, end, segment: k });
            }
        }
        Ok(out)
    }
}

/// Integrates `y' = rhs(u, y)` from `a` to `b` (either order) with `substeps`
/// RK4 steps per constant piece, so every breakpoint is a grid node.
/// Both callbacks receive the index of the active segment; `visit` sees each
/// node after the initial one.
pub fn try_integrate<T, E, F, V>(
    signal: &InputSignal,
    a: f64,
    b: f64,
    substeps: usize,
    y0: T,
    rhs: F,
    mut visit: V,
) -> std::result::Result<T, E>
where
    T: OdeState,
    E: From<Error>,
    F: Fn(usize, &T) -> std::result::Result<T, E>,
    V: FnMut(f64, usize, &T),
{
    if substeps == 0 {
        return Err(Error::Argument("substeps must be at least 1".into()).into());
    }
    let backward = b < a;
    let (lo, hi) = if backward { (b, a) } else { (a, b) };
    let mut pieces = signal.pieces(lo, hi)?;
    if backward {
        pieces.reverse();
    }
    let mut y = y0;
    for piece in pieces {
        let (from, to) = if backward {
            (piece.end, piece.start)
        } else {
            (piece.start, piece.end)
        };
        let h = (to - from) / substeps as f64;
        for i in 0..substeps {
            y = try_rk4_step(&y, h, |y| rhs(piece.segment, y))?;
            let t = if i + 1 == substeps { to } else { from + h * (i + 1) as f64 };
            visit(t, piece.segment, &y);
        }
    }
    Ok(y)
}

pub fn integrate<T, F>(signal: &InputSignal, a: f64, b: f64, substeps: usize, y0: T, rhs: F) -> Result<T>
where
    T: OdeState,
    F: Fn(usize, &T) -> T,
{
    try_integrate::<T, Error, _, _>(signal, a, b, substeps, y0, |k, y| Ok(rhs(k, y)), |_, _, _| {})
}
