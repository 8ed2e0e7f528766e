//! Piecewise-constant control template families and their numeric
//! certification.
//!
//! A family maps a period `delta` to an input `v_delta` on `[0, delta]` that
//! starts at `(1, 0, ..., 0)` and takes `N` values on equal subintervals.
//! Certification samples scalings `mu` in `[0, lambda_bar]` and orthogonal
//! matrices `R` and reports the smallest Gramian eigenvalue seen for the
//! input `mu R v_delta`. The result is an empirical estimate of the template
//! constant `g(delta)`, not a proof.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genpos::{build_general_position, default_anchors, normalize_to_template_origin};
use crate::linalg::{orthogonality_defect, sym_min_eig, unit};
use crate::signal::InputSignal;
use crate::system::{gramian, StateAffineSystem};

/// Tolerance on `points[0] = (1, 0, ..., 0)`.
pub const ORIGIN_TOL: f64 = 1e-12;

/// Tolerance on `|R'R - I|` for rotations.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Siso,
    Genpos,
    Square,
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateFamily {
    pub kind: TemplateKind,
    /// Base points `v_k`; `points[0] = (1, 0, ..., 0)`.
    pub points: Vec<DVector<f64>>,
    /// Largest admissible period `T`.
    pub max_delta: f64,
}

impl TemplateFamily {
    /// Scalar family `v_delta(s) = 1 + (delta/N) floor(N s / delta)`.
    pub fn siso(n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::Argument("SISO template needs N >= 1".into()));
        }
        let points = (0..n_levels)
            .map(|k| DVector::from_element(1, 1.0 + k as f64 / n_levels as f64))
            .collect();
        Ok(TemplateFamily {
            kind: TemplateKind::Siso,
            points,
            max_delta: f64::INFINITY,
        })
    }

    /// Two-input family visiting the corners of a square: `(1,0)`, `(1,1)`,
    /// `(2,1)`, `(2,0)` on successive quarters.
    pub fn square() -> Self {
        let points = [[1.0, 0.0], [1.0, 1.0], [2.0, 1.0], [2.0, 0.0]]
            .iter()
            .map(|r| DVector::from_row_slice(r))
            .collect();
        TemplateFamily {
            kind: TemplateKind::Square,
            points,
            max_delta: f64::INFINITY,
        }
    }

    /// Family built from a minimal `(d, p)`-general-position set, translated
    /// so that its first point is `(1, 0, ..., 0)`.
    pub fn genpos(d: usize, p: usize, anchors: Option<&[f64]>) -> Result<Self> {
        let anchors = anchors.map_or_else(|| default_anchors(d, p), <[f64]>::to_vec);
        let set = build_general_position(d, p, &anchors)?;
        Ok(TemplateFamily {
            kind: TemplateKind::Genpos,
            points: normalize_to_template_origin(&set.points),
            max_delta: f64::INFINITY,
        })
    }

    /// `genpos` with `d` taken from the system's degree bound.
    pub fn genpos_for(sys: &StateAffineSystem, anchors: Option<&[f64]>) -> Result<Self> {
        Self::genpos(sys.degree_bound() as usize, sys.p(), anchors)
    }

    pub fn explicit(points: Vec<DVector<f64>>) -> Result<Self> {
        check_origin(&points)?;
        Ok(TemplateFamily {
            kind: TemplateKind::Explicit,
            points,
            max_delta: f64::INFINITY,
        })
    }

    pub fn with_max_delta(mut self, max_delta: f64) -> Self {
        self.max_delta = max_delta;
        self
    }

    pub fn n_levels(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn check_delta(&self, delta: f64) -> Result<()> {
        if !(delta > 0.0 && delta <= self.max_delta) {
            return Err(Error::Argument(format!(
                "delta = {delta} outside (0, {}]",
                self.max_delta
            )));
        }
        Ok(())
    }

    /// The template `v_delta` on `[0, delta]`.
    pub fn generate(&self, delta: f64) -> Result<InputSignal> {
        self.check_delta(delta)?;
        match self.kind {
            TemplateKind::Siso => siso_template(delta, self.n_levels()),
            _ => mimo_template(delta, &self.points),
        }
    }

    /// Linear class-K bound `kappa(delta) = delta * max_k |v_k - v_0|`.
    pub fn kappa(&self, delta: f64) -> f64 {
        let v0 = &self.points[0];
        delta * self.points.iter().map(|v| (v - v0).norm()).fold(0.0, f64::max)
    }
}

fn check_origin(points: &[DVector<f64>]) -> Result<()> {
    let first = points
        .first()
        .ok_or_else(|| Error::Validation("template needs at least one point".into()))?;
    let p = first.len();
    if p == 0 || points.iter().any(|v| v.len() != p) {
        return Err(Error::Validation("template points must share a positive dimension".into()));
    }
    if (first - unit(p, 0)).amax() > ORIGIN_TOL {
        return Err(Error::Validation(format!(
            "first template point must be (1, 0, ..., 0), got {:?}",
            first.as_slice()
        )));
    }
    Ok(())
}

/// Pointwise value of the scalar template `1 + (delta/N) floor(N s / delta)`.
pub fn siso_template_value(delta: f64, n_levels: usize, s: f64) -> f64 {
    let n = n_levels as f64;
    1.0 + delta / n * (n / delta * s).floor()
}

pub fn siso_template(delta: f64, n_levels: usize) -> Result<InputSignal> {
    if !(delta > 0.0) || n_levels == 0 {
        return Err(Error::Argument(format!(
            "SISO template needs delta > 0 and N > 0 (got delta = {delta}, N = {n_levels})"
        )));
    }
    let step = delta / n_levels as f64;
    // Evaluate the floor formula at each segment midpoint.
    let levels = (0..n_levels)
        .map(|k| DVector::from_element(1, siso_template_value(delta, n_levels, (k as f64 + 0.5) * step)))
        .collect();
    InputSignal::uniform(delta, levels)
}

/// `v_delta(s) = v_0 + delta (v_k - v_0)` on the `k`-th of `N` equal subintervals.
pub fn mimo_template(delta: f64, points: &[DVector<f64>]) -> Result<InputSignal> {
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("delta must be positive, got {delta}")));
    }
    check_origin(points)?;
    let v0 = &points[0];
    let levels = points.iter().map(|v| v0 + (v - v0) * delta).collect();
    InputSignal::uniform(delta, levels)
}

/// Replaces every level `u_k` by `mu R u_k`.
pub fn scaled_rotated(v: &InputSignal, mu: f64, r: &DMatrix<f64>) -> Result<InputSignal> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Validation(format!("scaling must be finite and nonnegative, got {mu}")));
    }
    if r.nrows() != v.dim() || r.ncols() != v.dim() {
        return Err(Error::Dimension(format!(
            "rotation is {}x{}, signal dimension {}",
            r.nrows(),
            r.ncols(),
            v.dim()
        )));
    }
    let defect = orthogonality_defect(r);
    if defect > ORTHO_TOL {
        return Err(Error::Validation(format!("matrix is not orthogonal (|R'R - I| = {defect:e})")));
    }
    Ok(v.map_levels(|u| (r * u) * mu))
}

/// How the orthogonal group was sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationSampling {
    /// `{-1, +1}` for scalar inputs.
    Signs,
    /// Equispaced angles, each with and without an axis reflection.
    AngleGrid,
    /// Seeded Haar-random orthogonal matrices.
    Random,
}

/// Sample of `O(p)` used by [`certify_template`].
pub fn orthogonal_samples(p: usize, rot_grid: usize, seed: u64) -> (RotationSampling, Vec<DMatrix<f64>>) {
    match p {
        1 => (
            RotationSampling::Signs,
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, -1.0)],
        ),
        2 => {
            let mut out = Vec::with_capacity(2 * rot_grid);
            for k in 0..rot_grid {
                let a = 2.0 * PI * k as f64 / rot_grid as f64;
                let (s, c) = a.sin_cos();
                let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                let refl = DMatrix::from_row_slice(2, 2, &[c, s, s, -c]);
                out.push(rot);
                out.push(refl);
            }
            (RotationSampling::AngleGrid, out)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = (0..rot_grid).map(|_| random_orthogonal(p, &mut rng)).collect();
            (RotationSampling::Random, out)
        }
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateCertificate {
    pub kind: TemplateKind,
    pub delta: f64,
    pub lambda_bar: f64,
    pub n_levels: usize,
    pub mu_grid: usize,
    pub rot_grid: usize,
    pub seed: u64,
    pub substeps: usize,
    pub rotation_sampling: RotationSampling,
    /// Number of `(mu, R)` pairs evaluated.
    pub samples: usize,
    /// Minimum over the grid of `lambda_min(Gamma_{mu R v_delta}(delta, 0))`.
    pub g_estimate: f64,
    pub worst_mu: f64,
    pub worst_rotation: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub mu_grid: usize,
    pub rot_grid: usize,
    pub seed: u64,
    pub substeps: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            mu_grid: 50,
            rot_grid: 64,
            seed: 0,
            substeps: 20,
        }
    }
}

/// Smallest Gramian eigenvalue of `mu R v_delta` over a grid of scalings
/// `mu in {0, lambda_bar/mu_grid, ..., lambda_bar}` and a sample of `O(p)`.
pub fn certify_template(
    sys: &StateAffineSystem,
    family: &TemplateFamily,
    delta: f64,
    lambda_bar: f64,
    opts: CertifyOptions,
) -> Result<TemplateCertificate> {
    if !(lambda_bar >= 0.0) || !lambda_bar.is_finite() {
        return Err(Error::Argument(format!("lambda_bar must be finite and >= 0, got {lambda_bar}")));
    }
    if opts.mu_grid == 0 || opts.rot_grid == 0 {
        return Err(Error::Argument("grid sizes must be positive".into()));
    }
    if family.dim() != sys.p() {
        return Err(Error::Dimension(format!(
            "template dimension {} does not match system input dimension {}",
            family.dim(),
            sys.p()
        )));
    }
    let base = family.generate(delta)?;
    let (sampling, rotations) = orthogonal_samples(sys.p(), opts.rot_grid, opts.seed);
    let mus: Vec<f64> = (0..=opts.mu_grid)
        .map(|k| lambda_bar * k as f64 / opts.mu_grid as f64)
        .collect();
    let pairs: Vec<(usize, usize)> = (0..mus.len())
        .flat_map(|i| (0..rotations.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let v = scaled_rotated(&base, mus[i], &rotations[j])?;
            Ok(sym_min_eig(&gramian(sys, &v, 0.0, delta, opts.substeps)?))
        })
        .collect::<Result<_>>()?;
    // First minimum in grid order, so ties resolve deterministically.
    let (best, g_estimate) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let (mi, rj) = pairs[best];
    let worst = &rotations[rj];
    Ok(TemplateCertificate {
        kind: family.kind,
        delta,
        lambda_bar,
        n_levels: family.n_levels(),
        mu_grid: opts.mu_grid,
        rot_grid: opts.rot_grid,
        seed: opts.seed,
        substeps: opts.substeps,
        rotation_sampling: sampling,
        samples: pairs.len(),
        g_estimate,
        worst_mu: mus[mi],
        worst_rotation: (0..worst.nrows())
            .map(|r| worst.row(r).iter().copied().collect())
            .collect(),
    })
}
