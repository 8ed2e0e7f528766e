#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use obstemplate::config::{parse_config, Scenario, EXAMPLE_CONFIG};
use obstemplate::poly::{MultiPoly, PolyMatrix};
use obstemplate::signal::InputSignal;
use obstemplate::system::StateAffineSystem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn example_scenario() -> Scenario {
    parse_config(EXAMPLE_CONFIG).unwrap().build().unwrap()
}

pub fn example_system() -> StateAffineSystem {
    example_scenario().system
}

pub fn poly(p: usize, terms: &[(f64, &[u32])]) -> MultiPoly {
    MultiPoly::from_terms(p, terms.iter().map(|(c, e)| (*c, e.to_vec()))).unwrap()
}

/// `(-11.12 - 1.61 u1 + u2)(8.84 + 0.16 u1 + u2)`, the reference form rounded to two decimals.
pub fn rounded_det() -> MultiPoly {
    let f = poly(2, &[(-11.12, &[0, 0]), (-1.61, &[1, 0]), (1.0, &[0, 1])]);
    let g = poly(2, &[(8.84, &[0, 0]), (0.16, &[1, 0]), (1.0, &[0, 1])]);
    f.mul(&g).unwrap()
}

/// Exact determinant of the example's Kalman matrix, from rational arithmetic:
/// `-3/4 u1^2 - 33/8 u1 u2 - 183/4 u1 + 57/20 u2^2 - 1041/160 u2 - 89637/320`.
pub const EXACT_DET: [(f64, [u32; 2]); 6] = [
    (-3.0 / 4.0, [2, 0]),
    (-33.0 / 8.0, [1, 1]),
    (-183.0 / 4.0, [1, 0]),
    (57.0 / 20.0, [0, 2]),
    (-1041.0 / 160.0, [0, 1]),
    (-89637.0 / 320.0, [0, 0]),
];

/// Roots in `u2` of the exact determinant at fixed `u1`, larger one first.
pub fn singular_u2(u1: f64) -> (f64, f64) {
    let a = 57.0 / 20.0;
    let b = -33.0 / 8.0 * u1 - 1041.0 / 160.0;
    let c = -3.0 / 4.0 * u1 * u1 - 183.0 / 4.0 * u1 - 89637.0 / 320.0;
    let disc = (b * b - 4.0 * a * c).sqrt();
    ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a))
}

pub fn exact_det_at(u: &[f64]) -> f64 {
    EXACT_DET
        .iter()
        .map(|(c, e)| c * u[0].powi(e[0] as i32) * u[1].powi(e[1] as i32))
        .sum()
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `int_0^t e^{A' s} C'C e^{A s} ds` by composite Simpson on `panels` panels,
/// with exact matrix exponentials at the nodes.
pub fn gramian_oracle(a: &DMatrix<f64>, c: &DMatrix<f64>, t: f64, panels: usize) -> DMatrix<f64> {
    let h = t / panels as f64;
    let ctc = c.transpose() * c;
    let mut acc = DMatrix::zeros(a.nrows(), a.nrows());
    for i in 0..=panels {
        let e = expm(&(a * (h * i as f64)));
        let w = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += e.transpose() * &ctc * e * w;
    }
    acc * (h / 3.0)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Random polynomial of total degree at most `deg` with coefficients in `[-scale, scale]`.
pub fn random_poly(rng: &mut ChaCha8Rng, p: usize, deg: u32, scale: f64) -> MultiPoly {
    let mut terms = Vec::new();
    for e in obstemplate::genpos::monomials_up_to(p, deg as usize) {
        if rng.random_bool(0.7) {
            terms.push((rng.random_range(-scale..scale), e));
        }
    }
    MultiPoly::from_terms(p, terms).unwrap()
}

/// Random state-affine system with affine dependence on the input.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateAffineSystem {
    let a = PolyMatrix::new(n, n, (0..n * n).map(|_| random_poly(rng, p, 1, 1.0)).collect()).unwrap();
    let c = PolyMatrix::new(m, n, (0..m * n).map(|_| random_poly(rng, p, 1, 1.0)).collect()).unwrap();
    let b = (0..n).map(|_| random_poly(rng, p, 1, 1.0)).collect();
    StateAffineSystem::new(a, c, b).unwrap()
}

/// Random piecewise-constant signal with `k` levels on `[0, duration]`.
pub fn random_signal(rng: &mut ChaCha8Rng, p: usize, k: usize, duration: f64) -> InputSignal {
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.05..0.95) * duration).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * duration);
    let mut breakpoints = vec![0.0];
    breakpoints.extend(cuts);
    breakpoints.push(duration);
    let levels = (0..breakpoints.len() - 1)
        .map(|_| DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    InputSignal::new(breakpoints, levels).unwrap()
}

/// Random symmetric positive-definite matrix with eigenvalues in `[0.5, 2.5]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n, 1.0);
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..2.5)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// Scalar-input system with `det O(u) = 1 - u`:
/// `A(u) = [[0, 1 - u], [0, -1]]`, `C = [1, 0]`, `b = (0, u)`.
pub fn root_system() -> StateAffineSystem {
    let one_minus_u = poly(1, &[(1.0, &[0]), (-1.0, &[1])]);
    let a = PolyMatrix::new(
        2,
        2,
        vec![MultiPoly::zero(1), one_minus_u, MultiPoly::zero(1), MultiPoly::constant(1, -1.0)],
    )
    .unwrap();
    let c = PolyMatrix::new(1, 2, vec![MultiPoly::one(1), MultiPoly::zero(1)]).unwrap();
    StateAffineSystem::new(a, c, vec![MultiPoly::zero(1), poly(1, &[(1.0, &[1])])]).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
