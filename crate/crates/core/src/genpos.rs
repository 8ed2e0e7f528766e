//! Minimal point sets in `(d, p)`-general position.
//!
//! A set `E` of points in `R^p` is in `(d, p)`-general position when no
//! nonzero polynomial of degree at most `d` vanishes on all of `E`. The
//! construction picks `p + d` distinct anchors `a_i` and, for every size-`p`
//! subset `sigma` of them, takes the coefficient vector of the monic
//! polynomial `prod_{i in sigma} (T - a_i)`. The resulting `C(p+d, p)` points
//! are in general position and no proper subset is.
//!
//! Besides a numeric rank check on the monomial evaluation matrix `V`, the
//! module builds the dual matrix `W` whose columns are the coefficients of
//! `g_sigma(X) = prod_{i not in sigma} (a_i^p + a_i^{p-1} X_1 + ... + X_p)`.
//! `D = W'V` is diagonal with entries `prod_{i not in sigma, j in sigma} (a_j - a_i)`,
//! an exact witness that `V` is invertible.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{numeric_rank, singular_values};
use crate::poly::MultiPoly;

/// Minimum separation between anchors.
pub const ANCHOR_SEPARATION: f64 = 1e-9;

/// Relative singular-value threshold for the rank certificate.
pub const GENPOS_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralPositionSet {
    pub d: usize,
    pub p: usize,
    pub anchors: Vec<f64>,
    /// Index subsets of the anchors, one per point, in lexicographic order.
    pub subsets: Vec<Vec<usize>>,
    pub points: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralPositionCertificate {
    pub rank: usize,
    /// Number of monomials of degree at most `d` in `p` variables.
    pub required_rank: usize,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    pub general_position: bool,
    pub minimal: bool,
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Exponent vectors of total degree at most `d` in `p` variables,
/// graded-lex ordered.
pub fn monomials_up_to(p: usize, d: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(binomial(p + d, p));
    for total in 0..=d {
        let mut cur = vec![0u32; p];
        fill_degree(&mut cur, 0, total as u32, &mut out);
    }
    out
}

fn fill_degree(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    if cur.is_empty() {
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e;
        fill_degree(cur, pos + 1, remaining - e, out);
    }
    cur[pos] = 0;
}

/// Coefficients `(v_1, ..., v_p)` of `T^p + v_1 T^{p-1} + ... + v_p = prod (T - r_i)`.
pub fn coeffs_from_roots(roots: &[f64]) -> Vec<f64> {
    // c[k] is the coefficient of T^{len-k}; c[0] = 1.
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= r * ck;
        }
        c = next;
    }
    c[1..].to_vec()
}

pub fn default_anchors(d: usize, p: usize) -> Vec<f64> {
    (0..p + d).map(|i| i as f64).collect()
}

pub fn build_general_position(d: usize, p: usize, anchors: &[f64]) -> Result<GeneralPositionSet> {
    if p == 0 {
        return Err(Error::Validation("dimension p must be positive".into()));
    }
    if anchors.len() != p + d {
        return Err(Error::Validation(format!(
            "need p + d = {} anchors, got {}",
            p + d,
            anchors.len()
        )));
    }
    if anchors.iter().any(|a| !a.is_finite()) {
        return Err(Error::Validation("anchors must be finite".into()));
    }
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            if (anchors[i] - anchors[j]).abs() <= ANCHOR_SEPARATION {
                return Err(Error::Validation(format!(
                    "anchors {i} and {j} coincide ({} vs {})",
                    anchors[i], anchors[j]
                )));
            }
        }
    }
    let subsets = subsets(p + d, p);
    let points = subsets
        .iter()
        .map(|s| {
            let roots: Vec<f64> = s.iter().map(|&i| anchors[i]).collect();
            DVector::from_vec(coeffs_from_roots(&roots))
        })
        .collect();
    Ok(GeneralPositionSet {
        d,
        p,
        anchors: anchors.to_vec(),
        subsets,
        points,
    })
}

/// `V`, rows indexed by monomials of degree `<= d`, columns by points.
pub fn evaluation_matrix(d: usize, p: usize, points: &[DVector<f64>]) -> DMatrix<f64> {
    let monos = monomials_up_to(p, d);
    DMatrix::from_fn(monos.len(), points.len(), |r, c| {
        monos[r]
            .iter()
            .zip(points[c].iter())
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    })
}

/// Rank certificate for an arbitrary point list.
pub fn verify_points(d: usize, p: usize, points: &[DVector<f64>]) -> GeneralPositionCertificate {
    let required_rank = binomial(p + d, p);
    if points.is_empty() {
        return GeneralPositionCertificate {
            rank: 0,
            required_rank,
            min_singular_value: 0.0,
            max_singular_value: 0.0,
            general_position: false,
            minimal: false,
        };
    }
    let v = evaluation_matrix(d, p, points);
    let sv = singular_values(&v);
    let largest = sv[0];
    let rank = sv.iter().filter(|&&s| s > GENPOS_RANK_TOL * largest).count();
    // Rank can only drop below `rank` when a point is removed; it never
    // exceeds the column count.
    let minimal = (0..points.len()).all(|skip| {
        let cols: Vec<usize> = (0..points.len()).filter(|&c| c != skip).collect();
        if cols.is_empty() {
            return rank > 0;
        }
        numeric_rank(&v.select_columns(cols.iter()), GENPOS_RANK_TOL) < rank
    });
    GeneralPositionCertificate {
        rank,
        required_rank,
        min_singular_value: *sv.last().unwrap(),
        max_singular_value: largest,
        general_position: rank == required_rank,
        minimal,
    }
}

pub fn verify_general_position(set: &GeneralPositionSet) -> GeneralPositionCertificate {
    verify_points(set.d, set.p, &set.points)
}

/// Dual matrix `W`: column `sigma` holds the coefficients of `g_sigma`
/// against the monomials of [`monomials_up_to`].
pub fn dual_matrix(set: &GeneralPositionSet) -> Result<DMatrix<f64>> {
    let p = set.p;
    let omegas: Vec<MultiPoly> = set
        .anchors
        .iter()
        .map(|&a| {
            let mut terms = vec![(a.powi(p as i32), vec![0; p])];
            for k in 0..p {
                let mut e = vec![0; p];
                e[k] = 1;
                terms.push((a.powi((p - 1 - k) as i32), e));
            }
            MultiPoly::from_terms(p, terms)
        })
        .collect::<Result<_>>()?;
    let monos = monomials_up_to(p, set.d);
    let mut w = DMatrix::zeros(monos.len(), set.subsets.len());
    for (col, sigma) in set.subsets.iter().enumerate() {
        let mut g = MultiPoly::one(p);
        for (i, omega) in omegas.iter().enumerate() {
            if !sigma.contains(&i) {
                g = g.mul(omega)?;
            }
        }
        for (row, e) in monos.iter().enumerate() {
            w[(row, col)] = g.coefficient(e);
        }
    }
    Ok(w)
}

/// `D = W'V`; diagonal for a correctly built set.
pub fn duality_matrix(set: &GeneralPositionSet) -> Result<DMatrix<f64>> {
    let v = evaluation_matrix(set.d, set.p, &set.points);
    Ok(dual_matrix(set)?.transpose() * v)
}

/// Closed-form diagonal entry `prod_{i not in sigma} f_sigma(a_i) = prod_{i not in sigma} prod_{j in sigma} (a_i - a_j)`.
pub fn expected_diagonal(set: &GeneralPositionSet, sigma: &[usize]) -> f64 {
    let mut prod = 1.0;
    for i in (0..set.anchors.len()).filter(|i| !sigma.contains(i)) {
        for &j in sigma {
            prod *= set.anchors[i] - set.anchors[j];
        }
    }
    prod
}

/// Translates the points so that the first one becomes `(1, 0, ..., 0)`.
pub fn normalize_to_template_origin(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    let mut shift = -first.clone();
    shift[0] += 1.0;
    points.iter().map(|v| v + &shift).collect()
}
