//! Sparse multivariate polynomials over the reals and polynomial matrices.
//!
//! Polynomials live in `p` control variables `u1..up`. Terms are kept in a
//! `BTreeMap` keyed by exponent vectors under graded-lex order, so iteration
//! order (and therefore every printed or serialized form) is canonical.
//! Coefficients that cancel down to within `PRUNE_TOL` of the magnitude of
//! the contributions that produced them are dropped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative cancellation threshold below which a coefficient is pruned.
pub const PRUNE_TOL: f64 = 1e-12;

/// Largest square size accepted by [`PolyMatrix::det`].
pub const MAX_DET_SIZE: usize = 6;

/// Exponent multi-index, ordered graded-lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(num_vars: usize) -> Self {
        Monomial(vec![0; num_vars])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn product(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    fn eval(&self, u: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(u)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total degree of a polynomial. The zero polynomial has degree `NegInfinity`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Degree {
    NegInfinity,
    Finite(u32),
}

impl Degree {
    pub fn finite(self) -> Option<u32> {
        match self {
            Degree::NegInfinity => None,
            Degree::Finite(d) => Some(d),
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::NegInfinity => write!(f, "-inf"),
            Degree::Finite(d) => write!(f, "{d}"),
        }
    }
}

/// Sparse real polynomial in `num_vars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPoly {
    num_vars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl MultiPoly {
    pub fn zero(num_vars: usize) -> Self {
        MultiPoly {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(num_vars);
        if c != 0.0 {
            p.terms.insert(Monomial::one(num_vars), c);
        }
        p
    }

    pub fn one(num_vars: usize) -> Self {
        Self::constant(num_vars, 1.0)
    }

    /// The coordinate polynomial `u_{index+1}`.
    pub fn var(num_vars: usize, index: usize) -> Result<Self> {
        if index >= num_vars {
            return Err(Error::Dimension(format!(
                "variable index {index} out of range for {num_vars} variables"
            )));
        }
        let mut e = vec![0; num_vars];
        e[index] = 1;
        Self::from_terms(num_vars, [(1.0, e)])
    }

    /// Builds a polynomial from `(coefficient, exponents)` pairs, summing
    /// repeated monomials and dropping zeros.
    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<u32>)>,
    {
        let mut acc: BTreeMap<Monomial, (f64, f64)> = BTreeMap::new();
        for (c, e) in terms {
            if e.len() != num_vars {
                return Err(Error::Dimension(format!(
                    "exponent vector {e:?} has length {}, expected {num_vars}",
                    e.len()
                )));
            }
            if !c.is_finite() {
                return Err(Error::Validation(format!("non-finite coefficient {c}")));
            }
            let slot = acc.entry(Monomial(e)).or_insert((0.0, 0.0));
            slot.0 += c;
            slot.1 += c.abs();
        }
        Ok(Self::from_accumulated(num_vars, acc))
    }

    fn from_accumulated(num_vars: usize, acc: BTreeMap<Monomial, (f64, f64)>) -> Self {
        let terms = acc
            .into_iter()
            .filter(|(_, (c, scale))| *c != 0.0 && c.abs() > PRUNE_TOL * scale)
            .map(|(m, (c, _))| (m, c))
            .collect();
        MultiPoly { num_vars, terms }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    /// Coefficient of the monomial with the given exponents (0 if absent).
    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms
            .get(&Monomial(exponents.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&vec![0; self.num_vars])
    }

    pub fn degree(&self) -> Degree {
        self.terms
            .keys()
            .map(Monomial::total_degree)
            .max()
            .map_or(Degree::NegInfinity, Degree::Finite)
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_vars(&self, other: &MultiPoly) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::Dimension(format!(
                "polynomials in {} and {} variables",
                self.num_vars, other.num_vars
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.check_vars(other)?;
        let mut acc: BTreeMap<Monomial, (f64, f64)> = self
            .terms
            .iter()
            .map(|(m, &c)| (m.clone(), (c, c.abs())))
            .collect();
        for (m, &c) in &other.terms {
            let slot = acc.entry(m.clone()).or_insert((0.0, 0.0));
            slot.0 += c;
            slot.1 = slot.1.max(c.abs());
        }
        Ok(Self::from_accumulated(self.num_vars, acc))
    }

    pub fn sub(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> MultiPoly {
        if k == 0.0 {
            return Self::zero(self.num_vars);
        }
        MultiPoly {
            num_vars: self.num_vars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn mul(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.check_vars(other)?;
        let mut acc: BTreeMap<Monomial, (f64, f64)> = BTreeMap::new();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                let c = ca * cb;
                let slot = acc.entry(ma.product(mb)).or_insert((0.0, 0.0));
                slot.0 += c;
                slot.1 += c.abs();
            }
        }
        Ok(Self::from_accumulated(self.num_vars, acc))
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "evaluation point has length {}, expected {}",
                u.len(),
                self.num_vars
            )));
        }
        Ok(self.terms.iter().map(|(m, &c)| c * m.eval(u)).sum())
    }

    /// Text encoding: list of `[coefficient, [e_1, ..., e_p]]` pairs.
    pub fn to_encoding(&self) -> Vec<(f64, Vec<u32>)> {
        self.terms.iter().map(|(m, &c)| (c, m.0.clone())).collect()
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, &c)) in self.terms.iter().enumerate() {
            let sign = if c < 0.0 { "-" } else { "+" };
            if i == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mag = c.abs();
            let vars: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(k, &e)| {
                    if e == 1 {
                        format!("u{}", k + 1)
                    } else {
                        format!("u{}^{}", k + 1, e)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{mag}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Row-major matrix of polynomials sharing a variable count.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    num_vars: usize,
    entries: Vec<MultiPoly>,
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<MultiPoly>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("polynomial matrix with zero size".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        let num_vars = entries[0].num_vars();
        if let Some(bad) = entries.iter().find(|e| e.num_vars() != num_vars) {
            return Err(Error::Dimension(format!(
                "entry in {} variables, matrix uses {num_vars}",
                bad.num_vars()
            )));
        }
        Ok(PolyMatrix {
            rows,
            cols,
            num_vars,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize, num_vars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            num_vars,
            entries: vec![MultiPoly::zero(num_vars); rows * cols],
        }
    }

    pub fn identity(n: usize, num_vars: usize) -> Self {
        let mut m = Self::zeros(n, n, num_vars);
        for i in 0..n {
            m.entries[i * n + i] = MultiPoly::one(num_vars);
        }
        m
    }

    /// Lifts a numeric matrix to constant polynomial entries.
    pub fn from_constant(m: &DMatrix<f64>, num_vars: usize) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| MultiPoly::constant(num_vars, m[(i, j)]))
            .collect();
        PolyMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            num_vars,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn get(&self, i: usize, j: usize) -> &MultiPoly {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[MultiPoly] {
        &self.entries
    }

    /// Maximum entry degree.
    pub fn degree(&self) -> Degree {
        self.entries
            .iter()
            .map(MultiPoly::degree)
            .max()
            .unwrap_or(Degree::NegInfinity)
    }

    pub fn mul(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != other.rows || self.num_vars != other.num_vars {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = MultiPoly::zero(self.num_vars);
                for k in 0..self.cols {
                    acc = acc.add(&self.get(i, k).mul(other.get(k, j))?)?;
                }
                entries.push(acc);
            }
        }
        PolyMatrix::new(self.rows, other.cols, entries)
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != other.cols || self.num_vars != other.num_vars {
            return Err(Error::Dimension("vstack column mismatch".into()));
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        PolyMatrix::new(self.rows + other.rows, self.cols, entries)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<PolyMatrix> {
        let mut entries = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            if r >= self.rows {
                return Err(Error::Dimension(format!("row {r} out of range")));
            }
            entries.extend_from_slice(&self.entries[r * self.cols..(r + 1) * self.cols]);
        }
        PolyMatrix::new(rows.len(), self.cols, entries)
    }

    pub fn eval(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.get(i, j).eval(u)?;
            }
        }
        Ok(out)
    }

    /// Determinant by Laplace expansion along successive rows, memoizing the
    /// minor for each set of remaining columns.
    pub fn det(&self) -> Result<MultiPoly> {
        if self.rows != self.cols {
            return Err(Error::Dimension(format!(
                "determinant of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        if self.rows > MAX_DET_SIZE {
            return Err(Error::SizeLimit {
                rows: self.rows,
                max: MAX_DET_SIZE,
            });
        }
        let n = self.rows;
        let mut memo: HashMap<u32, MultiPoly> = HashMap::new();
        self.minor(0, (1u32 << n) - 1, &mut memo)
    }

    // Determinant of rows `row..n` restricted to the columns in `cols`.
    fn minor(&self, row: usize, cols: u32, memo: &mut HashMap<u32, MultiPoly>) -> Result<MultiPoly> {
        if cols == 0 {
            return Ok(MultiPoly::one(self.num_vars));
        }
        if let Some(m) = memo.get(&cols) {
            return Ok(m.clone());
        }
        let mut acc = MultiPoly::zero(self.num_vars);
        let mut sign = 1.0;
        for j in 0..self.cols {
            if cols & (1 << j) == 0 {
                continue;
            }
            let entry = self.get(row, j);
            if !entry.is_zero() {
                let sub = self.minor(row + 1, cols & !(1 << j), memo)?;
                acc = acc.add(&entry.mul(&sub)?.scale(sign))?;
            }
            sign = -sign;
        }
        memo.insert(cols, acc.clone());
        Ok(acc)
    }
}

impl fmt::Display for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}
