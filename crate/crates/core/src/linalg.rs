//! Dense matrices and univariate polynomials over a generic scalar.
//!
//! Exact work (canonical forms, scaling) uses [`Rational`]; the plant model
//! uses `f64`. Elimination routines need a field and are only provided for
//! types implementing [`Field`].

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Ring-like scalar usable as a matrix entry.
pub trait Scalar: Num + Clone + fmt::Debug + Neg<Output = Self> {}

impl<T: Num + Clone + fmt::Debug + Neg<Output = T>> Scalar for T {}

/// Scalars with exact or approximate division.
pub trait Field: Scalar {
    /// Whether a pivot candidate should be treated as zero.
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
    /// Magnitude used to choose pivots; exact fields take the first nonzero entry.
    fn pivot_weight(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }
}

impl Field for BigRational {}

impl Field for f64 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-12
    }
    fn pivot_weight(&self) -> f64 {
        self.abs()
    }
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(v: i128) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Exact rational value of a finite `f64` (no decimal rounding).
pub fn rat_from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

/// Parses an integer, a fraction `a/b`, or a finite decimal such as `-640.4713`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        let mut n: BigInt = digits.parse().map_err(|_| bad())?;
        if neg {
            n = -n;
        }
        let d = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(Rational::new(n, d));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

pub fn format_rational(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn rational_to_f64(x: &Rational) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

/// Nearest integer, ties away from zero.
pub fn round_half_away(x: &Rational) -> BigInt {
    let half = rat(1, 2);
    if x.is_negative() {
        -(-x + &half).floor().to_integer()
    } else {
        (x + &half).floor().to_integer()
    }
}

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type RatMatrix = Matrix<Rational>;
pub type RealMatrix = Matrix<f64>;
pub type IntMatrix = Matrix<i128>;

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r},{c}) out of bounds"
        );
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r},{c}) out of bounds"
        );
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn column_vector(v: Vec<T>) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v,
        }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Result<Self> {
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("columns of unequal length".into()));
        }
        Ok(Self::from_fn(n, cols.len(), |r, c| cols[c][r].clone()))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn scale(&self, k: &T) -> Self {
        self.map(|x| x.clone() * k.clone())
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let prod = a.clone() * rhs[(k, j)].clone();
                    let slot = &mut out[(i, j)];
                    *slot = slot.clone() + prod;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect())
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(&T, &T) -> T) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a.clone() + b.clone())
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a.clone() - b.clone())
    }

    pub fn pow(&self, mut e: u32) -> Self {
        assert!(self.is_square());
        let mut base = self.clone();
        let mut acc = Self::identity(self.rows);
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Copy of rows `r0..r1` and columns `c0..c1`.
    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        Self::from_fn(r1 - r0, c1 - c0, |r, c| self[(r0 + r, c0 + c)].clone())
    }

    /// Block-diagonal matrix.
    pub fn block_diag(blocks: &[Self]) -> Self {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let m: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(n, m);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for r in 0..b.rows {
                for c in 0..b.cols {
                    out[(r0 + r, c0 + c)] = b[(r, c)].clone();
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.try_mul(rhs).expect("dimension mismatch in product")
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.try_add(rhs).expect("dimension mismatch in sum")
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.try_sub(rhs).expect("dimension mismatch in difference")
    }
}

/// Reduced row echelon form together with its pivot columns.
#[derive(Clone)]
pub struct Echelon<T> {
    pub reduced: Matrix<T>,
    pub pivots: Vec<usize>,
}

impl<T: Field> Matrix<T> {
    /// Gauss-Jordan elimination. Pivots are chosen in increasing column order.
    pub fn rref(&self) -> Echelon<T> {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row == m.rows {
                break;
            }
            let Some(p) = (row..m.rows)
                .filter(|&r| !m[(r, col)].is_negligible())
                .max_by(|&a, &b| {
                    m[(a, col)]
                        .pivot_weight()
                        .partial_cmp(&m[(b, col)].pivot_weight())
                        .unwrap()
                        .then(b.cmp(&a))
                })
            else {
                continue;
            };
            if p != row {
                for c in 0..m.cols {
                    m.data.swap(p * m.cols + c, row * m.cols + c);
                }
            }
            let inv = T::one() / m[(row, col)].clone();
            for c in col..m.cols {
                m[(row, c)] = m[(row, c)].clone() * inv.clone();
            }
            for r in 0..m.rows {
                if r == row || m[(r, col)].is_zero() {
                    continue;
                }
                let factor = m[(r, col)].clone();
                for c in col..m.cols {
                    let sub = factor.clone() * m[(row, c)].clone();
                    m[(r, c)] = m[(r, c)].clone() - sub;
                }
            }
            pivots.push(col);
            row += 1;
        }
        Echelon { reduced: m, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rref().pivots.len()
    }

    pub fn nullity(&self) -> usize {
        self.cols - self.rank()
    }

    /// Basis of the right kernel, one vector per free column in increasing order.
    /// Each vector has a 1 at its free column and 0 at every other free column.
    pub fn kernel_basis(&self) -> Vec<Vec<T>> {
        let Echelon { reduced, pivots } = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![T::zero(); self.cols];
                v[f] = T::one();
                for (r, &p) in pivots.iter().enumerate() {
                    v[p] = -reduced[(r, f)].clone();
                }
                v
            })
            .collect()
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let aug = Self::from_fn(n, 2 * n, |r, c| {
            if c < n {
                self[(r, c)].clone()
            } else if c - n == r {
                T::one()
            } else {
                T::zero()
            }
        });
        let Echelon { reduced, pivots } = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return Err(Error::Dimension("matrix is singular".into()));
        }
        Ok(reduced.submatrix(0, n, n, 2 * n))
    }

    /// Solves `self * x = b` for square nonsingular `self`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        self.inverse()?.mul_vec(b)
    }
}

/// Whether the given vectors are linearly independent.
pub fn independent<T: Field>(vectors: &[Vec<T>]) -> bool {
    if vectors.is_empty() {
        return true;
    }
    match Matrix::from_columns(vectors) {
        Ok(m) => m.rank() == vectors.len(),
        Err(_) => false,
    }
}

impl RealMatrix {
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Matrix exponential by scaling and squaring of a truncated Taylor series.
    pub fn expm(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension("expm of a non-square matrix".into()));
        }
        let norm = self.norm_inf();
        let mut squarings = 0u32;
        while norm / f64::from(1u32 << squarings.min(30)) > 0.5 && squarings < 60 {
            squarings += 1;
        }
        let a = self.scale(&0.5f64.powi(squarings as i32));
        let n = self.rows;
        let mut term = Self::identity(n);
        let mut sum = Self::identity(n);
        for k in 1..=20 {
            term = (&term * &a).scale(&(1.0 / k as f64));
            sum = &sum + &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        Ok(sum)
    }

    /// Spectral radius, via the growth rate of `||A^k||^(1/k)`.
    pub fn spectral_radius(&self) -> f64 {
        assert!(self.is_square());
        let mut p = self.clone();
        let mut log_scale = 0.0f64;
        let mut k = 1u32;
        // repeated squaring: A^(2^j), renormalized to avoid overflow
        for _ in 0..12 {
            let nrm = p.norm_inf();
            if nrm == 0.0 {
                return 0.0;
            }
            log_scale += nrm.ln();
            p = p.scale(&(1.0 / nrm));
            p = &p * &p;
            log_scale *= 2.0;
            k *= 2;
        }
        let nrm = p.norm_inf();
        if nrm == 0.0 {
            return 0.0;
        }
        ((log_scale + nrm.ln()) / k as f64).exp()
    }
}

impl RatMatrix {
    pub fn is_integer(&self) -> bool {
        self.data.iter().all(|x| x.is_integer())
    }

    pub fn from_ints(rows: &[Vec<i64>]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| rat(x, 1)).collect())
                .collect(),
        )
        .expect("rectangular input")
    }

    /// Exact conversion of a real matrix given by its decimal literals.
    pub fn from_decimals(rows: &[Vec<&str>]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|s| parse_rational(s))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn to_real(&self) -> RealMatrix {
        self.map(rational_to_f64)
    }

    /// Parses the text format: first line `rows cols`, then row-major entries
    /// separated by whitespace. Entries are integers, `num/den` or decimals.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let mut dim = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|_| Error::Parse(format!("invalid {what}")))
        };
        let rows = dim("row count")?;
        let cols = dim("column count")?;
        let entries: Vec<Rational> = tokens.map(parse_rational).collect::<Result<_>>()?;
        if entries.len() != rows * cols {
            return Err(Error::Parse(format!(
                "expected {} entries, found {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: entries,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(format_rational).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    /// Entries as machine integers, if every entry is an integer that fits.
    pub fn to_int(&self) -> Option<IntMatrix> {
        let data = self
            .data
            .iter()
            .map(|x| {
                if x.is_integer() {
                    x.to_integer().to_i128()
                } else {
                    None
                }
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

impl IntMatrix {
    pub fn to_rational(&self) -> RatMatrix {
        self.map(|&x| rat_int(x))
    }

    pub fn max_abs(&self) -> u128 {
        self.data
            .iter()
            .map(|x| x.unsigned_abs())
            .max()
            .unwrap_or(0)
    }
}

/// Polynomial with ascending coefficients, trailing zeros trimmed.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

pub type RatPoly = Poly<Rational>;

impl<T: Scalar> fmt::Debug for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.coeffs)
    }
}

impl<T: Scalar> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn one() -> Self {
        Self::new(vec![T::one()])
    }

    /// `s^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![T::zero(); k + 1];
        c[k] = T::one();
        Self { coeffs: c }
    }

    /// `s - root`.
    pub fn linear(root: T) -> Self {
        Self::new(vec![-root, T::one()])
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> T {
        self.coeffs.get(i).cloned().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> T {
        self.coeffs.last().cloned().unwrap_or_else(T::zero)
    }

    pub fn is_monic(&self) -> bool {
        self.lead().is_one()
    }

    pub fn derivative(&self) -> Self {
        let mut c = Vec::new();
        let mut k = T::zero();
        for (i, a) in self.coeffs.iter().enumerate() {
            if i > 0 {
                c.push(a.clone() * k.clone());
            }
            k = k + T::one();
        }
        Self::new(c)
    }

    pub fn eval(&self, x: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }

    /// `p(A)` by Horner's rule.
    pub fn eval_matrix(&self, a: &Matrix<T>) -> Matrix<T> {
        let n = a.rows();
        let mut acc = Matrix::zeros(n, n);
        for c in self.coeffs.iter().rev() {
            acc = &acc * a;
            for i in 0..n {
                acc[(i, i)] = acc[(i, i)].clone() + c.clone();
            }
        }
        acc
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(), |acc, _| &acc * self)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Poly<U> {
        Poly::new(self.coeffs.iter().map(f).collect())
    }
}

impl<T: Scalar> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl<T: Scalar> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl<T: Scalar> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: &Poly<T>) -> Poly<T> {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                c[i + j] = c[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly::new(c)
    }
}

impl<T: Field> Poly<T> {
    /// Quotient and remainder of Euclidean division.
    pub fn div_rem(&self, d: &Self) -> Result<(Self, Self)> {
        let dd = d.degree().ok_or(Error::ZeroPolynomial)?;
        let lead_inv = T::one() / d.lead();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return Ok((Self::zero(), self.clone()));
        }
        let mut quot = vec![T::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = rem[k + dd].clone() * lead_inv.clone();
            if !c.is_zero() {
                for (j, dj) in d.coeffs.iter().enumerate() {
                    rem[k + j] = rem[k + j].clone() - c.clone() * dj.clone();
                }
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        Ok((Self::new(quot), Self::new(rem)))
    }

    pub fn divides(&self, p: &Self) -> bool {
        match p.div_rem(self) {
            Ok((_, r)) => r.is_zero(),
            Err(_) => p.is_zero(),
        }
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let inv = T::one() / self.lead();
        self.map(|c| c.clone() * inv.clone())
    }

    /// Monic greatest common divisor (zero only if both inputs are zero).
    pub fn gcd(&self, other: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).expect("nonzero divisor").1;
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn lcm(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let g = self.gcd(other);
        (&self.div_rem(&g).expect("gcd nonzero").0 * other).monic()
    }
}

impl RatPoly {
    pub fn from_ints(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| rat(c, 1)).collect())
    }

    pub fn is_integer(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_integer())
    }

    /// Companion matrix with the negated coefficients in the first column and
    /// ones on the superdiagonal, so that `det(sI - C) = self` for monic `self`.
    pub fn companion(&self) -> RatMatrix {
        let g = self.degree().expect("nonzero polynomial");
        let mut c = RatMatrix::zeros(g, g);
        for r in 0..g {
            c[(r, 0)] = -self.coeff(g - 1 - r);
            if r + 1 < g {
                c[(r, r + 1)] = Rational::one();
            }
        }
        c
    }
}

impl fmt::Display for RatPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let show = i == 0 || !mag.is_one();
            if show {
                write!(f, "{}", format_rational(&mag))?;
            }
            match i {
                0 => {}
                1 => write!(f, "s")?,
                _ => write!(f, "s^{i}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_formats() {
        assert_eq!(parse_rational("-640.4713").unwrap(), rat(-6404713, 10000));
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat(-7, 1));
        assert_eq!(parse_rational("-0.5").unwrap(), rat(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        let m = RatMatrix::parse_text("2 2\n1 1/2\n-3 0.25\n").unwrap();
        assert_eq!(m[(0, 1)], rat(1, 2));
        assert_eq!(RatMatrix::parse_text(&m.to_text()).unwrap(), m);
        assert!(RatMatrix::parse_text("2 2\n1 2 3").is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_away(&rat(5, 2)), BigInt::from(3));
        assert_eq!(round_half_away(&rat(-5, 2)), BigInt::from(-3));
        assert_eq!(round_half_away(&rat(-4, 10)), BigInt::from(0));
    }

    #[test]
    fn nullity_examples() {
        assert_eq!(RatMatrix::zeros(3, 3).nullity(), 3);
        assert_eq!(RatMatrix::identity(3).nullity(), 0);
        let f = RatMatrix::from_ints(&[
            vec![1, 1, 0, 0],
            vec![2, 0, 0, 0],
            vec![0, 0, 1, 1],
            vec![0, 0, 2, 0],
        ]);
        let shifted = &f - &RatMatrix::identity(4).scale(&rat(2, 1));
        assert_eq!(shifted.nullity(), 2);
        for v in shifted.kernel_basis() {
            assert!(shifted.mul_vec(&v).unwrap().iter().all(Zero::is_zero));
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let a = RatMatrix::from_ints(&[vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 4]]);
        let inv = a.inverse().unwrap();
        assert_eq!(&a * &inv, RatMatrix::identity(3));
        let singular = RatMatrix::from_ints(&[vec![1, 2], vec![2, 4]]);
        assert!(singular.inverse().is_err());
    }

    #[test]
    fn poly_division_and_gcd() {
        let p = RatPoly::from_ints(&[-2, -1, 1]); // s^2 - s - 2
        let a = RatPoly::from_ints(&[1, 1]);
        let (q, r) = p.div_rem(&a).unwrap();
        assert_eq!(q, RatPoly::from_ints(&[-2, 1]));
        assert!(r.is_zero());
        let g = p.gcd(&RatPoly::from_ints(&[2, 3, 1]));
        assert_eq!(g, a);
        assert_eq!(p.to_string(), "s^2 - s - 2");
    }

    #[test]
    fn companion_layout() {
        let c = RatPoly::from_ints(&[-2, -1, 1]).companion();
        assert_eq!(c, RatMatrix::from_ints(&[vec![1, 1], vec![2, 0]]));
        let p = RatPoly::from_ints(&[-2, -1, 1]);
        assert!(p.eval_matrix(&c).is_zero());
    }

    #[test]
    fn expm_scalar_and_zero() {
        let a = RealMatrix::from_rows(vec![vec![-0.05]]).unwrap();
        assert!((a.expm().unwrap()[(0, 0)] - (-0.05f64).exp()).abs() < 1e-15);
        let z = RealMatrix::zeros(3, 3).expm().unwrap();
        assert_eq!(z, RealMatrix::identity(3));
        let rot = RealMatrix::from_rows(vec![vec![0.0, 3.0], vec![-3.0, 0.0]]).unwrap();
        let e = rot.expm().unwrap();
        assert!((e[(0, 0)] - 3f64.cos()).abs() < 1e-12);
        assert!((e[(0, 1)] - 3f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_estimates() {
        let a = RealMatrix::from_rows(vec![vec![0.5, 10.0], vec![0.0, -0.9]]).unwrap();
        assert!((a.spectral_radius() - 0.9).abs() < 1e-3);
        let rot = RealMatrix::from_rows(vec![vec![0.0, 1.1], vec![-1.1, 0.0]]).unwrap();
        assert!((rot.spectral_radius() - 1.1).abs() < 1e-3);
    }
}
