//! Exact linear algebra over the rationals and Gaussian rationals.
//!
//! Everything used during code construction lives here: exact rank via
//! fraction-free elimination, nullspace bases from the reduced row echelon
//! form, and the structural maps between complex dispersion matrices and the
//! real vectors/constraint matrices they are solved through.
//!
//! The vector layout produced by [`map_g`] is column-major and interleaves
//! real and imaginary parts: for antenna column `n` it emits
//! `Re y[0][n], Im y[0][n], ..., Re y[T-1][n], Im y[T-1][n]`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Simulation-side complex matrix.
pub type FloatComplexMatrix = DMatrix<Complex64>;

/// Exact rational scalar, always kept in lowest terms with a positive denominator.
pub type ExactScalar = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("stacked real/imaginary matrix must have an even row count, got {0}")]
    OddRowCount(usize),
    #[error("vector length {got} does not match 2*T*N = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

pub fn int(v: i64) -> ExactScalar {
    BigRational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> ExactScalar {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// A Gaussian rational `re + j im`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct GaussRational {
    pub re: ExactScalar,
    pub im: ExactScalar,
}

impl GaussRational {
    pub fn new(re: ExactScalar, im: ExactScalar) -> Self {
        Self { re, im }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        Self::new(int(re), int(im))
    }

    pub fn zero() -> Self {
        Self::new(ExactScalar::zero(), ExactScalar::zero())
    }

    pub fn one() -> Self {
        Self::new(ExactScalar::one(), ExactScalar::zero())
    }

    /// The imaginary unit.
    pub fn j() -> Self {
        Self::new(ExactScalar::zero(), ExactScalar::one())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -&self.im)
    }

    pub fn scale(&self, k: &ExactScalar) -> Self {
        Self::new(&self.re * k, &self.im * k)
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (rational_to_f64(&self.re), rational_to_f64(&self.im))
    }
}

impl fmt::Display for GaussRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (true, true) => write!(f, "0"),
            (false, true) => write!(f, "{}", self.re),
            (true, false) => write!(f, "{}j", self.im),
            (false, false) => {
                if self.im.is_negative() {
                    write!(f, "{}-{}j", self.re, -&self.im)
                } else {
                    write!(f, "{}+{}j", self.re, self.im)
                }
            }
        }
    }
}

impl Add for &GaussRational {
    type Output = GaussRational;
    fn add(self, rhs: &GaussRational) -> GaussRational {
        GaussRational::new(&self.re + &rhs.re, &self.im + &rhs.im)
    }
}

impl Sub for &GaussRational {
    type Output = GaussRational;
    fn sub(self, rhs: &GaussRational) -> GaussRational {
        GaussRational::new(&self.re - &rhs.re, &self.im - &rhs.im)
    }
}

impl Mul for &GaussRational {
    type Output = GaussRational;
    fn mul(self, rhs: &GaussRational) -> GaussRational {
        GaussRational::new(
            &self.re * &rhs.re - &self.im * &rhs.im,
            &self.re * &rhs.im + &self.im * &rhs.re,
        )
    }
}

impl Neg for &GaussRational {
    type Output = GaussRational;
    fn neg(self) -> GaussRational {
        GaussRational::new(-&self.re, -&self.im)
    }
}

pub fn rational_to_f64(x: &ExactScalar) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactRealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<ExactScalar>,
}

impl ExactRealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ExactScalar::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, ExactScalar::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> ExactScalar) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major integer entries.
    pub fn from_ints(rows: usize, cols: usize, entries: &[i64]) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must equal rows*cols");
        Self {
            rows,
            cols,
            data: entries.iter().map(|&v| int(v)).collect(),
        }
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_rows(rows: &[Vec<ExactScalar>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().cloned().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> &ExactScalar {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: ExactScalar) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[ExactScalar] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn mul_vec(&self, v: &[ExactScalar]) -> Vec<ExactScalar> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .fold(ExactScalar::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn mul(&self, rhs: &ExactRealMatrix) -> Result<ExactRealMatrix, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |r, c| {
            (0..self.cols).fold(ExactScalar::zero(), |acc, k| {
                let a = self.get(r, k);
                if a.is_zero() {
                    acc
                } else {
                    acc + a * rhs.get(k, c)
                }
            })
        }))
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &ExactRealMatrix) -> Result<ExactRealMatrix, MatrixError> {
        if self.cols != below.cols {
            return Err(MatrixError::ShapeMismatch {
                left: self.shape(),
                right: below.shape(),
            });
        }
        let mut data = self.data.clone();
        data.extend(below.data.iter().cloned());
        Ok(Self {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(rational_to_f64).collect()
    }
}

impl fmt::Display for ExactRealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(ToString::to_string).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// Dense row-major matrix of Gaussian rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<GaussRational>,
}

impl ExactComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![GaussRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, GaussRational::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> GaussRational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major integer `(re, im)` pairs.
    pub fn from_int_pairs(rows: usize, cols: usize, entries: &[(i64, i64)]) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must equal rows*cols");
        Self {
            rows,
            cols,
            data: entries
                .iter()
                .map(|&(re, im)| GaussRational::from_ints(re, im))
                .collect(),
        }
    }

    /// Builds `re + j im` from two real matrices of equal shape.
    pub fn from_parts(re: &ExactRealMatrix, im: &ExactRealMatrix) -> Result<Self, MatrixError> {
        if re.shape() != im.shape() {
            return Err(MatrixError::ShapeMismatch {
                left: re.shape(),
                right: im.shape(),
            });
        }
        Ok(Self::from_fn(re.rows, re.cols, |r, c| {
            GaussRational::new(re.get(r, c).clone(), im.get(r, c).clone())
        }))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> &GaussRational {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: GaussRational) {
        self.data[r * self.cols + c] = v;
    }

    pub fn entries(&self) -> &[GaussRational] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<GaussRational> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(GaussRational::is_zero)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn mul(&self, rhs: &ExactComplexMatrix) -> Result<ExactComplexMatrix, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |r, c| {
            (0..self.cols).fold(GaussRational::zero(), |acc, k| {
                let a = self.get(r, k);
                if a.is_zero() {
                    acc
                } else {
                    &acc + &(a * rhs.get(k, c))
                }
            })
        }))
    }

    pub fn add(&self, rhs: &ExactComplexMatrix) -> Result<ExactComplexMatrix, MatrixError> {
        if self.shape() != rhs.shape() {
            return Err(MatrixError::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn neg(&self) -> ExactComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, k: &ExactScalar) -> ExactComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.scale(k)).collect(),
        }
    }

    pub fn scale_complex(&self, k: &GaussRational) -> ExactComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * k).collect(),
        }
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &ExactComplexMatrix) -> Result<ExactComplexMatrix, MatrixError> {
        if self.cols != below.cols {
            return Err(MatrixError::ShapeMismatch {
                left: self.shape(),
                right: below.shape(),
            });
        }
        let mut data = self.data.clone();
        data.extend(below.data.iter().cloned());
        Ok(Self {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    /// Keeps the first `cols` antenna columns.
    pub fn leading_columns(&self, cols: usize) -> ExactComplexMatrix {
        Self::from_fn(self.rows, cols.min(self.cols), |r, c| self.get(r, c).clone())
    }

    pub fn real_part(&self) -> ExactRealMatrix {
        ExactRealMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).re.clone())
    }

    pub fn imag_part(&self) -> ExactRealMatrix {
        ExactRealMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).im.clone())
    }

    /// The `2T x N` real matrix `[Re C; Im C]`.
    pub fn stacked(&self) -> ExactRealMatrix {
        ExactRealMatrix::from_fn(2 * self.rows, self.cols, |r, c| {
            if r < self.rows {
                self.get(r, c).re.clone()
            } else {
                self.get(r - self.rows, c).im.clone()
            }
        })
    }

    /// The `2T x 2N` real representation `[[Re, -Im], [Im, Re]]`.
    pub fn realified(&self) -> ExactRealMatrix {
        let (t, n) = self.shape();
        ExactRealMatrix::from_fn(2 * t, 2 * n, |r, c| {
            let z = self.get(r % t, c % n);
            match (r < t, c < n) {
                (true, true) | (false, false) => z.re.clone(),
                (true, false) => -&z.im,
                (false, true) => z.im.clone(),
            }
        })
    }

    /// Rank over the complex field.
    pub fn rank(&self) -> usize {
        // The real representation has exactly twice the complex rank.
        rank(&self.realified()) / 2
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.rows.min(self.cols)
    }

    pub fn to_f64(&self) -> Vec<(f64, f64)> {
        self.data.iter().map(GaussRational::to_f64).collect()
    }

    pub fn to_float(&self) -> FloatComplexMatrix {
        FloatComplexMatrix::from_fn(self.rows, self.cols, |r, c| {
            let (re, im) = self.get(r, c).to_f64();
            Complex64::new(re, im)
        })
    }
}

impl fmt::Display for ExactComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

fn lcm_of_denominators<'a>(xs: impl IntoIterator<Item = &'a ExactScalar>) -> BigInt {
    xs.into_iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

/// Rank of an exact rational matrix.
///
/// Rows are first cleared of denominators, then reduced with Bareiss'
/// fraction-free elimination so every intermediate stays an integer and every
/// division is exact.
pub fn rank(m: &ExactRealMatrix) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<BigInt>> = (0..rows)
        .map(|r| {
            let l = lcm_of_denominators(m.row(r));
            m.row(r)
                .iter()
                .map(|x| x.numer() * (&l / x.denom()))
                .collect()
        })
        .collect();

    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, pivot);
        for r in rank + 1..rows {
            for c in col + 1..cols {
                let v = (&a[rank][col] * &a[r][c] - &a[r][col] * &a[rank][c]) / &prev;
                a[r][c] = v;
            }
            a[r][col] = BigInt::zero();
        }
        prev = a[rank][col].clone();
        rank += 1;
    }
    rank
}

/// Reduced row echelon form over the rationals; returns the reduced matrix and
/// the pivot column of each nonzero row.
pub fn rref(m: &ExactRealMatrix) -> (ExactRealMatrix, Vec<usize>) {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<ExactScalar>> = (0..rows).map(|r| m.row(r).to_vec()).collect();
    let mut pivots = Vec::new();
    let mut lead = 0;
    for col in 0..cols {
        if lead == rows {
            break;
        }
        let Some(p) = (lead..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(lead, p);
        let inv = a[lead][col].recip();
        for x in a[lead].iter_mut() {
            if !x.is_zero() {
                *x = &*x * &inv;
            }
        }
        for r in 0..rows {
            if r == lead || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for c in col..cols {
                if a[lead][c].is_zero() {
                    continue;
                }
                let delta = &factor * &a[lead][c];
                a[r][c] = &a[r][c] - delta;
            }
        }
        pivots.push(col);
        lead += 1;
    }
    (ExactRealMatrix::from_rows(&a), pivots)
}

/// Basis of `{v : M v = 0}`.
///
/// One vector per free column of the reduced echelon form, scaled by the LCM
/// of its denominators so that every entry is an integer.
pub fn nullspace(m: &ExactRealMatrix) -> Vec<Vec<ExactScalar>> {
    let cols = m.cols();
    let (reduced, pivots) = rref(m);
    let mut is_pivot = vec![false; cols];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    (0..cols)
        .filter(|&c| !is_pivot[c])
        .map(|free| {
            let mut v = vec![ExactScalar::zero(); cols];
            v[free] = ExactScalar::one();
            for (row, &p) in pivots.iter().enumerate() {
                v[p] = -reduced.get(row, free);
            }
            integer_normalize(&v)
        })
        .collect()
}

/// Scales a vector to the smallest integer multiple with coprime entries and
/// (for nonzero vectors) keeps its direction.
pub fn integer_normalize(v: &[ExactScalar]) -> Vec<ExactScalar> {
    let l = lcm_of_denominators(v);
    let ints: Vec<BigInt> = v.iter().map(|x| x.numer() * (&l / x.denom())).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return v.to_vec();
    }
    ints.into_iter()
        .map(|x| BigRational::from_integer(x / &g))
        .collect()
}

/// Vectorizes a stacked `[Re Y; Im Y]` matrix (`2T x N`) column by column.
pub fn map_g(stacked: &ExactRealMatrix) -> Result<Vec<ExactScalar>, MatrixError> {
    let (rows, n) = stacked.shape();
    if rows % 2 != 0 {
        return Err(MatrixError::OddRowCount(rows));
    }
    let t = rows / 2;
    let mut out = Vec::with_capacity(rows * n);
    for col in 0..n {
        for row in 0..t {
            out.push(stacked.get(row, col).clone());
            out.push(stacked.get(t + row, col).clone());
        }
    }
    Ok(out)
}

/// Inverse of [`map_g`], reassembling `Y = Re Y + j Im Y` of shape `T x N`.
pub fn map_g_inv(v: &[ExactScalar], t: usize, n: usize) -> Result<ExactComplexMatrix, MatrixError> {
    if v.len() != 2 * t * n {
        return Err(MatrixError::LengthMismatch {
            expected: 2 * t * n,
            got: v.len(),
        });
    }
    Ok(ExactComplexMatrix::from_fn(t, n, |row, col| {
        let k = 2 * (col * t + row);
        GaussRational::new(v[k].clone(), v[k + 1].clone())
    }))
}

/// `map_g` applied to a complex matrix's `[Re; Im]` stack.
pub fn vectorize(y: &ExactComplexMatrix) -> Vec<ExactScalar> {
    map_g(&y.stacked()).expect("stacked matrices have an even row count")
}

/// Interleaves real and imaginary parts: `[Re c0, Im c0, Re c1, Im c1, ...]`.
pub fn map_e(c: &[GaussRational]) -> Vec<ExactScalar> {
    c.iter()
        .flat_map(|z| [z.re.clone(), z.im.clone()])
        .collect()
}

/// `map_e(-j c)`, i.e. `[Im c0, -Re c0, Im c1, -Re c1, ...]`.
pub fn map_e_rotated(c: &[GaussRational]) -> Vec<ExactScalar> {
    c.iter()
        .flat_map(|z| [z.im.clone(), -&z.re])
        .collect()
}

/// Builds the `N^2 x 2TN` constraint matrix whose nullspace (under
/// [`map_g`]) is the set of `Y` with `C^H Y + Y^H C = 0`.
///
/// Row order: the `N` diagonal rows first, then for every antenna pair
/// `n < i` (n outer, i inner) the pair of rows `(c_i, c_n)` and
/// `(c'_i, -c'_n)` placed in column blocks `n` and `i`.
pub fn build_f(c: &ExactComplexMatrix) -> ExactRealMatrix {
    let (t, n) = c.shape();
    let block = 2 * t;
    let plain: Vec<Vec<ExactScalar>> = (0..n).map(|k| map_e(&c.column(k))).collect();
    let rotated: Vec<Vec<ExactScalar>> = (0..n).map(|k| map_e_rotated(&c.column(k))).collect();

    let mut out = ExactRealMatrix::zeros(n * n, block * n);
    let mut put = |row: usize, blk: usize, values: &[ExactScalar], negate: bool| {
        for (k, v) in values.iter().enumerate() {
            out.set(row, blk * block + k, if negate { -v } else { v.clone() });
        }
    };

    for k in 0..n {
        put(k, k, &plain[k], false);
    }
    let mut row = n;
    for a in 0..n {
        for b in a + 1..n {
            put(row, a, &plain[b], false);
            put(row, b, &plain[a], false);
            put(row + 1, a, &rotated[b], false);
            put(row + 1, b, &rotated[a], true);
            row += 2;
        }
    }
    out
}
