//! The ring ℛ = ℂ×ℤ of generalized exponents.
//!
//! An element `μ = (b + c·i, v)` has exact rational `b`, `c` and integer `v`.
//! The product is
//!
//! ```text
//! μ₁ μ₂ = (b₁b₂ + i(b₁c₂ + c₁v₂), v₁v₂)
//! ```
//!
//! which is not commutative. Under the bijection with lower-triangular 2×2
//! matrices `[[b, 0], [c, v]]` this product corresponds to the *reversed*
//! matrix product: `embed(x·y) = embed(y)·embed(x)`. That orientation is
//! frozen by tests, together with its numeric shadow
//! `pow(pow(g, μ₁), μ₂) = pow(g, μ₁·μ₂)`.
//!
//! Numeric evaluation of powers `g^μ = |g|^{b+ci}·(g/|g|)^v`, characters and
//! cocharacters is generic over the float width; `f64` is the working
//! precision everywhere in this crate.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, NumAssign, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("0^μ is undefined unless μ = 1 or μ = 0 (got μ = {0})")]
    ZeroBase(String),
    #[error("torus point coordinates must be nonzero (index {0})")]
    ZeroCoordinate(usize),
}

/// Floating scalar used for numeric evaluation: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + NumAssign + fmt::Debug + 'static {}
impl<T: Float + FromPrimitive + NumAssign + fmt::Debug + 'static> Real for T {}

/// An element of ℛ: exponent `(b + c·i, v)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RScalar {
    pub b: BigRational,
    pub c: BigRational,
    pub v: BigInt,
}

impl RScalar {
    pub fn new(b: BigRational, c: BigRational, v: BigInt) -> Self {
        Self { b, c, v }
    }

    /// Shorthand for integer-valued elements `(b + c·i, v)`.
    pub fn from_ints(b: i64, c: i64, v: i64) -> Self {
        Self::new(
            BigRational::from_integer(b.into()),
            BigRational::from_integer(c.into()),
            v.into(),
        )
    }

    /// The multiplicative identity `𝟏 = (1 + 0i, 1)`.
    pub fn one() -> Self {
        Self::from_ints(1, 0, 1)
    }

    pub fn zero() -> Self {
        Self::from_ints(0, 0, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.b.is_zero() && self.c.is_zero() && self.v.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.b.is_one() && self.c.is_zero() && self.v.is_one()
    }

    /// The matrix `[[b, 0], [c, v]]` of the embedding ℛ → S.
    pub fn matrix_embed(&self) -> Mat2 {
        Mat2 {
            entries: [
                [self.b.clone(), BigRational::zero()],
                [self.c.clone(), BigRational::from(self.v.clone())],
            ],
        }
    }

    /// The partial order `≥_s`: `x ≥_s y` iff `x − y = (b + ci, v)` has
    /// `c = 0`, `b` a nonnegative integer, and `b ± v` both nonnegative even.
    pub fn ge_s(&self, other: &RScalar) -> bool {
        let d = self.clone() - other.clone();
        if !d.c.is_zero() || !d.b.is_integer() || d.b.is_negative() {
            return false;
        }
        let b = d.b.to_integer();
        let plus = &b + &d.v;
        let minus = &b - &d.v;
        let even_nonneg = |x: &BigInt| !x.is_negative() && (x % 2u8).is_zero();
        even_nonneg(&plus) && even_nonneg(&minus)
    }
}

/// Pluggable comparator for filtration jumps; `ge_s` is the default.
pub type OrderFn = fn(&RScalar, &RScalar) -> bool;

/// The default jump order.
pub fn ge_s(x: &RScalar, y: &RScalar) -> bool {
    x.ge_s(y)
}

impl fmt::Display for RScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_negative() {
            write!(f, "({}-{}i,{})", self.b, -self.c.clone(), self.v)
        } else {
            write!(f, "({}+{}i,{})", self.b, self.c, self.v)
        }
    }
}

impl Add for RScalar {
    type Output = RScalar;
    fn add(self, rhs: RScalar) -> RScalar {
        RScalar::new(self.b + rhs.b, self.c + rhs.c, self.v + rhs.v)
    }
}

impl Sub for RScalar {
    type Output = RScalar;
    fn sub(self, rhs: RScalar) -> RScalar {
        RScalar::new(self.b - rhs.b, self.c - rhs.c, self.v - rhs.v)
    }
}

impl Neg for RScalar {
    type Output = RScalar;
    fn neg(self) -> RScalar {
        RScalar::new(-self.b, -self.c, -self.v)
    }
}

impl Mul for RScalar {
    type Output = RScalar;
    fn mul(self, rhs: RScalar) -> RScalar {
        &self * &rhs
    }
}

impl Mul for &RScalar {
    type Output = RScalar;
    fn mul(self, rhs: &RScalar) -> RScalar {
        let b = &self.b * &rhs.b;
        let c = &self.b * &rhs.c + &self.c * BigRational::from(rhs.v.clone());
        let v = &self.v * &rhs.v;
        RScalar::new(b, c, v)
    }
}

pub fn r_add(x: &RScalar, y: &RScalar) -> RScalar {
    x.clone() + y.clone()
}

pub fn r_mul(x: &RScalar, y: &RScalar) -> RScalar {
    x * y
}

/// A 2×2 rational matrix, the target of the ℛ-embedding. Used as the
/// independent oracle for the product order convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat2 {
    pub entries: [[BigRational; 2]; 2],
}

impl Mat2 {
    pub fn identity() -> Self {
        let o = BigRational::one;
        let z = BigRational::zero;
        Mat2 {
            entries: [[o(), z()], [z(), o()]],
        }
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut entries = self.entries;
        for (row, rhs_row) in entries.iter_mut().zip(rhs.entries) {
            for (e, r) in row.iter_mut().zip(rhs_row) {
                *e += r;
            }
        }
        Mat2 { entries }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let z = BigRational::zero();
        let mut entries = [[z.clone(), z.clone()], [z.clone(), z]];
        for i in 0..2 {
            for j in 0..2 {
                entries[i][j] = (0..2)
                    .map(|k| &self.entries[i][k] * &rhs.entries[k][j])
                    .sum();
            }
        }
        Mat2 { entries }
    }
}

/// An n-tuple of ℛ-elements; the ambient of characters, cocharacters and rays.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RVector {
    entries: Vec<RScalar>,
}

impl RVector {
    pub fn new(entries: Vec<RScalar>) -> Self {
        Self { entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![RScalar::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RScalar] {
        &self.entries
    }

    pub fn entry(&self, k: usize) -> &RScalar {
        &self.entries[k]
    }

    pub fn add(&self, other: &RVector) -> RVector {
        assert_eq!(self.len(), other.len(), "RVector length mismatch");
        RVector::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(x, y)| x.clone() + y.clone())
                .collect(),
        )
    }

    pub fn sub(&self, other: &RVector) -> RVector {
        assert_eq!(self.len(), other.len(), "RVector length mismatch");
        RVector::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(x, y)| x.clone() - y.clone())
                .collect(),
        )
    }

    /// Componentwise left scaling `t ⊙ α = (t·α¹, …, t·αⁿ)`.
    pub fn left_scale(&self, t: &RScalar) -> RVector {
        RVector::new(self.entries.iter().map(|a| t * a).collect())
    }
}

/// The bracket `⟨α, β⟩ = Σₖ αᵏ βᵏ` (products taken in that order).
///
/// Panics on length mismatch; vector lengths are fixed at the input boundary.
pub fn bracket(alpha: &RVector, beta: &RVector) -> RScalar {
    assert_eq!(alpha.len(), beta.len(), "bracket length mismatch");
    alpha
        .entries
        .iter()
        .zip(&beta.entries)
        .fold(RScalar::zero(), |acc, (a, b)| acc + a * b)
}

/// A point of the torus (ℂ*)ⁿ with nonzero floating coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint<T: Real = f64> {
    coords: Vec<Complex<T>>,
}

impl<T: Real> TorusPoint<T> {
    pub fn new(coords: Vec<Complex<T>>) -> Result<Self, RingError> {
        for (k, z) in coords.iter().enumerate() {
            if z.is_zero() {
                return Err(RingError::ZeroCoordinate(k + 1));
            }
        }
        Ok(Self { coords })
    }

    /// `t = r·e^{iθ}` from moduli and arguments.
    pub fn from_polar(moduli: &[T], args: &[T]) -> Result<Self, RingError> {
        assert_eq!(moduli.len(), args.len());
        Self::new(
            moduli
                .iter()
                .zip(args)
                .map(|(&r, &th)| Complex::from_polar(r, th))
                .collect(),
        )
    }

    pub fn identity(n: usize) -> Self {
        Self {
            coords: vec![Complex::one(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex<T>] {
        &self.coords
    }

    pub fn coord(&self, k: usize) -> Complex<T> {
        self.coords[k]
    }

    /// The moduli `r ∈ ℝ₊ⁿ` of the decomposition `t = r·e^{iθ}`.
    pub fn moduli(&self) -> Vec<T> {
        self.coords.iter().map(|z| z.norm()).collect()
    }

    /// The arguments `θ ∈ ℝⁿ` of the decomposition `t = r·e^{iθ}`.
    pub fn args(&self) -> Vec<T> {
        self.coords.iter().map(|z| z.arg()).collect()
    }

    pub fn mul(&self, other: &TorusPoint<T>) -> TorusPoint<T> {
        assert_eq!(self.dim(), other.dim());
        TorusPoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn inv(&self) -> TorusPoint<T> {
        TorusPoint {
            coords: self.coords.iter().map(|z| z.inv()).collect(),
        }
    }
}

fn rational_to<T: Real>(q: &BigRational) -> T {
    T::from_f64(q.to_f64().expect("rational out of f64 range")).unwrap()
}

fn bigint_to<T: Real>(v: &BigInt) -> T {
    T::from_f64(v.to_f64().expect("integer out of f64 range")).unwrap()
}

/// The generalized power `g^μ = |g|^{b+ci}·(g/|g|)^v`, single-valued via the
/// real logarithm of `|g|`.
///
/// At `g = 0` only the two exponents needed by chart maps are defined:
/// `0^𝟏 = 0` and `0^0 = 1`; anything else is an error.
pub fn pow<T: Real>(g: Complex<T>, mu: &RScalar) -> Result<Complex<T>, RingError> {
    if g.is_zero() {
        if mu.is_one() {
            return Ok(Complex::zero());
        }
        if mu.is_zero() {
            return Ok(Complex::one());
        }
        return Err(RingError::ZeroBase(mu.to_string()));
    }
    let ln_r = g.norm().ln();
    let arg = g.arg();
    let b: T = rational_to(&mu.b);
    let c: T = rational_to(&mu.c);
    let v: T = bigint_to(&mu.v);
    let modulus = (b * ln_r).exp();
    let angle = c * ln_r + v * arg;
    Ok(Complex::from_polar(modulus, angle))
}

/// The character `χ^α(t) = Πₖ tₖ^{αᵏ}`.
pub fn char_eval<T: Real>(alpha: &RVector, t: &TorusPoint<T>) -> Complex<T> {
    assert_eq!(alpha.len(), t.dim(), "character/point dimension mismatch");
    alpha
        .entries
        .iter()
        .zip(t.coords())
        .map(|(a, &z)| pow(z, a).expect("torus coordinates are nonzero"))
        .product()
}

/// The cocharacter `λ_β(g) = (g^{β¹}, …, g^{βⁿ})`.
pub fn cochar_eval<T: Real>(beta: &RVector, g: Complex<T>) -> Result<TorusPoint<T>, RingError> {
    let coords = beta
        .entries
        .iter()
        .map(|bk| pow(g, bk))
        .collect::<Result<Vec<_>, _>>()?;
    TorusPoint::new(coords)
}
