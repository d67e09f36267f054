//! Exact scalar fields for subspace arithmetic.
//!
//! Filtration subspaces live over an exact field: the rationals by default,
//! the Gaussian rationals ℚ(i) behind a flag. Both implement [`ExactField`]
//! so the linear algebra in [`crate::exact`] and [`crate::klyachko`] is
//! written once.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScalarParseError {
    #[error("cannot parse {0:?} as a rational (expected `p` or `p/q`)")]
    Rational(String),
    #[error("cannot parse {0:?} as a Gaussian rational (expected `a`, `bi`, or `a+bi` / `a-bi`)")]
    Gaussian(String),
}

/// An exact field scalar: cloneable, comparable, with the four operations.
///
/// `parse`/`render` fix the textual form used in data files.
pub trait ExactField:
    Clone
    + PartialEq
    + fmt::Debug
    + fmt::Display
    + Zero
    + One
    + Neg<Output = Self>
    + Sub<Output = Self>
    + Div<Output = Self>
{
    fn from_rational(q: BigRational) -> Self;
    fn from_integer(n: i64) -> Self {
        Self::from_rational(BigRational::from_integer(n.into()))
    }
    fn parse(text: &str) -> Result<Self, ScalarParseError>;
    fn render(&self) -> String;
}

pub fn parse_rational(text: &str) -> Result<BigRational, ScalarParseError> {
    text.trim()
        .parse::<BigRational>()
        .map_err(|_| ScalarParseError::Rational(text.to_owned()))
}

impl ExactField for BigRational {
    fn from_rational(q: BigRational) -> Self {
        q
    }

    fn parse(text: &str) -> Result<Self, ScalarParseError> {
        parse_rational(text)
    }

    fn render(&self) -> String {
        self.to_string()
    }
}

/// An element of ℚ(i): `re + im·i` with exact rational parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GaussRational {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussRational {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Self { re, im }
    }

    pub fn from_parts(re: i64, im: i64) -> Self {
        Self::new(
            BigRational::from_integer(re.into()),
            BigRational::from_integer(im.into()),
        )
    }

    pub fn i() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    /// Squared modulus `re² + im²`, a rational.
    pub fn norm_sq(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }
}

impl fmt::Display for GaussRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", self.re);
        }
        if self.re.is_zero() {
            return write!(f, "{}i", self.im);
        }
        if self.im < BigRational::zero() {
            write!(f, "{}-{}i", self.re, -self.im.clone())
        } else {
            write!(f, "{}+{}i", self.re, self.im)
        }
    }
}

impl Add for GaussRational {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for GaussRational {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Neg for GaussRational {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

impl Mul for GaussRational {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let re = &self.re * &rhs.re - &self.im * &rhs.im;
        let im = &self.re * &rhs.im + &self.im * &rhs.re;
        Self::new(re, im)
    }
}

impl Div for GaussRational {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let n = rhs.norm_sq();
        assert!(!n.is_zero(), "division by zero in Q(i)");
        let conj = rhs.conj();
        let prod = self * conj;
        Self::new(prod.re / n.clone(), prod.im / n)
    }
}

impl Zero for GaussRational {
    fn zero() -> Self {
        Self::new(BigRational::zero(), BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl One for GaussRational {
    fn one() -> Self {
        Self::new(BigRational::one(), BigRational::zero())
    }
}

impl ExactField for GaussRational {
    fn from_rational(q: BigRational) -> Self {
        Self::new(q, BigRational::zero())
    }

    fn parse(text: &str) -> Result<Self, ScalarParseError> {
        let s = text.trim();
        if s.is_empty() {
            return Err(ScalarParseError::Gaussian(text.to_owned()));
        }
        let err = || ScalarParseError::Gaussian(text.to_owned());
        let parse_im = |coeff: &str, neg: bool| -> Result<BigRational, ScalarParseError> {
            let q = match coeff {
                "" | "+" => BigRational::one(),
                "-" => -BigRational::one(),
                other => parse_rational(other)?,
            };
            Ok(if neg { -q } else { q })
        };
        // Split at the sign that separates the real and imaginary parts, if any.
        // The leading character may itself be a sign of the real part.
        let bytes = s.as_bytes();
        let mut split = None;
        for (idx, &b) in bytes.iter().enumerate().skip(1) {
            if (b == b'+' || b == b'-') && bytes[idx - 1] != b'/' {
                split = Some(idx);
                break;
            }
        }
        match split {
            Some(idx) => {
                let (head, tail) = s.split_at(idx);
                let neg = tail.starts_with('-');
                let tail = &tail[1..];
                let im_part = tail.strip_suffix('i').ok_or_else(err)?;
                Ok(Self::new(parse_rational(head)?, parse_im(im_part, neg)?))
            }
            None => {
                if let Some(im_part) = s.strip_suffix('i') {
                    let neg = im_part.starts_with('-');
                    let im_part = if neg { &im_part[1..] } else { im_part };
                    Ok(Self::new(BigRational::zero(), parse_im(im_part, neg)?))
                } else {
                    Ok(Self::from_rational(parse_rational(s)?))
                }
            }
        }
    }

    fn render(&self) -> String {
        self.to_string()
    }
}
