//! Computations with topological toric manifolds: exact arithmetic in the
//! ring ℛ = ℂ×ℤ of generalized exponents, topological fans with full axiom
//! validation, chart/transition/orbit machinery, Klyachko filtration data
//! with compatibility certificates, and a numerical engine that produces
//! torus eigenframes of equivariant bundles by Haar averaging.
//!
//! Two scalar lanes run through the crate. Exact data (ring elements, ray
//! exponents, filtration subspaces) lives over arbitrary-precision rationals,
//! with the subspace lane generic over the field — ℚ by default, ℚ(i) via
//! [`scalar::GaussRational`]. Numeric evaluation (powers, characters, chart
//! maps) is generic over the float width via [`rring::Real`]; `f64` is the
//! working precision, with the aliases below at the crate root.

pub mod equivariance;
pub mod exact;
pub mod fan;
pub mod io;
pub mod klyachko;
pub mod manifold;
pub mod rring;
pub mod scalar;

pub use num_bigint::BigInt;
pub use num_complex::Complex;
pub use num_rational::BigRational;

/// Working-precision complex scalar.
pub type C64 = num_complex::Complex<f64>;

/// Torus point at working precision.
pub type TorusPoint64 = rring::TorusPoint<f64>;

/// Chart point at working precision.
pub type ChartPoint64 = manifold::ChartPoint<f64>;

/// Exact matrix over ℚ.
pub type MatQ = exact::Mat<BigRational>;

/// Subspace of ℚ^r in canonical form.
pub type SubspaceQ = klyachko::Subspace<BigRational>;

/// Subspace of ℚ(i)^r in canonical form.
pub type SubspaceQi = klyachko::Subspace<scalar::GaussRational>;

/// Filtration data over ℚ.
pub type KlyachkoDataQ = klyachko::KlyachkoData<BigRational>;

/// Filtration data over ℚ(i).
pub type KlyachkoDataQi = klyachko::KlyachkoData<scalar::GaussRational>;
