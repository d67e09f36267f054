//! Charts, transition maps, the torus action in chart coordinates, and the
//! orbit–cone correspondence.
//!
//! Points are chart-local: a point of `U_I` is its φ_I-coordinate tuple.
//! Global structure enters only through transition maps, whose exponent
//! matrices `⟨α_j^J, β_i⟩` are exact ℛ-data evaluated with floating powers.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::fan::{Cone, Fan, FanError};
use crate::rring::{bracket, char_eval, pow, RScalar, Real, RingError, TorusPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error(transparent)]
    Fan(#[from] FanError),
    #[error("point lives in chart {0:?}, expected {1:?}")]
    ChartMismatch(Vec<usize>, Vec<usize>),
    #[error("coordinate w_{0} = 0 lies outside the overlap domain")]
    OutsideOverlap(usize),
    #[error("cone {0:?} is not a face of chart {1:?}")]
    NotAFace(Vec<usize>, Vec<usize>),
    #[error(transparent)]
    Ring(#[from] RingError),
}

/// φ_I-coordinates of a point of `U_I`: one complex number per ray of I, in
/// increasing ray order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint<T: Real = f64> {
    pub chart: Cone,
    pub coords: Vec<Complex<T>>,
}

impl<T: Real> ChartPoint<T> {
    pub fn new(chart: Cone, coords: Vec<Complex<T>>) -> Self {
        assert_eq!(
            chart.len(),
            coords.len(),
            "chart/coordinate length mismatch"
        );
        Self { chart, coords }
    }

    /// Coordinate attached to ray `i ∈ I`.
    pub fn coord(&self, ray: usize) -> Complex<T> {
        let idx = self
            .chart
            .iter()
            .position(|&r| r == ray)
            .expect("ray not in chart");
        self.coords[idx]
    }

    /// The origin of the chart: the fixed point of `U_I`.
    pub fn origin(chart: Cone) -> Self {
        let len = chart.len();
        Self::new(chart, vec![Complex::zero(); len])
    }
}

/// The distinguished point `γ_J` seen in a chart `I ⊇ J`: zero on the rays of
/// J, one on the rays of `I ∖ J`.
pub fn distinguished_point<T: Real>(
    cone: &Cone,
    chart: &Cone,
) -> Result<ChartPoint<T>, ManifoldError> {
    if !cone.is_subset(chart) {
        return Err(ManifoldError::NotAFace(
            cone.iter().copied().collect(),
            chart.iter().copied().collect(),
        ));
    }
    let coords = chart
        .iter()
        .map(|i| {
            if cone.contains(i) {
                Complex::zero()
            } else {
                Complex::one()
            }
        })
        .collect();
    Ok(ChartPoint::new(chart.clone(), coords))
}

/// Exact exponent matrix of `φ_J ∘ φ_I⁻¹`: entry `(j, i) = ⟨α_j^J, β_i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMap {
    pub source: Cone,
    pub target: Cone,
    pub exponents: Vec<Vec<RScalar>>,
}

impl TransitionMap {
    pub fn exponent(&self, target_ray: usize, source_ray: usize) -> &RScalar {
        let r = self.target.iter().position(|&j| j == target_ray).unwrap();
        let c = self.source.iter().position(|&i| i == source_ray).unwrap();
        &self.exponents[r][c]
    }

    /// Evaluates the transition at a chart point: `w'_j = Π_i w_i^{⟨α_j^J, β_i⟩}`.
    ///
    /// Zero coordinates are legal exactly where the exponent is `0` or `δ·𝟏`;
    /// elsewhere the point lies outside the chart overlap.
    pub fn eval<T: Real>(&self, p: &ChartPoint<T>) -> Result<ChartPoint<T>, ManifoldError> {
        if p.chart != self.source {
            return Err(ManifoldError::ChartMismatch(
                p.chart.iter().copied().collect(),
                self.source.iter().copied().collect(),
            ));
        }
        let mut coords = Vec::with_capacity(self.target.len());
        for row in &self.exponents {
            let mut acc = Complex::<T>::one();
            for (idx, exp) in row.iter().enumerate() {
                if exp.is_zero() {
                    continue;
                }
                let w = p.coords[idx];
                let factor = pow(w, exp).map_err(|e| match e {
                    RingError::ZeroBase(_) => {
                        let ray = *self.source.iter().nth(idx).unwrap();
                        ManifoldError::OutsideOverlap(ray)
                    }
                    other => ManifoldError::Ring(other),
                })?;
                acc *= factor;
            }
            coords.push(acc);
        }
        Ok(ChartPoint::new(self.target.clone(), coords))
    }
}

/// Builds the transition map between two maximal cones of a fan.
pub fn transition(fan: &Fan, source: &Cone, target: &Cone) -> Result<TransitionMap, ManifoldError> {
    let dual_target = fan.dual_family(target)?;
    let exponents = target
        .iter()
        .map(|&j| {
            source
                .iter()
                .map(|&i| bracket(dual_target.alpha(j), fan.ray(i)))
                .collect()
        })
        .collect();
    Ok(TransitionMap {
        source: source.clone(),
        target: target.clone(),
        exponents,
    })
}

/// The torus action in chart coordinates: `w_i ↦ χ^{α_i^I}(t)·w_i`.
pub fn action_eval<T: Real>(
    fan: &Fan,
    t: &TorusPoint<T>,
    p: &ChartPoint<T>,
) -> Result<ChartPoint<T>, ManifoldError> {
    let dual = fan.dual_family(&p.chart)?;
    let coords = p
        .chart
        .iter()
        .zip(&p.coords)
        .map(|(&i, &w)| char_eval(dual.alpha(i), t) * w)
        .collect();
    Ok(ChartPoint::new(p.chart.clone(), coords))
}

/// The orbit through a chart point: the face of the chart spanned by the
/// (numerically) vanishing coordinates.
pub fn orbit_of<T: Real>(p: &ChartPoint<T>, tol: T) -> Cone {
    let scale = p
        .coords
        .iter()
        .map(|w| w.norm())
        .fold(T::one(), |a, b| if b > a { b } else { a });
    p.chart
        .iter()
        .zip(&p.coords)
        .filter(|(_, w)| w.norm() <= tol * scale)
        .map(|(&i, _)| i)
        .collect()
}

/// One node of the orbit poset: the cone, its orbit dimension, and the cones
/// indexing the orbits of its closure `V(J)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitNode {
    pub cone: Vec<usize>,
    pub dim: usize,
    pub closure: Vec<Vec<usize>>,
}

/// An orbit `𝒪(J)` described through its distinguished point: the dimension
/// `n − |J|` and the coordinates of `γ_J` in every maximal chart containing J
/// (zero on the rays of J, one elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitDescriptor<T: Real = f64> {
    pub cone: Cone,
    pub dim: usize,
    pub distinguished: Vec<ChartPoint<T>>,
}

pub fn orbit_descriptor<T: Real>(
    fan: &Fan,
    cone: &Cone,
) -> Result<OrbitDescriptor<T>, ManifoldError> {
    if !fan.contains_cone(cone) {
        return Err(ManifoldError::Fan(FanError::NotACone(
            cone.iter().copied().collect(),
        )));
    }
    let distinguished = fan
        .maximal_cones()
        .into_iter()
        .filter(|top| cone.is_subset(top))
        .map(|top| distinguished_point(cone, &top))
        .collect::<Result<_, _>>()?;
    Ok(OrbitDescriptor {
        cone: cone.clone(),
        dim: fan.dim() - cone.len(),
        distinguished,
    })
}

/// The face poset of Σ with orbit dimensions, closures, and chart
/// decompositions `U_I = ⋃_{J ⊆ I} 𝒪(J)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitPoset {
    pub nodes: Vec<OrbitNode>,
    /// Covering relations: indices `(lower, upper)` into `nodes` with
    /// `cone(lower) ⊂ cone(upper)` and `|upper| = |lower| + 1`.
    pub cover_edges: Vec<(usize, usize)>,
    /// For each maximal cone, the faces whose orbits make up its chart.
    pub charts: BTreeMap<String, Vec<Vec<usize>>>,
}

pub fn orbit_poset(fan: &Fan) -> OrbitPoset {
    let cones: Vec<Cone> = fan.cones().cloned().collect();
    let nodes: Vec<OrbitNode> = cones
        .iter()
        .map(|c| OrbitNode {
            cone: c.iter().copied().collect(),
            dim: fan.dim() - c.len(),
            closure: cones
                .iter()
                .filter(|d| c.is_subset(d))
                .map(|d| d.iter().copied().collect())
                .collect(),
        })
        .collect();
    let mut cover_edges = Vec::new();
    for (a, ca) in cones.iter().enumerate() {
        for (b, cb) in cones.iter().enumerate() {
            if ca.len() + 1 == cb.len() && ca.is_subset(cb) {
                cover_edges.push((a, b));
            }
        }
    }
    let charts = fan
        .maximal_cones()
        .into_iter()
        .map(|top| {
            let key = top
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",");
            let faces = cones
                .iter()
                .filter(|c| c.is_subset(&top))
                .map(|c| c.iter().copied().collect())
                .collect();
            (key, faces)
        })
        .collect();
    OrbitPoset {
        nodes,
        cover_edges,
        charts,
    }
}
