//! Topological fans: the simplicial complex Σ with ray data β, validation
//! against the fan axioms, dual families, and Ker λ relation extraction.
//!
//! Rays are 1-indexed to match the vertex set `[m] = {1, …, m}`; cones are
//! subsets of `[m]`. The empty cone is always a member.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_complex::Complex;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exact::{lp_feasible, smith_divisors, Feasibility, Mat};
use crate::rring::{bracket, cochar_eval, pow, RScalar, RVector, Real, RingError, TorusPoint};

pub type Cone = BTreeSet<usize>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FanError {
    #[error("fan dimension must be positive")]
    ZeroDimension,
    #[error("ray {0} has {1} components, expected {2}")]
    RayLength(usize, usize, usize),
    #[error("duplicate ray data at indices {0} and {1}")]
    DuplicateRay(usize, usize),
    #[error("cone references ray {0} outside 1..={1}")]
    RayIndexOutOfRange(usize, usize),
    #[error("cone {0:?} has more than n = {1} rays")]
    ConeTooLarge(Vec<usize>, usize),
    #[error("cone {0:?} is not a cone of the fan")]
    NotACone(Vec<usize>),
    #[error("cone {0:?} is not maximal (|I| = n required)")]
    NotMaximal(Vec<usize>),
    #[error("winding matrix of cone {0:?} is not unimodular")]
    NotUnimodular(Vec<usize>),
    #[error("b-matrix of cone {0:?} is singular")]
    SingularCone(Vec<usize>),
    #[error(transparent)]
    Ring(#[from] RingError),
}

/// A topological fan `(Σ, β)` of dimension n with m rays.
#[derive(Debug, Clone, PartialEq)]
pub struct Fan {
    n: usize,
    rays: Vec<RVector>,
    cones: BTreeSet<Cone>,
}

impl Fan {
    /// Builds a fan from ray data and generating cones. The subset closure
    /// and the empty cone are added automatically.
    pub fn new(
        n: usize,
        rays: Vec<RVector>,
        generators: Vec<Vec<usize>>,
    ) -> Result<Self, FanError> {
        if n == 0 {
            return Err(FanError::ZeroDimension);
        }
        let m = rays.len();
        for (idx, ray) in rays.iter().enumerate() {
            if ray.len() != n {
                return Err(FanError::RayLength(idx + 1, ray.len(), n));
            }
        }
        for i in 0..m {
            for j in i + 1..m {
                if rays[i] == rays[j] {
                    return Err(FanError::DuplicateRay(i + 1, j + 1));
                }
            }
        }
        let mut cones: BTreeSet<Cone> = BTreeSet::new();
        cones.insert(Cone::new());
        for g in generators {
            let cone: Cone = g.iter().copied().collect();
            for &r in &cone {
                if r == 0 || r > m {
                    return Err(FanError::RayIndexOutOfRange(r, m));
                }
            }
            if cone.len() > n {
                return Err(FanError::ConeTooLarge(cone.iter().copied().collect(), n));
            }
            insert_with_subsets(&mut cones, &cone);
        }
        Ok(Self { n, rays, cones })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    /// Ray data for the 1-indexed ray `i`.
    pub fn ray(&self, i: usize) -> &RVector {
        &self.rays[i - 1]
    }

    pub fn rays(&self) -> &[RVector] {
        &self.rays
    }

    pub fn cones(&self) -> impl Iterator<Item = &Cone> {
        self.cones.iter()
    }

    pub fn contains_cone(&self, cone: &Cone) -> bool {
        self.cones.contains(cone)
    }

    /// Cones with exactly n rays.
    pub fn maximal_cones(&self) -> Vec<Cone> {
        self.cones
            .iter()
            .filter(|c| c.len() == self.n)
            .cloned()
            .collect()
    }

    /// Cones not properly contained in another cone.
    pub fn inclusion_maximal_cones(&self) -> Vec<Cone> {
        self.cones
            .iter()
            .filter(|c| {
                !self
                    .cones
                    .iter()
                    .any(|d| d.len() > c.len() && c.is_subset(d))
            })
            .cloned()
            .collect()
    }

    fn b_matrix(&self, cone: &Cone) -> Mat<BigRational> {
        Mat::from_rows(
            cone.iter()
                .map(|&i| self.ray(i).entries().iter().map(|e| e.b.clone()).collect())
                .collect(),
        )
    }

    fn c_matrix(&self, cone: &Cone) -> Mat<BigRational> {
        Mat::from_rows(
            cone.iter()
                .map(|&i| self.ray(i).entries().iter().map(|e| e.c.clone()).collect())
                .collect(),
        )
    }

    fn v_matrix_int(&self, cone: &Cone) -> Vec<Vec<BigInt>> {
        cone.iter()
            .map(|&i| self.ray(i).entries().iter().map(|e| e.v.clone()).collect())
            .collect()
    }

    fn v_matrix(&self, cone: &Cone) -> Mat<BigRational> {
        Mat::from_rows(
            self.v_matrix_int(cone)
                .into_iter()
                .map(|row| row.into_iter().map(BigRational::from).collect())
                .collect(),
        )
    }

    /// The dual family `{α_i}` of a maximal cone: `⟨α_i, β_j⟩ = δ_ij·𝟏`.
    ///
    /// Writing rows `β_i = (b_i + i c_i, v_i)` as matrices B, C, V and the
    /// unknown `α_i = (a_i + i ã_i, u_i)` as A, Ã, U, the bracket conditions
    /// split into `A·Bᵀ = I` over ℚ, `U·Vᵀ = I` over ℤ, and `Ã·Vᵀ = −A·Cᵀ`.
    pub fn dual_family(&self, cone: &Cone) -> Result<DualFamily, FanError> {
        let as_vec = |c: &Cone| c.iter().copied().collect::<Vec<_>>();
        if !self.contains_cone(cone) {
            return Err(FanError::NotACone(as_vec(cone)));
        }
        if cone.len() != self.n {
            return Err(FanError::NotMaximal(as_vec(cone)));
        }
        let b = self.b_matrix(cone);
        let c = self.c_matrix(cone);
        let v = self.v_matrix(cone);
        let a = b
            .transpose()
            .inverse()
            .ok_or_else(|| FanError::SingularCone(as_vec(cone)))?;
        let vt_inv = v
            .transpose()
            .inverse()
            .ok_or_else(|| FanError::NotUnimodular(as_vec(cone)))?;
        let a_tilde = a.matmul(&c.transpose()).neg().matmul(&vt_inv);
        let mut alphas = BTreeMap::new();
        for (row, &i) in cone.iter().enumerate() {
            let mut entries = Vec::with_capacity(self.n);
            for k in 0..self.n {
                let u = &vt_inv[(row, k)];
                if !u.is_integer() {
                    return Err(FanError::NotUnimodular(as_vec(cone)));
                }
                entries.push(RScalar::new(
                    a[(row, k)].clone(),
                    a_tilde[(row, k)].clone(),
                    u.to_integer(),
                ));
            }
            alphas.insert(i, RVector::new(entries));
        }
        let family = DualFamily {
            cone: cone.clone(),
            alphas,
        };
        // The frozen contract: exact duality against the ray data.
        for (&i, alpha) in &family.alphas {
            for &j in cone {
                let val = bracket(alpha, self.ray(j));
                let expect = if i == j {
                    RScalar::one()
                } else {
                    RScalar::zero()
                };
                assert_eq!(val, expect, "dual family contract violated at ({i},{j})");
            }
        }
        Ok(family)
    }

    /// Ker λ presentation attached to a maximal cone: one monomial relation
    /// per `i ∈ I`, with exponent `𝟏` on ray i and `⟨α_i, β_k⟩` on rays
    /// outside I.
    pub fn kernel_relations(&self, cone: &Cone) -> Result<Vec<KernelRelation>, FanError> {
        let dual = self.dual_family(cone)?;
        let m = self.ray_count();
        let mut relations = Vec::with_capacity(cone.len());
        for &i in cone {
            let alpha = &dual.alphas[&i];
            let mut exponents = vec![RScalar::zero(); m];
            exponents[i - 1] = RScalar::one();
            for k in 1..=m {
                if !cone.contains(&k) {
                    exponents[k - 1] = bracket(alpha, self.ray(k));
                }
            }
            relations.push(KernelRelation {
                pivot_ray: i,
                exponents,
            });
        }
        Ok(relations)
    }

    /// `λ(h) = Π_k λ_{β_k}(h_k)`, the homomorphism (ℂ*)ᵐ → (ℂ*)ⁿ whose
    /// kernel the relations present.
    pub fn lambda_eval<T: Real>(&self, h: &[Complex<T>]) -> Result<TorusPoint<T>, RingError> {
        assert_eq!(h.len(), self.ray_count());
        let mut acc = TorusPoint::identity(self.n);
        for (k, &hk) in h.iter().enumerate() {
            acc = acc.mul(&cochar_eval(self.ray(k + 1), hk)?);
        }
        Ok(acc)
    }

    /// Samples an element of Ker λ from the cone's presentation: free
    /// coordinates off the cone, pivot coordinates solved from the relations.
    pub fn sample_kernel_element<R: Rng>(
        &self,
        cone: &Cone,
        rng: &mut R,
    ) -> Result<Vec<Complex<f64>>, FanError> {
        let relations = self.kernel_relations(cone)?;
        let m = self.ray_count();
        let mut h = vec![Complex::new(1.0, 0.0); m];
        for k in 1..=m {
            if !cone.contains(&k) {
                h[k - 1] = Complex::from_polar(
                    rng.gen_range(0.6..1.6),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                );
            }
        }
        for rel in &relations {
            let mut prod = Complex::new(1.0, 0.0);
            for k in 1..=m {
                if k == rel.pivot_ray || cone.contains(&k) {
                    continue;
                }
                prod *= pow(h[k - 1], &rel.exponents[k - 1])?;
            }
            h[rel.pivot_ray - 1] = prod.inv();
        }
        Ok(h)
    }

    /// Full validation against the fan axioms. Deterministic given the
    /// options' seed (used only by the sampling fallback).
    pub fn validate(&self, opts: &ValidateOptions) -> ValidationReport {
        ValidationReport {
            simplicial: self.check_simplicial(),
            independence: self.check_independence(),
            primitivity: self.check_primitivity(),
            cone_intersection: self.check_cone_intersection(),
            nonsingularity: self.check_nonsingularity(),
            completeness: self.check_completeness_facets(),
            completeness_sampling: self.check_completeness_sampling(opts),
        }
    }

    fn check_simplicial(&self) -> Verdict {
        if !self.cones.contains(&Cone::new()) {
            return Verdict::fail("the empty cone is missing");
        }
        for cone in &self.cones {
            for &i in cone {
                let mut sub = cone.clone();
                sub.remove(&i);
                if !self.cones.contains(&sub) {
                    return Verdict::fail(format!(
                        "subset {:?} of cone {:?} is missing",
                        sub, cone
                    ));
                }
            }
        }
        if !self.cones.iter().any(|c| c.len() == self.n) {
            return Verdict::fail(format!("no cone of maximal cardinality n = {}", self.n));
        }
        Verdict::pass()
    }

    fn check_independence(&self) -> Verdict {
        for cone in self.inclusion_maximal_cones() {
            if cone.is_empty() {
                continue;
            }
            if self.b_matrix(&cone).rank() != cone.len() {
                return Verdict::fail(format!("b-vectors of cone {:?} are dependent", cone));
            }
            if self.v_matrix(&cone).rank() != cone.len() {
                return Verdict::fail(format!("v-vectors of cone {:?} are dependent", cone));
            }
        }
        Verdict::pass()
    }

    fn check_primitivity(&self) -> Verdict {
        for i in 1..=self.ray_count() {
            let gcd = self
                .ray(i)
                .entries()
                .iter()
                .fold(BigInt::zero(), |acc, e| acc.gcd(&e.v));
            if !gcd.is_one() {
                return Verdict::fail(format!("ray {} has v with gcd {}", i, gcd));
            }
        }
        Verdict::pass()
    }

    /// `∠b_I ∩ ∠b_J = ∠b_{I∩J}` for inclusion-maximal pairs, decided by exact
    /// LP: a common point with conic mass off the shared rays exists iff the
    /// condition fails. Faces inherit the property from their parents.
    fn check_cone_intersection(&self) -> Verdict {
        let maximal = self.inclusion_maximal_cones();
        for (a, cone_i) in maximal.iter().enumerate() {
            for cone_j in maximal.iter().skip(a + 1) {
                if let Some(witness) = self.intersection_violation(cone_i, cone_j) {
                    return Verdict::fail(format!(
                        "cones {:?} and {:?} overlap outside their common face (witness {})",
                        cone_i, cone_j, witness
                    ));
                }
            }
        }
        Verdict::pass()
    }

    fn intersection_violation(&self, cone_i: &Cone, cone_j: &Cone) -> Option<String> {
        let shared: Cone = cone_i.intersection(cone_j).copied().collect();
        let vars_i: Vec<usize> = cone_i.iter().copied().collect();
        let vars_j: Vec<usize> = cone_j.iter().copied().collect();
        let ncols = vars_i.len() + vars_j.len();
        if ncols == 0 {
            return None;
        }
        // Rows: Σ s_i b_i − Σ t_j b_j = 0, and unit total mass off the
        // shared rays (scale-invariance makes the normalization harmless).
        let mut mat = Mat::<BigRational>::zeros(self.n + 1, ncols);
        let mut rhs = vec![BigRational::zero(); self.n + 1];
        for (col, &i) in vars_i.iter().enumerate() {
            for k in 0..self.n {
                mat[(k, col)] = self.ray(i).entry(k).b.clone();
            }
            if !shared.contains(&i) {
                mat[(self.n, col)] = BigRational::one();
            }
        }
        for (col, &j) in vars_j.iter().enumerate() {
            let col = vars_i.len() + col;
            for k in 0..self.n {
                mat[(k, col)] = -self.ray(j).entry(k).b.clone();
            }
            if !shared.contains(&j) {
                mat[(self.n, col)] = BigRational::one();
            }
        }
        rhs[self.n] = BigRational::one();
        match lp_feasible(&mat, &rhs) {
            Feasibility::Feasible(x) => {
                let point: Vec<String> = (0..self.n)
                    .map(|k| {
                        let coord: BigRational = vars_i
                            .iter()
                            .enumerate()
                            .map(|(col, &i)| &x[col] * &self.ray(i).entry(k).b)
                            .sum();
                        coord.to_string()
                    })
                    .collect();
                Some(format!("({})", point.join(", ")))
            }
            Feasibility::Infeasible => None,
        }
    }

    fn check_nonsingularity(&self) -> Verdict {
        for cone in &self.cones {
            if cone.is_empty() {
                continue;
            }
            let divisors = smith_divisors(&self.v_matrix_int(cone));
            if divisors.len() != cone.len() || divisors.iter().any(|d| !d.is_one()) {
                return Verdict::fail(format!(
                    "v-matrix of cone {:?} has elementary divisors [{}]",
                    cone,
                    divisors
                        .iter()
                        .map(BigInt::to_string)
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
        }
        Verdict::pass()
    }

    /// Facet criterion for completeness: the fan is pure of dimension n,
    /// every (n−1)-cone lies in exactly two n-cones, and the adjacency graph
    /// of n-cones is connected.
    fn check_completeness_facets(&self) -> Verdict {
        let top: Vec<Cone> = self.maximal_cones();
        if top.is_empty() {
            return Verdict::fail("no cones of full dimension");
        }
        for cone in self.inclusion_maximal_cones() {
            if cone.len() != self.n {
                return Verdict::fail(format!(
                    "cone {:?} is maximal but has only {} rays",
                    cone,
                    cone.len()
                ));
            }
        }
        let ridges: Vec<&Cone> = self
            .cones
            .iter()
            .filter(|c| c.len() == self.n - 1)
            .collect();
        let mut adjacency: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for ridge in ridges {
            let containing: Vec<usize> = top
                .iter()
                .enumerate()
                .filter(|(_, t)| ridge.is_subset(t))
                .map(|(idx, _)| idx)
                .collect();
            if containing.len() != 2 {
                return Verdict::fail(format!(
                    "facet {:?} lies in {} full-dimensional cones (need exactly 2)",
                    ridge,
                    containing.len()
                ));
            }
            adjacency
                .entry(containing[0])
                .or_default()
                .insert(containing[1]);
            adjacency
                .entry(containing[1])
                .or_default()
                .insert(containing[0]);
        }
        // Connectivity of the dual graph.
        let mut seen = BTreeSet::new();
        let mut stack = vec![0usize];
        while let Some(t) = stack.pop() {
            if !seen.insert(t) {
                continue;
            }
            if let Some(nbrs) = adjacency.get(&t) {
                stack.extend(nbrs.iter().copied());
            }
        }
        if seen.len() != top.len() {
            return Verdict::fail(format!(
                "dual graph of full-dimensional cones is disconnected ({} of {} reached)",
                seen.len(),
                top.len()
            ));
        }
        Verdict::pass()
    }

    /// Randomized membership fallback: sampled directions must admit
    /// nonnegative barycentric coordinates in some full cone. Advisory; the
    /// facet criterion is the decision.
    fn check_completeness_sampling(&self, opts: &ValidateOptions) -> Verdict {
        let top = self.maximal_cones();
        if top.is_empty() {
            return Verdict::fail("no cones of full dimension");
        }
        let inverses: Vec<Option<Mat<BigRational>>> = top
            .iter()
            .map(|cone| self.b_matrix(cone).transpose().inverse())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.completeness_samples {
            let x: Vec<BigRational> = (0..self.n)
                .map(|_| BigRational::from_integer(rng.gen_range(-9i64..=9).into()))
                .collect();
            if x.iter().all(Zero::is_zero) {
                continue;
            }
            let covered = inverses.iter().any(|inv| {
                inv.as_ref().is_some_and(|m| {
                    (0..self.n).all(|r| {
                        let coeff: BigRational = (0..self.n).map(|c| &m[(r, c)] * &x[c]).sum();
                        !coeff.is_negative()
                    })
                })
            });
            if !covered {
                let coords: Vec<String> = x.iter().map(BigRational::to_string).collect();
                return Verdict::fail(format!(
                    "sampled direction ({}) uncovered",
                    coords.join(", ")
                ));
            }
        }
        Verdict::pass()
    }
}

fn insert_with_subsets(cones: &mut BTreeSet<Cone>, cone: &Cone) {
    if !cones.insert(cone.clone()) {
        return;
    }
    for &i in cone {
        let mut sub = cone.clone();
        sub.remove(&i);
        insert_with_subsets(cones, &sub);
    }
}

/// One relation of the Ker λ presentation: `Π_k h_k^{e_k} = 1` with exponents
/// indexed by ray (1-based order).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRelation {
    pub pivot_ray: usize,
    pub exponents: Vec<RScalar>,
}

impl KernelRelation {
    /// `|Π_k h_k^{e_k} − 1|` at a sample point.
    pub fn residual(&self, h: &[Complex<f64>]) -> Result<f64, RingError> {
        let mut prod = Complex::new(1.0, 0.0);
        for (k, &hk) in h.iter().enumerate() {
            let e = &self.exponents[k];
            if !e.is_zero() {
                prod *= pow(hk, e)?;
            }
        }
        Ok((prod - Complex::new(1.0, 0.0)).norm())
    }
}

/// Dual family `{α_i}_{i∈I}` of a maximal cone.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFamily {
    pub cone: Cone,
    pub alphas: BTreeMap<usize, RVector>,
}

impl DualFamily {
    pub fn alpha(&self, i: usize) -> &RVector {
        &self.alphas[&i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Verdict {
    fn pass() -> Self {
        Self {
            pass: true,
            witness: None,
        }
    }

    fn fail(witness: impl Into<String>) -> Self {
        Self {
            pass: false,
            witness: Some(witness.into()),
        }
    }
}

/// Per-axiom verdicts. `completeness_sampling` is the advisory fallback and
/// never gates acceptance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub simplicial: Verdict,
    pub independence: Verdict,
    pub primitivity: Verdict,
    pub cone_intersection: Verdict,
    pub nonsingularity: Verdict,
    pub completeness: Verdict,
    pub completeness_sampling: Verdict,
}

impl ValidationReport {
    /// The fan axioms plus nonsingularity; completeness is opt-in via
    /// `require_complete` since the definition does not demand it.
    pub fn accepted(&self, require_complete: bool) -> bool {
        self.simplicial.pass
            && self.independence.pass
            && self.primitivity.pass
            && self.cone_intersection.pass
            && self.nonsingularity.pass
            && (!require_complete || self.completeness.pass)
    }

    pub fn failing_categories(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, v) in [
            ("simplicial", &self.simplicial),
            ("independence", &self.independence),
            ("primitivity", &self.primitivity),
            ("cone-intersection", &self.cone_intersection),
            ("nonsingularity", &self.nonsingularity),
            ("completeness", &self.completeness),
        ] {
            if !v.pass {
                out.push(name);
            }
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in [
            ("simplicial closure", &self.simplicial),
            ("independence", &self.independence),
            ("primitivity", &self.primitivity),
            ("cone intersection", &self.cone_intersection),
            ("nonsingularity", &self.nonsingularity),
            ("completeness (facets)", &self.completeness),
            ("completeness (sampling)", &self.completeness_sampling),
        ] {
            out.push_str(&format!(
                "{:<24} {}{}\n",
                name,
                if v.pass { "pass" } else { "FAIL" },
                v.witness
                    .as_deref()
                    .map(|w| format!("  [{w}]"))
                    .unwrap_or_default()
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub seed: u64,
    pub completeness_samples: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            completeness_samples: 64,
        }
    }
}

#[cfg(test)]
pub(crate) mod test_fans {
    use super::*;
    use crate::rring::RScalar;

    pub fn rv(entries: Vec<(i64, i64, i64)>) -> RVector {
        RVector::new(
            entries
                .into_iter()
                .map(|(b, c, v)| RScalar::from_ints(b, c, v))
                .collect(),
        )
    }

    pub fn rv_q(entries: Vec<((i64, i64), (i64, i64), i64)>) -> RVector {
        RVector::new(
            entries
                .into_iter()
                .map(|(b, c, v)| {
                    RScalar::new(
                        BigRational::new(b.0.into(), b.1.into()),
                        BigRational::new(c.0.into(), c.1.into()),
                        v.into(),
                    )
                })
                .collect(),
        )
    }

    /// The classical projective line: rays ±1.
    pub fn cp1() -> Fan {
        Fan::new(
            1,
            vec![rv(vec![(1, 0, 1)]), rv(vec![(-1, 0, -1)])],
            vec![vec![1], vec![2]],
        )
        .unwrap()
    }

    /// The classical projective plane.
    pub fn cp2() -> Fan {
        Fan::new(
            2,
            vec![
                rv(vec![(1, 0, 1), (0, 0, 0)]),
                rv(vec![(0, 0, 0), (1, 0, 1)]),
                rv(vec![(-1, 0, -1), (-1, 0, -1)]),
            ],
            vec![vec![1, 2], vec![1, 3], vec![2, 3]],
        )
        .unwrap()
    }

    /// The classical projective 3-space.
    pub fn cp3() -> Fan {
        Fan::new(
            3,
            vec![
                rv(vec![(1, 0, 1), (0, 0, 0), (0, 0, 0)]),
                rv(vec![(0, 0, 0), (1, 0, 1), (0, 0, 0)]),
                rv(vec![(0, 0, 0), (0, 0, 0), (1, 0, 1)]),
                rv(vec![(-1, 0, -1), (-1, 0, -1), (-1, 0, -1)]),
            ],
            vec![vec![1, 2, 3], vec![1, 2, 4], vec![1, 3, 4], vec![2, 3, 4]],
        )
        .unwrap()
    }

    /// Hirzebruch surface with twist parameter 1.
    pub fn hirzebruch() -> Fan {
        Fan::new(
            2,
            vec![
                rv(vec![(1, 0, 1), (0, 0, 0)]),
                rv(vec![(0, 0, 0), (1, 0, 1)]),
                rv(vec![(-1, 0, -1), (1, 0, 1)]),
                rv(vec![(0, 0, 0), (-1, 0, -1)]),
            ],
            vec![vec![1, 2], vec![2, 3], vec![3, 4], vec![4, 1]],
        )
        .unwrap()
    }

    /// A projective-line fan with nonzero imaginary exponents.
    pub fn twisted_cp1() -> Fan {
        Fan::new(
            1,
            vec![
                rv_q(vec![((1, 1), (1, 2), 1)]),
                rv_q(vec![((-1, 1), (1, 3), -1)]),
            ],
            vec![vec![1], vec![2]],
        )
        .unwrap()
    }

    /// A projective-plane fan with nonzero imaginary exponents; the b- and
    /// v-data stay classical, so all axioms still hold.
    pub fn twisted_cp2() -> Fan {
        Fan::new(
            2,
            vec![
                rv_q(vec![((1, 1), (1, 2), 1), ((0, 1), (1, 3), 0)]),
                rv_q(vec![((0, 1), (0, 1), 0), ((1, 1), (-1, 2), 1)]),
                rv_q(vec![((-1, 1), (0, 1), -1), ((-1, 1), (1, 5), -1)]),
            ],
            vec![vec![1, 2], vec![1, 3], vec![2, 3]],
        )
        .unwrap()
    }

    /// A single maximal cone spanned by the coordinate axes (a chart fan).
    pub fn affine(n: usize) -> Fan {
        let rays = (0..n)
            .map(|i| {
                RVector::new(
                    (0..n)
                        .map(|k| {
                            if i == k {
                                RScalar::one()
                            } else {
                                RScalar::zero()
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        Fan::new(n, rays, vec![(1..=n).collect()]).unwrap()
    }

    pub fn cone(ids: &[usize]) -> Cone {
        ids.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::test_fans::*;
    use super::*;
    use crate::rring::char_eval;

    #[test]
    fn cp1_validates() {
        let report = cp1().validate(&ValidateOptions::default());
        assert!(report.accepted(true), "{}", report.render_text());
        assert!(report.completeness_sampling.pass);
    }

    #[test]
    fn cp2_hirzebruch_twisted_validate() {
        for fan in [cp2(), cp3(), hirzebruch(), twisted_cp1(), twisted_cp2()] {
            let report = fan.validate(&ValidateOptions::default());
            assert!(report.accepted(true), "{}", report.render_text());
        }
    }

    #[test]
    fn affine_fan_is_valid_but_incomplete() {
        let report = affine(2).validate(&ValidateOptions::default());
        assert!(report.accepted(false));
        assert!(!report.completeness.pass);
        assert!(!report.accepted(true));
    }

    #[test]
    fn non_primitive_ray_rejected() {
        let fan = Fan::new(
            1,
            vec![rv(vec![(1, 0, 1)]), rv(vec![(-1, 0, -2)])],
            vec![vec![1], vec![2]],
        )
        .unwrap();
        let report = fan.validate(&ValidateOptions::default());
        assert!(!report.primitivity.pass);
        assert!(report
            .primitivity
            .witness
            .as_deref()
            .unwrap()
            .contains("ray 2"));
        assert!(report.failing_categories().contains(&"primitivity"));
    }

    #[test]
    fn non_unimodular_cone_rejected() {
        let fan = Fan::new(
            2,
            vec![
                rv(vec![(1, 0, 1), (0, 0, 0)]),
                rv(vec![(1, 0, 1), (2, 0, 2)]),
            ],
            vec![vec![1, 2]],
        )
        .unwrap();
        let report = fan.validate(&ValidateOptions::default());
        assert!(!report.nonsingularity.pass);
    }

    #[test]
    fn missing_cone_breaks_completeness() {
        let fan = Fan::new(
            2,
            vec![
                rv(vec![(1, 0, 1), (0, 0, 0)]),
                rv(vec![(0, 0, 0), (1, 0, 1)]),
                rv(vec![(-1, 0, -1), (-1, 0, -1)]),
            ],
            vec![vec![1, 2], vec![1, 3]],
        )
        .unwrap();
        let report = fan.validate(&ValidateOptions::default());
        assert!(report.accepted(false));
        assert!(!report.completeness.pass);
        assert!(!report.completeness_sampling.pass);
        let witness = report.completeness.witness.unwrap();
        assert!(witness.contains('2') || witness.contains('3'), "{witness}");
    }

    #[test]
    fn overlapping_cones_rejected() {
        let fan = Fan::new(
            2,
            vec![
                rv(vec![(1, 0, 1), (0, 0, 0)]),
                rv(vec![(0, 0, 0), (1, 0, 1)]),
                rv(vec![(1, 0, 1), (1, 0, 1)]),
            ],
            vec![vec![1, 2], vec![3]],
        )
        .unwrap();
        let report = fan.validate(&ValidateOptions::default());
        assert!(!report.cone_intersection.pass);
    }

    #[test]
    fn validation_is_deterministic() {
        let fan = cp2();
        let opts = ValidateOptions {
            seed: 7,
            completeness_samples: 32,
        };
        assert_eq!(fan.validate(&opts), fan.validate(&opts));
    }

    #[test]
    fn malformed_inputs_rejected_at_construction() {
        assert!(matches!(
            Fan::new(1, vec![rv(vec![(1, 0, 1)]), rv(vec![(1, 0, 1)])], vec![]),
            Err(FanError::DuplicateRay(1, 2))
        ));
        assert!(matches!(
            Fan::new(2, vec![rv(vec![(1, 0, 1)])], vec![]),
            Err(FanError::RayLength(1, 1, 2))
        ));
        assert!(matches!(
            Fan::new(1, vec![rv(vec![(1, 0, 1)])], vec![vec![2]]),
            Err(FanError::RayIndexOutOfRange(2, 1))
        ));
    }

    #[test]
    fn cp1_dual_family() {
        let fan = cp1();
        let d1 = fan.dual_family(&cone(&[1])).unwrap();
        assert_eq!(d1.alpha(1), &rv(vec![(1, 0, 1)]));
        let d2 = fan.dual_family(&cone(&[2])).unwrap();
        assert_eq!(d2.alpha(2), &rv(vec![(-1, 0, -1)]));
    }

    #[test]
    fn classical_duals_are_inverse_transposes() {
        // With C = 0 and B = V the duals reduce to (Vᵀ)⁻¹ and ã = 0.
        let fan = cp2();
        for cone in fan.maximal_cones() {
            let dual = fan.dual_family(&cone).unwrap();
            for alpha in dual.alphas.values() {
                for e in alpha.entries() {
                    assert!(e.c.is_zero());
                    assert_eq!(BigRational::from(e.v.clone()), e.b);
                }
            }
        }
    }

    #[test]
    fn twisted_duals_satisfy_contract() {
        // The assert inside dual_family is the exact δ·𝟏 check.
        for fan in [twisted_cp1(), twisted_cp2(), hirzebruch()] {
            for cone in fan.maximal_cones() {
                fan.dual_family(&cone).unwrap();
            }
        }
    }

    #[test]
    fn dual_family_requires_maximal_cone() {
        let fan = cp2();
        assert!(matches!(
            fan.dual_family(&cone(&[1])),
            Err(FanError::NotMaximal(_))
        ));
        assert!(matches!(
            fan.dual_family(&cone(&[1, 2, 3])),
            Err(FanError::NotACone(_))
        ));
    }

    #[test]
    fn cp1_kernel_is_the_diagonal() {
        // ⟨α₁, β₂⟩ = (−1 − 0i, −1), so the relation reads h₁·h₂^{(−1,−1)} =
        // h₁/h₂ = 1: the kernel is the diagonal, matching the classical
        // weight-(1,1) quotient presentation of the projective line.
        let fan = cp1();
        let rels = fan.kernel_relations(&cone(&[1])).unwrap();
        assert_eq!(rels.len(), 1);
        assert_eq!(rels[0].exponents[0], RScalar::one());
        assert_eq!(rels[0].exponents[1], RScalar::from_ints(-1, 0, -1));
        let h = vec![Complex::new(0.3, 0.8), Complex::new(0.3, 0.8)];
        assert!(rels[0].residual(&h).unwrap() < 1e-14);
        let lam = fan.lambda_eval(&h).unwrap();
        assert!((lam.coord(0) - Complex::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn sampled_kernel_elements_satisfy_lambda_and_other_presentations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for fan in [cp1(), cp2(), hirzebruch(), twisted_cp1(), twisted_cp2()] {
            let maximal = fan.maximal_cones();
            for cone_i in &maximal {
                for _ in 0..20 {
                    let h = fan.sample_kernel_element(cone_i, &mut rng).unwrap();
                    let lam = fan.lambda_eval(&h).unwrap();
                    for k in 0..fan.dim() {
                        assert!(
                            (lam.coord(k) - Complex::new(1.0, 0.0)).norm() < 1e-10,
                            "λ(h) ≠ 1 for presentation {:?}",
                            cone_i
                        );
                    }
                    for cone_j in &maximal {
                        for rel in fan.kernel_relations(cone_j).unwrap() {
                            assert!(
                                rel.residual(&h).unwrap() < 1e-10,
                                "presentation {:?} rejected a kernel element of {:?}",
                                cone_j,
                                cone_i
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_sample_respects_character_pairing() {
        // χ^α(λ_β(g)) with dual data recovers g on each matched index.
        let fan = twisted_cp2();
        let cone_i = cone(&[1, 2]);
        let dual = fan.dual_family(&cone_i).unwrap();
        let g = Complex::new(0.4, -0.9);
        for (&i, alpha) in &dual.alphas {
            let t = cochar_eval(fan.ray(i), g).unwrap();
            let val = char_eval(alpha, &t);
            assert!((val - g).norm() < 1e-12, "index {i}");
        }
    }
}
