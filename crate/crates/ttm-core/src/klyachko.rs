//! Klyachko filtration data over a fan: exact subspace arithmetic, the
//! per-cone compatibility decision with grading certificates, and morphism
//! checking.
//!
//! A datum is a rank-r space over an exact field with, per ray, a finite
//! step filtration `E^i(μ)` indexed by ℛ-values. Compatibility on a cone I
//! asks for a grading that reconstructs every `E^i` simultaneously. The
//! decision procedure is a dimension ledger over jump tuples: with
//! `W(t) = ∩_i E^i(t_i)` and `D(t) = Σ_{t′ ≩ t} W(t′)`, the datum is
//! compatible iff `Σ_t (dim W(t) − dim D(t)) = r`. Accepted instances carry
//! an explicit certificate that an independent verifier replays; the
//! `oracle` module decides the same question by transversal search.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::exact::Mat;
use crate::fan::{Cone, Fan, FanError};
use crate::rring::{bracket, ge_s, OrderFn, RScalar, RVector};
use crate::scalar::ExactField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KlyachkoError {
    #[error(transparent)]
    Fan(#[from] FanError),
    #[error("ambient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("subspace is not contained in the claimed parent")]
    NotContained,
    #[error("ray {0} has no filtration")]
    MissingRay(usize),
    #[error("ray {0}: jumps {1} and {2} are incomparable under the chosen order")]
    IncomparableJumps(usize, String, String),
    #[error("ray {0}: duplicate jump value {1}")]
    DuplicateJump(usize, String),
    #[error("ray {0}: filtration is not monotone at {1} ≥ {2}")]
    NotMonotone(usize, String, String),
    #[error("ray {0}: no floor jump with the full space")]
    MissingFloor(usize),
    #[error("ray {0}: jump subspace has ambient {1}, expected rank {2}")]
    WrongAmbient(usize, usize, usize),
    #[error("cone {0:?} is not a cone of the fan")]
    NotACone(Vec<usize>),
    #[error("certificate failed verification: {0}")]
    CertificateVerification(String),
}

/// A subspace of F^r held as a reduced-row-echelon basis, so equal subspaces
/// have equal representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<F> {
    ambient: usize,
    basis: Mat<F>,
}

impl<F: ExactField> Subspace<F> {
    pub fn from_rows(ambient: usize, rows: Vec<Vec<F>>) -> Result<Self, KlyachkoError> {
        for row in &rows {
            if row.len() != ambient {
                return Err(KlyachkoError::DimensionMismatch(row.len(), ambient));
            }
        }
        let mut m = Mat::from_rows(rows);
        if m.nrows() == 0 {
            return Ok(Self::zero(ambient));
        }
        let rank = m.rref().len();
        let basis = Mat::from_rows(m.rows_vec().into_iter().take(rank).collect());
        Ok(Self { ambient, basis })
    }

    pub fn zero(ambient: usize) -> Self {
        Self {
            ambient,
            basis: Mat::zeros(0, ambient),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Self {
            ambient,
            basis: Mat::identity(ambient),
        }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis_rows(&self) -> Vec<Vec<F>> {
        self.basis.rows_vec()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient
    }

    pub fn sum(&self, other: &Self) -> Result<Self, KlyachkoError> {
        self.check_ambient(other)?;
        let mut rows = self.basis_rows();
        rows.extend(other.basis_rows());
        Self::from_rows(self.ambient, rows)
    }

    /// Zassenhaus: row-reduce `[S | S]` stacked on `[T | 0]`; rows with zero
    /// left block carry an intersection basis in the right block.
    pub fn intersect(&self, other: &Self) -> Result<Self, KlyachkoError> {
        self.check_ambient(other)?;
        let n = self.ambient;
        let mut rows: Vec<Vec<F>> = Vec::new();
        for r in self.basis_rows() {
            let mut row = r.clone();
            row.extend(r);
            rows.push(row);
        }
        for r in other.basis_rows() {
            let mut row = r;
            row.extend(vec![F::zero(); n]);
            rows.push(row);
        }
        if rows.is_empty() {
            return Ok(Self::zero(n));
        }
        let mut m = Mat::from_rows(rows);
        m.rref();
        let mut out = Vec::new();
        for row in m.rows_vec() {
            let (left, right) = row.split_at(n);
            if left.iter().all(F::is_zero) && !right.iter().all(F::is_zero) {
                out.push(right.to_vec());
            }
        }
        Self::from_rows(n, out)
    }

    pub fn contains(&self, other: &Self) -> Result<bool, KlyachkoError> {
        self.check_ambient(other)?;
        Ok(self.sum(other)?.dim() == self.dim())
    }

    pub fn contains_vector(&self, v: &[F]) -> Result<bool, KlyachkoError> {
        let single = Self::from_rows(self.ambient, vec![v.to_vec()])?;
        self.contains(&single)
    }

    /// A direct complement of `inner` inside `self`, found by greedily
    /// extending `inner`'s basis with rows of `self`.
    pub fn complement_in(&self, inner: &Self) -> Result<Self, KlyachkoError> {
        self.check_ambient(inner)?;
        if !self.contains(inner)? {
            return Err(KlyachkoError::NotContained);
        }
        let mut acc = inner.basis_rows();
        let mut picked = Vec::new();
        let mut rank = inner.dim();
        for row in self.basis_rows() {
            let mut rows = acc.clone();
            rows.push(row.clone());
            let candidate = Self::from_rows(self.ambient, rows)?;
            if candidate.dim() > rank {
                rank = candidate.dim();
                acc.push(row.clone());
                picked.push(row);
            }
        }
        Self::from_rows(self.ambient, picked)
    }

    /// Image under a linear map given as a `rows_out × ambient` matrix
    /// (column-vector convention).
    pub fn image_under(&self, map: &Mat<F>) -> Result<Subspace<F>, KlyachkoError> {
        if map.ncols() != self.ambient {
            return Err(KlyachkoError::DimensionMismatch(map.ncols(), self.ambient));
        }
        let rows = self
            .basis_rows()
            .into_iter()
            .map(|b| {
                (0..map.nrows())
                    .map(|i| {
                        (0..map.ncols())
                            .map(|j| map[(i, j)].clone() * b[j].clone())
                            .fold(F::zero(), |acc, x| acc + x)
                    })
                    .collect()
            })
            .collect();
        Subspace::from_rows(map.nrows(), rows)
    }

    fn check_ambient(&self, other: &Self) -> Result<(), KlyachkoError> {
        if self.ambient != other.ambient {
            return Err(KlyachkoError::DimensionMismatch(
                self.ambient,
                other.ambient,
            ));
        }
        Ok(())
    }
}

/// The step filtration of one ray: listed jumps `(μ, S)` forming a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtration<F> {
    pub jumps: Vec<(RScalar, Subspace<F>)>,
}

impl<F: ExactField> Filtration<F> {
    pub fn new(jumps: Vec<(RScalar, Subspace<F>)>) -> Self {
        Self { jumps }
    }

    /// `E(μ) = Σ_{listed ν ≥ μ} S_ν`; the empty sum is the zero subspace.
    pub fn eval(&self, mu: &RScalar, order: OrderFn, ambient: usize) -> Subspace<F> {
        let mut acc = Subspace::zero(ambient);
        for (nu, s) in &self.jumps {
            if order(nu, mu) {
                acc = acc.sum(s).expect("ambient checked at load");
            }
        }
        acc
    }

    pub fn jump_values(&self) -> Vec<RScalar> {
        self.jumps.iter().map(|(mu, _)| mu.clone()).collect()
    }

    fn validate(&self, ray: usize, rank: usize, order: OrderFn) -> Result<(), KlyachkoError> {
        if self.jumps.is_empty() {
            return Err(KlyachkoError::MissingFloor(ray));
        }
        for (mu, s) in &self.jumps {
            if s.ambient() != rank {
                return Err(KlyachkoError::WrongAmbient(ray, s.ambient(), rank));
            }
            let _ = mu;
        }
        for (a, (mu1, s1)) in self.jumps.iter().enumerate() {
            for (mu2, s2) in self.jumps.iter().skip(a + 1) {
                if mu1 == mu2 {
                    return Err(KlyachkoError::DuplicateJump(ray, mu1.to_string()));
                }
                let ge12 = order(mu1, mu2);
                let ge21 = order(mu2, mu1);
                if !ge12 && !ge21 {
                    return Err(KlyachkoError::IncomparableJumps(
                        ray,
                        mu1.to_string(),
                        mu2.to_string(),
                    ));
                }
                let (hi, lo, shi, slo) = if ge12 {
                    (mu1, mu2, s1, s2)
                } else {
                    (mu2, mu1, s2, s1)
                };
                if !slo.contains(shi)? {
                    return Err(KlyachkoError::NotMonotone(
                        ray,
                        hi.to_string(),
                        lo.to_string(),
                    ));
                }
            }
        }
        let floor_ok = self
            .jumps
            .iter()
            .any(|(mu, s)| s.is_full() && self.jumps.iter().all(|(nu, _)| order(nu, mu)));
        if !floor_ok {
            return Err(KlyachkoError::MissingFloor(ray));
        }
        Ok(())
    }
}

/// Filtration data of rank r over the rays of a fan.
#[derive(Debug, Clone, PartialEq)]
pub struct KlyachkoData<F> {
    pub fan: Fan,
    pub rank: usize,
    pub filtrations: BTreeMap<usize, Filtration<F>>,
}

impl<F: ExactField> KlyachkoData<F> {
    pub fn new(
        fan: Fan,
        rank: usize,
        filtrations: BTreeMap<usize, Filtration<F>>,
    ) -> Result<Self, KlyachkoError> {
        let data = Self {
            fan,
            rank,
            filtrations,
        };
        data.validate(ge_s)?;
        Ok(data)
    }

    pub fn validate(&self, order: OrderFn) -> Result<(), KlyachkoError> {
        for i in 1..=self.fan.ray_count() {
            let filt = self
                .filtrations
                .get(&i)
                .ok_or(KlyachkoError::MissingRay(i))?;
            filt.validate(i, self.rank, order)?;
        }
        Ok(())
    }

    pub fn eval(&self, ray: usize, mu: &RScalar, order: OrderFn) -> Subspace<F> {
        self.filtrations[&ray].eval(mu, order, self.rank)
    }
}

/// One graded piece of a certificate: the jump tuple over the cone's rays,
/// the subspace, and (on maximal cones) a character representative with
/// `⟨χ, β_i⟩ = t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradingPiece<F> {
    pub tuple: BTreeMap<usize, RScalar>,
    pub space: Subspace<F>,
    pub character: Option<RVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradingCertificate<F> {
    pub cone: Cone,
    pub pieces: Vec<GradingPiece<F>>,
}

/// The dimension ledger a rejected cone returns as witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerWitness {
    pub cone: Vec<usize>,
    pub rank: usize,
    pub total: usize,
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub tuple: Vec<(usize, String)>,
    pub dim_w: usize,
    pub dim_d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeOutcome<F> {
    Compatible(GradingCertificate<F>),
    Incompatible(LedgerWitness),
}

impl<F> ConeOutcome<F> {
    pub fn is_compatible(&self) -> bool {
        matches!(self, ConeOutcome::Compatible(_))
    }
}

/// `χ_t = Σ_{i∈I} t_i ⊙ α_i^I`, the character representative of a jump
/// tuple; left-linearity of the bracket gives `⟨χ_t, β_i⟩ = t_i` exactly.
pub fn char_rep(
    tuple: &BTreeMap<usize, RScalar>,
    cone: &Cone,
    fan: &Fan,
) -> Result<RVector, FanError> {
    let dual = fan.dual_family(cone)?;
    let mut acc = RVector::zeros(fan.dim());
    for (&i, t_i) in tuple {
        acc = acc.add(&dual.alpha(i).left_scale(t_i));
    }
    Ok(acc)
}

/// Decides compatibility of the data on one cone.
pub fn check_cone<F: ExactField>(
    data: &KlyachkoData<F>,
    cone: &Cone,
    order: OrderFn,
) -> Result<ConeOutcome<F>, KlyachkoError> {
    if !data.fan.contains_cone(cone) || cone.is_empty() {
        return Err(KlyachkoError::NotACone(cone.iter().copied().collect()));
    }
    data.validate(order)?;
    let rays: Vec<usize> = cone.iter().copied().collect();
    let rank = data.rank;

    // Per-ray jump chains, ascending under the order.
    let mut chains: Vec<Vec<RScalar>> = Vec::with_capacity(rays.len());
    for &i in &rays {
        let mut values = data.filtrations[&i].jump_values();
        values.sort_by(|a, b| {
            if a == b {
                std::cmp::Ordering::Equal
            } else if order(b, a) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        chains.push(values);
    }

    // All jump tuples, as index vectors into the chains.
    let mut tuples: Vec<Vec<usize>> = vec![vec![]];
    for chain in &chains {
        tuples = tuples
            .into_iter()
            .flat_map(|prefix| {
                (0..chain.len()).map(move |lvl| {
                    let mut next = prefix.clone();
                    next.push(lvl);
                    next
                })
            })
            .collect();
    }

    let tuple_values = |idx: &[usize]| -> Vec<RScalar> {
        idx.iter()
            .enumerate()
            .map(|(pos, &lvl)| chains[pos][lvl].clone())
            .collect()
    };

    let w_spaces: Vec<Subspace<F>> = tuples
        .iter()
        .map(|idx| {
            let mut acc = Subspace::full(rank);
            for (pos, &lvl) in idx.iter().enumerate() {
                let e = data.eval(rays[pos], &chains[pos][lvl], order);
                acc = acc.intersect(&e)?;
            }
            Ok(acc)
        })
        .collect::<Result<_, KlyachkoError>>()?;

    // Componentwise strict dominance on index vectors (chains ascend, so the
    // index order realizes the jump order).
    let dominates = |a: &[usize], b: &[usize]| a != b && a.iter().zip(b).all(|(x, y)| x >= y);

    let d_spaces: Vec<Subspace<F>> = tuples
        .iter()
        .map(|t| {
            let mut acc = Subspace::zero(rank);
            for (s_idx, s) in tuples.iter().enumerate() {
                if dominates(s, t) {
                    acc = acc.sum(&w_spaces[s_idx])?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, KlyachkoError>>()?;

    let multiplicities: Vec<usize> = w_spaces
        .iter()
        .zip(&d_spaces)
        .map(|(w, d)| w.dim() - d.dim())
        .collect();
    let total: usize = multiplicities.iter().sum();

    if total != rank {
        let entries = tuples
            .iter()
            .enumerate()
            .filter(|(idx, _)| w_spaces[*idx].dim() > 0)
            .map(|(idx, t)| LedgerEntry {
                tuple: rays
                    .iter()
                    .zip(tuple_values(t))
                    .map(|(&i, mu)| (i, mu.to_string()))
                    .collect(),
                dim_w: w_spaces[idx].dim(),
                dim_d: d_spaces[idx].dim(),
            })
            .collect();
        return Ok(ConeOutcome::Incompatible(LedgerWitness {
            cone: rays,
            rank,
            total,
            entries,
        }));
    }

    // Pieces: complements processed along a descending linear extension of
    // the tuple order.
    let mut processing: Vec<usize> = (0..tuples.len()).collect();
    processing.sort_by_key(|&idx| std::cmp::Reverse(tuples[idx].iter().sum::<usize>()));
    let with_char = cone.len() == data.fan.dim();
    let mut pieces = Vec::new();
    for idx in processing {
        if multiplicities[idx] == 0 {
            continue;
        }
        let space = w_spaces[idx].complement_in(&d_spaces[idx])?;
        let tuple: BTreeMap<usize, RScalar> = rays
            .iter()
            .copied()
            .zip(tuple_values(&tuples[idx]))
            .collect();
        let character = if with_char {
            Some(char_rep(&tuple, cone, &data.fan)?)
        } else {
            None
        };
        pieces.push(GradingPiece {
            tuple,
            space,
            character,
        });
    }
    let certificate = GradingCertificate {
        cone: cone.clone(),
        pieces,
    };
    verify_certificate(data, &certificate, order)
        .map_err(KlyachkoError::CertificateVerification)?;
    Ok(ConeOutcome::Compatible(certificate))
}

/// Independent replay of a certificate: pieces independent and spanning,
/// reconstruction of every listed level of every ray of the cone, and exact
/// bracket identities for the characters.
pub fn verify_certificate<F: ExactField>(
    data: &KlyachkoData<F>,
    cert: &GradingCertificate<F>,
    order: OrderFn,
) -> Result<(), String> {
    let rank = data.rank;
    let mut sum = Subspace::zero(rank);
    let mut dim_total = 0;
    for piece in &cert.pieces {
        sum = sum.sum(&piece.space).map_err(|e| e.to_string())?;
        dim_total += piece.space.dim();
    }
    if dim_total != rank || sum.dim() != rank {
        return Err(format!(
            "pieces have total dimension {dim_total} with span {} (rank {rank})",
            sum.dim()
        ));
    }
    for &i in &cert.cone {
        for mu in data.filtrations[&i].jump_values() {
            let mut rebuilt = Subspace::zero(rank);
            for piece in &cert.pieces {
                let t_i = piece
                    .tuple
                    .get(&i)
                    .ok_or_else(|| format!("piece missing ray {i}"))?;
                if order(t_i, &mu) {
                    rebuilt = rebuilt.sum(&piece.space).map_err(|e| e.to_string())?;
                }
            }
            let expected = data.eval(i, &mu, order);
            if rebuilt != expected {
                return Err(format!(
                    "reconstruction of E^{i}({mu}) has dimension {} (expected {})",
                    rebuilt.dim(),
                    expected.dim()
                ));
            }
        }
    }
    for piece in &cert.pieces {
        if let Some(chi) = &piece.character {
            for (&i, t_i) in &piece.tuple {
                let val = bracket(chi, data.fan.ray(i));
                if &val != t_i {
                    return Err(format!(
                        "character bracket ⟨χ, β_{i}⟩ = {val} but tuple wants {t_i}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Coarsens a certificate to a face: pieces whose tuples agree on the face
/// merge, keeping the first character (all merged characters represent the
/// same class on the face).
pub fn restrict_certificate<F: ExactField>(
    cert: &GradingCertificate<F>,
    face: &Cone,
) -> Result<GradingCertificate<F>, KlyachkoError> {
    let mut merged: Vec<(BTreeMap<usize, RScalar>, Subspace<F>, Option<RVector>)> = Vec::new();
    for piece in &cert.pieces {
        let key: BTreeMap<usize, RScalar> = piece
            .tuple
            .iter()
            .filter(|(i, _)| face.contains(i))
            .map(|(&i, mu)| (i, mu.clone()))
            .collect();
        if let Some(slot) = merged.iter_mut().find(|(k, _, _)| *k == key) {
            slot.1 = slot.1.sum(&piece.space)?;
        } else {
            merged.push((key, piece.space.clone(), piece.character.clone()));
        }
    }
    Ok(GradingCertificate {
        cone: face.clone(),
        pieces: merged
            .into_iter()
            .map(|(tuple, space, character)| GradingPiece {
                tuple,
                space,
                character,
            })
            .collect(),
    })
}

/// Per-cone outcomes over the fan. Maximal cones suffice by coarsening;
/// `exhaustive` checks every nonempty cone.
#[derive(Debug)]
pub struct CompatibilityReport<F> {
    pub outcomes: Vec<(Cone, ConeOutcome<F>)>,
}

impl<F> CompatibilityReport<F> {
    pub fn compatible(&self) -> bool {
        self.outcomes.iter().all(|(_, o)| o.is_compatible())
    }

    pub fn failing_cones(&self) -> Vec<&Cone> {
        self.outcomes
            .iter()
            .filter(|(_, o)| !o.is_compatible())
            .map(|(c, _)| c)
            .collect()
    }
}

pub fn check_all<F: ExactField>(
    data: &KlyachkoData<F>,
    order: OrderFn,
    exhaustive: bool,
) -> Result<CompatibilityReport<F>, KlyachkoError> {
    let cones: Vec<Cone> = if exhaustive {
        data.fan
            .cones()
            .filter(|c| !c.is_empty())
            .cloned()
            .collect()
    } else {
        data.fan.maximal_cones()
    };
    let outcomes = cones
        .into_iter()
        .map(|c| check_cone(data, &c, order).map(|o| (c, o)))
        .collect::<Result<_, _>>()?;
    Ok(CompatibilityReport { outcomes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphismCheck {
    pub ok: bool,
    /// Failing `(ray, jump)` if any.
    pub witness: Option<(usize, RScalar)>,
}

/// `f(E^i(μ)) ⊆ F^i(μ)` at every listed jump of the source datum; the target
/// filtration is evaluated as a step function at the same index.
pub fn check_morphism<F: ExactField>(
    map: &Mat<F>,
    from: &KlyachkoData<F>,
    to: &KlyachkoData<F>,
    order: OrderFn,
) -> Result<MorphismCheck, KlyachkoError> {
    if map.ncols() != from.rank || map.nrows() != to.rank {
        return Err(KlyachkoError::DimensionMismatch(map.ncols(), from.rank));
    }
    if from.fan.ray_count() != to.fan.ray_count() {
        return Err(KlyachkoError::DimensionMismatch(
            from.fan.ray_count(),
            to.fan.ray_count(),
        ));
    }
    for i in 1..=from.fan.ray_count() {
        for mu in from.filtrations[&i].jump_values() {
            let image = from.eval(i, &mu, order).image_under(map)?;
            let target = to.eval(i, &mu, order);
            if !target.contains(&image)? {
                return Ok(MorphismCheck {
                    ok: false,
                    witness: Some((i, mu)),
                });
            }
        }
    }
    Ok(MorphismCheck {
        ok: true,
        witness: None,
    })
}

pub mod oracle {
    //! Transversal-search oracle for the compatibility decision.
    //!
    //! A splitting basis adapted to all filtrations of a cone exists iff some
    //! multiset of jump tuples matches every per-level dimension count and
    //! the tuple intersections `W(t)` admit an independent transversal. The
    //! transversal existence test is the subspace form of Rado's theorem:
    //! `dim Σ_{l∈S} W(t_l) ≥ |S|` for every subset S. This route never looks
    //! at the ledger quantities `D(t)` or `dim W − dim D`.

    use super::*;

    /// Decides compatibility on a cone by exhaustive transversal search.
    pub fn splitting_exists<F: ExactField>(
        data: &KlyachkoData<F>,
        cone: &Cone,
        order: OrderFn,
    ) -> Result<bool, KlyachkoError> {
        let rays: Vec<usize> = cone.iter().copied().collect();
        let rank = data.rank;
        let mut chains: Vec<Vec<RScalar>> = Vec::new();
        for &i in &rays {
            chains.push(data.filtrations[&i].jump_values());
        }
        // Tuple universe and W(t).
        let mut tuples: Vec<Vec<RScalar>> = vec![vec![]];
        for chain in &chains {
            tuples = tuples
                .into_iter()
                .flat_map(|prefix| {
                    chain.iter().map(move |mu| {
                        let mut next = prefix.clone();
                        next.push(mu.clone());
                        next
                    })
                })
                .collect();
        }
        let w_spaces: Vec<Subspace<F>> = tuples
            .iter()
            .map(|t| {
                let mut acc = Subspace::full(rank);
                for (pos, mu) in t.iter().enumerate() {
                    acc = acc.intersect(&data.eval(rays[pos], mu, order))?;
                }
                Ok(acc)
            })
            .collect::<Result<_, KlyachkoError>>()?;

        // Required count per (ray position, listed level).
        let targets: Vec<Vec<usize>> = rays
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                chains[pos]
                    .iter()
                    .map(|mu| data.eval(i, mu, order).dim())
                    .collect()
            })
            .collect();

        let counts_of = |multiset: &[usize]| -> Vec<Vec<usize>> {
            rays.iter()
                .enumerate()
                .map(|(pos, _)| {
                    chains[pos]
                        .iter()
                        .map(|mu| {
                            multiset
                                .iter()
                                .filter(|&&t_idx| order(&tuples[t_idx][pos], mu))
                                .count()
                        })
                        .collect()
                })
                .collect()
        };

        let rado = |multiset: &[usize]| -> Result<bool, KlyachkoError> {
            let r = multiset.len();
            for mask in 1u32..(1 << r) {
                let mut acc = Subspace::zero(rank);
                let mut size = 0;
                for (l, &t_idx) in multiset.iter().enumerate() {
                    if mask & (1 << l) != 0 {
                        acc = acc.sum(&w_spaces[t_idx])?;
                        size += 1;
                    }
                }
                if acc.dim() < size {
                    return Ok(false);
                }
            }
            Ok(true)
        };

        // Enumerate non-decreasing index multisets of size `rank`.
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        while let Some(partial) = stack.pop() {
            if partial.len() == rank {
                if counts_of(&partial) == targets && rado(&partial)? {
                    return Ok(true);
                }
                continue;
            }
            let start = partial.last().copied().unwrap_or(0);
            for next in start..tuples.len() {
                // Prune: counts may only grow toward the targets.
                let mut extended = partial.clone();
                extended.push(next);
                let ok = counts_of(&extended)
                    .iter()
                    .zip(&targets)
                    .all(|(got, want)| got.iter().zip(want).all(|(g, w)| g <= w));
                if ok {
                    stack.push(extended);
                }
            }
        }
        Ok(false)
    }
}
