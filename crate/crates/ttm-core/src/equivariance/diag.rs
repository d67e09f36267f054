//! Eigendecomposition of small complex matrices and simultaneous
//! diagonalization of commuting families.
//!
//! Eigenvalues come from the complex Schur form; eigenvectors from inverse
//! iteration. Clustered eigenvalues are handled by extracting the whole
//! near-nullspace and recursing on the family restricted to it, which is the
//! refinement path for families with repeated joint characters.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("family is empty or has mismatched shapes")]
    BadFamily,
    #[error("Schur iteration failed to converge")]
    SchurFailed,
    #[error("family does not commute (max residual {0:.3e})")]
    NotCommuting(f64),
    #[error("no generic combination separated the family after {0} attempts (best off-diagonal ratio {1:.3e})")]
    SeparationFailed(usize, f64),
}

/// Result of a simultaneous diagonalization: `p · F · p⁻¹` is diagonal for
/// every family member, to the verified tolerance.
#[derive(Debug, Clone)]
pub struct SimDiag {
    pub p: DMatrix<Complex64>,
    pub p_inv: DMatrix<Complex64>,
    /// Condition number of the eigenvector matrix.
    pub conditioning: f64,
    /// Worst off-diagonal ratio over the family after conjugation.
    pub offdiag: f64,
}

fn frob(m: &DMatrix<Complex64>) -> f64 {
    m.norm()
}

/// Off-diagonal Frobenius mass relative to the whole matrix.
pub fn offdiag_ratio(m: &DMatrix<Complex64>) -> f64 {
    let total = frob(m).max(1e-300);
    let mut off = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                off += m[(i, j)].norm_sqr();
            }
        }
    }
    off.sqrt() / total
}

/// Eigenvalues of a general complex matrix via the Schur form.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>, DiagError> {
    let k = m.nrows();
    if k == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = m
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(DiagError::SchurFailed)?;
    let (_, t) = schur.unpack();
    Ok((0..k).map(|i| t[(i, i)]).collect())
}

/// Eigenvector for an approximate eigenvalue by inverse iteration, with a
/// Rayleigh-quotient polish.
fn inverse_iteration(
    m: &DMatrix<Complex64>,
    lambda: Complex64,
    rng: &mut ChaCha8Rng,
) -> DVector<Complex64> {
    let k = m.nrows();
    let scale = frob(m).max(1.0);
    let mut lam = lambda;
    let mut v = DVector::from_fn(k, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    v /= Complex64::new(v.norm(), 0.0);
    for _ in 0..4 {
        // A slight shift keeps the solve well-posed when lam is exact.
        let shifted = m - DMatrix::identity(k, k) * (lam + Complex64::new(1e-13 * scale, 0.0));
        let lu = shifted.lu();
        if let Some(y) = lu.solve(&v) {
            let norm = y.norm();
            if norm.is_finite() && norm > 0.0 {
                v = y / Complex64::new(norm, 0.0);
            }
        }
        let mv = m * &v;
        lam = v.dotc(&mv);
    }
    v
}

/// Orthonormal basis of the near-nullspace of `m - λI` of the requested
/// dimension, from the smallest right singular vectors.
fn cluster_eigenspace(m: &DMatrix<Complex64>, lambda: Complex64, dim: usize) -> DMatrix<Complex64> {
    let k = m.nrows();
    let shifted = m - DMatrix::identity(k, k) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap()
    });
    let mut basis = DMatrix::<Complex64>::zeros(k, dim);
    for (col, &row) in order.iter().take(dim).enumerate() {
        for i in 0..k {
            basis[(i, col)] = v_t[(row, i)].conj();
        }
    }
    basis
}

fn is_scalar_family(family: &[DMatrix<Complex64>], tol: f64) -> bool {
    family.iter().all(|f| {
        let k = f.nrows();
        let trace = (0..k).map(|i| f[(i, i)]).sum::<Complex64>() / Complex64::new(k as f64, 0.0);
        let dev = f - DMatrix::identity(k, k) * trace;
        frob(&dev) <= tol * frob(f).max(1.0)
    })
}

fn commutation_residual(family: &[DMatrix<Complex64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in family.iter().enumerate() {
        for b in family.iter().skip(i + 1) {
            let comm = a * b - b * a;
            worst = worst.max(frob(&comm) / (frob(a) * frob(b)).max(1e-300));
        }
    }
    worst
}

/// Eigenvector-matrix of a commuting family: columns form a joint eigenbasis.
fn joint_eigenvectors(
    family: &[DMatrix<Complex64>],
    rng: &mut ChaCha8Rng,
    tol: f64,
    depth: usize,
) -> Result<DMatrix<Complex64>, DiagError> {
    let k = family[0].nrows();
    if k == 1 || is_scalar_family(family, tol) {
        return Ok(DMatrix::identity(k, k));
    }
    if depth > 8 {
        return Err(DiagError::SeparationFailed(depth, f64::NAN));
    }
    let mut best_ratio = f64::INFINITY;
    const ATTEMPTS: usize = 6;
    for _ in 0..ATTEMPTS {
        let m = family
            .iter()
            .map(|f| f * Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .reduce(|a, b| a + b)
            .unwrap();
        let Ok(mut lams) = eigenvalues(&m) else {
            continue;
        };
        lams.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        let scale = frob(&m).max(1.0);
        // Group eigenvalues into clusters.
        let mut clusters: Vec<Vec<Complex64>> = Vec::new();
        for lam in lams {
            match clusters.last_mut() {
                Some(c) if (lam - *c.last().unwrap()).norm() < 1e-7 * scale => c.push(lam),
                _ => clusters.push(vec![lam]),
            }
        }
        let mut v = DMatrix::<Complex64>::zeros(k, k);
        let mut col = 0;
        let mut ok = true;
        for cluster in &clusters {
            let mean =
                cluster.iter().sum::<Complex64>() / Complex64::new(cluster.len() as f64, 0.0);
            if cluster.len() == 1 {
                let vec = inverse_iteration(&m, mean, rng);
                v.set_column(col, &vec);
                col += 1;
            } else {
                // Restrict the family to the cluster eigenspace and recurse.
                let basis = cluster_eigenspace(&m, mean, cluster.len());
                let restricted: Vec<DMatrix<Complex64>> = family
                    .iter()
                    .map(|f| basis.adjoint() * f * &basis)
                    .collect();
                let Ok(sub) = joint_eigenvectors(&restricted, rng, tol, depth + 1) else {
                    ok = false;
                    break;
                };
                let lifted = &basis * sub;
                for c in 0..cluster.len() {
                    v.set_column(col, &lifted.column(c).into_owned());
                    col += 1;
                }
            }
        }
        if !ok || col != k {
            continue;
        }
        let Some(v_inv) = v.clone().try_inverse() else {
            continue;
        };
        let ratio = family
            .iter()
            .map(|f| offdiag_ratio(&(&v_inv * f * &v)))
            .fold(0.0f64, f64::max);
        if ratio <= tol {
            return Ok(v);
        }
        best_ratio = best_ratio.min(ratio);
    }
    Err(DiagError::SeparationFailed(ATTEMPTS, best_ratio))
}

/// Simultaneously diagonalizes a commuting family: returns `P` with
/// `P·F·P⁻¹` diagonal for every member, plus conditioning diagnostics.
pub fn simultaneous_diagonalize(
    family: &[DMatrix<Complex64>],
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> Result<SimDiag, DiagError> {
    if family.is_empty() {
        return Err(DiagError::BadFamily);
    }
    let k = family[0].nrows();
    if family.iter().any(|f| f.nrows() != k || f.ncols() != k) {
        return Err(DiagError::BadFamily);
    }
    let comm = commutation_residual(family);
    if comm > 1e-6 {
        return Err(DiagError::NotCommuting(comm));
    }
    let v = joint_eigenvectors(family, rng, tol, 0)?;
    let p = v.clone().try_inverse().ok_or(DiagError::SchurFailed)?;
    let offdiag = family
        .iter()
        .map(|f| offdiag_ratio(&(&p * f * &v)))
        .fold(0.0f64, f64::max);
    let svd = v.clone().svd(false, false);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    Ok(SimDiag {
        p_inv: v,
        p,
        conditioning: if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        },
        offdiag,
    })
}
