//! Exact dense linear algebra over an [`ExactField`], Smith normal form over
//! ℤ, and a rational phase-1 simplex for cone feasibility questions.
//!
//! Everything here is small and dense; fans and filtration data are desk
//! scale, so correctness is bought with exact arithmetic rather than speed.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::scalar::ExactField;

/// A dense row-major matrix over an exact field.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: ExactField> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_vec(&self) -> Vec<Vec<F>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)].clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)].clone() + a.clone() * rhs[(k, j)].clone();
                }
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.data {
            *e = -e.clone();
        }
        out
    }

    /// In-place reduction to reduced row echelon form; returns pivot columns.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| !self[(i, c)].is_zero()) else {
                continue;
            };
            self.swap_rows(r, p);
            let inv = F::one() / self[(r, c)].clone();
            for j in c..self.cols {
                self[(r, j)] = self[(r, j)].clone() * inv.clone();
            }
            for i in 0..self.rows {
                if i != r && !self[(i, c)].is_zero() {
                    let f = self[(i, c)].clone();
                    for j in c..self.cols {
                        let sub = f.clone() * self[(r, j)].clone();
                        self[(i, j)] = self[(i, j)].clone() - sub;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref().len()
    }

    /// Exact inverse via Gauss-Jordan on `[self | I]`; `None` if singular.
    pub fn inverse(&self) -> Option<Self> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let mut aug = Self::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, n + i)] = F::one();
        }
        let pivots = aug.rref();
        if pivots.len() < n || pivots[n - 1] >= n {
            return None;
        }
        let mut inv = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = aug[(i, n + j)].clone();
            }
        }
        Some(inv)
    }

    /// A basis (as rows) of `{x : self · xᵀ = 0}`.
    pub fn kernel_basis(&self) -> Vec<Vec<F>> {
        let mut m = self.clone();
        let pivots = m.rref();
        let rank = pivots.len();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Vec::with_capacity(free.len());
        for &fc in &free {
            let mut x = vec![F::zero(); self.cols];
            x[fc] = F::one();
            for (r, &pc) in pivots.iter().enumerate().take(rank) {
                x[pc] = -m[(r, fc)].clone();
            }
            basis.push(x);
        }
        basis
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl<F> std::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// Smith normal form divisors (the nonzero diagonal entries, in division
/// order) of an integer matrix.
pub fn smith_divisors(input: &[Vec<BigInt>]) -> Vec<BigInt> {
    let rows = input.len();
    let cols = input.first().map_or(0, Vec::len);
    let mut a = input.to_vec();
    let mut divisors = Vec::new();
    let mut t = 0;
    while t < rows.min(cols) {
        // Find the entry of least nonzero magnitude in the remaining block.
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !a[i][j].is_zero()
                    && pivot.is_none_or(|(pi, pj)| a[i][j].abs() < a[pi][pj].abs())
                {
                    pivot = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        a.swap(t, pi);
        for row in a.iter_mut() {
            row.swap(t, pj);
        }
        // Kill the pivot row and column by euclidean steps; restart whenever
        // a remainder shrinks the pivot.
        loop {
            let mut clean = true;
            for i in t + 1..rows {
                if a[i][t].is_zero() {
                    continue;
                }
                let q = &a[i][t] / &a[t][t];
                for j in t..cols {
                    let sub = &q * &a[t][j];
                    a[i][j] = &a[i][j] - sub;
                }
                if !a[i][t].is_zero() {
                    a.swap(t, i);
                    clean = false;
                }
            }
            for j in t + 1..cols {
                if a[t][j].is_zero() {
                    continue;
                }
                let q = &a[t][j] / &a[t][t];
                for row in a.iter_mut().take(rows).skip(t) {
                    let sub = &q * &row[t];
                    row[j] = &row[j] - sub;
                }
                if !a[t][j].is_zero() {
                    for row in a.iter_mut() {
                        row.swap(t, j);
                    }
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
        // Enforce divisibility of the remaining block by the pivot.
        let mut fixed = true;
        'outer: for i in t + 1..rows {
            for j in t + 1..cols {
                if !(&a[i][j] % &a[t][t]).is_zero() {
                    for jj in t..cols {
                        let add = a[i][jj].clone();
                        a[t][jj] = &a[t][jj] + add;
                    }
                    fixed = false;
                    break 'outer;
                }
            }
        }
        if !fixed {
            continue;
        }
        divisors.push(a[t][t].abs());
        t += 1;
    }
    divisors
}

/// Outcome of an exact feasibility LP `{x ≥ 0 : A·x = b}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<BigRational>),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Phase-1 simplex with Bland's rule over exact rationals.
///
/// Decides whether `{x ≥ 0 : A·x = b}` is nonempty and returns a witness
/// point when it is. Exactness (no floating LP) matters here: cone
/// intersection verdicts feed fan validation.
pub fn lp_feasible(a: &Mat<BigRational>, b: &[BigRational]) -> Feasibility {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(b.len(), m, "rhs length mismatch");

    // Tableau over columns [x | artificials | rhs], one artificial per row.
    let cols = n + m + 1;
    let mut t = vec![vec![BigRational::zero(); cols]; m];
    for i in 0..m {
        let flip = b[i].is_negative();
        for j in 0..n {
            t[i][j] = if flip {
                -a[(i, j)].clone()
            } else {
                a[(i, j)].clone()
            };
        }
        t[i][n + i] = BigRational::one();
        t[i][cols - 1] = if flip { -b[i].clone() } else { b[i].clone() };
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Objective row: minimize the sum of artificials, reduced against the
    // starting basis.
    let mut obj = vec![BigRational::zero(); cols];
    for j in (0..cols).filter(|&j| !(n..n + m).contains(&j)) {
        obj[j] = -t.iter().map(|row| row[j].clone()).sum::<BigRational>();
    }
    let mut obj_val: BigRational = -t
        .iter()
        .map(|row| row[cols - 1].clone())
        .sum::<BigRational>();

    loop {
        // Bland's rule: the lowest-index column with a negative reduced cost.
        let Some(enter) = (0..cols - 1).find(|&j| obj[j].is_negative()) else {
            break;
        };
        // Ratio test, lowest basis index breaking ties.
        let mut leave: Option<usize> = None;
        let mut best: Option<BigRational> = None;
        for (i, row) in t.iter().enumerate() {
            if row[enter].is_positive() {
                let ratio = &row[cols - 1] / &row[enter];
                let better = match &best {
                    None => true,
                    Some(cur) => {
                        ratio < *cur || (ratio == *cur && basis[i] < basis[leave.unwrap()])
                    }
                };
                if better {
                    best = Some(ratio);
                    leave = Some(i);
                }
            }
        }
        let Some(li) = leave else {
            // Phase-1 objective is bounded below by 0, so this cannot happen.
            unreachable!("unbounded phase-1 objective");
        };
        let piv = t[li][enter].clone();
        for e in t[li].iter_mut() {
            *e = &*e / &piv;
        }
        for i in 0..m {
            if i != li && !t[i][enter].is_zero() {
                let f = t[i][enter].clone();
                for j in 0..cols {
                    let sub = &f * &t[li][j];
                    t[i][j] = &t[i][j] - sub;
                }
            }
        }
        if !obj[enter].is_zero() {
            let f = obj[enter].clone();
            for j in 0..cols {
                let sub = &f * &t[li][j];
                obj[j] = &obj[j] - sub;
            }
            obj_val = &obj_val - &f * &t[li][cols - 1];
        }
        basis[li] = enter;
    }

    if !obj_val.is_zero() {
        return Feasibility::Infeasible;
    }
    // Optimum zero: artificials may linger in the basis at level zero.
    let mut x = vec![BigRational::zero(); n];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = t[i][cols - 1].clone();
        }
    }
    Feasibility::Feasible(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type QMat = Mat<BigRational>;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn qm(rows: Vec<Vec<i64>>) -> QMat {
        Mat::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(q).collect())
                .collect(),
        )
    }

    #[test]
    fn rref_and_rank() {
        let mut m = qm(vec![vec![1, 2, 3], vec![2, 4, 6], vec![1, 0, 1]]);
        let pivots = m.rref();
        assert_eq!(pivots, vec![0, 1]);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn inverse_round_trip() {
        let m = qm(vec![vec![2, 1], vec![1, 1]]);
        let inv = m.inverse().unwrap();
        assert_eq!(m.matmul(&inv), Mat::identity(2));
        assert_eq!(inv.matmul(&m), Mat::identity(2));
        let singular = qm(vec![vec![1, 2], vec![2, 4]]);
        assert!(singular.inverse().is_none());
    }

    #[test]
    fn kernel_basis_spans_kernel() {
        let m = qm(vec![vec![1, 2, 3], vec![0, 1, 1]]);
        let basis = m.kernel_basis();
        assert_eq!(basis.len(), 1);
        for x in &basis {
            for i in 0..m.nrows() {
                let dot: BigRational = (0..3).map(|j| &m[(i, j)] * &x[j]).sum();
                assert!(dot.is_zero());
            }
        }
    }

    #[test]
    fn smith_divisors_examples() {
        let one = |rows: Vec<Vec<i64>>| -> Vec<Vec<BigInt>> {
            rows.into_iter()
                .map(|r| r.into_iter().map(BigInt::from).collect())
                .collect()
        };
        assert_eq!(
            smith_divisors(&one(vec![vec![1, 0], vec![0, 1]])),
            vec![BigInt::from(1), BigInt::from(1)]
        );
        assert_eq!(
            smith_divisors(&one(vec![vec![2, 0], vec![0, 3]])),
            vec![BigInt::from(1), BigInt::from(6)]
        );
        // det = 2: not unimodular.
        assert_eq!(
            smith_divisors(&one(vec![vec![1, 0], vec![1, 2]])),
            vec![BigInt::from(1), BigInt::from(2)]
        );
        // Non-square: a single primitive row.
        assert_eq!(
            smith_divisors(&one(vec![vec![2, 3]])),
            vec![BigInt::from(1)]
        );
        assert_eq!(
            smith_divisors(&one(vec![vec![2, 4]])),
            vec![BigInt::from(2)]
        );
    }

    #[test]
    fn smith_divisors_random_det_products() {
        // |det| equals the product of the divisors for square nonsingular
        // matrices; cross-check against cofactor expansion.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let a: Vec<Vec<i64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.gen_range(-4..5)).collect())
                .collect();
            let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
            let big: Vec<Vec<BigInt>> = a
                .iter()
                .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
                .collect();
            let divs = smith_divisors(&big);
            if det == 0 {
                assert!(divs.len() < 3);
            } else {
                let prod: BigInt = divs.iter().product();
                assert_eq!(prod, BigInt::from(det.abs()));
            }
        }
    }

    #[test]
    fn lp_feasibility_basic() {
        // x1 + x2 = 1 with x ≥ 0: feasible.
        let a = qm(vec![vec![1, 1]]);
        let f = lp_feasible(&a, &[q(1)]);
        assert!(f.is_feasible());
        if let Feasibility::Feasible(x) = f {
            let sum: BigRational = x.iter().sum();
            assert_eq!(sum, q(1));
        }
        // x1 - x2 = 0, x1 + x2 = -1: infeasible under x ≥ 0.
        let a = qm(vec![vec![1, -1], vec![1, 1]]);
        assert_eq!(lp_feasible(&a, &[q(0), q(-1)]), Feasibility::Infeasible);
    }

    #[test]
    fn lp_feasibility_witness_satisfies_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let rows = rng.gen_range(1..4);
            let cols = rng.gen_range(1..6);
            let a = qm((0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-3..4)).collect())
                .collect());
            // Build a guaranteed-feasible rhs from a random nonnegative point.
            let x0: Vec<BigRational> = (0..cols).map(|_| q(rng.gen_range(0..3))).collect();
            let b: Vec<BigRational> = (0..rows)
                .map(|i| (0..cols).map(|j| &a[(i, j)] * &x0[j]).sum())
                .collect();
            match lp_feasible(&a, &b) {
                Feasibility::Feasible(x) => {
                    for i in 0..rows {
                        let lhs: BigRational = (0..cols).map(|j| &a[(i, j)] * &x[j]).sum();
                        assert_eq!(lhs, b[i]);
                    }
                    assert!(x.iter().all(|xi| !xi.is_negative()));
                }
                Feasibility::Infeasible => panic!("constructed-feasible LP reported infeasible"),
            }
        }
    }
}
