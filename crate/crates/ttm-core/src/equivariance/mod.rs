//! Numerical engine for torus-equivariant bundles over a chart: Haar
//! averaging to a compact-torus-equivariant trivialization, eigenframe
//! extraction, radial transport, simultaneous diagonalization, character
//! recovery, and the extension of the frame over the whole chart.
//!
//! The engine sees a bundle only through [`EquivariantBundle`]: the fiber
//! transport maps `L_t(x): ℰ(x) → ℰ(t·x)` written in some fixed (hidden,
//! non-equivariant) trivialization, with the base torus acting coordinatewise
//! on the chart. Test setups scramble a diagonal ground-truth action by a
//! band-limited gauge; the harness alone knows the ground truth.

pub mod diag;
pub mod line_bundle;
pub mod pipeline;
pub mod quadrature;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rring::{RScalar, RVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error("expected {0} characters of dimension {1}")]
    BadCharacters(usize, usize),
    #[error("gauge coefficient {0} is {1}×{2}, expected {3}×{3}")]
    BadCoefficientShape(usize, usize, usize, usize),
    #[error("gauge term {0} has {1} exponents, expected {2}")]
    BadTermArity(usize, usize, usize),
    #[error("gauge is ill-conditioned on the evaluation region (σ_min = {0:.3e})")]
    IllConditionedGauge(f64),
    #[error("chart ball radius must be positive and modest, got {0}")]
    BadRadius(f64),
    #[error("quadrature node count must be a power of two ≥ 8, got {0}")]
    BadNodeCount(usize),
}

/// Gauge scramble `h(x) = Σ C_m · Π_j x_j^{a_j} x̄_j^{b_j}`: a matrix-valued
/// polynomial in the coordinates and their conjugates, hence a trigonometric
/// polynomial in the arguments and a polynomial in the moduli.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauge {
    pub terms: Vec<GaugeTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTerm {
    pub holo: Vec<u32>,
    pub anti: Vec<u32>,
    pub coeff: DMatrix<Complex64>,
}

impl Gauge {
    pub fn identity(n: usize, k: usize) -> Self {
        Self {
            terms: vec![GaugeTerm {
                holo: vec![0; n],
                anti: vec![0; n],
                coeff: DMatrix::identity(k, k),
            }],
        }
    }

    pub fn eval(&self, x: &[Complex64]) -> DMatrix<Complex64> {
        let k = self.terms[0].coeff.nrows();
        let mut acc = DMatrix::<Complex64>::zeros(k, k);
        for term in &self.terms {
            let mut monomial = Complex64::new(1.0, 0.0);
            for (j, &z) in x.iter().enumerate() {
                if term.holo[j] > 0 {
                    monomial *= z.powu(term.holo[j]);
                }
                if term.anti[j] > 0 {
                    monomial *= z.conj().powu(term.anti[j]);
                }
            }
            acc += &term.coeff * monomial;
        }
        acc
    }

    /// Largest per-axis frequency `|a_j − b_j|` over the terms.
    pub fn trig_degree(&self) -> u32 {
        self.terms
            .iter()
            .flat_map(|t| t.holo.iter().zip(&t.anti).map(|(&a, &b)| a.abs_diff(b)))
            .max()
            .unwrap_or(0)
    }

    /// Largest total polynomial degree `Σ_j (a_j + b_j)` over the terms.
    pub fn poly_degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.holo.iter().sum::<u32>() + t.anti.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }
}

/// A chart-local equivariant-bundle presentation: ground-truth diagonal
/// characters hidden behind a gauge scramble, plus the knobs of the engine.
#[derive(Debug, Clone)]
pub struct EquivariantSetup {
    pub torus_dim: usize,
    pub rank: usize,
    pub characters: Vec<RVector>,
    pub ball_radius: f64,
    pub gauge: Gauge,
    pub quadrature_nodes: usize,
    pub seed: u64,
}

impl EquivariantSetup {
    pub fn validate(&self) -> Result<(), SetupError> {
        if self.characters.len() != self.rank
            || self.characters.iter().any(|c| c.len() != self.torus_dim)
        {
            return Err(SetupError::BadCharacters(self.rank, self.torus_dim));
        }
        if !(self.ball_radius > 0.0 && self.ball_radius <= 1.0) {
            return Err(SetupError::BadRadius(self.ball_radius));
        }
        if self.quadrature_nodes < 8 || !self.quadrature_nodes.is_power_of_two() {
            return Err(SetupError::BadNodeCount(self.quadrature_nodes));
        }
        for (idx, term) in self.gauge.terms.iter().enumerate() {
            if term.holo.len() != self.torus_dim || term.anti.len() != self.torus_dim {
                return Err(SetupError::BadTermArity(
                    idx,
                    term.holo.len(),
                    self.torus_dim,
                ));
            }
            if term.coeff.nrows() != self.rank || term.coeff.ncols() != self.rank {
                return Err(SetupError::BadCoefficientShape(
                    idx,
                    term.coeff.nrows(),
                    term.coeff.ncols(),
                    self.rank,
                ));
            }
        }
        Ok(())
    }

    /// Largest winding magnitude among the ground-truth characters.
    pub fn max_winding(&self) -> u32 {
        self.characters
            .iter()
            .flat_map(|c| {
                c.entries()
                    .iter()
                    .map(|e| e.v.to_i64().unwrap_or(0).unsigned_abs() as u32)
            })
            .max()
            .unwrap_or(0)
    }

    /// Pairwise differences of the characters' winding vectors, the
    /// frequencies a gauge term must avoid (see [`Self::resonant_terms`]).
    pub fn winding_differences(&self) -> Vec<Vec<i64>> {
        let mut diffs = Vec::new();
        for a in &self.characters {
            for b in &self.characters {
                let d: Vec<i64> = a
                    .entries()
                    .iter()
                    .zip(b.entries())
                    .map(|(x, y)| {
                        x.v.to_i64().expect("small winding") - y.v.to_i64().expect("small winding")
                    })
                    .collect();
                if !diffs.contains(&d) {
                    diffs.push(d);
                }
            }
        }
        diffs
    }

    /// Indices of gauge terms whose frequency vector `a − b` collides with a
    /// pairwise winding difference of the characters (the zero difference
    /// included; constant terms are exempt).
    ///
    /// Resonant terms survive the Haar average inside the eigenframe and
    /// make the radial transport genuinely base-point dependent, so the
    /// fixed-point identities the pipeline measures fail for them. Well-posed
    /// setups keep the gauge spectrum disjoint from the winding differences.
    pub fn resonant_terms(&self) -> Vec<usize> {
        let diffs = self.winding_differences();
        self.gauge
            .terms
            .iter()
            .enumerate()
            .filter(|(_, term)| {
                let constant =
                    term.holo.iter().all(|&a| a == 0) && term.anti.iter().all(|&b| b == 0);
                if constant {
                    return false;
                }
                let freq: Vec<i64> = term
                    .holo
                    .iter()
                    .zip(&term.anti)
                    .map(|(&a, &b)| a as i64 - b as i64)
                    .collect();
                diffs.contains(&freq)
            })
            .map(|(idx, _)| idx)
            .collect()
    }
}

/// The engine-facing bundle interface. `transport(t, x)` is the action map
/// `ℰ(x) → ℰ(t·x)` in the presented trivialization; the base action is
/// coordinatewise multiplication on the chart.
pub trait EquivariantBundle {
    fn torus_dim(&self) -> usize;
    fn rank(&self) -> usize;
    fn transport(&self, t: &[Complex64], x: &[Complex64]) -> DMatrix<Complex64>;
}

/// Ground-truth bundle scrambled by a gauge: `L_t(x) = h(t·x)·D(t)·h(x)⁻¹`
/// with `D(t) = diag(χ_i(t))`. With `h` polynomial in `(x, x̄)`, the Haar
/// integrand of the averaging stage is band-limited, which makes the grid
/// rule exact.
pub struct ScrambledBundle {
    setup: EquivariantSetup,
    // Character parts pre-converted to floats; evaluation happens per
    // quadrature node.
    char_b: Vec<Vec<f64>>,
    char_c: Vec<Vec<f64>>,
    char_v: Vec<Vec<f64>>,
}

impl ScrambledBundle {
    pub fn new(setup: EquivariantSetup) -> Result<Self, SetupError> {
        setup.validate()?;
        let to_f = |q: &num_rational::BigRational| q.to_f64().expect("character part out of range");
        let char_b = setup
            .characters
            .iter()
            .map(|c| c.entries().iter().map(|e| to_f(&e.b)).collect())
            .collect();
        let char_c = setup
            .characters
            .iter()
            .map(|c| c.entries().iter().map(|e| to_f(&e.c)).collect())
            .collect();
        let char_v = setup
            .characters
            .iter()
            .map(|c| c.entries().iter().map(|e| e.v.to_f64().unwrap()).collect())
            .collect();
        let bundle = Self {
            setup,
            char_b,
            char_c,
            char_v,
        };
        bundle.check_conditioning()?;
        Ok(bundle)
    }

    pub fn setup(&self) -> &EquivariantSetup {
        &self.setup
    }

    fn check_conditioning(&self) -> Result<(), SetupError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.setup.seed ^ 0x9e3779b97f4a7c15);
        let n = self.setup.torus_dim;
        let mut worst = f64::INFINITY;
        for _ in 0..200 {
            let x: Vec<Complex64> = (0..n)
                .map(|_| {
                    Complex64::from_polar(
                        rng.gen_range(0.0..3.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let h = self.setup.gauge.eval(&x);
            let svd = h.svd(false, false);
            let smin = svd
                .singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            worst = worst.min(smin);
        }
        if worst < 1e-3 {
            return Err(SetupError::IllConditionedGauge(worst));
        }
        Ok(())
    }

    /// `diag(χ_i(t))` from polar data of `t`.
    fn ground_action(&self, moduli: &[f64], args: &[f64]) -> DMatrix<Complex64> {
        let k = self.setup.rank;
        let mut d = DMatrix::<Complex64>::zeros(k, k);
        for i in 0..k {
            let mut log_mod = 0.0;
            let mut angle = 0.0;
            for j in 0..moduli.len() {
                let ln_r = moduli[j].ln();
                log_mod += self.char_b[i][j] * ln_r;
                angle += self.char_c[i][j] * ln_r + self.char_v[i][j] * args[j];
            }
            d[(i, i)] = Complex64::from_polar(log_mod.exp(), angle);
        }
        d
    }
}

impl EquivariantBundle for ScrambledBundle {
    fn torus_dim(&self) -> usize {
        self.setup.torus_dim
    }

    fn rank(&self) -> usize {
        self.setup.rank
    }

    fn transport(&self, t: &[Complex64], x: &[Complex64]) -> DMatrix<Complex64> {
        let moduli: Vec<f64> = t.iter().map(|z| z.norm()).collect();
        let args: Vec<f64> = t.iter().map(|z| z.arg()).collect();
        let tx: Vec<Complex64> = t.iter().zip(x).map(|(a, b)| a * b).collect();
        let d = self.ground_action(&moduli, &args);
        let h_tx = self.setup.gauge.eval(&tx);
        let h_x_inv = self
            .setup
            .gauge
            .eval(x)
            .try_inverse()
            .expect("gauge conditioning checked at construction");
        h_tx * d * h_x_inv
    }
}

/// Deterministic random setup: band-limited gauge with a coefficient budget
/// that keeps `h` invertible on the whole evaluation region.
pub fn random_setup(
    torus_dim: usize,
    rank: usize,
    trig_degree: u32,
    quadrature_nodes: usize,
    seed: u64,
) -> EquivariantSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let characters = (0..rank)
        .map(|_| {
            RVector::new(
                (0..torus_dim)
                    .map(|_| {
                        RScalar::new(
                            num_rational::BigRational::new(
                                rng.gen_range(-4i64..=4).into(),
                                2.into(),
                            ),
                            num_rational::BigRational::new(
                                rng.gen_range(-4i64..=4).into(),
                                2.into(),
                            ),
                            rng.gen_range(-2i64..=2).into(),
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    let mut setup = EquivariantSetup {
        torus_dim,
        rank,
        characters,
        ball_radius: 0.5,
        gauge: Gauge::identity(torus_dim, rank),
        quadrature_nodes,
        seed,
    };
    setup.gauge = random_gauge(
        torus_dim,
        rank,
        trig_degree,
        &setup.winding_differences(),
        &mut rng,
    );
    debug_assert!(setup.resonant_terms().is_empty());
    setup
}

/// Random gauge with total degree ≤ `trig_degree`, coefficient mass small
/// enough for invertibility out to modulus 3 per coordinate, and term
/// frequencies avoiding the given winding differences.
pub fn random_gauge(
    n: usize,
    k: usize,
    trig_degree: u32,
    forbidden: &[Vec<i64>],
    rng: &mut ChaCha8Rng,
) -> Gauge {
    let mut terms = vec![GaugeTerm {
        holo: vec![0; n],
        anti: vec![0; n],
        coeff: DMatrix::identity(k, k),
    }];
    let n_terms = 3;
    // Budget: Σ ‖C_m‖·R^{deg_m} ≤ 0.35 with R = 3.
    let budget = 0.35 / n_terms as f64;
    for _ in 0..n_terms {
        let mut attempts = 0u32;
        let (holo, anti) = loop {
            // If every frequency at this degree is forbidden, widen the band.
            let max_degree = trig_degree.max(1) + attempts / 20;
            attempts += 1;
            let mut holo = vec![0u32; n];
            let mut anti = vec![0u32; n];
            let mut degree_left = max_degree;
            for j in 0..n {
                let d = rng.gen_range(0..=degree_left);
                let split = rng.gen_range(0..=d);
                holo[j] = split;
                anti[j] = d - split;
                degree_left -= d;
            }
            if holo.iter().all(|&a| a == 0) && anti.iter().all(|&b| b == 0) {
                continue;
            }
            let freq: Vec<i64> = holo
                .iter()
                .zip(&anti)
                .map(|(&a, &b)| a as i64 - b as i64)
                .collect();
            if !forbidden.contains(&freq) {
                break (holo, anti);
            }
        };
        let raw = DMatrix::from_fn(k, k, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let total_deg = (holo.iter().sum::<u32>() + anti.iter().sum::<u32>()) as i32;
        let scale = budget / raw.norm().max(1e-9) / 3.0f64.powi(total_deg);
        terms.push(GaugeTerm {
            holo,
            anti,
            coeff: raw * Complex64::new(scale, 0.0),
        });
    }
    Gauge { terms }
}
