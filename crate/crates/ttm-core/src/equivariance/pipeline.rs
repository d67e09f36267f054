//! The staged engine: average the presented trivialization over the compact
//! torus, extract a G-eigenframe, measure radial transport, diagonalize the
//! commuting family at the fixed point, recover the characters, and extend
//! the frame over the whole chart.
//!
//! Frame conventions. `M(u)` is the averaged trivialization relative to the
//! presented one, `F(u) = (Q·M(u))⁻¹` the frame matrix whose columns are the
//! G-eigensections in presented coordinates, and transport is measured
//! frame-side: `T(ρ)` with `L_ρ(x)·F(x) = F(ρ·x)·T(ρ)`. The cocycle property
//! of `L` alone makes `T` multiplicative and commuting with the fixed-point
//! representation, which is what the diagonalization stage needs.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::diag::{offdiag_ratio, simultaneous_diagonalize, DiagError, SimDiag};
use super::quadrature::torus_average;
use super::{EquivariantBundle, EquivariantSetup, ScrambledBundle, SetupError};
use crate::rring::{char_eval, RScalar, RVector, TorusPoint};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error("averaged trivialization is singular at a sample point; raise the node count")]
    SingularFrame,
    #[error("G-eigenframe residual {0:.3e} exceeds tolerance; not proceeding")]
    EigenframeRejected(f64),
    #[error("winding number {0:.4} is too far from an integer (error {1:.3})")]
    WindingAmbiguous(f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub equivariance: f64,
    pub transport: f64,
    pub x_independence: f64,
    pub offdiag: f64,
    pub eigenframe: f64,
    pub character: f64,
    pub winding_round: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            equivariance: 1e-9,
            transport: 1e-8,
            x_independence: 1e-8,
            offdiag: 1e-8,
            eigenframe: 1e-7,
            character: 1e-6,
            winding_round: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleCounts {
    pub equivariance_base: usize,
    pub equivariance_group: usize,
    pub group_probes: usize,
    pub transport_radii: usize,
    pub transport_base: usize,
    pub character_grid: usize,
    pub radial_grid: usize,
    pub extension_pool: usize,
    pub extension_samples: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self {
            equivariance_base: 10,
            equivariance_group: 10,
            group_probes: 4,
            transport_radii: 6,
            transport_base: 3,
            character_grid: 128,
            radial_grid: 9,
            extension_pool: 12,
            extension_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub quadrature_nodes: usize,
    pub ball_radius: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub samples: SampleCounts,
}

impl PipelineConfig {
    pub fn for_setup(setup: &EquivariantSetup) -> Self {
        Self {
            quadrature_nodes: setup.quadrature_nodes,
            ball_radius: setup.ball_radius,
            seed: setup.seed,
            tolerances: Tolerances::default(),
            samples: SampleCounts::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageResidual {
    pub stage: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl StageResidual {
    fn new(stage: &'static str, residual: f64, tolerance: f64) -> Self {
        Self {
            stage,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveredCharacter {
    pub windings: Vec<i64>,
    pub winding_error: f64,
    pub radial_re: Vec<f64>,
    pub radial_im: Vec<f64>,
    pub exact: RVector,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageResidual>,
    pub characters: Vec<RecoveredCharacter>,
    pub conditioning: f64,
}

impl PipelineReport {
    pub fn pass(&self) -> bool {
        self.stages.iter().all(|s| s.pass)
    }

    pub fn stage(&self, name: &str) -> Option<&StageResidual> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

fn rel(num: f64, den: f64) -> f64 {
    num / den.max(1e-300)
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    }
    if x < -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

/// Best rational approximation by continued fractions with bounded
/// denominator; falls back to the exact binary expansion when nothing small
/// is close enough.
pub fn rational_round(x: f64, max_denominator: u64, tol: f64) -> BigRational {
    let mut a = x;
    let (mut p0, mut q0) = (BigInt::from(1), BigInt::from(0));
    let (mut p1, mut q1) = (BigInt::from(a.floor() as i64), BigInt::from(1));
    a -= a.floor();
    for _ in 0..40 {
        let cand = BigRational::new(p1.clone(), q1.clone());
        if (cand.to_f64().unwrap() - x).abs() <= tol {
            return cand;
        }
        if a.abs() < 1e-15 {
            break;
        }
        a = 1.0 / a;
        let whole = a.floor();
        if whole >= max_denominator as f64 {
            break;
        }
        a -= whole;
        let w = BigInt::from(whole as i64);
        let (p2, q2) = (&w * &p1 + &p0, &w * &q1 + &q0);
        if q2 > BigInt::from(max_denominator) {
            break;
        }
        (p0, q0) = (p1, q1);
        (p1, q1) = (p2, q2);
    }
    let last = BigRational::new(p1, q1);
    if (last.to_f64().unwrap() - x).abs() <= tol {
        last
    } else {
        BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(0.into()))
    }
}

pub struct Engine<'a> {
    bundle: &'a dyn EquivariantBundle,
    cfg: PipelineConfig,
    // Grid of (g, B(g)⁻¹) pairs shared by every averaging call.
    grid: std::cell::OnceCell<Vec<(Vec<Complex64>, DMatrix<Complex64>)>>,
}

impl<'a> Engine<'a> {
    pub fn new(bundle: &'a dyn EquivariantBundle, cfg: PipelineConfig) -> Self {
        Self {
            bundle,
            cfg,
            grid: std::cell::OnceCell::new(),
        }
    }

    fn n(&self) -> usize {
        self.bundle.torus_dim()
    }

    fn k(&self) -> usize {
        self.bundle.rank()
    }

    fn origin(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.n()]
    }

    fn unit_point(args: &[f64]) -> Vec<Complex64> {
        args.iter()
            .map(|&a| Complex64::from_polar(1.0, a))
            .collect()
    }

    /// The measured fixed-point representation `B(g) = L_g(0)`.
    pub fn fiber_rep(&self, args: &[f64]) -> DMatrix<Complex64> {
        self.bundle
            .transport(&Self::unit_point(args), &self.origin())
    }

    /// Averaged trivialization relative to the presented one:
    /// `M(u) = ∫_G B(g)⁻¹·L_g(u) dμ(g)` by the torus grid rule.
    pub fn averaged_at(&self, u: &[Complex64]) -> DMatrix<Complex64> {
        let grid = self.grid.get_or_init(|| {
            let mut nodes = Vec::new();
            torus_average(self.n(), self.cfg.quadrature_nodes, |args| {
                let b_inv = self
                    .fiber_rep(args)
                    .try_inverse()
                    .expect("fixed-point representation is invertible");
                nodes.push((Self::unit_point(args), b_inv));
                DMatrix::zeros(1, 1)
            });
            nodes
        });
        let k = self.k();
        let mut acc = DMatrix::<Complex64>::zeros(k, k);
        for (g, b_inv) in grid {
            acc += b_inv * self.bundle.transport(g, u);
        }
        acc / Complex64::new(grid.len() as f64, 0.0)
    }

    fn random_ball_point(&self, rng: &mut ChaCha8Rng, radius: f64) -> Vec<Complex64> {
        // Coordinates bounded away from zero so pointwise coordinate ratios
        // stay tame in the extension stage.
        let n = self.n();
        let per = radius / (n as f64).sqrt();
        (0..n)
            .map(|_| {
                Complex64::from_polar(
                    rng.gen_range(0.25 * per..0.95 * per),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect()
    }

    fn random_args(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n())
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect()
    }

    /// How far the raw presentation is from G-equivariance:
    /// `max ‖L_g(u) − B(g)‖/‖B(g)‖` over samples.
    pub fn raw_equivariance_residual(&self, rng: &mut ChaCha8Rng, samples: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let u = self.random_ball_point(rng, self.cfg.ball_radius);
            let g = Self::unit_point(&self.random_args(rng));
            let b = self.bundle.transport(&g, &self.origin());
            let l = self.bundle.transport(&g, &u);
            worst = worst.max(rel((&l - &b).norm(), b.norm()));
        }
        worst
    }

    /// Step-1 identity residual of the averaged trivialization:
    /// `M(g·u)·L_g(u) = B(g)·M(u)` at samples.
    pub fn averaged_equivariance_residual(&self, rng: &mut ChaCha8Rng) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..self.cfg.samples.equivariance_base {
            let u = self.random_ball_point(rng, self.cfg.ball_radius);
            let m_u = self.averaged_at(&u);
            for _ in 0..self.cfg.samples.equivariance_group {
                let args = self.random_args(rng);
                let g = Self::unit_point(&args);
                let gu: Vec<Complex64> = g.iter().zip(&u).map(|(a, b)| a * b).collect();
                let lhs = self.averaged_at(&gu) * self.bundle.transport(&g, &u);
                let rhs = self.fiber_rep(&args) * &m_u;
                worst = worst.max(rel((&lhs - &rhs).norm(), rhs.norm()));
            }
        }
        worst
    }

    fn probe_args(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..self.cfg.samples.group_probes)
            .map(|_| self.random_args(rng))
            .collect()
    }
}

/// The G-eigenframe stage output: `Q` diagonalizes the measured fixed-point
/// representation, and `F(u) = (Q·M(u))⁻¹` stacks the eigensections.
pub struct EigenFrame<'a> {
    engine: &'a Engine<'a>,
    pub q: DMatrix<Complex64>,
    pub q_inv: DMatrix<Complex64>,
    pub conditioning: f64,
}

impl<'a> EigenFrame<'a> {
    pub fn compute(engine: &'a Engine<'a>, rng: &mut ChaCha8Rng) -> Result<Self, PipelineError> {
        let probes = engine.probe_args(rng);
        let family: Vec<DMatrix<Complex64>> =
            probes.iter().map(|args| engine.fiber_rep(args)).collect();
        let SimDiag {
            p,
            p_inv,
            conditioning,
            ..
        } = simultaneous_diagonalize(&family, rng, engine.cfg.tolerances.offdiag)?;
        Ok(Self {
            engine,
            q: p,
            q_inv: p_inv,
            conditioning,
        })
    }

    pub fn frame_at(&self, u: &[Complex64]) -> Result<DMatrix<Complex64>, PipelineError> {
        (&self.q * self.engine.averaged_at(u))
            .try_inverse()
            .ok_or(PipelineError::SingularFrame)
    }

    /// The diagonalized fixed-point representation `B̂(g) = Q·B(g)·Q⁻¹`.
    pub fn rep_at(&self, args: &[f64]) -> DMatrix<Complex64> {
        &self.q * self.engine.fiber_rep(args) * &self.q_inv
    }

    /// Residual of the eigenframe identity
    /// `F(g·x) = L_g(x)·F(x)·diag(B̂(g))⁻¹`, together with the off-diagonal
    /// mass of `B̂` itself.
    pub fn residual(&self, rng: &mut ChaCha8Rng) -> Result<f64, PipelineError> {
        let engine = self.engine;
        let mut worst: f64 = 0.0;
        for _ in 0..engine.cfg.samples.equivariance_base {
            let x = engine.random_ball_point(rng, engine.cfg.ball_radius);
            let f_x = self.frame_at(&x)?;
            for _ in 0..2 {
                let args = engine.random_args(rng);
                let g = Engine::unit_point(&args);
                let b_hat = self.rep_at(&args);
                worst = worst.max(offdiag_ratio(&b_hat));
                let gx: Vec<Complex64> = g.iter().zip(&x).map(|(a, b)| a * b).collect();
                let lhs = self.frame_at(&gx)?;
                let mut diag_inv = DMatrix::<Complex64>::zeros(engine.k(), engine.k());
                for i in 0..engine.k() {
                    diag_inv[(i, i)] = b_hat[(i, i)].inv();
                }
                let rhs = engine.bundle.transport(&g, &x) * &f_x * diag_inv;
                worst = worst.max(rel((&lhs - &rhs).norm(), rhs.norm()));
            }
        }
        Ok(worst)
    }
}

/// Frame-side radial transport measurements.
pub struct Transport {
    pub radii: Vec<Vec<f64>>,
    pub matrices: Vec<DMatrix<Complex64>>,
    pub x_independence: f64,
    pub multiplicativity: f64,
    pub commutation: f64,
}

impl Transport {
    pub fn measure(frame: &EigenFrame<'_>, rng: &mut ChaCha8Rng) -> Result<Self, PipelineError> {
        let engine = frame.engine;
        let counts = &engine.cfg.samples;
        let radii: Vec<Vec<f64>> = (0..counts.transport_radii)
            .map(|_| {
                (0..engine.n())
                    .map(|_| rng.gen_range(-0.35f64..0.35).exp())
                    .collect()
            })
            .collect();
        let mut matrices = Vec::with_capacity(radii.len());
        let mut x_dev: f64 = 0.0;
        for rho in &radii {
            let (t_bar, dev) = Self::measure_one(frame, rho, counts.transport_base, rng)?;
            x_dev = x_dev.max(dev);
            matrices.push(t_bar);
        }
        // Multiplicativity on radius pairs, measured at the product radius.
        let mut mult: f64 = 0.0;
        for a in 0..radii.len().min(3) {
            for b in (a + 1)..radii.len().min(3) {
                let prod: Vec<f64> = radii[a].iter().zip(&radii[b]).map(|(x, y)| x * y).collect();
                let (t_prod, _) = Self::measure_one(frame, &prod, counts.transport_base, rng)?;
                let lhs = &matrices[a] * &matrices[b];
                mult = mult.max(rel((&lhs - &t_prod).norm(), t_prod.norm()));
                let swapped = &matrices[b] * &matrices[a];
                mult = mult.max(rel((&lhs - &swapped).norm(), lhs.norm()));
            }
        }
        // Commutation with the compact-torus representation.
        let mut comm: f64 = 0.0;
        for _ in 0..4 {
            let args = engine.random_args(rng);
            let b_hat = frame.rep_at(&args);
            for t in &matrices {
                let lhs = t * &b_hat;
                let rhs = &b_hat * t;
                comm = comm.max(rel((&lhs - &rhs).norm(), lhs.norm()));
            }
        }
        Ok(Self {
            radii,
            matrices,
            x_independence: x_dev,
            multiplicativity: mult,
            commutation: comm,
        })
    }

    /// Measures `T(ρ)` at several base points; returns the mean and the
    /// worst pairwise deviation (the x-independence check).
    ///
    /// Base points are drawn from `U ∩ ρ⁻¹·U`, the intersection of the
    /// stated transport domains; for expanding ρ the `ρ⁻¹·U` constraint is
    /// the one that binds, hence the shrunken sampling radius.
    pub fn measure_one(
        frame: &EigenFrame<'_>,
        rho: &[f64],
        base_points: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DMatrix<Complex64>, f64), PipelineError> {
        let engine = frame.engine;
        let rho_max = rho.iter().cloned().fold(1.0f64, f64::max);
        let radius = engine.cfg.ball_radius * 0.9 / rho_max;
        let rho_c: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        let mut samples = Vec::with_capacity(base_points);
        for _ in 0..base_points.max(2) {
            let x = engine.random_ball_point(rng, radius);
            let rx: Vec<Complex64> = rho_c.iter().zip(&x).map(|(a, b)| a * b).collect();
            let f_x = frame.frame_at(&x)?;
            let f_rx_inv = frame
                .frame_at(&rx)?
                .try_inverse()
                .ok_or(PipelineError::SingularFrame)?;
            samples.push(f_rx_inv * engine.bundle.transport(&rho_c, &x) * f_x);
        }
        let mut dev: f64 = 0.0;
        for i in 0..samples.len() {
            for j in (i + 1)..samples.len() {
                dev = dev.max(rel((&samples[i] - &samples[j]).norm(), samples[i].norm()));
            }
        }
        let k = engine.k();
        let mean = samples
            .iter()
            .fold(DMatrix::<Complex64>::zeros(k, k), |acc, s| acc + s)
            / Complex64::new(samples.len() as f64, 0.0);
        Ok((mean, dev))
    }
}

/// Step-4 output: `P` diagonalizes transport and compact representation
/// simultaneously; the full torus character data lives on the diagonals.
pub struct RecoveredFrame<'a> {
    frame: &'a EigenFrame<'a>,
    pub p: DMatrix<Complex64>,
    pub p_inv: DMatrix<Complex64>,
    pub offdiag: f64,
    pub conditioning: f64,
}

impl<'a> RecoveredFrame<'a> {
    pub fn compute(
        frame: &'a EigenFrame<'a>,
        transport: &Transport,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, PipelineError> {
        let engine = frame.engine;
        let mut family = transport.matrices.clone();
        for _ in 0..engine.cfg.samples.group_probes {
            let args = engine.random_args(rng);
            family.push(frame.rep_at(&args));
        }
        let sd = simultaneous_diagonalize(&family, rng, engine.cfg.tolerances.offdiag)?;
        let offdiag = family
            .iter()
            .map(|f| offdiag_ratio(&(&sd.p * f * &sd.p_inv)))
            .fold(0.0f64, f64::max);
        Ok(Self {
            frame,
            p: sd.p,
            p_inv: sd.p_inv,
            offdiag,
            conditioning: sd.conditioning,
        })
    }

    /// `B̃(g)`: the fully diagonalized compact-torus representation.
    pub fn rep_at(&self, args: &[f64]) -> DMatrix<Complex64> {
        &self.p * self.frame.rep_at(args) * &self.p_inv
    }

    /// `Ã(ρ)`: diagonalized radial transport, measured fresh at ρ.
    pub fn transport_at(
        &self,
        rho: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<DMatrix<Complex64>, PipelineError> {
        let (t, _) = Transport::measure_one(self.frame, rho, 2, rng)?;
        Ok(&self.p * t * &self.p_inv)
    }

    /// The final frame matrix `F̃(u) = F(u)·P⁻¹`.
    pub fn frame_at(&self, u: &[Complex64]) -> Result<DMatrix<Complex64>, PipelineError> {
        Ok(self.frame.frame_at(u)? * &self.p_inv)
    }
}

/// Character recovery: windings along each circle direction, then a complex
/// log-linear regression along each radial direction.
pub fn recover_characters(
    recovered: &RecoveredFrame<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RecoveredCharacter>, PipelineError> {
    let engine = recovered.frame.engine;
    let n = engine.n();
    let k = engine.k();
    let grid = engine.cfg.samples.character_grid.max(16);
    let mut windings = vec![vec![0i64; n]; k];
    let mut winding_err = vec![0.0f64; k];
    for j in 0..n {
        let mut prev: Option<Vec<f64>> = None;
        let mut acc = vec![0.0f64; k];
        for step in 0..=grid {
            let mut args = vec![0.0; n];
            args[j] = std::f64::consts::TAU * step as f64 / grid as f64;
            let rep = recovered.rep_at(&args);
            let cur: Vec<f64> = (0..k).map(|i| rep[(i, i)].arg()).collect();
            if let Some(p) = prev {
                for i in 0..k {
                    acc[i] += wrap_angle(cur[i] - p[i]);
                }
            }
            prev = Some(cur);
        }
        for i in 0..k {
            let w = acc[i] / std::f64::consts::TAU;
            let rounded = w.round();
            let err = (w - rounded).abs();
            if err > engine.cfg.tolerances.winding_round {
                return Err(PipelineError::WindingAmbiguous(w, err));
            }
            windings[i][j] = rounded as i64;
            winding_err[i] = winding_err[i].max(err);
        }
    }

    // Radial slopes: log χ̃ against log r, one direction at a time.
    let s_max = 0.30;
    let pts = engine.cfg.samples.radial_grid.max(5);
    let mut slopes = vec![vec![Complex64::new(0.0, 0.0); n]; k];
    for j in 0..n {
        let svals: Vec<f64> = (0..pts)
            .map(|q| -s_max + 2.0 * s_max * q as f64 / (pts - 1) as f64)
            .collect();
        let mut logs: Vec<Vec<Complex64>> = vec![Vec::with_capacity(pts); k];
        let mut prev_arg = vec![0.0f64; k];
        for (qi, &s) in svals.iter().enumerate() {
            let mut rho = vec![1.0; n];
            rho[j] = s.exp();
            let a_t = recovered.transport_at(&rho, rng)?;
            for i in 0..k {
                let z = a_t[(i, i)];
                let mut arg = z.arg();
                if qi > 0 {
                    arg = prev_arg[i] + wrap_angle(arg - prev_arg[i]);
                }
                prev_arg[i] = arg;
                logs[i].push(Complex64::new(z.norm().ln(), arg));
            }
        }
        let s_mean: f64 = svals.iter().sum::<f64>() / pts as f64;
        let denom: f64 = svals.iter().map(|s| (s - s_mean).powi(2)).sum();
        for i in 0..k {
            let l_mean = logs[i].iter().sum::<Complex64>() / Complex64::new(pts as f64, 0.0);
            let num: Complex64 = svals
                .iter()
                .zip(&logs[i])
                .map(|(&s, &l)| (l - l_mean) * (s - s_mean))
                .sum();
            slopes[i][j] = num / denom;
        }
    }

    let characters = (0..k)
        .map(|i| {
            let radial_re: Vec<f64> = (0..n).map(|j| slopes[i][j].re).collect();
            let radial_im: Vec<f64> = (0..n).map(|j| slopes[i][j].im).collect();
            let exact = RVector::new(
                (0..n)
                    .map(|j| {
                        RScalar::new(
                            rational_round(radial_re[j], 4096, 1e-4),
                            rational_round(radial_im[j], 4096, 1e-4),
                            BigInt::from(windings[i][j]),
                        )
                    })
                    .collect(),
            );
            RecoveredCharacter {
                windings: windings[i].clone(),
                winding_error: winding_err[i],
                radial_re,
                radial_im,
                exact,
            }
        })
        .collect();
    Ok(characters)
}

/// Residual of the reassembled characters against the measured diagonal
/// action at random torus points.
pub fn character_residual(
    recovered: &RecoveredFrame<'_>,
    characters: &[RecoveredCharacter],
    rng: &mut ChaCha8Rng,
) -> Result<f64, PipelineError> {
    let engine = recovered.frame.engine;
    let n = engine.n();
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let rho: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3f64..0.3).exp()).collect();
        let args: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let a_t = recovered.transport_at(&rho, rng)?;
        let b_t = recovered.rep_at(&args);
        let t = TorusPoint::from_polar(&rho, &args).expect("positive moduli");
        for (i, chr) in characters.iter().enumerate() {
            let measured = a_t[(i, i)] * b_t[(i, i)];
            let predicted = char_eval(&chr.exact, &t);
            worst = worst.max(rel((measured - predicted).norm(), predicted.norm()));
        }
    }
    Ok(worst)
}

/// Extension of the recovered frame over the whole chart by the eigenframe
/// transformation law, with well-definedness across representations.
pub struct ExtensionReport {
    pub well_defined: f64,
    pub eigenframe: f64,
}

pub fn extend_frame(
    recovered: &RecoveredFrame<'_>,
    characters: &[RecoveredCharacter],
    rng: &mut ChaCha8Rng,
) -> Result<ExtensionReport, PipelineError> {
    let engine = recovered.frame.engine;
    let n = engine.n();
    let k = engine.k();
    let pool_size = engine.cfg.samples.extension_pool.max(4);
    let pool: Vec<Vec<Complex64>> = (0..pool_size)
        .map(|_| engine.random_ball_point(rng, engine.cfg.ball_radius))
        .collect();
    let frames: Vec<DMatrix<Complex64>> = pool
        .iter()
        .map(|z| recovered.frame_at(z))
        .collect::<Result<_, _>>()?;

    let chi = |t: &[Complex64]| -> DMatrix<Complex64> {
        let tp = TorusPoint::new(t.to_vec()).expect("nonzero torus coordinates");
        let mut d = DMatrix::<Complex64>::zeros(k, k);
        for (i, chr) in characters.iter().enumerate() {
            d[(i, i)] = char_eval(&chr.exact, &tp);
        }
        d
    };
    let chi_inv = |t: &[Complex64]| -> DMatrix<Complex64> {
        let mut d = chi(t);
        for i in 0..k {
            d[(i, i)] = d[(i, i)].inv();
        }
        d
    };
    // s̃ at t·x for x in the pool, per the transformation law.
    let extended = |t: &[Complex64], pool_idx: usize| -> DMatrix<Complex64> {
        engine.bundle.transport(t, &pool[pool_idx]) * &frames[pool_idx] * chi_inv(t)
    };
    let random_t = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<Complex64> {
        (0..n)
            .map(|_| {
                Complex64::from_polar(
                    rng.gen_range(lo..hi),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect()
    };

    // Well-definedness: t·z_a = t′·z_b for pool pairs.
    let mut well: f64 = 0.0;
    let wd_pairs = (engine.cfg.samples.extension_samples / 20).clamp(50, 500);
    for _ in 0..wd_pairs {
        let a = rng.gen_range(0..pool_size);
        let b = rng.gen_range(0..pool_size);
        if a == b {
            continue;
        }
        let t = random_t(rng, 0.4, 2.5);
        let t_prime: Vec<Complex64> = t
            .iter()
            .zip(pool[a].iter().zip(&pool[b]))
            .map(|(ti, (za, zb))| ti * za / zb)
            .collect();
        let lhs = extended(&t, a);
        let rhs = extended(&t_prime, b);
        well = well.max(rel((&lhs - &rhs).norm(), rhs.norm()));
    }

    // The eigenframe identity at points t₀·x, including far outside the ball.
    let mut eig: f64 = 0.0;
    for _ in 0..engine.cfg.samples.extension_samples {
        let a = rng.gen_range(0..pool_size);
        let t0 = random_t(rng, 0.4, 2.5);
        let t1 = random_t(rng, 0.4, 2.5);
        let t10: Vec<Complex64> = t1.iter().zip(&t0).map(|(x, y)| x * y).collect();
        let y: Vec<Complex64> = t0.iter().zip(&pool[a]).map(|(x, z)| x * z).collect();
        let lhs = extended(&t10, a);
        let rhs = engine.bundle.transport(&t1, &y) * extended(&t0, a) * chi_inv(&t1);
        eig = eig.max(rel((&lhs - &rhs).norm(), rhs.norm()));
    }
    Ok(ExtensionReport {
        well_defined: well,
        eigenframe: eig,
    })
}

/// Runs the full pipeline against a bundle.
pub fn run(
    bundle: &dyn EquivariantBundle,
    cfg: PipelineConfig,
) -> Result<PipelineReport, PipelineError> {
    let engine = Engine::new(bundle, cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let equiv = engine.averaged_equivariance_residual(&mut rng);
    let frame = EigenFrame::compute(&engine, &mut rng)?;
    let frame_res = frame.residual(&mut rng)?;
    // A frame that is wrong by orders of magnitude poisons everything
    // downstream; stop instead of reporting nonsense residuals.
    if frame_res > 1e-5 {
        return Err(PipelineError::EigenframeRejected(frame_res));
    }
    let transport = Transport::measure(&frame, &mut rng)?;
    let recovered = RecoveredFrame::compute(&frame, &transport, &mut rng)?;
    let characters = recover_characters(&recovered, &mut rng)?;
    let chr_res = character_residual(&recovered, &characters, &mut rng)?;
    let extension = extend_frame(&recovered, &characters, &mut rng)?;

    let t = &cfg.tolerances;
    let stages = vec![
        StageResidual::new("haar-equivariance", equiv, t.equivariance),
        StageResidual::new("eigenframe", frame_res, t.equivariance.max(1e-9)),
        StageResidual::new(
            "transport-x-independence",
            transport.x_independence,
            t.x_independence,
        ),
        StageResidual::new(
            "transport-multiplicativity",
            transport.multiplicativity,
            t.transport,
        ),
        StageResidual::new("transport-commutation", transport.commutation, t.transport),
        StageResidual::new("diagonalization-offdiag", recovered.offdiag, t.offdiag),
        StageResidual::new("character-reassembly", chr_res, t.character),
        StageResidual::new(
            "extension-well-defined",
            extension.well_defined,
            t.eigenframe,
        ),
        StageResidual::new("extension-eigenframe", extension.eigenframe, t.eigenframe),
    ];
    Ok(PipelineReport {
        stages,
        characters,
        conditioning: recovered.conditioning,
    })
}

/// Builds the scrambled bundle of a setup and runs the pipeline on it.
pub fn run_setup(setup: &EquivariantSetup) -> Result<PipelineReport, PipelineError> {
    let bundle = ScrambledBundle::new(setup.clone())?;
    let cfg = PipelineConfig::for_setup(setup);
    run(&bundle, cfg)
}

/// Matches recovered characters against ground truth up to permutation.
/// Returns the worst real/imaginary slope errors, or `None` if no bijective
/// matching exists (windings must match exactly).
pub fn match_characters(recovered: &[RecoveredCharacter], truth: &[RVector]) -> Option<(f64, f64)> {
    if recovered.len() != truth.len() {
        return None;
    }
    let mut used = vec![false; truth.len()];
    let mut worst_b: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for rec in recovered {
        let mut best: Option<(usize, f64, f64)> = None;
        for (idx, t) in truth.iter().enumerate() {
            if used[idx] {
                continue;
            }
            let v_match = t
                .entries()
                .iter()
                .zip(&rec.windings)
                .all(|(e, &w)| e.v == BigInt::from(w));
            if !v_match {
                continue;
            }
            let b_err = t
                .entries()
                .iter()
                .zip(&rec.radial_re)
                .map(|(e, &b)| (e.b.to_f64().unwrap() - b).abs())
                .fold(0.0f64, f64::max);
            let c_err = t
                .entries()
                .iter()
                .zip(&rec.radial_im)
                .map(|(e, &c)| (e.c.to_f64().unwrap() - c).abs())
                .fold(0.0f64, f64::max);
            if best.is_none() || b_err + c_err < best.unwrap().1 + best.unwrap().2 {
                best = Some((idx, b_err, c_err));
            }
        }
        let (idx, b_err, c_err) = best?;
        used[idx] = true;
        worst_b = worst_b.max(b_err);
        worst_c = worst_c.max(c_err);
    }
    Some((worst_b, worst_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivariance::{random_setup, Gauge, GaugeTerm};

    fn chi(entries: Vec<(i64, i64, i64)>) -> RVector {
        RVector::new(
            entries
                .into_iter()
                .map(|(b, c, v)| RScalar::from_ints(b, c, v))
                .collect(),
        )
    }

    fn chi_q(entries: Vec<((i64, i64), (i64, i64), i64)>) -> RVector {
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

    #[test]
    fn rational_round_snaps_small_fractions() {
        assert_eq!(
            rational_round(0.5000000001, 4096, 1e-4),
            BigRational::new(1.into(), 2.into())
        );
        assert_eq!(
            rational_round(-1.3333333333, 4096, 1e-4),
            BigRational::new((-4).into(), 3.into())
        );
        assert_eq!(
            rational_round(2.0, 4096, 1e-4),
            BigRational::from_integer(2.into())
        );
    }

    #[test]
    fn identity_gauge_averages_to_identity() {
        let setup = EquivariantSetup {
            torus_dim: 1,
            rank: 2,
            characters: vec![chi(vec![(1, 0, 1)]), chi(vec![(0, 1, -1)])],
            ball_radius: 0.5,
            gauge: Gauge::identity(1, 2),
            quadrature_nodes: 16,
            seed: 3,
        };
        let bundle = ScrambledBundle::new(setup.clone()).unwrap();
        let cfg = PipelineConfig::for_setup(&setup);
        let engine = Engine::new(&bundle, cfg);
        let u = [Complex64::new(0.2, -0.1)];
        let m = engine.averaged_at(&u);
        let id = DMatrix::<Complex64>::identity(2, 2);
        assert!((m - id).norm() < 1e-14);
    }

    #[test]
    fn scramble_is_visibly_non_equivariant() {
        let setup = random_setup(1, 1, 3, 64, 11);
        let bundle = ScrambledBundle::new(setup.clone()).unwrap();
        let cfg = PipelineConfig::for_setup(&setup);
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // The raw presentation fails equivariance badly; the average fixes it.
        assert!(engine.raw_equivariance_residual(&mut rng, 50) > 1e-3);
        assert!(engine.averaged_equivariance_residual(&mut rng) < 1e-10);
    }

    #[test]
    fn aliasing_below_nyquist_is_detected() {
        // Windings (0, 2) and a frequency-2 cross term make the integrand
        // contain frequency 4, which a 4-node rule folds onto the constant.
        let mk = |nodes: usize| {
            let mut off = DMatrix::<Complex64>::zeros(2, 2);
            off[(0, 1)] = Complex64::new(0.002, 0.001);
            EquivariantSetup {
                torus_dim: 1,
                rank: 2,
                characters: vec![chi(vec![(1, 0, 0)]), chi(vec![(1, 0, 2)])],
                ball_radius: 0.5,
                gauge: Gauge {
                    terms: vec![
                        GaugeTerm {
                            holo: vec![0],
                            anti: vec![0],
                            coeff: DMatrix::identity(2, 2),
                        },
                        GaugeTerm {
                            holo: vec![2],
                            anti: vec![0],
                            coeff: off.clone(),
                        },
                    ],
                },
                quadrature_nodes: nodes,
                seed: 5,
            }
        };
        let coarse = mk(8); // frequency 4 also aliases against −4 gaps at 8? keep 8 as the clean case
        let bundle = ScrambledBundle::new(coarse).unwrap();
        let mut cfg = PipelineConfig::for_setup(bundle.setup());
        cfg.quadrature_nodes = 4;
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let aliased = engine.averaged_equivariance_residual(&mut rng);
        assert!(aliased > 1e-6, "expected aliasing, got {aliased:.3e}");

        let mut cfg = PipelineConfig::for_setup(bundle.setup());
        cfg.quadrature_nodes = 16;
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clean = engine.averaged_equivariance_residual(&mut rng);
        assert!(clean < 1e-10, "expected exactness, got {clean:.3e}");
    }

    fn with_random_gauge(
        mut setup: EquivariantSetup,
        trig_degree: u32,
        seed: u64,
    ) -> EquivariantSetup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        setup.gauge = crate::equivariance::random_gauge(
            setup.torus_dim,
            setup.rank,
            trig_degree,
            &setup.winding_differences(),
            &mut rng,
        );
        setup
    }

    #[test]
    fn pipeline_recovers_simple_character() {
        // Ground truth α = (0 + 0i, 1) at n = k = 1.
        let setup = with_random_gauge(
            EquivariantSetup {
                torus_dim: 1,
                rank: 1,
                characters: vec![chi(vec![(0, 0, 1)])],
                ball_radius: 0.5,
                gauge: crate::equivariance::Gauge::identity(1, 1),
                quadrature_nodes: 64,
                seed: 13,
            },
            3,
            77,
        );
        let report = run_setup(&setup).unwrap();
        assert!(report.pass(), "{:?}", report.stages);
        assert_eq!(report.characters[0].windings, vec![1]);
        assert!(report.characters[0].radial_re[0].abs() < 1e-8);
        assert!(report.characters[0].radial_im[0].abs() < 1e-8);
        let (b_err, c_err) = match_characters(&report.characters, &setup.characters).unwrap();
        assert!(b_err < 1e-6 && c_err < 1e-6);
    }

    #[test]
    fn pipeline_recovers_genuinely_twisted_character() {
        // b = 1, c = 1/2, v = 1: a character that is not algebraic.
        let setup = with_random_gauge(
            EquivariantSetup {
                torus_dim: 1,
                rank: 1,
                characters: vec![chi_q(vec![((1, 1), (1, 2), 1)])],
                ball_radius: 0.5,
                gauge: crate::equivariance::Gauge::identity(1, 1),
                quadrature_nodes: 64,
                seed: 14,
            },
            3,
            78,
        );
        let report = run_setup(&setup).unwrap();
        assert!(report.pass(), "{:?}", report.stages);
        let (b_err, c_err) = match_characters(&report.characters, &setup.characters).unwrap();
        assert!(b_err < 1e-6 && c_err < 1e-6);
        // The exact rounding snapped onto the true rational parts.
        assert_eq!(report.characters[0].exact, setup.characters[0]);
    }

    #[test]
    fn repeated_characters_still_give_an_eigenframe() {
        let shared = chi_q(vec![((1, 2), (0, 1), 1)]);
        let setup = with_random_gauge(
            EquivariantSetup {
                torus_dim: 1,
                rank: 2,
                characters: vec![shared.clone(), shared],
                ball_radius: 0.5,
                gauge: crate::equivariance::Gauge::identity(1, 2),
                quadrature_nodes: 64,
                seed: 15,
            },
            2,
            79,
        );
        let report = run_setup(&setup).unwrap();
        assert!(report.pass(), "{:?}", report.stages);
        let (b_err, c_err) = match_characters(&report.characters, &setup.characters).unwrap();
        assert!(b_err < 1e-6 && c_err < 1e-6);
    }

    #[test]
    fn scalar_path_equals_matrix_path_at_rank_one() {
        let setup = random_setup(1, 1, 3, 64, 21);
        let bundle = ScrambledBundle::new(setup.clone()).unwrap();
        let cfg = PipelineConfig::for_setup(&setup);
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = EigenFrame::compute(&engine, &mut rng).unwrap();
        let rho = vec![1.17];
        let (t_mat, _) = Transport::measure_one(&frame, &rho, 3, &mut rng).unwrap();
        // Scalar route: f = s(ρx)-coefficient computed with plain complex
        // arithmetic on 1×1 data.
        let x = [Complex64::new(0.11, -0.07)];
        let rx = [Complex64::new(rho[0], 0.0) * x[0]];
        let s_x = frame.frame_at(&x).unwrap()[(0, 0)];
        let s_rx = frame.frame_at(&rx).unwrap()[(0, 0)];
        let l = engine.bundle.transport(&[Complex64::new(rho[0], 0.0)], &x)[(0, 0)];
        let f_scalar = l * s_x / s_rx;
        assert!((f_scalar - t_mat[(0, 0)]).norm() < 1e-9);
    }

    #[test]
    fn unit_radius_transport_is_identity() {
        let setup = random_setup(2, 2, 3, 16, 33);
        let bundle = ScrambledBundle::new(setup.clone()).unwrap();
        let cfg = PipelineConfig::for_setup(&setup);
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frame = EigenFrame::compute(&engine, &mut rng).unwrap();
        let (t, dev) = Transport::measure_one(&frame, &[1.0, 1.0], 3, &mut rng).unwrap();
        let id = DMatrix::<Complex64>::identity(2, 2);
        assert!((t - id).norm() < 1e-12);
        assert!(dev < 1e-12);
    }

    // The columns of the frame scale under sampled group elements by the
    // ground-truth characters, up to relabeling.
    #[test]
    fn eigenframe_eigenvalues_match_ground_truth() {
        let setup = random_setup(1, 3, 4, 64, 55);
        let bundle = ScrambledBundle::new(setup.clone()).unwrap();
        let cfg = PipelineConfig::for_setup(&setup);
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = EigenFrame::compute(&engine, &mut rng).unwrap();
        for _ in 0..5 {
            let args = [rng.gen_range(0.0..std::f64::consts::TAU)];
            let rep = frame.rep_at(&args);
            let g = TorusPoint::from_polar(&[1.0], &args).unwrap();
            let measured: Vec<Complex64> = (0..3).map(|i| rep[(i, i)]).collect();
            let truth: Vec<Complex64> = setup
                .characters
                .iter()
                .map(|chi| char_eval(chi, &g))
                .collect();
            let mut used = vec![false; truth.len()];
            for m in &measured {
                let (idx, dist) = truth
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used[*i])
                    .map(|(i, t)| (i, (m - t).norm()))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap();
                assert!(dist < 1e-9, "{m} unmatched (closest {dist:.3e})");
                used[idx] = true;
            }
        }
    }

    // A gauge monomial whose frequency hits a winding difference (here
    // |x|², frequency zero) survives the average inside the frame. The frame
    // is still a perfectly good G-eigenframe, but the radial transport then
    // genuinely depends on the base point, so the fixed-point identities
    // cannot be met. Well-posed setups keep the gauge spectrum away from the
    // winding differences; this pins the failure mode.
    #[test]
    fn resonant_gauge_breaks_radial_transport() {
        let setup = EquivariantSetup {
            torus_dim: 1,
            rank: 1,
            characters: vec![chi(vec![(1, 0, 1)])],
            ball_radius: 0.5,
            gauge: crate::equivariance::Gauge {
                terms: vec![
                    crate::equivariance::GaugeTerm {
                        holo: vec![0],
                        anti: vec![0],
                        coeff: DMatrix::identity(1, 1),
                    },
                    crate::equivariance::GaugeTerm {
                        holo: vec![1],
                        anti: vec![1],
                        coeff: DMatrix::from_element(1, 1, Complex64::new(0.02, 0.0)),
                    },
                ],
            },
            quadrature_nodes: 64,
            seed: 23,
        };
        assert_eq!(setup.resonant_terms(), vec![1]);
        let bundle = ScrambledBundle::new(setup.clone()).unwrap();
        let cfg = PipelineConfig::for_setup(&setup);
        let engine = Engine::new(&bundle, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Averaging and the eigenframe identity are unharmed…
        assert!(engine.averaged_equivariance_residual(&mut rng) < 1e-12);
        let frame = EigenFrame::compute(&engine, &mut rng).unwrap();
        assert!(frame.residual(&mut rng).unwrap() < 1e-12);
        // …but the transport coefficient moves with the base point.
        let transport = Transport::measure(&frame, &mut rng).unwrap();
        assert!(
            transport.x_independence > 1e-5,
            "expected x-dependence, got {:.3e}",
            transport.x_independence
        );
    }

    // Equal windings with different radial parts: the compact-torus data
    // cannot separate the characters, so the split happens only in the
    // fixed-point diagonalization of the transport family.
    #[test]
    fn same_winding_characters_are_separated_at_the_fixed_point() {
        let setup = with_random_gauge(
            EquivariantSetup {
                torus_dim: 1,
                rank: 2,
                characters: vec![chi(vec![(1, 0, 1)]), chi_q(vec![((-1, 2), (1, 2), 1)])],
                ball_radius: 0.5,
                gauge: crate::equivariance::Gauge::identity(1, 2),
                quadrature_nodes: 64,
                seed: 16,
            },
            3,
            81,
        );
        let report = run_setup(&setup).unwrap();
        assert!(report.pass(), "{:?}", report.stages);
        let (b_err, c_err) = match_characters(&report.characters, &setup.characters).unwrap();
        assert!(b_err < 1e-6 && c_err < 1e-6);
        assert_eq!(report.characters[0].windings, vec![1]);
        assert_eq!(report.characters[1].windings, vec![1]);
    }

    #[test]
    fn quadrature_refinement_plateau() {
        let mut setup = random_setup(1, 2, 3, 64, 31);
        let report_64 = run_setup(&setup).unwrap();
        setup.quadrature_nodes = 128;
        let report_128 = run_setup(&setup).unwrap();
        // Both rules are beyond Nyquist: identical samples, identical
        // residuals up to roundoff.
        for (a, b) in report_64.stages.iter().zip(&report_128.stages) {
            assert!(
                (a.residual - b.residual).abs() < 1e-12,
                "{}: {:.3e} vs {:.3e}",
                a.stage,
                a.residual,
                b.residual
            );
        }
    }
}
