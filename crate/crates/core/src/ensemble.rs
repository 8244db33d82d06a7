//! Fine-chain ensembles: thermal sampling, exact mode evolution, coarse trajectories,
//! residual statistics, and the reduced Langevin description driven by either noise form.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::{build_blocks, BlockSystem};
use crate::chain::{
    build_mode_basis, coarse_terms, fine_mode_frequency, project_to_coarse, synthesize_fine,
    synthesize_from_modes, ChainGeometry, CoarseTerm, TermKind,
};
use crate::error::{Error, Result};
use crate::linalg::{c, pairwise_sum, C64};
use crate::noise::{
    corr_simple, noise_simple_unchecked, NoiseForm, NoiseRealization, SpectralCoupling,
};
use crate::rng::{complex_normal, normal, sample_rng};
use crate::spectral::effective_frequency;
use crate::verify::{build_transform, check_uniform, TransformKernel};

/// Modes ℓ < ℓ_C start at fixed means; modes ℓ ≥ ℓ_C are thermal with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub cutoff_mode: usize,
    /// (ℓ, ā_ℓ, π̄_ℓ); low modes not listed start at rest.
    pub means: Vec<(usize, C64, C64)>,
    pub temperature: f64,
}

impl InitialCondition {
    pub fn thermal(temperature: f64) -> Self {
        Self {
            cutoff_mode: 0,
            means: Vec::new(),
            temperature,
        }
    }

    pub fn validate(&self, geometry: &ChainGeometry) -> Result<()> {
        let half = geometry.total_atoms() / 2;
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain(format!(
                "temperature {} must be ≥ 0",
                self.temperature
            )));
        }
        if self.cutoff_mode > half + 1 {
            return Err(Error::Domain(format!(
                "ℓ_C = {} exceeds 𝒩/2 + 1",
                self.cutoff_mode
            )));
        }
        let mut seen = vec![false; self.cutoff_mode];
        for (ell, a, p) in &self.means {
            if *ell >= self.cutoff_mode {
                return Err(Error::Domain(format!("mean given for ℓ = {ell} ≥ ℓ_C")));
            }
            if seen[*ell] {
                return Err(Error::Domain(format!("mean for ℓ = {ell} given twice")));
            }
            seen[*ell] = true;
            if is_real_mode(*ell, geometry.total_atoms()) && (a.im != 0.0 || p.im != 0.0) {
                return Err(Error::Domain(format!(
                    "ℓ = {ell} is a real mode; its mean must be real"
                )));
            }
        }
        Ok(())
    }
}

fn is_real_mode(ell: usize, total: usize) -> bool {
    ell == 0 || 2 * ell == total
}

/// Fine amplitudes a_ℓ and momenta π_ℓ = μ ȧ_ℓ for ℓ = 0..𝒩/2.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub amplitudes: Vec<C64>,
    pub momenta: Vec<C64>,
}

impl PhasePoint {
    pub fn zero(total: usize) -> Self {
        Self {
            amplitudes: vec![c(0.0); total / 2 + 1],
            momenta: vec![c(0.0); total / 2 + 1],
        }
    }

    fn check(&self, geometry: &ChainGeometry) -> Result<()> {
        let n = geometry.total_atoms() / 2 + 1;
        if self.amplitudes.len() != n || self.momenta.len() != n {
            return Err(Error::Contract(format!("phase point needs {n} modes")));
        }
        Ok(())
    }
}

pub fn mean_point(initial: &InitialCondition, geometry: &ChainGeometry) -> Result<PhasePoint> {
    initial.validate(geometry)?;
    let mut point = PhasePoint::zero(geometry.total_atoms());
    for (ell, a, p) in &initial.means {
        point.amplitudes[*ell] = *a;
        point.momenta[*ell] = *p;
    }
    Ok(point)
}

/// Draws a fine phase point from the chain's canonical distribution above the cutoff.
///
/// Complex modes: E|a|² = k_BT/(μω²), E|π|² = μk_BT. The real modes ℓ = 0 and 𝒩/2 carry
/// a quarter of those variances. The translation amplitude a_0 never fluctuates.
pub fn sample_initial<R: Rng + ?Sized>(
    initial: &InitialCondition,
    geometry: &ChainGeometry,
    rng: &mut R,
) -> Result<PhasePoint> {
    let mut point = mean_point(initial, geometry)?;
    let total = geometry.total_atoms();
    let kbt = geometry.boltzmann * initial.temperature;
    let mu = geometry.mass;
    for ell in initial.cutoff_mode..=total / 2 {
        let w = fine_mode_frequency(ell, geometry)?;
        if is_real_mode(ell, total) {
            if ell != 0 {
                point.amplitudes[ell] = c(normal(rng, kbt / (4.0 * mu * w * w)));
            }
            point.momenta[ell] = c(normal(rng, mu * kbt / 4.0));
        } else {
            point.amplitudes[ell] = complex_normal(rng, kbt / (mu * w * w));
            point.momenta[ell] = complex_normal(rng, mu * kbt);
        }
    }
    Ok(point)
}

/// Independent harmonic evolution of every fine mode; ℓ = 0 drifts freely.
pub fn evolve_exact(point: &PhasePoint, t: f64, geometry: &ChainGeometry) -> Result<PhasePoint> {
    point.check(geometry)?;
    let mu = geometry.mass;
    let mut out = point.clone();
    for ell in 0..point.amplitudes.len() {
        let (a, p) = (point.amplitudes[ell], point.momenta[ell]);
        let w = fine_mode_frequency(ell, geometry)?;
        if w == 0.0 {
            out.amplitudes[ell] = a + p * (t / mu);
            continue;
        }
        let (s, co) = (w * t).sin_cos();
        out.amplitudes[ell] = a * co + p * (s / (mu * w));
        out.momenta[ell] = p * co - a * (mu * w * s);
    }
    Ok(out)
}

/// H_ℓ = |π|²/μ + μω²|a|² for complex modes, 2(π²/μ + μω²a²) for the real ones.
pub fn mode_energies(point: &PhasePoint, geometry: &ChainGeometry) -> Result<Vec<f64>> {
    point.check(geometry)?;
    let total = geometry.total_atoms();
    let mu = geometry.mass;
    (0..point.amplitudes.len())
        .map(|ell| {
            let w = fine_mode_frequency(ell, geometry)?;
            let h =
                point.momenta[ell].norm_sqr() / mu + mu * w * w * point.amplitudes[ell].norm_sqr();
            Ok(if is_real_mode(ell, total) { 2.0 * h } else { h })
        })
        .collect()
}

/// The exact linear map from a fine phase point to coarse mode L and its derivatives.
#[derive(Debug, Clone)]
pub struct CoarseMap {
    pub mode: usize,
    pub terms: Vec<CoarseTerm>,
    /// ω_{ℓ(k)} per term.
    pub frequencies: Vec<f64>,
    /// Ω_L.
    pub omega: f64,
    mass: f64,
}

impl CoarseMap {
    pub fn new(mode: usize, geometry: &ChainGeometry) -> Result<Self> {
        geometry.validate()?;
        let basis = build_mode_basis(mode, geometry.groups, geometry.clump_size)?;
        let terms = coarse_terms(&basis, geometry.group_size)?;
        let frequencies = terms
            .iter()
            .map(|t| fine_mode_frequency(t.fine_index, geometry))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mode,
            terms,
            frequencies,
            omega: basis.coarse_frequency() * geometry.spring_frequency,
            mass: geometry.mass,
        })
    }

    fn sum(&self, f: impl Fn(usize, &CoarseTerm) -> C64) -> C64 {
        self.terms.iter().enumerate().map(|(i, t)| f(i, t)).sum()
    }

    pub fn amplitude(&self, p: &PhasePoint) -> C64 {
        self.sum(|_, t| t.apply(p.amplitudes[t.fine_index]))
    }

    pub fn velocity(&self, p: &PhasePoint) -> C64 {
        self.sum(|_, t| t.apply(p.momenta[t.fine_index] / self.mass))
    }

    pub fn acceleration(&self, p: &PhasePoint) -> C64 {
        self.sum(|i, t| t.apply(p.amplitudes[t.fine_index]) * -self.frequencies[i].powi(2))
    }

    /// Ä_L + Ω_L²A_L written as the sum of fine-mode contributions.
    pub fn force(&self, p: &PhasePoint) -> C64 {
        let o2 = self.omega * self.omega;
        self.sum(|i, t| t.apply(p.amplitudes[t.fine_index]) * (o2 - self.frequencies[i].powi(2)))
    }

    /// F_L(t) from the mean phase point at t = 0, evolving only the modes this map reads.
    pub fn force_at(&self, mean: &PhasePoint, t: f64) -> C64 {
        let o2 = self.omega * self.omega;
        self.sum(|i, term| {
            let (a, p) = (
                mean.amplitudes[term.fine_index],
                mean.momenta[term.fine_index],
            );
            let w = self.frequencies[i];
            let at = if w == 0.0 {
                a + p * (t / self.mass)
            } else {
                a * (w * t).cos() + p * ((w * t).sin() / (self.mass * w))
            };
            term.apply(at) * (o2 - w * w)
        })
    }

    /// ℰ_L = Ä_L + Ω_L²A_L − F_L.
    pub fn residual(&self, p: &PhasePoint, mean: &PhasePoint) -> C64 {
        self.acceleration(p) + self.amplitude(p) * self.omega.powi(2) - self.force(mean)
    }
}

/// Coarse data along an exact fine trajectory on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// a_ℓ(t), ℓ = 0..𝒩/2.
    pub fine: Vec<Vec<C64>>,
    /// A_L(t), L = 0..ℳ/2.
    pub coarse: Vec<Vec<C64>>,
    /// X_J(t) synthesized from the coarse modes.
    pub positions: Vec<Vec<f64>>,
    /// Largest gap between mode synthesis and direct group averaging, relative to max |X|.
    pub route_discrepancy: f64,
}

pub fn coarse_trajectory(
    initial: &PhasePoint,
    geometry: &ChainGeometry,
    times: &[f64],
) -> Result<TrajectoryRecord> {
    check_uniform(times)?;
    initial.check(geometry)?;
    let maps = (0..=geometry.groups / 2)
        .map(|l| CoarseMap::new(l, geometry))
        .collect::<Result<Vec<_>>>()?;
    let total = geometry.total_atoms();
    let rows = times
        .par_iter()
        .map(|t| {
            let p = evolve_exact(initial, *t, geometry)?;
            let coarse: Vec<C64> = maps.iter().map(|m| m.amplitude(&p)).collect();
            let positions = synthesize_from_modes(&coarse, geometry.groups)?;
            let direct = project_to_coarse(&synthesize_fine(&p.amplitudes, total)?, geometry)?;
            let gap = positions
                .iter()
                .zip(&direct)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = positions.iter().map(|x| x.abs()).fold(0.0, f64::max);
            Ok((p.amplitudes, coarse, positions, gap, scale))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut record = TrajectoryRecord {
        times: times.to_vec(),
        fine: Vec::with_capacity(rows.len()),
        coarse: Vec::with_capacity(rows.len()),
        positions: Vec::with_capacity(rows.len()),
        route_discrepancy: 0.0,
    };
    let (mut gap, mut scale) = (0.0f64, 0.0f64);
    for (f, cm, x, g, s) in rows {
        record.fine.push(f);
        record.coarse.push(cm);
        record.positions.push(x);
        gap = gap.max(g);
        scale = scale.max(s);
    }
    record.route_discrepancy = if scale > 0.0 { gap / scale } else { gap };
    Ok(record)
}

/// ℰ_L(t) along the exact trajectory from `initial`, with F_L from the mean trajectory.
pub fn residual_series(
    initial: &PhasePoint,
    mean: &PhasePoint,
    geometry: &ChainGeometry,
    mode: usize,
    times: &[f64],
) -> Result<Vec<C64>> {
    let map = CoarseMap::new(mode, geometry)?;
    times
        .iter()
        .map(|t| {
            Ok(map.residual(
                &evolve_exact(initial, *t, geometry)?,
                &evolve_exact(mean, *t, geometry)?,
            ))
        })
        .collect()
}

/// F_L(t), the residual of the mean trajectory.
pub fn mean_force(mean: &PhasePoint, geometry: &ChainGeometry, mode: usize, t: f64) -> Result<C64> {
    mean.check(geometry)?;
    Ok(CoarseMap::new(mode, geometry)?.force_at(mean, t))
}

/// E[ℰ_L(t) conj(ℰ_L(t′))] for the fine chain's own equilibrium.
pub fn chain_correlation(
    t: f64,
    t_prime: f64,
    geometry: &ChainGeometry,
    mode: usize,
    kbt: f64,
) -> Result<f64> {
    let map = CoarseMap::new(mode, geometry)?;
    let o2 = map.omega * map.omega;
    let terms: Vec<f64> = map
        .terms
        .iter()
        .zip(&map.frequencies)
        .filter(|(_, w)| **w > 0.0)
        .map(|(term, w)| {
            let x2 = (term.coeff.norm() * (o2 - w * w)).powi(2);
            let var = match term.kind {
                TermKind::RealPart => 0.25,
                _ => 1.0,
            };
            x2 * var * kbt / (geometry.mass * w * w) * (w * (t - t_prime)).cos()
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Mean, E|z − mean|², and the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean_re: f64,
    pub mean_im: f64,
    pub variance: f64,
    pub standard_error: f64,
}

impl Moments {
    pub fn mean(&self) -> C64 {
        C64::new(self.mean_re, self.mean_im)
    }
}

pub fn moments(values: &[C64]) -> Moments {
    let n = values.len() as f64;
    let re: Vec<f64> = values.iter().map(|z| z.re).collect();
    let im: Vec<f64> = values.iter().map(|z| z.im).collect();
    let mean = C64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n);
    let dev: Vec<f64> = values.iter().map(|z| (z - mean).norm_sqr()).collect();
    let variance = if values.len() > 1 {
        pairwise_sum(&dev) / (n - 1.0)
    } else {
        0.0
    };
    Moments {
        mean_re: mean.re,
        mean_im: mean.im,
        variance,
        standard_error: (variance / n).sqrt(),
    }
}

/// Sample variance of real values with its standard error under Gaussianity.
pub fn real_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (var, var * (2.0 / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub geometry: ChainGeometry,
    pub initial: InitialCondition,
    pub mode: usize,
    pub samples: usize,
    pub seed: u64,
    pub times: Vec<f64>,
}

impl EnsembleConfig {
    fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.initial.validate(&self.geometry)?;
        if self.samples < 2 {
            return Err(Error::Config("ensemble needs at least two samples".into()));
        }
        if self.mode > self.geometry.groups / 2 {
            return Err(Error::Domain(format!("L = {} outside [0, ℳ/2]", self.mode)));
        }
        check_uniform(&self.times)
    }

    fn kbt(&self) -> f64 {
        self.geometry.boltzmann * self.initial.temperature
    }
}

/// ℰ_L on the grid for every sample; row order follows the sample index.
pub fn residual_ensemble(cfg: &EnsembleConfig) -> Result<Vec<Vec<C64>>> {
    cfg.validate()?;
    let mean = mean_point(&cfg.initial, &cfg.geometry)?;
    let map = CoarseMap::new(cfg.mode, &cfg.geometry)?;
    let mean_path = cfg
        .times
        .iter()
        .map(|t| evolve_exact(&mean, *t, &cfg.geometry))
        .collect::<Result<Vec<_>>>()?;
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i as u64);
            let p0 = sample_initial(&cfg.initial, &cfg.geometry, &mut rng)?;
            cfg.times
                .iter()
                .zip(&mean_path)
                .map(|(t, m)| Ok(map.residual(&evolve_exact(&p0, *t, &cfg.geometry)?, m)))
                .collect()
        })
        .collect()
}

/// Residual statistics at one lag from the first grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualCheck {
    pub time: f64,
    pub mean: Moments,
    /// |F_L(t)|.
    pub mean_force: f64,
    /// E[ℰ(t_0) conj(ℰ(t))], real part, with its standard error.
    pub autocorrelation: f64,
    pub autocorrelation_se: f64,
    /// The same from the reduced thermal statistics of the environment.
    pub expected: f64,
    /// The same from the fine chain's equilibrium.
    pub chain_expected: f64,
    /// (estimate − expected)/SE.
    pub z: f64,
    /// (mean − F_L)/SE.
    pub mean_z: f64,
}

pub fn residual_statistics(cfg: &EnsembleConfig) -> Result<Vec<ResidualCheck>> {
    let samples = residual_ensemble(cfg)?;
    let kbt = cfg.kbt();
    let basis = build_mode_basis(cfg.mode, cfg.geometry.groups, cfg.geometry.clump_size)?;
    let blocks = build_blocks(&basis, &cfg.geometry)?;
    let t0 = cfg.times[0];
    // ℰ has zero mean by construction, so the mean force is checked on the raw residual.
    let mean = mean_point(&cfg.initial, &cfg.geometry)?;
    cfg.times
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let column: Vec<C64> = samples.iter().map(|row| row[j]).collect();
            let m = moments(&column);
            let products: Vec<f64> = samples
                .iter()
                .map(|row| (row[0] * row[j].conj()).re)
                .collect();
            let (var, _) = real_variance(&products);
            let est = pairwise_sum(&products) / products.len() as f64;
            let se = (var / products.len() as f64).sqrt();
            let expected = corr_simple(t0, *t, &blocks, kbt)?.re;
            let force = mean_force(&mean, &cfg.geometry, cfg.mode, *t)?;
            Ok(ResidualCheck {
                time: *t,
                mean: m,
                mean_force: force.norm(),
                autocorrelation: est,
                autocorrelation_se: se,
                expected,
                chain_expected: chain_correlation(t0, *t, &cfg.geometry, cfg.mode, kbt)?,
                z: if se > 0.0 { (est - expected) / se } else { 0.0 },
                mean_z: if m.standard_error > 0.0 {
                    m.mean().norm() / m.standard_error
                } else {
                    0.0
                },
            })
        })
        .collect()
}

/// Five-point Gauss–Legendre nodes and weights on [0, 1].
const GAUSS_NODES: [f64; 5] = [
    0.046_910_077_030_668_0,
    0.230_765_344_947_158_5,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_332,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

/// Largest ω·h accepted by the forced-oscillator integrator.
pub const MAX_PHASE_STEP: f64 = 0.5;

/// Ä + Ω²A = f(t): exact rotation of the homogeneous part and Gauss–Legendre quadrature
/// of the Duhamel integral over each step. Returns A and Ȧ at t = i·h, i = 0..=steps.
pub fn integrate_forced(
    omega: f64,
    forcing: impl Fn(f64) -> C64,
    a0: C64,
    v0: C64,
    step: f64,
    steps: usize,
    omega_max: f64,
) -> Result<(Vec<C64>, Vec<C64>)> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Config(format!("time step {step} must be positive")));
    }
    let fastest = omega.max(omega_max);
    if fastest * step > MAX_PHASE_STEP {
        return Err(Error::Config(format!(
            "time step {step} resolves frequencies up to {:.3e}, need {fastest:.3e}",
            MAX_PHASE_STEP / step
        )));
    }
    if !(omega > 0.0) {
        return Err(Error::Domain("Ω_L must be positive".into()));
    }
    let (s, co) = (omega * step).sin_cos();
    let mut a = Vec::with_capacity(steps + 1);
    let mut v = Vec::with_capacity(steps + 1);
    a.push(a0);
    v.push(v0);
    for i in 0..steps {
        let t = i as f64 * step;
        let (mut ia, mut iv) = (c(0.0), c(0.0));
        for (x, w) in GAUSS_NODES.iter().zip(&GAUSS_WEIGHTS) {
            let tau = x * step;
            let f = forcing(t + tau);
            let (sr, cr) = (omega * (step - tau)).sin_cos();
            ia += f * (w * sr / omega);
            iv += f * (w * cr);
        }
        let (ai, vi) = (a[i], v[i]);
        a.push(ai * co + vi * (s / omega) + ia * step);
        v.push(vi * co - ai * (omega * s) + iv * step);
    }
    if a.iter()
        .chain(&v)
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::Numerical(
            "Langevin integration produced non-finite values".into(),
        ));
    }
    Ok((a, v))
}

fn fastest_frequency(blocks: &BlockSystem) -> f64 {
    blocks
        .omega_env
        .iter()
        .copied()
        .fold(blocks.omega0, f64::max)
}

/// Ä_L + Ω_L²A_L = F_L(t) + Δf_L(t) with the simple noise form.
pub fn langevin_evolve(
    blocks: &BlockSystem,
    realization: &NoiseRealization,
    mean_force: impl Fn(f64) -> C64,
    initial: (C64, C64),
    step: f64,
    steps: usize,
) -> Result<Vec<C64>> {
    if realization.form != NoiseForm::Simple {
        return Err(Error::Contract(
            "langevin_evolve takes a simple-form realization".into(),
        ));
    }
    if realization.dq0.len() != blocks.env_dim() || realization.dqdot0.len() != blocks.env_dim() {
        return Err(Error::Contract(
            "realization does not match the environment".into(),
        ));
    }
    let forcing = |t: f64| {
        mean_force(t) + noise_simple_unchecked(t, &realization.dq0, &realization.dqdot0, blocks)
    };
    Ok(integrate_forced(
        blocks.omega0,
        forcing,
        initial.0,
        initial.1,
        step,
        steps,
        fastest_frequency(blocks),
    )?
    .0)
}

/// The same equation driven by g = (I + G)⁻¹Δf′/C, solved on the grid and interpolated linearly.
pub fn langevin_transformed(
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
    realization: &NoiseRealization,
    mean_force: impl Fn(f64) -> C64,
    initial: (C64, C64),
    step: f64,
    steps: usize,
) -> Result<Vec<C64>> {
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * step).collect();
    let kernel = build_transform(blocks, coupling, &times)?;
    transformed_with(&kernel, blocks, coupling, realization, mean_force, initial)
}

fn transformed_with(
    kernel: &TransformKernel,
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
    realization: &NoiseRealization,
    mean_force: impl Fn(f64) -> C64,
    initial: (C64, C64),
) -> Result<Vec<C64>> {
    let times = &kernel.times;
    let steps = times.len() - 1;
    let step = times[1] - times[0];
    let lag = coupling.lagrangian(realization);
    let rhs: Vec<C64> = times
        .iter()
        .map(|t| lag.at(*t) / coupling.constant)
        .collect();
    let g = kernel.solve(&rhs)?;
    let forcing = |t: f64| {
        let x = (t / step).clamp(0.0, steps as f64);
        let i = (x.floor() as usize).min(steps - 1);
        let f = x - i as f64;
        mean_force(t) + g[i] * (1.0 - f) + g[i + 1] * f
    };
    Ok(integrate_forced(
        blocks.omega0,
        forcing,
        initial.0,
        initial.1,
        step,
        steps,
        fastest_frequency(blocks),
    )?
    .0)
}

/// Which noise form drives the reduced equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LangevinRoute {
    Simple,
    Transformed,
}

/// Everything the reduced equation needs for one (L, d), built once and shared across samples.
#[derive(Debug, Clone)]
pub struct LangevinSetup {
    pub map: CoarseMap,
    pub blocks: BlockSystem,
    pub route: LangevinRoute,
    pub step: f64,
    pub steps: usize,
    transform: Option<(SpectralCoupling, TransformKernel)>,
    mass: f64,
}

impl LangevinSetup {
    pub fn new(
        geometry: &ChainGeometry,
        mode: usize,
        route: LangevinRoute,
        step: f64,
        steps: usize,
    ) -> Result<Self> {
        if mode == 0 || 2 * mode >= geometry.groups {
            return Err(Error::Domain(format!(
                "Langevin reduction needs 0 < L < ℳ/2, got {mode}"
            )));
        }
        if steps == 0 {
            return Err(Error::Config("Langevin run needs at least one step".into()));
        }
        let map = CoarseMap::new(mode, geometry)?;
        let blocks = build_blocks(
            &build_mode_basis(mode, geometry.groups, geometry.clump_size)?,
            geometry,
        )?;
        if fastest_frequency(&blocks) * step > MAX_PHASE_STEP {
            return Err(Error::Config(format!(
                "time step {step} too coarse for ω_max = {:.3e}",
                fastest_frequency(&blocks)
            )));
        }
        let transform = match route {
            LangevinRoute::Simple => None,
            LangevinRoute::Transformed => {
                let coupling = SpectralCoupling::new(&blocks, &effective_frequency(&blocks)?)?;
                let times: Vec<f64> = (0..=steps).map(|i| i as f64 * step).collect();
                let kernel = build_transform(&blocks, &coupling, &times)?;
                Some((coupling, kernel))
            }
        };
        Ok(Self {
            map,
            blocks,
            route,
            step,
            steps,
            transform,
            mass: geometry.mass,
        })
    }

    /// A_L(0), Ȧ_L(0), and Δq_b, Δq̇_b with c_b q_b equal to the fine term feeding coordinate b.
    pub fn reduced_state(
        &self,
        point: &PhasePoint,
        mean: &PhasePoint,
    ) -> ((C64, C64), NoiseRealization) {
        let mut real = NoiseRealization::zero(self.blocks.env_dim(), NoiseForm::Simple);
        for (b, term) in self.map.terms.iter().enumerate().skip(1) {
            let cb = self.blocks.c_env[b - 1];
            if cb.norm() == 0.0 {
                continue;
            }
            let ell = term.fine_index;
            real.dq0[b - 1] = term.apply(point.amplitudes[ell] - mean.amplitudes[ell]) / cb;
            real.dqdot0[b - 1] =
                term.apply((point.momenta[ell] - mean.momenta[ell]) / self.mass) / cb;
        }
        ((self.map.amplitude(point), self.map.velocity(point)), real)
    }

    /// A_L on t = i·h, starting from a fine phase point.
    pub fn run(&self, point: &PhasePoint, mean: &PhasePoint) -> Result<Vec<C64>> {
        let (init, real) = self.reduced_state(point, mean);
        let force = |t: f64| self.map.force_at(mean, t);
        match &self.transform {
            None => langevin_evolve(&self.blocks, &real, force, init, self.step, self.steps),
            Some((coupling, kernel)) => {
                let mut lag = real;
                lag.form = NoiseForm::Lagrangian;
                transformed_with(kernel, &self.blocks, coupling, &lag, force, init)
            }
        }
    }
}

pub fn langevin_from_fine(
    point: &PhasePoint,
    mean: &PhasePoint,
    geometry: &ChainGeometry,
    mode: usize,
    step: f64,
    steps: usize,
    route: LangevinRoute,
) -> Result<Vec<C64>> {
    point.check(geometry)?;
    mean.check(geometry)?;
    LangevinSetup::new(geometry, mode, route, step, steps)?.run(point, mean)
}

/// Variance of Re A_L at one time from the exact fine ensemble and from the reduced equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteComparison {
    pub time: f64,
    pub route: LangevinRoute,
    pub exact_variance: f64,
    pub exact_se: f64,
    pub langevin_variance: f64,
    pub langevin_se: f64,
    /// Difference over the combined standard error.
    pub z: f64,
}

/// Route 1 samples the fine chain with streams of `seed`; route 2 uses streams of `seed + 1`.
pub fn compare_routes(
    cfg: &EnsembleConfig,
    step: f64,
    steps: usize,
    route: LangevinRoute,
) -> Result<RouteComparison> {
    cfg.validate()?;
    let horizon = step * steps as f64;
    let mean = mean_point(&cfg.initial, &cfg.geometry)?;
    let map = CoarseMap::new(cfg.mode, &cfg.geometry)?;
    let setup = LangevinSetup::new(&cfg.geometry, cfg.mode, route, step, steps)?;
    let exact: Vec<f64> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i as u64);
            let p0 = sample_initial(&cfg.initial, &cfg.geometry, &mut rng)?;
            Ok(map
                .amplitude(&evolve_exact(&p0, horizon, &cfg.geometry)?)
                .re)
        })
        .collect::<Result<_>>()?;
    let reduced: Vec<f64> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed.wrapping_add(1), i as u64);
            let p0 = sample_initial(&cfg.initial, &cfg.geometry, &mut rng)?;
            Ok(setup.run(&p0, &mean)?[steps].re)
        })
        .collect::<Result<_>>()?;
    let (ve, se_e) = real_variance(&exact);
    let (vl, se_l) = real_variance(&reduced);
    let se = (se_e * se_e + se_l * se_l).sqrt();
    Ok(RouteComparison {
        time: horizon,
        route,
        exact_variance: ve,
        exact_se: se_e,
        langevin_variance: vl,
        langevin_se: se_l,
        z: if se > 0.0 { (ve - vl) / se } else { 0.0 },
    })
}

/// The single fine mode feeding A_L at the lowest index, for seeding deterministic excitations.
pub fn leading_fine_index(mode: usize, geometry: &ChainGeometry) -> usize {
    mode * geometry.group_size / geometry.clump_size
}

/// Period of the coarse mode, 2π/Ω_L.
pub fn coarse_period(mode: usize, geometry: &ChainGeometry) -> Result<f64> {
    let map = CoarseMap::new(mode, geometry)?;
    if map.omega == 0.0 {
        return Err(Error::Domain("L = 0 has no period".into()));
    }
    Ok(2.0 * PI / map.omega)
}
