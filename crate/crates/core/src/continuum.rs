//! Small-gradient lattice equation, the continuum wave equation, and their convergence.

use std::f64::consts::PI;

use serde::Serialize;

use crate::chain::{project_to_coarse, synthesize_fine, ChainGeometry};
use crate::ensemble::{evolve_exact, PhasePoint};
use crate::error::{Error, Result};
use crate::linalg::{c, C64};

/// Group displacements and velocities with the continuum constants of the chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveField {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// σ = μ/Δx.
    pub density: f64,
    /// Y = μω²Δx.
    pub youngs_modulus: f64,
    /// c = √(Y/σ) = ωΔx.
    pub wave_speed: f64,
}

impl WaveField {
    pub fn new(
        positions: Vec<f64>,
        velocities: Vec<f64>,
        geometry: &ChainGeometry,
    ) -> Result<Self> {
        if positions.len() != velocities.len() || positions.len() < 3 {
            return Err(Error::Contract(
                "field needs matching position and velocity arrays of length ≥ 3".into(),
            ));
        }
        if !(geometry.mass > 0.0
            && geometry.spring_frequency > 0.0
            && geometry.lattice_spacing > 0.0)
        {
            return Err(Error::Domain("μ, ω and Δx must be positive".into()));
        }
        let dx = geometry.lattice_spacing;
        Ok(Self {
            positions,
            velocities,
            density: geometry.mass / dx,
            youngs_modulus: geometry.mass * geometry.spring_frequency.powi(2) * dx,
            wave_speed: geometry.spring_frequency * dx,
        })
    }

    /// Standing wave cos(2πLJ/ℳ) at rest.
    pub fn standing(mode: usize, groups: usize, geometry: &ChainGeometry) -> Result<Self> {
        let x = (0..groups)
            .map(|j| (2.0 * PI * (mode * j % groups) as f64 / groups as f64).cos())
            .collect();
        Self::new(x, vec![0.0; groups], geometry)
    }
}

fn laplacian(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        out[j] = x[(j + 1) % n] - 2.0 * x[j] + x[(j + n - 1) % n];
    }
}

fn stiffness(geometry: &ChainGeometry, d: usize) -> f64 {
    (geometry.spring_frequency / d as f64).powi(2)
}

/// Velocity Verlet for Ẍ_J = (ω/d)²(X_{J+1} − 2X_J + X_{J−1}) on a ring.
pub fn lattice_wave_step(
    field: &WaveField,
    dt: f64,
    geometry: &ChainGeometry,
    d: usize,
) -> Result<WaveField> {
    lattice_wave_steps(field, dt, 1, geometry, d)
}

pub fn lattice_wave_steps(
    field: &WaveField,
    dt: f64,
    steps: usize,
    geometry: &ChainGeometry,
    d: usize,
) -> Result<WaveField> {
    if d == 0 {
        return Err(Error::Domain("d must be positive".into()));
    }
    let courant = geometry.spring_frequency / d as f64 * dt.abs();
    if courant > 1.0 || !dt.is_finite() {
        return Err(Error::Config(format!("(ω/d)·dt = {courant:.3} exceeds 1")));
    }
    let k = stiffness(geometry, d);
    let mut out = field.clone();
    let n = out.positions.len();
    let mut acc = vec![0.0; n];
    laplacian(&out.positions, &mut acc);
    for _ in 0..steps {
        for j in 0..n {
            out.velocities[j] += 0.5 * dt * k * acc[j];
            out.positions[j] += dt * out.velocities[j];
        }
        laplacian(&out.positions, &mut acc);
        for j in 0..n {
            out.velocities[j] += 0.5 * dt * k * acc[j];
        }
    }
    Ok(out)
}

/// ½Σ Ẋ² + ½(ω/d)²Σ(X_{J+1} − X_J)², per unit group mass.
pub fn lattice_energy(field: &WaveField, geometry: &ChainGeometry, d: usize) -> f64 {
    let n = field.positions.len();
    let k = stiffness(geometry, d);
    let kinetic: f64 = field.velocities.iter().map(|v| v * v).sum();
    let strain: f64 = (0..n)
        .map(|j| (field.positions[(j + 1) % n] - field.positions[j]).powi(2))
        .sum();
    0.5 * (kinetic + k * strain)
}

/// The quadratic form velocity Verlet conserves exactly: the lattice energy minus (dt²/8)|KX|².
pub fn verlet_energy(field: &WaveField, dt: f64, geometry: &ChainGeometry, d: usize) -> f64 {
    let k = stiffness(geometry, d);
    let mut kx = vec![0.0; field.positions.len()];
    laplacian(&field.positions, &mut kx);
    let correction: f64 = kx.iter().map(|v| (k * v).powi(2)).sum();
    lattice_energy(field, geometry, d) - dt * dt / 8.0 * correction
}

/// Spectral solution of σX_tt = Y X_xx on a periodic domain of length Λ sampled at n points.
pub fn continuum_solution(
    positions: &[f64],
    velocities: &[f64],
    t: f64,
    wave_speed: f64,
    period: f64,
) -> Result<Vec<f64>> {
    let n = positions.len();
    if n == 0 || velocities.len() != n {
        return Err(Error::Contract(
            "profile and velocity arrays must match and be nonempty".into(),
        ));
    }
    if !(wave_speed > 0.0 && period > 0.0) {
        return Err(Error::Domain(
            "wave speed and period must be positive".into(),
        ));
    }
    let phasor =
        |k: usize, j: usize| C64::from_polar(1.0, -2.0 * PI * ((k * j) % n) as f64 / n as f64);
    let evolved: Vec<C64> = (0..n)
        .map(|k| {
            let x: C64 = positions
                .iter()
                .enumerate()
                .map(|(j, v)| phasor(k, j) * *v)
                .sum();
            let v: C64 = velocities
                .iter()
                .enumerate()
                .map(|(j, v)| phasor(k, j) * *v)
                .sum();
            let signed = if 2 * k > n {
                k as f64 - n as f64
            } else {
                k as f64
            };
            let w = 2.0 * PI * wave_speed * signed.abs() / period;
            if 2 * k == n {
                // Nyquist: keep the real cosine part only.
                c(x.re * (w * t).cos() + v.re * (w * t).sin() / w)
            } else if w == 0.0 {
                x + v * t
            } else {
                x * (w * t).cos() + v * ((w * t).sin() / w)
            }
        })
        .collect();
    Ok((0..n)
        .map(|j| {
            evolved
                .iter()
                .enumerate()
                .map(|(k, z)| (z * phasor(k, j).conj()).re)
                .sum::<f64>()
                / n as f64
        })
        .collect())
}

/// Measured lattice frequency of mode L from the three-term recurrence of a sampled trajectory,
/// stepping at Ω_L·dt = `phase_step` (capped below the stability limit) for the given number of periods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub mode: usize,
    pub measured: f64,
    /// 2(ω/d) sin(πL/ℳ).
    pub lattice: f64,
    /// What velocity Verlet produces for that frequency at this step.
    pub scheme: f64,
    /// 2πωL/(ℳd).
    pub small_gradient: f64,
    pub relative_error: f64,
    /// (Ω dt)²/24, the leading scheme error.
    pub scheme_order: f64,
}

pub fn measure_dispersion(
    mode: usize,
    groups: usize,
    geometry: &ChainGeometry,
    d: usize,
    phase_step: f64,
    periods: f64,
) -> Result<DispersionPoint> {
    if mode == 0 || 2 * mode > groups {
        return Err(Error::Domain(format!("L = {mode} outside [1, ℳ/2]")));
    }
    if !(phase_step > 0.0 && phase_step <= 1.0 && periods > 0.0) {
        return Err(Error::Config(
            "phase step must lie in (0, 1] and periods must be positive".into(),
        ));
    }
    let lattice =
        2.0 * geometry.spring_frequency / d as f64 * (PI * mode as f64 / groups as f64).sin();
    let dt = (phase_step / lattice).min(0.9 * d as f64 / geometry.spring_frequency);
    let steps = ((periods * 2.0 * PI / (lattice * dt)).ceil() as usize).max(3);
    let mut field = WaveField::standing(mode, groups, geometry)?;
    let mut series = vec![field.positions[0]];
    for _ in 0..steps {
        field = lattice_wave_step(&field, dt, geometry, d)?;
        series.push(field.positions[0]);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for n in 1..series.len() - 1 {
        num += series[n] * (series[n + 1] + series[n - 1]);
        den += 2.0 * series[n] * series[n];
    }
    let measured = (num / den).clamp(-1.0, 1.0).acos() / dt;
    let scheme = (1.0 - 0.5 * (lattice * dt).powi(2)).acos() / dt;
    Ok(DispersionPoint {
        mode,
        measured,
        lattice,
        scheme,
        small_gradient: 2.0 * PI * geometry.spring_frequency * mode as f64 / (groups * d) as f64,
        relative_error: (measured - lattice).abs() / lattice,
        scheme_order: (lattice * dt).powi(2) / 24.0,
    })
}

/// |Ω_L − 2πωL/(ℳd)|/Ω_L and its Taylor bound (πL/(ℳd))²/6·(1 + (πL/(ℳd))²).
pub fn small_gradient_error(mode: usize, groups: usize, d: usize) -> (f64, f64) {
    let x = PI * mode as f64 / (groups * d) as f64;
    let exact = 2.0 * x.sin();
    ((2.0 * x - exact).abs() / exact, x * x / 6.0 * (1.0 + x * x))
}

/// True when every fine mode feeding A_L lies at or above the cutoff, so the coarse mode
/// carries only thermal motion.
pub fn coarse_mode_is_thermal(mode: usize, geometry: &ChainGeometry, cutoff_mode: usize) -> bool {
    mode * geometry.group_size >= cutoff_mode * geometry.clump_size
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub groups: usize,
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub mode: usize,
    pub clump_size: usize,
    pub rows: Vec<ConvergenceRow>,
    pub fitted_slope: f64,
}

/// Exact chain evolution of one standing fine mode, averaged over groups of d = N contiguous
/// atoms, against the continuum standing wave over one continuum period.
pub fn convergence_study(
    mode: usize,
    groups: &[usize],
    d: usize,
    samples: usize,
) -> Result<ConvergenceStudy> {
    if groups.len() < 2 {
        return Err(Error::Config(
            "convergence study needs at least two ℳ values".into(),
        ));
    }
    if samples < 2 {
        return Err(Error::Config(
            "convergence study needs at least two time samples".into(),
        ));
    }
    let mut rows = Vec::new();
    for &m in groups {
        if 2 * mode >= m {
            return Err(Error::Domain(format!(
                "L = {mode} is not small against ℳ = {m}"
            )));
        }
        let geometry = ChainGeometry::natural(m, d, d)?;
        let total = geometry.total_atoms();
        let mut point = PhasePoint::zero(total);
        point.amplitudes[mode] = c((total as f64).sqrt() / 2.0);
        let speed = geometry.spring_frequency * geometry.lattice_spacing;
        let period_length = total as f64 * geometry.lattice_spacing;
        let horizon = period_length / (speed * mode as f64);
        let centre = if d.is_multiple_of(2) { 0.5 } else { 0.0 };
        let mut worst = 0.0f64;
        for s in 0..samples {
            let t = horizon * s as f64 / (samples - 1) as f64;
            let evolved = evolve_exact(&point, t, &geometry)?;
            let coarse =
                project_to_coarse(&synthesize_fine(&evolved.amplitudes, total)?, &geometry)?;
            let temporal = (2.0 * PI * speed * mode as f64 * t / period_length).cos();
            for (j, x) in coarse.iter().enumerate() {
                let pos = (j * d) as f64 + centre;
                let cont = (2.0 * PI * mode as f64 * pos / total as f64).cos() * temporal;
                worst = worst.max((x - cont).abs());
            }
        }
        rows.push(ConvergenceRow {
            groups: m,
            sup_error: worst,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.groups as f64).ln(), r.sup_error.ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(ConvergenceStudy {
        mode,
        clump_size: d,
        rows,
        fitted_slope: sxy / sxx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ChainGeometry {
        ChainGeometry::natural(64, 4, 4).unwrap()
    }

    #[test]
    fn wave_constants() {
        let g = ChainGeometry {
            lattice_spacing: 0.5,
            mass: 3.0,
            ..geom()
        };
        let f = WaveField::standing(1, 64, &g).unwrap();
        assert!((f.wave_speed - 0.5).abs() < 1e-15);
        assert!(((f.youngs_modulus / f.density).sqrt() - f.wave_speed).abs() < 1e-15);
    }

    #[test]
    fn uniform_field_is_stationary() {
        let g = geom();
        let f = WaveField::new(vec![0.3; 16], vec![0.0; 16], &g).unwrap();
        let out = lattice_wave_steps(&f, 0.5, 100, &g, 2).unwrap();
        assert!(out.positions.iter().all(|x| (x - 0.3).abs() < 1e-15));
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = geom();
        let f = WaveField::standing(1, 16, &g).unwrap();
        assert!(matches!(
            lattice_wave_step(&f, 2.5, &g, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn time_reversal() {
        let g = geom();
        let mut f = WaveField::standing(3, 32, &g).unwrap();
        f.velocities = (0..32).map(|j| (j as f64 * 0.3).sin()).collect();
        let fwd = lattice_wave_steps(&f, 0.8, 500, &g, 2).unwrap();
        let mut back = fwd.clone();
        back.velocities.iter_mut().for_each(|v| *v = -*v);
        let mut back = lattice_wave_steps(&back, 0.8, 500, &g, 2).unwrap();
        back.velocities.iter_mut().for_each(|v| *v = -*v);
        for (a, b) in back.positions.iter().zip(&f.positions) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn verlet_energy_has_no_drift() {
        let g = geom();
        let d = 2;
        let dt = 0.5 * d as f64 / g.spring_frequency;
        let mut f = WaveField::standing(2, 32, &g).unwrap();
        f.velocities = (0..32).map(|j| 0.1 * (j as f64).cos()).collect();
        let period = 2.0 * PI * d as f64 / (2.0 * (PI * 2.0 / 32.0).sin());
        let steps = (1000.0 * period / dt) as usize;
        let e0 = verlet_energy(&f, dt, &g, d);
        let out = lattice_wave_steps(&f, dt, steps, &g, d).unwrap();
        let e1 = verlet_energy(&out, dt, &g, d);
        assert!((e1 - e0).abs() < 1e-8 * e0, "{e0} {e1}");
        let plain = lattice_energy(&out, &g, d);
        assert!((plain - lattice_energy(&f, &g, d)).abs() < 0.1 * e0);
    }

    #[test]
    fn dispersion_matches_lattice_relation() {
        let g = geom();
        for l in [1, 3, 8, 16] {
            let p = measure_dispersion(l, 32, &g, 2, 0.2, 5.0).unwrap();
            assert!((p.measured - p.scheme).abs() < 1e-9 * p.scheme, "{p:?}");
            assert!(p.relative_error < 1.5 * p.scheme_order + 1e-12, "{p:?}");
        }
        let fine = measure_dispersion(2, 32, &g, 2, 0.004, 5.0).unwrap();
        assert!(fine.relative_error < 1e-6, "{fine:?}");
    }

    #[test]
    fn standing_and_travelling_waves() {
        let n = 64;
        let period = 2.0;
        let speed = 0.7;
        let xs: Vec<f64> = (0..n).map(|j| period * j as f64 / n as f64).collect();
        let profile: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x / period).sin()).collect();
        let out = continuum_solution(&profile, &vec![0.0; n], 0.9, speed, period).unwrap();
        let amp = (2.0 * PI * speed * 0.9 / period).cos();
        for (o, p) in out.iter().zip(&profile) {
            assert!((o - amp * p).abs() < 1e-12);
        }
        let width = period / 12.0;
        let bump = |x: f64| {
            (-5..=5)
                .map(|k| (-((x - 1.0 + k as f64 * period) / width).powi(2)).exp())
                .sum::<f64>()
        };
        let dbump = |x: f64| {
            (-5..=5)
                .map(|k| {
                    let u = (x - 1.0 + k as f64 * period) / width;
                    -2.0 * u / width * (-u * u).exp()
                })
                .sum::<f64>()
        };
        let f0: Vec<f64> = xs.iter().map(|x| bump(*x)).collect();
        let v0: Vec<f64> = xs.iter().map(|x| -speed * dbump(*x)).collect();
        let t = 0.6;
        let out = continuum_solution(&f0, &v0, t, speed, period).unwrap();
        for (o, x) in out.iter().zip(&xs) {
            assert!((o - bump(x - speed * t)).abs() < 1e-9);
        }
        let zero = continuum_solution(&vec![0.0; n], &vec![0.0; n], 3.0, speed, period).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn small_gradient_bound() {
        for (l, m, d) in [(1, 16, 1), (2, 16, 8), (100, 630, 2), (315, 630, 1)] {
            let (err, bound) = small_gradient_error(l, m, d);
            assert!(err <= bound, "{l} {m} {d}: {err} > {bound}");
        }
    }

    #[test]
    fn thermal_threshold() {
        let g = ChainGeometry::natural(16, 8, 2).unwrap();
        assert!(coarse_mode_is_thermal(2, &g, 4));
        let g8 = ChainGeometry::natural(16, 8, 8).unwrap();
        assert!(!coarse_mode_is_thermal(2, &g8, 4));
    }

    #[test]
    fn convergence_is_second_order() {
        let s = convergence_study(2, &[16, 32, 64, 128], 8, 33).unwrap();
        assert!((s.fitted_slope + 2.0).abs() <= 0.2, "{s:?}");
        assert!(s.rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error));
    }
}
