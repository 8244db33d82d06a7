//! Numerical oracles for the reduction identities and the equivalence of the two noise forms.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::{build_selection, BlockSystem};
use crate::chain::{build_mode_basis, ModeBasis};
use crate::error::{Error, Result};
use crate::linalg::{c, dot_h, norm_sqr, C64};
use crate::noise::{
    corr_lagrangian, corr_simple, noise_simple_unchecked, NoiseForm, NoiseRealization,
    SpectralCoupling,
};
use crate::rng::sample_rng;
use crate::spectral::effective_frequency;

/// One identity evaluated at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub identity: String,
    pub mode: usize,
    pub clump_size: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

impl CheckEntry {
    fn new(identity: &str, mode: usize, d: usize, residual: f64, tolerance: f64) -> Self {
        Self {
            identity: identity.to_string(),
            mode,
            clump_size: d,
            max_residual: residual,
            tolerance,
            pass: residual.is_finite() && residual <= tolerance,
            note: String::new(),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

impl fmt::Display for CheckEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} L={} d={} residual={:.3e} tol={:.1e}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.identity,
            self.mode,
            self.clump_size,
            self.max_residual,
            self.tolerance,
            if self.note.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.note)
            }
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub entries: Vec<CheckEntry>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn into_result(self) -> Result<Self> {
        if let Some(e) = self.failures().next() {
            return Err(Error::Verification(e.to_string()));
        }
        Ok(self)
    }

    fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }
}

pub const TOL_IDENTITY: f64 = 1e-10;
pub const TOL_EQUIVALENCE: f64 = 1e-6;

fn rel(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Reduced forms against a dense-solve evaluation, and the constant against Nμ.
pub fn check_reduced_forms(
    mode: usize,
    d: usize,
    groups: usize,
    group_size: usize,
    mass: f64,
) -> Result<Report> {
    let basis = build_mode_basis(mode, groups, d)?;
    check_reduced_forms_for(&basis, group_size, mass)
}

pub fn check_reduced_forms_for(basis: &ModeBasis, group_size: usize, mass: f64) -> Result<Report> {
    let d = basis.clump_size;
    let mode = basis.mode;
    if d < 2 {
        return Err(Error::Domain("the reduction needs d ≥ 2".into()));
    }
    let blocks = BlockSystem::new(basis, mass, 1.0, group_size as f64)?;
    let coeffs: Vec<C64> = std::iter::once(blocks.c0)
        .chain(blocks.c_env.iter().copied())
        .collect();
    let st = build_selection(&coeffs)?.combined();
    let mut omega2 = DMatrix::<C64>::zeros(d, d);
    omega2[(0, 0)] = c(blocks.omega0.powi(2));
    for b in 1..d {
        omega2[(b, b)] = c(blocks.omega_env[b - 1].powi(2));
    }
    let m = st.adjoint() * &st * c(mass);
    let v = st.adjoint() * omega2 * &st * c(mass);
    let n = d - 1;
    let m_tt = m.view((1, 1), (n, n)).into_owned();
    let v_tt = v.view((1, 1), (n, n)).into_owned();
    let m_st = m.view((0, 1), (1, n)).into_owned();
    let m_ts = m.view((1, 0), (n, 1)).into_owned();
    let v_ts = v.view((1, 0), (n, 1)).into_owned();
    let v_st = v.view((0, 1), (1, n)).into_owned();
    let lu = m_tt.clone().lu();
    let solve = |rhs: &DMatrix<C64>| {
        lu.solve(rhs)
            .ok_or_else(|| Error::Numerical("M_TT is singular".into()))
    };
    let kinetic = m[(0, 0)] - (&m_st * solve(&m_ts)?)[(0, 0)];
    let potential = v[(0, 0)] - (&m_st * solve(&v_ts)?)[(0, 0)];
    let minv_vtt = solve(&v_tt)?;
    let coupling = -(v_st - &m_st * minv_vtt);

    let closed = blocks.reduced_forms();
    let mut report = Report::default();
    report.entries.push(CheckEntry::new(
        "reduced kinetic",
        mode,
        d,
        rel((kinetic - c(closed.kinetic)).norm(), closed.kinetic),
        TOL_IDENTITY,
    ));
    report.entries.push(CheckEntry::new(
        "reduced potential",
        mode,
        d,
        rel(
            (potential - c(closed.potential)).norm(),
            closed.potential.abs().max(closed.kinetic * 1e-300),
        ),
        TOL_IDENTITY,
    ));
    let scale = closed.coupling.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = closed
        .coupling
        .iter()
        .enumerate()
        .map(|(b, z)| (coupling[(0, b)] - z).norm())
        .fold(0.0, f64::max);
    report.entries.push(CheckEntry::new(
        "reduced coupling",
        mode,
        d,
        rel(diff, scale),
        TOL_IDENTITY,
    ));
    let target = group_size as f64 * mass;
    report.entries.push(
        CheckEntry::new(
            "kinetic constant",
            mode,
            d,
            rel((kinetic.re - target).abs(), target),
            TOL_IDENTITY,
        )
        .with_note(format!(
            "constant = {:.12e}, Nμ = {target:.12e}",
            kinetic.re
        )),
    );
    Ok(report)
}

/// The retarded kernel G(t, t′) = −(μ/c_0) Σ_k α_k β_k sin(ν_k(t − t′))/ν_k and its grid samples.
#[derive(Debug, Clone)]
pub struct TransformKernel {
    /// C = Nμ.
    pub constant: f64,
    pub times: Vec<f64>,
    /// Lower-triangular samples G(t_i, t_j), j ≤ i.
    pub samples: DMatrix<C64>,
    weights: Vec<C64>,
    nu: Vec<f64>,
}

pub fn build_transform(
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
    times: &[f64],
) -> Result<TransformKernel> {
    check_uniform(times)?;
    let pref = blocks.mass / blocks.c0;
    let weights: Vec<C64> = (0..coupling.dim())
        .map(|k| -pref * coupling.alpha[k] * coupling.beta[k] / coupling.nu[k])
        .collect();
    let n = times.len();
    let mut kernel = TransformKernel {
        constant: coupling.constant,
        times: times.to_vec(),
        samples: DMatrix::zeros(n, n),
        weights,
        nu: coupling.nu.clone(),
    };
    for i in 0..n {
        for j in 0..=i {
            kernel.samples[(i, j)] = kernel.eval(times[i], times[j]);
        }
    }
    Ok(kernel)
}

pub(crate) fn check_uniform(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Contract(
            "time grid needs at least two points".into(),
        ));
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(Error::Contract("time grid must be increasing".into()));
    }
    for (i, t) in times.iter().enumerate() {
        if (t - times[0] - h * i as f64).abs() > 1e-9 * h.max(t.abs()) {
            return Err(Error::Contract(format!(
                "time grid is not uniform at index {i}"
            )));
        }
    }
    Ok(())
}

impl TransformKernel {
    pub fn eval(&self, t: f64, t_prime: f64) -> C64 {
        if t < t_prime {
            return c(0.0);
        }
        let s = t - t_prime;
        self.weights
            .iter()
            .zip(&self.nu)
            .map(|(w, nu)| w * (nu * s).sin())
            .sum()
    }

    fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Largest |G(t, t)| on the grid.
    pub fn diagonal_max(&self) -> f64 {
        (0..self.times.len())
            .map(|i| self.samples[(i, i)].norm())
            .fold(0.0, f64::max)
    }

    /// (I + G) f with trapezoid quadrature of the memory integral.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let h = self.step();
        (0..self.times.len())
            .map(|i| {
                let mut acc = c(0.0);
                for j in 0..=i {
                    let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                    acc += self.samples[(i, j)] * f[j] * w;
                }
                f[i] + acc * h
            })
            .collect()
    }

    /// Solves (I + G) g = rhs by forward substitution; the diagonal is exactly one.
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let n = self.times.len();
        if rhs.len() != n {
            return Err(Error::Contract(format!(
                "rhs has {} entries, grid has {n}",
                rhs.len()
            )));
        }
        let h = self.step();
        let mut g = vec![c(0.0); n];
        for i in 0..n {
            let mut acc = c(0.0);
            for j in 0..i {
                let w = if j == 0 { 0.5 } else { 1.0 };
                acc += self.samples[(i, j)] * g[j] * w;
            }
            let diag = c(1.0) + self.samples[(i, i)] * (0.5 * h);
            g[i] = (rhs[i] - acc * h) / diag;
        }
        Ok(g)
    }
}

/// ∫₀ᵗ sin(ν(t−s)) cos(ωs) ds and ∫₀ᵗ sin(ν(t−s)) sin(ωs) ds.
fn trig_integrals(nu: f64, omega: f64, t: f64) -> (f64, f64) {
    let diff = nu * nu - omega * omega;
    if diff.abs() <= 1e-9 * nu * nu {
        let (s, co) = (nu * t).sin_cos();
        return (0.5 * t * s, (s - nu * t * co) / (2.0 * nu));
    }
    let ic = nu * ((omega * t).cos() - (nu * t).cos()) / diff;
    let is = (nu * (omega * t).sin() - omega * (nu * t).sin()) / diff;
    (ic, is)
}

/// C(Δf + ∫G Δf) evaluated in closed form.
pub fn transformed_noise_closed_form(
    t: f64,
    realization: &NoiseRealization,
    blocks: &BlockSystem,
    kernel: &TransformKernel,
) -> C64 {
    let x = blocks.coupling_row();
    let df = noise_simple_unchecked(t, &realization.dq0, &realization.dqdot0, blocks);
    let mut memory = c(0.0);
    for (w, nu) in kernel.weights.iter().zip(&kernel.nu) {
        let mut inner = c(0.0);
        for b in 0..x.len() {
            let ob = blocks.omega_env[b];
            let (ic, is) = trig_integrals(*nu, ob, t);
            inner += x[b] * (realization.dq0[b] * ic + realization.dqdot0[b] * (is / ob));
        }
        memory += w * inner;
    }
    (df + memory) * kernel.constant
}

/// Quadrature residuals on successively refined grids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub points: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub report: Report,
    pub refinements: Vec<Refinement>,
    /// log₂ of successive residual ratios.
    pub observed_orders: Vec<f64>,
    /// The last two observed orders agree within 10%.
    pub stabilized: bool,
}

/// Both noise forms from one realization: closed-form transform against the Lagrangian form,
/// plus trapezoid composition on refined grids as convergence evidence.
pub fn check_noise_equivalence(
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
    realization: &NoiseRealization,
    times: &[f64],
    refinements: usize,
) -> Result<EquivalenceReport> {
    let kernel = build_transform(blocks, coupling, times)?;
    let (mode, d) = (blocks.basis.mode, blocks.basis.clump_size);
    let lag = coupling.lagrangian(realization);
    let target: Vec<C64> = times.iter().map(|t| lag.at(*t)).collect();
    let scale = target.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let closed = times
        .iter()
        .zip(&target)
        .map(|(t, z)| (transformed_noise_closed_form(*t, realization, blocks, &kernel) - z).norm())
        .fold(0.0, f64::max);
    let mut report = Report::default();
    report.entries.push(CheckEntry::new(
        "noise equivalence",
        mode,
        d,
        if scale == 0.0 { closed } else { closed / scale },
        TOL_EQUIVALENCE,
    ));
    report.entries.push(CheckEntry::new(
        "kernel diagonal",
        mode,
        d,
        kernel.diagonal_max(),
        1e-12,
    ));

    let (t0, t1) = (times[0], *times.last().unwrap_or(&times[0]));
    let mut refs = Vec::new();
    let mut n = times.len();
    for _ in 0..refinements {
        let grid: Vec<f64> = (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect();
        let k = build_transform(blocks, coupling, &grid)?;
        let df: Vec<C64> = grid
            .iter()
            .map(|t| noise_simple_unchecked(*t, &realization.dq0, &realization.dqdot0, blocks))
            .collect();
        let composed = k.apply(&df);
        let err = grid
            .iter()
            .zip(&composed)
            .map(|(t, z)| (z * k.constant - lag.at(*t)).norm())
            .fold(0.0, f64::max);
        refs.push(Refinement {
            points: n,
            residual: if scale == 0.0 { err } else { err / scale },
        });
        n = 2 * n - 1;
    }
    let orders: Vec<f64> = refs
        .windows(2)
        .map(|w| (w[0].residual / w[1].residual).log2())
        .collect();
    let stabilized = match orders.as_slice() {
        [.., a, b] => (a - b).abs() <= 0.1 * b.abs(),
        _ => false,
    };
    Ok(EquivalenceReport {
        report,
        refinements: refs,
        observed_orders: orders,
        stabilized,
    })
}

/// Frequency conditions: for every environment mode a and every eigenmode k.
pub fn check_frequency_conditions(
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
    dq0: &[C64],
) -> Result<Report> {
    let (mode, d) = (blocks.basis.mode, blocks.basis.clump_size);
    let x = blocks.coupling_row();
    let xs = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pref = blocks.mass / blocks.c0;
    let nu2: Vec<f64> = coupling.nu.iter().map(|v| v * v).collect();
    let resolved = |a: usize| {
        let w2 = blocks.omega_env[a].powi(2);
        x[a].norm() > 1e-12 * xs && nu2.iter().all(|v| (v - w2).abs() > 1e-9 * w2)
    };
    let mut worst_a = 0.0f64;
    for a in (0..x.len()).filter(|&a| resolved(a)) {
        let w2 = blocks.omega_env[a].powi(2);
        let sum: C64 = (0..coupling.dim())
            .map(|k| coupling.alpha[k] * coupling.beta[k] / (nu2[k] - w2))
            .sum();
        worst_a = worst_a.max((c(1.0) - pref * sum).norm());
    }
    let lhs = coupling.project(dq0);
    let lscale = lhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut worst_b = 0.0f64;
    for k in 0..coupling.dim() {
        let mut rhs = c(0.0);
        let mut skip = false;
        for a in 0..x.len() {
            let gap = nu2[k] - blocks.omega_env[a].powi(2);
            if gap.abs() <= 1e-9 * nu2[k] {
                skip = true;
                break;
            }
            rhs += x[a] * dq0[a] / gap;
        }
        if skip {
            continue;
        }
        rhs *= pref * coupling.beta[k];
        worst_b = worst_b.max(rel((lhs[k] - rhs).norm(), lscale));
    }
    let mut report = Report::default();
    report.entries.push(CheckEntry::new(
        "frequency sum rule",
        mode,
        d,
        worst_a,
        TOL_IDENTITY,
    ));
    report.entries.push(CheckEntry::new(
        "initial projection",
        mode,
        d,
        worst_b,
        TOL_IDENTITY,
    ));
    Ok(report)
}

/// Component relation of the eigenvectors and the inner-product relation.
pub fn check_eigen_relations(blocks: &BlockSystem, coupling: &SpectralCoupling) -> Result<Report> {
    let (mode, d) = (blocks.basis.mode, blocks.basis.clump_size);
    let n = blocks.env_dim();
    let o2 = blocks.omega0.powi(2);
    let norm = blocks.c0.norm_sqr() + norm_sqr(&blocks.c_env);
    let mut worst13 = 0.0f64;
    let mut worst14 = 0.0f64;
    let m = blocks.m_tt();
    let w = blocks.rank_one_vector();
    let top = m.top_eigenvalue();
    for k in 0..coupling.dim() {
        let y: Vec<C64> = coupling.y.column(k).iter().copied().collect();
        let cy: C64 = blocks.c_env.iter().zip(&y).map(|(a, b)| a * b).sum();
        let nu2 = coupling.nu[k].powi(2);
        let mut scale = 0.0f64;
        let mut diff = 0.0f64;
        for a in 0..n {
            let wa2 = blocks.omega_env[a].powi(2);
            let lhs = y[a] * ((nu2 - wa2) * norm);
            let rhs = blocks.c_env[a].conj() * (o2 - wa2) * cy;
            scale = scale
                .max(lhs.norm())
                .max(rhs.norm())
                .max(y[a].norm() * nu2 * norm);
            diff = diff.max((lhs - rhs).norm());
        }
        worst13 = worst13.max(rel(diff, scale));
        let v: Vec<C64> = (0..n).map(|i| coupling.y[(i, k)]).collect();
        let v = m.apply_pow(-0.5, &v);
        let left = dot_h(&m.apply_pow(-0.5, &v), w);
        let right = dot_h(&m.apply_pow(0.5, &v), w) / top;
        let scale = (norm_sqr(w) * norm_sqr(&v) / top).sqrt();
        worst14 = worst14.max(rel((left - right).norm(), scale));
    }
    let mw = m.apply_pow(1.0, w);
    let eig = mw
        .iter()
        .zip(w)
        .map(|(a, b)| (a - b * top).norm())
        .fold(0.0, f64::max);
    let mut report = Report::default();
    report.entries.push(CheckEntry::new(
        "eigenvector components",
        mode,
        d,
        worst13,
        TOL_IDENTITY,
    ));
    report.entries.push(CheckEntry::new(
        "inner product relation",
        mode,
        d,
        worst14,
        TOL_IDENTITY,
    ));
    report.entries.push(CheckEntry::new(
        "M_TT eigenvector",
        mode,
        d,
        rel(eig, top * norm_sqr(w).sqrt()),
        TOL_IDENTITY,
    ));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticFormReport {
    pub q_simple: f64,
    pub q_lagrangian: f64,
    pub relative_difference: f64,
    pub rank_simple: usize,
    pub rank_lagrangian: usize,
    /// Eigenvalues below cutoff·λ_max are dropped from the pseudo-inverses.
    pub cutoff: f64,
    /// Smallest retained eigenvalue over λ_max, for both kernels.
    pub smallest_retained: (f64, f64),
    /// Part of ℰ outside the range of the simple kernel, relative to ‖ℰ‖.
    pub off_range_fraction: f64,
    pub quadrature: Vec<Refinement>,
    pub inconclusive: bool,
    pub pass: bool,
}

pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;

fn pinv_form(k: &DMatrix<C64>, e: &DVector<C64>) -> Result<(f64, usize, f64)> {
    let eig = nalgebra::SymmetricEigen::try_new(k.clone(), 1e-15 * k.norm(), 100_000).ok_or_else(
        || Error::Numerical("eigen-decomposition of correlation kernel failed".into()),
    )?;
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut q = 0.0;
    let mut rank = 0;
    let mut smallest = f64::INFINITY;
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        if *lam > PSEUDO_INVERSE_CUTOFF * top {
            rank += 1;
            smallest = smallest.min(*lam / top);
            let p = eig.eigenvectors.column(i).dotc(e);
            q += p.norm_sqr() / lam;
        }
    }
    Ok((q, rank, smallest))
}

/// ℰ′†(corr′)⁺ℰ′ against ℰ†(corr)⁺ℰ for a test trajectory sampled with its second derivative.
///
/// ℰ = Ä + Ω_L²A is projected onto the range of the simple kernel; its exact image under the
/// transform is then built from the same feature coefficients.
pub fn check_quadratic_form_equality(
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
    a: &[C64],
    a_ddot: &[C64],
    times: &[f64],
    kbt: f64,
) -> Result<QuadraticFormReport> {
    check_uniform(times)?;
    let n = times.len();
    if a.len() != n || a_ddot.len() != n {
        return Err(Error::Contract("trajectory and grid lengths differ".into()));
    }
    let env = blocks.env_dim();
    let o2 = blocks.omega0.powi(2);
    let e = DVector::from_iterator(n, a.iter().zip(a_ddot).map(|(x, xdd)| xdd + x * o2));
    let x = blocks.coupling_row();
    let mut phi = DMatrix::<C64>::zeros(n, 2 * env);
    let mut phi_t = DMatrix::<C64>::zeros(n, 2 * env);
    for (i, t) in times.iter().enumerate() {
        for b in 0..env {
            let wb = blocks.omega_env[b];
            phi[(i, b)] = x[b] * (wb * t).cos();
            phi[(i, env + b)] = x[b] * ((wb * t).sin() / wb);
            let mut cq = c(0.0);
            let mut cp = c(0.0);
            for k in 0..coupling.dim() {
                let nu = coupling.nu[k];
                let yk = coupling.y[(b, k)].conj();
                cq += coupling.alpha[k] * (nu * t).cos() * yk;
                cp += coupling.alpha[k] * ((nu * t).sin() / nu) * yk;
            }
            phi_t[(i, b)] = cq * coupling.constant;
            phi_t[(i, env + b)] = cp * coupling.constant;
        }
    }
    let svd = phi.clone().svd(true, true);
    let z = svd
        .solve(&e, 1e-12 * svd.singular_values.max())
        .map_err(|m| Error::Numerical(format!("least squares failed: {m}")))?;
    let e_range = &phi * &z;
    let e_norm = e.norm();
    let off_range = if e_norm == 0.0 {
        0.0
    } else {
        (&e - &e_range).norm() / e_norm
    };
    let e_prime = &phi_t * &z;

    let k_simple = DMatrix::from_fn(n, n, |i, j| {
        corr_simple(times[i], times[j], blocks, kbt).unwrap_or(c(f64::NAN))
    });
    if k_simple.iter().any(|v| v.re.is_nan()) {
        return Err(Error::Numerical(
            "correlation kernel evaluation failed".into(),
        ));
    }
    let k_lag = DMatrix::from_fn(n, n, |i, j| {
        c(corr_lagrangian(times[i], times[j], coupling, kbt))
    });
    let (q_s, r_s, small_s) = pinv_form(&k_simple, &e_range)?;
    let (q_l, r_l, small_l) = pinv_form(&k_lag, &e_prime)?;
    let denom = q_s.abs().max(q_l.abs());
    let diff = if denom == 0.0 {
        0.0
    } else {
        (q_s - q_l).abs() / denom
    };

    let mut quadrature = Vec::new();
    let (t0, t1) = (times[0], times[n - 1]);
    let mut m = n;
    for _ in 0..3 {
        let grid: Vec<f64> = (0..m)
            .map(|i| t0 + (t1 - t0) * i as f64 / (m - 1) as f64)
            .collect();
        let kernel = build_transform(blocks, coupling, &grid)?;
        let mut fr = vec![c(0.0); m];
        let mut ex = vec![c(0.0); m];
        for (i, t) in grid.iter().enumerate() {
            for b in 0..env {
                let wb = blocks.omega_env[b];
                fr[i] += x[b] * ((wb * t).cos() * z[b] + ((wb * t).sin() / wb) * z[env + b]);
                let mut cq = c(0.0);
                let mut cp = c(0.0);
                for k in 0..coupling.dim() {
                    let nu = coupling.nu[k];
                    let yk = coupling.y[(b, k)].conj();
                    cq += coupling.alpha[k] * (nu * t).cos() * yk;
                    cp += coupling.alpha[k] * ((nu * t).sin() / nu) * yk;
                }
                ex[i] += (cq * z[b] + cp * z[env + b]) * coupling.constant;
            }
        }
        let composed = kernel.apply(&fr);
        let scale = ex.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = composed
            .iter()
            .zip(&ex)
            .map(|(a, b)| (a * kernel.constant - b).norm())
            .fold(0.0, f64::max);
        quadrature.push(Refinement {
            points: m,
            residual: rel(err, scale),
        });
        m = 2 * m - 1;
    }
    let inconclusive = r_s != r_l || small_s.min(small_l) < 1e3 * PSEUDO_INVERSE_CUTOFF || r_s == 0;
    let pass = !inconclusive && diff <= TOL_EQUIVALENCE;
    Ok(QuadraticFormReport {
        q_simple: q_s,
        q_lagrangian: q_l,
        relative_difference: diff,
        rank_simple: r_s,
        rank_lagrangian: r_l,
        cutoff: PSEUDO_INVERSE_CUTOFF,
        smallest_retained: (small_s, small_l),
        off_range_fraction: off_range,
        quadrature,
        inconclusive,
        pass,
    })
}

/// Random smooth trajectory Σ_j (a_j cos(s_j t) + b_j sin(s_j t)) with its exact second derivative.
pub fn smooth_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    times: &[f64],
    terms: usize,
) -> (Vec<C64>, Vec<C64>) {
    let params: Vec<(f64, C64, C64)> = (0..terms)
        .map(|_| {
            let s = rng.random_range(0.05..1.5);
            let a = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let b = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (s, a, b)
        })
        .collect();
    let a = times
        .iter()
        .map(|t| {
            params
                .iter()
                .map(|(s, a, b)| a * (s * t).cos() + b * (s * t).sin())
                .sum()
        })
        .collect();
    let add = times
        .iter()
        .map(|t| {
            params
                .iter()
                .map(|(s, a, b)| -(a * (s * t).cos() + b * (s * t).sin()) * (s * s))
                .sum()
        })
        .collect();
    (a, add)
}

/// Grid and options for the full suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub b_groups: usize,
    pub b_modes: Vec<usize>,
    pub b_clumps: Vec<usize>,
    pub c_groups: usize,
    pub c_modes: Vec<usize>,
    pub c_clumps: Vec<usize>,
    pub realizations: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub horizon: f64,
    /// Perturbs one coefficient before the checks run.
    pub corrupt_coefficient: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            b_groups: 630,
            b_modes: vec![1, 30, 315],
            b_clumps: vec![2, 3, 8, 64, 512],
            c_groups: 16,
            c_modes: vec![1, 2, 4],
            c_clumps: vec![2, 4, 8],
            realizations: 100,
            seed: 2024,
            grid_points: 201,
            horizon: 20.0,
            corrupt_coefficient: false,
        }
    }
}

/// Grid-refinement evidence for one (L, d) of the noise-equivalence check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub mode: usize,
    pub clump_size: usize,
    pub refinements: Vec<Refinement>,
    pub observed_orders: Vec<f64>,
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub report: Report,
    pub convergence: Vec<Convergence>,
    pub quadratic_form: Option<QuadraticFormReport>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.report.all_pass() && self.quadratic_form.as_ref().is_none_or(|q| q.pass)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

fn corrupt(basis: &mut ModeBasis) {
    if basis.coeffs.len() > 1 {
        basis.coeffs[1] *= 1.001;
    } else {
        basis.coeffs[0] *= 1.001;
    }
}

pub fn run_verification_suite(options: &SuiteOptions) -> Result<SuiteReport> {
    let group_size = options.b_clumps.iter().fold(1, |acc, d| lcm(acc, *d));
    let b_points: Vec<(usize, usize)> = options
        .b_modes
        .iter()
        .flat_map(|l| options.b_clumps.iter().map(move |d| (*l, *d)))
        .collect();
    let b_reports: Vec<Result<Report>> = b_points
        .par_iter()
        .map(|&(l, d)| {
            let mut basis = build_mode_basis(l, options.b_groups, d)?;
            if options.corrupt_coefficient {
                corrupt(&mut basis);
            }
            check_reduced_forms_for(&basis, group_size, 1.0)
        })
        .collect();
    let mut report = Report::default();
    for r in b_reports {
        report.extend(r?);
    }

    let times: Vec<f64> = (0..options.grid_points)
        .map(|i| options.horizon * i as f64 / (options.grid_points - 1) as f64)
        .collect();
    let c_points: Vec<(usize, usize)> = options
        .c_modes
        .iter()
        .flat_map(|l| options.c_clumps.iter().map(move |d| (*l, *d)))
        .collect();
    let c_results: Vec<Result<(Report, Convergence)>> = c_points
        .par_iter()
        .enumerate()
        .map(|(point, &(l, d))| {
            let mut basis = build_mode_basis(l, options.c_groups, d)?;
            if options.corrupt_coefficient {
                corrupt(&mut basis);
            }
            let blocks = BlockSystem::new(&basis, 1.0, 1.0, 8.0)?;
            let spectrum = effective_frequency(&blocks)?;
            let coupling = SpectralCoupling::new(&blocks, &spectrum)?;
            let mut rep = Report::default();
            let mut worst = CheckEntry::new("noise equivalence", l, d, 0.0, TOL_EQUIVALENCE);
            let mut convergence = Convergence {
                mode: l,
                clump_size: d,
                refinements: Vec::new(),
                observed_orders: Vec::new(),
                stabilized: false,
            };
            for r in 0..options.realizations {
                let mut rng = sample_rng(options.seed, (point * options.realizations + r) as u64);
                let real = NoiseRealization::thermal(&blocks, 1.0, NoiseForm::Simple, &mut rng)?;
                let refinements = if r == 0 { 3 } else { 0 };
                let eq = check_noise_equivalence(&blocks, &coupling, &real, &times, refinements)?;
                let e = &eq.report.entries[0];
                if e.max_residual > worst.max_residual || !e.max_residual.is_finite() {
                    worst = e.clone().with_note(format!(
                        "realization seed {}:{}",
                        options.seed,
                        point * options.realizations + r
                    ));
                }
                if r == 0 {
                    rep.entries.push(eq.report.entries[1].clone());
                    convergence = Convergence {
                        refinements: eq.refinements,
                        observed_orders: eq.observed_orders,
                        stabilized: eq.stabilized,
                        ..convergence
                    };
                    rep.extend(check_frequency_conditions(&blocks, &coupling, &real.dq0)?);
                }
            }
            worst.note = format!(
                "worst of {} realizations; {}",
                options.realizations, worst.note
            );
            worst.pass = worst.max_residual.is_finite() && worst.max_residual <= TOL_EQUIVALENCE;
            rep.entries.insert(0, worst);
            rep.extend(check_eigen_relations(&blocks, &coupling)?);
            Ok((rep, convergence))
        })
        .collect();
    let mut convergence = Vec::new();
    for r in c_results {
        let (rep, conv) = r?;
        report.extend(rep);
        convergence.push(conv);
    }

    let mut basis = build_mode_basis(2, options.c_groups, 4)?;
    if options.corrupt_coefficient {
        corrupt(&mut basis);
    }
    let blocks = BlockSystem::new(&basis, 1.0, 1.0, 8.0)?;
    let coupling = SpectralCoupling::new(&blocks, &effective_frequency(&blocks)?)?;
    let qtimes: Vec<f64> = (0..400).map(|i| 40.0 * i as f64 / 399.0).collect();
    let mut rng = sample_rng(options.seed, u64::MAX);
    let (a, add) = smooth_trajectory(&mut rng, &qtimes, 6);
    let q = check_quadratic_form_equality(&blocks, &coupling, &a, &add, &qtimes, 1.0)?;
    Ok(SuiteReport {
        report,
        convergence,
        quadratic_form: Some(q),
    })
}
