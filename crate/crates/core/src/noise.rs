//! The two classical noise forms, their thermal correlation functions, and the noise strength S².

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::blocks::BlockSystem;
use crate::chain::build_mode_basis;
use crate::error::{Error, Result};
use crate::linalg::{c, dot_h, pairwise_sum, C64};
use crate::rng::complex_normal;
use crate::spectral::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseForm {
    Simple,
    Lagrangian,
}

/// Initial environment offsets Δq(0) and velocities Δq̇(0).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub dq0: Vec<C64>,
    pub dqdot0: Vec<C64>,
    pub form: NoiseForm,
}

impl NoiseRealization {
    pub fn zero(env_dim: usize, form: NoiseForm) -> Self {
        Self {
            dq0: vec![c(0.0); env_dim],
            dqdot0: vec![c(0.0); env_dim],
            form,
        }
    }

    /// Draw with E[Δq Δq†] = k_BT V_TT⁻¹ and E[Δq̇ Δq̇†] = k_BT M_TT⁻¹.
    pub fn thermal<R: Rng + ?Sized>(
        blocks: &BlockSystem,
        kbt: f64,
        form: NoiseForm,
        rng: &mut R,
    ) -> Result<Self> {
        let n = blocks.env_dim();
        let xi: Vec<C64> = (0..n).map(|_| complex_normal(rng, kbt)).collect();
        let eta: Vec<C64> = (0..n).map(|_| complex_normal(rng, kbt)).collect();
        let dq0 = if n == 0 {
            Vec::new()
        } else {
            let chol = blocks
                .v_tt()
                .to_dense()
                .cholesky()
                .ok_or_else(|| Error::Numerical("V_TT is not positive definite".into()))?;
            let l_adj = chol.l().adjoint();
            l_adj
                .solve_upper_triangular(&DVector::from_column_slice(&xi))
                .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?
                .iter()
                .copied()
                .collect()
        };
        let dqdot0 = blocks.m_tt().apply_pow(-0.5, &eta);
        Ok(Self { dq0, dqdot0, form })
    }

    fn check(&self, blocks: &BlockSystem, form: NoiseForm) -> Result<()> {
        if self.form != form {
            return Err(Error::Contract(format!(
                "realization is {:?}, expected {form:?}",
                self.form
            )));
        }
        let n = blocks.env_dim();
        if self.dq0.len() != n || self.dqdot0.len() != n {
            return Err(Error::Contract(format!(
                "realization has {}/{} entries, environment has {n}",
                self.dq0.len(),
                self.dqdot0.len()
            )));
        }
        Ok(())
    }
}

/// Δf_L(t) = c(Ω_L² − Ω_Q²)(cos(Ω_Q t)Δq(0) + Ω_Q⁻¹ sin(Ω_Q t)Δq̇(0)).
pub fn noise_simple(t: f64, realization: &NoiseRealization, blocks: &BlockSystem) -> Result<C64> {
    realization.check(blocks, NoiseForm::Simple)?;
    Ok(noise_simple_unchecked(
        t,
        &realization.dq0,
        &realization.dqdot0,
        blocks,
    ))
}

pub(crate) fn noise_simple_unchecked(t: f64, q: &[C64], p: &[C64], blocks: &BlockSystem) -> C64 {
    blocks
        .coupling_row()
        .iter()
        .zip(&blocks.omega_env)
        .zip(q.iter().zip(p))
        .map(|((x, w), (qb, pb))| x * (qb * (w * t).cos() + pb * ((w * t).sin() / w)))
        .sum()
}

/// Per-eigenmode couplings of the Lagrangian noise form.
///
/// α_k = c(Ω_L² − Ω_Q²)M_TT^{-1/2}v_k, β_k = v_k† M_TT^{-1/2} w, and y_k = M_TT^{1/2} v_k.
#[derive(Debug, Clone)]
pub struct SpectralCoupling {
    pub nu: Vec<f64>,
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
    pub y: DMatrix<C64>,
    /// C = Nμ.
    pub constant: f64,
}

impl SpectralCoupling {
    pub fn new(blocks: &BlockSystem, spectrum: &Spectrum) -> Result<Self> {
        let n = blocks.env_dim();
        if spectrum.dim() != n {
            return Err(Error::Contract(
                "spectrum does not match block system".into(),
            ));
        }
        let x = blocks.coupling_row();
        let w = blocks.rank_one_vector();
        let m = blocks.m_tt();
        let mut alpha = Vec::with_capacity(n);
        let mut beta = Vec::with_capacity(n);
        let mut y = DMatrix::zeros(n, n);
        for k in 0..n {
            let v = spectrum.vector(k);
            let r = m.apply_pow(-0.5, &v);
            alpha.push(x.iter().zip(&r).map(|(a, b)| a * b).sum());
            beta.push(dot_h(&r, w));
            for (i, yi) in m.apply_pow(0.5, &v).into_iter().enumerate() {
                y[(i, k)] = yi;
            }
        }
        Ok(Self {
            nu: spectrum.nu(),
            alpha,
            beta,
            y,
            constant: blocks.group_size * blocks.mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// (v_k† M^{1/2} a)_k.
    pub fn project(&self, a: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|k| dot_h(self.y.column(k).as_slice(), a))
            .collect()
    }

    /// Evaluator for one realization: coefficients projected once, O(d) per time.
    pub fn lagrangian(&self, realization: &NoiseRealization) -> LagrangianNoise<'_> {
        LagrangianNoise {
            coupling: self,
            gq: self.project(&realization.dq0),
            gp: self.project(&realization.dqdot0),
        }
    }
}

pub struct LagrangianNoise<'a> {
    coupling: &'a SpectralCoupling,
    gq: Vec<C64>,
    gp: Vec<C64>,
}

impl LagrangianNoise<'_> {
    pub fn at(&self, t: f64) -> C64 {
        let s = self.coupling;
        let terms: Vec<C64> = (0..s.dim())
            .map(|k| {
                let nu = s.nu[k];
                s.alpha[k] * (self.gq[k] * (nu * t).cos() + self.gp[k] * ((nu * t).sin() / nu))
            })
            .collect();
        terms.iter().sum::<C64>() * s.constant
    }
}

/// Δf′_L(t) = Nμ·c(Ω_L² − Ω_Q²)M^{-1/2}(cos(Ωt)M^{1/2}Δq(0) + Ω⁻¹ sin(Ωt)M^{1/2}Δq̇(0)).
pub fn noise_lagrangian(
    t: f64,
    realization: &NoiseRealization,
    blocks: &BlockSystem,
    coupling: &SpectralCoupling,
) -> Result<C64> {
    realization.check(blocks, NoiseForm::Lagrangian)?;
    Ok(coupling.lagrangian(realization).at(t))
}

/// E[Δf(t) conj(Δf(t′))] under the thermal environment statistics.
pub fn corr_simple(t: f64, t_prime: f64, blocks: &BlockSystem, kbt: f64) -> Result<C64> {
    if blocks.env_dim() == 0 {
        return Ok(c(0.0));
    }
    let x = blocks.coupling_row();
    let w = &blocks.omega_env;
    let cos_t: Vec<C64> = x
        .iter()
        .zip(w)
        .map(|(xb, wb)| xb * (wb * t).cos())
        .collect();
    let cos_tp: Vec<C64> = x
        .iter()
        .zip(w)
        .map(|(xb, wb)| (xb * (wb * t_prime).cos()).conj())
        .collect();
    let sin_t: Vec<C64> = x
        .iter()
        .zip(w)
        .map(|(xb, wb)| xb * ((wb * t).sin() / wb))
        .collect();
    let sin_tp: Vec<C64> = x
        .iter()
        .zip(w)
        .map(|(xb, wb)| (xb * ((wb * t_prime).sin() / wb)).conj())
        .collect();
    let a = blocks.v_tt().solve(&cos_tp)?;
    let b = blocks.m_tt().apply_pow(-1.0, &sin_tp);
    let first: C64 = cos_t.iter().zip(&a).map(|(u, v)| u * v).sum();
    let second: C64 = sin_t.iter().zip(&b).map(|(u, v)| u * v).sum();
    Ok((first + second) * kbt)
}

/// E[Δf′(t) conj(Δf′(t′))] = (Nμ)² k_BT Σ_k |α_k|² cos(ν_k(t − t′))/ν_k².
pub fn corr_lagrangian(t: f64, t_prime: f64, coupling: &SpectralCoupling, kbt: f64) -> f64 {
    let terms: Vec<f64> = (0..coupling.dim())
        .map(|k| {
            let nu = coupling.nu[k];
            coupling.alpha[k].norm_sqr() * (nu * (t - t_prime)).cos() / (nu * nu)
        })
        .collect();
    coupling.constant.powi(2) * kbt * pairwise_sum(&terms)
}

/// Time-averaged noise strength for one (L, d), in units k_BTω²/(Nμ).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpectrum {
    pub mode: usize,
    pub clump_size: usize,
    /// S² with the exact final factor.
    pub s2: f64,
    pub per_mode: Vec<f64>,
    /// S² with the final factor replaced by 1.
    pub s2_unit_factor: f64,
    /// S² including cross terms between exactly degenerate environment modes.
    pub s2_exact_average: f64,
}

pub fn noise_strength(mode: usize, d: usize, groups: usize) -> Result<NoiseSpectrum> {
    let basis = build_mode_basis(mode, groups, d)?;
    let blocks = BlockSystem::reduced(&basis)?;
    noise_strength_for(&blocks)
}

pub fn noise_strength_for(blocks: &BlockSystem) -> Result<NoiseSpectrum> {
    let n = blocks.env_dim();
    let basis = &blocks.basis;
    let empty = NoiseSpectrum {
        mode: basis.mode,
        clump_size: basis.clump_size,
        s2: 0.0,
        per_mode: Vec::new(),
        s2_unit_factor: 0.0,
        s2_exact_average: 0.0,
    };
    if n == 0 {
        return Ok(empty);
    }
    let x = blocks.coupling_row();
    let w2 = blocks.omega_q2();
    let v_inv = blocks.v_tt().inverse_diagonal()?;
    let m_tt = blocks.m_tt();
    let m_inv_scale = 1.0 / (m_tt.scale * (1.0 + m_tt.vector_norm_sqr()));
    let wv = blocks.rank_one_vector();
    let m_inv: Vec<f64> = wv
        .iter()
        .map(|wb| (1.0 - wb.norm_sqr() * m_inv_scale * m_tt.scale) / m_tt.scale)
        .collect();
    let per_mode: Vec<f64> = (0..n)
        .map(|b| x[b].norm_sqr() / w2[b] * 0.5 * (w2[b] * v_inv[b] + m_inv[b]))
        .collect();
    let unit: Vec<f64> = (0..n).map(|b| x[b].norm_sqr() / w2[b]).collect();
    let s2 = pairwise_sum(&per_mode);

    let mut cross = 0.0;
    for ks in basis.degenerate_groups() {
        let members: Vec<usize> = ks.iter().filter(|&&k| k > 0).map(|k| k - 1).collect();
        if members.len() < 2 {
            continue;
        }
        for &b in &members {
            let mut e = vec![c(0.0); n];
            e[b] = c(1.0);
            let col = blocks.v_tt().solve(&e)?;
            for &bp in members.iter().filter(|&&bp| bp != b) {
                let v_bb = col[bp];
                let m_bb = -wv[bp] * wv[b].conj() * m_inv_scale;
                let wb = blocks.omega_env[b];
                cross += 0.5 * (x[bp] * (v_bb + m_bb / (wb * wb)) * x[b].conj()).re;
            }
        }
    }
    Ok(NoiseSpectrum {
        s2,
        s2_unit_factor: 0.5 * pairwise_sum(&unit),
        s2_exact_average: s2 + cross,
        per_mode,
        ..empty
    })
}

/// ((πL/ℳ)², (πL/ℳ)²/d) in units k_BTω²/(Nμ).
pub fn asymptotic_estimates(mode: usize, d: usize, groups: usize) -> (f64, f64) {
    let a = (PI * mode as f64 / groups as f64).powi(2);
    (a, a / d as f64)
}
