//! Decoherence kernel K_I, its time-averaged trace, and order-of-magnitude predictability estimates.

use std::f64::consts::PI;

use serde::Serialize;

use crate::blocks::BlockSystem;
use crate::chain::{build_mode_basis, ChainGeometry, CoarseGrainingSpec};
use crate::constants::{AMU, BOLTZMANN, HBAR};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::noise::{corr_lagrangian, noise_strength, SpectralCoupling};

/// K_I(t, t′) = (N²μ²k_BT/4ħ²)·x M^{-1/2}Ω⁻¹[cos cos′ + sin sin′]Ω⁻¹M^{-1/2}x†.
pub fn kernel(t: f64, t_prime: f64, coupling: &SpectralCoupling, geometry: &ChainGeometry) -> f64 {
    corr_lagrangian(t, t_prime, coupling, geometry.kbt()) / (4.0 * geometry.hbar.powi(2))
}

/// K_I(t, t) in closed form: (N²μ²k_BT/4ħ²)·x V_TT⁻¹ x†.
pub fn kernel_trace(blocks: &BlockSystem, kbt: f64, hbar: f64) -> Result<f64> {
    if blocks.env_dim() == 0 {
        return Ok(0.0);
    }
    let x = blocks.coupling_row();
    let conj: Vec<C64> = x.iter().map(|z| z.conj()).collect();
    let y = blocks.v_tt().solve(&conj)?;
    let form: f64 = x.iter().zip(&y).map(|(a, b)| (a * b).re).sum();
    let pref = (blocks.group_size * blocks.mass).powi(2) * kbt / (4.0 * hbar * hbar);
    Ok(pref * form)
}

/// 𝒦_I(d) for mode L in units N k_BT μ ω²/(4ħ²).
pub fn trace_measure(mode: usize, d: usize, groups: usize) -> Result<f64> {
    let basis = build_mode_basis(mode, groups, d)?;
    kernel_trace(&BlockSystem::reduced(&basis)?, 1.0, 0.5)
}

/// Timescales and forces for one (L, d); every entry is an order-of-magnitude estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoherenceReport {
    pub mode: usize,
    pub clump_size: usize,
    /// 𝒦_I in units N k_BT μ ω²/(4ħ²).
    pub kernel_trace: f64,
    /// 𝒦_I/S² with both in their reporting units.
    pub classical_ratio: f64,
    pub t_dyn: f64,
    pub t_decoh: f64,
    pub ratio_decoh_dyn: f64,
    pub lambda_db: f64,
    pub f_noise: f64,
    pub f_dyn: f64,
    pub noise_force_ratio: f64,
    /// 𝓛_T = (k_BT/(NμΩ_L²))^{1/2}.
    pub thermal_scale: f64,
    pub op_count: f64,
    pub order_of_magnitude: bool,
}

pub fn predictability_report(
    geometry: &ChainGeometry,
    spec: &CoarseGrainingSpec,
    mode: usize,
    d: usize,
    excitation_scale: f64,
) -> Result<DecoherenceReport> {
    let geometry = geometry.with_clump_size(d)?;
    spec.validate(&geometry)?;
    if mode == 0 || mode > geometry.groups / 2 {
        return Err(Error::Domain(format!(
            "L = {mode} outside [1, {}]",
            geometry.groups / 2
        )));
    }
    if !(excitation_scale > 0.0) {
        return Err(Error::Domain("excitation scale must be positive".into()));
    }
    let (mu, omega, kbt, hbar) = (
        geometry.mass,
        geometry.spring_frequency,
        geometry.kbt(),
        geometry.hbar,
    );
    let n = geometry.group_size as f64;
    let (l, m, df) = (mode as f64, geometry.groups as f64, d as f64);

    let t_dyn = (df / omega) * (m / l);
    let f_noise = (kbt * omega * omega * mu).sqrt() * (n / df).sqrt() * (l / m);
    let t_decoh = hbar / (f_noise * spec.range_width);
    let lambda_db = hbar / (kbt * mu).sqrt();
    let f_dyn = n * mu * excitation_scale / (t_dyn * t_dyn);
    let omega_l = 2.0 * omega * (PI * l / (m * df)).sin();

    let kernel_units = trace_measure(mode, d, geometry.groups)?;
    let s2 = noise_strength(mode, d, geometry.groups)?.s2;
    Ok(DecoherenceReport {
        mode,
        clump_size: d,
        kernel_trace: kernel_units,
        classical_ratio: if s2 > 0.0 {
            kernel_units / s2
        } else {
            f64::NAN
        },
        t_dyn,
        t_decoh,
        ratio_decoh_dyn: t_decoh / t_dyn,
        lambda_db,
        f_noise,
        f_dyn,
        noise_force_ratio: f_noise / f_dyn,
        thermal_scale: (kbt / (n * mu * omega_l * omega_l)).sqrt(),
        op_count: l * omega * spec.horizon / df,
        order_of_magnitude: true,
    })
}

/// A 10 cm string in SI units: 𝒩 = 10⁹ atoms of 10 AMU at 300 K, 1 Å spacing,
/// sound speed 5 km/s, split into ℳ = 10³ groups of N = 10⁶.
pub fn string_preset() -> (ChainGeometry, CoarseGrainingSpec) {
    let spacing = 1e-10;
    let geometry = ChainGeometry {
        groups: 1000,
        group_size: 1_000_000,
        clump_size: 1,
        mass: 10.0 * AMU,
        spring_frequency: 5e3 / spacing,
        lattice_spacing: spacing,
        temperature: 300.0,
        hbar: HBAR,
        boltzmann: BOLTZMANN,
    };
    let spec = CoarseGrainingSpec {
        range_width: spacing,
        time_step: 1e-12,
        cutoff_mode: 0,
        horizon: 1.0,
    };
    (geometry, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::CM;
    use crate::spectral::effective_frequency;

    #[test]
    fn single_clump_kernel_is_zero() {
        assert_eq!(trace_measure(30, 1, 630).unwrap(), 0.0);
    }

    #[test]
    fn kernel_diagonal_is_stationary_and_matches_closed_form() {
        let g = ChainGeometry {
            mass: 2.0,
            temperature: 0.7,
            hbar: 0.3,
            ..ChainGeometry::natural(16, 8, 4).unwrap()
        };
        let basis = build_mode_basis(2, 16, 4).unwrap();
        let bs = crate::blocks::build_blocks(&basis, &g).unwrap();
        let coupling = SpectralCoupling::new(&bs, &effective_frequency(&bs).unwrap()).unwrap();
        let closed = kernel_trace(&bs, g.kbt(), g.hbar).unwrap();
        let values: Vec<f64> = (0..200)
            .map(|i| kernel(0.05 * i as f64, 0.05 * i as f64, &coupling, &g))
            .collect();
        let (lo, hi) = values
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!((hi - lo) <= 1e-10 * hi);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean / closed - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_proportional_to_lagrangian_correlation() {
        let g = ChainGeometry {
            hbar: 0.25,
            ..ChainGeometry::natural(16, 8, 8).unwrap()
        };
        let bs = crate::blocks::build_blocks(&build_mode_basis(3, 16, 8).unwrap(), &g).unwrap();
        let coupling = SpectralCoupling::new(&bs, &effective_frequency(&bs).unwrap()).unwrap();
        let k = kernel(0.4, 2.3, &coupling, &g);
        let c = corr_lagrangian(0.4, 2.3, &coupling, 1.0);
        assert!((k * 4.0 * 0.0625 - c).abs() < 1e-12 * c.abs());
    }

    #[test]
    fn string_estimates() {
        let (g, spec) = string_preset();
        let r = predictability_report(&g, &spec, 10, 2, 1e-9).unwrap();
        let product_cm = r.ratio_decoh_dyn * spec.range_width / CM;
        assert!(product_cm > 1e-14 && product_cm < 1e-12, "{product_cm:e}");
        let expected = r.lambda_db / spec.range_width / (1e6f64 * 2.0).sqrt();
        assert!((r.ratio_decoh_dyn / expected - 1.0).abs() < 1e-12);
        let full = predictability_report(&g, &spec, 10, 1_000_000, 1e-9).unwrap();
        assert!(full.thermal_scale > 1e-8 && full.thermal_scale < 1e-6);
        let doubled = predictability_report(&g, &spec, 10, 4, 1e-9).unwrap();
        assert!((doubled.op_count * 2.0 / r.op_count - 1.0).abs() < 1e-14);
    }
}
