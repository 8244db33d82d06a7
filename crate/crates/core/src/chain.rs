//! Chain geometry, normal modes, and the map between fine-grained and coarse-grained modes.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, C64};

/// One member of the coarse-graining family together with the physical constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    /// Number of groups ℳ (even).
    pub groups: usize,
    /// Atoms per group N.
    pub group_size: usize,
    /// Clump size d; divides N.
    pub clump_size: usize,
    pub mass: f64,
    pub spring_frequency: f64,
    pub lattice_spacing: f64,
    pub temperature: f64,
    pub hbar: f64,
    pub boltzmann: f64,
}

impl ChainGeometry {
    /// Geometry in natural units: μ = ω = Δx = k_B T = ħ = 1.
    pub fn natural(groups: usize, group_size: usize, clump_size: usize) -> Result<Self> {
        let g = Self {
            groups,
            group_size,
            clump_size,
            mass: 1.0,
            spring_frequency: 1.0,
            lattice_spacing: 1.0,
            temperature: 1.0,
            hbar: 1.0,
            boltzmann: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.group_size == 0 || self.clump_size == 0 {
            return Err(Error::Domain("ℳ, N and d must be positive".into()));
        }
        if !self.groups.is_multiple_of(2) {
            return Err(Error::Domain(format!("ℳ = {} must be even", self.groups)));
        }
        if !self.group_size.is_multiple_of(self.clump_size) {
            return Err(Error::Domain(format!(
                "d = {} does not divide N = {}",
                self.clump_size, self.group_size
            )));
        }
        for (name, v) in [
            ("mass", self.mass),
            ("spring frequency", self.spring_frequency),
            ("lattice spacing", self.lattice_spacing),
            ("temperature", self.temperature),
            ("hbar", self.hbar),
            ("boltzmann", self.boltzmann),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// 𝒩 = ℳ·N.
    pub fn total_atoms(&self) -> usize {
        self.groups * self.group_size
    }

    pub fn kbt(&self) -> f64 {
        self.boltzmann * self.temperature
    }

    pub fn with_clump_size(&self, d: usize) -> Result<Self> {
        let g = Self {
            clump_size: d,
            ..self.clone()
        };
        g.validate()?;
        Ok(g)
    }
}

/// Coarse-graining resolution: position bin width, time step, excitation cutoff, evolution horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainingSpec {
    pub range_width: f64,
    pub time_step: f64,
    pub cutoff_mode: usize,
    /// Interval 𝒯 over which the operation count is estimated.
    pub horizon: f64,
}

impl CoarseGrainingSpec {
    pub fn validate(&self, geometry: &ChainGeometry) -> Result<()> {
        if !(self.range_width > 0.0) || !(self.time_step > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Domain(
                "Δ, Δt and the horizon must be positive".into(),
            ));
        }
        if self.cutoff_mode > geometry.total_atoms() / 2 {
            return Err(Error::Domain(format!(
                "ℓ_C = {} exceeds 𝒩/2",
                self.cutoff_mode
            )));
        }
        Ok(())
    }
}

/// 2ω sin(πℓ/𝒩).
pub fn fine_mode_frequency(ell: usize, geometry: &ChainGeometry) -> Result<f64> {
    let total = geometry.total_atoms();
    if ell > total / 2 {
        return Err(Error::Domain(format!(
            "ℓ = {ell} outside [0, {}]",
            total / 2
        )));
    }
    Ok(2.0 * geometry.spring_frequency * (PI * ell as f64 / total as f64).sin())
}

/// m(k): the fine mode (in units of N/d) feeding coefficient k of coarse mode L.
pub fn index_map(mode: usize, k: usize, groups: usize) -> usize {
    let half = groups / 2;
    if k.is_multiple_of(2) {
        mode + k * half
    } else {
        (k + 1) * half - mode
    }
}

/// The d fine modes that make up one coarse-grained mode, in reduced (N-free) form.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    pub mode: usize,
    pub groups: usize,
    pub clump_size: usize,
    pub index_map: Vec<usize>,
    /// ĉ_k = √N c_{Lk}.
    pub coeffs: Vec<C64>,
    /// ω̂_k = ω_{ℓ(k)}/ω.
    pub fine_frequencies: Vec<f64>,
    pub phase: f64,
}

impl ModeBasis {
    /// Ω_L/ω.
    pub fn coarse_frequency(&self) -> f64 {
        self.fine_frequencies[0]
    }

    /// Fine-mode index ℓ(k) = m(k)·N/d on a chain with the given group size.
    pub fn fine_index(&self, k: usize, group_size: usize) -> usize {
        self.index_map[k] * group_size / self.clump_size
    }

    /// Indices k sharing the same m(k), in order of first appearance.
    pub fn degenerate_groups(&self) -> Vec<Vec<usize>> {
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (k, &m) in self.index_map.iter().enumerate() {
            let i = *slot.entry(m).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[i].push(k);
        }
        groups
    }

    pub fn is_self_conjugate(&self) -> bool {
        self.mode == 0 || 2 * self.mode == self.groups
    }
}

pub fn clump_phase(groups: usize, d: usize) -> f64 {
    if d % 2 == 1 {
        0.0
    } else {
        -PI / (groups * d) as f64
    }
}

/// Builds the basis for mode L from (ℳ, L, d) alone.
pub fn build_mode_basis(mode: usize, groups: usize, d: usize) -> Result<ModeBasis> {
    if groups == 0 || !groups.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "ℳ = {groups} must be positive and even"
        )));
    }
    if d == 0 {
        return Err(Error::Domain("d must be positive".into()));
    }
    if mode > groups / 2 {
        return Err(Error::Domain(format!(
            "L = {mode} outside [0, {}]",
            groups / 2
        )));
    }
    let phase = clump_phase(groups, d);
    let period = groups * d;
    let index_map: Vec<usize> = (0..d).map(|k| index_map(mode, k, groups)).collect();
    let coeffs = index_map
        .iter()
        .map(|&m| {
            let ratio = if m % period == 0 {
                1.0
            } else if m % groups == 0 {
                0.0
            } else {
                let x = PI * m as f64 / groups as f64;
                x.sin() / (d as f64 * (x / d as f64).sin())
            };
            C64::from_polar(ratio, m as f64 * phase)
        })
        .collect();
    let fine_frequencies = index_map
        .iter()
        .map(|&m| 2.0 * (PI * m as f64 / period as f64).sin())
        .collect();
    Ok(ModeBasis {
        mode,
        groups,
        clump_size: d,
        index_map,
        coeffs,
        fine_frequencies,
        phase,
    })
}

/// Group averages X_J from atom displacements.
pub fn project_to_coarse(fine: &[f64], geometry: &ChainGeometry) -> Result<Vec<f64>> {
    let total = geometry.total_atoms();
    if fine.len() != total {
        return Err(Error::Contract(format!(
            "expected {total} displacements, got {}",
            fine.len()
        )));
    }
    let (m_groups, n, d) = (geometry.groups, geometry.group_size, geometry.clump_size);
    let lo = -((d / 2) as i64) + if d % 2 == 0 { 1 } else { 0 };
    let hi = (d / 2) as i64;
    let wrap = |i: i64| i.rem_euclid(total as i64) as usize;
    Ok((0..m_groups)
        .map(|j| {
            let mut s = 0.0;
            for clump in 0..n / d {
                let base = (j * d + clump * m_groups * d) as i64;
                for off in lo..=hi {
                    s += fine[wrap(base + off)];
                }
            }
            s / n as f64
        })
        .collect())
}

fn unit_phasor(num: usize, den: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * (num % den) as f64 / den as f64)
}

/// X_J = Σ_L [A_L F_L(J) + c.c.] for L = 0..ℳ/2.
pub fn synthesize_from_modes(modes: &[C64], groups: usize) -> Result<Vec<f64>> {
    if modes.len() != groups / 2 + 1 {
        return Err(Error::Contract(format!(
            "expected {} coarse modes, got {}",
            groups / 2 + 1,
            modes.len()
        )));
    }
    let norm = (groups as f64).sqrt();
    Ok((0..groups)
        .map(|j| {
            modes
                .iter()
                .enumerate()
                .map(|(l, a)| 2.0 * (a * unit_phasor(j * l, groups)).re)
                .sum::<f64>()
                / norm
        })
        .collect())
}

/// Inverse of [`synthesize_from_modes`]; A_0 and A_{ℳ/2} come out real.
pub fn decompose_modes(positions: &[f64]) -> Result<Vec<C64>> {
    let groups = positions.len();
    if groups == 0 || !groups.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "need an even number of groups, got {groups}"
        )));
    }
    let norm = (groups as f64).sqrt();
    Ok((0..=groups / 2)
        .map(|l| {
            let s: C64 = positions
                .iter()
                .enumerate()
                .map(|(j, x)| unit_phasor(j * l, groups).conj() * *x)
                .sum::<C64>()
                / norm;
            if l == 0 || 2 * l == groups {
                c(s.re / 2.0)
            } else {
                s
            }
        })
        .collect())
}

/// Atom displacements x_j = Σ_ℓ [a_ℓ f_ℓ(j) + c.c.] from fine amplitudes ℓ = 0..𝒩/2.
pub fn synthesize_fine(amplitudes: &[C64], total: usize) -> Result<Vec<f64>> {
    if !total.is_multiple_of(2) || amplitudes.len() != total / 2 + 1 {
        return Err(Error::Contract(format!(
            "expected {} fine amplitudes for 𝒩 = {total}",
            total / 2 + 1
        )));
    }
    let table: Vec<C64> = (0..total).map(|i| unit_phasor(i, total)).collect();
    let norm = (total as f64).sqrt();
    Ok((0..total)
        .map(|j| {
            amplitudes
                .iter()
                .enumerate()
                .map(|(l, a)| 2.0 * (a * table[(j * l) % total]).re)
                .sum::<f64>()
                / norm
        })
        .collect())
}

/// How one fine amplitude enters a coarse mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    /// coeff·a
    Direct,
    /// coeff·conj(a)
    Conjugate,
    /// Re(coeff·a); used for the self-conjugate modes L = 0 and ℳ/2.
    RealPart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseTerm {
    pub basis_index: usize,
    pub fine_index: usize,
    pub coeff: C64,
    pub kind: TermKind,
}

impl CoarseTerm {
    pub fn apply(&self, a: C64) -> C64 {
        match self.kind {
            TermKind::Direct => self.coeff * a,
            TermKind::Conjugate => self.coeff * a.conj(),
            TermKind::RealPart => c((self.coeff * a).re),
        }
    }
}

/// The exact linear map from fine amplitudes to A_L on a chain with group size N.
///
/// Even k enter as conj(c_k)·a, odd k as c_k·conj(a); for L = 0 and ℳ/2 each distinct m
/// enters once through the real part.
pub fn coarse_terms(basis: &ModeBasis, group_size: usize) -> Result<Vec<CoarseTerm>> {
    if !group_size.is_multiple_of(basis.clump_size) {
        return Err(Error::Domain(format!(
            "d = {} does not divide N = {group_size}",
            basis.clump_size
        )));
    }
    let scale = 1.0 / (group_size as f64).sqrt();
    if basis.is_self_conjugate() {
        return Ok(basis
            .degenerate_groups()
            .into_iter()
            .map(|ks| {
                let k = ks[0];
                CoarseTerm {
                    basis_index: k,
                    fine_index: basis.fine_index(k, group_size),
                    coeff: basis.coeffs[k].conj() * scale,
                    kind: TermKind::RealPart,
                }
            })
            .collect());
    }
    Ok((0..basis.clump_size)
        .map(|k| {
            let (coeff, kind) = if k % 2 == 0 {
                (basis.coeffs[k].conj() * scale, TermKind::Direct)
            } else {
                (basis.coeffs[k] * scale, TermKind::Conjugate)
            };
            CoarseTerm {
                basis_index: k,
                fine_index: basis.fine_index(k, group_size),
                coeff,
                kind,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fine_frequency_examples() {
        let g = ChainGeometry::natural(6, 4, 2).unwrap();
        assert_eq!(fine_mode_frequency(0, &g).unwrap(), 0.0);
        assert!((fine_mode_frequency(12, &g).unwrap() - 2.0).abs() < 1e-15);
        assert!((fine_mode_frequency(4, &g).unwrap() - 1.0).abs() < 1e-14);
        assert!(fine_mode_frequency(13, &g).is_err());
    }

    #[test]
    fn index_map_examples() {
        assert_eq!(index_map(7, 0, 630), 7);
        assert_eq!(index_map(2, 1, 10), 8);
        assert_eq!(index_map(3, 2, 10), 13);
    }

    #[test]
    fn geometry_rejects_bad_shapes() {
        assert!(ChainGeometry::natural(5, 4, 2).is_err());
        assert!(ChainGeometry::natural(6, 4, 3).is_err());
        assert!(ChainGeometry::natural(6, 0, 1).is_err());
    }

    #[test]
    fn single_clump_is_single_mode() {
        let b = build_mode_basis(17, 630, 1).unwrap();
        assert_eq!(b.coeffs.len(), 1);
        assert!((b.coeffs[0] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_mode_limit() {
        for d in [1, 2, 3, 8] {
            let b = build_mode_basis(0, 16, d).unwrap();
            assert!((b.coeffs[0] - c(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn normalization_at_l30() {
        let b = build_mode_basis(30, 630, 8).unwrap();
        let s: f64 = b.coeffs.iter().map(|z| z.norm_sqr()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(b.phase, -PI / (630.0 * 8.0));
        assert!(b.fine_frequencies[1..].iter().all(|w| *w > 0.0));
    }

    #[test]
    fn uniform_and_single_atom_projection() {
        let g = ChainGeometry::natural(4, 6, 3).unwrap();
        let x = vec![0.3; 24];
        assert!(project_to_coarse(&x, &g)
            .unwrap()
            .iter()
            .all(|v| (v - 0.3).abs() < 1e-15));
        let mut x = vec![0.0; 24];
        x[0] = 1.0;
        let xs = project_to_coarse(&x, &g).unwrap();
        assert_eq!(xs.iter().filter(|v| **v != 0.0).count(), 1);
        assert!((xs.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-15);
        assert!(project_to_coarse(&x[..23], &g).is_err());
    }

    #[test]
    fn constant_coarse_mode() {
        let mut a = vec![c(0.0); 5];
        a[0] = c(0.7 * 8f64.sqrt() / 2.0);
        let x = synthesize_from_modes(&a, 8).unwrap();
        assert!(x.iter().all(|v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn coarse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let groups = 10;
        let mut a: Vec<C64> = (0..=5)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        a[0].im = 0.0;
        a[5].im = 0.0;
        let back = decompose_modes(&synthesize_from_modes(&a, groups).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    /// Brute force on a 24-atom chain: projecting each fine mode and decomposing reproduces
    /// the coarse-term map for every (L, d).
    #[test]
    fn coarse_terms_match_projection_on_small_chain() {
        let (groups, n) = (6, 4);
        let total = groups * n;
        for d in [1, 2, 4] {
            let g = ChainGeometry::natural(groups, n, d).unwrap();
            for mode in 0..=groups / 2 {
                let basis = build_mode_basis(mode, groups, d).unwrap();
                let terms = coarse_terms(&basis, n).unwrap();
                for term in &terms {
                    let mut amps = vec![c(0.0); total / 2 + 1];
                    let ell = term.fine_index;
                    let a = if ell == 0 || 2 * ell == total {
                        c(0.7)
                    } else {
                        C64::new(0.7, 0.3)
                    };
                    amps[ell] = a;
                    let x = synthesize_fine(&amps, total).unwrap();
                    let coarse = decompose_modes(&project_to_coarse(&x, &g).unwrap()).unwrap();
                    let expected: C64 = terms
                        .iter()
                        .filter(|t| t.fine_index == ell)
                        .map(|t| t.apply(a))
                        .sum();
                    assert!(
                        (coarse[mode] - expected).norm() < 1e-12,
                        "d={d} L={mode} ell={ell}: {} vs {}",
                        coarse[mode],
                        expected
                    );
                }
            }
        }
    }
}
