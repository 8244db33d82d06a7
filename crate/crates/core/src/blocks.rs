//! Selection matrices and the system/environment block matrices for one coarse mode.

use nalgebra::DMatrix;

use crate::chain::{ChainGeometry, ModeBasis};
use crate::error::{Error, Result};
use crate::linalg::{c, norm_sqr, DiagPlusRankOne, IdentityPlusRankOne, C64};

/// The split of the d fine modes into the followed mode and the environment.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// d = 1: nothing to split off.
    Empty { s: C64 },
    /// `s` is the single nonzero entry 1/c_0 of S; `t` is d × (d−1).
    Split { s: C64, t: DMatrix<C64> },
}

impl Selection {
    pub fn env_dim(&self) -> usize {
        match self {
            Selection::Empty { .. } => 0,
            Selection::Split { t, .. } => t.ncols(),
        }
    }

    /// The full d × d matrix (S | T).
    pub fn combined(&self) -> DMatrix<C64> {
        match self {
            Selection::Empty { s } => DMatrix::from_element(1, 1, *s),
            Selection::Split { s, t } => {
                let d = t.nrows();
                let mut m = DMatrix::zeros(d, d);
                m[(0, 0)] = *s;
                m.view_mut((0, 1), (d, d - 1)).copy_from(t);
                m
            }
        }
    }
}

/// S and T for coefficients c_k (any common scaling).
pub fn build_selection(coeffs: &[C64]) -> Result<Selection> {
    let c0 = *coeffs
        .first()
        .ok_or_else(|| Error::Contract("empty coefficient list".into()))?;
    if c0.norm() == 0.0 {
        return Err(Error::Numerical("c_0 vanishes; selection undefined".into()));
    }
    let s = c0.inv();
    let d = coeffs.len();
    if d == 1 {
        return Ok(Selection::Empty { s });
    }
    let mut t = DMatrix::zeros(d, d - 1);
    for b in 1..d {
        t[(0, b - 1)] = -coeffs[b] / c0;
        t[(b, b - 1)] = c(1.0);
    }
    Ok(Selection::Split { s, t })
}

/// Block matrices for one coarse mode.
///
/// Environment blocks are held in structured form: M_TT = μ(I + w w†) and
/// V_TT = μ(diag ω_b² + Ω_L² w w†) with w_b = conj(c_b)/conj(c_0).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub basis: ModeBasis,
    pub mass: f64,
    pub spring_frequency: f64,
    pub group_size: f64,
    /// c_0 = ĉ_0/√N.
    pub c0: C64,
    /// c_b, b = 1..d−1.
    pub c_env: Vec<C64>,
    /// Ω_L.
    pub omega0: f64,
    /// ω_b, b = 1..d−1.
    pub omega_env: Vec<f64>,
    w: Vec<C64>,
}

pub fn build_blocks(basis: &ModeBasis, geometry: &ChainGeometry) -> Result<BlockSystem> {
    BlockSystem::new(
        basis,
        geometry.mass,
        geometry.spring_frequency,
        geometry.group_size as f64,
    )
}

impl BlockSystem {
    pub fn new(
        basis: &ModeBasis,
        mass: f64,
        spring_frequency: f64,
        group_size: f64,
    ) -> Result<Self> {
        if !(mass > 0.0 && spring_frequency > 0.0 && group_size > 0.0) {
            return Err(Error::Domain("μ, ω and N must be positive".into()));
        }
        let scale = 1.0 / group_size.sqrt();
        let c0 = basis.coeffs[0] * scale;
        if c0.norm() == 0.0 {
            return Err(Error::Numerical("c_0 vanishes".into()));
        }
        let c_env: Vec<C64> = basis.coeffs[1..].iter().map(|z| z * scale).collect();
        let w = c_env.iter().map(|cb| cb.conj() / c0.conj()).collect();
        Ok(Self {
            basis: basis.clone(),
            mass,
            spring_frequency,
            group_size,
            c0,
            c_env,
            omega0: basis.coarse_frequency() * spring_frequency,
            omega_env: basis.fine_frequencies[1..]
                .iter()
                .map(|f| f * spring_frequency)
                .collect(),
            w,
        })
    }

    /// Reduced units μ = ω = N = 1.
    pub fn reduced(basis: &ModeBasis) -> Result<Self> {
        Self::new(basis, 1.0, 1.0, 1.0)
    }

    pub fn env_dim(&self) -> usize {
        self.c_env.len()
    }

    /// w_b = conj(c_b)/conj(c_0).
    pub fn rank_one_vector(&self) -> &[C64] {
        &self.w
    }

    pub fn m_ss(&self) -> f64 {
        self.mass / self.c0.norm_sqr()
    }

    pub fn v_ss(&self) -> f64 {
        self.mass * self.omega0.powi(2) / self.c0.norm_sqr()
    }

    pub fn m_st(&self) -> Vec<C64> {
        let f = -self.mass / self.c0.norm_sqr();
        self.c_env.iter().map(|cb| cb * f).collect()
    }

    pub fn v_st(&self) -> Vec<C64> {
        let f = -self.mass * self.omega0.powi(2) / self.c0.norm_sqr();
        self.c_env.iter().map(|cb| cb * f).collect()
    }

    pub fn m_tt(&self) -> IdentityPlusRankOne {
        IdentityPlusRankOne::new(self.mass, self.w.clone())
    }

    pub fn v_tt(&self) -> DiagPlusRankOne {
        DiagPlusRankOne {
            diag: self.omega_env.iter().map(|w| self.mass * w * w).collect(),
            vector: self.w.clone(),
            scale: self.mass * self.omega0.powi(2),
        }
    }

    /// Ω_Q² as a list.
    pub fn omega_q2(&self) -> Vec<f64> {
        self.omega_env.iter().map(|w| w * w).collect()
    }

    /// Row x_b = c_b(Ω_L² − ω_b²) that couples the environment to the followed mode.
    pub fn coupling_row(&self) -> Vec<C64> {
        let o2 = self.omega0.powi(2);
        self.c_env
            .iter()
            .zip(&self.omega_env)
            .map(|(cb, wb)| cb * (o2 - wb * wb))
            .collect()
    }

    /// μ/(|c_0|² + Σ|c_b|²); equals Nμ when the coefficients are normalized.
    pub fn kinetic_constant(&self) -> f64 {
        self.mass / (self.c0.norm_sqr() + norm_sqr(&self.c_env))
    }

    /// Closed-form reduced kinetic, potential and coupling coefficients.
    pub fn reduced_forms(&self) -> ReducedForms {
        let k = self.kinetic_constant();
        ReducedForms {
            kinetic: k,
            potential: k * self.omega0.powi(2),
            coupling: self.coupling_row().iter().map(|x| x * k).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedForms {
    pub kinetic: f64,
    pub potential: f64,
    pub coupling: Vec<C64>,
}
