//! Structured matrices used throughout: diagonal-plus-rank-one and identity-plus-rank-one.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Hermitian inner product `a† b`.
pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    pairwise_sum(&a.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
}

/// Pairwise summation; the result does not depend on how the input was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

pub fn pairwise_sum_c(xs: &[C64]) -> C64 {
    match xs.len() {
        0 => C64::new(0.0, 0.0),
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum_c(&xs[..n / 2]) + pairwise_sum_c(&xs[n / 2..]),
    }
}

/// The operator `D + s·g g†` with real diagonal `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPlusRankOne {
    pub diag: Vec<f64>,
    pub vector: Vec<C64>,
    pub scale: f64,
}

impl DiagPlusRankOne {
    pub fn new(diag: Vec<f64>, vector: Vec<C64>, scale: f64) -> Result<Self> {
        if diag.len() != vector.len() {
            return Err(Error::Contract(format!(
                "diagonal has {} entries, vector has {}",
                diag.len(),
                vector.len()
            )));
        }
        Ok(Self {
            diag,
            vector,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let proj = dot_h(&self.vector, x) * self.scale;
        self.diag
            .iter()
            .zip(&self.vector)
            .zip(x)
            .map(|((d, g), xi)| xi * *d + g * proj)
            .collect()
    }

    /// Solves `(D + s g g†) y = rhs` in O(d).
    ///
    /// A single vanishing diagonal entry is allowed as long as the matching component of `g`
    /// is nonzero; the system is then still invertible.
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        if rhs.len() != self.dim() {
            return Err(Error::Contract(format!(
                "rhs has {} entries, operator dimension is {}",
                rhs.len(),
                self.dim()
            )));
        }
        let scale_max = self
            .diag
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
            .max(1e-300);
        let zeros: Vec<usize> = (0..self.dim())
            .filter(|&i| self.diag[i].abs() <= 1e-300 * scale_max.max(1.0))
            .collect();
        let s = self.scale;
        match zeros.as_slice() {
            [] => {
                let dinv_r: Vec<C64> = rhs.iter().zip(&self.diag).map(|(r, d)| r / *d).collect();
                let dinv_g: Vec<C64> = self
                    .vector
                    .iter()
                    .zip(&self.diag)
                    .map(|(g, d)| g / *d)
                    .collect();
                let denom = 1.0 + s * dot_h(&self.vector, &dinv_g);
                if denom.norm() < 1e-14 * (1.0 + (s * dot_h(&self.vector, &dinv_g)).norm()) {
                    return Err(Error::Numerical(
                        "diagonal-plus-rank-one operator is singular".into(),
                    ));
                }
                let coef = s * dot_h(&self.vector, &dinv_r) / denom;
                Ok(dinv_r
                    .iter()
                    .zip(&dinv_g)
                    .map(|(a, b)| a - b * coef)
                    .collect())
            }
            [a] => {
                let a = *a;
                let ga = self.vector[a];
                if ga.norm() == 0.0 || s == 0.0 {
                    return Err(Error::Numerical(format!(
                        "zero diagonal entry {a} with no rank-one support: singular"
                    )));
                }
                // Row a fixes beta = s g† y; the other rows then give y_i directly.
                let beta = rhs[a] / ga;
                let mut y = vec![C64::new(0.0, 0.0); self.dim()];
                let mut partial = C64::new(0.0, 0.0);
                for i in (0..self.dim()).filter(|&i| i != a) {
                    y[i] = (rhs[i] - self.vector[i] * beta) / self.diag[i];
                    partial += self.vector[i].conj() * y[i];
                }
                y[a] = (beta / s - partial) / ga.conj();
                Ok(y)
            }
            _ => Err(Error::Numerical(
                "more than one zero diagonal entry: operator is singular".into(),
            )),
        }
    }

    /// Diagonal of the inverse, in O(d) when `D` has no zero entry.
    pub fn inverse_diagonal(&self) -> Result<Vec<f64>> {
        if self.diag.contains(&0.0) {
            let n = self.dim();
            return (0..n)
                .map(|k| {
                    let mut e = vec![C64::new(0.0, 0.0); n];
                    e[k] = C64::new(1.0, 0.0);
                    Ok(self.solve(&e)?[k].re)
                })
                .collect();
        }
        let sum: f64 = pairwise_sum(
            &self
                .vector
                .iter()
                .zip(&self.diag)
                .map(|(g, d)| g.norm_sqr() / d)
                .collect::<Vec<_>>(),
        );
        let denom = 1.0 + self.scale * sum;
        if denom.abs() < 1e-14 {
            return Err(Error::Numerical(
                "diagonal-plus-rank-one operator is singular".into(),
            ));
        }
        Ok(self
            .diag
            .iter()
            .zip(&self.vector)
            .map(|(d, g)| 1.0 / d - self.scale * g.norm_sqr() / (d * d) / denom)
            .collect())
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let g = DVector::from_column_slice(&self.vector);
        let mut m = &g * g.adjoint() * C64::new(self.scale, 0.0);
        for i in 0..n {
            m[(i, i)] += self.diag[i];
        }
        m
    }
}

/// The operator `scale·(I + v v†)`; closed forms for real powers.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPlusRankOne {
    pub scale: f64,
    pub vector: Vec<C64>,
    norm_sqr: f64,
}

impl IdentityPlusRankOne {
    pub fn new(scale: f64, vector: Vec<C64>) -> Self {
        let norm_sqr = norm_sqr(&vector);
        Self {
            scale,
            vector,
            norm_sqr,
        }
    }

    /// `v† v`.
    pub fn vector_norm_sqr(&self) -> f64 {
        self.norm_sqr
    }

    /// Eigenvalue of the operator along `v`.
    pub fn top_eigenvalue(&self) -> f64 {
        self.scale * (1.0 + self.norm_sqr)
    }

    /// Applies the operator raised to the real power `p`.
    pub fn apply_pow(&self, p: f64, x: &[C64]) -> Vec<C64> {
        let outer = self.scale.powf(p);
        if self.norm_sqr == 0.0 {
            return x.iter().map(|xi| xi * outer).collect();
        }
        let alpha = ((1.0 + self.norm_sqr).powf(p) - 1.0) / self.norm_sqr;
        let proj = dot_h(&self.vector, x) * alpha;
        x.iter()
            .zip(&self.vector)
            .map(|(xi, v)| (xi + v * proj) * outer)
            .collect()
    }

    pub fn dense_pow(&self, p: f64) -> DMatrix<C64> {
        let n = self.vector.len();
        let mut m = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            let col = self.apply_pow(p, &e);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
