//! Spectral data of the effective frequency matrix Ω² = M_TT^{-1/2} V_TT M_TT^{-1/2}.
//!
//! Two routes: a dense Hermitian eigen-decomposition, and a secular-equation solver that uses
//! the rank-one structure. In the secular route the eigenvalues λ solve
//!
//! ```text
//! 1/(Ω_L² − λ) + Σ_j |w_j|²/(δ_j − λ) = 0
//! ```
//!
//! whose poles all carry positive weight, so exactly one root lies between neighbouring poles.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::blocks::BlockSystem;
use crate::error::{Error, Result};
use crate::linalg::{c, dot_h, norm_sqr, IdentityPlusRankOne, C64};

/// Largest environment dimension handled by the dense route.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Dense,
    Secular,
}

#[derive(Debug, Clone)]
enum Eigvec {
    /// Secular root λ = pole[origin] + offset.
    Root { origin: usize, offset: f64 },
    /// Explicit unit vector.
    Explicit(Vec<C64>),
}

#[derive(Debug, Clone)]
enum Vectors {
    Dense(DMatrix<C64>),
    Secular {
        poles: Vec<Pole>,
        items: Vec<Eigvec>,
        env_pole: Vec<Option<usize>>,
    },
}

#[derive(Debug, Clone, Copy)]
struct Pole {
    value: f64,
    weight: f64,
}

/// Eigenvalues ν_k² (ascending) and orthonormal eigenvectors of Ω².
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub nu2: Vec<f64>,
    m_tt: IdentityPlusRankOne,
    w: Vec<C64>,
    vectors: Vectors,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.nu2.len()
    }

    pub fn route(&self) -> Route {
        match self.vectors {
            Vectors::Dense(_) => Route::Dense,
            Vectors::Secular { .. } => Route::Secular,
        }
    }

    pub fn nu(&self) -> Vec<f64> {
        self.nu2.iter().map(|x| x.sqrt()).collect()
    }

    pub fn m_tt(&self) -> &IdentityPlusRankOne {
        &self.m_tt
    }

    /// Unit eigenvector v_k.
    pub fn vector(&self, k: usize) -> Vec<C64> {
        match &self.vectors {
            Vectors::Dense(m) => m.column(k).iter().copied().collect(),
            Vectors::Secular {
                poles,
                items,
                env_pole,
            } => match &items[k] {
                Eigvec::Explicit(v) => v.clone(),
                Eigvec::Root { origin, offset } => {
                    let u: Vec<C64> = self
                        .w
                        .iter()
                        .zip(env_pole)
                        .map(|(wb, p)| match p {
                            Some(j) => {
                                let gap = (poles[*j].value - poles[*origin].value) - offset;
                                wb / gap
                            }
                            None => c(0.0),
                        })
                        .collect();
                    let v = self.m_tt.apply_pow(0.5, &u);
                    let n = norm_sqr(&v).sqrt();
                    v.iter().map(|x| x / n).collect()
                }
            },
        }
    }

    /// Dense matrix of all eigenvectors (columns).
    pub fn vectors_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            for (i, x) in self.vector(k).into_iter().enumerate() {
                m[(i, k)] = x;
            }
        }
        m
    }

    /// The dense matrix Ω² reassembled from the spectrum.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let v = self.vectors_dense();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.nu2.iter().map(|x| c(*x)),
        ));
        &v * d * v.adjoint()
    }
}

/// Ω² as an explicit dense Hermitian matrix.
pub fn effective_frequency_dense_matrix(blocks: &BlockSystem) -> DMatrix<C64> {
    let m_inv_half = blocks.m_tt().dense_pow(-0.5);
    let v = blocks.v_tt().to_dense();
    let mut omega2 = &m_inv_half * v * &m_inv_half;
    let herm = (&omega2 + omega2.adjoint()) * c(0.5);
    omega2.copy_from(&herm);
    omega2
}

/// Spectral decomposition of Ω², dense up to [`DENSE_LIMIT`] and secular above.
pub fn effective_frequency(blocks: &BlockSystem) -> Result<Spectrum> {
    let route = if blocks.env_dim() <= DENSE_LIMIT {
        Route::Dense
    } else {
        Route::Secular
    };
    effective_frequency_with(blocks, route)
}

pub fn effective_frequency_with(blocks: &BlockSystem, route: Route) -> Result<Spectrum> {
    match route {
        Route::Dense => dense(blocks),
        Route::Secular => secular(blocks),
    }
}

fn dense(blocks: &BlockSystem) -> Result<Spectrum> {
    let omega2 = effective_frequency_dense_matrix(blocks);
    let n = omega2.nrows();
    let scale = omega2.norm().max(f64::MIN_POSITIVE);
    let eig =
        SymmetricEigen::try_new(omega2.clone(), 1e-15 * scale, 10_000 * n.max(1)).ok_or_else(
            || {
                Error::Numerical(format!(
                "Hermitian eigen-solver did not converge (dimension {n}, ‖Ω²‖_F = {scale:.3e}, \
                 diagonal range [{:.3e}, {:.3e}])",
                blocks.omega_q2().iter().cloned().fold(f64::INFINITY, f64::min),
                blocks.omega_q2().iter().cloned().fold(0.0, f64::max)
            ))
            },
        )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let nu2: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if let Some(bad) = nu2.iter().find(|x| **x <= 0.0) {
        return Err(Error::Numerical(format!(
            "non-positive eigenvalue {bad:.3e} of Ω²"
        )));
    }
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(Spectrum {
        nu2,
        m_tt: blocks.m_tt(),
        w: blocks.rank_one_vector().to_vec(),
        vectors: Vectors::Dense(vecs),
    })
}

fn secular(blocks: &BlockSystem) -> Result<Spectrum> {
    let w = blocks.rank_one_vector().to_vec();
    let n = w.len();
    let m_tt = blocks.m_tt();
    let omega2 = blocks.omega0.powi(2);
    let delta = blocks.omega_q2();
    let w_total = norm_sqr(&w);
    let negligible = 1e-30 * w_total.max(f64::MIN_POSITIVE);

    // Poles: index 0 is Ω_L² with weight 1; environment groups follow.
    let mut poles = vec![Pole {
        value: omega2,
        weight: 1.0,
    }];
    let mut env_pole: Vec<Option<usize>> = vec![None; n];
    let mut items: Vec<(f64, Eigvec)> = Vec::new();

    let basis = &blocks.basis;
    let m0 = basis.index_map[0];
    for ks in basis.degenerate_groups() {
        let members: Vec<usize> = ks.iter().filter(|&&k| k > 0).map(|k| k - 1).collect();
        if members.is_empty() {
            continue;
        }
        let m = basis.index_map[ks[0]];
        let value = delta[members[0]];
        let weight: f64 = members.iter().map(|&b| w[b].norm_sqr()).sum();
        if m == m0 {
            // Coincides with Ω_L: merges into pole 0, and the whole group is an eigenspace.
            poles[0].weight += weight;
            for &b in &members {
                env_pole[b] = Some(0);
            }
            let cols: Vec<Vec<C64>> = members
                .iter()
                .map(|&b| m_tt.apply_pow(0.5, &unit(n, b)))
                .collect();
            for v in gram_schmidt(cols) {
                items.push((value, Eigvec::Explicit(v)));
            }
        } else if weight <= negligible {
            for &b in &members {
                items.push((value, Eigvec::Explicit(unit(n, b))));
            }
        } else {
            let j = poles.len();
            poles.push(Pole { value, weight });
            for &b in &members {
                env_pole[b] = Some(j);
            }
            if members.len() > 1 {
                // Complement of w within the group.
                let mut cols = vec![members.iter().map(|&b| w[b]).collect::<Vec<_>>()];
                for i in 0..members.len() {
                    let mut e = vec![c(0.0); members.len()];
                    e[i] = c(1.0);
                    cols.push(e);
                }
                let ortho = gram_schmidt(cols);
                for local in ortho.into_iter().skip(1).take(members.len() - 1) {
                    let mut v = vec![c(0.0); n];
                    for (i, &b) in members.iter().enumerate() {
                        v[b] = local[i];
                    }
                    items.push((value, Eigvec::Explicit(v)));
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..poles.len()).collect();
    order.sort_by(|a, b| poles[*a].value.total_cmp(&poles[*b].value));
    for pair in order.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let (origin, offset) = solve_interval(&poles, lo, hi)?;
        items.push((
            poles[origin].value + offset,
            Eigvec::Root { origin, offset },
        ));
    }
    if items.len() != n {
        return Err(Error::Numerical(format!(
            "secular route produced {} eigenpairs for dimension {n}",
            items.len()
        )));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nu2 = items.iter().map(|(l, _)| *l).collect();
    Ok(Spectrum {
        nu2,
        m_tt,
        w,
        vectors: Vectors::Secular {
            poles,
            items: items.into_iter().map(|(_, v)| v).collect(),
            env_pole,
        },
    })
}

fn unit(n: usize, i: usize) -> Vec<C64> {
    let mut e = vec![c(0.0); n];
    e[i] = c(1.0);
    e
}

fn gram_schmidt(cols: Vec<Vec<C64>>) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for mut v in cols {
        for _ in 0..2 {
            for q in &out {
                let p = dot_h(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= qi * p;
                }
            }
        }
        let nrm = norm_sqr(&v).sqrt();
        if nrm > 1e-10 {
            out.push(v.iter().map(|x| x / nrm).collect());
        }
    }
    out
}

/// Root of Σ W_j/(p_j − λ) strictly between poles `lo` and `hi`, returned relative to the nearer pole.
fn solve_interval(poles: &[Pole], lo: usize, hi: usize) -> Result<(usize, f64)> {
    let (a, b) = (poles[lo].value, poles[hi].value);
    let gap = b - a;
    if !(gap > 0.0) {
        return Err(Error::Numerical(format!(
            "coincident secular poles at {a:.6e}"
        )));
    }
    let eval = |origin: usize, tau: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for p in poles {
            let diff = (p.value - poles[origin].value) - tau;
            f += p.weight / diff;
            df += p.weight / (diff * diff);
        }
        (f, df)
    };
    let (fmid, _) = eval(lo, 0.5 * gap);
    let (origin, mut left, mut right) = if fmid > 0.0 {
        (lo, 0.0, 0.5 * gap)
    } else {
        (hi, -0.5 * gap, 0.0)
    };
    let mut tau = 0.5 * (left + right);
    for _ in 0..200 {
        let (f, df) = eval(origin, tau);
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            right = tau;
        } else {
            left = tau;
        }
        let step = f / df;
        let scale = (poles[origin].value + tau).abs().max(f64::MIN_POSITIVE);
        if step.abs() <= 2.0 * f64::EPSILON * scale {
            tau -= step;
            break;
        }
        let newton = tau - step;
        tau = if newton >= left && newton <= right {
            newton
        } else {
            0.5 * (left + right)
        };
        if (right - left) <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    Ok((origin, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_mode_basis;

    fn reduced(l: usize, groups: usize, d: usize) -> BlockSystem {
        BlockSystem::reduced(&build_mode_basis(l, groups, d).unwrap()).unwrap()
    }

    #[test]
    fn d2_is_scalar_ratio() {
        let bs = reduced(30, 630, 2);
        let s = effective_frequency(&bs).unwrap();
        let ratio = bs.v_tt().to_dense()[(0, 0)].re / bs.m_tt().dense_pow(1.0)[(0, 0)].re;
        assert!((s.nu2[0] / ratio - 1.0).abs() < 1e-13);
    }

    #[test]
    fn routes_agree() {
        for (l, groups, d) in [
            (2, 16, 8),
            (30, 630, 17),
            (1, 16, 64),
            (7, 16, 6),
            (315, 630, 8),
            (200, 630, 9),
            (8, 16, 5),
        ] {
            let bs = reduced(l, groups, d);
            let a = effective_frequency_with(&bs, Route::Dense).unwrap();
            let b = effective_frequency_with(&bs, Route::Secular).unwrap();
            for (x, y) in a.nu2.iter().zip(&b.nu2) {
                assert!(
                    (x - y).abs() < 1e-11 * x.max(1e-3),
                    "L={l} d={d}: {x} vs {y}"
                );
            }
            let target = effective_frequency_dense_matrix(&bs);
            let err = (b.reconstruct() - &target).norm() / target.norm();
            assert!(err < 1e-11, "L={l} d={d}: reconstruction {err:e}");
            let v = b.vectors_dense();
            let ortho = (v.adjoint() * &v - DMatrix::identity(d - 1, d - 1)).norm();
            assert!(ortho < 1e-10, "L={l} d={d}: orthogonality {ortho:e}");
        }
    }

    #[test]
    fn rayleigh_bounds() {
        for (l, d) in [(30, 8), (100, 33), (250, 12)] {
            let bs = reduced(l, 630, d);
            let s = effective_frequency(&bs).unwrap();
            let lower = bs.omega_q2().into_iter().fold(bs.omega0.powi(2), f64::min);
            let upper = bs.v_tt().to_dense().symmetric_eigenvalues().max() / bs.mass;
            assert!(s
                .nu2
                .iter()
                .all(|x| *x >= lower * (1.0 - 1e-12) && *x <= upper * (1.0 + 1e-12)));
        }
    }
}
