//! Symplectic factorization `J_η = A_ηᵀ J_{2n} A_η` of the structure forms and the
//! sampled determinant bounds over the unit sphere of the centre.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{standard_symplectic, DetCertificate, MetivierStructure, EPS_ND};

/// Relative gap below which two eigenvalues of `-J²` are treated as one cluster.
const CLUSTER_TOL: f64 = 1e-11;

/// A factorization `J_η = A_ηᵀ J_{2n} A_η` together with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymplecticFactorization {
    /// The direction `η` (empty when a bare matrix was factorized).
    pub eta: Vec<f64>,
    /// The factorized skew matrix.
    #[serde(skip)]
    pub j_eta: DMatrix<f64>,
    /// The factor `A_η`.
    #[serde(skip)]
    pub a: DMatrix<f64>,
    /// Symplectic spectrum, descending.
    pub sigma: Vec<f64>,
    /// `det A_η`.
    pub det_a: f64,
    /// `‖A_ηᵀ J_{2n} A_η − J_η‖_F / ‖J_η‖_F`.
    pub residual: f64,
}

/// `J_μ = Σ_k μ_k J_k`.
pub fn j_of_mu(s: &MetivierStructure, mu: &[f64]) -> Result<DMatrix<f64>> {
    s.j_of(mu)
}

/// Factorizes a non-degenerate skew matrix.
///
/// The orthogonal canonical form comes from the eigen-decomposition of the
/// symmetric matrix `-J²`, whose eigenvalues `σ_j²` appear in pairs. Inside each
/// (numerically) degenerate cluster the vectors `v_j` are chosen deterministically
/// by projecting standard basis vectors, `u_j = -J v_j / σ_j`, and each `v_j` is
/// signed so its first nonzero entry is positive. The rows of `A` are
/// `√σ_j v_jᵀ` followed by `√σ_j u_jᵀ`.
pub fn factorize(j: &DMatrix<f64>) -> Result<SymplecticFactorization> {
    factorize_with_floor(j, EPS_ND)
}

/// As [`factorize`] with an explicit non-degeneracy floor.
pub fn factorize_with_floor(j: &DMatrix<f64>, eps_nd: f64) -> Result<SymplecticFactorization> {
    let d = j.nrows();
    if d == 0 || d % 2 != 0 || j.ncols() != d {
        return Err(Error::Dimension {
            expected: d + d % 2,
            got: j.ncols(),
        });
    }
    let norm = j.norm();
    for r in 0..d {
        for c in 0..d {
            if (j[(r, c)] + j[(c, r)]).abs() > 1e-14 * norm {
                return Err(Error::NotSkew { index: 0, row: r, col: c });
            }
        }
    }
    let det = j.clone().lu().determinant();
    if det.abs() < eps_nd {
        return Err(Error::Degenerate {
            det: det.abs(),
            floor: eps_nd,
            eta: vec![],
        });
    }
    let n = d / 2;
    let m2 = -(j * j);
    let sym = (&m2 + m2.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let top = eig.eigenvalues[order[0]].abs();

    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut us: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut sig: Vec<f64> = Vec::with_capacity(n);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        let lead = eig.eigenvalues[order[start]];
        while end < d && (eig.eigenvalues[order[end]] - lead).abs() <= CLUSTER_TOL * top {
            end += 1;
        }
        let basis: Vec<DVector<f64>> = order[start..end]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let pairs = (end - start) / 2;
        for _ in 0..pairs {
            let candidates: Vec<DVector<f64>> = (0..d)
                .map(|e| {
                    let mut p = DVector::zeros(d);
                    for b in &basis {
                        p += b * b[e];
                    }
                    for c in &chosen {
                        let w = c.dot(&p);
                        p -= c * w;
                    }
                    p
                })
                .collect();
            let best = candidates.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let pick = candidates
                .iter()
                .find(|c| c.norm() >= 0.5 * best)
                .expect("a nonzero candidate exists in a nonempty cluster");
            let mut v = pick / pick.norm();
            // re-orthogonalize once more for stability
            for c in &chosen {
                let w = c.dot(&v);
                v -= c * w;
            }
            v /= v.norm();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            let jv = j * &v;
            let sigma = jv.norm();
            let u = -jv / sigma;
            chosen.push(v.clone());
            chosen.push(u.clone());
            vs.push(v);
            us.push(u);
            sig.push(sigma);
        }
        start = end;
    }
    if vs.len() != n {
        return Err(Error::Degenerate {
            det: det.abs(),
            floor: eps_nd,
            eta: vec![],
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap());
    let mut a = DMatrix::zeros(d, d);
    for (row, &i) in idx.iter().enumerate() {
        let r = sig[i].sqrt();
        for c in 0..d {
            a[(row, c)] = r * vs[i][c];
            a[(n + row, c)] = r * us[i][c];
        }
    }
    let sigma: Vec<f64> = idx.iter().map(|&i| sig[i]).collect();
    let j2n = standard_symplectic(n);
    let recon = a.transpose() * &j2n * &a;
    let residual = (recon - j).norm() / norm;
    let det_a = a.clone().lu().determinant();
    Ok(SymplecticFactorization {
        eta: vec![],
        j_eta: j.clone(),
        a,
        sigma,
        det_a,
        residual,
    })
}

/// Factorizes `J_η` for a unit direction `η` of the structure.
pub fn factorize_eta(s: &MetivierStructure, eta: &[f64]) -> Result<SymplecticFactorization> {
    let j = s.j_of(eta)?;
    let mut f = factorize_with_floor(&j, s.eps_nd).map_err(|e| match e {
        Error::Degenerate { det, floor, .. } => Error::Degenerate {
            det,
            floor,
            eta: eta.to_vec(),
        },
        other => other,
    })?;
    f.eta = eta.to_vec();
    Ok(f)
}

/// Sampled bracket `[min, max]` of `|det J_η|` over `n_samples` deterministic unit
/// directions; aborts with a degeneracy error naming the offending `η`.
pub fn det_bound_scan(s: &MetivierStructure, n_samples: usize) -> Result<DetCertificate> {
    s.det_scan(n_samples)
}
