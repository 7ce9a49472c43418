//! Hessian-based and sandwich covariance for the identifiable
//! parameterization `psi = (theta, alpha_2..alpha_p, beta_1..beta_p)`,
//! with `alpha_1` pinned at one.
//!
//! The linear predictor gradient in `psi` is
//! `g = (z, (Xt beta)_{2..p}, Xt^T alpha)`. The Poisson Hessian is
//! `-sum mu g g^T` plus the bilinear cross block
//! `sum (y - mu) Xt[k][l]` coupling `alpha_k` (k >= 2) and `beta_l`.
//! The meat is the outer product of per-observation scores `(y - mu) g`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{collapse_alpha, collapse_beta, dot};
use crate::error::{Error, Result};
use crate::sir::{canonicalize, ParameterSet, SirData, SirFit};
use crate::tensor::{flatten, Mask};

/// Relative eigenvalue floor of the information matrix.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub names: Vec<String>,
    /// Total score `sum_c L_c`.
    pub score: DVector<f64>,
    /// Second derivatives `H` of the log-likelihood.
    pub hessian: DMatrix<f64>,
    /// `S = sum_c L_c L_c^T`.
    pub meat: DMatrix<f64>,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcovResult {
    pub names: Vec<String>,
    pub vcov_hessian: Vec<Vec<f64>>,
    pub vcov_sandwich: Vec<Vec<f64>>,
    pub se_hessian: Vec<f64>,
    pub se_sandwich: Vec<f64>,
}

impl VcovResult {
    /// `(-H)^{-1}` and `H^{-1} S H^{-1}`.
    pub fn from_derivatives(d: &Derivatives) -> Result<Self> {
        let h = symmetrize(&d.hessian);
        let info = -&h;
        let eig = info.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if !(min > EIGEN_FLOOR * max.abs().max(1e-300)) {
            return Err(Error::NonInvertibleInformation { min_eigenvalue: min });
        }
        let inv = info
            .clone()
            .cholesky()
            .ok_or(Error::NonInvertibleInformation { min_eigenvalue: min })?
            .inverse();
        let vh = symmetrize(&inv);
        let vs = symmetrize(&(&inv * &d.meat * &inv));
        let se = |m: &DMatrix<f64>| (0..m.nrows()).map(|k| m[(k, k)].sqrt()).collect();
        Ok(Self {
            names: d.names.clone(),
            se_hessian: se(&vh),
            se_sandwich: se(&vs),
            vcov_hessian: rows(&vh),
            vcov_sandwich: rows(&vs),
        })
    }

    pub fn vcov_hessian_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.vcov_hessian)
    }

    pub fn vcov_sandwich_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.vcov_sandwich)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> DMatrix<f64> {
    let d = r.len();
    DMatrix::from_fn(d, d, |i, j| r[i][j])
}

/// `psi` names aligned with [`ParameterSet::to_psi`].
pub fn psi_names(data: &SirData) -> Vec<String> {
    let mut names: Vec<String> = data.direct().names().iter().map(|s| format!("theta:{s}")).collect();
    let w = data.sender().names();
    names.extend(w.iter().skip(1).map(|s| format!("alpha:{s}")));
    names.extend(data.receiver().names().iter().map(|s| format!("beta:{s}")));
    names
}

impl ParameterSet {
    /// Identifiable coordinates of canonical parameters.
    pub fn to_psi(&self) -> Vec<f64> {
        self.theta
            .iter()
            .chain(self.alpha.iter().skip(1))
            .chain(&self.beta)
            .copied()
            .collect()
    }

    /// Inverse of [`ParameterSet::to_psi`] with `alpha_1 = 1`.
    pub fn from_psi(psi: &[f64], q: usize, p: usize) -> Self {
        let mut alpha = vec![1.0];
        alpha.extend_from_slice(&psi[q..q + p - 1]);
        Self {
            theta: psi[..q].to_vec(),
            alpha,
            beta: psi[q + p - 1..].to_vec(),
        }
    }
}

/// Score, Hessian and meat at arbitrary parameters (canonicalized first).
pub fn derivatives_at(params: &ParameterSet, data: &SirData, mask: &Mask) -> Result<Derivatives> {
    let params = canonicalize(params)?;
    let (q, p) = (data.q(), data.p());
    let d = q + 2 * p - 1;
    let (x, ws, wr) = (data.predictor(), data.sender(), data.receiver());
    let (index, response) = flatten(data.response(), mask)?;
    let times_beta = collapse_beta(x, ws, wr, &params.beta)?;
    let times_alpha = collapse_alpha(x, ws, wr, &params.alpha)?;

    let mut score = DVector::zeros(d);
    let mut neg_info = DMatrix::zeros(d, d);
    let mut meat = DMatrix::zeros(d, d);
    let mut resid = Vec::with_capacity(index.len());
    let mut g = DVector::zeros(d);
    for (c, &y) in index.cells().iter().zip(&response) {
        let z = data.direct().row(c.t, c.i, c.j);
        let vb = times_beta.get(c.t, c.i, c.j);
        let ua = times_alpha.get(c.t, c.i, c.j);
        let eta = dot(z, &params.theta) + dot(vb, &params.alpha);
        let mu = eta.exp();
        for (k, v) in z.iter().chain(&vb[1..]).chain(ua).enumerate() {
            g[k] = *v;
        }
        let r = y - mu;
        resid.push(r);
        score.axpy(r, &g, 1.0);
        neg_info.ger(-mu, &g, &g, 1.0);
        meat.ger(r * r, &g, &g, 1.0);
    }

    // d2 eta / d alpha_k d beta_l = Xt[k][l]; column l of Xt is Xt e_l
    let mut cross = DMatrix::<f64>::zeros(p - 1, p);
    for l in 0..p {
        let mut e = vec![0.0; p];
        e[l] = 1.0;
        let col = collapse_beta(x, ws, wr, &e)?;
        for (c, r) in index.cells().iter().zip(&resid) {
            let xl = col.get(c.t, c.i, c.j);
            for k in 1..p {
                cross[(k - 1, l)] += r * xl[k];
            }
        }
    }
    let mut hessian = neg_info;
    for k in 0..p - 1 {
        for l in 0..p {
            let (a, b) = (q + k, q + p - 1 + l);
            hessian[(a, b)] += cross[(k, l)];
            hessian[(b, a)] += cross[(k, l)];
        }
    }
    Ok(Derivatives {
        names: psi_names(data),
        score,
        hessian,
        meat,
        observations: index.len(),
    })
}

/// Derivatives at a converged fit's canonical estimate.
pub fn score_and_hessian(fit: &SirFit, data: &SirData, mask: &Mask) -> Result<Derivatives> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    derivatives_at(&fit.params, data, mask)
}

pub fn compute_vcov(fit: &SirFit, data: &SirData, mask: &Mask) -> Result<VcovResult> {
    VcovResult::from_derivatives(&score_and_hessian(fit, data, mask)?)
}

/// Derivatives of a plain Poisson GLM with design `x` at `coefficients`.
pub fn glm_derivatives(x: &DMatrix<f64>, y: &[f64], coefficients: &[f64], names: Vec<String>) -> Result<Derivatives> {
    let d = x.ncols();
    if coefficients.len() != d || y.len() != x.nrows() || names.len() != d {
        return Err(Error::DimensionMismatch("GLM derivative inputs disagree".into()));
    }
    let b = DVector::from_column_slice(coefficients);
    let mut score = DVector::zeros(d);
    let mut hessian = DMatrix::zeros(d, d);
    let mut meat = DMatrix::zeros(d, d);
    for (r, &yv) in y.iter().enumerate() {
        let g = x.row(r).transpose();
        let mu = g.dot(&b).exp();
        let res = yv - mu;
        score.axpy(res, &g, 1.0);
        hessian.ger(-mu, &g, &g, 1.0);
        meat.ger(res * res, &g, &g, 1.0);
    }
    Ok(Derivatives {
        names,
        score,
        hessian,
        meat,
        observations: y.len(),
    })
}
