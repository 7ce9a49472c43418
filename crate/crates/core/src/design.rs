//! Direct and influence designs, and the collapsed bilinear regressors.
//!
//! The collapsed design of cell `(i, j, t)` is the `p x p` matrix
//! `Xt_ijt = sum_{i' != j'} x_{i'j't} w_{ii't} w_{jj't}^T`. The estimator only
//! ever needs `Xt_ijt beta` or `Xt_ijt^T alpha`, which factor through the
//! `n x n` influence matrices at `O(n^3 p)` per period:
//!
//! ```text
//! Xt_ijt beta    = sum_i' w_{ii'} (X_t B_t^T)_{i'j},   B_t[j][j'] = beta . w_{jj't}
//! Xt_ijt^T alpha = sum_j' w_{jj'} (A_t X_t)_{ij'},     A_t[i][i'] = alpha . w_{ii't}
//! ```

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{cell, PredictorTensor};

/// How a direct-design column is produced. Lag-derived columns are
/// recomputed from forecast lags when predicting beyond observed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Intercept,
    /// `log(y_{ij,t-1} + 1)`
    LaggedResponse,
    /// `log(y_{ji,t-1} + 1)`
    LaggedReciprocal,
    Covariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Sender,
    Receiver,
}

/// `z_ijt` for every modeled cell, `q` columns. Diagonal rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectDesign {
    n: usize,
    periods: usize,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    values: Vec<f64>,
}

impl DirectDesign {
    pub fn new(
        n: usize,
        periods: usize,
        columns: Vec<(String, ColumnKind)>,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        let q = columns.len();
        if values.len() != n * n * periods * q {
            return Err(Error::DimensionMismatch(format!(
                "direct design has {} values, expected {n}x{n}x{periods}x{q}",
                values.len()
            )));
        }
        let (names, kinds): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        check_names(&names)?;
        for t in 0..periods {
            for i in 0..n {
                let off = cell(n, t, i, i) * q;
                values[off..off + q].fill(0.0);
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("direct design has non-finite values".into()));
        }
        for (k, kind) in kinds.iter().enumerate() {
            if *kind == ColumnKind::Intercept {
                let ok = (0..periods).all(|t| {
                    (0..n).all(|i| (0..n).all(|j| i == j || values[cell(n, t, i, j) * q + k] == 1.0))
                });
                if !ok {
                    return Err(Error::InvalidArgument(format!(
                        "intercept column '{}' is not all ones",
                        names[k]
                    )));
                }
            }
        }
        Ok(Self {
            n,
            periods,
            names,
            kinds,
            values,
        })
    }

    pub fn from_fn(
        n: usize,
        periods: usize,
        columns: Vec<(String, ColumnKind)>,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let q = columns.len();
        let mut values = vec![0.0; n * n * periods * q];
        for t in 0..periods {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    for (k, (_, kind)) in columns.iter().enumerate() {
                        values[cell(n, t, i, j) * q + k] = match kind {
                            ColumnKind::Intercept => 1.0,
                            _ => f(t, i, j, k),
                        };
                    }
                }
            }
        }
        Self::new(n, periods, columns, values)
    }

    pub fn intercept_only(n: usize, periods: usize) -> Self {
        Self::from_fn(n, periods, vec![("intercept".into(), ColumnKind::Intercept)], |_, _, _, _| 1.0)
            .expect("intercept design is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn q(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn has_intercept(&self) -> bool {
        self.kinds.first() == Some(&ColumnKind::Intercept)
    }

    pub fn row(&self, t: usize, i: usize, j: usize) -> &[f64] {
        let q = self.q();
        let off = cell(self.n, t, i, j) * q;
        &self.values[off..off + q]
    }

    /// All rows of period `t`, row-major over `(i, j)`.
    pub fn period_rows(&self, t: usize) -> &[f64] {
        let len = self.n * self.n * self.q();
        &self.values[t * len..(t + 1) * len]
    }

    /// Rows of period `t` with lag-derived columns rebuilt from `lag`
    /// (an `n x n` slice of `log(y + 1)` values).
    pub fn period_rows_with_lag(&self, t: usize, lag: &[f64]) -> Vec<f64> {
        let (n, q) = (self.n, self.q());
        let nn = n * n;
        let mut rows = self.values[t * nn * q..(t + 1) * nn * q].to_vec();
        for (k, kind) in self.kinds.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let v = match kind {
                        ColumnKind::LaggedResponse => lag[i * n + j],
                        ColumnKind::LaggedReciprocal => lag[j * n + i],
                        _ => continue,
                    };
                    rows[(i * n + j) * q + k] = v;
                }
            }
        }
        rows
    }

    pub fn has_lag_columns(&self) -> bool {
        self.kinds
            .iter()
            .any(|k| matches!(k, ColumnKind::LaggedResponse | ColumnKind::LaggedReciprocal))
    }
}

/// `w_ii't` for every ordered pair including self pairs, `p` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceDesign {
    n: usize,
    periods: usize,
    names: Vec<String>,
    values: Vec<f64>,
}

impl InfluenceDesign {
    pub fn new(n: usize, periods: usize, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::InvalidArgument("influence design needs at least one covariate".into()));
        }
        if values.len() != n * n * periods * p {
            return Err(Error::DimensionMismatch(format!(
                "influence design has {} values, expected {n}x{n}x{periods}x{p}",
                values.len()
            )));
        }
        check_names(&names)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("influence design has non-finite values".into()));
        }
        Ok(Self {
            n,
            periods,
            names,
            values,
        })
    }

    pub fn from_fn(
        n: usize,
        periods: usize,
        names: Vec<String>,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let p = names.len();
        let mut values = Vec::with_capacity(n * n * periods * p);
        for t in 0..periods {
            for i in 0..n {
                for i2 in 0..n {
                    for k in 0..p {
                        values.push(f(t, i, i2, k));
                    }
                }
            }
        }
        Self::new(n, periods, names, values)
    }

    /// Broadcasts one `n x n x p` array over every period.
    pub fn from_static(n: usize, periods: usize, names: Vec<String>, values: &[f64]) -> Result<Self> {
        let p = names.len();
        if values.len() != n * n * p {
            return Err(Error::DimensionMismatch("static influence values must be n x n x p".into()));
        }
        Self::new(n, periods, names, values.repeat(periods))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, t: usize, i: usize, i2: usize) -> &[f64] {
        let p = self.p();
        let off = cell(self.n, t, i, i2) * p;
        &self.values[off..off + p]
    }

    fn period(&self, t: usize) -> &[f64] {
        let len = self.n * self.n * self.p();
        &self.values[t * len..(t + 1) * len]
    }

    /// Row-major `n x n` scores `coef . w_{ii't}` into `out`.
    pub(crate) fn scores_into(&self, coef: &[f64], t: usize, out: &mut [f64]) {
        let p = self.p();
        for (o, w) in out.iter_mut().zip(self.period(t).chunks_exact(p)) {
            *o = dot(w, coef);
        }
    }
}

fn check_names(names: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for name in names {
        if !seen.insert(name) {
            return Err(Error::InvalidArgument(format!("duplicate covariate name '{name}'")));
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Influence matrix at period `t`: entry `(i, i')` is `coef . w_{ii't}`.
pub fn influence_scores(w: &InfluenceDesign, coef: &[f64], t: usize) -> Result<DMatrix<f64>> {
    if coef.len() != w.p() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient length {} vs p = {}",
            coef.len(),
            w.p()
        )));
    }
    if t >= w.periods {
        return Err(Error::InvalidArgument(format!("period {t} out of range")));
    }
    let mut out = vec![0.0; w.n * w.n];
    w.scores_into(coef, t, &mut out);
    Ok(DMatrix::from_row_slice(w.n, w.n, &out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapsedKind {
    /// `Xt beta`, regressors for `alpha` in half-step 1.
    TimesBeta,
    /// `Xt^T alpha`, regressors for `beta` in half-step 2.
    TimesAlpha,
}

/// One `p`-vector per modeled cell (diagonal cells are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedBlock {
    n: usize,
    periods: usize,
    p: usize,
    kind: CollapsedKind,
    values: Vec<f64>,
}

impl CollapsedBlock {
    pub fn kind(&self) -> CollapsedKind {
        self.kind
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> &[f64] {
        let off = cell(self.n, t, i, j) * self.p;
        &self.values[off..off + self.p]
    }

    pub(crate) fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

fn check_dims(x: &PredictorTensor, ws: &InfluenceDesign, wr: &InfluenceDesign, coef: &[f64]) -> Result<()> {
    if ws.n != x.n() || wr.n != x.n() {
        return Err(Error::DimensionMismatch(format!(
            "actor counts differ: predictor {}, sender {}, receiver {}",
            x.n(),
            ws.n,
            wr.n
        )));
    }
    if ws.periods != x.periods() || wr.periods != x.periods() {
        return Err(Error::DimensionMismatch(format!(
            "period counts differ: predictor {}, sender {}, receiver {}",
            x.periods(),
            ws.periods,
            wr.periods
        )));
    }
    if ws.p() != wr.p() || coef.len() != ws.p() {
        return Err(Error::DimensionMismatch(format!(
            "influence widths differ: sender {}, receiver {}, coefficients {}",
            ws.p(),
            wr.p(),
            coef.len()
        )));
    }
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("non-finite influence coefficients".into()));
    }
    Ok(())
}

/// `Xt_ijt beta` for every modeled cell.
pub fn collapse_beta(
    x: &PredictorTensor,
    ws: &InfluenceDesign,
    wr: &InfluenceDesign,
    beta: &[f64],
) -> Result<CollapsedBlock> {
    check_dims(x, ws, wr, beta)?;
    let (n, p) = (x.n(), ws.p());
    let mut values = vec![0.0; n * n * p * x.periods()];
    values
        .par_chunks_mut(n * n * p)
        .enumerate()
        .for_each(|(t, out)| collapse_beta_period(x.slice(t), ws, wr, beta, t, out));
    Ok(CollapsedBlock {
        n,
        periods: x.periods(),
        p,
        kind: CollapsedKind::TimesBeta,
        values,
    })
}

/// `Xt_ijt beta` for one period given an explicit predictor slice.
pub(crate) fn collapse_beta_period(
    x: &[f64],
    ws: &InfluenceDesign,
    wr: &InfluenceDesign,
    beta: &[f64],
    t: usize,
    out: &mut [f64],
) {
    let (n, p) = (ws.n, ws.p());
    let mut b = vec![0.0; n * n];
    wr.scores_into(beta, t, &mut b);
    // m[i'][j] = sum_j' x[i'][j'] b[j][j']
    let mut m = vec![0.0; n * n];
    for i2 in 0..n {
        let xrow = &x[i2 * n..(i2 + 1) * n];
        for j in 0..n {
            m[i2 * n + j] = dot(xrow, &b[j * n..(j + 1) * n]);
        }
    }
    let wsp = ws.period(t);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let acc = &mut out[(i * n + j) * p..(i * n + j + 1) * p];
            acc.fill(0.0);
            for i2 in 0..n {
                let mv = m[i2 * n + j];
                let w = &wsp[(i * n + i2) * p..(i * n + i2 + 1) * p];
                for k in 0..p {
                    acc[k] += w[k] * mv;
                }
            }
        }
    }
}

/// `Xt_ijt^T alpha` for every modeled cell.
pub fn collapse_alpha(
    x: &PredictorTensor,
    ws: &InfluenceDesign,
    wr: &InfluenceDesign,
    alpha: &[f64],
) -> Result<CollapsedBlock> {
    check_dims(x, ws, wr, alpha)?;
    let (n, p) = (x.n(), ws.p());
    let mut values = vec![0.0; n * n * p * x.periods()];
    values.par_chunks_mut(n * n * p).enumerate().for_each(|(t, out)| {
        let mut a = vec![0.0; n * n];
        ws.scores_into(alpha, t, &mut a);
        let xs = x.slice(t);
        // m[i][j'] = sum_i' a[i][i'] x[i'][j']
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for i2 in 0..n {
                let aii = a[i * n + i2];
                if aii == 0.0 {
                    continue;
                }
                for j2 in 0..n {
                    m[i * n + j2] += aii * xs[i2 * n + j2];
                }
            }
        }
        let wrp = wr.period(t);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let acc = &mut out[(i * n + j) * p..(i * n + j + 1) * p];
                for j2 in 0..n {
                    let mv = m[i * n + j2];
                    let w = &wrp[(j * n + j2) * p..(j * n + j2 + 1) * p];
                    for k in 0..p {
                        acc[k] += w[k] * mv;
                    }
                }
            }
        }
    });
    Ok(CollapsedBlock {
        n,
        periods: x.periods(),
        p,
        kind: CollapsedKind::TimesAlpha,
        values,
    })
}

/// Explicit `p x p` collapsed design `Ws_i^T X_t Wr_j` for one cell.
pub fn collapse_full(
    x: &PredictorTensor,
    ws: &InfluenceDesign,
    wr: &InfluenceDesign,
    i: usize,
    j: usize,
    t: usize,
) -> Result<DMatrix<f64>> {
    check_dims(x, ws, wr, &vec![0.0; ws.p()])?;
    let n = x.n();
    if i >= n || j >= n || t >= x.periods() {
        return Err(Error::InvalidArgument(format!("cell ({i},{j},{t}) out of range")));
    }
    let p = ws.p();
    let mut out = DMatrix::zeros(p, p);
    for i2 in 0..n {
        let wi = ws.get(t, i, i2);
        for j2 in 0..n {
            let xv = x.get(t, i2, j2);
            if xv == 0.0 {
                continue;
            }
            let wj = wr.get(t, j, j2);
            for k in 0..p {
                for l in 0..p {
                    out[(k, l)] += xv * wi[k] * wj[l];
                }
            }
        }
    }
    Ok(out)
}
