//! Longitudinal dyadic arrays.
//!
//! A [`DyadTensor`] holds `T` sociomatrices of counts, stored period-major
//! (`[t][i][j]`). Diagonal cells are undefined and stored as `NaN`; nothing
//! in this crate reads them. Periods `1..T` of the response are *modeled*:
//! modeled period `s` has response slice `s + 1` and predictor slice `s`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[inline]
pub(crate) fn cell(n: usize, t: usize, i: usize, j: usize) -> usize {
    (t * n + i) * n + j
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadTensor {
    n: usize,
    periods: usize,
    values: Vec<f64>,
    actor_labels: Vec<String>,
    period_labels: Vec<String>,
}

impl DyadTensor {
    /// Validates shape, labels and entries. Diagonal entries of `values`
    /// are ignored and replaced by `NaN`.
    pub fn new(
        mut values: Vec<f64>,
        actor_labels: Vec<String>,
        period_labels: Vec<String>,
    ) -> Result<Self> {
        let n = actor_labels.len();
        let periods = period_labels.len();
        if n < 2 {
            return Err(Error::InvalidTensor(format!("need at least 2 actors, got {n}")));
        }
        if periods < 2 {
            return Err(Error::InsufficientPeriods { required: 2, got: periods });
        }
        if values.len() != n * n * periods {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {n}x{n}x{periods} tensor",
                values.len()
            )));
        }
        if period_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTensor(
                "period labels must be strictly increasing".into(),
            ));
        }
        let distinct: BTreeSet<&String> = actor_labels.iter().collect();
        if distinct.len() != n {
            return Err(Error::InvalidTensor("duplicate actor label".into()));
        }
        for t in 0..periods {
            for i in 0..n {
                for j in 0..n {
                    let v = &mut values[cell(n, t, i, j)];
                    if i == j {
                        *v = f64::NAN;
                    } else if !v.is_finite() || *v < 0.0 {
                        return Err(Error::InvalidTensor(format!(
                            "entry ({i},{j},{t}) = {v} is not a finite nonnegative value"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n,
            periods,
            values,
            actor_labels,
            period_labels,
        })
    }

    /// Builds a tensor from a cell function with generated labels
    /// (`a0, a1, ...` and zero-padded period indices).
    pub fn from_fn(n: usize, periods: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut values = vec![0.0; n * n * periods];
        for t in 0..periods {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        values[cell(n, t, i, j)] = f(t, i, j);
                    }
                }
            }
        }
        Self::new(values, default_actor_labels(n), default_period_labels(periods))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observed periods `T`.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Number of modeled periods, `T - 1`.
    pub fn modeled_periods(&self) -> usize {
        self.periods - 1
    }

    pub fn actor_labels(&self) -> &[String] {
        &self.actor_labels
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    /// Off-diagonal value, `None` on the diagonal.
    pub fn get(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        (i != j).then(|| self.values[cell(self.n, t, i, j)])
    }

    /// Row-major `n x n` slice for period `t`; diagonal is `NaN`.
    pub fn slice(&self, t: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.values[t * nn..(t + 1) * nn]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when every off-diagonal entry is a whole number.
    pub fn is_integral(&self) -> bool {
        self.off_diagonal().all(|v| v.fract() == 0.0)
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n;
        self.values
            .iter()
            .enumerate()
            .filter(move |(k, _)| (k / n) % n != k % n)
            .map(|(_, v)| *v)
    }
}

pub fn default_actor_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

pub fn default_period_labels(periods: usize) -> Vec<String> {
    (0..periods).map(|t| format!("{t:06}")).collect()
}

/// `log(y + 1)` of each predictor slice, aligned to modeled periods.
/// Diagonal entries are `0`, which removes them from every bilinear sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTensor {
    n: usize,
    periods: usize,
    values: Vec<f64>,
}

impl PredictorTensor {
    /// Wraps raw `n x n x periods` values, zeroing the diagonal.
    pub fn from_values(n: usize, periods: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n * periods {
            return Err(Error::DimensionMismatch(format!(
                "{} predictor values for {n}x{n}x{periods}",
                values.len()
            )));
        }
        for t in 0..periods {
            for i in 0..n {
                values[cell(n, t, i, i)] = 0.0;
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!("non-finite predictor {v}")));
        }
        Ok(Self { n, periods, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[cell(self.n, t, i, j)]
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.values[t * nn..(t + 1) * nn]
    }
}

/// `log(y + 1)` of one sociomatrix, diagonal set to zero.
pub fn log1p_slice(n: usize, counts: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i * n + j] = counts[i * n + j].ln_1p();
            }
        }
    }
    out
}

/// Lagged predictor: modeled period `s` receives `log(y[s] + 1)`.
pub fn lag_log_transform(y: &DyadTensor) -> Result<PredictorTensor> {
    if y.periods < 2 {
        return Err(Error::InsufficientPeriods { required: 2, got: y.periods });
    }
    let n = y.n;
    let periods = y.periods - 1;
    let values = (0..periods).flat_map(|t| log1p_slice(n, y.slice(t))).collect();
    PredictorTensor::from_values(n, periods, values)
}

/// Excluded modeled cells: whole periods (held-out slices) and individual
/// missing observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mask {
    periods: BTreeSet<usize>,
    cells: BTreeSet<(usize, usize, usize)>,
}

impl Mask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn periods(periods: impl IntoIterator<Item = usize>) -> Self {
        Self {
            periods: periods.into_iter().collect(),
            cells: BTreeSet::new(),
        }
    }

    /// Marks a single `(t, i, j)` modeled cell as missing.
    pub fn with_cell(mut self, t: usize, i: usize, j: usize) -> Self {
        self.cells.insert((t, i, j));
        self
    }

    pub fn held_out_periods(&self) -> &BTreeSet<usize> {
        &self.periods
    }

    pub fn is_observed(&self, t: usize, i: usize, j: usize) -> bool {
        i != j && !self.periods.contains(&t) && !self.cells.contains(&(t, i, j))
    }

    pub(crate) fn check(&self, n: usize, modeled: usize) -> Result<()> {
        if let Some(&t) = self.periods.iter().find(|&&t| t >= modeled) {
            return Err(Error::InvalidArgument(format!(
                "masked period {t} outside modeled range 0..{modeled}"
            )));
        }
        if let Some(c) = self
            .cells
            .iter()
            .find(|(t, i, j)| *t >= modeled || *i >= n || *j >= n)
        {
            return Err(Error::InvalidArgument(format!("masked cell {c:?} out of range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub t: usize,
    pub i: usize,
    pub j: usize,
}

/// Row enumeration of the flattened regression: period-major, then
/// sender, then receiver, skipping the diagonal and masked cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationIndex {
    n: usize,
    periods: usize,
    cells: Vec<Cell>,
}

impl ObservationIndex {
    pub fn new(n: usize, periods: usize, mask: &Mask) -> Self {
        let mut cells = Vec::with_capacity(n * n.saturating_sub(1) * periods);
        for t in 0..periods {
            for i in 0..n {
                for j in 0..n {
                    if mask.is_observed(t, i, j) {
                        cells.push(Cell { t, i, j });
                    }
                }
            }
        }
        Self { n, periods, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Position of `(t, i, j)` in the grid of all modeled cells, diagonal
    /// included; used to address per-cell arrays.
    #[inline]
    pub fn grid_offset(&self, c: Cell) -> usize {
        cell(self.n, c.t, c.i, c.j)
    }
}

/// Response vector over modeled periods in [`ObservationIndex`] order.
pub fn flatten(y: &DyadTensor, mask: &Mask) -> Result<(ObservationIndex, Vec<f64>)> {
    mask.check(y.n, y.modeled_periods())?;
    let index = ObservationIndex::new(y.n, y.modeled_periods(), mask);
    let response = index
        .cells()
        .iter()
        .map(|c| y.values[cell(y.n, c.t + 1, c.i, c.j)])
        .collect();
    Ok((index, response))
}

/// Inverse of [`flatten`] for an unmasked index: rebuilds the tensor from
/// its first slice and the flattened responses.
pub fn unflatten(
    index: &ObservationIndex,
    response: &[f64],
    first_slice: &[f64],
    actor_labels: Vec<String>,
    period_labels: Vec<String>,
) -> Result<DyadTensor> {
    let n = index.n;
    let full = n * (n - 1) * index.periods;
    if index.len() != full || response.len() != full {
        return Err(Error::DimensionMismatch(format!(
            "unflatten needs a complete index ({full} cells), got {} cells and {} values",
            index.len(),
            response.len()
        )));
    }
    if first_slice.len() != n * n {
        return Err(Error::DimensionMismatch("first slice must be n x n".into()));
    }
    let mut values = vec![0.0; n * n * (index.periods + 1)];
    values[..n * n].copy_from_slice(first_slice);
    for (c, v) in index.cells.iter().zip(response) {
        values[cell(n, c.t + 1, c.i, c.j)] = *v;
    }
    DyadTensor::new(values, actor_labels, period_labels)
}

/// Per-cell values over modeled periods (predicted rates, scores).
/// Diagonal and unevaluated cells hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTensor {
    n: usize,
    periods: usize,
    values: Vec<f64>,
}

impl RateTensor {
    pub(crate) fn empty(n: usize, periods: usize) -> Self {
        Self {
            n,
            periods,
            values: vec![f64::NAN; n * n * periods],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        let v = self.values[cell(self.n, t, i, j)];
        (!v.is_nan()).then_some(v)
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.values[t * nn..(t + 1) * nn]
    }

    pub(crate) fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        let nn = self.n * self.n;
        &mut self.values[t * nn..(t + 1) * nn]
    }
}
