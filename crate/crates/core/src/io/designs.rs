//! Covariate tables (`period,source,target,name,value`) joined onto the
//! actor x period grid to build direct and influence designs.
//!
//! A period of `*` marks a static value that applies to every period.
//! Modeled period `s` (response slice `s + 1`) reads a covariate with lag
//! `L` from period index `s + 1 - L`.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::events::{check_header, UnknownActors};
use super::input_error;
use super::period::YearMonth;
use crate::design::{ColumnKind, DirectDesign, InfluenceDesign};
use crate::error::{Error, Result};
use crate::tensor::DyadTensor;

pub const COVARIATE_HEADER: [&str; 5] = ["period", "source", "target", "name", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSource {
    /// Values under this covariate's name in the covariate table.
    #[default]
    File,
    Intercept,
    /// `log(y_{ij,t-1} + 1)`
    LaggedResponse,
    /// `log(y_{ji,t-1} + 1)`
    LaggedReciprocal,
    /// One on self pairs, zero elsewhere.
    SelfIndicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Direct,
    Sender,
    Receiver,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Log1p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    #[default]
    Strict,
    CarryForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(default)]
    pub source: CovariateSource,
    pub role: Role,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default)]
    pub transform: Transform,
    /// Value for self pairs `(i, i)` absent from the table.
    #[serde(default)]
    pub self_value: Option<f64>,
}

fn default_lag() -> usize {
    1
}

impl CovariateSpec {
    pub fn new(name: &str, source: CovariateSource, role: Role) -> Self {
        Self {
            name: name.into(),
            source,
            role,
            lag: 1,
            transform: Transform::Identity,
            self_value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub fill: FillPolicy,
}

impl Default for DesignSpec {
    /// Intercept plus a self indicator on both influence sides.
    fn default() -> Self {
        Self {
            covariates: vec![
                CovariateSpec::new("intercept", CovariateSource::Intercept, Role::Direct),
                CovariateSpec::new("self", CovariateSource::SelfIndicator, Role::Both),
            ],
            fill: FillPolicy::Strict,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CovariateRecord {
    period: String,
    source: String,
    target: String,
    name: String,
    value: f64,
}

/// Values keyed by `(period index or None for static, i, j)`.
type Keyed = HashMap<(Option<usize>, usize, usize), f64>;

#[derive(Debug, Default)]
pub struct CovariateTable {
    origin: String,
    values: HashMap<String, Keyed>,
}

impl CovariateTable {
    /// Reads and joins a covariate CSV onto `actors` and `periods`. Rows
    /// outside the period range are skipped.
    pub fn read<R: Read>(
        reader: R,
        origin: &str,
        actors: &[String],
        periods: &[YearMonth],
        unknown: UnknownActors,
    ) -> Result<Self> {
        let actor_index: HashMap<&str, usize> = actors.iter().enumerate().map(|(k, a)| (a.as_str(), k)).collect();
        let first = periods.first().copied();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(rdr.headers()?, &COVARIATE_HEADER, origin)?;
        let mut table = Self {
            origin: origin.to_string(),
            values: HashMap::new(),
        };
        for (k, result) in rdr.deserialize::<CovariateRecord>().enumerate() {
            let line = k + 2;
            let r = result.map_err(|e| input_error(origin, line, e.to_string()))?;
            if !r.value.is_finite() {
                return Err(input_error(origin, line, format!("value of '{}' is not finite", r.name)));
            }
            let t = if r.period == "*" {
                None
            } else {
                let p = YearMonth::parse(&r.period).map_err(|e| input_error(origin, line, e.to_string()))?;
                let off = first.map_or(-1, |f| f.months_until(p));
                if off < 0 || off as usize >= periods.len() {
                    continue;
                }
                Some(off as usize)
            };
            let (i, j) = match (actor_index.get(r.source.as_str()), actor_index.get(r.target.as_str())) {
                (Some(&i), Some(&j)) => (i, j),
                _ if unknown == UnknownActors::Drop => continue,
                (s, _) => {
                    let name = if s.is_none() { &r.source } else { &r.target };
                    return Err(input_error(origin, line, format!("unknown actor '{name}'")));
                }
            };
            let slot = table.values.entry(r.name.clone()).or_default();
            if slot.insert((t, i, j), r.value).is_some() {
                return Err(input_error(origin, line, format!("duplicate value for '{}'", r.name)));
            }
        }
        Ok(table)
    }

    pub fn open(path: &Path, actors: &[String], periods: &[YearMonth], unknown: UnknownActors) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(file, &path.display().to_string(), actors, periods, unknown)
    }

    pub fn names(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.values.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    fn lookup(&self, name: &str, period: usize, i: usize, j: usize, fill: FillPolicy) -> Option<f64> {
        let m = self.values.get(name)?;
        if let Some(v) = m.get(&(Some(period), i, j)) {
            return Some(*v);
        }
        if let Some(v) = m.get(&(None, i, j)) {
            return Some(*v);
        }
        match fill {
            FillPolicy::Strict => None,
            FillPolicy::CarryForward => (0..period).rev().find_map(|t| m.get(&(Some(t), i, j)).copied()),
        }
    }
}

/// Direct, sender and receiver designs built from `spec`.
pub fn ingest_designs(
    table: Option<&CovariateTable>,
    spec: &DesignSpec,
    y: &DyadTensor,
) -> Result<(DirectDesign, InfluenceDesign, InfluenceDesign)> {
    check_spec(spec)?;
    let n = y.n();
    let modeled = y.modeled_periods();
    let empty = CovariateTable::default();
    let table = table.unwrap_or(&empty);
    let origin = if table.origin.is_empty() { "covariates" } else { table.origin.as_str() };

    let direct: Vec<&CovariateSpec> = spec.covariates.iter().filter(|c| c.role == Role::Direct).collect();
    let sender: Vec<&CovariateSpec> = spec
        .covariates
        .iter()
        .filter(|c| matches!(c.role, Role::Sender | Role::Both))
        .collect();
    let receiver: Vec<&CovariateSpec> = spec
        .covariates
        .iter()
        .filter(|c| matches!(c.role, Role::Receiver | Role::Both))
        .collect();
    if sender.is_empty() || receiver.is_empty() {
        return Err(Error::Config("both sender and receiver designs need at least one covariate".into()));
    }

    let x: Vec<Vec<f64>> = (0..modeled).map(|s| crate::tensor::log1p_slice(n, y.slice(s))).collect();
    let value = |c: &CovariateSpec, s: usize, i: usize, j: usize| -> Result<f64> {
        let raw = match c.source {
            CovariateSource::Intercept => return Ok(1.0),
            CovariateSource::LaggedResponse => return Ok(x[s][i * n + j]),
            CovariateSource::LaggedReciprocal => return Ok(x[s][j * n + i]),
            CovariateSource::SelfIndicator => return Ok(if i == j { 1.0 } else { 0.0 }),
            CovariateSource::File => {
                let period = (s + 1).checked_sub(c.lag).ok_or_else(|| {
                    Error::Config(format!("lag {} of '{}' reaches before the first period", c.lag, c.name))
                })?;
                match table.lookup(&c.name, period, i, j, spec.fill) {
                    Some(v) => v,
                    None if i == j && c.self_value.is_some() => c.self_value.unwrap_or_default(),
                    None => {
                        return Err(input_error(
                            origin,
                            0,
                            format!(
                                "covariate '{}' missing for ({}, {}) at {}",
                                c.name,
                                y.actor_labels()[i],
                                y.actor_labels()[j],
                                y.period_labels()[period]
                            ),
                        ))
                    }
                }
            }
        };
        match c.transform {
            Transform::Identity => Ok(raw),
            Transform::Log1p if raw > -1.0 => Ok(raw.ln_1p()),
            Transform::Log1p => Err(Error::Config(format!("log1p of {raw} in '{}'", c.name))),
        }
    };

    let q = direct.len();
    let mut z = vec![0.0; n * n * modeled * q];
    for s in 0..modeled {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for (k, c) in direct.iter().enumerate() {
                    z[((s * n + i) * n + j) * q + k] = value(c, s, i, j)?;
                }
            }
        }
    }
    let columns = direct
        .iter()
        .map(|c| {
            let kind = match c.source {
                CovariateSource::Intercept => ColumnKind::Intercept,
                CovariateSource::LaggedResponse => ColumnKind::LaggedResponse,
                CovariateSource::LaggedReciprocal => ColumnKind::LaggedReciprocal,
                _ => ColumnKind::Covariate,
            };
            (c.name.clone(), kind)
        })
        .collect();
    let z = DirectDesign::new(n, modeled, columns, z)?;

    let build = |cols: &[&CovariateSpec]| -> Result<InfluenceDesign> {
        let p = cols.len();
        let mut w = vec![0.0; n * n * modeled * p];
        for s in 0..modeled {
            for i in 0..n {
                for i2 in 0..n {
                    for (k, c) in cols.iter().enumerate() {
                        w[((s * n + i) * n + i2) * p + k] = value(c, s, i, i2)?;
                    }
                }
            }
        }
        InfluenceDesign::new(n, modeled, cols.iter().map(|c| c.name.clone()).collect(), w)
    };
    Ok((z, build(&sender)?, build(&receiver)?))
}

fn check_spec(spec: &DesignSpec) -> Result<()> {
    let mut seen = HashSet::new();
    for c in &spec.covariates {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Config(format!("covariate name '{}' is used twice", c.name)));
        }
        let lag_like = matches!(
            c.source,
            CovariateSource::Intercept | CovariateSource::LaggedResponse | CovariateSource::LaggedReciprocal
        );
        if lag_like && c.role != Role::Direct {
            return Err(Error::Config(format!("'{}' can only be a direct covariate", c.name)));
        }
        if c.source != CovariateSource::File && c.lag != 1 {
            return Err(Error::Config(format!("'{}' has a fixed lag of one", c.name)));
        }
    }
    if let Some(pos) = spec.covariates.iter().position(|c| c.source == CovariateSource::Intercept) {
        let first_direct = spec.covariates.iter().position(|c| c.role == Role::Direct);
        if first_direct != Some(pos) {
            return Err(Error::Config("the intercept must be the first direct covariate".into()));
        }
    }
    Ok(())
}

/// Writes designs back out as a covariate table, lag 1 (modeled period `s`
/// is stored at period index `s`). Lag-derived and intercept columns are
/// skipped; they are rebuilt from the design.
pub fn covariate_table_csv(
    y: &DyadTensor,
    z: &DirectDesign,
    ws: &InfluenceDesign,
    wr: Option<&InfluenceDesign>,
) -> Result<Vec<u8>> {
    let n = y.n();
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(COVARIATE_HEADER)?;
    let actors = y.actor_labels();
    for s in 0..z.periods() {
        let period = &y.period_labels()[s];
        for (k, name) in z.names().iter().enumerate() {
            if z.kinds()[k] != ColumnKind::Covariate {
                continue;
            }
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    out.write_record([period, &actors[i], &actors[j], name, &fmt_value(z.row(s, i, j)[k])])?;
                }
            }
        }
        for w in std::iter::once(ws).chain(wr) {
            for (k, name) in w.names().iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        out.write_record([period, &actors[i], &actors[j], name, &fmt_value(w.get(s, i, j)[k])])?;
                    }
                }
            }
        }
    }
    out.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_value(v: f64) -> String {
    format!("{v:?}")
}
