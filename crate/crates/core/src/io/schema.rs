//! Versioned JSON outputs and the predictions CSV.

use std::collections::HashMap;
use std::io::Read;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::designs::fmt_value;
use super::events::check_header;
use super::input_error;
use crate::error::{Error, Result};
use crate::inference::VcovResult;
use crate::scoring::ScoreReport;
use crate::sir::{ParameterSet, SirData, SirFit, SirOptions, StartSummary};
use crate::tensor::RateTensor;

pub const FIT_SCHEMA: &str = "sirnet.fit/1";
pub const SCORES_SCHEMA: &str = "sirnet.scores/1";
pub const CV_SCHEMA: &str = "sirnet.cv/1";
pub const PREDICTION_HEADER: [&str; 4] = ["period", "source", "target", "mu"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    pub actors: Vec<String>,
    pub periods: Vec<String>,
    pub direct_names: Vec<String>,
    pub sender_names: Vec<String>,
    pub receiver_names: Vec<String>,
    /// Canonical estimate, `alpha_1 = 1`.
    pub params: ParameterSet,
    pub raw_params: ParameterSet,
    pub inference: Option<VcovResult>,
    pub inference_error: Option<String>,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub influence_degenerate: bool,
    pub observations: usize,
    pub start_disagreement: f64,
    pub starts: Vec<StartSummary>,
    pub options: SirOptions,
}

impl FitReport {
    pub fn new(fit: &SirFit, data: &SirData, options: &SirOptions, inference: Result<VcovResult>) -> Self {
        let (inference, inference_error) = match inference {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            schema: FIT_SCHEMA.into(),
            actors: data.response().actor_labels().to_vec(),
            periods: data.response().period_labels().to_vec(),
            direct_names: data.direct().names().to_vec(),
            sender_names: data.sender().names().to_vec(),
            receiver_names: data.receiver().names().to_vec(),
            params: fit.params.clone(),
            raw_params: fit.raw_params.clone(),
            inference,
            inference_error,
            loglik: fit.loglik(),
            loglik_trace: fit.loglik_trace.clone(),
            outer_iterations: fit.outer_iterations,
            converged: fit.converged,
            influence_degenerate: fit.influence_degenerate,
            observations: fit.observations,
            start_disagreement: fit.start_disagreement,
            starts: fit.starts.clone(),
            options: options.clone(),
        }
    }

    /// Checks that the fit's names match `data`'s designs.
    pub fn check_compatible(&self, data: &SirData) -> Result<()> {
        if self.direct_names != data.direct().names()
            || self.sender_names != data.sender().names()
            || self.receiver_names != data.receiver().names()
        {
            return Err(Error::DimensionMismatch("fit covariates differ from the current design".into()));
        }
        if self.actors != data.response().actor_labels() {
            return Err(Error::DimensionMismatch("fit actors differ from the current data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub schema: String,
    pub scores: ScoreReport,
}

impl ScoresFile {
    pub fn new(scores: ScoreReport) -> Self {
        Self {
            schema: SCORES_SCHEMA.into(),
            scores,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parses JSON whose top-level `schema` field must equal `expected`.
pub fn from_json<T: DeserializeOwned>(bytes: &[u8], expected: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == expected => Ok(serde_json::from_value(value)?),
        Some(s) => Err(Error::Config(format!("schema '{s}', expected '{expected}'"))),
        None => Err(Error::Config(format!("missing schema field, expected '{expected}'"))),
    }
}

/// Off-diagonal rates of the listed modeled periods. Row periods are
/// response periods (`t + 1`).
pub fn predictions_csv(mu: &RateTensor, data: &SirData, periods: &[usize]) -> Result<Vec<u8>> {
    let n = data.n();
    let labels = data.response().period_labels();
    let actors = data.response().actor_labels();
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(PREDICTION_HEADER)?;
    for &t in periods {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                if let Some(v) = mu.get(t, i, j) {
                    out.write_record([&labels[t + 1], &actors[i], &actors[j], &fmt_value(v)])?;
                }
            }
        }
    }
    out.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Deserialize)]
struct PredictionRecord {
    period: String,
    source: String,
    target: String,
    mu: f64,
}

/// Pairs each prediction row with the observed count of the same cell.
pub fn read_predictions<R: Read>(reader: R, origin: &str, data: &SirData) -> Result<(Vec<f64>, Vec<f64>)> {
    let labels: HashMap<&str, usize> = data
        .response()
        .period_labels()
        .iter()
        .enumerate()
        .map(|(k, l)| (l.as_str(), k))
        .collect();
    let actors: HashMap<&str, usize> = data
        .response()
        .actor_labels()
        .iter()
        .enumerate()
        .map(|(k, l)| (l.as_str(), k))
        .collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers()?, &PREDICTION_HEADER, origin)?;
    let (mut y, mut mu) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.deserialize::<PredictionRecord>().enumerate() {
        let line = k + 2;
        let r = rec.map_err(|e| input_error(origin, line, e.to_string()))?;
        let find = |m: &HashMap<&str, usize>, key: &str, what: &str| {
            m.get(key)
                .copied()
                .ok_or_else(|| input_error(origin, line, format!("unknown {what} '{key}'")))
        };
        let t = find(&labels, &r.period, "period")?;
        let i = find(&actors, &r.source, "actor")?;
        let j = find(&actors, &r.target, "actor")?;
        let obs = data
            .response()
            .get(t, i, j)
            .ok_or_else(|| input_error(origin, line, "diagonal cell"))?;
        y.push(obs);
        mu.push(r.mu);
    }
    Ok((y, mu))
}
