//! Influence-network edge lists for external plotting.

use serde::Serialize;

use super::designs::fmt_value;
use crate::design::{influence_scores, Side};
use crate::error::{Error, Result};
use crate::sir::{ParameterSet, SirData};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceEdge {
    pub source: String,
    pub target: String,
    pub value: f64,
}

/// Off-diagonal entries of `A_t` (sender) or `B_t` (receiver) with
/// `|value| >= threshold`, row-major.
pub fn export_influence(
    params: &ParameterSet,
    data: &SirData,
    side: Side,
    t: usize,
    threshold: f64,
) -> Result<Vec<InfluenceEdge>> {
    if t >= data.modeled_periods() {
        return Err(Error::InvalidArgument(format!(
            "period index {t} outside 0..{}",
            data.modeled_periods()
        )));
    }
    let (w, coef) = match side {
        Side::Sender => (data.sender(), &params.alpha),
        Side::Receiver => (data.receiver(), &params.beta),
    };
    let m = influence_scores(w, coef, t)?;
    let actors = data.response().actor_labels();
    let n = data.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for k in (0..n).filter(|&k| k != i) {
            let value = m[(i, k)];
            if value.abs() >= threshold && !(threshold > 0.0 && value == 0.0) {
                edges.push(InfluenceEdge {
                    source: actors[i].clone(),
                    target: actors[k].clone(),
                    value,
                });
            }
        }
    }
    Ok(edges)
}

pub fn edges_csv(edges: &[InfluenceEdge]) -> Result<Vec<u8>> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["source", "target", "value"])?;
    for e in edges {
        out.write_record([e.source.as_str(), e.target.as_str(), &fmt_value(e.value)])?;
    }
    out.into_inner().map_err(|e| Error::Io(e.into_error()))
}
