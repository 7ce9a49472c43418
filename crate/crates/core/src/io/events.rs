//! `period,source,target,count` event tables aggregated into a
//! [`DyadTensor`].

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::input_error;
use super::period::YearMonth;
use crate::error::{Error, Result};
use crate::tensor::DyadTensor;

pub const EVENT_HEADER: [&str; 4] = ["period", "source", "target", "count"];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EventRecord {
    pub period: String,
    pub source: String,
    pub target: String,
    pub count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownActors {
    Reject,
    Drop,
}

/// Parsed and validated event rows, with their CSV line numbers.
pub struct EventTable {
    pub(crate) rows: Vec<(usize, YearMonth, EventRecord)>,
}

impl EventTable {
    pub fn read<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(rdr.headers()?, &EVENT_HEADER, origin)?;
        let mut rows = Vec::new();
        for result in rdr.deserialize::<EventRecord>() {
            let record = result.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                input_error(origin, line, e.to_string())
            })?;
            let line = rows.len() + 2;
            let period = YearMonth::parse(&record.period).map_err(|e| input_error(origin, line, e.to_string()))?;
            if record.source == record.target {
                return Err(input_error(origin, line, format!("source equals target ('{}')", record.source)));
            }
            if !(record.count.is_finite() && record.count >= 0.0) {
                return Err(input_error(origin, line, format!("count {} is negative or not finite", record.count)));
            }
            if record.count.fract() != 0.0 {
                return Err(input_error(origin, line, format!("count {} is not a whole number", record.count)));
            }
            rows.push((line, period, record));
        }
        Ok(Self { rows })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(file, &path.display().to_string())
    }

    /// Sorted distinct actor labels.
    pub fn actors(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .rows
            .iter()
            .flat_map(|(_, _, r)| [r.source.as_str(), r.target.as_str()])
            .collect();
        set.into_iter().map(String::from).collect()
    }

    /// First and last month present.
    pub fn period_span(&self) -> Option<(YearMonth, YearMonth)> {
        let min = self.rows.iter().map(|r| r.1).min()?;
        let max = self.rows.iter().map(|r| r.1).max()?;
        Some((min, max))
    }
}

pub(crate) fn check_header(found: &csv::StringRecord, expected: &[&str], origin: &str) -> Result<()> {
    let got: Vec<&str> = found.iter().collect();
    if got != expected {
        return Err(input_error(
            origin,
            1,
            format!("header is {got:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

/// Aggregates events onto the `actors x actors x periods` grid. Absent
/// cells are zero.
pub fn ingest_events(
    table: &EventTable,
    origin: &str,
    actors: &[String],
    periods: &[YearMonth],
    unknown: UnknownActors,
) -> Result<DyadTensor> {
    let n = actors.len();
    let actor_index: HashMap<&str, usize> = actors.iter().enumerate().map(|(k, a)| (a.as_str(), k)).collect();
    if actor_index.len() != n {
        return Err(Error::Config("actor universe has duplicates".into()));
    }
    let first = *periods
        .first()
        .ok_or_else(|| Error::Config("empty period range".into()))?;
    if periods.windows(2).any(|w| w[0].months_until(w[1]) != 1) {
        return Err(Error::Config("periods must be consecutive months".into()));
    }
    let mut values = vec![0.0; n * n * periods.len()];
    for (line, period, record) in &table.rows {
        let offset = first.months_until(*period);
        if offset < 0 || offset as usize >= periods.len() {
            return Err(input_error(origin, *line, format!("period {period} outside the declared range")));
        }
        let t = offset as usize;
        let lookup = |name: &str| actor_index.get(name).copied();
        match (lookup(&record.source), lookup(&record.target)) {
            (Some(i), Some(j)) => values[(t * n + i) * n + j] += record.count,
            _ if unknown == UnknownActors::Drop => {
                log::debug!("{origin}: row {line}: dropping event outside the actor universe");
            }
            (s, _) => {
                let name = if s.is_none() { &record.source } else { &record.target };
                return Err(input_error(origin, *line, format!("unknown actor '{name}'")));
            }
        }
    }
    DyadTensor::new(values, actors.to_vec(), periods.iter().map(|p| p.to_string()).collect())
}
