//! Run configuration: input files, design spec and estimator settings.
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::designs::{
    covariate_table_csv, ingest_designs, CovariateSource, CovariateSpec, CovariateTable, DesignSpec, FillPolicy, Role,
};
use super::events::{ingest_events, EventTable, UnknownActors, EVENT_HEADER};
use super::period::YearMonth;
use super::write_atomic;
use crate::design::ColumnKind;
use crate::error::{Error, Result};
use crate::scoring::ScoringOptions;
use crate::sim::Simulation;
use crate::sir::{SirData, SirOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRange {
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSettings {
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    /// Draw each fold independently instead of from disjoint pools.
    pub overlap: bool,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            k: 10,
            m: 5,
            seed: 0,
            overlap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldoutSettings {
    pub horizons: Vec<usize>,
}

impl Default for HoldoutSettings {
    fn default() -> Self {
        Self { horizons: vec![2, 3, 4, 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub events: PathBuf,
    #[serde(default)]
    pub covariates: Option<PathBuf>,
    /// Actor universe; taken from the events file when absent.
    #[serde(default)]
    pub actors: Option<Vec<String>>,
    /// Inclusive month range; taken from the events file when absent.
    #[serde(default)]
    pub periods: Option<PeriodRange>,
    /// Reject events and covariates naming actors outside the universe.
    #[serde(default = "default_true")]
    pub strict_actors: bool,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub estimator: SirOptions,
    #[serde(default)]
    pub scoring: ScoringOptions,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub holdout: HoldoutSettings,
    /// External per-fold scores (`model,fold,rule,value`) merged into reports.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn new(events: PathBuf) -> Self {
        Self {
            events,
            covariates: None,
            actors: None,
            periods: None,
            strict_actors: true,
            design: DesignSpec::default(),
            estimator: SirOptions::default(),
            scoring: ScoringOptions::default(),
            cv: CvSettings::default(),
            holdout: HoldoutSettings::default(),
            baseline: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path)?;
        let mut cfg: RunConfig =
            serde_json::from_slice(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn baseline_path(&self) -> Option<PathBuf> {
        self.baseline.as_deref().map(|p| self.resolve(p))
    }

    /// Reads events and covariates and builds the model data.
    pub fn load_data(&self) -> Result<SirData> {
        let events_path = self.resolve(&self.events);
        let origin = events_path.display().to_string();
        let table = EventTable::open(&events_path)?;
        let actors = match &self.actors {
            Some(a) => a.clone(),
            None => table.actors(),
        };
        let periods = match &self.periods {
            Some(r) => {
                let parse = |s: &str| YearMonth::parse(s).map_err(|e| Error::Config(e.to_string()));
                YearMonth::range(parse(&r.start)?, parse(&r.end)?)
            }
            None => {
                let (a, b) = table
                    .period_span()
                    .ok_or_else(|| Error::Config("events file is empty and no period range is given".into()))?;
                YearMonth::range(a, b)
            }
        };
        let unknown = if self.strict_actors {
            UnknownActors::Reject
        } else {
            UnknownActors::Drop
        };
        let y = ingest_events(&table, &origin, &actors, &periods, unknown)?;
        let cov = match &self.covariates {
            Some(p) => Some(CovariateTable::open(&self.resolve(p), &actors, &periods, unknown)?),
            None => None,
        };
        let (z, ws, wr) = ingest_designs(cov.as_ref(), &self.design, &y)?;
        SirData::new(y, z, ws, wr)
    }
}

/// Writes `events.csv`, `covariates.csv` and `config.json` into `dir` so
/// that [`RunConfig::load_data`] rebuilds exactly the simulated data.
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<RunConfig> {
    std::fs::create_dir_all(dir)?;
    let y = &sim.y;
    let n = y.n();
    let mut ev = csv::Writer::from_writer(Vec::new());
    ev.write_record(EVENT_HEADER)?;
    for t in 0..y.periods() {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let c = y.get(t, i, j).unwrap_or(0.0);
                if c > 0.0 {
                    ev.write_record([
                        y.period_labels()[t].as_str(),
                        &y.actor_labels()[i],
                        &y.actor_labels()[j],
                        &format!("{c}"),
                    ])?;
                }
            }
        }
    }
    write_atomic(&dir.join("events.csv"), &ev.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let shared = sim.ws == sim.wr;
    let wr = (!shared).then_some(&sim.wr);
    write_atomic(&dir.join("covariates.csv"), &covariate_table_csv(y, &sim.z, &sim.ws, wr)?)?;

    let mut covariates: Vec<CovariateSpec> = sim
        .z
        .names()
        .iter()
        .zip(sim.z.kinds())
        .map(|(name, kind)| {
            let source = match kind {
                ColumnKind::Intercept => CovariateSource::Intercept,
                ColumnKind::LaggedResponse => CovariateSource::LaggedResponse,
                ColumnKind::LaggedReciprocal => CovariateSource::LaggedReciprocal,
                ColumnKind::Covariate => CovariateSource::File,
            };
            CovariateSpec::new(name, source, Role::Direct)
        })
        .collect();
    let sender_role = if shared { Role::Both } else { Role::Sender };
    covariates.extend(sim.ws.names().iter().map(|w| CovariateSpec::new(w, CovariateSource::File, sender_role)));
    if !shared {
        covariates.extend(sim.wr.names().iter().map(|w| CovariateSpec::new(w, CovariateSource::File, Role::Receiver)));
    }
    let labels = y.period_labels();
    let mut cfg = RunConfig::new(PathBuf::from("events.csv"));
    cfg.covariates = Some(PathBuf::from("covariates.csv"));
    cfg.actors = Some(y.actor_labels().to_vec());
    cfg.periods = Some(PeriodRange {
        start: labels[0].clone(),
        end: labels[labels.len() - 1].clone(),
    });
    cfg.design = DesignSpec {
        covariates,
        fill: FillPolicy::Strict,
    };
    write_atomic(&dir.join("config.json"), &super::schema::to_json(&cfg)?)?;
    cfg.base_dir = dir.to_path_buf();
    Ok(cfg)
}
