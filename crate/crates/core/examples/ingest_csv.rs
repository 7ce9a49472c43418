//! Build model data from long-format event and covariate files.
//!
//!     cargo run --example ingest_csv

use sirnet::io::config::RunConfig;
use sirnet::io::designs::{CovariateSource, CovariateSpec, DesignSpec, FillPolicy, Role};

const EVENTS: &str = "\
period,source,target,count
2001-01,usa,rus,3
2001-01,rus,chn,1
2001-02,usa,rus,2
2001-02,chn,usa,4
2001-03,rus,usa,1
2001-03,usa,chn,2
2001-04,usa,rus,5
2001-04,chn,rus,1
2001-05,rus,chn,2
2001-05,usa,chn,1
2001-06,chn,usa,3
2001-06,usa,rus,2
";

fn main() -> sirnet::Result<()> {
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("events.csv"), EVENTS)?;
    // Static dyadic covariate, one row per ordered pair.
    let mut cov = String::from("period,source,target,name,value\n");
    for (a, b, v) in [("usa", "rus", 1.0), ("rus", "usa", 1.0), ("usa", "chn", 0.0), ("chn", "usa", 0.0), ("rus", "chn", 1.0), ("chn", "rus", 1.0)] {
        cov.push_str(&format!("*,{a},{b},shared_border,{v}\n"));
    }
    std::fs::write(dir.path().join("covariates.csv"), cov)?;

    let mut cfg = RunConfig::new("events.csv".into());
    cfg.covariates = Some("covariates.csv".into());
    cfg.design = DesignSpec {
        covariates: vec![
            CovariateSpec::new("intercept", CovariateSource::Intercept, Role::Direct),
            CovariateSpec::new("lag_y", CovariateSource::LaggedResponse, Role::Direct),
            CovariateSpec::new("self", CovariateSource::SelfIndicator, Role::Both),
            CovariateSpec {
                self_value: Some(0.0),
                ..CovariateSpec::new("shared_border", CovariateSource::File, Role::Both)
            },
        ],
        fill: FillPolicy::Strict,
    };
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg)?)?;

    let data = RunConfig::load(&path)?.load_data()?;
    let y = data.response();
    println!("actors {:?}", y.actor_labels());
    println!("periods {:?}", y.period_labels());
    println!("direct {:?}, influence {:?}", data.direct().names(), data.sender().names());

    // Row for usa -> rus in the first modeled period (responses of 2001-02).
    let (usa, rus) = (2, 1);
    println!("z {:?}", data.direct().row(0, usa, rus));
    println!("w(usa, rus) {:?}", data.sender().get(0, usa, rus));
    println!("x(usa, rus) = log(1 + y) = {:.4}", data.predictor().get(0, usa, rus));
    Ok(())
}
