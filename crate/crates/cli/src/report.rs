//! Run reports, their JSON and CSV forms, and `sigma_min` traces.

use std::io::Write;

use anyhow::Context;
use jacobi_index::linalg::Svd;
use jacobi_index::{zero_times, IntervalSpec, ScanOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, ScenarioConfig};
use crate::scenario::{build_subspace, build_system, run_scenario, ErrorKind, ScenarioResult};

pub const TOOL: &str = "jacobi-index";

/// CSV column order.
pub const CSV_HEADER: [&str; 8] = ["scenario", "id", "lhs", "rhs", "slack", "pass", "time", "multiplicity"];

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const INEQUALITY_FAILED: u8 = 1;
    pub const HYPOTHESIS_NOT_MET: u8 = 2;
    pub const NUMERICAL_ERROR: u8 = 3;
    pub const BAD_INPUT: u8 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    /// Seed of the first random suite in the batch, if any.
    pub root_seed: Option<u64>,
    pub config: Vec<ScenarioConfigEcho>,
    pub results: Vec<ScenarioResult>,
    pub timing_s: f64,
}

/// Config as parsed, kept as JSON so reports re-parse without the CLI types.
pub type ScenarioConfigEcho = serde_json::Value;

impl RunReport {
    pub fn run(config: &ConfigFile) -> Self {
        let start = std::time::Instant::now();
        let results: Vec<ScenarioResult> = config
            .scenarios
            .par_iter()
            .enumerate()
            .map(|(i, c)| run_scenario(c, i))
            .collect();
        RunReport {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            root_seed: config.scenarios.iter().find_map(|c| c.seed),
            config: config
                .scenarios
                .iter()
                .map(|c| serde_json::to_value(c).expect("config serializes"))
                .collect(),
            results,
            timing_s: start.elapsed().as_secs_f64(),
        }
    }

    /// Most severe outcome: numerical error, then hypothesis failure, then a
    /// failing verdict. Input errors raised while running count as bad input.
    pub fn exit_code(&self) -> u8 {
        let errors = self.results.iter().flat_map(|r| &r.errors);
        let verdicts = || self.results.iter().flat_map(|r| &r.verdicts);
        let worst = errors.map(|e| e.class).max_by_key(|c| match c {
            ErrorKind::Hypothesis => 0,
            ErrorKind::Numerical => 1,
            ErrorKind::Input => 2,
        });
        match worst {
            Some(ErrorKind::Input) => exit::BAD_INPUT,
            Some(ErrorKind::Numerical) => exit::NUMERICAL_ERROR,
            Some(ErrorKind::Hypothesis) => exit::HYPOTHESIS_NOT_MET,
            None if verdicts().any(|v| !v.hypothesis_ok) => exit::HYPOTHESIS_NOT_MET,
            None if verdicts().any(|v| !v.pass) => exit::INEQUALITY_FAILED,
            None => exit::PASS,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> anyhow::Result<()> {
        out.write_all(self.to_json().as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// One row per verdict and one per zero of each index report.
    pub fn write_csv<W: Write>(&self, out: W) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.results {
            let scenario = r.scenario.id();
            for v in &r.verdicts {
                w.write_record([
                    scenario,
                    &format!("{}/{}", r.id, v.statement),
                    &v.lhs.to_string(),
                    &v.rhs.to_string(),
                    &v.slack.to_string(),
                    if v.pass { "true" } else { "false" },
                    "",
                    "",
                ])?;
            }
            for rep in &r.indices {
                for z in &rep.zeros {
                    w.write_record([
                        scenario,
                        &format!("{}/zero", r.id),
                        "",
                        "",
                        "",
                        "",
                        &z.time.to_string(),
                        &z.multiplicity.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples `(t, sigma_min)` of the evaluation matrix on the interval, with the
/// refined zero times merged in.
pub fn trace(cfg: &ScenarioConfig) -> anyhow::Result<Vec<(f64, f64)>> {
    let system = build_system(cfg)?;
    let spec = cfg.subspace.as_ref().context("trace needs a subspace")?;
    let w = build_subspace(cfg, spec, &system)?;
    let iv: IntervalSpec = cfg.interval.as_ref().context("trace needs an interval")?.spec;
    let per_unit = cfg.samples.unwrap_or(100).max(1);
    let n = ((iv.hi - iv.lo) * per_unit as f64).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..=n).map(|i| iv.lo + (iv.hi - iv.lo) * i as f64 / n as f64).collect();
    let mut opts = ScanOptions::default();
    opts.scan_step = cfg.scan_step;
    if let Some(t) = cfg.refine_tol {
        opts.refine_tol = t;
    }
    let closed = IntervalSpec::closed(iv.lo, iv.hi)?;
    times.extend(zero_times(&w, &closed, &opts)?.into_iter().map(|z| z.time));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let u = w.evaluation_matrix(t)?;
            let sigma = Svd::new(&u).sigma.into_iter().take(w.dim()).fold(f64::INFINITY, f64::min);
            Ok((t, if w.dim() == 0 { 0.0 } else { sigma }))
        })
        .collect()
}

pub fn write_trace<W: Write>(rows: &[(f64, f64)], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "sigma_min"])?;
    for (t, s) in rows {
        w.write_record([t.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
