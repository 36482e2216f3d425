//! Parameter sweeps over the horizon or the reward risk factor.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigDocument;
use crate::grc::{run_grc_multi, GrcConfig, GrcResult};
use crate::model::{CostKind, RiskCmdpInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Horizon,
    Gamma,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T" | "horizon" => Ok(Self::Horizon),
            "gamma" => Ok(Self::Gamma),
            other => Err(format!("unknown sweep axis {other:?} (expected T or gamma)")),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Horizon => "T",
            Self::Gamma => "gamma",
        })
    }
}

/// `log(J) / gamma` of the given stream.
pub fn normalized_value(instance: &RiskCmdpInstance, kind: CostKind, value: f64) -> f64 {
    value.ln() / instance.cost_spec(kind).gamma
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub v_r: Option<f64>,
    pub v_c: Option<f64>,
    pub feasible: bool,
    /// Iterations of the best run.
    pub iterations: usize,
    pub seconds: f64,
    /// Why the point produced no result, if it failed.
    pub error: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("sweep values must be strictly increasing")]
    NotIncreasing,
    #[error("sweep values are empty")]
    Empty,
    #[error("horizon values must be whole numbers of at least 2, got {0}")]
    Horizon(f64),
}

/// Best result over `seeds` on `instance`.
pub fn solve_best(
    instance: &RiskCmdpInstance,
    config: &GrcConfig,
    seeds: &[u64],
) -> Result<(Vec<GrcResult>, Option<usize>), crate::grc::GrcError> {
    run_grc_multi(instance, config, seeds)
}

fn point(doc: &ConfigDocument, axis: SweepAxis, value: f64) -> Result<RiskCmdpInstance, String> {
    let doc = match axis {
        SweepAxis::Horizon => doc.with_horizon(value as usize).map_err(|e| e.to_string())?,
        SweepAxis::Gamma => doc.with_gamma(value),
    };
    doc.build().map_err(|e| e.to_string())
}

/// Solve the document at every axis value. A failing point yields a row
/// with `feasible = false` and the error; the sweep continues.
pub fn sweep(
    doc: &ConfigDocument,
    axis: SweepAxis,
    values: &[f64],
    config: &GrcConfig,
    seeds: &[u64],
) -> Result<Vec<SweepRow>, SweepError> {
    if values.is_empty() {
        return Err(SweepError::Empty);
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SweepError::NotIncreasing);
    }
    if axis == SweepAxis::Horizon {
        if let Some(&bad) = values.iter().find(|v| v.fract() != 0.0 || **v < 2.0) {
            return Err(SweepError::Horizon(bad));
        }
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let start = Instant::now();
        let failed = |error: String, start: Instant| SweepRow {
            axis_value: value,
            v_r: None,
            v_c: None,
            feasible: false,
            iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
            error: Some(error),
        };
        let instance = match point(doc, axis, value) {
            Ok(inst) => inst,
            Err(e) => {
                rows.push(failed(e, start));
                continue;
            }
        };
        match solve_best(&instance, config, seeds) {
            Ok((results, Some(best))) => {
                let inc = results[best].best.as_ref().expect("best index has an incumbent");
                rows.push(SweepRow {
                    axis_value: value,
                    v_r: Some(normalized_value(&instance, CostKind::Reward, inc.reward_value)),
                    v_c: Some(normalized_value(&instance, CostKind::Constraint, inc.constraint_value)),
                    feasible: true,
                    iterations: results[best].iterations,
                    seconds: start.elapsed().as_secs_f64(),
                    error: None,
                });
            }
            Ok((results, None)) => {
                let mut row = failed("no feasible policy found".into(), start);
                row.iterations = results.iter().map(|r| r.iterations).max().unwrap_or(0);
                rows.push(row);
            }
            Err(e) => rows.push(failed(e.to_string(), start)),
        }
    }
    Ok(rows)
}
