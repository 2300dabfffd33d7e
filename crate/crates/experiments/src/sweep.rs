//! One-parameter sweeps of a base scenario.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{ConfigError, ScenarioConfig};
use crate::scenario::{run_scenario, RunArtifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Cu,
    Lambda,
    /// Number of actuators `M_σ = M²`; values must be perfect squares.
    Msigma,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cu" => Ok(Axis::Cu),
            "lambda" => Ok(Axis::Lambda),
            "msigma" => Ok(Axis::Msigma),
            _ => Err(format!("unknown sweep axis `{s}` (cu, lambda, msigma)")),
        }
    }
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Cu => "cu",
            Axis::Lambda => "lambda",
            Axis::Msigma => "msigma",
        }
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig, value: f64) -> Result<(), ConfigError> {
        match self {
            Axis::Cu => {
                cfg.cu = value;
                cfg.mark_override("cu");
            }
            Axis::Lambda => {
                cfg.lambda = value;
                cfg.mark_override("lambda");
            }
            Axis::Msigma => {
                let m = value.sqrt().round();
                if !(m >= 1.0 && m * m == value) {
                    return Err(ConfigError::general(format!("{value} actuators is not a square grid")));
                }
                cfg.m = m as usize;
                cfg.mark_override("m");
            }
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub runs: Vec<RunArtifact>,
}

pub fn run_sweep(base: &ScenarioConfig, axis: Axis, values: &[f64]) -> Result<Sweep, ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::general("sweep needs at least one value"));
    }
    let cfgs = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            axis.apply(&mut c, v)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let runs = cfgs.par_iter().map(run_scenario).collect::<Result<Vec<_>, _>>()?;
    Ok(Sweep {
        axis,
        values: values.to_vec(),
        runs,
    })
}

impl Sweep {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},status,mu_est,final_err_l2,J_total\n", self.axis.name());
        for (v, r) in self.values.iter().zip(&self.runs) {
            let _ = writeln!(
                s,
                "{v},{},{:.16e},{:.16e},{:.16e}",
                r.summary.status.as_str(),
                r.summary.mu_est(),
                r.summary.final_err_l2,
                r.summary.j_total
            );
        }
        s
    }

    pub fn write(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), self.to_csv())?;
        for (v, r) in self.values.iter().zip(&self.runs) {
            r.write(&dir.join(format!("{}_{v}", self.axis.name())))?;
        }
        Ok(())
    }
}
