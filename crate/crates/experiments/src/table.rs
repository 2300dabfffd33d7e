//! Cost comparison between the receding-horizon controller and the
//! saturated feedback over a grid of `(C_u, T_∞)` cells.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{ConfigError, Controller, ScenarioConfig};
use crate::scenario::{run_scenario, RunArtifact, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// `C_u = e^x`; `None` is unconstrained.
    pub cu_exponent: Option<f64>,
    pub t_inf: f64,
}

impl Cell {
    pub fn cu(&self) -> f64 {
        self.cu_exponent.map_or(f64::INFINITY, f64::exp)
    }

    pub fn label(&self) -> String {
        match self.cu_exponent {
            Some(x) => format!("(e^{x}, {})", self.t_inf),
            None => format!("(inf, {})", self.t_inf),
        }
    }

    fn slug(&self) -> String {
        match self.cu_exponent {
            Some(x) => format!("cu_e{x}_T{}", self.t_inf),
            None => format!("cu_inf_T{}", self.t_inf),
        }
    }
}

pub const CELLS: [Cell; 5] = [
    Cell { cu_exponent: Some(0.5), t_inf: 25.0 },
    Cell { cu_exponent: Some(1.0), t_inf: 20.0 },
    Cell { cu_exponent: Some(1.5), t_inf: 10.0 },
    Cell { cu_exponent: Some(2.0), t_inf: 7.0 },
    Cell { cu_exponent: None, t_inf: 5.0 },
];

pub const BETAS: [f64; 2] = [1e-3, 1e-5];

/// Published costs for the cells in [`CELLS`] order, one row per entry of
/// [`BETAS`]: `(rhc, saturated)`.
pub const REFERENCE: [[(f64, f64); 5]; 2] = [
    [(202.47, 203.04), (90.376, 152.93), (30.238, 34.226), (17.554, 17.922), (25.827, 30.787)],
    [(201.86, 202.47), (89.497, 151.73), (29.415, 33.439), (15.459, 16.729), (1.0466, 1.0973)],
];

#[derive(Debug, Clone)]
pub struct Entry {
    pub cell: Cell,
    pub beta: f64,
    pub rhc: RunArtifact,
    pub saturated: RunArtifact,
    pub reference: Option<(f64, f64)>,
}

fn cost(a: &RunArtifact) -> Option<f64> {
    (a.summary.status == RunStatus::Completed).then_some(a.summary.j_total)
}

impl Entry {
    pub fn rhc_cost(&self) -> Option<f64> {
        cost(&self.rhc)
    }

    pub fn saturated_cost(&self) -> Option<f64> {
        cost(&self.saturated)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub entries: Vec<Entry>,
}

fn reference_for(cell: &Cell, beta: f64) -> Option<(f64, f64)> {
    let i = CELLS.iter().position(|c| c == cell)?;
    let j = BETAS.iter().position(|b| *b == beta)?;
    Some(REFERENCE[j][i])
}

/// Runs both controllers on every `(cell, β)` pair, in parallel on the
/// current rayon pool. Failed runs stay in the table with their status.
pub fn run_table(base: &ScenarioConfig, cells: &[Cell], betas: &[f64]) -> Result<Table, ConfigError> {
    if cells.is_empty() || betas.is_empty() {
        return Err(ConfigError::general("table needs at least one cell and one beta"));
    }
    let mut jobs = Vec::new();
    for &beta in betas {
        for cell in cells {
            for controller in [Controller::Rhc, Controller::Saturated] {
                let mut cfg = base.clone();
                cfg.cu = cell.cu();
                cfg.t_inf = cell.t_inf;
                cfg.beta = beta;
                cfg.controller = controller;
                cfg.has_rhc_block = true;
                for k in ["cu", "T_inf", "beta", "controller"] {
                    cfg.mark_override(k);
                }
                cfg.validate()?;
                jobs.push(cfg);
            }
        }
    }
    let runs: Vec<RunArtifact> = jobs
        .par_iter()
        .map(run_scenario)
        .collect::<Result<_, _>>()?;
    let mut runs = runs.into_iter();
    let mut entries = Vec::new();
    for &beta in betas {
        for cell in cells {
            let rhc = runs.next().expect("one run per job");
            let saturated = runs.next().expect("one run per job");
            entries.push(Entry {
                cell: *cell,
                beta,
                rhc,
                saturated,
                reference: reference_for(cell, beta),
            });
        }
    }
    Ok(Table { entries })
}

fn fmt_cost(c: Option<f64>) -> String {
    c.map_or_else(|| "failed".to_string(), |v| format!("{v:.5}"))
}

impl Table {
    /// Aligned text, one row per `(β, controller)`, one column per cell.
    pub fn to_text(&self) -> String {
        let mut cells: Vec<Cell> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for e in &self.entries {
            if !cells.contains(&e.cell) {
                cells.push(e.cell);
            }
            if !betas.contains(&e.beta) {
                betas.push(e.beta);
            }
        }
        let find = |c: &Cell, b: f64| self.entries.iter().find(|e| e.cell == *c && e.beta == b);
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["(C_u, T_inf)".to_string()];
        header.extend(cells.iter().map(Cell::label));
        rows.push(header);
        for &b in &betas {
            let mut rhc = vec![format!("RHC beta={b:e}")];
            let mut sat = vec![format!("SatCon beta={b:e}")];
            let mut ref_rhc = vec!["  reference RHC".to_string()];
            let mut ref_sat = vec!["  reference SatCon".to_string()];
            for c in &cells {
                let e = find(c, b);
                rhc.push(fmt_cost(e.and_then(Entry::rhc_cost)));
                sat.push(fmt_cost(e.and_then(Entry::saturated_cost)));
                let r = e.and_then(|e| e.reference);
                ref_rhc.push(r.map_or("-".into(), |r| format!("{}", r.0)));
                ref_sat.push(r.map_or("-".into(), |r| format!("{}", r.1)));
            }
            rows.extend([rhc, sat, ref_rhc, ref_sat]);
        }
        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, s)| if j == 0 { format!("{s:<w$}", w = widths[j]) } else { format!("{s:>w$}", w = widths[j]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "cu,T_inf,beta,J_rhc,J_saturated,status_rhc,status_saturated,rhc_iterations,rhc_all_converged,reference_rhc,reference_saturated\n",
        );
        for e in &self.entries {
            let cu = e.cell.cu_exponent.map_or("inf".to_string(), |x| format!("e^{x}"));
            let (rr, rs) = e.reference.map_or((String::new(), String::new()), |r| (r.0.to_string(), r.1.to_string()));
            let _ = writeln!(
                s,
                "{cu},{},{:e},{:.16e},{:.16e},{},{},{},{},{rr},{rs}",
                e.cell.t_inf,
                e.beta,
                e.rhc.summary.j_total,
                e.saturated.summary.j_total,
                e.rhc.summary.status.as_str(),
                e.saturated.summary.status.as_str(),
                e.rhc.summary.iterations_total,
                e.rhc.summary.all_converged,
            );
        }
        s
    }

    /// Writes `table1.txt`, `table1.csv` and every run under `runs/`.
    pub fn write(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("table1.txt"), self.to_text())?;
        std::fs::write(dir.join("table1.csv"), self.to_csv())?;
        for e in &self.entries {
            let base = dir.join("runs").join(format!("{}_beta{:e}", e.cell.slug(), e.beta));
            e.rhc.write(&base.join("rhc"))?;
            e.saturated.write(&base.join("saturated"))?;
        }
        Ok(())
    }
}
