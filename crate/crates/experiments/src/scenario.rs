//! Example presets, run orchestration and on-disk artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use schloegl_core::actuators::build_actuator_grid;
use schloegl_core::analysis::{fit_decay_rate, DecayFit};
use schloegl_core::dynamics::{ForcingSpec, IntegratorConfig, SchloeglParams, TrajectoryRecord};
use schloegl_core::feedback::{closed_loop_simulate_into, FeedbackLaw, SaturationConfig};
use schloegl_core::fem::{build_mesh, NodalField, RectangleDomain};
use schloegl_core::ocp::BbOptions;
use schloegl_core::rhc::{run_rhc_with, RhcConfig, WindowReport};
use schloegl_core::{ControlledSystem, Error};

use crate::config::{ConfigError, Controller, Forcing, ScenarioConfig};

pub const EXAMPLE1: &str = "\
# stable equilibrium to the unstable one, no forcing
[model]
forcing = zero
[actuators]
m = 3
[feedback]
lambda = 175
cu = e^3.5
[initial]
yhat0 = zeta2
y0 = zeta3
[time]
T_inf = 10
[run]
controller = saturated
";

pub const EXAMPLE2: &str = "\
# between the two stable equilibria under periodic forcing
[model]
forcing = periodic
[actuators]
m = 3
[feedback]
lambda = 175
cu = e^2
[initial]
yhat0 = zeta3
y0 = zeta1
[time]
T_inf = 7
[run]
controller = rhc
beta = 1e-3
[rhc]
T = 1.25
delta = 0.5
";

pub const EXAMPLE3: &str = "\
# large initial error under periodic forcing
[model]
forcing = periodic
[actuators]
m = 3
[feedback]
lambda = 175
cu = e^3.5
[initial]
yhat0 = bilinear
y0 = linear
[time]
T_inf = 10
[run]
controller = saturated
";

pub const EXAMPLE4: &str = "\
# unconstrained feedback, large initial error
[model]
forcing = periodic
[actuators]
m = 4
[feedback]
lambda = 100
cu = inf
[initial]
yhat0 = bilinear
y0 = linear
[time]
T_inf = 10
[run]
controller = saturated
";

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "example1" => Some(EXAMPLE1),
        "example2" => Some(EXAMPLE2),
        "example3" => Some(EXAMPLE3),
        "example4" => Some(EXAMPLE4),
        _ => None,
    }
}

pub fn preset_config(name: &str) -> Option<ScenarioConfig> {
    preset(name).map(|t| ScenarioConfig::parse(t).expect("presets are valid"))
}

/// Assembles the discrete system. States are not kept along runs (only the
/// scalar samples), so the storage stride is effectively infinite.
pub fn build_system(cfg: &ScenarioConfig) -> Result<ControlledSystem, Error> {
    let domain = RectangleDomain::new(cfg.lx, cfg.ly)?;
    let mesh = build_mesh(cfg.nx, cfg.ny, domain)?;
    let params = SchloeglParams::new(cfg.nu, cfg.zeta)?;
    let grid = build_actuator_grid(cfg.m, cfg.r, domain)?;
    let forcing = match cfg.forcing {
        Forcing::Zero => ForcingSpec::Zero,
        Forcing::Periodic => ForcingSpec::PeriodicIndicator,
    };
    ControlledSystem::new(
        mesh,
        params,
        grid,
        forcing,
        IntegratorConfig::new(cfg.k).with_stride(usize::MAX),
    )
}

pub fn initial_fields(cfg: &ScenarioConfig, system: &ControlledSystem) -> (NodalField, NodalField) {
    let mesh = system.mesh();
    (
        mesh.interpolate(|x| cfg.y0.eval(cfg.zeta, x)),
        mesh.interpolate(|x| cfg.yhat0.eval(cfg.zeta, x)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// The state blew up; everything before the failure is kept.
    CompletedUnstable,
    Crashed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::CompletedUnstable => "completed-unstable",
            RunStatus::Crashed => "crashed",
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub err_l2: f64,
    pub u_norm: f64,
    pub j_running: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub status: RunStatus,
    pub controller: Controller,
    pub final_time: f64,
    pub initial_err_l2: f64,
    pub final_err_l2: f64,
    pub decay: Option<DecayFit>,
    pub j_total: f64,
    pub j_tracking: f64,
    pub j_control: f64,
    pub windows: usize,
    pub iterations_total: usize,
    pub iterations_max: usize,
    pub all_converged: bool,
    pub blowup_time: Option<f64>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn mu_est(&self) -> f64 {
        self.decay.as_ref().map_or(f64::NAN, |d| d.mu)
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("status", self.status.as_str().into());
        kv("controller", self.controller.to_string());
        kv("final_time", format!("{:.16e}", self.final_time));
        kv("initial_err_l2", format!("{:.16e}", self.initial_err_l2));
        kv("final_err_l2", format!("{:.16e}", self.final_err_l2));
        kv("mu_est", format!("{:.16e}", self.mu_est()));
        if let Some(d) = &self.decay {
            kv("mu_fit_window", format!("{}..{}", d.window.0, d.window.1));
            kv("mu_fit_residual", format!("{:.6e}", d.residual));
        }
        kv("J_total", format!("{:.16e}", self.j_total));
        kv("J_tracking", format!("{:.16e}", self.j_tracking));
        kv("J_control", format!("{:.16e}", self.j_control));
        kv("windows", self.windows.to_string());
        kv("iterations_total", self.iterations_total.to_string());
        kv("iterations_max", self.iterations_max.to_string());
        kv("all_converged", self.all_converged.to_string());
        if let Some(t) = self.blowup_time {
            kv("blowup_time", format!("{t:.6}"));
        }
        if let Some(e) = &self.error {
            kv("error", e.replace('\n', " "));
        }
        kv("wall_time_s", format!("{:.3}", self.wall_time_s));
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub snapshot: String,
    /// Every time level of the run.
    pub rows: Vec<SeriesRow>,
    /// Rows written to the CSV: every `stride`-th level and the last one.
    pub stride: usize,
    pub windows: Vec<WindowReport>,
    pub summary: Summary,
}

pub const CSV_HEADER: &str = "t,err_l2,log_err_l2,u_norm,J_running";

impl RunArtifact {
    pub fn csv(&self) -> String {
        let mut s = String::with_capacity(96 * (self.rows.len() / self.stride + 2));
        s.push_str(CSV_HEADER);
        s.push('\n');
        let last = self.rows.len().saturating_sub(1);
        for (i, r) in self.rows.iter().enumerate() {
            if i % self.stride != 0 && i != last {
                continue;
            }
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t,
                r.err_l2,
                r.err_l2.ln(),
                r.u_norm,
                r.j_running
            );
        }
        s
    }

    pub fn windows_csv(&self) -> String {
        let mut s = String::from("t0,iterations,converged,initial_cost,optimal_cost\n");
        for w in &self.windows {
            let _ = writeln!(
                s,
                "{:.16e},{},{},{:.16e},{:.16e}",
                w.start_time, w.iterations, w.converged, w.initial_cost, w.optimal_cost
            );
        }
        s
    }

    /// Writes `config.txt`, `series.csv`, `summary.txt` and, for receding
    /// horizon runs, `windows.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), &self.snapshot)?;
        fs::write(dir.join("series.csv"), self.csv())?;
        fs::write(dir.join("summary.txt"), self.summary.to_text())?;
        if !self.windows.is_empty() {
            fs::write(dir.join("windows.csv"), self.windows_csv())?;
        }
        Ok(())
    }
}

fn rows_of(record: &TrajectoryRecord) -> Vec<SeriesRow> {
    record
        .samples
        .iter()
        .map(|s| SeriesRow {
            t: s.time,
            err_l2: s.error_l2,
            u_norm: s.control_norm,
            j_running: s.running_cost,
        })
        .collect()
}

/// Tracking part of the cost, trapezoid rule over the logged error norms.
pub fn tracking_cost(rows: &[SeriesRow], dt: f64) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * dt * (w[0].err_l2 * w[0].err_l2 + w[1].err_l2 * w[1].err_l2))
        .sum()
}

/// Runs `cfg` as configured: the target from `yhat0` is computed alongside
/// the plant, which runs free, under the saturated feedback, or under the
/// receding-horizon controller.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifact, ConfigError> {
    cfg.validate()?;
    let started = Instant::now();
    let system = build_system(cfg).map_err(|e| ConfigError::general(e.to_string()))?;
    let (y0, yhat0) = initial_fields(cfg, &system);
    let sat = SaturationConfig::new(cfg.cu, cfg.norm).map_err(|e| ConfigError::general(e.to_string()))?;

    let mut record = TrajectoryRecord::default();
    let mut windows = Vec::new();
    let outcome: Result<Option<f64>, Error> = match cfg.controller {
        Controller::None | Controller::Saturated => {
            let law = if cfg.controller == Controller::None {
                FeedbackLaw::new(0.0, SaturationConfig::unconstrained())
            } else {
                FeedbackLaw::new(cfg.lambda, sat)
            }
            .map_err(|e| ConfigError::general(e.to_string()))?;
            closed_loop_simulate_into(&system, &y0, &yhat0, &law, cfg.t_inf, cfg.beta, &mut record)
                .map(|_| None)
        }
        Controller::Rhc => {
            let mut rc = RhcConfig::new(cfg.rhc.delta, cfg.rhc.horizon, cfg.t_inf, cfg.beta, sat);
            rc.initial_gain = cfg.lambda;
            rc.warm_start = cfg.rhc.warm_start;
            rc.solver = BbOptions {
                tol: cfg.rhc.tol,
                max_iterations: cfg.rhc.j_max,
                ..BbOptions::default()
            };
            run_rhc_with(&system, &y0, &yhat0, &rc, |w| windows.push(*w)).map(|res| {
                record = res.record;
                Some(res.total_cost)
            })
        }
    };

    let (status, blowup_time, error) = match &outcome {
        Ok(_) => (RunStatus::Completed, None, None),
        Err(Error::BlowUp { time }) => (RunStatus::CompletedUnstable, Some(*time), Some(outcome.as_ref().unwrap_err().to_string())),
        Err(e) => (RunStatus::Crashed, None, Some(e.to_string())),
    };
    let rows = rows_of(&record);
    let dt = system.dt();
    let j_total = match outcome {
        Ok(Some(total)) => total,
        _ => rows.last().map_or(0.0, |r| r.j_running),
    };
    let j_tracking = tracking_cost(&rows, dt);
    let decay = fit_decay_rate(
        &rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.err_l2).collect::<Vec<_>>(),
    )
    .ok();
    let summary = Summary {
        status,
        controller: cfg.controller,
        final_time: rows.last().map_or(0.0, |r| r.t),
        initial_err_l2: rows.first().map_or(f64::NAN, |r| r.err_l2),
        final_err_l2: rows.last().map_or(f64::NAN, |r| r.err_l2),
        decay,
        j_total,
        j_tracking,
        j_control: j_total - j_tracking,
        windows: windows.len(),
        iterations_total: windows.iter().map(|w| w.iterations).sum(),
        iterations_max: windows.iter().map(|w| w.iterations).max().unwrap_or(0),
        all_converged: windows.iter().all(|w| w.converged),
        blowup_time,
        error,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunArtifact {
        snapshot: cfg.snapshot(),
        rows,
        stride: cfg.stride,
        windows,
        summary,
    })
}
