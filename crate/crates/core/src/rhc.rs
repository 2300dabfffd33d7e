//! Receding-horizon control: solve the window problem on `[t₀, t₀ + T]`,
//! apply its first `δ` to the plant, shift `t₀` by `δ`, repeat.

use alloc::vec::Vec;

use crate::dynamics::{steps_for, CostAccumulator, Sample, TargetSource, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::feedback::{closed_loop_steps, FeedbackLaw, SaturationConfig};
use crate::fem::NodalField;
use crate::math;
use crate::ocp::{bb_projected_gradient, BbOptions, DiscreteControl, OcpProblem};
use crate::ControlledSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhcConfig {
    /// Sampling time `δ`.
    pub delta: f64,
    /// Prediction horizon `T > δ`.
    pub horizon: f64,
    /// Total simulated time `T_∞`, a multiple of `δ`.
    pub t_inf: f64,
    pub beta: f64,
    pub saturation: SaturationConfig,
    /// Gain of the saturated feedback whose controls seed the window solves.
    pub initial_gain: f64,
    /// Seed windows after the first with the previous solution shifted by
    /// `δ` instead of the feedback controls.
    pub warm_start: bool,
    pub solver: BbOptions,
}

impl RhcConfig {
    pub fn new(delta: f64, horizon: f64, t_inf: f64, beta: f64, saturation: SaturationConfig) -> Self {
        RhcConfig {
            delta,
            horizon,
            t_inf,
            beta,
            saturation,
            initial_gain: 175.0,
            warm_start: false,
            solver: BbOptions::default(),
        }
    }

    fn validate(&self, dt: f64) -> Result<(usize, usize, usize)> {
        if !(self.horizon > self.delta && self.delta > 0.0) {
            return Err(Error::invalid("need prediction horizon > sampling time > 0"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("control cost weight must be nonnegative"));
        }
        let nd = steps_for(self.delta, dt)?;
        let nt = steps_for(self.horizon, dt)?;
        let ninf = steps_for(self.t_inf, dt)?;
        if ninf % nd != 0 {
            return Err(Error::invalid("total time is not a multiple of the sampling time"));
        }
        Ok((nd, nt, ninf))
    }
}

/// Solver statistics of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReport {
    pub start_time: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub optimal_cost: f64,
}

#[derive(Debug, Clone)]
pub struct RhcResult {
    /// Plant trajectory under the receding-horizon control; `controls`
    /// holds the applied `u_rh` step by step.
    pub record: TrajectoryRecord,
    /// `J_{T_∞}` with the same quadrature as the window problems.
    pub total_cost: f64,
    pub windows: Vec<WindowReport>,
}

impl RhcResult {
    pub fn all_converged(&self) -> bool {
        self.windows.iter().all(|w| w.converged)
    }

    pub fn total_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations).sum()
    }
}

/// Runs the receding-horizon loop from `y0`, tracking the free trajectory from `yhat0`.
pub fn run_rhc(
    system: &ControlledSystem,
    y0: &[f64],
    yhat0: &[f64],
    cfg: &RhcConfig,
) -> Result<RhcResult> {
    run_rhc_with(system, y0, yhat0, cfg, |_| {})
}

/// As [`run_rhc`], calling `progress` after every window.
pub fn run_rhc_with(
    system: &ControlledSystem,
    y0: &[f64],
    yhat0: &[f64],
    cfg: &RhcConfig,
    mut progress: impl FnMut(&WindowReport),
) -> Result<RhcResult> {
    Error::check_len(system.n_nodes(), y0.len())?;
    let dt = system.dt();
    let (nd, nt, ninf) = cfg.validate(dt)?;
    let stride = system.config().stride;
    let norm = |u: &[f64]| cfg.saturation.norm.eval(u);
    let mut source = TargetSource::new(system, yhat0)?;
    let mut record = TrajectoryRecord {
        dt,
        ..Default::default()
    };
    let mut windows = Vec::new();
    let mut cost = CostAccumulator::default();
    let mut cur = y0.to_vec();
    let mut prev: Option<Vec<f64>> = None;
    let mut guess: Option<DiscreteControl> = None;
    let mut start = 0;

    while start < ninf {
        source.release_before(start);
        let prob = OcpProblem::from_source(
            system,
            &mut source,
            start,
            nt,
            cur.clone(),
            prev.clone(),
            cfg.beta,
            cfg.saturation,
        )?;
        let init = match guess.take() {
            Some(g) => g,
            None => seed_control(&prob, cfg)?,
        };
        let sol = bb_projected_gradient(&prob, &init, &cfg.solver)?;
        let report = WindowReport {
            start_time: system.time_of(start),
            iterations: sol.iterations,
            converged: sol.converged,
            initial_cost: sol.initial_cost,
            optimal_cost: sol.cost,
        };
        progress(&report);
        windows.push(report);

        for j in 0..nd {
            let n = start + j;
            let u = sol.control.column(j);
            log_level(system, &mut record, &mut cost, n, &cur, &prob.target()[j], stride, Some(norm(u)));
            cost.push_control(dt, cfg.beta, math::dot(u, u));
            let next = system.advance(n, &cur, prev.as_deref(), Some(u))?;
            record.controls.push(u.to_vec().into());
            prev = Some(core::mem::replace(&mut cur, next));
        }
        if cfg.warm_start {
            guess = Some(sol.control.shifted(nd));
        }
        start += nd;
    }
    let yhat = source.get(ninf)?.to_vec();
    log_level(system, &mut record, &mut cost, ninf, &cur, &yhat, 1, None);
    Ok(RhcResult {
        record,
        total_cost: cost.total(),
        windows,
    })
}

/// Controls of the saturated feedback run over the window.
fn seed_control(prob: &OcpProblem<'_>, cfg: &RhcConfig) -> Result<DiscreteControl> {
    let law = FeedbackLaw::new(cfg.initial_gain, cfg.saturation)?;
    let start = prob.start();
    let target = prob.target();
    let mut levels = |n: usize| Ok(target[n - start].clone());
    let mut rec = TrajectoryRecord::default();
    closed_loop_steps(
        prob.system(),
        &mut levels,
        start,
        prob.y_init(),
        prob.y_hist(),
        &law,
        prob.n_steps(),
        prob.beta(),
        &mut rec,
    )?;
    DiscreteControl::from_columns(prob.system().n_actuators(), &rec.controls)
}

#[allow(clippy::too_many_arguments)]
fn log_level(
    system: &ControlledSystem,
    record: &mut TrajectoryRecord,
    cost: &mut CostAccumulator,
    n: usize,
    y: &[f64],
    yhat: &[f64],
    stride: usize,
    u_norm: Option<f64>,
) {
    let err_sq = system.l2_dist_sq(y, yhat);
    let running = cost.push_level(system.dt(), err_sq);
    record.samples.push(Sample {
        step: n,
        time: system.time_of(n),
        state_l2: math::sqrt(system.l2_norm_sq(y)),
        error_l2: math::sqrt(err_sq),
        control_norm: u_norm.unwrap_or(0.0),
        running_cost: running,
    });
    if n.is_multiple_of(stride) {
        record.states.push((n, NodalField(y.to_vec())));
    }
}
