//! Radial saturation and the saturated explicit feedback
//! `u = 𝔓_{C_u}(-λ (U⋄)^{-1} P z)` with `z = y - ŷ`.

use alloc::vec::Vec;

use crate::actuators::{project_onto_actuator_span, span_norm_sq, ControlNorm, ControlVector, CouplingMatrix};
use crate::dynamics::{CostAccumulator, Sample, TargetSource};
use crate::error::{Error, Result};
use crate::fem::NodalField;
use crate::math;
use crate::ControlledSystem;

/// Magnitude constraint `⦀u⦀ ≤ C_u`; `bound = f64::INFINITY` means unconstrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationConfig {
    pub bound: f64,
    pub norm: ControlNorm,
}

impl SaturationConfig {
    pub fn new(bound: f64, norm: ControlNorm) -> Result<Self> {
        if !(bound >= 0.0) {
            return Err(Error::invalid("control bound must be nonnegative"));
        }
        Ok(SaturationConfig { bound, norm })
    }

    pub fn unconstrained() -> Self {
        SaturationConfig {
            bound: f64::INFINITY,
            norm: ControlNorm::Euclidean,
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        self.bound == f64::INFINITY
    }

    /// Whether `v` satisfies the bound up to round-off.
    pub fn admits(&self, v: &[f64]) -> bool {
        self.norm.eval(v) <= self.bound + 1e-12 * self.bound.max(1.0)
    }
}

/// `𝔓(v) = min{1, C_u/⦀v⦀} v`. Vectors inside the ball (including the
/// boundary) are returned unchanged.
pub fn radial_project(v: &[f64], sat: &SaturationConfig) -> ControlVector {
    let mut out = v.to_vec();
    radial_project_in_place(&mut out, sat);
    ControlVector(out)
}

pub(crate) fn radial_project_in_place(v: &mut [f64], sat: &SaturationConfig) {
    let n = sat.norm.eval(v);
    if n <= sat.bound {
        return;
    }
    if sat.bound == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let s = sat.bound / n;
    v.iter_mut().for_each(|x| *x *= s);
}

/// Gain and saturation of the explicit feedback law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackLaw {
    pub lambda: f64,
    pub saturation: SaturationConfig,
}

impl FeedbackLaw {
    pub fn new(lambda: f64, saturation: SaturationConfig) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("feedback gain must be finite and nonnegative"));
        }
        Ok(FeedbackLaw { lambda, saturation })
    }
}

/// `u = 𝔓_{C_u}(-λ c)` where `c` are the actuator-span coefficients of `z`.
pub fn saturated_feedback(z: &[f64], law: &FeedbackLaw, b: &CouplingMatrix) -> Result<ControlVector> {
    let mut c = project_onto_actuator_span(z, b)?;
    c.iter_mut().for_each(|x| *x *= -law.lambda);
    radial_project_in_place(&mut c, &law.saturation);
    Ok(c)
}

/// `(U⋄u, z)_{L²} = uᵀ Bᵀ z`.
pub fn feedback_dissipation(z: &[f64], u: &[f64], b: &CouplingMatrix) -> Result<f64> {
    Error::check_len(b.n_nodes(), z.len())?;
    Error::check_len(b.n_actuators(), u.len())?;
    Ok(math::dot(u, &b.transpose_apply(z)))
}

/// Closed form of [`feedback_dissipation`] for the saturated law:
/// `-λ min{1, C_u/⦀v⦀} ‖P z‖²` with `v = -λ c`.
pub fn dissipation_closed_form(z: &[f64], law: &FeedbackLaw, b: &CouplingMatrix) -> Result<f64> {
    let c = project_onto_actuator_span(z, b)?;
    let pz_sq = span_norm_sq(&c, b);
    let vn = law.lambda * law.saturation.norm.eval(&c);
    let factor = if vn <= law.saturation.bound {
        1.0
    } else {
        law.saturation.bound / vn
    };
    Ok(-law.lambda * factor * pz_sq)
}

/// Runs `n_steps` steps of the saturated closed loop from level `start`
/// (state `y`, previous level `y_prev`), tracking `target`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn closed_loop_steps(
    system: &ControlledSystem,
    target: &mut dyn FnMut(usize) -> Result<Vec<f64>>,
    start: usize,
    y: &[f64],
    y_prev: Option<&[f64]>,
    law: &FeedbackLaw,
    n_steps: usize,
    beta: f64,
    record: &mut crate::dynamics::TrajectoryRecord,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let dt = system.dt();
    let stride = system.config().stride;
    let mut cost = CostAccumulator::default();
    let mut cur = y.to_vec();
    let mut prev = y_prev.map(|p| p.to_vec());
    let last = start + n_steps;
    for n in start..=last {
        let yhat = target(n)?;
        let z: Vec<f64> = cur.iter().zip(&yhat).map(|(a, b)| a - b).collect();
        let err_sq = system.l2_norm_sq(&z);
        let running = cost.push_level(dt, err_sq);
        let u = if n < last {
            let u = saturated_feedback(&z, law, system.coupling())?;
            if !law.saturation.admits(&u) {
                return Err(Error::invalid("saturated control exceeds its bound"));
            }
            Some(u)
        } else {
            None
        };
        record.samples.push(Sample {
            step: n,
            time: system.time_of(n),
            state_l2: math::sqrt(system.l2_norm_sq(&cur)),
            error_l2: math::sqrt(err_sq),
            control_norm: u.as_ref().map_or(0.0, |u| u.norm(law.saturation.norm)),
            running_cost: running,
        });
        if (n - start).is_multiple_of(stride) || n == last {
            record.states.push((n, NodalField(cur.clone())));
        }
        let Some(u) = u else { break };
        // a sample's running cost excludes the control on [tⁿ, tⁿ⁺¹)
        cost.push_control(dt, beta, math::dot(&u, &u));
        let next = system.advance(n, &cur, prev.as_deref(), Some(&u))?;
        record.controls.push(u);
        prev = Some(core::mem::replace(&mut cur, next));
    }
    Ok((cur, prev))
}

/// Closed-loop run of the saturated feedback from `y0` while tracking the
/// free trajectory issued from `yhat0`. `beta` weighs `|u|²` in the running cost.
pub fn closed_loop_simulate(
    system: &ControlledSystem,
    y0: &[f64],
    yhat0: &[f64],
    law: &FeedbackLaw,
    horizon: f64,
    beta: f64,
) -> Result<crate::dynamics::TrajectoryRecord> {
    let mut record = crate::dynamics::TrajectoryRecord::default();
    closed_loop_simulate_into(system, y0, yhat0, law, horizon, beta, &mut record)?;
    Ok(record)
}

/// As [`closed_loop_simulate`], filling `record` as it goes, so a run that
/// blows up keeps everything logged before the failure.
pub fn closed_loop_simulate_into(
    system: &ControlledSystem,
    y0: &[f64],
    yhat0: &[f64],
    law: &FeedbackLaw,
    horizon: f64,
    beta: f64,
    record: &mut crate::dynamics::TrajectoryRecord,
) -> Result<()> {
    Error::check_len(system.n_nodes(), y0.len())?;
    let n_steps = system.config().steps_for(horizon)?;
    let mut target = TargetSource::new(system, yhat0)?;
    record.dt = system.dt();
    let mut levels = |n: usize| {
        target.release_before(n);
        target.get(n).map(|y| y.to_vec())
    };
    closed_loop_steps(system, &mut levels, 0, y0, None, law, n_steps, beta, record)?;
    Ok(())
}
