//! The semi-discrete Schlögl model `ẏ - νΔy + f(y) = h + U⋄u` with
//! homogeneous Neumann data, and its Crank–Nicolson/Adams–Bashforth stepper.
//!
//! Diffusion is treated by Crank–Nicolson; the cubic reaction by second-order
//! Adams–Bashforth (nodal evaluation, consistent mass); forcing and control are
//! lagged to `tⁿ`. One step of the scheme solves
//!
//! ```text
//! (M/k + K/2) yⁿ⁺¹ = M (yⁿ/k - 3/2 f(yⁿ) + 1/2 f(yⁿ⁻¹) + hⁿ) - K yⁿ/2 + B uⁿ
//! ```
//!
//! and a run starts with a single semi-implicit Euler step, since the
//! multistep formula needs two levels.

use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::actuators::{discretize_actuators, ActuatorGrid, ControlVector, CouplingMatrix};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, NodalField, StructuredTriangulation};
use crate::math;
use crate::sparse::{BandedCholesky, CsrMatrix};

/// States whose max-norm exceeds this are reported as a blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

/// Diffusion coefficient and the three roots of the cubic reaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchloeglParams {
    nu: f64,
    roots: [f64; 3],
}

impl SchloeglParams {
    pub fn new(nu: f64, roots: [f64; 3]) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid("diffusion coefficient must be positive"));
        }
        if roots.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("reaction roots must be finite"));
        }
        Ok(SchloeglParams { nu, roots })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn roots(&self) -> [f64; 3] {
        self.roots
    }

    /// `(ξ₂, ξ₁, ξ₀) = (ζ₁+ζ₂+ζ₃, -ζ₁ζ₂-ζ₁ζ₃-ζ₂ζ₃, ζ₁ζ₂ζ₃)`, so that
    /// `f(w) = w³ - ξ₂w² - ξ₁w - ξ₀`.
    pub fn xi(&self) -> [f64; 3] {
        let [a, b, c] = self.roots;
        [a + b + c, -(a * b + a * c + b * c), a * b * c]
    }

    /// `f(w) = (w - ζ₁)(w - ζ₂)(w - ζ₃)`
    #[inline]
    pub fn reaction(&self, w: f64) -> f64 {
        let [a, b, c] = self.roots;
        (w - a) * (w - b) * (w - c)
    }

    #[inline]
    pub fn reaction_derivative(&self, w: f64) -> f64 {
        let [a, b, c] = self.roots;
        (w - b) * (w - c) + (w - a) * (w - c) + (w - a) * (w - b)
    }
}

impl Default for SchloeglParams {
    fn default() -> Self {
        SchloeglParams {
            nu: 0.1,
            roots: [-1.0, 0.0, 2.0],
        }
    }
}

/// Nodewise `f(w)`.
pub fn cubic_reaction(w: &[f64], params: &SchloeglParams) -> Vec<f64> {
    w.iter().map(|&x| params.reaction(x)).collect()
}

/// Nodewise `f^ŷ(z) = z³ + (3ŷ - ξ₂)z² + (3ŷ² - 2ξ₂ŷ - ξ₁)z`, which equals
/// `f(z + ŷ) - f(ŷ)` for the product form of `f`.
pub fn shifted_reaction(z: &[f64], yhat: &[f64], params: &SchloeglParams) -> Result<Vec<f64>> {
    Error::check_len(z.len(), yhat.len())?;
    let [x2, x1, _] = params.xi();
    Ok(z.iter()
        .zip(yhat)
        .map(|(&z, &y)| z * z * z + (3.0 * y - x2) * z * z + (3.0 * y * y - 2.0 * x2 * y - x1) * z)
        .collect())
}

/// Nodewise `(f^ŷ)'(z) = 3z² + 2(3ŷ - ξ₂)z + (3ŷ² - 2ξ₂ŷ - ξ₁)`.
pub fn shifted_reaction_derivative(
    z: &[f64],
    yhat: &[f64],
    params: &SchloeglParams,
) -> Result<Vec<f64>> {
    Error::check_len(z.len(), yhat.len())?;
    let [x2, x1, _] = params.xi();
    Ok(z.iter()
        .zip(yhat)
        .map(|(&z, &y)| 3.0 * z * z + 2.0 * (3.0 * y - x2) * z + (3.0 * y * y - 2.0 * x2 * y - x1))
        .collect())
}

/// External forcing `h(t, x)`.
#[derive(Clone, Default)]
pub enum ForcingSpec {
    #[default]
    Zero,
    /// `½ · 1{|sin 6t| > ½}(t) · 1{|x|² < ½}(x)`
    PeriodicIndicator,
    Custom(Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>),
}

impl fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingSpec::Zero => f.write_str("Zero"),
            ForcingSpec::PeriodicIndicator => f.write_str("PeriodicIndicator"),
            ForcingSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

fn periodic_switch(t: f64) -> bool {
    math::abs(math::sin(6.0 * t)) > 0.5
}

fn periodic_region(x: [f64; 2]) -> bool {
    x[0] * x[0] + x[1] * x[1] < 0.5
}

/// Nodal interpolant of `h(t, ·)`.
pub fn eval_forcing(spec: &ForcingSpec, t: f64, mesh: &StructuredTriangulation) -> NodalField {
    match spec {
        ForcingSpec::Zero => mesh.zeros(),
        ForcingSpec::PeriodicIndicator => {
            let on = periodic_switch(t);
            mesh.interpolate(|x| if on && periodic_region(x) { 0.5 } else { 0.0 })
        }
        ForcingSpec::Custom(h) => mesh.interpolate(|x| h(t, x)),
    }
}

/// How the first step (which has no previous level) is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartupMethod {
    /// Implicit diffusion, explicit reaction: `(M/k + K) y¹ = M(y⁰/k - f(y⁰) + h⁰) + B u⁰`.
    #[default]
    SemiImplicitEuler,
    /// Crank–Nicolson diffusion with an explicit Euler reaction.
    CrankNicolsonEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Keep every `stride`-th state in a [`TrajectoryRecord`].
    pub stride: usize,
    pub startup: StartupMethod,
}

impl IntegratorConfig {
    pub fn new(dt: f64) -> Self {
        IntegratorConfig {
            dt,
            stride: 10,
            startup: StartupMethod::default(),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Number of steps covering `horizon`, which must be a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        steps_for(horizon, self.dt)
    }
}

pub(crate) fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let n = math::round(horizon / dt);
    if math::abs(n * dt - horizon) > 1e-9 * horizon.max(1.0) {
        return Err(Error::invalid("horizon is not a multiple of the time step"));
    }
    Ok(n as usize)
}

/// Scalar diagnostics at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub time: f64,
    pub state_l2: f64,
    /// `‖y - ŷ‖_{L²}`; for runs without a target this is the state norm.
    pub error_l2: f64,
    /// Norm of the control applied on `[tⁿ, tⁿ⁺¹)` (zero at the last level).
    pub control_norm: f64,
    /// `∫₀ᵗ ‖y - ŷ‖² + β ∫₀ᵗ |u|²` up to this level.
    pub running_cost: f64,
}

/// Time-indexed run output. Diagnostics are kept for every level, full
/// states only every `stride` levels (and always the last one).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub states: Vec<(usize, NodalField)>,
    pub controls: Vec<ControlVector>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.error_l2).collect()
    }

    pub fn final_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn state_at(&self, step: usize) -> Option<&NodalField> {
        self.states.iter().find(|(s, _)| *s == step).map(|(_, y)| y)
    }

    pub fn total_cost(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.running_cost)
    }
}

/// Running trapezoidal cost accumulator on a uniform grid.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CostAccumulator {
    total: f64,
    last_err_sq: Option<f64>,
}

impl CostAccumulator {
    /// Adds the state term up to a new level with squared error `err_sq`.
    pub fn push_level(&mut self, dt: f64, err_sq: f64) -> f64 {
        if let Some(prev) = self.last_err_sq {
            self.total += 0.5 * dt * (prev + err_sq);
        }
        self.last_err_sq = Some(err_sq);
        self.total
    }

    /// Adds `β k |u|²` for a control held over one step.
    pub fn push_control(&mut self, dt: f64, beta: f64, u_sq: f64) {
        self.total += beta * dt * u_sq;
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Assembled operators and factorizations for one mesh, actuator grid,
/// parameter set and time step. Immutable once built.
#[derive(Debug, Clone)]
pub struct ControlledSystem {
    mesh: StructuredTriangulation,
    params: SchloeglParams,
    grid: ActuatorGrid,
    forcing: ForcingSpec,
    config: IntegratorConfig,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    coupling: CouplingMatrix,
    cn_factor: BandedCholesky,
    euler_factor: BandedCholesky,
    forcing_region: Vec<f64>,
}

impl ControlledSystem {
    pub fn new(
        mesh: StructuredTriangulation,
        params: SchloeglParams,
        grid: ActuatorGrid,
        forcing: ForcingSpec,
        config: IntegratorConfig,
    ) -> Result<Self> {
        let dt = config.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("time step must be positive"));
        }
        if config.stride == 0 {
            return Err(Error::invalid("storage stride must be at least 1"));
        }
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh, params.nu())?;
        let coupling = discretize_actuators(&grid, &mesh);
        let cn_factor = BandedCholesky::factor(&mass.combine(1.0 / dt, &stiffness, 0.5)?)?;
        let euler_factor = BandedCholesky::factor(&mass.combine(1.0 / dt, &stiffness, 1.0)?)?;
        let forcing_region = mesh
            .nodes()
            .iter()
            .map(|&x| if periodic_region(x) { 0.5 } else { 0.0 })
            .collect();
        Ok(ControlledSystem {
            mesh,
            params,
            grid,
            forcing,
            config,
            mass,
            stiffness,
            coupling,
            cn_factor,
            euler_factor,
            forcing_region,
        })
    }

    pub fn mesh(&self) -> &StructuredTriangulation {
        &self.mesh
    }

    pub fn params(&self) -> &SchloeglParams {
        &self.params
    }

    pub fn grid(&self) -> &ActuatorGrid {
        &self.grid
    }

    pub fn forcing(&self) -> &ForcingSpec {
        &self.forcing
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_actuators(&self) -> usize {
        self.coupling.n_actuators()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn time_of(&self, step: usize) -> f64 {
        step as f64 * self.config.dt
    }

    pub fn l2_norm_sq(&self, v: &[f64]) -> f64 {
        self.mass.inner(v, v)
    }

    /// `‖a - b‖²_{L²}`
    pub fn l2_dist_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.mass.inner(&d, &d)
    }

    /// Adds the nodal forcing `hⁿ` to `w`.
    fn add_forcing(&self, step: usize, w: &mut [f64]) {
        let t = self.time_of(step);
        match &self.forcing {
            ForcingSpec::Zero => {}
            ForcingSpec::PeriodicIndicator => {
                if periodic_switch(t) {
                    for (wi, h) in w.iter_mut().zip(&self.forcing_region) {
                        *wi += h;
                    }
                }
            }
            ForcingSpec::Custom(h) => {
                for (wi, x) in w.iter_mut().zip(self.mesh.nodes()) {
                    *wi += h(t, *x);
                }
            }
        }
    }

    /// Whether the step leaving level `prev.is_none()` uses the Euler operator.
    pub(crate) fn startup_uses_euler_operator(&self) -> bool {
        self.config.startup == StartupMethod::SemiImplicitEuler
    }

    pub(crate) fn lhs_factor(&self, has_history: bool) -> &BandedCholesky {
        if has_history || !self.startup_uses_euler_operator() {
            &self.cn_factor
        } else {
            &self.euler_factor
        }
    }

    /// Advances from level `step` (state `y`, previous level `y_prev` if any)
    /// to level `step + 1` with control `u` held over the step.
    pub fn advance(
        &self,
        step: usize,
        y: &[f64],
        y_prev: Option<&[f64]>,
        u: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        Error::check_len(self.n_nodes(), y.len())?;
        if let Some(u) = u {
            Error::check_len(self.n_actuators(), u.len())?;
        }
        let inv_dt = 1.0 / self.config.dt;
        let p = &self.params;
        let mut w: Vec<f64> = match y_prev {
            Some(yp) => {
                Error::check_len(self.n_nodes(), yp.len())?;
                y.iter()
                    .zip(yp)
                    .map(|(&a, &b)| a * inv_dt - 1.5 * p.reaction(a) + 0.5 * p.reaction(b))
                    .collect()
            }
            None => y.iter().map(|&a| a * inv_dt - p.reaction(a)).collect(),
        };
        self.add_forcing(step, &mut w);
        let mut rhs = self.mass.apply(&w);
        if y_prev.is_some() || !self.startup_uses_euler_operator() {
            self.stiffness.mul_vec_add(-0.5, y, &mut rhs);
        }
        if let Some(u) = u {
            self.coupling.apply_add(u, &mut rhs);
        }
        self.lhs_factor(y_prev.is_some()).solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !(math::abs(*v) <= BLOW_UP_THRESHOLD)) {
            return Err(Error::BlowUp {
                time: self.time_of(step + 1),
            });
        }
        Ok(rhs)
    }
}

/// The free-dynamics target trajectory `ŷ`, produced on demand on the
/// system's time grid. Only a sliding window of levels is kept in memory;
/// the values are bit-identical to a precomputed run.
#[derive(Debug, Clone)]
pub struct TargetSource<'a> {
    system: &'a ControlledSystem,
    first: usize,
    states: VecDeque<Vec<f64>>,
}

impl<'a> TargetSource<'a> {
    pub fn new(system: &'a ControlledSystem, yhat0: &[f64]) -> Result<Self> {
        Error::check_len(system.n_nodes(), yhat0.len())?;
        let mut states = VecDeque::new();
        states.push_back(yhat0.to_vec());
        Ok(TargetSource {
            system,
            first: 0,
            states,
        })
    }

    fn last_step(&self) -> usize {
        self.first + self.states.len() - 1
    }

    /// `ŷ` at level `step`; levels before [`release_before`](Self::release_before) are gone.
    pub fn get(&mut self, step: usize) -> Result<&[f64]> {
        if step < self.first {
            return Err(Error::invalid("target level already released"));
        }
        while self.last_step() < step {
            let n = self.last_step();
            let len = self.states.len();
            let next = if n == 0 {
                self.system.advance(0, &self.states[0], None, None)?
            } else {
                self.system
                    .advance(n, &self.states[len - 1], Some(&self.states[len - 2]), None)?
            };
            self.states.push_back(next);
        }
        Ok(&self.states[step - self.first])
    }

    /// Drops stored levels before `step`, always keeping the last two.
    pub fn release_before(&mut self, step: usize) {
        while self.first < step && self.states.len() > 2 {
            self.states.pop_front();
            self.first += 1;
        }
    }
}

/// Uncontrolled run from `y0` over `horizon`.
pub fn simulate_free(system: &ControlledSystem, y0: &[f64], horizon: f64) -> Result<TrajectoryRecord> {
    Error::check_len(system.n_nodes(), y0.len())?;
    let n_steps = system.config().steps_for(horizon)?;
    let dt = system.dt();
    let stride = system.config().stride;
    let mut record = TrajectoryRecord {
        dt,
        ..Default::default()
    };
    let mut cost = CostAccumulator::default();
    let mut prev: Option<Vec<f64>> = None;
    let mut cur = y0.to_vec();
    for n in 0..=n_steps {
        let norm_sq = system.l2_norm_sq(&cur);
        let norm = math::sqrt(norm_sq);
        let running = cost.push_level(dt, norm_sq);
        record.samples.push(Sample {
            step: n,
            time: system.time_of(n),
            state_l2: norm,
            error_l2: norm,
            control_norm: 0.0,
            running_cost: running,
        });
        if n % stride == 0 || n == n_steps {
            record.states.push((n, NodalField(cur.clone())));
        }
        if n == n_steps {
            break;
        }
        let next = system.advance(n, &cur, prev.as_deref(), None)?;
        prev = Some(core::mem::replace(&mut cur, next));
    }
    Ok(record)
}
