//! Finite-horizon tracking problems on one window of the time grid,
//!
//! ```text
//! min J(u) = Σᵢ wᵢ ‖yᵢ - ŷᵢ‖²_{L²} + β k Σₙ |uₙ|²   s.t. ⦀uₙ⦀ ≤ C_u,
//! ```
//!
//! with trapezoid weights `wᵢ` and controls constant on each step. Gradients
//! are exact for the discrete cost: the adjoint recursion is the transpose of
//! the linearized stepper.

use alloc::vec;
use alloc::vec::Vec;

use crate::actuators::ControlNorm;
use crate::dynamics::TargetSource;
use crate::error::{Error, Result};
use crate::feedback::{radial_project_in_place, SaturationConfig};
use crate::math;
use crate::ControlledSystem;

/// One window problem. Level `0` of the window is level `start` of the
/// system's global time grid (this fixes the forcing phase and whether the
/// first step is the startup step).
#[derive(Debug, Clone)]
pub struct OcpProblem<'a> {
    system: &'a ControlledSystem,
    start: usize,
    n_steps: usize,
    y_init: Vec<f64>,
    y_hist: Option<Vec<f64>>,
    target: Vec<Vec<f64>>,
    beta: f64,
    saturation: SaturationConfig,
}

impl<'a> OcpProblem<'a> {
    /// `target` holds `ŷ` at the `n_steps + 1` window levels. `y_hist` is
    /// the state one level before the window, absent only for `start = 0`.
    pub fn new(
        system: &'a ControlledSystem,
        start: usize,
        y_init: Vec<f64>,
        y_hist: Option<Vec<f64>>,
        target: Vec<Vec<f64>>,
        beta: f64,
        saturation: SaturationConfig,
    ) -> Result<Self> {
        let n = system.n_nodes();
        Error::check_len(n, y_init.len())?;
        if let Some(h) = &y_hist {
            Error::check_len(n, h.len())?;
        } else if start != 0 {
            return Err(Error::invalid("a window after the first needs the previous state"));
        }
        if target.len() < 2 {
            return Err(Error::invalid("window must contain at least one step"));
        }
        for t in &target {
            Error::check_len(n, t.len())?;
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid("control cost weight must be nonnegative"));
        }
        Ok(OcpProblem {
            system,
            start,
            n_steps: target.len() - 1,
            y_init,
            y_hist,
            target,
            beta,
            saturation,
        })
    }

    /// Pulls the window targets `start ..= start + n_steps` from a streamed source.
    #[allow(clippy::too_many_arguments)]
    pub fn from_source(
        system: &'a ControlledSystem,
        source: &mut TargetSource<'_>,
        start: usize,
        n_steps: usize,
        y_init: Vec<f64>,
        y_hist: Option<Vec<f64>>,
        beta: f64,
        saturation: SaturationConfig,
    ) -> Result<Self> {
        let target = (start..=start + n_steps)
            .map(|n| source.get(n).map(|y| y.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        OcpProblem::new(system, start, y_init, y_hist, target, beta, saturation)
    }

    pub fn system(&self) -> &ControlledSystem {
        self.system
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.system.dt()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn saturation(&self) -> &SaturationConfig {
        &self.saturation
    }

    pub fn target(&self) -> &[Vec<f64>] {
        &self.target
    }

    pub fn y_init(&self) -> &[f64] {
        &self.y_init
    }

    pub fn y_hist(&self) -> Option<&[f64]> {
        self.y_hist.as_deref()
    }

    /// Trapezoid weight of window level `i`.
    pub fn quadrature_weight(&self, i: usize) -> f64 {
        let k = self.system.dt();
        if i == 0 || i == self.n_steps {
            0.5 * k
        } else {
            k
        }
    }

    fn has_history(&self, local_step: usize) -> bool {
        local_step > 0 || self.y_hist.is_some()
    }

    pub fn zero_control(&self) -> DiscreteControl {
        DiscreteControl::zeros(self.system.n_actuators(), self.n_steps)
    }
}

/// Controls `u₀ … u_{N-1}`, `uₙ` acting on `[tₙ, tₙ₊₁)`, stored step by step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteControl {
    n_actuators: usize,
    data: Vec<f64>,
}

impl DiscreteControl {
    pub fn zeros(n_actuators: usize, n_steps: usize) -> Self {
        DiscreteControl {
            n_actuators,
            data: vec![0.0; n_actuators * n_steps],
        }
    }

    pub fn from_columns(n_actuators: usize, columns: &[impl AsRef<[f64]>]) -> Result<Self> {
        let mut data = Vec::with_capacity(n_actuators * columns.len());
        for c in columns {
            Error::check_len(n_actuators, c.as_ref().len())?;
            data.extend_from_slice(c.as_ref());
        }
        Ok(DiscreteControl { n_actuators, data })
    }

    pub fn n_actuators(&self) -> usize {
        self.n_actuators
    }

    pub fn n_steps(&self) -> usize {
        self.data.len().checked_div(self.n_actuators).unwrap_or(0)
    }

    pub fn column(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_actuators..(n + 1) * self.n_actuators]
    }

    pub fn column_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.n_actuators..(n + 1) * self.n_actuators]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_actuators.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `k Σₙ uₙ·vₙ`
    pub fn l2_inner(&self, other: &DiscreteControl, dt: f64) -> f64 {
        dt * math::dot(&self.data, &other.data)
    }

    pub fn l2_norm(&self, dt: f64) -> f64 {
        math::sqrt(self.l2_inner(self, dt))
    }

    /// Drops the first `shift` steps and pads the end with the last column.
    pub fn shifted(&self, shift: usize) -> DiscreteControl {
        let n = self.n_steps();
        let mut out = self.clone();
        if n == 0 {
            return out;
        }
        let last = self.column(n - 1).to_vec();
        for j in 0..n {
            let src = if j + shift < n { self.column(j + shift) } else { &last };
            out.column_mut(j).copy_from_slice(src);
        }
        out
    }
}

/// Window states `y₀ … y_N` for one control, with the cost they produce.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub states: Vec<Vec<f64>>,
    pub cost: f64,
    pub tracking_cost: f64,
    pub control_cost: f64,
}

fn check_shape(u: &DiscreteControl, prob: &OcpProblem<'_>) -> Result<()> {
    Error::check_len(prob.system.n_actuators(), u.n_actuators())?;
    Error::check_len(prob.n_steps, u.n_steps())
}

/// Simulates the window under `u` and evaluates `J`.
pub fn evaluate_cost(u: &DiscreteControl, prob: &OcpProblem<'_>) -> Result<ForwardSolution> {
    check_shape(u, prob)?;
    let sys = prob.system;
    let mut states = Vec::with_capacity(prob.n_steps + 1);
    states.push(prob.y_init.clone());
    for j in 0..prob.n_steps {
        let prev = if j == 0 {
            prob.y_hist.as_deref()
        } else {
            Some(states[j - 1].as_slice())
        };
        let next = sys.advance(prob.start + j, &states[j], prev, Some(u.column(j)))?;
        states.push(next);
    }
    let mut tracking = 0.0;
    for (i, (y, yh)) in states.iter().zip(&prob.target).enumerate() {
        tracking += prob.quadrature_weight(i) * sys.l2_dist_sq(y, yh);
    }
    let control = prob.beta * sys.dt() * math::dot(u.as_slice(), u.as_slice());
    Ok(ForwardSolution {
        states,
        cost: tracking + control,
        tracking_cost: tracking,
        control_cost: control,
    })
}

/// Adjoint states `p₀ … p_N` (with `p₀ = 0`) of the discrete stepper for
/// the forward run `forward`.
pub fn solve_adjoint(forward: &ForwardSolution, prob: &OcpProblem<'_>) -> Result<Vec<Vec<f64>>> {
    let n_steps = prob.n_steps;
    Error::check_len(n_steps + 1, forward.states.len())?;
    let sys = prob.system;
    let params = sys.params();
    let mass = sys.mass();
    let stiff = sys.stiffness();
    let inv_dt = 1.0 / sys.dt();
    let nn = sys.n_nodes();
    let mut p = vec![vec![0.0; nn]; n_steps + 1];
    // M p_{i+1} and M p_{i+2}
    let mut mp1 = vec![0.0; nn];
    let mut mp2 = vec![0.0; nn];
    for i in (1..=n_steps).rev() {
        let y = &forward.states[i];
        let yh = &prob.target[i];
        let w2 = 2.0 * prob.quadrature_weight(i);
        let d: Vec<f64> = y.iter().zip(yh).map(|(a, b)| w2 * (a - b)).collect();
        let mut rhs = mass.apply(&d);
        if i < n_steps {
            stiff.mul_vec_add(-0.5, &p[i + 1], &mut rhs);
            for (r, ((yi, m1), m2)) in rhs.iter_mut().zip(y.iter().zip(&mp1).zip(&mp2)) {
                let fp = params.reaction_derivative(*yi);
                *r += m1 * inv_dt - 1.5 * fp * m1 + 0.5 * fp * m2;
            }
        }
        sys.lhs_factor(prob.has_history(i - 1)).solve_in_place(&mut rhs);
        p[i] = rhs;
        core::mem::swap(&mut mp1, &mut mp2);
        mass.mul_vec(&p[i], &mut mp1);
    }
    Ok(p)
}

/// `∂J/∂uₙ = 2βk uₙ + Bᵀ pₙ₊₁` (Euclidean gradient in the step values).
pub fn reduced_gradient(
    u: &DiscreteControl,
    adjoint: &[Vec<f64>],
    prob: &OcpProblem<'_>,
) -> Result<DiscreteControl> {
    check_shape(u, prob)?;
    Error::check_len(prob.n_steps + 1, adjoint.len())?;
    let b = prob.system.coupling();
    let c = 2.0 * prob.beta * prob.system.dt();
    let mut g = u.clone();
    for n in 0..prob.n_steps {
        let btp = b.transpose_apply(&adjoint[n + 1]);
        for (gi, (ui, bi)) in g.column_mut(n).iter_mut().zip(u.column(n).iter().zip(&btp)) {
            *gi = c * ui + bi;
        }
    }
    Ok(g)
}

/// Cost and gradient in one forward/backward sweep.
pub fn cost_and_gradient(
    u: &DiscreteControl,
    prob: &OcpProblem<'_>,
) -> Result<(ForwardSolution, DiscreteControl)> {
    let fwd = evaluate_cost(u, prob)?;
    let p = solve_adjoint(&fwd, prob)?;
    let g = reduced_gradient(u, &p, prob)?;
    Ok((fwd, g))
}

/// Columnwise metric projection onto `{⦀uₙ⦀ ≤ C_u}`: radial scaling for
/// the Euclidean norm, componentwise clamping for the max norm.
pub fn project_admissible(u: &DiscreteControl, sat: &SaturationConfig) -> DiscreteControl {
    let mut out = u.clone();
    project_admissible_in_place(&mut out, sat);
    out
}

fn project_admissible_in_place(u: &mut DiscreteControl, sat: &SaturationConfig) {
    let m = u.n_actuators;
    if m == 0 || sat.is_unconstrained() {
        return;
    }
    match sat.norm {
        ControlNorm::Euclidean => {
            for col in u.data.chunks_mut(m) {
                radial_project_in_place(col, sat);
            }
        }
        ControlNorm::Max => {
            let c = sat.bound;
            u.data.iter_mut().for_each(|x| *x = x.clamp(-c, c));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbOptions {
    /// Stop once `‖u^{j+1} - u^j‖_{L²(time)}` drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Step used first and whenever the BB quotient is unusable.
    pub alpha_fallback: f64,
    /// Length of the nonmonotone reference window.
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for BbOptions {
    fn default() -> Self {
        BbOptions {
            tol: 1e-4,
            max_iterations: 500,
            alpha_min: 1e-8,
            alpha_max: 1e8,
            alpha_fallback: 1.0,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub control: DiscreteControl,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    /// `false` if the iteration cap was hit or the line search stalled.
    pub converged: bool,
    pub states: Vec<Vec<f64>>,
}

/// Projected gradient with Barzilai–Borwein steps and a nonmonotone
/// Armijo line search. Returns the best iterate seen.
pub fn bb_projected_gradient(
    prob: &OcpProblem<'_>,
    u_init: &DiscreteControl,
    opts: &BbOptions,
) -> Result<OcpSolution> {
    let dt = prob.system.dt();
    let inv_dt = 1.0 / dt;
    let mut u = project_admissible(u_init, &prob.saturation);
    let (mut fwd, mut g) = cost_and_gradient(&u, prob)?;
    let initial_cost = fwd.cost;
    let mut recent: Vec<f64> = vec![fwd.cost];
    let mut alpha = opts.alpha_fallback;
    let mut best = (u.clone(), fwd.cost, fwd.states.clone());
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut trial_alpha = alpha;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            // step along the L²-in-time gradient g/k
            let mut trial = u.clone();
            math::axpy(-trial_alpha * inv_dt, g.as_slice(), trial.as_mut_slice());
            project_admissible_in_place(&mut trial, &prob.saturation);
            let d: Vec<f64> = trial.data.iter().zip(&u.data).map(|(a, b)| a - b).collect();
            if d.iter().all(|x| *x == 0.0) {
                converged = true;
                break 'outer;
            }
            let slope = math::dot(g.as_slice(), &d);
            match evaluate_cost(&trial, prob) {
                Ok(f) if f.cost <= reference + opts.armijo * slope => {
                    accepted = Some((trial, f, d));
                    break;
                }
                Ok(_) | Err(Error::BlowUp { .. }) => trial_alpha *= opts.backtrack,
                Err(e) => return Err(e),
            }
        }
        let Some((u_new, f_new, d)) = accepted else {
            break;
        };
        let p = solve_adjoint(&f_new, prob)?;
        let g_new = reduced_gradient(&u_new, &p, prob)?;
        let step_norm = math::sqrt(dt * math::dot(&d, &d));

        // BB1 in the L²(time) inner product: s = Δu, y = Δ(g/k)
        let sts = dt * math::dot(&d, &d);
        let sty: f64 = d
            .iter()
            .zip(g_new.as_slice().iter().zip(g.as_slice()))
            .map(|(s, (a, b))| s * (a - b))
            .sum();
        alpha = if sty > 0.0 { sts / sty } else { opts.alpha_fallback };
        if !(alpha >= opts.alpha_min && alpha <= opts.alpha_max) {
            alpha = opts.alpha_fallback;
        }

        u = u_new;
        g = g_new;
        fwd = f_new;
        if fwd.cost < best.1 {
            best = (u.clone(), fwd.cost, fwd.states.clone());
        }
        recent.push(fwd.cost);
        if recent.len() > opts.memory.max(1) {
            recent.remove(0);
        }
        if step_norm < opts.tol {
            converged = true;
            break;
        }
    }
    let (control, cost, states) = best;
    Ok(OcpSolution {
        control,
        cost,
        initial_cost,
        iterations,
        converged,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuators::build_actuator_grid;
    use crate::dynamics::{ForcingSpec, IntegratorConfig, SchloeglParams};
    use crate::fem::{build_mesh, RectangleDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_system(n: usize, m: usize, dt: f64) -> ControlledSystem {
        let d = RectangleDomain::unit_square();
        ControlledSystem::new(
            build_mesh(n, n, d).unwrap(),
            SchloeglParams::default(),
            build_actuator_grid(m, 0.5, d).unwrap(),
            ForcingSpec::PeriodicIndicator,
            IntegratorConfig::new(dt),
        )
        .unwrap()
    }

    fn problem<'a>(sys: &'a ControlledSystem, n_steps: usize, beta: f64, bound: f64) -> OcpProblem<'a> {
        let yhat0 = sys.mesh().constant(2.0);
        let y0 = sys.mesh().interpolate(|x| -1.0 + 0.5 * x[0]);
        let mut src = TargetSource::new(sys, &yhat0).unwrap();
        let sat = SaturationConfig::new(bound, ControlNorm::Euclidean).unwrap();
        OcpProblem::from_source(sys, &mut src, 0, n_steps, y0.into_inner(), None, beta, sat).unwrap()
    }

    fn random_control(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> DiscreteControl {
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect())
            .collect();
        DiscreteControl::from_columns(m, &cols).unwrap()
    }

    #[test]
    fn zero_error_gives_zero_cost_and_adjoint() {
        let sys = small_system(6, 2, 1e-2);
        let yhat0 = sys.mesh().interpolate(|x| x[0] * x[1]);
        let mut src = TargetSource::new(&sys, &yhat0).unwrap();
        let prob = OcpProblem::from_source(
            &sys,
            &mut src,
            0,
            15,
            yhat0.clone().into_inner(),
            None,
            1e-3,
            SaturationConfig::unconstrained(),
        )
        .unwrap();
        let u = prob.zero_control();
        let fwd = evaluate_cost(&u, &prob).unwrap();
        assert_eq!(fwd.cost, 0.0);
        let p = solve_adjoint(&fwd, &prob).unwrap();
        assert!(p.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn beta_enters_linearly() {
        let sys = small_system(6, 2, 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_control(&mut rng, 4, 12, 2.0);
        let a = evaluate_cost(&u, &problem(&sys, 12, 1e-3, f64::INFINITY)).unwrap();
        let b = evaluate_cost(&u, &problem(&sys, 12, 2e-3, f64::INFINITY)).unwrap();
        let direct = 1e-3 * 1e-2 * math::dot(u.as_slice(), u.as_slice());
        assert!((b.cost - a.cost - direct).abs() < 1e-13 * b.cost);
    }

    fn fd_check(sys: &ControlledSystem, n_steps: usize, beta: f64, seed: u64) {
        let prob = problem(sys, n_steps, beta, f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_control(&mut rng, sys.n_actuators(), n_steps, 3.0);
        let (_, g) = cost_and_gradient(&u, &prob).unwrap();
        for _ in 0..4 {
            let d = random_control(&mut rng, sys.n_actuators(), n_steps, 1.0);
            let h = 1e-4;
            let mut up = u.clone();
            math::axpy(h, d.as_slice(), up.as_mut_slice());
            let mut um = u.clone();
            math::axpy(-h, d.as_slice(), um.as_mut_slice());
            let fd = (evaluate_cost(&up, &prob).unwrap().cost - evaluate_cost(&um, &prob).unwrap().cost)
                / (2.0 * h);
            let ad = math::dot(g.as_slice(), d.as_slice());
            assert!((fd - ad).abs() <= 1e-6 * ad.abs().max(1e-8), "fd {fd} adjoint {ad}");
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let sys = small_system(5, 2, 1e-2);
        fd_check(&sys, 9, 1e-3, 1);
        fd_check(&sys, 1, 1e-3, 2);
        fd_check(&sys, 2, 1e-5, 3);
    }

    #[test]
    fn adjoint_gradient_after_first_window() {
        // windows with history use the multistep operator from the first step on
        let sys = small_system(5, 2, 1e-2);
        let yhat0 = sys.mesh().constant(2.0);
        let mut src = TargetSource::new(&sys, &yhat0).unwrap();
        let y_hist = sys.mesh().interpolate(|x| -1.0 + x[1]).into_inner();
        let y0 = sys.mesh().interpolate(|x| -1.0 + 0.9 * x[1]).into_inner();
        let prob = OcpProblem::from_source(
            &sys,
            &mut src,
            7,
            6,
            y0,
            Some(y_hist),
            1e-3,
            SaturationConfig::unconstrained(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_control(&mut rng, 4, 6, 2.0);
        let d = random_control(&mut rng, 4, 6, 1.0);
        let (_, g) = cost_and_gradient(&u, &prob).unwrap();
        let h = 1e-4;
        let mut up = u.clone();
        math::axpy(h, d.as_slice(), up.as_mut_slice());
        let mut um = u.clone();
        math::axpy(-h, d.as_slice(), um.as_mut_slice());
        let fd = (evaluate_cost(&up, &prob).unwrap().cost - evaluate_cost(&um, &prob).unwrap().cost) / (2.0 * h);
        let ad = math::dot(g.as_slice(), d.as_slice());
        assert!((fd - ad).abs() <= 1e-6 * ad.abs());
    }

    #[test]
    fn projection_is_columnwise_and_idempotent() {
        let u = DiscreteControl::from_columns(2, &[[6.0, 8.0], [0.3, 0.4]]).unwrap();
        let sat = SaturationConfig::new(5.0, ControlNorm::Euclidean).unwrap();
        let p = project_admissible(&u, &sat);
        assert_eq!(p.column(0), &[3.0, 4.0]);
        assert_eq!(p.column(1), &[0.3, 0.4]);
        assert_eq!(project_admissible(&p, &sat), p);
        let max = SaturationConfig::new(5.0, ControlNorm::Max).unwrap();
        let q = project_admissible(&u, &max);
        assert_eq!(q.column(0), &[5.0, 5.0]);
        assert_eq!(q.column(1), &[0.3, 0.4]);
    }

    #[test]
    fn shift_pads_with_last_column() {
        let u = DiscreteControl::from_columns(1, &[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        assert_eq!(u.shifted(2).as_slice(), &[3.0, 4.0, 4.0, 4.0]);
        assert_eq!(u.shifted(0), u);
    }

    #[test]
    fn bb_decreases_cost_and_stays_feasible() {
        let sys = small_system(6, 2, 1e-2);
        let prob = problem(&sys, 20, 1e-3, 3.0);
        let u0 = prob.zero_control();
        let sol = bb_projected_gradient(&prob, &u0, &BbOptions::default()).unwrap();
        assert!(sol.cost < sol.initial_cost);
        assert!(sol.columns_ok(prob.saturation()));
        // restarting at the solution stops almost immediately
        let again = bb_projected_gradient(&prob, &sol.control, &BbOptions::default()).unwrap();
        assert!(again.cost <= sol.cost);
        assert!(again.iterations <= sol.iterations);
    }

    impl OcpSolution {
        fn columns_ok(&self, sat: &SaturationConfig) -> bool {
            self.control.columns().all(|c| sat.admits(c))
        }
    }
}
