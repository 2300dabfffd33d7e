//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test --test acceptance` runs everything except the full-resolution
//! cost table; add `-- --include-ignored` to run that too (hours).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schloegl_core::actuators::{
    build_actuator_grid, discretize_actuators, project_onto_actuator_span, ControlNorm,
};
use schloegl_core::analysis::{
    ode_toy_simulate, stabilizability_margin, ScalarLaw, TheoryConstants,
};
use schloegl_core::dynamics::{
    cubic_reaction, shifted_reaction, ForcingSpec, IntegratorConfig, SchloeglParams,
};
use schloegl_core::feedback::{
    closed_loop_simulate, dissipation_closed_form, feedback_dissipation, radial_project,
    saturated_feedback, FeedbackLaw, SaturationConfig,
};
use schloegl_core::fem::{assemble_mass, assemble_stiffness, build_mesh, RectangleDomain};
use schloegl_core::ocp::{cost_and_gradient, evaluate_cost, DiscreteControl, OcpProblem};
use schloegl_core::{ControlledSystem, TargetSource};
use schloegl_experiments::config::ScenarioConfig;
use schloegl_experiments::scenario::{build_system, initial_fields, preset_config, run_scenario, RunStatus};
use schloegl_experiments::table::{run_table, BETAS, CELLS};

type Outcome = (bool, String);
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Option<Outcome>>);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn unit() -> RectangleDomain {
    RectangleDomain::unit_square()
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn criterion1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mesh = build_mesh(16, 16, unit()).unwrap();
    let grid = build_actuator_grid(3, 0.3, unit()).unwrap();
    let b = discretize_actuators(&grid, &mesh);
    let params = SchloeglParams::default();
    let n = mesh.n_nodes();

    // dissipation identity, saturated and unsaturated regimes
    let mut worst_diss: f64 = 0.0;
    let mut regimes = [0usize; 2];
    for i in 0..100 {
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let norm = if i % 2 == 0 { ControlNorm::Euclidean } else { ControlNorm::Max };
        let bound = if i < 50 { 1.0 } else { 1e6 };
        let law = FeedbackLaw::new(175.0, SaturationConfig::new(bound, norm).unwrap()).unwrap();
        let u = saturated_feedback(&z, &law, &b).unwrap();
        let raw = saturated_feedback(&z, &FeedbackLaw::new(175.0, SaturationConfig::unconstrained()).unwrap(), &b).unwrap();
        regimes[usize::from(norm.eval(&raw) <= bound)] += 1;
        let lhs = feedback_dissipation(&z, &u, &b).unwrap();
        let rhs = dissipation_closed_form(&z, &law, &b).unwrap();
        worst_diss = worst_diss.max(rel(lhs, rhs));
    }

    // shift identity, nodewise
    let mut worst_shift: f64 = 0.0;
    for _ in 0..20 {
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let yh: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let sum: Vec<f64> = z.iter().zip(&yh).map(|(a, b)| a + b).collect();
        let f_sum = cubic_reaction(&sum, &params);
        let f_yh = cubic_reaction(&yh, &params);
        let f_shift = shifted_reaction(&z, &yh, &params).unwrap();
        for i in 0..n {
            let scale = 1.0 + sum[i].abs().powi(3) + yh[i].abs().powi(3);
            worst_shift = worst_shift.max((f_sum[i] - f_yh[i] - f_shift[i]).abs() / scale);
        }
    }

    // radial projection: bound and direction
    let mut proj_ok = true;
    for _ in 0..200 {
        let v: Vec<f64> = (0..9).map(|_| rng.gen_range(-50.0..50.0)).collect();
        for norm in [ControlNorm::Euclidean, ControlNorm::Max] {
            let c = rng.gen_range(0.1..60.0);
            let sat = SaturationConfig::new(c, norm).unwrap();
            let p = radial_project(&v, &sat);
            let (nv, np) = (norm.eval(&v), norm.eval(&p));
            proj_ok &= np <= c * (1.0 + 1e-12);
            if nv <= c {
                proj_ok &= p.0 == v;
            } else {
                // p = s v with s = c/|v| in (0, 1)
                let s = c / nv;
                proj_ok &= v.iter().zip(p.iter()).all(|(a, b)| (b - s * a).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    // FEM identities
    let mass = assemble_mass(&mesh);
    let stiff = assemble_stiffness(&mesh, params.nu()).unwrap();
    let ones = vec![1.0; n];
    let k1 = stiff.apply(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let area = mass.inner(&ones, &ones);
    let fem_ok = k1 < 1e-12 && (area - 1.0).abs() < 1e-12;

    // actuator projection: idempotent and orthogonal
    let mut act_worst: f64 = 0.0;
    for _ in 0..20 {
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = project_onto_actuator_span(&z, &b).unwrap();
        let again = grid.project_piecewise_constant(&c).unwrap();
        let pairing = b.transpose_apply(&z);
        for j in 0..c.len() {
            act_worst = act_worst.max((again[j] - c[j]).abs() / c[j].abs().max(1.0));
            let residual_pairing = pairing[j] - c[j] * grid.boxes()[j].volume();
            act_worst = act_worst.max(residual_pairing.abs());
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_diss < 1e-12
        && regimes[0] > 0
        && regimes[1] > 0
        && worst_shift < 1e-12
        && proj_ok
        && fem_ok
        && act_worst < 1e-12
        && secs < 10.0;
    (
        pass,
        format!(
            "dissipation rel err {worst_diss:.1e} (saturated {}, unsaturated {}), shift {worst_shift:.1e}, projection ok {proj_ok}, |K1| {k1:.1e}, 1'M1-1 {:.1e}, actuator projection {act_worst:.1e}, {secs:.1}s",
            regimes[0],
            regimes[1],
            area - 1.0
        ),
    )
}

fn gradient_instance(nx: usize, steps: usize, beta: f64, start: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = ControlledSystem::new(
        build_mesh(nx, nx, unit()).unwrap(),
        SchloeglParams::default(),
        build_actuator_grid(2, 0.5, unit()).unwrap(),
        ForcingSpec::PeriodicIndicator,
        IntegratorConfig::new(1e-2),
    )
    .unwrap();
    let yhat0 = sys.mesh().interpolate(|x| 1.5 + 0.5 * x[0] - x[1] * x[1]);
    let y_init = sys.mesh().interpolate(|x| -1.0 + x[0] * x[1]).into_inner();
    let y_hist = (start > 0).then(|| sys.mesh().interpolate(|x| -0.9 + x[0] * x[1]).into_inner());
    let mut src = TargetSource::new(&sys, &yhat0).unwrap();
    let prob = OcpProblem::from_source(
        &sys,
        &mut src,
        start,
        steps,
        y_init,
        y_hist,
        beta,
        SaturationConfig::unconstrained(),
    )
    .unwrap();
    let m = sys.n_actuators();
    let random = |rng: &mut ChaCha8Rng, s: f64| {
        let cols: Vec<Vec<f64>> = (0..steps).map(|_| (0..m).map(|_| s * rng.gen_range(-1.0..1.0)).collect()).collect();
        DiscreteControl::from_columns(m, &cols).unwrap()
    };
    let u = random(&mut rng, 3.0);
    let (_, g) = cost_and_gradient(&u, &prob).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let d = random(&mut rng, 1.0);
        let eps = 1e-5;
        let shifted = |s: f64| {
            let mut v = u.clone();
            v.as_mut_slice().iter_mut().zip(d.as_slice()).for_each(|(a, b)| *a += s * b);
            evaluate_cost(&v, &prob).unwrap().cost
        };
        let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let an: f64 = g.as_slice().iter().zip(d.as_slice()).map(|(a, b)| a * b).sum();
        worst = worst.max(rel(fd, an));
    }
    worst
}

fn criterion2() -> Outcome {
    let t0 = Instant::now();
    let errs = [
        gradient_instance(8, 40, 1e-3, 0, 11),
        gradient_instance(12, 30, 1e-5, 0, 12),
        gradient_instance(10, 40, 1e-3, 7, 13),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    (
        worst < 1e-5 && secs < 60.0,
        format!("worst relative error {worst:.2e} over 3 instances x 10 directions, {secs:.1}s"),
    )
}

fn example1(exponent: f64, t_inf: f64) -> ScenarioConfig {
    let mut cfg = preset_config("example1").unwrap();
    cfg.nx = 32;
    cfg.ny = 32;
    cfg.k = 2e-3;
    cfg.m = 3;
    cfg.lambda = 175.0;
    cfg.cu = exponent.exp();
    cfg.t_inf = t_inf;
    cfg
}

fn criterion3() -> Outcome {
    let t0 = Instant::now();
    let strong = run_scenario(&example1(3.5, 5.0)).unwrap();
    let weak = run_scenario(&example1(1.0, 25.0)).unwrap();
    let zs = strong.summary.final_err_l2;
    let (w0, w1) = (weak.summary.initial_err_l2, weak.summary.final_err_l2);
    let pass = strong.summary.status == RunStatus::Completed
        && weak.summary.status == RunStatus::Completed
        && zs < 1e-5
        && w1 > 0.5 * w0;
    (
        pass,
        format!(
            "C_u=e^3.5: |z(5)| = {zs:.2e}; C_u=e^1: |z(25)| = {w1:.3} vs |z(0)|/2 = {:.3}; {:.0}s",
            0.5 * w0,
            t0.elapsed().as_secs_f64()
        ),
    )
}

/// Steps with `|zⁿ| ≥ D` followed by an increase of `|z|²`.
fn decay_violations(errs: &[f64], d: f64) -> (usize, usize) {
    let mut above = 0;
    let mut bad = 0;
    for w in errs.windows(2) {
        if w[0] >= d {
            above += 1;
            if w[1] * w[1] > w[0] * w[0] {
                bad += 1;
            }
        }
    }
    (above, bad)
}

fn criterion4() -> Outcome {
    let base = {
        let mut cfg = preset_config("example3").unwrap();
        cfg.nx = 32;
        cfg.ny = 32;
        cfg.t_inf = 5.0;
        cfg
    };
    let sys = build_system(&base).unwrap();
    let d = TheoryConstants::compute(0.1, sys.params(), 1.0, base.lambda, sys.grid()).unwrap().d;

    // (scale of y0, time step, horizon); the enlarged states start above D.
    // At 3x the explicit reaction step needs k well below 1e-3.
    let variants = [(1.0, base.k, base.t_inf), (2.0, base.k, base.t_inf), (3.0, 2.5e-4, 1.0)];
    let mut pass = true;
    let mut parts = vec![format!("D = {d:.4}")];
    for (scale, k, horizon) in variants {
        let mut cfg = base.clone();
        cfg.k = k;
        cfg.t_inf = horizon;
        let sys = build_system(&cfg).unwrap();
        let law = FeedbackLaw::new(cfg.lambda, SaturationConfig::new(cfg.cu, cfg.norm).unwrap()).unwrap();
        let (y0, yhat0) = initial_fields(&cfg, &sys);
        let y0: Vec<f64> = y0.iter().map(|v| scale * v).collect();
        let errs = closed_loop_simulate(&sys, &y0, &yhat0, &law, cfg.t_inf, 0.0).unwrap().error_norms();
        let (above, bad) = decay_violations(&errs, d);
        pass &= bad == 0 && (scale == 1.0 || above > 0);
        let vacuous = if above == 0 { ", vacuous" } else { "" };
        parts.push(format!(
            "y0 x{scale} (k={k:e}): |z0| = {:.3}, {above} steps above D, {bad} violations{vacuous}",
            errs[0]
        ));
    }
    (pass, parts.join("; "))
}

fn table_outcome(include_slow: bool) -> Option<Outcome> {
    if !include_slow {
        return None;
    }
    let t0 = Instant::now();
    let mut base = preset_config("example2").unwrap();
    base.nx = 57;
    base.ny = 57;
    base.k = 1e-3;
    let table = run_table(&base, &CELLS, &BETAS).unwrap();
    println!("{}", table.to_text());
    let mut within = 0;
    let mut ordered = 0;
    let mut details = Vec::new();
    for e in &table.entries {
        let (rr, rs) = e.reference.unwrap();
        let (jr, js) = (e.rhc_cost(), e.saturated_cost());
        let ok_r = jr.is_some_and(|v| (v - rr).abs() <= 0.2 * rr);
        let ok_s = js.is_some_and(|v| (v - rs).abs() <= 0.2 * rs);
        within += usize::from(ok_r) + usize::from(ok_s);
        let ord = matches!((jr, js), (Some(a), Some(b)) if a <= b);
        ordered += usize::from(ord);
        if !(ok_r && ok_s && ord) {
            details.push(format!(
                "{} beta={:e}: RHC {} (ref {rr}), SatCon {} (ref {rs})",
                e.cell.label(),
                e.beta,
                jr.map_or("failed".into(), |v| format!("{v:.4}")),
                js.map_or("failed".into(), |v| format!("{v:.4}")),
            ));
        }
    }
    let n = table.entries.len();
    Some((
        within == 2 * n && ordered == n,
        format!(
            "{within}/{} values within 20%, ordering holds in {ordered}/{n} cells, {:.0}s{}{}",
            2 * n,
            t0.elapsed().as_secs_f64(),
            if details.is_empty() { "" } else { "; off: " },
            details.join("; ")
        ),
    ))
}

fn criterion6() -> Outcome {
    let rate = |m: usize, lambda: f64| {
        let mut cfg = preset_config("example4").unwrap();
        cfg.nx = 32;
        cfg.ny = 32;
        cfg.cu = f64::INFINITY;
        cfg.m = m;
        cfg.lambda = lambda;
        let art = run_scenario(&cfg).unwrap();
        assert_eq!(art.summary.status, RunStatus::Completed);
        art.summary.mu_est()
    };
    let a = rate(3, 100.0);
    let b = rate(4, 100.0);
    let c = rate(4, 500.0);
    let weak = rate(4, 1.0);
    (
        a < b && b < c && weak < 0.05,
        format!("mu_est (9,100) {a:.3} < (16,100) {b:.3} < (16,500) {c:.3}; (16,1) {weak:.4}"),
    )
}

fn criterion7() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for (r, mu, z0) in [(2.0, 1.0, 1.5), (-1.0, 1.0, -3.0), (0.5, 0.3, 10.0)] {
        let traj = ode_toy_simulate(r, f64::INFINITY, mu, z0, ScalarLaw::Saturated, 3.0).unwrap();
        for &(t, z) in &traj {
            let exact = (-2.0 * mu * t).exp() * z0 * z0;
            worst = worst.max(rel(z * z, exact));
        }
    }
    let mut growing = true;
    for law in [ScalarLaw::Saturated, ScalarLaw::WorstCase] {
        let traj = ode_toy_simulate(-1.0, 1.0, 1.0, 2.0, law, 3.0).unwrap();
        growing &= traj.windows(2).all(|w| w[1].1.abs() > w[0].1.abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    (
        worst < 1e-8 && growing && secs < 1.0,
        format!("max rel err of z^2 {worst:.1e}; |z| strictly increasing for r=-1, C_u=1, z0=2: {growing}; {secs:.2}s"),
    )
}

fn criterion8() -> Outcome {
    let t0 = Instant::now();
    let mesh = build_mesh(48, 48, unit()).unwrap();
    let params = SchloeglParams::default();
    let mut zero_dev: f64 = 0.0;
    let mut monotone = true;
    let mut limits = Vec::new();
    for m in 1..=4usize {
        let grid = build_actuator_grid(m, 0.3, unit()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for lambda in [0.0, 1.0, 10.0, 100.0, 1e6] {
            let rep = stabilizability_margin(&mesh, &params, &grid, lambda, 0.1).unwrap();
            if lambda == 0.0 {
                zero_dev = zero_dev.max((rep.theta_min - 1.0).abs());
            }
            monotone &= rep.theta_min >= prev;
            prev = rep.theta_min;
            if lambda == 1e6 {
                limits.push(rep.theta_min);
            }
        }
    }
    let ms = [1.0, 2.0, 3.0, 4.0];
    let raw = loglog_slope(&ms, &limits);
    let shifted: Vec<f64> = limits.iter().map(|t| t - 1.0).collect();
    let affine = loglog_slope(&ms, &shifted);
    let secs = t0.elapsed().as_secs_f64();
    (
        // the growth law is C1 M^2 + 1, so the exponent is read off theta - 1;
        // the raw fit is reported alongside
        zero_dev <= 1e-8 && monotone && affine >= 1.5 && secs < 60.0,
        format!(
            "|theta(0)-1| {zero_dev:.1e}; monotone {monotone}; theta at lambda=1e6: {}; exponent {raw:.3} (theta), {affine:.3} (theta-1); {secs:.1}s",
            limits.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn free_system(nx: usize, dt: f64) -> ControlledSystem {
    ControlledSystem::new(
        build_mesh(nx, nx, unit()).unwrap(),
        SchloeglParams::default(),
        build_actuator_grid(3, 0.3, unit()).unwrap(),
        ForcingSpec::Zero,
        IntegratorConfig::new(dt),
    )
    .unwrap()
}

fn run_free(sys: &ControlledSystem, y0: &[f64], steps: usize) -> Vec<f64> {
    let mut cur = y0.to_vec();
    let mut prev: Option<Vec<f64>> = None;
    for n in 0..steps {
        let next = sys.advance(n, &cur, prev.as_deref(), None).unwrap();
        prev = Some(std::mem::replace(&mut cur, next));
    }
    cur
}

fn criterion9() -> Outcome {
    let params = SchloeglParams::default();
    let sys = free_system(16, 1e-3);
    let n = sys.n_nodes();

    // exact up to the roundoff of the linear solve
    let fixed_dev = params.roots().iter().fold(0.0f64, |m, &z| {
        run_free(&sys, &vec![z; n], 500).iter().fold(m, |m, v| m.max((v - z).abs()))
    });
    let fixed = fixed_dev < 1e-12;

    // constant data: ẏ = -f(y) by the same two-step recursion
    let steps = 1000;
    let k = 1e-3;
    let pde = run_free(&sys, &vec![1.0; n], steps);
    let f = |y: f64| (y + 1.0) * y * (y - 2.0);
    let (mut prev, mut cur) = (1.0f64, 1.0 - k * f(1.0));
    for _ in 1..steps {
        let next = cur - k * (1.5 * f(cur) - 0.5 * f(prev));
        prev = cur;
        cur = next;
    }
    let reduction = pde.iter().fold(0.0f64, |m, v| m.max((v - cur).abs()));

    // temporal order at T = 1
    let smooth = |s: &ControlledSystem| {
        s.mesh()
            .interpolate(|x| 0.5 + (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos())
            .into_inner()
    };
    let reference = {
        let s = free_system(16, 1.25e-4);
        run_free(&s, &smooth(&s), 8000)
    };
    let mut errs = Vec::new();
    for (dt, steps) in [(4e-3, 250), (2e-3, 500), (1e-3, 1000)] {
        let s = free_system(16, dt);
        let y = run_free(&s, &smooth(&s), steps);
        let d: Vec<f64> = y.iter().zip(&reference).map(|(a, b)| a - b).collect();
        errs.push(s.l2_norm_sq(&d).sqrt());
    }
    let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
    let order = orders[0].min(orders[1]);
    (
        fixed && reduction < 1e-10 && order >= 1.9,
        format!(
            "root fixed points: max deviation {fixed_dev:.1e}; constant-data deviation {reduction:.1e}; errors {:.2e}, {:.2e}, {:.2e}, orders {:.3}, {:.3}",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    )
}

fn main() {
    let include_slow = std::env::args().any(|a| a == "--include-ignored" || a == "--ignored");
    let list_only = std::env::args().any(|a| a == "--list");
    let criteria: Vec<Criterion> = vec![
        ("1 exact identities", Box::new(|| Some(criterion1()))),
        ("2 gradient check", Box::new(|| Some(criterion2()))),
        ("3 example 1 dichotomy", Box::new(|| Some(criterion3()))),
        ("4 decay above D", Box::new(|| Some(criterion4()))),
        ("5 cost table at full resolution", Box::new(move || table_outcome(include_slow))),
        ("6 example 4 rates", Box::new(|| Some(criterion6()))),
        ("7 scalar model", Box::new(|| Some(criterion7()))),
        ("8 stabilizability margin", Box::new(|| Some(criterion8()))),
        ("9 equilibria, reduction, order", Box::new(|| Some(criterion9()))),
    ];
    if list_only {
        for (name, _) in &criteria {
            println!("criterion {name}: test");
        }
        return;
    }
    let mut failed = 0;
    for (name, run) in &criteria {
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(Some((true, detail))) => println!("criterion {name}: PASS | {detail}"),
            Ok(Some((false, detail))) => {
                failed += 1;
                println!("criterion {name}: FAIL | {detail}");
            }
            Ok(None) => println!("criterion {name}: SKIPPED | slow, run with --include-ignored"),
            Err(_) => {
                failed += 1;
                println!("criterion {name}: FAIL | panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
