//! Key-value reports for the analysis subcommands.

use std::fmt::Write as _;

use schloegl_core::actuators::build_actuator_grid;
use schloegl_core::analysis::{ode_toy_simulate, stabilizability_margin, ScalarLaw, TheoryConstants};
use schloegl_core::dynamics::SchloeglParams;
use schloegl_core::fem::{build_mesh, RectangleDomain};
use schloegl_core::Error;

use crate::config::ScenarioConfig;

pub fn constants_report(cfg: &ScenarioConfig) -> Result<String, Error> {
    let domain = RectangleDomain::new(cfg.lx, cfg.ly)?;
    let params = SchloeglParams::new(cfg.nu, cfg.zeta)?;
    let grid = build_actuator_grid(cfg.m, cfg.r, domain)?;
    let c = TheoryConstants::compute(cfg.mu, &params, domain.area(), cfg.lambda, &grid)?;
    let mut s = String::new();
    let _ = writeln!(s, "mu={}", c.mu);
    let _ = writeln!(s, "xi2={}\nxi1={}\nxi0={}", c.xi[0], c.xi[1], c.xi[2]);
    let _ = writeln!(s, "C_hat={:.16e}", c.c_hat);
    let _ = writeln!(s, "C1={:.16e}", c.c1);
    let _ = writeln!(s, "D_hat={:.16e}", c.d_hat);
    let _ = writeln!(s, "D={:.16e}", c.d);
    let _ = writeln!(s, "varpi={:.16e}", c.varpi);
    let _ = writeln!(s, "lambda={}", cfg.lambda);
    let _ = writeln!(s, "M_sigma={}", grid.count());
    let _ = writeln!(s, "Cu_star={:.16e}", c.cu_star);
    let _ = writeln!(s, "time_to_ball_bound={:.16e}", c.time_to_ball);
    Ok(s)
}

/// Margin for each gain in `lambdas` on the configured mesh and actuators.
pub fn margin_report(cfg: &ScenarioConfig, lambdas: &[f64]) -> Result<String, Error> {
    let domain = RectangleDomain::new(cfg.lx, cfg.ly)?;
    let mesh = build_mesh(cfg.nx, cfg.ny, domain)?;
    let params = SchloeglParams::new(cfg.nu, cfg.zeta)?;
    let grid = build_actuator_grid(cfg.m, cfg.r, domain)?;
    let mut s = String::new();
    let _ = writeln!(s, "M={}\nmu={}\nnx={}\nny={}", cfg.m, cfg.mu, cfg.nx, cfg.ny);
    for &lambda in lambdas {
        let rep = stabilizability_margin(&mesh, &params, &grid, lambda, cfg.mu)?;
        let _ = writeln!(
            s,
            "lambda={lambda} theta_min={:.12e} varpi={:.6e} passes={} residual={:.2e} iterations={}",
            rep.theta_min, rep.varpi, rep.passes, rep.residual, rep.iterations
        );
    }
    Ok(s)
}

/// `t,z` CSV of the scalar model.
pub fn ode_toy_csv(r: f64, cu: f64, mu: f64, z0: f64, law: ScalarLaw, horizon: f64, every: usize) -> Result<String, Error> {
    let traj = ode_toy_simulate(r, cu, mu, z0, law, horizon)?;
    let mut s = String::from("t,z\n");
    let last = traj.len() - 1;
    for (i, (t, z)) in traj.iter().enumerate() {
        if i % every.max(1) == 0 || i == last {
            let _ = writeln!(s, "{t:.16e},{z:.16e}");
        }
    }
    Ok(s)
}
