//! Closed-form constants of the stability analysis, the discrete
//! stabilizability margin, decay-rate estimation and the scalar model
//! `ż + rz = u`, `|u| ≤ C_u`.

use alloc::vec;
use alloc::vec::Vec;

use crate::actuators::{control_operator_inverse_norm, discretize_actuators, ActuatorGrid};
use crate::dynamics::SchloeglParams;
use crate::eigen::{dense_cholesky, dense_cholesky_solve, smallest_generalized};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, StructuredTriangulation};
use crate::math;
use crate::sparse::BandedCholesky;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// `(ξ₂, ξ₁, ξ₀)`
    pub xi: [f64; 3],
    pub mu: f64,
    /// `Ĉ = (50/11)ξ₂² - 2ξ₁`
    pub c_hat: f64,
    /// `C₁ = (128/15)ξ₂² + Ĉ + 2`
    pub c1: f64,
    /// Radius above which the error norm decays: `D̂ = (2μ + √(4μ² + C₁/(2|Ω|))) / (1/(4|Ω|))`.
    pub d_hat: f64,
    /// `D = max{1, D̂}`
    pub d: f64,
    /// `ϖ = 2μ + C₁`
    pub varpi: f64,
    /// `λ ⦀(U⋄)^{-1}⦀ D`, the bound above which saturation is inactive inside the ball.
    pub cu_star: f64,
    /// Sufficient time to enter the ball, `(μ²D)^{-1/2}`.
    pub time_to_ball: f64,
}

impl TheoryConstants {
    pub fn compute(
        mu: f64,
        params: &SchloeglParams,
        area: f64,
        lambda: f64,
        grid: &ActuatorGrid,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid("rate must be positive"));
        }
        if !(area > 0.0) {
            return Err(Error::invalid("domain area must be positive"));
        }
        let xi = params.xi();
        let (x2, x1) = (xi[0], xi[1]);
        let c_hat = 50.0 / 11.0 * x2 * x2 - 2.0 * x1;
        let c1 = 128.0 / 15.0 * x2 * x2 + c_hat + 2.0;
        let inv_area = 1.0 / area;
        let d_hat = (2.0 * mu + math::sqrt(4.0 * mu * mu + 0.5 * inv_area * c1)) / (0.25 * inv_area);
        let d = d_hat.max(1.0);
        Ok(TheoryConstants {
            xi,
            mu,
            c_hat,
            c1,
            d_hat,
            d,
            varpi: 2.0 * mu + c1,
            cu_star: lambda * control_operator_inverse_norm(grid) * d,
            time_to_ball: 1.0 / math::sqrt(mu * mu * d),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub grid_parameter: usize,
    pub lambda: f64,
    /// Smallest `θ` with `(K + M + 2λ B G⁻¹ Bᵀ) w = θ M w`.
    pub theta_min: f64,
    pub varpi: f64,
    pub passes: bool,
    pub residual: f64,
    pub iterations: usize,
}

/// Discrete version of `‖w‖²_V + 2λ‖P w‖² ≥ ϖ ‖w‖²` on the given mesh:
/// the best constant is the smallest eigenvalue of the pencil
/// `(K + M + 2λ B G⁻¹ Bᵀ, M)` with `G = diag(vol ω_j)`.
pub fn stabilizability_margin(
    mesh: &StructuredTriangulation,
    params: &SchloeglParams,
    grid: &ActuatorGrid,
    lambda: f64,
    mu: f64,
) -> Result<MarginReport> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("gain must be finite and nonnegative"));
    }
    let consts = TheoryConstants::compute(mu, params, mesh.domain().area(), lambda, grid)?;
    let mass = assemble_mass(mesh);
    let stiff = assemble_stiffness(mesh, params.nu())?;
    let a0 = stiff.combine(1.0, &mass, 1.0)?;
    let chol = BandedCholesky::factor(&a0)?;
    let b = discretize_actuators(grid, mesh);
    let m = b.n_actuators();
    let n = mesh.n_nodes();
    let weights: Vec<f64> = b.volumes().iter().map(|g| 2.0 * lambda / g).collect();

    // Woodbury: (A₀ + B D Bᵀ)⁻¹ = A₀⁻¹ - W (D⁻¹ + Bᵀ W)⁻¹ Wᵀ with W = A₀⁻¹ B
    let low_rank = lambda > 0.0;
    let mut w_cols: Vec<Vec<f64>> = Vec::new();
    let mut cap = vec![0.0; m * m];
    if low_rank {
        for j in 0..m {
            let mut col = vec![0.0; n];
            for &(i, v) in b.column(j) {
                col[i] = v;
            }
            chol.solve_in_place(&mut col);
            w_cols.push(col);
        }
        for i in 0..m {
            for j in 0..m {
                cap[i * m + j] = b.column(i).iter().map(|&(k, v)| v * w_cols[j][k]).sum();
            }
            cap[i * m + i] += 1.0 / weights[i];
        }
        dense_cholesky(&mut cap, m)?;
    }

    let apply_a = |x: &[f64]| {
        let mut y = a0.apply(x);
        if low_rank {
            let bt = b.transpose_apply(x);
            let scaled: Vec<f64> = bt.iter().zip(&weights).map(|(v, w)| v * w).collect();
            b.apply_add(&scaled, &mut y);
        }
        y
    };
    let solve_a = |x: &mut [f64]| {
        chol.solve_in_place(x);
        if low_rank {
            let mut s = b.transpose_apply(x);
            dense_cholesky_solve(&cap, m, &mut s);
            for (col, sj) in w_cols.iter().zip(&s) {
                math::axpy(-sj, col, x);
            }
        }
    };
    let start: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|p| 1.0 + 0.3 * p[0] + 0.2 * p[1] * p[1] + 0.1 * math::sin(7.0 * p[0] * p[1] + 1.0))
        .collect();
    let pair = smallest_generalized(&mass, &apply_a, &solve_a, &start, 1e-8, 300)?;
    Ok(MarginReport {
        grid_parameter: grid.grid_parameter(),
        lambda,
        theta_min: pair.value,
        varpi: consts.varpi,
        passes: pair.value >= consts.varpi,
        residual: pair.residual,
        iterations: pair.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `-slope` of `ln‖z‖` against time.
    pub mu: f64,
    /// Sample index range `[first, last]` used in the fit.
    pub window: (usize, usize),
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
}

pub const DECAY_FLOOR: f64 = 1e-14;

/// Least-squares exponential rate of a norm series.
///
/// Uses the longest contiguous run of samples with norms in
/// `[1e-12, initial/2]`; if that run is shorter than ten samples, every
/// sample above [`DECAY_FLOOR`] is used instead.
pub fn fit_decay_rate(times: &[f64], norms: &[f64]) -> Result<DecayFit> {
    Error::check_len(times.len(), norms.len())?;
    if norms.is_empty() {
        return Err(Error::InsufficientData { needed: 10, found: 0 });
    }
    let hi = 0.5 * norms[0];
    let mut best = (0, 0);
    let mut run_start = None;
    for (i, &v) in norms.iter().chain(core::iter::once(&f64::NAN)).enumerate() {
        if (1e-12..=hi).contains(&v) {
            run_start.get_or_insert(i);
        } else if let Some(s) = run_start.take() {
            if i - s > best.1 - best.0 {
                best = (s, i);
            }
        }
    }
    let idx: Vec<usize> = if best.1 - best.0 >= 10 {
        (best.0..best.1).collect()
    } else {
        (0..norms.len()).filter(|&i| norms[i] > DECAY_FLOOR).collect()
    };
    if idx.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            found: idx.len(),
        });
    }
    let npts = idx.len() as f64;
    let tm = idx.iter().map(|&i| times[i]).sum::<f64>() / npts;
    let lm = idx.iter().map(|&i| math::ln(norms[i])).sum::<f64>() / npts;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &i in &idx {
        let dt = times[i] - tm;
        sxy += dt * (math::ln(norms[i]) - lm);
        sxx += dt * dt;
    }
    if !(sxx > 0.0) {
        return Err(Error::invalid("fit window has no time spread"));
    }
    let slope = sxy / sxx;
    let ss: f64 = idx
        .iter()
        .map(|&i| {
            let r = math::ln(norms[i]) - (lm + slope * (times[i] - tm));
            r * r
        })
        .sum();
    Ok(DecayFit {
        mu: -slope,
        window: (idx[0], idx[idx.len() - 1]),
        residual: math::sqrt(ss / npts),
    })
}

/// Whether `-β₂ϰᵖ + β₀ϰ ≤ -β₁ϰ^{(p+1)/2}` (up to round-off).
pub fn check_gen_poly(beta0: f64, beta1: f64, beta2: f64, p: f64, kappa: f64) -> Result<bool> {
    if !(beta0 > 0.0 && beta1 > 0.0 && beta2 > 0.0 && p > 0.0 && kappa > 0.0) {
        return Err(Error::invalid("all arguments must be positive"));
    }
    let t_p = beta2 * math::powf(kappa, p);
    let t_0 = beta0 * kappa;
    let t_1 = beta1 * math::powf(kappa, 0.5 * (p + 1.0));
    let slack = 1e-12 * (t_p + t_0 + t_1);
    Ok(-t_p + t_0 <= -t_1 + slack)
}

/// `ϰ` with `ϰ^{(p-1)/2} = (β₁ + √(β₁² + 4β₂β₀)) / (2β₂)`, above which
/// [`check_gen_poly`] holds.
pub fn gen_poly_threshold(beta0: f64, beta1: f64, beta2: f64, p: f64) -> f64 {
    let r = (beta1 + math::sqrt(beta1 * beta1 + 4.0 * beta2 * beta0)) / (2.0 * beta2);
    math::powf(r, 2.0 / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarLaw {
    /// `u = clamp((r - μ)z, ±C_u)`, which gives `z(t)² = e^{-2μt} z₀²` while unsaturated.
    Saturated,
    /// `u = -C_u sign(z)`, the most stabilizing admissible input.
    WorstCase,
}

/// Integrates `ż + rz = u` by classical RK4 with step `1e-4`; returns
/// `(t, z)` at every step.
pub fn ode_toy_simulate(
    r: f64,
    cu: f64,
    mu: f64,
    z0: f64,
    law: ScalarLaw,
    horizon: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if !(cu >= 0.0) {
        return Err(Error::invalid("control bound must be nonnegative"));
    }
    const H: f64 = 1e-4;
    let steps = math::round(horizon / H) as usize;
    let control = |z: f64| match law {
        ScalarLaw::Saturated => ((r - mu) * z).clamp(-cu, cu),
        ScalarLaw::WorstCase => {
            if z > 0.0 {
                -cu
            } else if z < 0.0 {
                cu
            } else {
                0.0
            }
        }
    };
    let rhs = |z: f64| -r * z + control(z);
    let mut out = Vec::with_capacity(steps + 1);
    let mut z = z0;
    out.push((0.0, z));
    for n in 0..steps {
        let k1 = rhs(z);
        let k2 = rhs(z + 0.5 * H * k1);
        let k3 = rhs(z + 0.5 * H * k2);
        let k4 = rhs(z + H * k3);
        z += H / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((n + 1) as f64 * H, z));
    }
    Ok(out)
}
