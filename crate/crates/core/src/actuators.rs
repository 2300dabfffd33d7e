//! Box-shaped indicator actuators on a tensor grid of centers.
//!
//! For a grid parameter `M` the rectangle holds `M²` boxes
//! `ω_j = Π_n (c_n - r L_n / 2M, c_n + r L_n / 2M)` with centers on
//! `{(2k - 1) L_n / 2M : k = 1..M}`. The boxes are pairwise disjoint, so the
//! Gram matrix of the indicators is diagonal and the L² projection onto
//! their span reduces to box averages.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::fem::{RectangleDomain, StructuredTriangulation};
use crate::math;

/// Norm used on the actuator amplitude space `R^{M_σ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlNorm {
    #[default]
    Euclidean,
    Max,
}

impl ControlNorm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            ControlNorm::Euclidean => math::norm2(v),
            ControlNorm::Max => v.iter().fold(0.0f64, |m, x| m.max(math::abs(*x))),
        }
    }
}

/// Actuator amplitudes `u ∈ R^{M_σ}` at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlVector(pub Vec<f64>);

impl ControlVector {
    pub fn zeros(n: usize) -> Self {
        ControlVector(vec![0.0; n])
    }

    pub fn norm(&self, norm: ControlNorm) -> f64 {
        norm.eval(&self.0)
    }
}

impl Deref for ControlVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ControlVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ControlVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ControlVector {
    fn from(v: Vec<f64>) -> Self {
        ControlVector(v)
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl ActuatorBox {
    pub fn volume(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.lo[0] && p[0] < self.hi[0] && p[1] > self.lo[1] && p[1] < self.hi[1]
    }

    /// Area of the intersection with another box.
    pub fn overlap(&self, other: &ActuatorBox) -> f64 {
        let w = self.hi[0].min(other.hi[0]) - self.lo[0].max(other.lo[0]);
        let h = self.hi[1].min(other.hi[1]) - self.lo[1].max(other.lo[1]);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorGrid {
    m: usize,
    width_fraction: f64,
    domain: RectangleDomain,
    boxes: Vec<ActuatorBox>,
}

impl ActuatorGrid {
    /// Grid parameter `M`.
    pub fn grid_parameter(&self) -> usize {
        self.m
    }

    /// `M_σ = M²`.
    pub fn count(&self) -> usize {
        self.boxes.len()
    }

    pub fn width_fraction(&self) -> f64 {
        self.width_fraction
    }

    pub fn domain(&self) -> &RectangleDomain {
        &self.domain
    }

    pub fn boxes(&self) -> &[ActuatorBox] {
        &self.boxes
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.boxes.iter().map(|b| b.center()).collect()
    }

    /// Per-axis half widths `r L_n / 2M`.
    pub fn half_widths(&self) -> [f64; 2] {
        let [l1, l2] = self.domain.lengths();
        let s = self.width_fraction / (2.0 * self.m as f64);
        [s * l1, s * l2]
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.boxes.iter().map(|b| b.volume()).collect()
    }

    /// Fraction of the domain covered by the actuators, `r²`.
    pub fn coverage(&self) -> f64 {
        self.volumes().iter().sum::<f64>() / self.domain.area()
    }

    /// Box averages of the piecewise-constant function `Σ_l c_l 1_{ω_l}`.
    ///
    /// Computed from geometric overlaps, so it is an independent check of the
    /// projection rather than a restatement of it.
    pub fn project_piecewise_constant(&self, coeffs: &[f64]) -> Result<ControlVector> {
        Error::check_len(self.count(), coeffs.len())?;
        Ok(self
            .boxes
            .iter()
            .map(|bj| {
                let pairing: f64 = self
                    .boxes
                    .iter()
                    .zip(coeffs)
                    .map(|(bl, c)| c * bl.overlap(bj))
                    .sum();
                pairing / bj.volume()
            })
            .collect::<Vec<_>>()
            .into())
    }
}

pub fn build_actuator_grid(m: usize, r: f64, domain: RectangleDomain) -> Result<ActuatorGrid> {
    if m == 0 {
        return Err(Error::invalid("actuator grid parameter M must be at least 1"));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("actuator width fraction r must lie in (0, 1)"));
    }
    let [l1, l2] = domain.lengths();
    let mf = m as f64;
    let (h1, h2) = (r * l1 / (2.0 * mf), r * l2 / (2.0 * mf));
    let mut boxes = Vec::with_capacity(m * m);
    for k2 in 1..=m {
        let c2 = (2 * k2 - 1) as f64 * l2 / (2.0 * mf);
        for k1 in 1..=m {
            let c1 = (2 * k1 - 1) as f64 * l1 / (2.0 * mf);
            boxes.push(ActuatorBox {
                lo: [c1 - h1, c2 - h2],
                hi: [c1 + h1, c2 + h2],
            });
        }
    }
    Ok(ActuatorGrid {
        m,
        width_fraction: r,
        domain,
        boxes,
    })
}

/// `B_ij = ∫ φ_i 1_{ω_j}`, stored by columns, plus the actuator volumes
/// (the diagonal of the actuator Gram matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n_nodes: usize,
    columns: Vec<Vec<(usize, f64)>>,
    volumes: Vec<f64>,
}

impl CouplingMatrix {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_actuators(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// `out += B u`
    pub fn apply_add(&self, u: &[f64], out: &mut [f64]) {
        for (col, &uj) in self.columns.iter().zip(u) {
            for &(i, b) in col {
                out[i] += uj * b;
            }
        }
    }

    /// `Bᵀ z`, i.e. the pairings `(z, 1_{ω_j})_{L²}`.
    pub fn transpose_apply(&self, z: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, b)| b * z[i]).sum())
            .collect()
    }

    /// Dense row-major `n_nodes × M_σ` copy, for small problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let m = self.n_actuators();
        let mut d = vec![0.0; self.n_nodes * m];
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, b) in col {
                d[i * m + j] = b;
            }
        }
        d
    }
}

// Sutherland–Hodgman against one axis-aligned half plane.
fn clip_half_plane(poly: &[[f64; 2]], axis: usize, bound: f64, keep_above: bool) -> Vec<[f64; 2]> {
    let inside = |p: &[f64; 2]| {
        if keep_above {
            p[axis] >= bound
        } else {
            p[axis] <= bound
        }
    };
    let mut out = Vec::with_capacity(poly.len() + 2);
    for (idx, cur) in poly.iter().enumerate() {
        let prev = &poly[(idx + poly.len() - 1) % poly.len()];
        let (cin, pin) = (inside(cur), inside(prev));
        if cin != pin {
            let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
            let mut x = [
                prev[0] + t * (cur[0] - prev[0]),
                prev[1] + t * (cur[1] - prev[1]),
            ];
            x[axis] = bound;
            out.push(x);
        }
        if cin {
            out.push(*cur);
        }
    }
    out
}

fn clip_to_box(tri: [[f64; 2]; 3], b: &ActuatorBox) -> Vec<[f64; 2]> {
    let mut poly = tri.to_vec();
    for (axis, bound, above) in [
        (0, b.lo[0], true),
        (0, b.hi[0], false),
        (1, b.lo[1], true),
        (1, b.hi[1], false),
    ] {
        if poly.is_empty() {
            break;
        }
        poly = clip_half_plane(&poly, axis, bound, above);
    }
    poly
}

/// Area and centroid of a simple polygon.
fn area_centroid(poly: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let n = poly.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    // shift to the first vertex to limit cancellation
    let o = poly[0];
    for i in 0..n {
        let p = [poly[i][0] - o[0], poly[i][1] - o[1]];
        let q = [poly[(i + 1) % n][0] - o[0], poly[(i + 1) % n][1] - o[1]];
        let cross = p[0] * q[1] - q[0] * p[1];
        a += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    let area = 0.5 * a;
    if area <= 0.0 {
        return (0.0, o);
    }
    (area, [o[0] + cx / (6.0 * area), o[1] + cy / (6.0 * area)])
}

fn barycentric(tri: &[[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Integrates every shape function against every box indicator exactly:
/// triangles are clipped to the box and the linear shape function is
/// integrated over the clipped polygon (area times centroid value).
pub fn discretize_actuators(grid: &ActuatorGrid, mesh: &StructuredTriangulation) -> CouplingMatrix {
    let (nx, ny) = mesh.subdivisions();
    let [hx, hy] = mesh.spacing();
    let cell_range = |lo: f64, hi: f64, h: f64, n: usize| {
        let a = (libm::floor(lo / h) as isize - 1).max(0) as usize;
        let b = ((libm::ceil(hi / h) as isize + 1).max(0) as usize).min(n);
        a..b
    };
    let columns = grid
        .boxes()
        .iter()
        .map(|b| {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for j in cell_range(b.lo[1], b.hi[1], hy, ny) {
                for i in cell_range(b.lo[0], b.hi[0], hx, nx) {
                    for t in mesh.cell_triangles(i, j) {
                        let verts = mesh.vertices(t);
                        let poly = clip_to_box(verts, b);
                        if poly.len() < 3 {
                            continue;
                        }
                        let (area, centroid) = area_centroid(&poly);
                        if area <= 0.0 {
                            continue;
                        }
                        let lam = barycentric(&verts, centroid);
                        for (node, l) in mesh.triangles()[t].iter().zip(lam) {
                            *acc.entry(*node).or_insert(0.0) += area * l;
                        }
                    }
                }
            }
            acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
        })
        .collect();
    CouplingMatrix {
        n_nodes: mesh.n_nodes(),
        columns,
        volumes: grid.volumes(),
    }
}

/// Load vector `B u`: the pairing of `U⋄u = Σ u_j 1_{ω_j}` with every shape function.
pub fn apply_control_operator(b: &CouplingMatrix, u: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(b.n_actuators(), u.len())?;
    let mut out = vec![0.0; b.n_nodes()];
    b.apply_add(u, &mut out);
    Ok(out)
}

/// Coefficients of the L² orthogonal projection of `z` onto the actuator span:
/// `c_j = (z, 1_{ω_j}) / vol(ω_j)`.
pub fn project_onto_actuator_span(z: &[f64], b: &CouplingMatrix) -> Result<ControlVector> {
    Error::check_len(b.n_nodes(), z.len())?;
    let pairing = b.transpose_apply(z);
    pairing
        .iter()
        .zip(b.volumes())
        .map(|(p, g)| {
            if *g > 0.0 {
                Ok(p / g)
            } else {
                Err(Error::invalid("actuator with zero volume"))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(ControlVector)
}

/// `‖Σ c_j 1_{ω_j}‖²_{L²} = Σ c_j² vol(ω_j)`.
pub fn span_norm_sq(coeffs: &[f64], b: &CouplingMatrix) -> f64 {
    coeffs.iter().zip(b.volumes()).map(|(c, g)| c * c * g).sum()
}

/// Operator norm of `(U⋄)^{-1} P` from L² into the Euclidean amplitude
/// space: `(min_j vol ω_j)^{-1/2}`.
pub fn control_operator_inverse_norm(grid: &ActuatorGrid) -> f64 {
    let vmin = grid.volumes().into_iter().fold(f64::INFINITY, f64::min);
    1.0 / math::sqrt(vmin)
}
