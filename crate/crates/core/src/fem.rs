//! Structured triangulations of a rectangle and P1 finite-element operators
//! with natural (homogeneous Neumann) boundary conditions.

use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::CsrMatrix;

/// The rectangle `(0, L1) × (0, L2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectangleDomain {
    lengths: [f64; 2],
}

impl RectangleDomain {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::invalid("rectangle side lengths must be positive"));
        }
        Ok(RectangleDomain { lengths: [l1, l2] })
    }

    pub fn unit_square() -> Self {
        RectangleDomain { lengths: [1.0, 1.0] }
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    pub fn area(&self) -> f64 {
        self.lengths[0] * self.lengths[1]
    }
}

/// Uniform `nx × ny` grid of cells, each split along its lower-left to
/// upper-right diagonal. Node `(i, j)` has index `j * (nx + 1) + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredTriangulation {
    domain: RectangleDomain,
    nx: usize,
    ny: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

impl StructuredTriangulation {
    pub fn domain(&self) -> &RectangleDomain {
        &self.domain
    }

    pub fn subdivisions(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Indices of the two triangles that split cell `(i, j)`.
    pub fn cell_triangles(&self, i: usize, j: usize) -> [usize; 2] {
        let c = 2 * (j * self.nx + i);
        [c, c + 1]
    }

    /// Mesh widths `(hx, hy)`.
    pub fn spacing(&self) -> [f64; 2] {
        let [l1, l2] = self.domain.lengths();
        [l1 / self.nx as f64, l2 / self.ny as f64]
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area of triangle `t` (positive for counter-clockwise order).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.vertices(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> NodalField {
        NodalField(self.nodes.iter().map(|&x| f(x)).collect())
    }

    pub fn constant(&self, c: f64) -> NodalField {
        NodalField(alloc::vec![c; self.n_nodes()])
    }

    pub fn zeros(&self) -> NodalField {
        self.constant(0.0)
    }
}

/// Coefficient vector of a P1 function on a particular mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField(pub Vec<f64>);

impl NodalField {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(v: Vec<f64>) -> Self {
        NodalField(v)
    }
}

pub fn build_mesh(nx: usize, ny: usize, domain: RectangleDomain) -> Result<StructuredTriangulation> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("mesh subdivision counts must be at least 1"));
    }
    let [l1, l2] = domain.lengths();
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([l1 * i as f64 / nx as f64, l2 * j as f64 / ny as f64]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(StructuredTriangulation {
        domain,
        nx,
        ny,
        nodes,
        triangles,
    })
}

/// Gradients of the three barycentric shape functions on triangle `t`.
fn shape_gradients(mesh: &StructuredTriangulation, t: usize) -> [[f64; 2]; 3] {
    let [p, q, r] = mesh.vertices(t);
    let two_area = 2.0 * mesh.signed_area(t);
    [
        [(q[1] - r[1]) / two_area, (r[0] - q[0]) / two_area],
        [(r[1] - p[1]) / two_area, (p[0] - r[0]) / two_area],
        [(p[1] - q[1]) / two_area, (q[0] - p[0]) / two_area],
    ]
}

/// Consistent mass matrix `M_ij = ∫ φ_i φ_j`.
pub fn assemble_mass(mesh: &StructuredTriangulation) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(t);
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { 2.0 } else { 1.0 };
                triplets.push((tri[a], tri[b], area * w / 12.0));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), triplets)
}

/// Stiffness matrix `K_ij = ν ∫ ∇φ_i · ∇φ_j`.
pub fn assemble_stiffness(mesh: &StructuredTriangulation, nu: f64) -> Result<CsrMatrix> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid("diffusion coefficient must be positive"));
    }
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(t);
        let g = shape_gradients(mesh, t);
        for a in 0..3 {
            for b in 0..3 {
                let v = nu * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                triplets.push((tri[a], tri[b], v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.n_nodes(), triplets))
}

/// `aᵀ M b`, the L² inner product of two P1 functions.
pub fn l2_inner(a: &[f64], b: &[f64], mass: &CsrMatrix) -> Result<f64> {
    Error::check_len(mass.dim(), a.len())?;
    Error::check_len(mass.dim(), b.len())?;
    Ok(mass.inner(a, b))
}

pub fn l2_norm(a: &[f64], mass: &CsrMatrix) -> Result<f64> {
    Ok(math::sqrt(l2_inner(a, a, mass)?.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn unit(n: usize) -> StructuredTriangulation {
        build_mesh(n, n, RectangleDomain::unit_square()).unwrap()
    }

    #[test]
    fn single_cell_counts() {
        let m = unit(1);
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.n_triangles(), 2);
        let area: f64 = (0..2).map(|t| m.signed_area(t)).sum();
        assert_eq!(area, 1.0);
    }

    #[test]
    fn counting_formula() {
        let m = build_mesh(2, 3, RectangleDomain::unit_square()).unwrap();
        assert_eq!(m.n_nodes(), 12);
        assert_eq!(m.n_triangles(), 12);
    }

    #[test]
    fn fine_mesh_tiles_exactly() {
        let m = unit(40);
        assert_eq!(m.n_nodes(), 1681);
        // Kahan-compensated sum of the areas
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in 0..m.n_triangles() {
            let a = m.signed_area(t);
            assert!(a > 0.0);
            let y = a - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
        }
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(build_mesh(0, 3, RectangleDomain::unit_square()).is_err());
        assert!(build_mesh(3, 0, RectangleDomain::unit_square()).is_err());
        assert!(RectangleDomain::new(0.0, 1.0).is_err());
    }

    #[test]
    fn mass_element_matrix_on_single_triangle() {
        // one cell = two triangles of area 1/2 each; node 1 = (1,0) only in the first
        let m = unit(1);
        let mass = assemble_mass(&m);
        let a = 0.5;
        assert!((mass.get(1, 1) - 2.0 * a / 12.0).abs() < 1e-16);
        assert!((mass.get(1, 0) - a / 12.0).abs() < 1e-16);
        assert!((mass.get(1, 3) - a / 12.0).abs() < 1e-16);
        assert_eq!(mass.get(1, 2), 0.0);
        // node 0 is shared by both triangles
        assert!((mass.get(0, 0) - 4.0 * a / 12.0).abs() < 1e-16);
    }

    #[test]
    fn mass_of_constant_is_area() {
        let m = build_mesh(7, 5, RectangleDomain::new(2.0, 0.5).unwrap()).unwrap();
        let mass = assemble_mass(&m);
        let one = m.constant(1.0);
        assert!((l2_inner(&one, &one, &mass).unwrap() - 1.0).abs() < 1e-14);
        let c = m.constant(3.0);
        let mc = mass.apply(&c);
        let rows = mass.row_sums();
        for (x, r) in mc.iter().zip(&rows) {
            assert!((x - 3.0 * r).abs() < 1e-15);
        }
        assert!((mass.inner(&c, &c) - 9.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_kernel_and_energy() {
        let nu = 0.1;
        let m = unit(9);
        let k = assemble_stiffness(&m, nu).unwrap();
        let kc = k.apply(&m.constant(2.5));
        let scale = k.max_abs();
        assert!(kc.iter().all(|v| v.abs() < 1e-14 * scale));
        let x1 = m.interpolate(|p| p[0]);
        assert!((k.inner(&x1, &x1) - nu).abs() < 1e-14);
        assert_eq!(k.max_asymmetry(), 0.0);
        assert!(assemble_stiffness(&m, 0.0).is_err());
        assert!(assemble_stiffness(&m, -1.0).is_err());
    }

    #[test]
    fn inner_product_values() {
        let m = unit(6);
        let mass = assemble_mass(&m);
        let x1 = m.interpolate(|p| p[0]);
        let one = m.constant(1.0);
        assert!((l2_inner(&x1, &one, &mass).unwrap() - 0.5).abs() < 1e-15);
        // node (0,0) and node (2,2) share no triangle
        let mut a = m.zeros();
        let mut b = m.zeros();
        a[0] = 1.0;
        b[2 * 7 + 2] = 1.0;
        assert_eq!(l2_inner(&a, &b, &mass).unwrap(), 0.0);
        assert!(l2_inner(&a, &[1.0; 3], &mass).is_err());
    }

    #[test]
    fn assembly_is_deterministic() {
        let m = unit(11);
        assert_eq!(assemble_mass(&m), assemble_mass(&m));
        assert_eq!(
            assemble_stiffness(&m, 0.3).unwrap(),
            assemble_stiffness(&m, 0.3).unwrap()
        );
        assert_eq!(assemble_mass(&m).max_asymmetry(), 0.0);
    }

    #[test]
    fn interpolant_norm_converges_quadratically() {
        let errs: Vec<f64> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| {
                let m = unit(n);
                let mass = assemble_mass(&m);
                let w = m.interpolate(|p| {
                    libm::sin(core::f64::consts::PI * p[0]) * libm::sin(core::f64::consts::PI * p[1])
                });
                (l2_norm(&w, &mass).unwrap() - 0.5).abs()
            })
            .collect();
        for pair in errs.windows(2) {
            let rate = libm::log2(pair[0] / pair[1]);
            assert!(rate > 1.9, "observed rate {rate}");
        }
    }
}
