//! Piecewise-linear finite elements on the curved disk mesh.

use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{boundary_point, Circle, ClosedCurve, PerturbationSpec, Point, SampleVector};
use crate::mesh::{CurvedTriangle, DiskMesh};
use crate::quadrature::triangle_degree5;

/// Geometry map of one element: affine in the barycentric coordinates plus a
/// Zlámal blending term that bends the edge `vertices[1] → vertices[2]` onto
/// its arc.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    corners: [Point; 3],
    /// `(radius, start angle, angle span)` of the curved edge
    arc: Option<(f64, f64, f64)>,
}

impl ElementMap {
    pub fn new(mesh: &DiskMesh, tri: &CurvedTriangle) -> Self {
        let corners = tri.vertices.map(|v| mesh.vertices[v]);
        let arc = tri.arc.map(|a| {
            let start = a.start_angle();
            (mesh.radius, start, a.end_angle() - start)
        });
        Self { corners, arc }
    }

    /// Image of the reference point and the Jacobian `[∂x/∂ξ ∂x/∂η]`.
    pub fn map(&self, xi: f64, eta: f64) -> (Point, Matrix2<f64>) {
        let [p0, p1, p2] = self.corners;
        let mut x = p0 + xi * (p1 - p0) + eta * (p2 - p0);
        let mut d_xi = p1 - p0;
        let mut d_eta = p2 - p0;
        if let Some((radius, start, span)) = self.arc {
            let s = xi + eta;
            if s > 0.0 {
                let t = eta / s;
                let circle = Circle { radius };
                let (c, dc) = circle.evaluate(start + t * span);
                let gap = c - p1 - t * (p2 - p1);
                let dgap = span * dc - (p2 - p1);
                x += s * gap;
                d_xi += gap - t * dgap;
                d_eta += gap + (1.0 - t) * dgap;
            }
        }
        (x, Matrix2::from_columns(&[d_xi, d_eta]))
    }
}

/// Values and physical gradients of the three shape functions, with the
/// quadrature weight times `|det J|`, at each point of the element rule.
struct ElementSample {
    point: Point,
    weight: f64,
    grads: [Vector2<f64>; 3],
}

const REFERENCE_GRADS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

fn element_samples(map: &ElementMap) -> impl Iterator<Item = (ElementSample, [f64; 3])> + '_ {
    triangle_degree5().into_iter().map(move |q| {
        let (point, jac) = map.map(q.xi, q.eta);
        let det = jac.determinant();
        let inv_t = jac.try_inverse().expect("non-degenerate element").transpose();
        let grads = REFERENCE_GRADS.map(|g| inv_t * Vector2::new(g[0], g[1]));
        let values = [1.0 - q.xi - q.eta, q.xi, q.eta];
        (ElementSample { point, weight: q.weight * det.abs(), grads }, values)
    })
}

fn element_stiffness(map: &ElementMap) -> [[f64; 3]; 3] {
    let mut local = [[0.0; 3]; 3];
    for (s, _) in element_samples(map) {
        for i in 0..3 {
            for j in 0..3 {
                local[i][j] += s.weight * s.grads[i].dot(&s.grads[j]);
            }
        }
    }
    local
}

/// Stiffness matrix `A[k, k'] = ∫_B ∇φ_k' · ∇φ_k`, indexed by mesh vertex.
pub fn assemble_stiffness(mesh: &DiskMesh) -> SparseColMat<usize, f64> {
    let locals: Vec<[[f64; 3]; 3]> =
        mesh.triangles.par_iter().map(|tri| element_stiffness(&ElementMap::new(mesh, tri))).collect();
    let mut triplets = Vec::with_capacity(9 * locals.len());
    for (tri, local) in mesh.triangles.iter().zip(&locals) {
        for i in 0..3 {
            for j in 0..3 {
                triplets.push(Triplet::new(tri.vertices[i], tri.vertices[j], local[i][j]));
            }
        }
    }
    let n = mesh.vertex_count();
    SparseColMat::try_new_from_triplets(n, n, &triplets).expect("valid triplets")
}

/// Load vector `b[k] = ∫_B f φ_k`. Under the Newton-potential ansatz the
/// source is zero in `B`; the general form is kept for manufactured tests.
pub fn assemble_load(mesh: &DiskMesh, f: &(dyn Fn(Point) -> f64 + Sync)) -> Vec<f64> {
    let locals: Vec<[f64; 3]> = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            let mut local = [0.0; 3];
            for (s, values) in element_samples(&ElementMap::new(mesh, tri)) {
                let fx = f(s.point);
                for i in 0..3 {
                    local[i] += s.weight * fx * values[i];
                }
            }
            local
        })
        .collect();
    let mut load = vec![0.0; mesh.vertex_count()];
    for (tri, local) in mesh.triangles.iter().zip(&locals) {
        for i in 0..3 {
            load[tri.vertices[i]] += local[i];
        }
    }
    load
}

/// Newton potential of `f = 1`: `-|x|² / 4`.
pub fn newton_potential(x: Point) -> f64 {
    -0.25 * x.norm_squared()
}

pub fn newton_gradient(x: Point) -> Vector2<f64> {
    -0.5 * x
}

/// Dirichlet data of the reduced problem, `g̃ = -N_f` on `Γ[y]`.
pub fn dirichlet_data(y: &SampleVector, spec: &PerturbationSpec, phi: f64) -> Result<f64> {
    Ok(-newton_potential(boundary_point(y, spec, phi)?))
}

/// Piecewise-linear function on the disk mesh of the given level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub level: usize,
    pub coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(mesh: &DiskMesh) -> Self {
        Self { level: mesh.level, coefficients: vec![0.0; mesh.vertex_count()] }
    }

    /// Nodal interpolant.
    pub fn interpolate(mesh: &DiskMesh, f: impl Fn(Point) -> f64) -> Self {
        Self { level: mesh.level, coefficients: mesh.vertices.iter().map(|&v| f(v)).collect() }
    }

    fn check_mesh(&self, mesh: &DiskMesh) {
        assert_eq!(self.level, mesh.level, "function and mesh levels differ");
        assert_eq!(self.coefficients.len(), mesh.vertex_count());
    }
}

/// Element-wise sum of `integrand(x, u_h(x), ∇u_h(x)) dx` by the degree-5 rule,
/// accumulated in element order.
fn integrate_function(
    mesh: &DiskMesh,
    u: &FeFunction,
    integrand: &(dyn Fn(Point, f64, Vector2<f64>) -> f64 + Sync),
) -> f64 {
    u.check_mesh(mesh);
    let parts: Vec<f64> = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            let coef = tri.vertices.map(|v| u.coefficients[v]);
            element_samples(&ElementMap::new(mesh, tri))
                .map(|(s, values)| {
                    let value: f64 = (0..3).map(|i| coef[i] * values[i]).sum();
                    let grad: Vector2<f64> = (0..3).map(|i| coef[i] * s.grads[i]).sum();
                    s.weight * integrand(s.point, value, grad)
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum()
}

/// `½ ∫_B |u_h - ū|²`.
pub fn evaluate_qoi(mesh: &DiskMesh, u: &FeFunction, u_bar: &(dyn Fn(Point) -> f64 + Sync)) -> f64 {
    0.5 * integrate_function(mesh, u, &|x, value, _| (value - u_bar(x)).powi(2))
}

/// `∫_B u_h`.
pub fn integrate(mesh: &DiskMesh, u: &FeFunction) -> f64 {
    integrate_function(mesh, u, &|_, value, _| value)
}

/// Area of the curved mesh.
pub fn mesh_area(mesh: &DiskMesh) -> f64 {
    integrate(mesh, &FeFunction::interpolate(mesh, |_| 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Full `H¹(B)` norm of the error.
    pub h1: f64,
}

/// Errors of `u_h` against a smooth reference given as `(value, gradient)`.
pub fn error_norms(
    mesh: &DiskMesh,
    u: &FeFunction,
    reference: &(dyn Fn(Point) -> (f64, Vector2<f64>) + Sync),
) -> ErrorNorms {
    let l2_sq = integrate_function(mesh, u, &|x, value, _| (value - reference(x).0).powi(2));
    let semi_sq = integrate_function(mesh, u, &|x, _, grad| (grad - reference(x).1).norm_squared());
    ErrorNorms { l2: l2_sq.sqrt(), h1: (l2_sq + semi_sq).sqrt() }
}

/// Sparse matrix-vector product, `A x`.
pub fn sparse_apply(a: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    let a = a.as_ref();
    for col in 0..a.ncols() {
        for (row, val) in a.row_idx_of_col(col).zip(a.val_of_col(col)) {
            out[row] += val * x[col];
        }
    }
    out
}
