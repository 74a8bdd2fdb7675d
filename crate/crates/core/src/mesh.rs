//! Curved-triangle mesh hierarchy of the disk `B` and panel meshes of the
//! boundaries `Σ` and `Γ`.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::Result;
use crate::geometry::{Circle, ClosedCurve, PerturbationSpec, Point, RandomBoundary, SampleVector, SIGMA_RADIUS};
use crate::quadrature::gauss_legendre;

/// Number of boundary edges (and panels) on level 0.
pub const COARSE_PANELS: usize = 8;

/// Panel count of `Σ` and of `Γ` on the given level.
pub fn panels_on_level(level: usize) -> usize {
    COARSE_PANELS << level
}

/// Arc of the disk boundary between the angles `2π index / segments` and
/// `2π (index + 1) / segments`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryArc {
    pub index: usize,
    pub segments: usize,
}

impl BoundaryArc {
    pub fn start_angle(&self) -> f64 {
        boundary_angle(self.index, self.segments)
    }

    pub fn end_angle(&self) -> f64 {
        boundary_angle(self.index + 1, self.segments)
    }

    fn split(&self) -> (BoundaryArc, BoundaryArc) {
        let segments = 2 * self.segments;
        (BoundaryArc { index: 2 * self.index, segments }, BoundaryArc { index: 2 * self.index + 1, segments })
    }
}

fn boundary_angle(index: usize, segments: usize) -> f64 {
    TAU * index as f64 / segments as f64
}

/// Counterclockwise triangle. When `arc` is set, the edge from `vertices[1]`
/// to `vertices[2]` is the circular arc and `vertices[0]` is the opposite vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvedTriangle {
    pub vertices: [usize; 3],
    pub arc: Option<BoundaryArc>,
}

/// Conforming triangulation of the disk of radius [`SIGMA_RADIUS`] with curved
/// boundary elements.
#[derive(Debug, Clone)]
pub struct DiskMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<CurvedTriangle>,
    pub level: usize,
    /// Boundary vertices ordered counterclockwise, starting at angle zero.
    pub boundary_loop: Vec<usize>,
    pub radius: f64,
}

/// Level-0 mesh: 4 inner vertices at radius 0.1 on the diagonals, 8 boundary
/// vertices, an inner square of 2 triangles and a ring of 12 triangles.
pub fn build_coarse_disk_mesh() -> DiskMesh {
    let radius = SIGMA_RADIUS;
    let circle = Circle { radius };
    let mut vertices = Vec::with_capacity(12);
    for j in 0..4 {
        let angle = std::f64::consts::FRAC_PI_4 + j as f64 * std::f64::consts::FRAC_PI_2;
        vertices.push(0.5 * radius * Point::new(angle.cos(), angle.sin()));
    }
    for j in 0..COARSE_PANELS {
        vertices.push(circle.point(boundary_angle(j, COARSE_PANELS)));
    }
    let inner = |m: usize| m % 4;
    let bnd = |j: usize| 4 + j % COARSE_PANELS;

    let mut triangles =
        vec![CurvedTriangle { vertices: [0, 1, 2], arc: None }, CurvedTriangle { vertices: [0, 2, 3], arc: None }];
    for j in 0..COARSE_PANELS {
        triangles.push(CurvedTriangle {
            vertices: [inner(j / 2), bnd(j), bnd(j + 1)],
            arc: Some(BoundaryArc { index: j, segments: COARSE_PANELS }),
        });
    }
    for m in 0..4 {
        triangles.push(CurvedTriangle { vertices: [inner(m + 3), bnd(2 * m), inner(m)], arc: None });
    }
    DiskMesh { vertices, triangles, level: 0, boundary_loop: (0..COARSE_PANELS).map(bnd).collect(), radius }
}

/// Builds the mesh on `level` by uniform refinement of the coarse mesh.
pub fn build_disk_mesh(level: usize) -> DiskMesh {
    (0..level).fold(build_coarse_disk_mesh(), |mesh, _| refine(&mesh))
}

/// Splits every triangle into four through its edge midpoints. Midpoints of
/// arcs are placed on the circle at the bisecting angle.
pub fn refine(mesh: &DiskMesh) -> DiskMesh {
    let circle = Circle { radius: mesh.radius };
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();

    // Arc midpoints first, in loop order, so the boundary loop is easy to rebuild.
    let mut arc_mid = Vec::with_capacity(mesh.boundary_loop.len());
    let segments = mesh.boundary_loop.len();
    for (j, &a) in mesh.boundary_loop.iter().enumerate() {
        let b = mesh.boundary_loop[(j + 1) % segments];
        let idx = vertices.len();
        vertices.push(circle.point(boundary_angle(2 * j + 1, 2 * segments)));
        midpoints.insert(edge_key(a, b), idx);
        arc_mid.push(idx);
    }

    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push(0.5 * (vertices[a] + vertices[b]));
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let [p0, p1, p2] = tri.vertices;
        let m01 = midpoint(p0, p1, &mut vertices);
        let m02 = midpoint(p0, p2, &mut vertices);
        let m12 = midpoint(p1, p2, &mut vertices);
        let (arc1, arc2) = match tri.arc {
            Some(arc) => {
                let (a, b) = arc.split();
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        triangles.push(CurvedTriangle { vertices: [p0, m01, m02], arc: None });
        triangles.push(CurvedTriangle { vertices: [m01, p1, m12], arc: arc1 });
        triangles.push(CurvedTriangle { vertices: [m02, m12, p2], arc: arc2 });
        triangles.push(CurvedTriangle { vertices: [m01, m12, m02], arc: None });
    }

    let boundary_loop = mesh.boundary_loop.iter().zip(&arc_mid).flat_map(|(&v, &m)| [v, m]).collect();

    DiskMesh { vertices, triangles, level: mesh.level + 1, boundary_loop, radius: mesh.radius }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl DiskMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Number of triangles sharing each edge.
    pub fn edge_multiplicities(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            let [a, b, c] = tri.vertices;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *counts.entry(edge_key(u, v)).or_insert(0) += 1;
            }
        }
        counts
    }

    /// `is_boundary[v]` for every vertex.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for &v in &self.boundary_loop {
            mask[v] = true;
        }
        mask
    }

    /// Plain-text dump: `v x y` per vertex, then `t i j k [curved-edge]` per
    /// triangle, where the curved edge is numbered by its opposite vertex.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {:.17e} {:.17e}", v.x, v.y)?;
        }
        for tri in &self.triangles {
            let [i, j, k] = tri.vertices;
            match tri.arc {
                Some(_) => writeln!(out, "t {i} {j} {k} 0")?,
                None => writeln!(out, "t {i} {j} {k}")?,
            }
        }
        Ok(())
    }
}

/// Side of the boundary the unit normal points to, for a counterclockwise curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalOrientation {
    /// Away from the enclosed region; the tangent rotated clockwise.
    Outward,
    /// Into the enclosed region.
    Inward,
}

impl NormalOrientation {
    /// `+1` when the normal is the clockwise rotation of the tangent.
    pub fn sign(self) -> f64 {
        match self {
            NormalOrientation::Outward => 1.0,
            NormalOrientation::Inward => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            NormalOrientation::Outward => NormalOrientation::Inward,
            NormalOrientation::Inward => NormalOrientation::Outward,
        }
    }
}

/// Panels of a closed parametric curve. Panel `p` covers the parameter
/// interval `[breakpoints[p], breakpoints[p + 1]]`; it carries one constant
/// degree of freedom, and node `j` (the start of panel `j`) one continuous
/// piecewise-linear degree of freedom.
#[derive(Clone)]
pub struct BoundaryMesh {
    curve: Arc<dyn ClosedCurve>,
    breakpoints: Vec<f64>,
    orientation: NormalOrientation,
}

impl std::fmt::Debug for BoundaryMesh {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryMesh")
            .field("panels", &self.panel_count())
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl BoundaryMesh {
    /// Panels at uniformly spaced parameters `2π j / panels`.
    pub fn uniform(curve: Arc<dyn ClosedCurve>, panels: usize, orientation: NormalOrientation) -> Self {
        assert!(panels >= 3, "a closed panel mesh needs at least three panels");
        let breakpoints = (0..=panels).map(|j| boundary_angle(j, panels)).collect();
        Self { curve, breakpoints, orientation }
    }

    pub fn with_orientation(&self, orientation: NormalOrientation) -> Self {
        Self { orientation, ..self.clone() }
    }

    pub fn curve(&self) -> &dyn ClosedCurve {
        self.curve.as_ref()
    }

    pub fn orientation(&self) -> NormalOrientation {
        self.orientation
    }

    pub fn panel_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Linear nodes; the mesh is periodic so this equals the panel count.
    pub fn node_count(&self) -> usize {
        self.panel_count()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn panel_interval(&self, p: usize) -> (f64, f64) {
        (self.breakpoints[p], self.breakpoints[p + 1])
    }

    /// Start and end node of panel `p`.
    pub fn panel_nodes(&self, p: usize) -> (usize, usize) {
        (p, (p + 1) % self.panel_count())
    }

    pub fn node_point(&self, j: usize) -> Point {
        self.curve.point(self.breakpoints[j])
    }

    /// Unit normal at parameter `phi`.
    pub fn normal(&self, phi: f64) -> Point {
        let t = self.curve.derivative(phi);
        self.orientation.sign() * Point::new(t.y, -t.x) / t.norm()
    }

    /// Arc length of panel `p`.
    pub fn panel_length(&self, p: usize) -> f64 {
        let (a, b) = self.panel_interval(p);
        gauss_legendre(24).iter().map(|(s, w)| w * (b - a) * self.curve.derivative(a + s * (b - a)).norm()).sum()
    }
}

/// Panel mesh of `Σ` induced by the boundary edges of the disk mesh. Node `j`
/// coincides with vertex `mesh.boundary_loop[j]`; normals point out of `B`.
pub fn build_sigma_mesh(mesh: &DiskMesh) -> BoundaryMesh {
    BoundaryMesh::uniform(
        Arc::new(Circle { radius: mesh.radius }),
        mesh.boundary_loop.len(),
        NormalOrientation::Outward,
    )
}

/// Panel mesh of the sampled boundary `Γ[y]` with normals pointing into the domain.
pub fn build_gamma_mesh(y: &SampleVector, spec: &PerturbationSpec, level: usize) -> Result<BoundaryMesh> {
    let boundary = RandomBoundary::sample(y, spec)?;
    Ok(BoundaryMesh::uniform(Arc::new(boundary), panels_on_level(level), NormalOrientation::Inward))
}

/// Finite element and boundary element degree-of-freedom counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofCounts {
    pub level: usize,
    /// Vertices of the disk mesh.
    pub fe: usize,
    /// Piecewise-constant unknowns on `Σ` and `Γ` together.
    pub be: usize,
}

/// Counts from the refinement recurrences, without building the mesh.
pub fn dof_counts(level: usize) -> DofCounts {
    let coarse = build_coarse_disk_mesh();
    let mut vertices = coarse.vertices.len();
    let mut faces = coarse.triangles.len();
    let mut edges = (3 * faces + coarse.boundary_loop.len()) / 2;
    for _ in 0..level {
        vertices += edges;
        edges = 2 * edges + 3 * faces;
        faces *= 4;
    }
    DofCounts { level, fe: vertices, be: 2 * panels_on_level(level) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_area(mesh: &DiskMesh, tri: &CurvedTriangle) -> f64 {
        let [a, b, c] = tri.vertices.map(|i| mesh.vertices[i]);
        0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
    }

    #[test]
    fn coarse_mesh_counts() {
        let mesh = build_coarse_disk_mesh();
        assert_eq!(mesh.triangles.len(), 14);
        assert_eq!(mesh.vertices.len(), 12);
        assert_eq!(mesh.boundary_loop.len(), 8);
        assert_eq!(mesh.triangles.iter().filter(|t| t.arc.is_some()).count(), 8);
        for &v in &mesh.boundary_loop {
            assert!((mesh.vertices[v].norm() - 0.2).abs() < 1e-14);
        }
        let edges = mesh.edge_multiplicities();
        assert_eq!(edges.len(), 25);
        // Euler: V - E + F = 1 for a disk
        assert_eq!(12 + 14, 25 + 1);
    }

    #[test]
    fn refinement_matches_vertex_table() {
        let mut mesh = build_coarse_disk_mesh();
        let expected = [37, 129, 481, 1857];
        for &n in &expected {
            mesh = refine(&mesh);
            assert_eq!(mesh.vertices.len(), n);
            assert_eq!(mesh.triangles.len(), 14 * 4usize.pow(mesh.level as u32));
            assert_eq!(mesh.boundary_loop.len(), 8 << mesh.level);
        }
    }

    #[test]
    fn meshes_are_conforming_and_positively_oriented() {
        for level in 0..=3 {
            let mesh = build_disk_mesh(level);
            let edges = mesh.edge_multiplicities();
            let boundary: usize = edges.values().filter(|&&c| c == 1).count();
            assert_eq!(boundary, 8 << level);
            assert!(edges.values().all(|&c| c == 1 || c == 2));
            let mask = mesh.boundary_mask();
            for (&(a, b), &c) in &edges {
                if c == 1 {
                    assert!(mask[a] && mask[b]);
                }
            }
            for tri in &mesh.triangles {
                assert!(signed_area(&mesh, tri) > 0.0);
                if let Some(arc) = tri.arc {
                    let [_, p1, p2] = tri.vertices;
                    let c = Circle { radius: 0.2 };
                    assert!((mesh.vertices[p1] - c.point(arc.start_angle())).norm() < 1e-15);
                    assert!((mesh.vertices[p2] - c.point(arc.end_angle())).norm() < 1e-15);
                }
            }
            let euler = mesh.vertices.len() as i64 - edges.len() as i64 + mesh.triangles.len() as i64;
            assert_eq!(euler, 1);
        }
    }

    #[test]
    fn sigma_panels_coincide_with_boundary_edges() {
        for level in 0..=3 {
            let mesh = build_disk_mesh(level);
            let sigma = build_sigma_mesh(&mesh);
            assert_eq!(sigma.panel_count(), 8 << level);
            for (j, &v) in mesh.boundary_loop.iter().enumerate() {
                assert_eq!(sigma.node_point(j), mesh.vertices[v]);
            }
            let bp = sigma.breakpoints();
            assert_eq!(bp[0], 0.0);
            assert_eq!(*bp.last().unwrap(), TAU);
            assert!(bp.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn gamma_mesh_on_unperturbed_ellipse() {
        let spec = PerturbationSpec::default();
        let y = SampleVector::zeros(129);
        let gamma = build_gamma_mesh(&y, &spec, 0).unwrap();
        assert_eq!(gamma.panel_count(), 8);
        let p = gamma.node_point(0);
        assert!((p - Point::new(0.6, 0.0)).norm() < 1e-15);
        let gamma3 = build_gamma_mesh(&y, &spec, 3).unwrap();
        assert_eq!(gamma3.panel_count() + build_sigma_mesh(&build_disk_mesh(3)).panel_count(), 128);
        // inner normal at φ = 0 points to -x
        let n = gamma.normal(0.0);
        assert!((n - Point::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dof_table() {
        let table = [
            (1, 37, 32),
            (2, 129, 64),
            (3, 481, 128),
            (4, 1857, 256),
            (5, 7297, 512),
            (6, 28929, 1024),
            (7, 115201, 2048),
            (8, 459777, 4096),
        ];
        for (level, fe, be) in table {
            assert_eq!(dof_counts(level), DofCounts { level, fe, be });
        }
        assert_eq!(dof_counts(3).fe, build_disk_mesh(3).vertex_count());
    }

    #[test]
    fn dump_format() {
        let mesh = build_coarse_disk_mesh();
        let mut buf = Vec::new();
        mesh.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 12);
        assert_eq!(text.lines().filter(|l| l.starts_with("t ")).count(), 14);
        assert_eq!(text.lines().filter(|l| l.split_whitespace().count() == 5).count(), 8);
    }
}
