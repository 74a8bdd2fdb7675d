//! Galerkin boundary element matrices of the 2D Laplace layer operators.
//!
//! Densities are piecewise constant (one value per panel) or continuous
//! piecewise linear (one value per node) in the curve parameter. Panels are
//! integrated on the exact parametrisation. Touching panel pairs use Duffy
//! coordinates with the logarithm split off and integrated by a Gauss rule for
//! the weight `-ln x`; separated pairs use tensor Gauss rules whose order
//! follows the separation of the pair.

use std::f64::consts::PI;

use faer::Mat;
use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{LocalCurve, Point};
use crate::mesh::BoundaryMesh;
use crate::quadrature::{gauss_legendre, gauss_log, Rule1d};

const INV_2PI: f64 = 0.5 / PI;

/// `-(1/2π) ln |x - z|`.
pub fn fundamental_solution(x: Point, z: Point) -> Result<f64> {
    let r = (x - z).norm();
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(-INV_2PI * r.ln())
}

/// Quadrature settings. `near` is the one-dimensional order used on touching
/// panel pairs and for boundary mass matrices; separated pairs use an order
/// derived from their separation, multiplied by `far_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureOrders {
    pub near: usize,
    pub far_scale: usize,
}

impl Default for QuadratureOrders {
    fn default() -> Self {
        Self { near: 16, far_scale: 1 }
    }
}

impl QuadratureOrders {
    pub fn doubled(self) -> Self {
        Self { near: 2 * self.near, far_scale: 2 * self.far_scale }
    }
}

const FAR_MIN_ORDER: usize = 3;
const FAR_MAX_ORDER: usize = 24;

/// Gauss order for a panel whose nearest singularity lies `gap` away from a
/// panel of half-width `radius`: the Bernstein-ellipse estimate for sixteen
/// digits, plus one.
fn far_order(gap: f64, radius: f64) -> usize {
    let x = 1.0 + (gap / radius).max(0.0);
    let rho = x + (x * x - 1.0).sqrt();
    if rho <= 1.0 {
        return FAR_MAX_ORDER;
    }
    let n = (16.0 * std::f64::consts::LN_10 / (2.0 * rho.ln())).ceil() as usize + 1;
    n.clamp(FAR_MIN_ORDER, FAR_MAX_ORDER)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    x: Point,
    /// derivative with respect to the local panel parameter in `[0, 1]`
    dx: Vector2<f64>,
    jac: f64,
}

/// Points of a touching-pair rule on `[0, 1]²` in (test, trial) local
/// parameters. The log part contributes `Σ w F(s, t)`, i.e. its weights
/// already carry the logarithm of the Duffy radius; the regular part
/// contributes `Σ w F(s, t) ln(|x - z| / d)`.
struct NearRule {
    log: Vec<(f64, f64, f64)>,
    regular: Vec<(f64, f64, f64, f64)>,
}

impl NearRule {
    /// Identical panels: the square is split along the diagonal and each half
    /// mapped so that the parameter distance `|s - t|` is a coordinate.
    fn same(gl: &Rule1d, lg: &Rule1d) -> Self {
        let mut log = Vec::new();
        let mut regular = Vec::new();
        let mut push = |u: f64, v: f64, w: f64, reg: bool| {
            let hi = u + (1.0 - u) * v;
            let lo = (1.0 - u) * v;
            for (s, t) in [(hi, lo), (lo, hi)] {
                if reg {
                    regular.push((s, t, w * (1.0 - u), u));
                } else {
                    log.push((s, t, -w * (1.0 - u)));
                }
            }
        };
        for (u, wu) in lg.iter() {
            for (v, wv) in gl.iter() {
                push(u, v, wu * wv, false);
            }
        }
        for (u, wu) in gl.iter() {
            for (v, wv) in gl.iter() {
                push(u, v, wu * wv, true);
            }
        }
        Self { log, regular }
    }

    /// Panels sharing one node. In distances `(a, b)` from the shared node,
    /// each half of the square is Duffy-mapped onto `ρ (1, w)` or `ρ (w, 1)`.
    /// `to_local` turns `(a, b)` into `(s, t)`.
    fn touching(gl: &Rule1d, lg: &Rule1d, to_local: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut log = Vec::new();
        let mut regular = Vec::new();
        for (rho, wr) in lg.iter() {
            for (w, ww) in gl.iter() {
                for (a, b) in [(rho, rho * w), (rho * w, rho)] {
                    let (s, t) = to_local(a, b);
                    log.push((s, t, -wr * ww * rho));
                }
            }
        }
        for (rho, wr) in gl.iter() {
            for (w, ww) in gl.iter() {
                for (a, b) in [(rho, rho * w), (rho * w, rho)] {
                    let (s, t) = to_local(a, b);
                    regular.push((s, t, wr * ww * rho, rho));
                }
            }
        }
        Self { log, regular }
    }
}

struct Rules {
    /// Gauss-Legendre rules indexed by order
    gl: Vec<Rule1d>,
    same: NearRule,
    /// trial panel follows the test panel
    forward: NearRule,
    /// trial panel precedes the test panel
    backward: NearRule,
}

impl Rules {
    fn new(orders: QuadratureOrders) -> Self {
        let max = (FAR_MAX_ORDER * orders.far_scale).max(orders.near);
        let gl: Vec<Rule1d> = (0..=max)
            .map(|n| if n == 0 { Rule1d { nodes: vec![], weights: vec![] } } else { gauss_legendre(n) })
            .collect();
        let near = &gl[orders.near];
        let lg = gauss_log(orders.near);
        Self {
            same: NearRule::same(near, &lg),
            forward: NearRule::touching(near, &lg, |a, b| (1.0 - a, b)),
            backward: NearRule::touching(near, &lg, |a, b| (a, 1.0 - b)),
            gl,
        }
    }
}

/// A boundary mesh prepared for assembly: local evaluators per panel and the
/// Gauss samples for every far-field order.
struct Prepared<'a> {
    mesh: &'a BoundaryMesh,
    locals: Vec<LocalCurve<'a>>,
    centers: Vec<Point>,
    radii: Vec<f64>,
    /// `far[p][n]`: samples of panel `p` at the Gauss-Legendre nodes of order `n`
    far: Vec<Vec<Vec<Sample>>>,
    sign: f64,
    scale: usize,
}

impl<'a> Prepared<'a> {
    fn new(mesh: &'a BoundaryMesh, rules: &Rules, scale: usize) -> Self {
        let n = mesh.panel_count();
        let locals: Vec<LocalCurve<'a>> = (0..n)
            .map(|p| {
                let (a, b) = mesh.panel_interval(p);
                mesh.curve().local(a, b)
            })
            .collect();
        let mut this = Self {
            mesh,
            locals,
            centers: Vec::with_capacity(n),
            radii: Vec::with_capacity(n),
            far: Vec::new(),
            sign: mesh.orientation().sign(),
            scale,
        };
        for p in 0..n {
            let c = this.sample(p, 0.5).x;
            let r = (this.sample(p, 0.0).x - c).norm().max((this.sample(p, 1.0).x - c).norm());
            this.centers.push(c);
            this.radii.push(r);
        }
        this.far = (0..n)
            .into_par_iter()
            .map(|p| {
                (0..=FAR_MAX_ORDER)
                    .map(|k| {
                        if k < FAR_MIN_ORDER {
                            Vec::new()
                        } else {
                            rules.gl[k * scale].nodes.iter().map(|&s| this.sample(p, s)).collect()
                        }
                    })
                    .collect()
            })
            .collect();
        this
    }

    fn sample(&self, p: usize, s: f64) -> Sample {
        let (a, b) = self.mesh.panel_interval(p);
        let (x, d) = self.locals[p].evaluate(a + s * (b - a));
        let dx = (b - a) * d;
        Sample { x, dx, jac: dx.norm() }
    }

    fn len(&self) -> usize {
        self.locals.len()
    }
}

/// Integrals over one (test panel, trial panel) pair.
#[derive(Debug, Clone, Copy, Default)]
struct PairIntegrals {
    /// `∫∫ G` against arc length on both panels
    v: f64,
    /// `∫∫ G` in local parameters, the hypersingular building block
    v_local: f64,
    /// double layer from the trial panel's two hat functions, tested with the
    /// indicator of the test panel
    k_forward: [f64; 2],
    /// the same with the roles of the panels exchanged
    k_reverse: [f64; 2],
}

impl PairIntegrals {
    fn add_log(&mut self, w: f64, a: &Sample, b: &Sample) {
        self.v += -INV_2PI * w * a.jac * b.jac;
        self.v_local += -INV_2PI * w;
    }

    #[allow(clippy::too_many_arguments)]
    fn add_regular(&mut self, w: f64, s: f64, t: f64, a: &Sample, b: &Sample, log_scale: f64, signs: (f64, f64)) {
        let diff = b.x - a.x;
        let r2 = diff.norm_squared();
        let g = -INV_2PI * (0.5 * r2.ln() - log_scale);
        self.v += w * g * a.jac * b.jac;
        self.v_local += w * g;
        let (sign_test, sign_trial) = signs;
        // ∂G/∂n_z |z'| with n = ±J z'/|z'| and J(a, b) = (b, -a)
        let kb = -INV_2PI * sign_trial * (diff.x * b.dx.y - diff.y * b.dx.x) / r2;
        let ka = INV_2PI * sign_test * (diff.x * a.dx.y - diff.y * a.dx.x) / r2;
        let wb = w * kb * a.jac;
        let wa = w * ka * b.jac;
        self.k_forward[0] += wb * (1.0 - t);
        self.k_forward[1] += wb * t;
        self.k_reverse[0] += wa * (1.0 - s);
        self.k_reverse[1] += wa * s;
    }
}

fn near_pair(test: &Prepared, p: usize, trial: &Prepared, q: usize, rule: &NearRule) -> PairIntegrals {
    let mut acc = PairIntegrals::default();
    let signs = (test.sign, trial.sign);
    for &(s, t, w) in &rule.log {
        acc.add_log(w, &test.sample(p, s), &trial.sample(q, t));
    }
    for &(s, t, w, d) in &rule.regular {
        acc.add_regular(w, s, t, &test.sample(p, s), &trial.sample(q, t), d.ln(), signs);
    }
    acc
}

fn far_pair(test: &Prepared, p: usize, trial: &Prepared, q: usize, rules: &Rules) -> Result<PairIntegrals> {
    // Lower bound for the distance between the panels; a non-positive value
    // just selects the highest order.
    let gap = (test.centers[p] - trial.centers[q]).norm() - test.radii[p] - trial.radii[q];
    let np = far_order(gap, test.radii[p]);
    let nq = far_order(gap, trial.radii[q]);
    let (rp, rq) = (&rules.gl[np * test.scale], &rules.gl[nq * trial.scale]);
    let (sp, sq) = (&test.far[p][np], &trial.far[q][nq]);
    let signs = (test.sign, trial.sign);
    let mut acc = PairIntegrals::default();
    for (i, a) in sp.iter().enumerate() {
        for (j, b) in sq.iter().enumerate() {
            let w = rp.weights[i] * rq.weights[j];
            acc.add_regular(w, rp.nodes[i], rq.nodes[j], a, b, 0.0, signs);
        }
    }
    if !(acc.v.is_finite() && acc.k_forward.iter().chain(&acc.k_reverse).all(|k| k.is_finite())) {
        return Err(Error::IntersectingBoundaries);
    }
    Ok(acc)
}

/// Layer-operator matrices between a trial mesh `Φ` and a test mesh `Ψ`.
#[derive(Debug, Clone)]
pub struct PairMatrices {
    /// `V_ΦΨ`: test panels × trial panels
    pub v: Mat<f64>,
    /// `K_ΦΨ`: test panels × trial nodes
    pub k: Mat<f64>,
    /// `K_ΨΦ`: trial panels × test nodes
    pub k_reverse: Mat<f64>,
    /// `W_ΦΨ`: test nodes × trial nodes
    pub w: Mat<f64>,
}

fn same_mesh(a: &BoundaryMesh, b: &BoundaryMesh) -> bool {
    std::ptr::eq(a, b)
}

/// Assembles `V`, `K` (both directions) and `W` for the pair in one sweep.
/// Self-interaction is detected by identity of the mesh objects.
pub fn assemble_pair(trial: &BoundaryMesh, test: &BoundaryMesh, orders: QuadratureOrders) -> Result<PairMatrices> {
    let rules = Rules::new(orders);
    if same_mesh(trial, test) {
        let prepared = Prepared::new(test, &rules, orders.far_scale);
        Ok(self_interaction(&prepared, &rules))
    } else {
        let a = Prepared::new(test, &rules, orders.far_scale);
        let b = Prepared::new(trial, &rules, orders.far_scale);
        cross_interaction(&a, &b, &rules)
    }
}

fn self_interaction(mesh: &Prepared, rules: &Rules) -> PairMatrices {
    let n = mesh.len();
    let rows: Vec<Vec<PairIntegrals>> = (0..n)
        .into_par_iter()
        .map(|p| {
            (p..n)
                .map(|q| {
                    if q == p {
                        near_pair(mesh, p, mesh, q, &rules.same)
                    } else if q == (p + 1) % n {
                        near_pair(mesh, p, mesh, q, &rules.forward)
                    } else if p == (q + 1) % n {
                        near_pair(mesh, p, mesh, q, &rules.backward)
                    } else {
                        far_pair(mesh, p, mesh, q, rules).expect("panels of one curve")
                    }
                })
                .collect()
        })
        .collect();

    let mut v = Mat::<f64>::zeros(n, n);
    let mut v_local = Mat::<f64>::zeros(n, n);
    let mut k = Mat::<f64>::zeros(n, n);
    for (p, row) in rows.iter().enumerate() {
        for (offset, pair) in row.iter().enumerate() {
            let q = p + offset;
            v[(p, q)] = pair.v;
            v[(q, p)] = pair.v;
            v_local[(p, q)] = pair.v_local;
            v_local[(q, p)] = pair.v_local;
            let (q0, q1) = mesh.mesh.panel_nodes(q);
            k[(p, q0)] += pair.k_forward[0];
            k[(p, q1)] += pair.k_forward[1];
            if q != p {
                let (p0, p1) = mesh.mesh.panel_nodes(p);
                k[(q, p0)] += pair.k_reverse[0];
                k[(q, p1)] += pair.k_reverse[1];
            }
        }
    }
    let w = hypersingular_from_local(&v_local, mesh.mesh, mesh.mesh);
    PairMatrices { k_reverse: k.clone(), v, k, w }
}

fn cross_interaction(test: &Prepared, trial: &Prepared, rules: &Rules) -> Result<PairMatrices> {
    let (na, nb) = (test.len(), trial.len());
    let rows: Vec<Vec<PairIntegrals>> = (0..na)
        .into_par_iter()
        .map(|p| (0..nb).map(|q| far_pair(test, p, trial, q, rules)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let mut v = Mat::<f64>::zeros(na, nb);
    let mut v_local = Mat::<f64>::zeros(na, nb);
    let mut k = Mat::<f64>::zeros(na, nb);
    let mut k_reverse = Mat::<f64>::zeros(nb, na);
    for (p, row) in rows.iter().enumerate() {
        let (p0, p1) = test.mesh.panel_nodes(p);
        for (q, pair) in row.iter().enumerate() {
            let (q0, q1) = trial.mesh.panel_nodes(q);
            v[(p, q)] = pair.v;
            v_local[(p, q)] = pair.v_local;
            k[(p, q0)] += pair.k_forward[0];
            k[(p, q1)] += pair.k_forward[1];
            k_reverse[(q, p0)] += pair.k_reverse[0];
            k_reverse[(q, p1)] += pair.k_reverse[1];
        }
    }
    let w = hypersingular_from_local(&v_local, trial.mesh, test.mesh);
    Ok(PairMatrices { v, k, k_reverse, w })
}

/// Integration by parts: `⟨W u, v⟩ = ∫∫ G ∂_t u ∂_t v` with the tangent
/// `t = J⁻¹ n`. In local parameters the tangential derivative of a hat
/// function on a panel is `±1` times the orientation sign of its mesh.
fn hypersingular_from_local(v_local: &Mat<f64>, trial: &BoundaryMesh, test: &BoundaryMesh) -> Mat<f64> {
    let sign = trial.orientation().sign() * test.orientation().sign();
    let mut w = Mat::<f64>::zeros(test.node_count(), trial.node_count());
    for p in 0..test.panel_count() {
        let (p0, p1) = test.panel_nodes(p);
        for q in 0..trial.panel_count() {
            let (q0, q1) = trial.panel_nodes(q);
            let x = sign * v_local[(p, q)];
            w[(p0, q0)] += x;
            w[(p0, q1)] -= x;
            w[(p1, q0)] -= x;
            w[(p1, q1)] += x;
        }
    }
    w
}

/// `V_ΦΨ` with piecewise-constant trial on `trial` and test on `test`.
pub fn assemble_single_layer(trial: &BoundaryMesh, test: &BoundaryMesh, orders: QuadratureOrders) -> Result<Mat<f64>> {
    Ok(assemble_pair(trial, test, orders)?.v)
}

/// `K_ΦΨ` with piecewise-linear trial on `trial` and piecewise-constant test on `test`.
pub fn assemble_double_layer(trial: &BoundaryMesh, test: &BoundaryMesh, orders: QuadratureOrders) -> Result<Mat<f64>> {
    Ok(assemble_pair(trial, test, orders)?.k)
}

/// `W_ΦΨ` with piecewise-linear trial and test.
pub fn assemble_hypersingular(trial: &BoundaryMesh, test: &BoundaryMesh, orders: QuadratureOrders) -> Result<Mat<f64>> {
    Ok(assemble_pair(trial, test, orders)?.w)
}

/// Gauss samples `(local parameter, weight × arc-length Jacobian, point)` per panel.
fn panel_samples(mesh: &BoundaryMesh, order: usize) -> Vec<Vec<(f64, f64, Point)>> {
    let rule = gauss_legendre(order);
    (0..mesh.panel_count())
        .map(|p| {
            let (a, b) = mesh.panel_interval(p);
            let local = mesh.curve().local(a, b);
            rule.iter()
                .map(|(s, w)| {
                    let (x, d) = local.evaluate(a + s * (b - a));
                    (s, w * (b - a) * d.norm(), x)
                })
                .collect()
        })
        .collect()
}

/// `B_Φ[p, k] = ½ ∫ φ_k ψ_p`: panels × nodes.
pub fn assemble_mass_b(mesh: &BoundaryMesh, orders: QuadratureOrders) -> Mat<f64> {
    let mut b = Mat::<f64>::zeros(mesh.panel_count(), mesh.node_count());
    for (p, samples) in panel_samples(mesh, orders.near).iter().enumerate() {
        let (k0, k1) = mesh.panel_nodes(p);
        for &(s, w, _) in samples {
            b[(p, k0)] += 0.5 * w * (1.0 - s);
            b[(p, k1)] += 0.5 * w * s;
        }
    }
    b
}

/// `G_Φ[k, k'] = ∫ φ_k' φ_k`: the periodic piecewise-linear mass matrix.
pub fn assemble_mass_g(mesh: &BoundaryMesh, orders: QuadratureOrders) -> Mat<f64> {
    let n = mesh.node_count();
    let mut g = Mat::<f64>::zeros(n, n);
    for (p, samples) in panel_samples(mesh, orders.near).iter().enumerate() {
        let (k0, k1) = mesh.panel_nodes(p);
        for &(s, w, _) in samples {
            let phi = [(k0, 1.0 - s), (k1, s)];
            for &(i, a) in &phi {
                for &(j, b) in &phi {
                    g[(i, j)] += w * a * b;
                }
            }
        }
    }
    g
}

/// Load vector `g[k] = ∫ f φ_k` of boundary data.
pub fn assemble_boundary_load(mesh: &BoundaryMesh, f: &dyn Fn(Point) -> f64, orders: QuadratureOrders) -> Vec<f64> {
    let mut g = vec![0.0; mesh.node_count()];
    for (p, samples) in panel_samples(mesh, orders.near).iter().enumerate() {
        let (k0, k1) = mesh.panel_nodes(p);
        for &(s, w, x) in samples {
            let fx = f(x);
            g[k0] += w * fx * (1.0 - s);
            g[k1] += w * fx * s;
        }
    }
    g
}

const POTENTIAL_SPLIT: usize = 8;
const POTENTIAL_ORDER: usize = 24;

/// Composite rule over every panel for evaluating potentials off the curve:
/// `(panel, local parameter, weight, point, derivative in the local parameter)`.
fn potential_samples(mesh: &BoundaryMesh) -> Vec<(usize, f64, f64, Point, Vector2<f64>)> {
    let rule = gauss_legendre(POTENTIAL_ORDER);
    let mut out = Vec::new();
    for p in 0..mesh.panel_count() {
        let (a, b) = mesh.panel_interval(p);
        for piece in 0..POTENTIAL_SPLIT {
            for (u, w) in rule.iter() {
                let s = (piece as f64 + u) / POTENTIAL_SPLIT as f64;
                let (x, d) = mesh.curve().evaluate(a + s * (b - a));
                out.push((p, s, w / POTENTIAL_SPLIT as f64, x, (b - a) * d));
            }
        }
    }
    out
}

/// Single-layer potential `∫ G(x, z) σ(z) ds_z` of a piecewise-constant
/// density at a point away from the curve.
pub fn single_layer_potential(mesh: &BoundaryMesh, density: &[f64], x: Point) -> f64 {
    potential_samples(mesh)
        .iter()
        .map(|&(p, _, w, z, dz)| w * dz.norm() * density[p] * -INV_2PI * (x - z).norm().ln())
        .sum()
}

/// Double-layer potential `∫ ∂G/∂n_z (x, z) u(z) ds_z` of a piecewise-linear
/// density at a point away from the curve.
pub fn double_layer_potential(mesh: &BoundaryMesh, density: &[f64], x: Point) -> f64 {
    let sign = mesh.orientation().sign();
    potential_samples(mesh)
        .iter()
        .map(|&(p, s, w, z, dz)| {
            let (k0, k1) = mesh.panel_nodes(p);
            let u = (1.0 - s) * density[k0] + s * density[k1];
            let diff = z - x;
            let kernel = -INV_2PI * sign * (diff.x * dz.y - diff.y * dz.x) / diff.norm_squared();
            w * kernel * u
        })
        .sum()
}
