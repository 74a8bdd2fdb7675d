//! Reference ellipse, random radial boundary perturbation and the closed
//! curves used as boundaries.

use std::f64::consts::TAU;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Radius of the fixed disk `B`; its boundary is `Σ`.
pub const SIGMA_RADIUS: f64 = 0.2;

/// A sampled boundary closer than this to the origin is rejected.
pub const DEGENERACY_RADIUS: f64 = 0.25;

/// Ellipse centred at the origin, the nominal domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseReference {
    pub semi_axis_a: f64,
    pub semi_axis_b: f64,
}

impl Default for EllipseReference {
    fn default() -> Self {
        Self { semi_axis_a: 0.6, semi_axis_b: 0.4 }
    }
}

impl EllipseReference {
    /// Polar radius `r(φ)` of the ellipse.
    pub fn radius(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        self.radius_sc(s, c)
    }

    fn radius_sc(&self, s: f64, c: f64) -> f64 {
        let (a, b) = (self.semi_axis_a, self.semi_axis_b);
        a * b / ((b * c).powi(2) + (a * s).powi(2)).sqrt()
    }

    /// `dr/dφ`
    pub fn radius_derivative(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        self.radius_derivative_sc(s, c)
    }

    fn radius_derivative_sc(&self, s: f64, c: f64) -> f64 {
        let (a, b) = (self.semi_axis_a, self.semi_axis_b);
        let q = (b * c).powi(2) + (a * s).powi(2);
        -a * b * c * s * (a * a - b * b) / (q * q.sqrt())
    }
}

/// Shape of the random Fourier perturbation of the boundary radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub k_max: usize,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { epsilon: 0.05, k_max: 64 }
    }
}

impl PerturbationSpec {
    /// Number of random coordinates, `2 k_max + 1`.
    pub fn dimension(&self) -> usize {
        2 * self.k_max + 1
    }

    /// Mode weight: one up to `|k| = 5`, then `(|k| - 5)^-6`, zero beyond `k_max`.
    pub fn weight(&self, k: i64) -> f64 {
        let k = k.unsigned_abs() as usize;
        if k > self.k_max {
            0.0
        } else if k <= 5 {
            1.0
        } else {
            ((k - 5) as f64).powi(-6)
        }
    }
}

/// Position of mode `k` in the coordinate ordering `0, +1, -1, +2, -2, ...`.
pub fn coordinate_index(k: i64) -> usize {
    match k {
        0 => 0,
        k if k > 0 => 2 * k as usize - 1,
        k => 2 * k.unsigned_abs() as usize,
    }
}

/// Inverse of [`coordinate_index`].
pub fn mode_of_coordinate(j: usize) -> i64 {
    if j == 0 {
        0
    } else if j % 2 == 1 {
        j.div_ceil(2) as i64
    } else {
        -((j / 2) as i64)
    }
}

/// One realisation of the random coefficients `y_k`, `k = -k_max..=k_max`,
/// stored in the order `k = 0, +1, -1, +2, -2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    values: Vec<f64>,
}

impl SampleVector {
    /// Takes coordinates in the stored ordering. Every entry must lie in `(-0.5, 0.5)`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 != 1 {
            return Err(Error::InvalidSample(format!("expected an odd number of coordinates, got {}", values.len())));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| v.abs() >= 0.5 || v.is_nan()) {
            return Err(Error::InvalidSample(format!(
                "coordinate {j} (mode {}) = {v} outside (-0.5, 0.5)",
                mode_of_coordinate(j)
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(dimension: usize) -> Self {
        assert!(dimension % 2 == 1, "dimension must be 2 k_max + 1");
        Self { values: vec![0.0; dimension] }
    }

    /// Builds a sample from `(k, y_k)` pairs, all other coordinates zero.
    pub fn from_modes(dimension: usize, modes: &[(i64, f64)]) -> Result<Self> {
        let mut values = vec![0.0; dimension];
        for &(k, v) in modes {
            let j = coordinate_index(k);
            if j >= dimension {
                return Err(Error::InvalidSample(format!("mode {k} beyond dimension {dimension}")));
            }
            values[j] = v;
        }
        Self::new(values)
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn k_max(&self) -> usize {
        self.values.len() / 2
    }

    /// `y_k`, zero for modes outside the stored range.
    pub fn get(&self, k: i64) -> f64 {
        self.values.get(coordinate_index(k)).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Radial perturbation `δ(φ) = ε Σ_k w_k (y_{-k} sin kφ + y_k cos kφ)`.
pub fn perturbation(y: &SampleVector, spec: &PerturbationSpec, phi: f64) -> f64 {
    FourierPerturbation::new(y, spec).value_and_derivative(phi).0
}

/// Point `γ(y, φ) = (r_ref(φ) + δ(y, φ)) (cos φ, sin φ)` of the random boundary.
pub fn boundary_point(y: &SampleVector, spec: &PerturbationSpec, phi: f64) -> Result<Point> {
    let boundary = RandomBoundary::unchecked(EllipseReference::default(), *spec, y);
    let r = boundary.radius(phi);
    check_radius(phi, r)?;
    Ok(boundary.point(phi))
}

/// `dγ/dφ` of the random boundary.
pub fn boundary_tangent(y: &SampleVector, spec: &PerturbationSpec, phi: f64) -> Result<Vector2<f64>> {
    let boundary = RandomBoundary::unchecked(EllipseReference::default(), *spec, y);
    check_radius(phi, boundary.radius(phi))?;
    Ok(boundary.derivative(phi))
}

fn check_radius(phi: f64, radius: f64) -> Result<()> {
    if radius < DEGENERACY_RADIUS || !radius.is_finite() {
        Err(Error::DegenerateBoundary { phi, radius, limit: DEGENERACY_RADIUS })
    } else {
        Ok(())
    }
}

/// A closed curve parametrised counterclockwise over `[0, 2π)`.
pub trait ClosedCurve: Send + Sync {
    fn point(&self, phi: f64) -> Point;

    fn derivative(&self, phi: f64) -> Vector2<f64>;

    fn evaluate(&self, phi: f64) -> (Point, Vector2<f64>) {
        (self.point(phi), self.derivative(phi))
    }

    /// Evaluator restricted to `[phi_start, phi_end]`; curves may return a
    /// cheaper local representation.
    fn local(&self, phi_start: f64, phi_end: f64) -> LocalCurve<'_> {
        let _ = (phi_start, phi_end);
        LocalCurve::Global(self.as_dyn())
    }

    fn as_dyn(&self) -> &dyn ClosedCurve;
}

/// Circle of the given radius centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub radius: f64,
}

impl ClosedCurve for Circle {
    fn point(&self, phi: f64) -> Point {
        let (s, c) = phi.sin_cos();
        Point::new(self.radius * c, self.radius * s)
    }

    fn derivative(&self, phi: f64) -> Vector2<f64> {
        let (s, c) = phi.sin_cos();
        Vector2::new(-self.radius * s, self.radius * c)
    }

    fn as_dyn(&self) -> &dyn ClosedCurve {
        self
    }
}

/// Truncated Fourier sum with precomputed coefficients.
#[derive(Debug, Clone, PartialEq)]
struct FourierPerturbation {
    /// `ε w_k y_k`, the cosine coefficients for `k = 0..=k_max`
    cos_coef: Vec<f64>,
    /// `ε w_k y_{-k}`, the sine coefficients
    sin_coef: Vec<f64>,
}

impl FourierPerturbation {
    fn new(y: &SampleVector, spec: &PerturbationSpec) -> Self {
        let k_max = spec.k_max.min(y.k_max());
        let mut cos_coef = Vec::with_capacity(k_max + 1);
        let mut sin_coef = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max as i64 {
            let scale = spec.epsilon * spec.weight(k);
            cos_coef.push(scale * y.get(k));
            sin_coef.push(if k == 0 { 0.0 } else { scale * y.get(-k) });
        }
        // Trailing zero modes cost time but contribute nothing.
        while cos_coef.len() > 1 && cos_coef.last() == Some(&0.0) && sin_coef.last() == Some(&0.0) {
            cos_coef.pop();
            sin_coef.pop();
        }
        Self { cos_coef, sin_coef }
    }

    fn is_zero(&self) -> bool {
        self.cos_coef.iter().chain(&self.sin_coef).all(|&c| c == 0.0)
    }

    /// `(δ(φ), δ'(φ))`
    fn value_and_derivative(&self, phi: f64) -> (f64, f64) {
        let (s1, c1) = phi.sin_cos();
        self.value_and_derivative_sc(s1, c1)
    }

    fn value_and_derivative_sc(&self, s1: f64, c1: f64) -> (f64, f64) {
        let mut value = self.cos_coef[0];
        let mut deriv = 0.0;
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 1..self.cos_coef.len() {
            let c_next = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = c_next;
            let (a, b) = (self.cos_coef[k], self.sin_coef[k]);
            value += a * ck + b * sk;
            deriv += k as f64 * (b * ck - a * sk);
        }
        (value, deriv)
    }

    /// Taylor coefficients of `δ` around `phi0`, `c_j = δ^(j)(phi0) / j!`.
    fn taylor(&self, phi0: f64, terms: usize) -> Vec<f64> {
        let mut coef = vec![0.0; terms];
        coef[0] = self.cos_coef[0];
        for k in 1..self.cos_coef.len() {
            let (s, c) = (k as f64 * phi0).sin_cos();
            let (a, b) = (self.cos_coef[k], self.sin_coef[k]);
            // d^j/dφ^j of a cos kφ + b sin kφ cycles with period four
            let cycle = [
                a * c + b * s,
                k as f64 * (b * c - a * s),
                -(k as f64).powi(2) * (a * c + b * s),
                -(k as f64).powi(3) * (b * c - a * s),
            ];
            let mut scale = 1.0;
            for (j, slot) in coef.iter_mut().enumerate() {
                if j > 0 {
                    scale /= j as f64;
                }
                let kj = (k as f64).powi((j - j % 4) as i32);
                *slot += scale * kj * cycle[j % 4];
            }
        }
        coef
    }
}

/// Radially perturbed ellipse `γ(y, φ) = (r_ref(φ) + δ(y, φ)) (cos φ, sin φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBoundary {
    reference: EllipseReference,
    perturbation: FourierPerturbation,
}

impl RandomBoundary {
    /// Builds the curve and checks that it stays outside the degeneracy radius.
    pub fn new(reference: EllipseReference, spec: PerturbationSpec, y: &SampleVector) -> Result<Self> {
        let boundary = Self::unchecked(reference, spec, y);
        boundary.check_enclosure()?;
        Ok(boundary)
    }

    pub fn sample(y: &SampleVector, spec: &PerturbationSpec) -> Result<Self> {
        Self::new(EllipseReference::default(), *spec, y)
    }

    fn unchecked(reference: EllipseReference, spec: PerturbationSpec, y: &SampleVector) -> Self {
        Self { reference, perturbation: FourierPerturbation::new(y, &spec) }
    }

    pub fn radius(&self, phi: f64) -> f64 {
        self.reference.radius(phi) + self.perturbation.value_and_derivative(phi).0
    }

    /// Minimum radius on a fine grid. The grid spacing times the largest
    /// possible `|r'|` is well below the degeneracy clearance.
    pub fn min_radius(&self) -> (f64, f64) {
        const GRID: usize = 4096;
        (0..GRID)
            .map(|i| {
                let phi = TAU * i as f64 / GRID as f64;
                (phi, self.radius(phi))
            })
            .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    fn check_enclosure(&self) -> Result<()> {
        let (phi, r) = self.min_radius();
        check_radius(phi, r)
    }

    fn eval_with(&self, s: f64, c: f64, delta: f64, delta_prime: f64) -> (Point, Vector2<f64>) {
        let r = self.reference.radius_sc(s, c) + delta;
        let dr = self.reference.radius_derivative_sc(s, c) + delta_prime;
        (Point::new(r * c, r * s), Vector2::new(dr * c - r * s, dr * s + r * c))
    }
}

impl ClosedCurve for RandomBoundary {
    fn point(&self, phi: f64) -> Point {
        self.evaluate(phi).0
    }

    fn derivative(&self, phi: f64) -> Vector2<f64> {
        self.evaluate(phi).1
    }

    fn evaluate(&self, phi: f64) -> (Point, Vector2<f64>) {
        let (s, c) = phi.sin_cos();
        let (d, dp) = self.perturbation.value_and_derivative_sc(s, c);
        self.eval_with(s, c, d, dp)
    }

    fn local(&self, phi_start: f64, phi_end: f64) -> LocalCurve<'_> {
        if self.perturbation.is_zero() {
            return LocalCurve::Global(self);
        }
        match TaylorPanel::new(self, phi_start, phi_end) {
            Some(panel) => LocalCurve::Taylor(panel),
            None => LocalCurve::Global(self),
        }
    }

    fn as_dyn(&self) -> &dyn ClosedCurve {
        self
    }
}

/// Number of Taylor terms used for the perturbation on a short panel.
const TAYLOR_TERMS: usize = 24;

/// Local Taylor representation of the perturbation on one panel. Evaluating
/// all Fourier modes is the dominant cost of boundary assembly on fine meshes.
#[derive(Debug, Clone)]
pub struct TaylorPanel<'a> {
    boundary: &'a RandomBoundary,
    center: f64,
    coef: Vec<f64>,
}

impl<'a> TaylorPanel<'a> {
    fn new(boundary: &'a RandomBoundary, phi_start: f64, phi_end: f64) -> Option<Self> {
        let half = 0.5 * (phi_end - phi_start).abs();
        // Remainder of the differentiated series, Σ_k |a_k| k (kh)^(N-1) / (N-1)! e^{kh};
        // the Taylor path is used only when it is far below rounding.
        let p = &boundary.perturbation;
        let n = TAYLOR_TERMS as i32 - 1;
        let log_fact: f64 = (1..TAYLOR_TERMS).map(|j| (j as f64).ln()).sum();
        let bound: f64 = (1..p.cos_coef.len())
            .map(|k| {
                let amp = p.cos_coef[k].abs() + p.sin_coef[k].abs();
                let kh = k as f64 * half;
                if amp == 0.0 {
                    0.0
                } else {
                    amp * (k as f64) * (n as f64 * kh.ln() - log_fact + kh).exp()
                }
            })
            .sum();
        if bound > 1e-18 {
            return None;
        }
        let center = 0.5 * (phi_start + phi_end);
        Some(Self { boundary, center, coef: p.taylor(center, TAYLOR_TERMS) })
    }

    fn evaluate(&self, phi: f64) -> (Point, Vector2<f64>) {
        let tau = phi - self.center;
        let n = self.coef.len();
        let mut value = self.coef[n - 1];
        let mut deriv = (n - 1) as f64 * self.coef[n - 1];
        for j in (1..n - 1).rev() {
            value = value * tau + self.coef[j];
            deriv = deriv * tau + j as f64 * self.coef[j];
        }
        value = value * tau + self.coef[0];
        let (s, c) = phi.sin_cos();
        self.boundary.eval_with(s, c, value, deriv)
    }
}

/// Curve evaluator restricted to one panel.
pub enum LocalCurve<'a> {
    Global(&'a dyn ClosedCurve),
    Taylor(TaylorPanel<'a>),
}

impl LocalCurve<'_> {
    pub fn evaluate(&self, phi: f64) -> (Point, Vector2<f64>) {
        match self {
            LocalCurve::Global(curve) => curve.evaluate(phi),
            LocalCurve::Taylor(panel) => panel.evaluate(phi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn spec() -> PerturbationSpec {
        PerturbationSpec::default()
    }

    #[test]
    fn reference_radius_values() {
        let e = EllipseReference::default();
        assert_relative_eq!(e.radius(0.0), 0.6, epsilon = 1e-15);
        assert_relative_eq!(e.radius(PI / 2.0), 0.4, epsilon = 1e-15);
        let expected = 0.6 * 0.4 / (0.5f64 * (0.36 + 0.16)).sqrt();
        assert_relative_eq!(e.radius(PI / 4.0), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.470_679, epsilon = 1e-6);
    }

    #[test]
    fn weights_follow_decay_rule() {
        let s = spec();
        assert_eq!(s.dimension(), 129);
        for k in -5..=5 {
            assert_eq!(s.weight(k), 1.0);
        }
        assert_eq!(s.weight(6), 1.0);
        assert_eq!(s.weight(-7), 2f64.powi(-6));
        assert_eq!(s.weight(64), 59f64.powi(-6));
        assert_eq!(s.weight(65), 0.0);
    }

    #[test]
    fn coordinate_ordering_round_trips() {
        assert_eq!(coordinate_index(0), 0);
        assert_eq!(coordinate_index(1), 1);
        assert_eq!(coordinate_index(-1), 2);
        assert_eq!(coordinate_index(64), 127);
        assert_eq!(coordinate_index(-64), 128);
        for j in 0..129 {
            assert_eq!(coordinate_index(mode_of_coordinate(j)), j);
        }
    }

    #[test]
    fn sample_vector_rejects_out_of_range() {
        assert!(SampleVector::new(vec![0.0; 129]).is_ok());
        assert!(SampleVector::new(vec![0.5; 129]).is_err());
        assert!(SampleVector::new(vec![0.0; 128]).is_err());
        let mut v = vec![0.0; 129];
        v[3] = f64::NAN;
        assert!(SampleVector::new(v).is_err());
    }

    #[test]
    fn perturbation_examples() {
        let s = spec();
        let zero = SampleVector::zeros(129);
        assert_eq!(perturbation(&zero, &s, 1.234), 0.0);
        let y0 = SampleVector::from_modes(129, &[(0, 0.4)]).unwrap();
        for phi in [0.0, 1.0, 4.0] {
            assert_relative_eq!(perturbation(&y0, &s, phi), 0.02, epsilon = 1e-16);
        }
        let y7 = SampleVector::from_modes(129, &[(7, 0.4)]).unwrap();
        assert_relative_eq!(perturbation(&y7, &s, 0.0), 3.125e-4, epsilon = 1e-18);
        // the sine coefficient of k = 0 is never used
        let ysin = SampleVector::from_modes(129, &[(-3, 0.2)]).unwrap();
        assert_relative_eq!(perturbation(&ysin, &s, PI / 6.0), 0.05 * 0.2, epsilon = 1e-16);
    }

    #[test]
    fn boundary_point_examples() {
        let s = spec();
        let zero = SampleVector::zeros(129);
        let p = boundary_point(&zero, &s, 0.0).unwrap();
        assert_relative_eq!(p.x, 0.6, epsilon = 1e-15);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-15);
        let p = boundary_point(&zero, &s, PI / 2.0).unwrap();
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.y, 0.4, epsilon = 1e-15);
        let y0 = SampleVector::from_modes(129, &[(0, 0.4)]).unwrap();
        let p = boundary_point(&y0, &s, PI).unwrap();
        assert_relative_eq!(p.x, -0.62, epsilon = 1e-15);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_boundary_is_rejected() {
        let big = PerturbationSpec { epsilon: 0.5, k_max: 64 };
        let y = SampleVector::from_modes(129, &[(0, -0.45)]).unwrap();
        assert!(matches!(boundary_point(&y, &big, PI / 2.0), Err(Error::DegenerateBoundary { .. })));
        assert!(RandomBoundary::sample(&y, &big).is_err());
    }

    #[test]
    fn tangent_examples_match_finite_differences() {
        let s = spec();
        let zero = SampleVector::zeros(129);
        let h = 1e-6;
        for phi in [0.0, PI / 2.0] {
            let t = boundary_tangent(&zero, &s, phi).unwrap();
            let fd =
                (boundary_point(&zero, &s, phi + h).unwrap() - boundary_point(&zero, &s, phi - h).unwrap()) / (2.0 * h);
            assert!((t - fd).norm() < 1e-8, "phi={phi}: {t:?} vs {fd:?}");
        }
        // r'(0) = r'(π/2) = 0, so the tangent is r (-sin φ, cos φ) there
        let t0 = boundary_tangent(&zero, &s, 0.0).unwrap();
        assert_relative_eq!(t0.y, 0.6, epsilon = 1e-14);
        let t1 = boundary_tangent(&zero, &s, PI / 2.0).unwrap();
        assert_relative_eq!(t1.x, -0.4, epsilon = 1e-14);
        assert!(t1.y.abs() < 1e-15);
    }

    #[test]
    fn taylor_panels_match_direct_evaluation() {
        let s = spec();
        let values: Vec<f64> = (0..129).map(|j| 0.45 * ((j as f64 * 0.37).sin())).collect();
        let y = SampleVector::new(values).unwrap();
        let boundary = RandomBoundary::sample(&y, &s).unwrap();
        for n in [64usize, 128, 256, 512] {
            let h = TAU / n as f64;
            for p in [0, n / 3, n - 1] {
                let (a, b) = (p as f64 * h, (p + 1) as f64 * h);
                let local = boundary.local(a, b);
                if n >= 128 {
                    assert!(matches!(local, LocalCurve::Taylor(_)), "n = {n}");
                }
                for t in [0.0, 0.013, 0.5, 0.97, 1.0] {
                    let phi = a + t * (b - a);
                    let (x, dx) = boundary.evaluate(phi);
                    let (xl, dxl) = local.evaluate(phi);
                    assert!((x - xl).norm() < 4e-16, "n={n} {x:?} {xl:?}");
                    assert!((dx - dxl).norm() < 4e-15, "n={n} {dx:?} {dxl:?}");
                }
            }
        }
    }
}
