//! One-dimensional and triangle quadrature rules.
//!
//! All one-dimensional rules live on `[0, 1]`. Besides Gauss-Legendre we need a
//! Gauss rule for the weight `-ln x`, used to integrate the logarithmic part of
//! the single-layer kernel on touching panels. Its recurrence coefficients come
//! from the modified Chebyshev algorithm with shifted Legendre moments, and the
//! nodes and weights from the Golub-Welsch eigenproblem.

use faer::{Mat, Side};

/// Nodes and weights of a one-dimensional rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre rule with `n` points on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Rule1d {
    assert!(n >= 1, "a quadrature rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th root of P_n on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]; roots come in symmetric pairs
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Rule1d { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule with `n` points for `∫_0^1 -ln(x) f(x) dx`.
pub fn gauss_log(n: usize) -> Rule1d {
    assert!(n >= 1, "a quadrature rule needs at least one point");
    let (alpha, beta) = log_weight_recurrence(n);
    let mut jacobi = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k + 1].sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = jacobi.self_adjoint_eigen(Side::Lower).expect("symmetric tridiagonal eigenproblem converges");
    let vals = eig.S().column_vector();
    let vecs = eig.U();
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|k| (vals[k], beta[0] * vecs[(0, k)] * vecs[(0, k)])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule1d { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Recurrence coefficients of the monic orthogonal polynomials for the weight
/// `-ln x` on `[0, 1]` (modified Chebyshev algorithm).
fn log_weight_recurrence(n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = 2 * n;
    // Monic shifted Legendre: p_{k+1} = (x - 1/2) p_k - b_k p_{k-1}.
    let a = vec![0.5; m];
    let b: Vec<f64> = (0..m)
        .map(|k| {
            let k = k as f64;
            k * k / (4.0 * (4.0 * k * k - 1.0))
        })
        .collect();
    // Modified moments ∫ -ln(x) p_k(x) dx. For the classical shifted Legendre
    // polynomial the moment is (-1)^k / (k (k + 1)); dividing by the leading
    // coefficient (2k)! / (k!)^2 yields the monic moment.
    let mut moments = vec![0.0; m];
    moments[0] = 1.0;
    let mut inv_lead = 1.0;
    for k in 1..m {
        let kf = k as f64;
        inv_lead *= kf * kf / ((2.0 * kf) * (2.0 * kf - 1.0));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        moments[k] = sign / (kf * (kf + 1.0)) * inv_lead;
    }

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut sig_prev = vec![0.0; m + 1];
    let mut sig = moments.clone();
    sig.push(0.0);
    alpha[0] = a[0] + moments[1] / moments[0];
    beta[0] = moments[0];
    for k in 1..n {
        let mut sig_next = vec![0.0; m + 1];
        for l in k..(m - k) {
            sig_next[l] = sig[l + 1] - (alpha[k - 1] - a[l]) * sig[l] - beta[k - 1] * sig_prev[l] + b[l] * sig[l - 1];
        }
        alpha[k] = a[k] + sig_next[k + 1] / sig_next[k] - sig[k] / sig[k - 1];
        beta[k] = sig_next[k] / sig[k - 1];
        sig_prev = sig;
        sig = sig_next;
    }
    (alpha, beta)
}

/// A point of a rule on the reference triangle `{(ξ, η): ξ, η ≥ 0, ξ + η ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrianglePoint {
    pub xi: f64,
    pub eta: f64,
    pub weight: f64,
}

/// Seven-point rule of polynomial degree 5 on the reference triangle (area 1/2).
pub fn triangle_degree5() -> [TrianglePoint; 7] {
    let s15 = 15f64.sqrt();
    let a = (6.0 - s15) / 21.0;
    let b = (9.0 + 2.0 * s15) / 21.0;
    let c = (6.0 + s15) / 21.0;
    let d = (9.0 - 2.0 * s15) / 21.0;
    let wa = (155.0 - s15) / 2400.0;
    let wc = (155.0 + s15) / 2400.0;
    let p = |xi, eta, weight| TrianglePoint { xi, eta, weight };
    [p(1.0 / 3.0, 1.0 / 3.0, 9.0 / 80.0), p(a, a, wa), p(b, a, wa), p(a, b, wa), p(c, c, wc), p(d, c, wc), p(c, d, wc)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 32] {
            let rule = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let approx: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert_relative_eq!(approx, 1.0 / (deg as f64 + 1.0), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn legendre_weights_are_positive_and_nodes_sorted() {
        let rule = gauss_legendre(17);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        assert!(rule.nodes.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(rule.nodes[8], 0.5);
    }

    #[test]
    fn log_rule_single_point() {
        // ∫ -ln x = 1 and ∫ -x ln x = 1/4
        let rule = gauss_log(1);
        assert_relative_eq!(rule.nodes[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(rule.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn log_rule_moments() {
        // ∫_0^1 -ln(x) x^j dx = 1 / (j + 1)^2
        for n in [2, 4, 8, 16, 32] {
            let rule = gauss_log(n);
            assert!(rule.nodes.iter().all(|&x| x > 0.0 && x < 1.0));
            for deg in 0..(2 * n) {
                let approx: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = 1.0 / ((deg as f64 + 1.0).powi(2));
                assert_relative_eq!(approx, exact, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn log_rule_on_smooth_function() {
        // ∫_0^1 -ln(x) cos(x) dx = Si(1)
        let si1 = 0.946_083_070_367_183;
        let rule = gauss_log(12);
        let approx: f64 = rule.iter().map(|(x, w)| w * x.cos()).sum();
        assert_relative_eq!(approx, si1, epsilon = 1e-14);
    }

    #[test]
    fn triangle_rule_is_degree_five() {
        let rule = triangle_degree5();
        for i in 0..=5u32 {
            for j in 0..=(5 - i) {
                let approx: f64 = rule.iter().map(|p| p.weight * p.xi.powi(i as i32) * p.eta.powi(j as i32)).sum();
                let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                assert_relative_eq!(approx, exact, max_relative = 1e-13);
            }
        }
    }
}
