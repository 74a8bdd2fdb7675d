//! Halton points, single-level QMC and the multilevel estimator.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::bem::QuadratureOrders;
use crate::coupling::LevelSolver;
use crate::error::{Error, Result};
use crate::fem::{evaluate_qoi, integrate};
use crate::geometry::{PerturbationSpec, Point, SampleVector};

/// Finest level the estimators accept.
pub const MAX_LEVEL: usize = 8;

/// Single-level estimate on level 6 with 2000 Halton points for the default
/// perturbation and `ū = 0`. Recomputed by the ignored test
/// `reference_value_is_reproducible`.
pub const REFERENCE_QOI: f64 = 1.504_104_195_310_944e-4;
pub const REFERENCE_LEVEL: usize = 6;
pub const REFERENCE_SAMPLES: usize = 2000;

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Van der Corput radical inverse of `i` in base `base`.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while i > 0 {
        value += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    value
}

/// Unscrambled Halton sequence; coordinate `j` uses the `j`-th prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltonGenerator {
    bases: Vec<u64>,
}

impl HaltonGenerator {
    pub fn new(dimension: usize) -> Self {
        Self { bases: first_primes(dimension) }
    }

    pub fn dimension(&self) -> usize {
        self.bases.len()
    }

    pub fn bases(&self) -> &[u64] {
        &self.bases
    }

    /// Point `i` of the sequence, `i ≥ 1`.
    pub fn point(&self, i: u64) -> Vec<f64> {
        assert!(i >= 1, "Halton indices start at 1");
        self.bases.iter().map(|&b| radical_inverse(i, b)).collect()
    }

    pub fn sample(&self, i: u64) -> Result<SampleVector> {
        map_to_sample(&self.point(i))
    }
}

/// Shifts a unit-cube point to `(-1/2, 1/2)^d`, keeping the coordinate order.
pub fn map_to_sample(point: &[f64]) -> Result<SampleVector> {
    SampleVector::new(point.iter().map(|u| u - 0.5).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `N_ℓ = 2^(L-ℓ) N_L`
    #[default]
    Linear,
    /// `N_ℓ = 4^(L-ℓ) N_L`
    Quadratic,
}

impl Schedule {
    fn factor(self) -> usize {
        match self {
            Schedule::Linear => 2,
            Schedule::Quadratic => 4,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Linear => "linear",
            Schedule::Quadratic => "quadratic",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Schedule::Linear),
            "quadratic" => Ok(Schedule::Quadratic),
            other => Err(Error::InvalidConfig(format!("unknown schedule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlConfig {
    pub max_level: usize,
    pub fine_samples: usize,
    pub schedule: Schedule,
}

impl MlConfig {
    pub fn new(max_level: usize, fine_samples: usize, schedule: Schedule) -> Result<Self> {
        if max_level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange { level: max_level, min: 0, max: MAX_LEVEL });
        }
        if fine_samples == 0 {
            return Err(Error::InvalidConfig("fine sample count must be at least 1".into()));
        }
        Ok(Self { max_level, fine_samples, schedule })
    }

    /// `N_ℓ` for `ℓ = 0..=L`.
    pub fn sample_counts(&self) -> Vec<usize> {
        let f = self.schedule.factor();
        (0..=self.max_level).map(|l| f.pow((self.max_level - l) as u32) * self.fine_samples).collect()
    }
}

/// A functional of the level-`level` solution for the sample `y`, which is
/// the Halton sample with index `index`.
pub trait SampleFunctional: Sync {
    fn dimension(&self) -> usize;
    fn evaluate(&self, level: usize, index: u64, y: &SampleVector) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Functional {
    /// `½ ∫_B |u_h - ū|²`
    #[default]
    Tracking,
    /// `∫_B u_h`
    Integral,
}

type Target = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Evaluates the functional on the coupled solution, caching both the
/// per-level solvers and every computed value by `(level, index)`.
pub struct QoiEvaluator {
    spec: PerturbationSpec,
    u_bar: Target,
    functional: Functional,
    orders: QuadratureOrders,
    solvers: Vec<OnceLock<std::result::Result<LevelSolver, Error>>>,
    cache: Mutex<HashMap<(usize, u64), f64>>,
}

impl fmt::Debug for QoiEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QoiEvaluator")
            .field("spec", &self.spec)
            .field("functional", &self.functional)
            .field("cached", &self.cache.lock().map(|c| c.len()).unwrap_or(0))
            .finish()
    }
}

impl QoiEvaluator {
    pub fn new(spec: PerturbationSpec) -> Self {
        Self {
            spec,
            u_bar: Arc::new(|_| 0.0),
            functional: Functional::Tracking,
            orders: QuadratureOrders::default(),
            solvers: (0..=MAX_LEVEL).map(|_| OnceLock::new()).collect(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_target(mut self, u_bar: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        self.u_bar = Arc::new(u_bar);
        self
    }

    pub fn with_functional(mut self, functional: Functional) -> Self {
        self.functional = functional;
        self
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }

    pub fn solver(&self, level: usize) -> Result<&LevelSolver> {
        let slot = self.solvers.get(level).ok_or(Error::LevelOutOfRange { level, min: 0, max: MAX_LEVEL })?;
        slot.get_or_init(|| LevelSolver::new(level, self.orders)).as_ref().map_err(Clone::clone)
    }

    /// Functional of the level-`level` solution for an arbitrary sample, uncached.
    pub fn evaluate_sample(&self, level: usize, y: &SampleVector) -> Result<f64> {
        let solver = self.solver(level)?;
        let u = solver.solve_sample(y, &self.spec)?;
        Ok(match self.functional {
            Functional::Tracking => evaluate_qoi(solver.disk(), &u, &*self.u_bar),
            Functional::Integral => integrate(solver.disk(), &u),
        })
    }

    pub fn cached_values(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }
}

impl SampleFunctional for QoiEvaluator {
    fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    fn evaluate(&self, level: usize, index: u64, y: &SampleVector) -> Result<f64> {
        if let Some(&v) = self.cache.lock().expect("cache poisoned").get(&(level, index)) {
            return Ok(v);
        }
        let value = self.evaluate_sample(level, y)?;
        self.cache.lock().expect("cache poisoned").insert((level, index), value);
        Ok(value)
    }
}

/// `(1/n) Σ_{i=1}^n F(u_level[y_i])`.
pub fn single_level_estimate(f: &dyn SampleFunctional, level: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let halton = HaltonGenerator::new(f.dimension());
    let values =
        (1..=n as u64).into_par_iter().map(|i| f.evaluate(level, i, &halton.sample(i)?)).collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub samples: usize,
    /// Mean of `F(u_ℓ) - F(u_{ℓ-1})`, or of `F(u_0)` on level 0.
    pub mean_difference: f64,
    pub mean_fine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimate {
    pub value: f64,
    pub levels: Vec<LevelDiagnostics>,
}

/// `Σ_ℓ Q_{N_ℓ}(F(u_ℓ) - F(u_{ℓ-1}))` with `F(u_{-1}) = 0`; both solves of a
/// difference use the same points, and each level restarts the Halton
/// stream at index 1.
pub fn multilevel_estimate(f: &dyn SampleFunctional, config: &MlConfig) -> Result<MlEstimate> {
    let halton = HaltonGenerator::new(f.dimension());
    let mut levels = Vec::with_capacity(config.max_level + 1);
    for (level, &n) in config.sample_counts().iter().enumerate() {
        let pairs = (1..=n as u64)
            .into_par_iter()
            .map(|i| {
                let y = halton.sample(i)?;
                let fine = f.evaluate(level, i, &y)?;
                let coarse = if level == 0 { 0.0 } else { f.evaluate(level - 1, i, &y)? };
                Ok((fine, fine - coarse))
            })
            .collect::<Result<Vec<_>>>()?;
        let (sum_fine, sum_diff) = pairs.iter().fold((0.0, 0.0), |(a, b), &(fine, d)| (a + fine, b + d));
        levels.push(LevelDiagnostics {
            level,
            samples: n,
            mean_difference: sum_diff / n as f64,
            mean_fine: sum_fine / n as f64,
        });
    }
    let value = levels.iter().map(|d| d.mean_difference).sum();
    Ok(MlEstimate { value, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::coordinate_index;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn primes() {
        let p = first_primes(129);
        assert_eq!(&p[..10], &[2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert_eq!(p[128], 727);
    }

    #[test]
    fn halton_examples() {
        let h = HaltonGenerator::new(129);
        assert_eq!(h.point(1)[0], 0.5);
        assert_eq!(h.point(2)[0], 0.25);
        assert_relative_eq!(h.point(2)[1], 2.0 / 3.0, max_relative = 1e-15);
        // 5 = 12 in base 3, mirrored: 2/3 + 1/9
        assert_relative_eq!(h.point(5)[1], 7.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(radical_inverse(6, 2), 0.375);
    }

    #[test]
    fn halton_bases_follow_coordinate_order() {
        let h = HaltonGenerator::new(129);
        assert_eq!(h.bases()[coordinate_index(0)], 2);
        assert_eq!(h.bases()[coordinate_index(1)], 3);
        assert_eq!(h.bases()[coordinate_index(-1)], 5);
        assert_eq!(h.bases()[coordinate_index(-64)], 727);
    }

    #[test]
    fn sample_mapping() {
        let y = map_to_sample(&vec![0.5; 129]).unwrap();
        assert_eq!(y, SampleVector::zeros(129));
        let h = HaltonGenerator::new(129);
        assert_eq!(h.sample(1).unwrap().get(0), 0.0);
        assert!(map_to_sample(&vec![0.0; 129]).is_err());
    }

    proptest! {
        #[test]
        fn halton_points_map_into_open_cube(i in 1u64..1_000_000) {
            let h = HaltonGenerator::new(129);
            let p = h.point(i);
            prop_assert!(p.iter().all(|&u| u > 0.0 && u < 1.0));
            prop_assert_eq!(p, h.point(i));
            prop_assert!(h.sample(i).is_ok());
        }

        #[test]
        fn radical_inverse_digit_reversal(i in 1u64..100_000, b in 2u64..30) {
            // a trailing zero digit shifts the mirrored expansion one place right
            let r = radical_inverse(i, b);
            prop_assert!((radical_inverse(b * i, b) - r / b as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_counts() {
        let c = MlConfig::new(3, 10, Schedule::Linear).unwrap();
        assert_eq!(c.sample_counts(), vec![80, 40, 20, 10]);
        let c = MlConfig::new(3, 10, Schedule::Quadratic).unwrap();
        assert_eq!(c.sample_counts(), vec![640, 160, 40, 10]);
        assert!(MlConfig::new(9, 10, Schedule::Linear).is_err());
        assert!(MlConfig::new(2, 0, Schedule::Linear).is_err());
        assert_eq!("quadratic".parse::<Schedule>().unwrap(), Schedule::Quadratic);
        assert!("cubic".parse::<Schedule>().is_err());
    }

    /// Records every call and returns a cheap synthetic value.
    struct Recorder {
        calls: Mutex<Vec<(usize, u64, Vec<f64>)>>,
    }

    impl SampleFunctional for Recorder {
        fn dimension(&self) -> usize {
            129
        }

        fn evaluate(&self, level: usize, index: u64, y: &SampleVector) -> Result<f64> {
            self.calls.lock().unwrap().push((level, index, y.as_slice().to_vec()));
            Ok(y.get(0) + 2f64.powi(-(level as i32)) * (1.0 + y.get(1)))
        }
    }

    #[test]
    fn difference_terms_share_samples() {
        let rec = Recorder { calls: Mutex::new(Vec::new()) };
        let config = MlConfig::new(3, 4, Schedule::Linear).unwrap();
        multilevel_estimate(&rec, &config).unwrap();
        let calls = rec.calls.into_inner().unwrap();
        let h = HaltonGenerator::new(129);
        let counts = config.sample_counts();
        for l in 0..=3 {
            let mut fine: Vec<_> = calls.iter().filter(|c| c.0 == l).map(|c| (c.1, c.2.clone())).collect();
            fine.sort_by_key(|c| c.0);
            // Level l is visited by its own term and, as the coarse partner, by term l + 1.
            let expected = counts[l] + counts.get(l + 1).copied().unwrap_or(0);
            assert_eq!(fine.len(), expected);
            for (i, y) in &fine {
                assert_eq!(y, h.sample(*i).unwrap().as_slice());
            }
        }
        // every coarse evaluation of term l pairs with a fine evaluation at the same point
        for l in 1..=3 {
            for i in 1..=counts[l] as u64 {
                let y_f = calls.iter().find(|c| c.0 == l && c.1 == i).unwrap();
                let y_c = calls.iter().find(|c| c.0 == l - 1 && c.1 == i).unwrap();
                assert_eq!(y_f.2, y_c.2);
            }
        }
    }

    #[test]
    fn estimator_is_deterministic_and_telescopes() {
        let rec = Recorder { calls: Mutex::new(Vec::new()) };
        let config = MlConfig::new(4, 3, Schedule::Quadratic).unwrap();
        let a = multilevel_estimate(&rec, &config).unwrap();
        let b = multilevel_estimate(&rec, &config).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.levels.len(), 5);
        assert_eq!(a.levels[0].mean_difference, a.levels[0].mean_fine);
        let l0 = multilevel_estimate(&rec, &MlConfig::new(0, 7, Schedule::Linear).unwrap()).unwrap();
        assert_eq!(l0.value, single_level_estimate(&rec, 0, 7).unwrap());
    }

    fn deterministic_evaluator(functional: Functional) -> QoiEvaluator {
        QoiEvaluator::new(PerturbationSpec { epsilon: 0.0, ..PerturbationSpec::default() }).with_functional(functional)
    }

    #[test]
    fn zero_perturbation_telescopes_to_finest_level() {
        for functional in [Functional::Integral, Functional::Tracking] {
            let eval = deterministic_evaluator(functional);
            for l in 0..=3 {
                let est = multilevel_estimate(&eval, &MlConfig::new(l, 2, Schedule::Linear).unwrap()).unwrap();
                let direct = eval.evaluate_sample(l, &SampleVector::zeros(129)).unwrap();
                assert_relative_eq!(est.value, direct, max_relative = 1e-10);
                // and independent of the sample count
                let single = single_level_estimate(&eval, l, 3).unwrap();
                assert_relative_eq!(single, direct, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn level_zero_matches_single_level() {
        let eval = QoiEvaluator::new(PerturbationSpec::default()).with_target(|x| x.x);
        let ml = multilevel_estimate(&eval, &MlConfig::new(0, 5, Schedule::Linear).unwrap()).unwrap();
        assert_eq!(ml.value, single_level_estimate(&eval, 0, 5).unwrap());
        let one = single_level_estimate(&eval, 1, 1).unwrap();
        let direct = eval.evaluate_sample(1, &HaltonGenerator::new(129).sample(1).unwrap()).unwrap();
        assert_eq!(one, direct);
    }

    #[test]
    fn cache_reuses_coarse_solves() {
        let eval = QoiEvaluator::new(PerturbationSpec::default());
        let config = MlConfig::new(2, 2, Schedule::Linear).unwrap();
        let first = multilevel_estimate(&eval, &config).unwrap();
        // levels 0, 1, 2 with 8, 4, 2 points; the coarse partners are already cached
        assert_eq!(eval.cached_values(), 8 + 4 + 2);
        let second = multilevel_estimate(&eval, &config).unwrap();
        assert_eq!(first, second);
        assert!(first.value > 0.0);
    }

    #[test]
    fn level_differences_decay() {
        let eval = QoiEvaluator::new(PerturbationSpec::default());
        let est = multilevel_estimate(&eval, &MlConfig::new(4, 4, Schedule::Linear).unwrap()).unwrap();
        let d: Vec<f64> = est.levels.iter().map(|l| l.mean_difference.abs()).collect();
        for l in 3..=4 {
            assert!(d[l] <= 0.8 * d[l - 2], "{d:?}");
        }
    }

    #[test]
    #[ignore = "several minutes; prints the frozen reference"]
    fn reference_value_is_reproducible() {
        let eval = QoiEvaluator::new(PerturbationSpec::default());
        let value = single_level_estimate(&eval, REFERENCE_LEVEL, REFERENCE_SAMPLES).unwrap();
        println!("reference = {value:.17e}");
        assert_relative_eq!(value, REFERENCE_QOI, max_relative = 1e-12);
    }
}
