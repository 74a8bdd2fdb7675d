//! Experiment driver: DoF tables, self-validation, convergence studies and
//! estimates, all written as CSV.

pub mod config;

use std::io::Write;

use fembem_mlqmc::mesh::{build_disk_mesh, dof_counts};
use fembem_mlqmc::mlqmc::{multilevel_estimate, single_level_estimate, MlConfig, QoiEvaluator, REFERENCE_QOI};
use fembem_mlqmc::validation::{run_validation, ValidationOptions};
use fembem_mlqmc::Error;

pub use config::RunConfig;

/// Largest level `convergence` accepts.
pub const CONVERGENCE_MAX_LEVEL: usize = 6;
pub const DOF_TABLE_MAX_LEVEL: usize = 8;

/// `estimate` with the default problem, `L = 4`, `N_L = 10`, linear schedule.
pub const ESTIMATE_ANCHOR: f64 = 1.506_231_367_839_528_6e-4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("{0} validation checks failed")]
    ValidationFailed(usize),
}

pub type CliResult<T> = Result<T, CliError>;

/// Fixed 17-significant-digit formatting for every real in a CSV.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs `f` on a dedicated pool with `threads` workers (all cores if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?.install(f))
}

pub fn cmd_dof_table(max_level: usize, out: impl Write) -> CliResult<()> {
    if !(1..=DOF_TABLE_MAX_LEVEL).contains(&max_level) {
        return Err(Error::LevelOutOfRange { level: max_level, min: 1, max: DOF_TABLE_MAX_LEVEL }.into());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "fe", "be"])?;
    for level in 1..=max_level {
        let c = dof_counts(level);
        w.write_record([c.level.to_string(), c.fe.to_string(), c.be.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one line per check; fails if any check fails.
pub fn cmd_validate(options: &ValidationOptions, mut out: impl Write) -> CliResult<()> {
    let checks = run_validation(options);
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} of {} checks passed", checks.len() - failed, checks.len())?;
    if failed > 0 {
        return Err(CliError::ValidationFailed(failed));
    }
    Ok(())
}

fn evaluator(cfg: &RunConfig) -> QoiEvaluator {
    let c = cfg.u_bar;
    QoiEvaluator::new(cfg.spec()).with_target(move |_| c)
}

fn reference_value(cfg: &RunConfig, eval: &QoiEvaluator) -> CliResult<f64> {
    if let Some(r) = cfg.reference {
        return Ok(r);
    }
    if cfg.uses_default_problem() {
        return Ok(REFERENCE_QOI);
    }
    Ok(single_level_estimate(eval, cfg.reference_level, cfg.reference_samples)?)
}

/// `|multilevel_estimate(L) - reference|` for `L = 1..=cfg.level`.
pub fn cmd_convergence(cfg: &RunConfig, out: impl Write) -> CliResult<()> {
    cfg.validate()?;
    if !(1..=CONVERGENCE_MAX_LEVEL).contains(&cfg.level) {
        return Err(Error::LevelOutOfRange { level: cfg.level, min: 1, max: CONVERGENCE_MAX_LEVEL }.into());
    }
    let eval = evaluator(cfg);
    let reference = reference_value(cfg, &eval)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "estimate", "error", "guide_linear", "guide_quadratic"])?;
    for level in 1..=cfg.level {
        let est = multilevel_estimate(&eval, &MlConfig::new(level, cfg.fine_samples, cfg.schedule)?)?;
        let guide = |base: f64| fmt_real(base.powi(-(level as i32)));
        w.write_record([
            level.to_string(),
            fmt_real(est.value),
            fmt_real((est.value - reference).abs()),
            guide(2.0),
            guide(4.0),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-level diagnostics followed by a `total` row carrying the estimate.
pub fn cmd_estimate(cfg: &RunConfig, out: impl Write) -> CliResult<f64> {
    cfg.validate()?;
    let eval = evaluator(cfg);
    let est = multilevel_estimate(&eval, &MlConfig::new(cfg.level, cfg.fine_samples, cfg.schedule)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "samples", "mean_difference", "mean_fine"])?;
    for d in &est.levels {
        w.write_record([
            d.level.to_string(),
            d.samples.to_string(),
            fmt_real(d.mean_difference),
            fmt_real(d.mean_fine),
        ])?;
    }
    let total: usize = est.levels.iter().map(|d| d.samples).sum();
    w.write_record(["total".to_string(), total.to_string(), fmt_real(est.value), String::new()])?;
    w.flush()?;
    Ok(est.value)
}

pub fn cmd_mesh_dump(level: usize, out: impl Write) -> CliResult<()> {
    if level > DOF_TABLE_MAX_LEVEL {
        return Err(Error::LevelOutOfRange { level, min: 0, max: DOF_TABLE_MAX_LEVEL }.into());
    }
    build_disk_mesh(level).write_dump(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fembem_mlqmc::geometry::PerturbationSpec;
    use fembem_mlqmc::mlqmc::HaltonGenerator;

    #[test]
    fn reals_use_seventeen_significant_digits() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_real(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_real(-2.5e-5), "-2.5000000000000001e-5");
    }

    #[test]
    fn dof_table_validates_range() {
        assert!(cmd_dof_table(0, Vec::new()).is_err());
        assert!(cmd_dof_table(9, Vec::new()).is_err());
        let mut buf = Vec::new();
        cmd_dof_table(8, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("8,459777,4096\n"));
    }

    #[test]
    fn single_coarse_sample_estimate() {
        let cfg = RunConfig { level: 0, fine_samples: 1, ..RunConfig::default() };
        let value = cmd_estimate(&cfg, Vec::new()).unwrap();
        let eval = QoiEvaluator::new(PerturbationSpec::default());
        let direct = eval.evaluate_sample(0, &HaltonGenerator::new(129).sample(1).unwrap()).unwrap();
        assert_eq!(value, direct);
    }

    #[test]
    fn convergence_with_explicit_reference() {
        let cfg = RunConfig { level: 2, fine_samples: 1, reference: Some(0.0), ..RunConfig::default() };
        let mut buf = Vec::new();
        cmd_convergence(&cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0], ["level", "estimate", "error", "guide_linear", "guide_quadratic"]);
        assert_eq!(rows.len(), 3);
        // zero reference: the error column is the estimate itself
        assert_eq!(rows[2][1], rows[2][2]);
        assert_eq!(rows[2][3], fmt_real(0.25));
        assert_eq!(rows[2][4], fmt_real(0.0625));
    }

    #[test]
    fn default_estimate_matches_anchor() {
        let cfg = RunConfig { level: 4, fine_samples: 10, ..RunConfig::default() };
        let value = cmd_estimate(&cfg, Vec::new()).unwrap();
        assert!(value > 0.0);
        assert!(((value - ESTIMATE_ANCHOR) / ESTIMATE_ANCHOR).abs() < 1e-12, "{value:e}");
    }

    #[test]
    fn pool_rejects_zero_threads() {
        assert!(with_threads(Some(0), || ()).is_err());
        assert_eq!(with_threads(Some(2), rayon::current_num_threads).unwrap(), 2);
    }
}
