//! Flat `key = value` run configuration.

use std::path::Path;

use fembem_mlqmc::geometry::PerturbationSpec;
use fembem_mlqmc::mlqmc::{Schedule, MAX_LEVEL, REFERENCE_LEVEL, REFERENCE_SAMPLES};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub level: usize,
    pub fine_samples: usize,
    pub schedule: Schedule,
    pub epsilon: f64,
    pub k_max: usize,
    /// constant tracking target `ū`
    pub u_bar: f64,
    /// overrides the frozen reference value
    pub reference: Option<f64>,
    pub reference_level: usize,
    pub reference_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = PerturbationSpec::default();
        Self {
            level: 4,
            fine_samples: 10,
            schedule: Schedule::Linear,
            epsilon: spec.epsilon,
            k_max: spec.k_max,
            u_bar: 0.0,
            reference: None,
            reference_level: REFERENCE_LEVEL,
            reference_samples: REFERENCE_SAMPLES,
        }
    }
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line}: {msg}"))
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| invalid(line, format!("bad value '{value}' for {key}: {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| invalid(line, format!("expected key = value, got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "level" => cfg.level = parse_value(line, key, value)?,
                "fine_samples" => cfg.fine_samples = parse_value(line, key, value)?,
                "schedule" => cfg.schedule = parse_value(line, key, value)?,
                "epsilon" => cfg.epsilon = parse_value(line, key, value)?,
                "k_max" => cfg.k_max = parse_value(line, key, value)?,
                "u_bar" => cfg.u_bar = parse_value(line, key, value)?,
                "reference" => cfg.reference = Some(parse_value(line, key, value)?),
                "reference_level" => cfg.reference_level = parse_value(line, key, value)?,
                "reference_samples" => cfg.reference_samples = parse_value(line, key, value)?,
                other => return Err(invalid(line, format!("unknown key '{other}'"))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.level > MAX_LEVEL || self.reference_level > MAX_LEVEL {
            return bad(format!("levels must not exceed {MAX_LEVEL}"));
        }
        if self.fine_samples == 0 || self.reference_samples == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be finite and non-negative, got {}", self.epsilon));
        }
        if self.k_max == 0 {
            return bad("k_max must be positive".into());
        }
        if !self.u_bar.is_finite() || self.reference.is_some_and(|r| !r.is_finite()) {
            return bad("u_bar and reference must be finite".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> PerturbationSpec {
        PerturbationSpec { epsilon: self.epsilon, k_max: self.k_max }
    }

    /// Whether the frozen reference applies to this setup.
    pub fn uses_default_problem(&self) -> bool {
        let d = Self::default();
        self.spec() == d.spec()
            && self.u_bar == 0.0
            && (self.reference_level, self.reference_samples) == (d.reference_level, d.reference_samples)
    }
}
