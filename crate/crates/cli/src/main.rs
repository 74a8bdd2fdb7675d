use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fembem_mlqmc::mlqmc::Schedule;
use fembem_mlqmc::validation::ValidationOptions;
use fembem_mlqmc_cli::{
    cmd_convergence, cmd_dof_table, cmd_estimate, cmd_mesh_dump, cmd_validate, with_threads, CliResult, RunConfig,
};

#[derive(Parser, Debug)]
#[command(name = "fembem-mlqmc", version, about = "FEM-BEM solver for Poisson problems on random domains")]
struct Cli {
    /// Flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout if omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// FE and BE degrees of freedom per level
    DofTable {
        #[arg(long, default_value_t = 8)]
        level: usize,
    },
    /// Run the self-check suite
    Validate {
        /// Use the inner normal on the interface (the identity checks must fail)
        #[arg(long, hide = true)]
        flip_sigma_normal: bool,
    },
    /// Multilevel error against the reference for L = 1..=level
    Convergence(Sampling),
    /// Multilevel estimate with per-level diagnostics
    Estimate(Sampling),
    /// Write the disk mesh of a level
    Mesh {
        #[arg(long, default_value_t = 1)]
        level: usize,
    },
}

#[derive(Args, Debug)]
struct Sampling {
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    fine_samples: Option<usize>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScheduleArg {
    Linear,
    Quadratic,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Linear => Schedule::Linear,
            ScheduleArg::Quadratic => Schedule::Quadratic,
        }
    }
}

fn run_config(cli: &Cli, sampling: &Sampling) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(l) = sampling.level {
        cfg.level = l;
    }
    if let Some(n) = sampling.fine_samples {
        cfg.fine_samples = n;
    }
    if let Some(s) = sampling.schedule {
        cfg.schedule = s.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut out: Box<dyn Write + Send> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    };
    match &cli.command {
        Command::DofTable { level } => cmd_dof_table(*level, &mut out)?,
        Command::Validate { flip_sigma_normal } => {
            let options = ValidationOptions { flip_sigma_normal: *flip_sigma_normal };
            with_threads(cli.threads, || cmd_validate(&options, &mut out))??
        }
        Command::Convergence(s) => {
            let cfg = run_config(cli, s)?;
            with_threads(cli.threads, || cmd_convergence(&cfg, &mut out))??
        }
        Command::Estimate(s) => {
            let cfg = run_config(cli, s)?;
            with_threads(cli.threads, || cmd_estimate(&cfg, &mut out))??;
        }
        Command::Mesh { level } => cmd_mesh_dump(*level, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fembem_mlqmc_cli::CliError;

    fn run_args(args: &[&str]) -> (CliResult<()>, String) {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        let mut full = vec!["fembem-mlqmc", "--out", out.to_str().unwrap()];
        full.extend_from_slice(args);
        let result = run(&Cli::try_parse_from(full).unwrap());
        (result, std::fs::read_to_string(&out).unwrap_or_default())
    }

    #[test]
    fn dof_table_rows_and_range() {
        let (r, text) = run_args(&["dof-table", "--level", "3"]);
        r.unwrap();
        assert_eq!(text, "level,fe,be\n1,37,32\n2,129,64\n3,481,128\n");
        let (r, text) = run_args(&["dof-table", "--level", "1"]);
        r.unwrap();
        assert_eq!(text, "level,fe,be\n1,37,32\n");
        let (r, _) = run_args(&["dof-table", "--level", "0"]);
        assert!(r.unwrap_err().to_string().contains("out of range"));
    }

    #[test]
    fn validate_passes_and_detects_flipped_normal() {
        let (r, report) = run_args(&["validate"]);
        r.unwrap();
        assert!(report.contains("H1"));
        let (r, report) = run_args(&["validate", "--flip-sigma-normal"]);
        assert!(matches!(r, Err(CliError::ValidationFailed(_))));
        assert!(report.contains("FAIL double layer row sums"));
    }

    #[test]
    fn estimate_from_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# deterministic boundary\nepsilon = 0\nlevel = 2\nfine_samples = 3\n").unwrap();
        let (r, text) = run_args(&["--config", cfg.to_str().unwrap(), "estimate"]);
        r.unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "level,samples,mean_difference,mean_fine");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("total,21,"));
        // with a fixed boundary the estimate is the level-2 value itself
        let total: f64 = lines[4].split(',').nth(2).unwrap().parse().unwrap();
        let fine: f64 = lines[3].split(',').nth(3).unwrap().parse().unwrap();
        assert!(((total - fine) / fine).abs() < 1e-10);
        // flags override the file
        let (r, text) =
            run_args(&["--config", cfg.to_str().unwrap(), "estimate", "--level", "0", "--fine-samples", "1"]);
        r.unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(run_args(&["convergence", "--level", "7"]).0.is_err());
        assert!(run_args(&["--config", "/nonexistent/file", "estimate"]).0.is_err());
        assert!(run_args(&["--threads", "0", "estimate", "--level", "0", "--fine-samples", "1"]).0.is_err());
        assert!(Cli::try_parse_from(["fembem-mlqmc", "estimate", "--schedule", "cubic"]).is_err());
    }

    #[test]
    fn mesh_dump_lists_vertices_and_triangles() {
        let (r, text) = run_args(&["mesh", "--level", "0"]);
        r.unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 12);
        assert_eq!(text.lines().filter(|l| l.starts_with("t ")).count(), 14);
    }
}
