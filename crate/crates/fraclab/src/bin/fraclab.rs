use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fraclab::config::RunConfig;
use fraclab::pipeline;
use fraclab::presets::{preset_text, PRESETS};
use fraclab::Error;

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Fractional Laplacian extension solver and inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Shipped configuration to use instead of `--config`.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized sweeps; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print only the final summary line.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Principal-value quadrature against the spectral multiplier.
    Fraclap,
    /// Extension by both routes, kernel masses and calibrated flux.
    Extend,
    /// Coupled nonlinear solve.
    Solve,
    /// Level-set geometry and the vertical excess.
    Geometry,
    /// Monotonicity and the linearized inequality.
    CheckMonotone,
    /// Second-variation form on the canonical family.
    CheckStability,
    /// Geometric inequality with the logarithmic cutoff.
    Poincare,
    /// Energy growth over a radius sweep.
    EnergySweep,
    /// Annulus inequality on constant, Gaussian and random densities.
    Annulus,
    /// Direction extraction and alignment.
    Symmetry,
    /// Curvature-energy decay table.
    Decay,
    /// Solve, check and analyse symmetry in one run.
    PipelineSymmetry,
    /// List shipped presets.
    Presets,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fraclap => "fraclap",
            Command::Extend => "extend",
            Command::Solve => "solve",
            Command::Geometry => "geometry",
            Command::CheckMonotone => "check-monotone",
            Command::CheckStability => "check-stability",
            Command::Poincare => "poincare",
            Command::EnergySweep => "energy-sweep",
            Command::Annulus => "annulus",
            Command::Symmetry => "symmetry",
            Command::Decay => "decay",
            Command::PipelineSymmetry => "pipeline-symmetry",
            Command::Presets => "presets",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Quadrature { .. } => 3,
        Error::Precondition(_) | Error::Basis(_) => 1,
        _ => 2,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(name)) => RunConfig::from_toml(preset_text(name)?)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    let name = cli.command.name();
    if cfg.command.is_empty() {
        cfg.command = name.to_string();
    } else if cfg.command != name {
        return Err(Error::Config(format!("configuration is for `{}` but `{name}` was requested", cfg.command)));
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Presets = cli.command {
        for (name, text) in PRESETS {
            let cmd = RunConfig::from_toml(text).map(|c| c.command).unwrap_or_default();
            println!("{name:<12} {cmd}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("fraclab: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("fraclab-out"));
    let result = match pipeline::run(&cfg, Some(&out)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("fraclab: {e}");
            if let Error::NonConvergence { residuals, .. } = e.root() {
                let tail: Vec<String> = residuals.iter().rev().take(5).rev().map(|r| format!("{r:e}")).collect();
                eprintln!("fraclab: last residuals {}", tail.join(" "));
            }
            return ExitCode::from(exit_code(&e));
        }
    };
    let report = &result.report;
    if !cli.quiet {
        for c in &report.checks {
            let tag = match (c.passed, c.required) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "fail",
            };
            println!("{tag} {:<40} value {:<12.5e} threshold {:<12.5e} {}", c.name, c.value, c.threshold, c.detail);
        }
        for (stage, t) in &report.timings {
            println!("time {stage:<20} {t:.2} s");
        }
    }
    let failed = report.checks.iter().filter(|c| c.required && !c.passed).count();
    println!(
        "{} {}: {} checks, {failed} required failed, report {} (hash {})",
        if report.passed { "PASSED" } else { "FAILED" },
        report.command,
        report.checks.len(),
        out.join("report.json").display(),
        &report.hash[..16]
    );
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
