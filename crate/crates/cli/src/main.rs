use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use stability_kit::{emit_report, load_config, run_suite, ExperimentConfig, Format, SUITES};

/// Runs a verification suite and writes its report.
#[derive(Parser, Debug)]
#[command(name = "stability-kit", version)]
struct Cli {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suite: String,
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hex seed; overrides the config.
    #[arg(long)]
    seed: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Record elapsed time in the report (makes output non-reproducible).
    #[arg(long)]
    wall_clock: bool,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    prime_bits: Option<u32>,
    /// Circuit file (corrsamp).
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Class JSON (learn-finite).
    #[arg(long)]
    class: Option<PathBuf>,
    /// Distribution JSON (learn-finite).
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Built-in base algorithm (rep2dp, rep2pg, dp2rep).
    #[arg(long)]
    base: Option<String>,
}

fn merge(cli: &Cli) -> Result<ExperimentConfig, stability_kit::ConfigError> {
    let mut config = match &cli.config {
        Some(path) => {
            let (c, warnings) = load_config(path)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            if c.suite != cli.suite {
                eprintln!("warning: config suite {:?} replaced by {:?}", c.suite, cli.suite);
            }
            c
        }
        None => ExperimentConfig::new(&cli.suite),
    };
    config.suite = cli.suite.clone();
    let s = &mut config.settings;
    macro_rules! over {
        ($($f:ident),*) => {$(
            if cli.$f.is_some() {
                s.$f = cli.$f;
            }
        )*};
    }
    over!(nu, rho, alpha, beta, eps, delta, trials, prime_bits);
    if let Some(seed) = &cli.seed {
        config.seed = Some(seed.clone());
    }
    for (dst, src) in [
        (&mut config.circuit, &cli.circuit),
        (&mut config.class, &cli.class),
        (&mut config.dist, &cli.dist),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    if cli.base.is_some() {
        config.base.clone_from(&cli.base);
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut report = match merge(&cli).and_then(|c| run_suite(&c)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.wall_clock {
        report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    }
    let text = emit_report(&report, cli.format);
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{text}"),
    }
    for f in report.failures() {
        eprintln!("FAIL {f}");
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
