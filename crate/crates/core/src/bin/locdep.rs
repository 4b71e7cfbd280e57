use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use locdep::experiment::{run, run_rate_study, ExperimentConfig};
use locdep::{verify, Error};

#[derive(Parser)]
#[command(name = "locdep", version, about = "Berry–Esseen bounds for locally dependent random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured theorems and compare them with the measured distance.
    Bounds(RunArgs),
    /// Measure the distance of W from normal (theorem list ignored).
    Distance(RunArgs),
    /// Run a size ladder and fit the rate exponent.
    Rate(RunArgs),
    /// Run the lemma, concentration, identity and Stein property suites.
    Verify(VerifyArgs),
    /// Pretty-print a JSON report.
    Report { path: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's replicate count.
    #[arg(long)]
    replicates: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

fn load(args: &RunArgs) -> locdep::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    config.validate()?;
    Ok(config)
}

fn init_threads(common: &Common) -> locdep::Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> locdep::Result<bool> {
    match cli.command {
        Command::Bounds(args) => {
            init_threads(&args.common)?;
            let report = run(&load(&args)?)?;
            report.write(&args.common.out)?;
            println!(
                "n={} ks={:.6e} dkw={:.3e} mode={:?}",
                report.n, report.distance.ks, report.distance.dkw_radius, report.distance.mode
            );
            for t in &report.theorems {
                let status = match t.verdict {
                    Some(v) if v.pass => "PASS",
                    Some(_) => "FAIL",
                    None => "rate only",
                };
                println!("{:<10} bound={:.6e} se={:.2e} {status}", t.bound.theorem, t.bound.value, t.bound.se);
            }
            Ok(report.all_pass)
        }
        Command::Distance(args) => {
            init_threads(&args.common)?;
            let mut config = load(&args)?;
            config.theorems.clear();
            let report = run(&config)?;
            report.write(&args.common.out)?;
            println!(
                "n={} ks={:.6e} dkw={:.3e} mode={:?}",
                report.n, report.distance.ks, report.distance.dkw_radius, report.distance.mode
            );
            Ok(true)
        }
        Command::Rate(args) => {
            init_threads(&args.common)?;
            let report = run_rate_study(&load(&args)?)?;
            report.write(&args.common.out)?;
            for r in &report.rows {
                println!("n={:<8} ks={:.6e} dkw={:.3e}", r.n, r.ks, r.dkw_radius);
            }
            let f = report.fit;
            println!("slope={:.4} ci=[{:.4}, {:.4}]", f.slope, f.slope_ci.0, f.slope_ci.1);
            Ok(true)
        }
        Command::Verify(args) => {
            init_threads(&args.common)?;
            let report = verify::run_all(args.seed)?;
            std::fs::create_dir_all(&args.common.out)?;
            std::fs::write(args.common.out.join("verify.json"), serde_json::to_string_pretty(&report)?)?;
            for s in report.suites.iter().chain([&report.stein.suite]) {
                let status = if s.passed() { "PASS" } else { "FAIL" };
                println!("{status} {} ({} cases, {} failures)", s.name, s.cases, s.failures);
                for f in &s.failing {
                    println!("  {f}");
                }
            }
            Ok(report.passed())
        }
        Command::Report { path } => {
            let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Usage { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
