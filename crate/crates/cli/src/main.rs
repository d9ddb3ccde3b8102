use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use platoon_cli::commands::{Command, Run};
use platoon_cli::error::CliError;
use platoon_cli::scenario::{parse_scenario, Scenario};
use platoon_cli::table::{read_metadata, Format};
use platoon_core::Error as CoreError;

/// Delay thresholds, wireless delay and reliability of a vehicular platoon.
#[derive(Debug, Parser)]
#[command(name = "platoon", version)]
struct Cli {
    /// Scenario file (TOML). Missing keys take the baseline defaults.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Directory that relative scenario paths are resolved against.
    #[arg(long, global = true, env = "PLATOON_SCENARIO_DIR")]
    scenario_dir: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Razumikhin constant `k > 1`.
    #[arg(long, global = true, default_value_t = platoon_core::stability::DEFAULT_RAZUMIKHIN_K)]
    k: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Plant and string delay thresholds for the scenario gains.
    Stability,
    /// Thresholds, delay and reliability over the [sweep] section.
    Sweep,
    /// Gains maximizing min(tau1, tau2), then the reliability bound there.
    Optimize,
    /// Time-domain platoon run with random V2V delays.
    Simulate,
    /// Sampled SINR tail next to the analytic one.
    Montecarlo,
    /// Service-time moments and mean end-to-end delay.
    Delay,
    /// Lower bound and approximation of the reliability per target.
    Reliability,
    /// Recompute a table from the metadata stored in it.
    Rerun { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.k.is_nan() || cli.k <= 1.0 {
        return Err(CliError::Usage(format!("--k must exceed 1, got {}", cli.k)));
    }
    let (command, run, format) = match &cli.command {
        Cmd::Rerun { file } => rerun_inputs(file)?,
        other => {
            let command = match other {
                Cmd::Stability => Command::Stability,
                Cmd::Sweep => Command::Sweep,
                Cmd::Optimize => Command::Optimize,
                Cmd::Simulate => Command::Simulate,
                Cmd::Montecarlo => Command::Montecarlo,
                Cmd::Delay => Command::Delay,
                Cmd::Reliability => Command::Reliability,
                Cmd::Rerun { .. } => unreachable!(),
            };
            let run = Run {
                scenario: load_scenario(cli)?,
                seed: cli.seed,
                razumikhin_k: cli.k,
            };
            (command, run, cli.format)
        }
    };
    let outcome = run.execute(command)?;
    let text = outcome.table.render(format)?;
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(text.as_bytes())?;
        }
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario, CliError> {
    let Some(path) = &cli.scenario else {
        return Ok(Scenario::default());
    };
    let path = match &cli.scenario_dir {
        Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
        _ => path.clone(),
    };
    let text = read(&path)?;
    parse_scenario(&text, &path.display().to_string())
}

fn rerun_inputs(file: &Path) -> Result<(Command, Run, Format), CliError> {
    let text = read(file)?;
    let bad = |message: String| CliError::Usage(format!("{}: {message}", file.display()));
    let (meta, format) = read_metadata(&text).map_err(bad)?;
    let command = Command::from_name(&meta.command)
        .ok_or_else(|| bad(format!("unknown command {:?}", meta.command)))?;
    let scenario = parse_scenario(
        &meta.scenario,
        &format!("{} (embedded scenario)", file.display()),
    )?;
    let run = Run {
        scenario,
        seed: meta.seed,
        razumikhin_k: meta.razumikhin_k,
    };
    Ok((command, run, format))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.display().to_string(),
        source,
    })
}

fn report(e: &CliError) {
    eprintln!("error: {e}");
    if let CliError::Core(CoreError::InfeasibleBox(cert)) = e {
        let b = &cert.gain_box;
        eprintln!(
            "  gain box: a in [{}, {}], b in [{}, {}]",
            b.a_min, b.a_max, b.b_min, b.b_max
        );
        eprintln!(
            "  largest a²+b²+2ab−4a over the box: {:.6}",
            cert.max_plant_margin
        );
        eprintln!(
            "  largest a+2b−2 over the box: {:.6}",
            cert.max_string_margin
        );
        eprintln!(
            "  largest joint margin over the box: {:.6}",
            cert.max_joint_margin
        );
        for v in &cert.violated {
            eprintln!("  fails everywhere: {v}");
        }
    }
}
