use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use ftsc::config::{ControllerKind, Scenario, ScenarioFile};
use ftsc::suite::{self, RunError, SuiteName, SuiteOptions, SuiteReport, EXIT_IO, EXIT_OK};

/// Run switching finite-time stabilization scenarios and verification suites.
///
/// Exit codes: 0 success, 1 I/O error or failing suite rows, 2 parse error,
/// 3 invalid field or design, 4 integration failure, 5 switch cap exceeded.
#[derive(Debug, Parser)]
#[command(name = "ftsc", version)]
#[command(group(ArgGroup::new("run").args(["scenario", "suite"])))]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Scenario file, or the name of a bundled scenario.
    #[arg(long, value_name = "PATH")]
    scenario: Option<String>,

    /// Run a bundled suite.
    #[arg(long, value_name = "NAME", value_parser = parse_suite)]
    suite: Option<SuiteName>,

    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the integration step.
    #[arg(long, value_name = "S")]
    dt: Option<f64>,

    /// Override the controller; a changed controller also resets `t_end` to its default.
    #[arg(long, value_parser = ["ft", "pft", "nussbaum"])]
    controller: Option<String>,

    /// Seed for the verification sweeps.
    #[arg(long, value_name = "N", default_value_t = 2024)]
    seed: u64,

    /// Print the effective scenario file and exit without simulating.
    #[arg(long, requires = "scenario")]
    print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the lemma checks and print a text report.
    Verify {
        #[arg(long, value_name = "N", default_value_t = 2024)]
        seed: u64,
    },
    /// List the bundled scenarios and suites.
    List,
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    s.parse()
}

fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn load_scenario(arg: &str, cli: &Cli) -> Result<Scenario, RunError> {
    let path = Path::new(arg);
    let mut file = if path.exists() {
        ScenarioFile::load(path)?
    } else if let Some(text) = suite::bundled(arg) {
        ScenarioFile::parse(text)?
    } else {
        ScenarioFile::load(path)?
    };
    if let Some(c) = &cli.controller {
        let kind: ControllerKind = c.parse().map_err(RunError::Verify)?;
        if file.sim.controller.as_deref().unwrap_or("ft") != kind.as_str() {
            file.sim.t_end = None;
        }
        file.sim.controller = Some(kind.as_str().to_string());
    }
    if let Some(dt) = cli.dt {
        file.sim.dt = Some(dt);
    }
    Ok(Scenario::from_file(&file)?)
}

fn run_one(arg: &str, cli: &Cli) -> ExitCode {
    let scenario = match load_scenario(arg, cli) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    if cli.print_config {
        emit(&scenario.to_toml());
        return ExitCode::SUCCESS;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| scenario.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match suite::run_scenario(&scenario, Some(&out)) {
        Ok(run) => {
            let m = &run.metrics;
            println!(
                "{}: final |x| = {:.3e}, t_settle = {}, switches = {}, max|u| = {:.3e}",
                run.trajectory.controller, m.final_norm, m.t_settle, m.switch_count, m.max_abs_u
            );
            println!("artifacts in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("artifacts up to the failure in {}", out.display());
            fail(&e)
        }
    }
}

fn report_exit(report: &SuiteReport) -> ExitCode {
    emit(&format!("{report}\n"));
    if report.all_pass() {
        ExitCode::from(EXIT_OK as u8)
    } else {
        ExitCode::from(EXIT_IO as u8)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Some(Command::Verify { seed }) => {
            let report = SuiteReport {
                suite: SuiteName::VerifyAll,
                rows: suite::verify_rows(*seed),
                trajectories: Vec::new(),
            };
            return report_exit(&report);
        }
        Some(Command::List) => {
            let mut text = String::from("scenarios:\n");
            for (name, _) in suite::BUNDLED {
                text += &format!("  {name}\n");
            }
            text += "suites:\n";
            for s in SuiteName::ALL {
                text += &format!("  {s}\n");
            }
            emit(&text);
            return ExitCode::SUCCESS;
        }
        None => {}
    }
    if let Some(arg) = &cli.scenario {
        return run_one(arg, &cli);
    }
    if let Some(name) = cli.suite {
        let opts = SuiteOptions {
            out_root: cli.out.clone(),
            dt: cli.dt,
            seed: cli.seed,
        };
        if cli.controller.is_some() {
            eprintln!("warning: --controller applies to --scenario only");
        }
        return report_exit(&suite::run_suite(name, &opts));
    }
    eprintln!("error: give --scenario, --suite or a subcommand (see --help)");
    ExitCode::from(2)
}
