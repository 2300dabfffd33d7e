use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use schloegl_core::analysis::ScalarLaw;
use schloegl_experiments::config::{parse_bound, ConfigError, Controller, ScenarioConfig};
use schloegl_experiments::reports::{constants_report, margin_report, ode_toy_csv};
use schloegl_experiments::scenario::{preset, run_scenario, RunStatus};
use schloegl_experiments::sweep::{run_sweep, Axis};
use schloegl_experiments::table::{run_table, BETAS, CELLS};

#[derive(Parser)]
#[command(name = "schloegl", version, about = "Tracking control experiments for the Schlögl equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file; without it the subcommand's default preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario: example1 .. example4.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads for batches of runs.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Coarse 16x16 mesh.
    #[arg(long)]
    ci: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Saturated,
    WorstCase,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled run, error measured against the target.
    SimulateFree(Common),
    /// Saturated feedback run.
    SimulateFeedback(Common),
    /// Receding-horizon run.
    RunRhc(Common),
    /// Receding horizon vs saturated feedback over the (C_u, T_inf) grid.
    Table1(Common),
    /// One run per value of a single parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `cu`, `lambda` or `msigma` (a perfect square)
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values; `cu` accepts `inf` and `e^x`.
        #[arg(long)]
        values: String,
    },
    /// Closed-form constants of the stability analysis.
    Constants(Common),
    /// Discrete stabilizability margin.
    Margin {
        #[command(flatten)]
        common: Common,
        /// Comma-separated gains; defaults to the configured lambda.
        #[arg(long)]
        lambdas: Option<String>,
    },
    /// Scalar model z' + r z = u with |u| <= C_u.
    OdeToy {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, default_value = "inf")]
        cu: String,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, allow_hyphen_values = true)]
        z0: f64,
        #[arg(long, value_enum, default_value_t = LawArg::Saturated)]
        law: LawArg,
        #[arg(long, default_value_t = 5.0)]
        horizon: f64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o error: {e}"))
    }
}

fn numerical(e: schloegl_core::Error) -> Failure {
    Failure::Numerical(e.to_string())
}

fn load(common: &Common, default_preset: &str) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ScenarioConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        (None, name) => {
            let name = name.as_deref().unwrap_or(default_preset);
            let text = preset(name).ok_or_else(|| Failure::Config(format!("unknown preset `{name}`")))?;
            ScenarioConfig::parse(text)?
        }
    };
    if common.ci {
        cfg.coarsen_for_ci();
    }
    if common.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn parse_list(s: &str, cu: bool) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            if cu {
                parse_bound(v).map_err(Failure::Config)
            } else {
                v.parse::<f64>().map_err(|_| Failure::Config(format!("bad value `{v}`")))
            }
        })
        .collect()
}

fn single_run(common: &Common, default_preset: &str, controller: Controller, name: &str) -> Result<(), Failure> {
    let mut cfg = load(common, default_preset)?;
    if cfg.controller != controller {
        cfg.controller = controller;
        cfg.has_rhc_block |= controller == Controller::Rhc;
        cfg.mark_override("controller");
        cfg.validate()?;
    }
    let art = run_scenario(&cfg)?;
    let dir = common.out.join(name);
    art.write(&dir)?;
    print!("{}", art.summary.to_text());
    println!("output={}", dir.display());
    match art.summary.status {
        RunStatus::Crashed => Err(Failure::Numerical(art.summary.error.unwrap_or_default())),
        _ => Ok(()),
    }
}

fn write_report(out: &Path, file: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(file), text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SimulateFree(c) => single_run(&c, "example1", Controller::None, "simulate-free"),
        Command::SimulateFeedback(c) => single_run(&c, "example1", Controller::Saturated, "simulate-feedback"),
        Command::RunRhc(c) => single_run(&c, "example2", Controller::Rhc, "run-rhc"),
        Command::Table1(c) => {
            let cfg = load(&c, "example2")?;
            let table = run_table(&cfg, &CELLS, &BETAS)?;
            let dir = c.out.join("table1");
            table.write(&dir)?;
            print!("{}", table.to_text());
            println!("output={}", dir.display());
            Ok(())
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common, "example4")?;
            let values = parse_list(&values, axis == Axis::Cu)?;
            let sweep = run_sweep(&cfg, axis, &values)?;
            let dir = common.out.join(format!("sweep-{}", axis.name()));
            sweep.write(&dir)?;
            print!("{}", sweep.to_csv());
            println!("output={}", dir.display());
            Ok(())
        }
        Command::Constants(c) => {
            let cfg = load(&c, "example3")?;
            let text = constants_report(&cfg).map_err(numerical)?;
            write_report(&c.out, "constants.txt", &text)
        }
        Command::Margin { common, lambdas } => {
            let cfg = load(&common, "example1")?;
            let lambdas = match lambdas {
                Some(s) => parse_list(&s, false)?,
                None => vec![cfg.lambda],
            };
            let text = margin_report(&cfg, &lambdas).map_err(numerical)?;
            write_report(&common.out, "margin.txt", &text)
        }
        Command::OdeToy { r, cu, mu, z0, law, horizon, out } => {
            let cu = parse_bound(&cu).map_err(Failure::Config)?;
            let law = match law {
                LawArg::Saturated => ScalarLaw::Saturated,
                LawArg::WorstCase => ScalarLaw::WorstCase,
            };
            let csv = ode_toy_csv(r, cu, mu, z0, law, horizon, 100).map_err(numerical)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("ode-toy.csv"), &csv)?;
            let last = csv.lines().last().unwrap_or_default();
            println!("final={last}\noutput={}", out.join("ode-toy.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
