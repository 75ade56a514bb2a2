use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use imitation_cli::output::{pretty, write_file};
use imitation_cli::sweep::SweepOverrides;
use imitation_cli::scenario::Model;
use imitation_cli::{check, equilibria, run, sweep, CliError, Overrides, Scenario};

#[derive(Debug, Parser)]
#[command(name = "imitate", version, about = "Imitation dynamics on community networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Integrator step, overriding the scenario.
    #[arg(long, global = true)]
    step: Option<f64>,

    /// Final time, overriding the scenario.
    #[arg(long, global = true)]
    t_end: Option<f64>,

    /// Worker threads for `sweep` and the equilibrium grid (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Seed for random initial states and sampled checks, overriding the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Grid density of the equilibrium oracle.
    #[arg(long, global = true, default_value_t = 20)]
    density: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a scenario; writes `<name>.trajectory.csv` and `<name>.summary.json`.
    Run { scenario: PathBuf },
    /// Enumerate and classify equilibria; prints a JSON array.
    Equilibria { scenario: PathBuf },
    /// Report which hypotheses of the convergence results hold; prints JSON.
    Check { scenario: PathBuf },
    /// Run the Cartesian product of an overrides file.
    Sweep {
        scenario: PathBuf,
        overrides: PathBuf,
    },
}

/// Loads a scenario, applies the command-line overrides and validates it.
fn load(path: &PathBuf, cli: &Cli) -> Result<(Scenario, Model), CliError> {
    let mut s = Scenario::load(path)?;
    s.apply(&Overrides {
        step: cli.step,
        t_end: cli.t_end,
        seed: cli.seed,
    });
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let model = s.build().map_err(|e| e.in_file(path, &text))?;
    Ok((s, model))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match &cli.command {
        Command::Run { scenario } => {
            let (s, model) = load(scenario, cli)?;
            let out = run::execute(&s, &model)?;
            write_file(&run::trajectory_path(&cli.out_dir, &s.name), &out.csv)?;
            write_file(&run::summary_path(&cli.out_dir, &s.name), &out.summary_json)?;
            eprintln!(
                "wrote {} and {}",
                run::trajectory_path(&cli.out_dir, &s.name).display(),
                run::summary_path(&cli.out_dir, &s.name).display()
            );
            if !out.summary.audit.passed {
                eprintln!("warning: invariant audit failed; see the summary");
            }
        }
        Command::Equilibria { scenario } => {
            let (s, model) = load(scenario, cli)?;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
            let out = pool.install(|| equilibria::execute(&model, cli.density))?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let json = pretty(&out.json);
            write_file(&cli.out_dir.join(format!("{}.equilibria.json", s.name)), &json)?;
            print!("{json}");
        }
        Command::Check { scenario } => {
            let (s, model) = load(scenario, cli)?;
            let seed = cli.seed.unwrap_or(check::DEFAULT_SEED);
            let report = check::execute(&model, check::DEFAULT_SAMPLES, seed)?;
            let json = pretty(&report);
            write_file(&cli.out_dir.join(format!("{}.check.json", s.name)), &json)?;
            print!("{json}");
        }
        Command::Sweep {
            scenario,
            overrides,
        } => {
            let (s, _) = load(scenario, cli)?;
            let o = SweepOverrides::load(overrides)?;
            let index = sweep::execute(&s, &o, &cli.out_dir, workers)?;
            eprintln!("{} runs indexed in {}.sweep.json", index.runs.len(), s.name);
            if index.any_aborted() {
                return Err(CliError::Abort("one or more sweep runs aborted".into()).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
