use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use discovery_cli::commands::{self as cmd, GridSpec};
use discovery_cli::output::render_json;
use discovery_cli::scenario_file::{parse_json, preset, PRESETS};
use discovery_cli::service::{self, BIND_ENV, DEFAULT_BIND};
use discovery_cli::{CliError, CliResult, ScenarioFile};
use discovery_core::telemetry::{BootstrapConfig, Corridor, FitConfig, StressDelta};
use discovery_core::{BudgetState, Budgets, EngineConfig, LoopConfig};

#[derive(Parser)]
#[command(name = "discovery", version, about = "Entrant incubation policy calculator")]
struct Cli {
    /// Scenario JSON file. Without it the preset is used.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Built-in scenario: baseline, noise or thompson-20.
    #[arg(long, global = true, default_value = "baseline")]
    preset: String,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed of simulation commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    /// JSON lines (cohort records only).
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// P, P′ and Λ over a μ grid.
    Frontier {
        /// start:stop:step
        #[arg(long)]
        grid: Option<String>,
        /// Comma-separated μ values; an empty string gives an empty table.
        #[arg(long, conflicts_with = "grid")]
        points: Option<String>,
    },
    /// Creator best response, optionally with first best and bounty.
    Solve {
        #[arg(long)]
        first_best: bool,
        #[arg(long)]
        targeting_eps: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Budget-constrained allocation of impressions and bounty.
    Budget {
        #[command(subcommand)]
        action: BudgetCmd,
    },
    /// Continuation values by engine replay.
    Replay {
        #[arg(long)]
        mu: Option<f64>,
        /// EngineConfig JSON; scenario engine or the 20-competitor default otherwise.
        #[arg(long)]
        engine: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Λ(μ*) over (q, s) pairs.
    Heatmap {
        /// lo:hi
        #[arg(long, default_value = "2:20")]
        q_range: String,
        /// lo:hi
        #[arg(long, default_value = "1:10")]
        s_range: String,
    },
    /// Synthetic cohort records.
    Cohort {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Pass-curve fit, influence slope and bootstrap plug-in bounty from records.
    Fit {
        /// Records as CSV, JSON lines (.jsonl) or a JSON array (.json).
        #[arg(long)]
        records: PathBuf,
        /// Bootstrap replicates; 0 skips the bootstrap.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        /// Known per-slot nudge, comma-separated, for the influence estimate.
        #[arg(long)]
        dp: Option<String>,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Neighbor bars (q±1, s±1) and the leverage corridor advice.
    Stress {
        #[arg(long)]
        mu: Option<f64>,
        /// Re-derive rows from logged records instead of the model.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Deltas as dq:ds pairs, comma-separated.
        #[arg(long)]
        deltas: Option<String>,
        /// Pass-rate corridor lo:hi.
        #[arg(long)]
        corridor: Option<String>,
    },
    /// HTTP JSON service.
    Serve {
        #[arg(long, env = BIND_ENV, default_value = DEFAULT_BIND)]
        bind: String,
    },
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long = "M")]
    m: Option<f64>,
    /// LoopConfig JSON.
    #[arg(long = "loop")]
    loop_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BudgetCmd {
    /// Run the loop to convergence. CSV output is the trajectory.
    Loop {
        #[command(flatten)]
        args: LoopArgs,
        /// Resume from a saved state.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Where to write the final state JSON.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// One loop step from a saved state (or the start state).
    Step {
        #[command(flatten)]
        args: LoopArgs,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// MB curves over bounty levels.
    SweepB {
        #[arg(long, default_value = "0:100:1")]
        grid: String,
    },
    /// MB curves over windows q with a fixed bar.
    SweepQ {
        #[arg(long, default_value = "1:30")]
        q_range: String,
        #[arg(long, default_value_t = 0.3)]
        bar: f64,
    },
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_scenario(cli: &Cli) -> CliResult<ScenarioFile> {
    let file = match &cli.scenario {
        Some(p) => parse_json::<ScenarioFile>(&read(p)?)?,
        None => preset(&cli.preset).ok_or_else(|| {
            CliError::input("/preset", format!("unknown preset {}; choose one of {}", cli.preset, PRESETS.join(", ")))
        })?,
    };
    file.validate("")?;
    Ok(file)
}

fn parse_f64s(s: &str, ptr: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::input(ptr, format!("not a number: {t}"))))
        .collect()
}

fn parse_grid(s: &str, ptr: &str) -> CliResult<GridSpec> {
    let v = s.split(':').map(|t| t.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
    match v.as_deref() {
        Ok([start, stop, step]) => Ok(GridSpec { start: *start, stop: *stop, step: *step }),
        _ => Err(CliError::input(ptr, "expected start:stop:step")),
    }
}

fn parse_range(s: &str, ptr: &str) -> CliResult<[u32; 2]> {
    let v = s.split(':').map(|t| t.trim().parse::<u32>()).collect::<Result<Vec<_>, _>>();
    match v.as_deref() {
        Ok([lo, hi]) => Ok([*lo, *hi]),
        _ => Err(CliError::input(ptr, "expected lo:hi")),
    }
}

fn loop_inputs(file: &mut ScenarioFile, args: &LoopArgs) -> CliResult<Option<LoopConfig>> {
    match (args.r, args.m) {
        (Some(r), Some(m)) => file.budgets = Some(Budgets { r, m }),
        (None, None) => {}
        _ => return Err(CliError::input("/budgets", "give both --R and --M")),
    }
    args.loop_file.as_deref().map(|p| read(p).and_then(|t| parse_json(&t))).transpose()
}

fn load_records(path: &Path) -> CliResult<Vec<cmd::RecordIn>> {
    let text = read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => cmd::parse_records_jsonl(&text),
        Some("json") => parse_json(&text),
        _ => cmd::parse_records_csv(&text),
    }
}

/// Renders the command's output as text for `--out` or stdout.
fn run(cli: &Cli) -> CliResult<String> {
    let fmt = cli.format;
    let csv = fmt == Some(Format::Csv);
    match &cli.command {
        Command::Serve { .. } => unreachable!("handled in main"),
        Command::Frontier { grid, points } => {
            let scenario = load_scenario(cli)?;
            let req = cmd::FrontierRequest {
                scenario,
                mu: points.as_deref().map(|p| parse_f64s(p, "/mu")).transpose()?,
                grid: grid.as_deref().map(|g| parse_grid(g, "/grid")).transpose()?,
            };
            let rows = cmd::frontier(&req)?;
            // frontier is tabular; CSV unless JSON is requested
            Ok(if fmt == Some(Format::Json) { render_json(&rows) } else { cmd::frontier_csv(&rows) })
        }
        Command::Solve { first_best, targeting_eps, tol } => {
            let file = load_scenario(cli)?;
            let opts = cmd::SolveOptions { first_best: *first_best, targeting_eps: *targeting_eps, tol: *tol };
            Ok(render_json(&cmd::solve(&file, &opts)?))
        }
        Command::Budget { action } => {
            let mut file = load_scenario(cli)?;
            match action {
                BudgetCmd::Loop { args, state, state_out } => {
                    let loop_config = loop_inputs(&mut file, args)?;
                    let res = match state {
                        Some(p) => cmd::budget_resume(&file, parse_json::<BudgetState>(&read(p)?)?, &loop_config)?,
                        None => cmd::budget_run(&cmd::BudgetRunRequest { scenario: file, budgets: None, loop_config })?,
                    };
                    if let Some(p) = state_out {
                        std::fs::write(p, render_json(&res.state))?;
                    }
                    if !res.converged {
                        eprintln!("warning: loop stopped after {} iterations without converging", res.iterations);
                    }
                    Ok(if csv { cmd::trajectory_csv(&res.trajectory) } else { render_json(&res) })
                }
                BudgetCmd::Step { args, state } => {
                    let loop_config = loop_inputs(&mut file, args)?;
                    let state = state.as_deref().map(|p| read(p).and_then(|t| parse_json(&t))).transpose()?;
                    let out = cmd::budget_step(&cmd::BudgetStepRequest { scenario: file, budgets: None, loop_config, state })?;
                    Ok(if csv { cmd::trajectory_csv(&[out.row]) } else { render_json(&out) })
                }
                BudgetCmd::SweepB { grid } => {
                    let rows = cmd::sweep_b(&file, &parse_grid(grid, "/grid")?)?;
                    Ok(if fmt == Some(Format::Json) { render_json(&rows) } else { cmd::sweep_csv(&rows) })
                }
                BudgetCmd::SweepQ { q_range, bar } => {
                    let [lo, hi] = parse_range(q_range, "/q_range")?;
                    let rows = cmd::sweep_q(&file, lo, hi, *bar)?;
                    Ok(if fmt == Some(Format::Json) { render_json(&rows) } else { cmd::sweep_csv(&rows) })
                }
            }
        }
        Command::Replay { mu, engine, replications } => {
            let scenario = load_scenario(cli)?;
            let mut engine: Option<EngineConfig> =
                engine.as_deref().map(|p| read(p).and_then(|t| parse_json(&t))).transpose()?;
            if let Some(n) = replications {
                let mut e = engine.or_else(|| scenario.engine.clone()).unwrap_or_else(EngineConfig::thompson_20);
                e.replications = *n;
                engine = Some(e);
            }
            let req = cmd::ReplayRequest { scenario, mu: *mu, engine, seed: cli.seed };
            Ok(render_json(&cmd::replay(&req)?))
        }
        Command::Heatmap { q_range, s_range } => {
            let req = cmd::HeatmapRequest {
                scenario: load_scenario(cli)?,
                q_range: parse_range(q_range, "/q_range")?,
                s_range: parse_range(s_range, "/s_range")?,
            };
            let cells = cmd::heatmap(&req)?;
            Ok(if fmt == Some(Format::Json) { render_json(&cells) } else { cmd::heatmap_csv(&cells) })
        }
        Command::Cohort { n } => {
            let scenario = load_scenario(cli)?;
            let mut cohort = scenario.cohort.clone();
            if let Some(n) = n {
                let mut c = cohort.unwrap_or_else(discovery_cli::scenario_file::default_cohort);
                c.n = *n;
                cohort = Some(c);
            }
            let recs = cmd::simulate(&cmd::SimulateRequest { scenario, cohort, seed: cli.seed })?;
            Ok(match fmt {
                Some(Format::Json) => render_json(&recs),
                Some(Format::Jsonl) => cmd::records_jsonl(&recs),
                _ => cmd::records_csv(&recs),
            })
        }
        Command::Fit { records, bootstrap, dp, bandwidth } => {
            let scenario = load_scenario(cli)?;
            let req = cmd::FitRequest {
                records: load_records(records)?,
                fit: FitConfig { bandwidth: *bandwidth, ..FitConfig::default() },
                scenario: Some(scenario),
                bootstrap: (*bootstrap > 0).then(|| BootstrapConfig { n_boot: *bootstrap, ..BootstrapConfig::default() }),
                influence: dp
                    .as_deref()
                    .map(|d| parse_f64s(d, "/influence/dp").map(|dp| cmd::InfluenceRequest { dp, s: None }))
                    .transpose()?,
                seed: cli.seed,
            };
            Ok(render_json(&cmd::fit(&req)?))
        }
        Command::Stress { mu, records, deltas, corridor } => {
            let deltas = deltas
                .as_deref()
                .map(|d| {
                    d.split(',')
                        .map(|pair| {
                            let v: Vec<i32> = pair.split(':').filter_map(|t| t.trim().parse().ok()).collect();
                            match v.as_slice() {
                                [dq, ds] => Ok(StressDelta { dq: *dq, ds: *ds }),
                                _ => Err(CliError::input("/deltas", "expected dq:ds pairs")),
                            }
                        })
                        .collect::<CliResult<Vec<_>>>()
                })
                .transpose()?;
            let corridor = corridor
                .as_deref()
                .map(|c| {
                    let v = parse_grid(&format!("{c}:1"), "/corridor")?;
                    Ok::<_, CliError>(Corridor { lo: v.start, hi: v.stop, leverage_floor: None })
                })
                .transpose()?;
            let req = cmd::StressRequest {
                scenario: load_scenario(cli)?,
                mu: *mu,
                deltas,
                records: records.as_deref().map(load_records).transpose()?,
                fit: FitConfig::default(),
                corridor,
            };
            let out = cmd::stress(&req)?;
            Ok(if csv { cmd::stress_csv(&out.rows) } else { render_json(&out) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Serve { bind } = &cli.command {
        let rt = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(4);
            }
        };
        return match rt.block_on(service::serve(bind)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("cannot serve on {bind}: {e}");
                ExitCode::from(2)
            }
        };
    }
    match run(&cli) {
        Ok(text) => {
            let written = match &cli.out {
                Some(p) => std::fs::write(p, text),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(text.as_bytes())
                }
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("io error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprint!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
