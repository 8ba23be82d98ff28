//! `cachemec` — solver harness for energy-minimal caching, offloading and
//! TDMA time allocation at a cache-assisted MEC serving node.

mod config_doc;
mod experiment;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config_doc::ConfigDoc;
use experiment::{
    admm_options, run, run_instance, write_admm_trace, write_ccp_trace, Axis, ExperimentSpec,
    Method, RunError,
};

#[derive(Parser)]
#[command(name = "cachemec", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file; omitted fields take the documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Refuse instances whose enumerated state space exceeds this.
    #[arg(long, default_value_t = 100_000)]
    cap_states: usize,
    /// RNG seed (CCP multi-start).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also emit SVG charts.
    #[arg(long)]
    svg: bool,
    /// Record wall-clock times in the CSV (off by default so reruns are
    /// byte-identical).
    #[arg(long)]
    timing: bool,
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// ADMM residual tolerance. The harness default runs the relaxation to
    /// objective convergence; pass 1e-3 for the paper-style early stop.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// CCP multi-start count (the rounding warm start is always first).
    #[arg(long, default_value_t = 1)]
    starts: usize,
    /// Oracle enumeration budget (time-allocation solves).
    #[arg(long, default_value_t = 1 << 20)]
    oracle_cap: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance with one method and write its policy and result row.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        method: Method,
    },
    /// Sweep an axis over a grid, running every requested method per point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Methods to run (repeatable or comma-separated).
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        method: Vec<Method>,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Grid values for the axis (comma-separated).
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
    },
    /// Exhaustive brute-force solve (tiny instances).
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Also dump the full (cache, state, offload) combination table.
        #[arg(long)]
        table: bool,
    },
    /// Emit convergence traces for the iterative algorithms.
    Trace {
        #[command(flatten)]
        common: CommonArgs,
        /// Which algorithm to trace.
        #[arg(long, value_enum)]
        method: TraceMethod,
        /// ADMM penalty values, one trace file per value.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1])]
        rhos: Vec<f64>,
    },
    /// Validate a configuration document and echo the normalized config.
    Validate {
        /// JSON configuration file.
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum TraceMethod {
    Relax,
    Ccp,
}

fn load_doc(path: &Option<PathBuf>) -> Result<ConfigDoc, RunError> {
    match path {
        None => Ok(ConfigDoc::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            ConfigDoc::from_json(&text).map_err(|e| RunError::Config(vec![e.0]))
        }
    }
}

fn spec_from(common: &CommonArgs, methods: Vec<Method>) -> Result<ExperimentSpec, RunError> {
    Ok(ExperimentSpec {
        base: load_doc(&common.config)?,
        methods,
        axis: None,
        grid: Vec::new(),
        seed: common.seed,
        out_dir: common.out.clone(),
        svg: common.svg,
        cap_states: common.cap_states,
        timing: common.timing,
        rho: common.rho,
        eps: common.eps,
        ccp_starts: common.starts,
        oracle_cap: common.oracle_cap,
    })
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Solve { common, method } => {
            let spec = spec_from(&common, vec![method])?;
            let rows = run(&spec)?;
            for row in &rows {
                println!("{} objective: {:.8e} J (feasible rate {:.4})", row.method, row.objective_j, row.feasible_rate);
            }
            println!("results in {}", spec.out_dir.display());
            Ok(())
        }
        Command::Sweep { common, method, axis, grid } => {
            if grid.is_empty() {
                return Err(RunError::Config(vec!["sweep grid must be non-empty".into()]));
            }
            let mut spec = spec_from(&common, method)?;
            spec.axis = Some(axis);
            spec.grid = grid;
            let rows = run(&spec)?;
            println!("{} rows written to {}", rows.len(), spec.out_dir.join("results.csv").display());
            Ok(())
        }
        Command::Oracle { common, table } => {
            let spec = spec_from(&common, vec![Method::Oracle])?;
            let doc = spec.base.build().map_err(RunError::Config)?;
            let space = cachemec::state::enumerate_states(&doc, spec.cap_states).map_err(|e| {
                RunError::Cap(format!("{e}"))
            })?;
            if table {
                std::fs::create_dir_all(&spec.out_dir)?;
                let caps = cachemec::oracle::OracleCaps { max_combinations: spec.oracle_cap };
                let res = cachemec::oracle::brute_force(
                    &doc,
                    &space,
                    caps,
                    &cachemec::solver::SolverOptions::default(),
                    true,
                )
                .map_err(|e| RunError::Cap(format!("{e}")))?;
                let mut text = String::from("cache_mask,state_index,offload_mask,energy_J\n");
                for row in res.table.as_deref().unwrap_or(&[]) {
                    text.push_str(&format!(
                        "{},{},{},{:.8e}\n",
                        row.cache_mask, row.state_index, row.offload_mask, row.energy
                    ));
                }
                std::fs::write(spec.out_dir.join("oracle_table.csv"), text)?;
            }
            let rows = run(&spec)?;
            for row in &rows {
                println!("oracle optimum: {:.8e} J", row.objective_j);
            }
            Ok(())
        }
        Command::Trace { common, method, rhos } => {
            let spec = spec_from(
                &common,
                vec![match method {
                    TraceMethod::Relax => Method::Relax,
                    TraceMethod::Ccp => Method::Ccp,
                }],
            )?;
            let doc = spec.base.build().map_err(RunError::Config)?;
            let space = cachemec::state::enumerate_states(&doc, spec.cap_states)
                .map_err(|e| RunError::Cap(format!("{e}")))?;
            std::fs::create_dir_all(&spec.out_dir)?;
            match method {
                TraceMethod::Relax => {
                    let mut chart: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
                    for &rho in &rhos {
                        let admm = cachemec::admm::admm_solve_relaxed(
                            &doc,
                            &space,
                            &admm_options(rho, spec.eps),
                        )
                        .map_err(|e| RunError::Solver(format!("{e}")))?;
                        let name = format!("trace_admm_rho{rho}.csv");
                        write_admm_trace(&spec.out_dir.join(&name), &admm.trace)?;
                        chart.push((
                            format!("rho={rho}"),
                            admm.trace.iter().map(|r| (r.iter as f64, r.objective)).collect(),
                        ));
                        println!("{name}: {} iterations, final {:.8e} J", admm.trace.len(), admm.policy.objective);
                    }
                    if spec.svg {
                        let series: Vec<svg::Series<'_>> = chart
                            .iter()
                            .map(|(label, points)| svg::Series { label, points: points.clone() })
                            .collect();
                        std::fs::write(
                            spec.out_dir.join("trace_admm.svg"),
                            svg::line_chart("relaxation objective vs iteration", "iteration", "energy [J]", &series),
                        )?;
                    }
                }
                TraceMethod::Ccp => {
                    let mut spec2 = spec.clone();
                    spec2.methods = vec![Method::Ccp];
                    let outcomes = run_instance(&doc, &space, &spec2)?;
                    let (_, outcome) = outcomes.into_iter().next().expect("one method");
                    write_ccp_trace(&spec.out_dir.join("trace_ccp.csv"), &outcome.ccp_trace)?;
                    println!(
                        "trace_ccp.csv: {} outer iterations, final {:.8e} J",
                        outcome.ccp_trace.len(),
                        outcome.policy.objective
                    );
                    if spec.svg {
                        let series = [svg::Series {
                            label: "penalized objective",
                            points: outcome
                                .ccp_trace
                                .iter()
                                .map(|r| (r.iteration as f64, r.penalized))
                                .collect(),
                        }];
                        std::fs::write(
                            spec.out_dir.join("trace_ccp.svg"),
                            svg::line_chart("penalized objective vs outer iteration", "iteration", "energy + tau*s [J]", &series),
                        )?;
                    }
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            let text = std::fs::read_to_string(&config)?;
            let doc = ConfigDoc::from_json(&text).map_err(|e| RunError::Config(vec![e.0]))?;
            let cfg = doc.build().map_err(RunError::Config)?;
            print!("{}", config_doc::describe(&cfg));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
