//! Experiment harness: method dispatch on one instance, parameter sweeps
//! over an axis, and result/trace persistence with a fixed CSV schema.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cachemec::admm::{admm_solve_relaxed, AdmmOptions, PrimalAggregation};
use cachemec::baselines::{evaluate_baseline, BaselineScheme, BaselineSpec};
use cachemec::ccp::{ccp_multistart, CcpOptions};
use cachemec::config::SystemConfig;
use cachemec::oracle::{brute_force, OracleCaps, OracleError};
use cachemec::policy::Policy;
use cachemec::rounding::recover_policy;
use cachemec::solver::{SolverOptions, SubproblemError};
use cachemec::state::{enumerate_states, StateSpace, StateSpaceError};

use crate::config_doc::{ConfigDoc, Demand};
use crate::svg::{line_chart, Series};

/// Solution methods the harness can dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Consensus-ADMM solve of the continuous relaxation.
    Relax,
    /// Binary recovery from the relaxed solution.
    Round,
    /// Penalty-CCP stationary point (multi-start, rounding warm start).
    Ccp,
    /// Exhaustive binary search (tiny instances only).
    Oracle,
    /// All-local baseline with equal multicast time.
    Baseline1,
    /// All-offload baseline with equal transmission time.
    Baseline2,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Relax => "relax",
            Method::Round => "round",
            Method::Ccp => "ccp",
            Method::Oracle => "oracle",
            Method::Baseline1 => "baseline1",
            Method::Baseline2 => "baseline2",
        }
    }
}

/// Sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "K", alias = "k")]
    K,
    #[value(name = "N", alias = "n")]
    N,
    #[value(name = "gamma")]
    Gamma,
    #[value(name = "C", alias = "c")]
    C,
    #[value(name = "D", alias = "d")]
    D,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "K",
            Axis::N => "N",
            Axis::Gamma => "gamma",
            Axis::C => "C",
            Axis::D => "D",
        }
    }
}

/// Everything one experiment needs; the base configuration stays a document
/// so axis patches regenerate dependent defaults (software sizes, demand).
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: ConfigDoc,
    pub methods: Vec<Method>,
    pub axis: Option<Axis>,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub cap_states: usize,
    pub timing: bool,
    pub rho: f64,
    pub eps: f64,
    pub ccp_starts: usize,
    pub oracle_cap: u64,
}

/// Harness failures, mapped to process exit codes by `main`.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{0}")]
    Cap(String),
    #[error("instance infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Infeasible(_) => 3,
            RunError::Cap(_) => 4,
            RunError::Solver(_) | RunError::Io(_) => 1,
        }
    }
}

fn classify_admm(e: cachemec::admm::AdmmError) -> RunError {
    match e.source {
        SubproblemError::Infeasible { residual } => RunError::Infeasible(format!(
            "state {} has no feasible decision (phase-1 residual {residual:.3e})",
            e.state_index
        )),
        other => RunError::Solver(format!("state {}: {other}", e.state_index)),
    }
}

/// One CSV row of the fixed result schema.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub axis_value: f64,
    pub method: &'static str,
    pub objective_j: f64,
    pub feasible_rate: f64,
    pub iters_outer: usize,
    pub iters_inner_total: usize,
    pub wall_ms: u64,
    pub seed: u64,
}

pub const RESULT_HEADER: &str =
    "axis_value,method,objective_J,feasible_rate,iters_outer,iters_inner_total,wall_ms,seed";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.8e},{:.6},{},{},{},{}",
            trim_float(self.axis_value),
            self.method,
            self.objective_j,
            self.feasible_rate,
            self.iters_outer,
            self.iters_inner_total,
            self.wall_ms,
            self.seed
        )
    }
}

fn trim_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Patch one axis value into the configuration document.
pub fn apply_axis(base: &ConfigDoc, axis: Axis, value: f64) -> Result<ConfigDoc, RunError> {
    let mut doc = base.clone();
    let as_count = |v: f64, what: &str| -> Result<usize, RunError> {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(RunError::Config(vec![format!("{what} grid values must be positive integers, got {v}")]));
        }
        Ok(v as usize)
    };
    match axis {
        Axis::K => doc.num_users = Some(as_count(value, "K")?),
        Axis::N => {
            doc.num_services = Some(as_count(value, "N")?);
            if doc.software_bits.is_some() {
                return Err(RunError::Config(vec![
                    "sweeping N requires the default software size rule; drop software_bits".into(),
                ]));
            }
            if let Some(Demand { pmf: Some(_), .. }) = &doc.demand {
                return Err(RunError::Config(vec![
                    "sweeping N requires Zipf demand; drop demand.pmf".into(),
                ]));
            }
        }
        Axis::Gamma => doc.demand = Some(Demand { zipf_gamma: Some(value), pmf: None }),
        Axis::C => doc.cache_size = Some(value),
        Axis::D => doc.deadline = Some(value),
    }
    Ok(doc)
}

/// Outcome of one method on one instance.
pub struct MethodOutcome {
    pub policy: Policy,
    pub feasible_rate: f64,
    pub iters_outer: usize,
    pub iters_inner_total: usize,
    /// CCP outer trace, when the method produces one.
    pub ccp_trace: Vec<cachemec::ccp::CcpOuterRow>,
}

fn feasible_mass(policy: &Policy, space: &StateSpace) -> f64 {
    let infeasible: f64 = policy.infeasible_states.iter().map(|&q| space.states[q].prob).sum();
    1.0 - infeasible
}

/// Solver settings used by the harness: the Table II penalty and tolerances
/// where the paper pins them, and the convergent stopping profile for the
/// relaxation (see README).
pub fn admm_options(rho: f64, eps: f64) -> AdmmOptions {
    AdmmOptions {
        rho,
        eps,
        max_iters: 20_000,
        primal_aggregation: PrimalAggregation::Sum,
        init_cache: None,
        init_dual: 1e-3,
        solver: SolverOptions::default(),
    }
}

/// Run every requested method on one instance. Intermediate products
/// (the relaxed solution, the rounded policy) are shared downstream, so
/// `ccp` warm-starts from `round`'s output exactly as the experiment
/// pipeline prescribes.
pub fn run_instance(
    cfg: &SystemConfig,
    space: &StateSpace,
    spec: &ExperimentSpec,
) -> Result<Vec<(Method, MethodOutcome)>, RunError> {
    let mut out = Vec::new();
    let needs_relax = spec
        .methods
        .iter()
        .any(|m| matches!(m, Method::Relax | Method::Round | Method::Ccp));
    let solver = SolverOptions::default();

    let relaxed = if needs_relax {
        Some(admm_solve_relaxed(cfg, space, &admm_options(spec.rho, spec.eps)).map_err(classify_admm)?)
    } else {
        None
    };
    let rounded = if spec.methods.iter().any(|m| matches!(m, Method::Round | Method::Ccp)) {
        let admm = relaxed.as_ref().expect("relaxation precedes recovery");
        Some(
            recover_policy(cfg, space, &admm.state.decisions, &solver)
                .map_err(|e| RunError::Solver(format!("{e}")))?,
        )
    } else {
        None
    };

    for &method in &spec.methods {
        let outcome = match method {
            Method::Relax => {
                let admm = relaxed.as_ref().unwrap();
                MethodOutcome {
                    policy: admm.policy.clone(),
                    feasible_rate: 1.0,
                    iters_outer: admm.trace.len(),
                    iters_inner_total: admm.newton_iters,
                    ccp_trace: Vec::new(),
                }
            }
            Method::Round => {
                let admm = relaxed.as_ref().unwrap();
                let recovered = rounded.as_ref().unwrap();
                MethodOutcome {
                    policy: recovered.policy.clone(),
                    feasible_rate: feasible_mass(&recovered.policy, space),
                    iters_outer: admm.trace.len(),
                    iters_inner_total: admm.newton_iters,
                    ccp_trace: Vec::new(),
                }
            }
            Method::Ccp => {
                let warm = &rounded.as_ref().unwrap().policy;
                let opts = CcpOptions { rho: spec.rho, ..CcpOptions::default() };
                let ms = ccp_multistart(cfg, space, &opts, spec.ccp_starts, spec.seed, Some(warm))
                    .map_err(classify_admm)?;
                let (outer, inner, trace) = match ms.selected {
                    Some(i) => (ms.runs[i].outer_iters, ms.runs[i].inner_iters_total, ms.runs[i].trace.clone()),
                    None => (0, 0, ms.runs.first().map(|r| r.trace.clone()).unwrap_or_default()),
                };
                MethodOutcome {
                    feasible_rate: feasible_mass(&ms.best, space),
                    policy: ms.best,
                    iters_outer: outer,
                    iters_inner_total: inner,
                    ccp_trace: trace,
                }
            }
            Method::Oracle => {
                let caps = OracleCaps { max_combinations: spec.oracle_cap };
                let res = brute_force(cfg, space, caps, &solver, false).map_err(|e| match e {
                    OracleError::CapExceeded { required, cap } => RunError::Cap(format!(
                        "oracle needs {required} combination solves, cap is {cap}"
                    )),
                    OracleError::Solver(e) => RunError::Solver(format!("{e}")),
                })?;
                // Rebuild the optimal policy with its time allocations.
                let mut decisions = Vec::with_capacity(space.len());
                let mut infeasible_states = Vec::new();
                for (q, state) in space.states.iter().enumerate() {
                    let gate = cachemec::energy::multicast_gate_from_offload(
                        state,
                        &res.offloads[q],
                        cfg.num_services,
                    );
                    match cachemec::rounding::reallocate_times(
                        cfg,
                        state,
                        &res.cache,
                        &res.offloads[q],
                        &gate,
                        &solver,
                    ) {
                        Ok((dec, _)) => decisions.push(dec),
                        Err(_) => {
                            infeasible_states.push(q);
                            decisions.push(cachemec::policy::StateDecision::all_local(
                                cfg.num_users,
                                cfg.num_services,
                                res.cache.as_slice(),
                            ));
                        }
                    }
                }
                let policy = Policy {
                    cache: res.cache.clone(),
                    decisions,
                    objective: res.objective,
                    feasible: infeasible_states.is_empty() && res.objective.is_finite(),
                    infeasible_states,
                };
                MethodOutcome {
                    feasible_rate: feasible_mass(&policy, space),
                    policy,
                    iters_outer: res.cache_candidates,
                    iters_inner_total: res.combinations_solved as usize,
                    ccp_trace: Vec::new(),
                }
            }
            Method::Baseline1 | Method::Baseline2 => {
                let scheme = if method == Method::Baseline1 {
                    BaselineScheme::LocalEqualMulticast
                } else {
                    BaselineScheme::OffloadEqualSplit
                };
                let res = evaluate_baseline(&BaselineSpec::new(scheme), cfg, space);
                MethodOutcome {
                    policy: res.policy,
                    feasible_rate: 1.0 - res.infeasible_rate,
                    iters_outer: 0,
                    iters_inner_total: 0,
                    ccp_trace: Vec::new(),
                }
            }
        };
        out.push((method, outcome));
    }
    Ok(out)
}

fn build_point(spec: &ExperimentSpec, axis_value: Option<(Axis, f64)>) -> Result<(SystemConfig, StateSpace), RunError> {
    let doc = match axis_value {
        Some((axis, v)) => apply_axis(&spec.base, axis, v)?,
        None => spec.base.clone(),
    };
    let cfg = doc.build().map_err(RunError::Config)?;
    let space = enumerate_states(&cfg, spec.cap_states).map_err(|e| match e {
        StateSpaceError::TooLarge { size, cap } => {
            RunError::Cap(format!("state space has {size} states, cap is {cap}"))
        }
    })?;
    Ok((cfg, space))
}

/// Run a full sweep (or a single instance when no axis is set): one CSV row
/// per (grid point, method), policies serialized alongside, and optional
/// SVG panels. Byte-identical across reruns with the same spec and seed
/// unless `timing` is on.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, RunError> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let mut rows: Vec<ResultRow> = Vec::new();
    let points: Vec<Option<(Axis, f64)>> = match spec.axis {
        Some(axis) => spec.grid.iter().map(|&v| Some((axis, v))).collect(),
        None => vec![None],
    };

    for point in &points {
        let (cfg, space) = build_point(spec, *point)?;
        let started = Instant::now();
        let outcomes = run_instance(&cfg, &space, spec)?;
        let axis_value = point.map(|(_, v)| v).unwrap_or(0.0);
        for (method, outcome) in outcomes {
            let wall_ms = if spec.timing { started.elapsed().as_millis() as u64 } else { 0 };
            rows.push(ResultRow {
                axis_value,
                method: method.name(),
                objective_j: outcome.policy.objective,
                feasible_rate: outcome.feasible_rate,
                iters_outer: outcome.iters_outer,
                iters_inner_total: outcome.iters_inner_total,
                wall_ms,
                seed: spec.seed,
            });
            let tag = match point {
                Some((axis, v)) => format!("{}={}_{}", axis.name(), trim_float(*v), method.name()),
                None => method.name().to_string(),
            };
            let path = spec.out_dir.join(format!("policy_{tag}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&outcome.policy).expect("policy serializes"))?;
        }
    }

    write_results_csv(&spec.out_dir.join("results.csv"), &rows)?;
    if spec.svg {
        if let Some(axis) = spec.axis {
            let svg = sweep_chart(axis, spec, &rows);
            std::fs::write(spec.out_dir.join("sweep.svg"), svg)?;
        }
    }
    Ok(rows)
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<(), RunError> {
    let mut text = String::from(RESULT_HEADER);
    text.push('\n');
    for row in rows {
        let _ = writeln!(text, "{}", row.to_csv());
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn sweep_chart(axis: Axis, spec: &ExperimentSpec, rows: &[ResultRow]) -> String {
    let series: Vec<Series<'_>> = spec
        .methods
        .iter()
        .map(|m| Series {
            label: m.name(),
            points: rows
                .iter()
                .filter(|r| r.method == m.name())
                .map(|r| (r.axis_value, r.objective_j))
                .collect(),
        })
        .collect();
    line_chart(
        &format!("average weighted energy vs {}", axis.name()),
        axis.name(),
        "energy [J]",
        &series,
    )
}

/// Write an ADMM iteration trace: `iter, objective, primal_residual,
/// dual_residual` (the schema the convergence plots consume).
pub fn write_admm_trace(path: &Path, trace: &[cachemec::admm::AdmmIterRow]) -> Result<(), RunError> {
    let mut text = String::from("iter,objective,primal_residual,dual_residual\n");
    for row in trace {
        let _ = writeln!(
            text,
            "{},{:.8e},{:.8e},{:.8e}",
            row.iter, row.objective, row.primal_residual, row.dual_residual
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Write a CCP outer trace: `iter, tau, slack, energy, penalized`.
pub fn write_ccp_trace(path: &Path, trace: &[cachemec::ccp::CcpOuterRow]) -> Result<(), RunError> {
    let mut text = String::from("iter,tau,slack,energy,penalized\n");
    for row in trace {
        let _ = writeln!(
            text,
            "{},{:.8e},{:.8e},{:.8e},{:.8e}",
            row.iteration, row.tau, row.slack, row.energy, row.penalized
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}
