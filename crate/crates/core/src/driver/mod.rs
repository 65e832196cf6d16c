//! Case setup, run orchestration across ranks, diagnostics and studies.
//!
//! The coordinator builds the mesh and initial field, fixes the time step
//! from the global initial state, launches one worker per rank (threads or
//! processes) and merges what the workers report.

mod config;
mod norms;
mod study;
mod worker;

pub use config::{
    band, Backend, CaseConfig, DiscretizationConfig, GasConfig, OutputConfig, ParallelConfig,
    RunConfig, StudyConfig, MAX_DEGREE,
};
pub use norms::{conserved_totals, error_norms, ErrorNorms};
pub use study::{
    audit_run, convergence_study, observed_order, scaling_study, write_audit_csv, write_convergence_csv,
    write_scaling_csv, AuditOutcome, ConvergenceRow, ScalingRow, ScalingStudy,
};
pub use worker::{worker_main, WorkerJob, WORKER_EXE_ENV};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dgsolver::{compute_dt, write_snapshot, RankSolver, SolutionField, SolverSetup, TopologyRecord};
use crate::error::{Error, Result};
use crate::mesh::build_mesh;
use crate::partition::{
    assign_ranks, in_process_endpoints, measure_pid, write_trace_csv, Endpoint, Epoch, Ownership,
    TraceEvent,
};
use crate::physics::{StateVec, NVAR};
use crate::polybasis::build_node_set;

/// Environment variable capping the number of ranks a run may launch.
pub const MAX_WORKERS_ENV: &str = "SLIDEMESH_MAX_WORKERS";

/// Stages of the time integrator, used by the performance index.
pub const RK_STAGES: usize = 5;

/// Worker cap from the environment, if set.
pub fn max_workers() -> Result<Option<usize>> {
    match std::env::var(MAX_WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{MAX_WORKERS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Fixed step size and step count of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePlan {
    pub dt: f64,
    pub n_steps: usize,
}

/// Everything the ranks share, built identically by every process.
pub struct RunContext {
    pub config: RunConfig,
    pub setup: Arc<SolverSetup>,
    pub ownership: Ownership,
    pub initial: SolutionField,
}

impl RunContext {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mesh = Arc::new(build_mesh(&config.mesh)?);
        let nodes = build_node_set(config.discretization.degree, config.node_kind()?)?;
        let gas = config.gas_model()?;
        let setup = Arc::new(SolverSetup::new(mesh.clone(), nodes, gas, config.boundary()?)?);
        let ownership = assign_ranks(&mesh, config.parallel.ranks)?;
        let all: Vec<usize> = (0..mesh.n_elements()).collect();
        let initial = SolutionField::from_exact(&mesh, &setup.nodes, &all, &config.case.exact, gas.gamma, 0.0);
        Ok(Self {
            config: config.clone(),
            setup,
            ownership,
            initial,
        })
    }

    /// Time step from the global initial field; the step count rounds up so
    /// the run ends exactly at `end_time`.
    pub fn plan(&self) -> Result<TimePlan> {
        let c = &self.config.case;
        let cfl_dt = || {
            compute_dt(
                &self.initial,
                &self.setup.mesh,
                &self.setup.gas,
                self.config.discretization.cfl,
            )
        };
        let fit = |t: f64, dt: f64| {
            let n = ((t / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            TimePlan {
                dt: t / n as f64,
                n_steps: n,
            }
        };
        Ok(match (c.end_time, c.n_steps, c.dt) {
            (Some(t), Some(n), _) => TimePlan {
                dt: t / n as f64,
                n_steps: n,
            },
            (Some(t), None, Some(dt)) => fit(t, dt),
            (Some(t), None, None) => fit(t, cfl_dt()?),
            (None, Some(n), Some(dt)) => TimePlan { dt, n_steps: n },
            (None, Some(n), None) => TimePlan {
                dt: cfl_dt()?,
                n_steps: n,
            },
            (None, None, _) => return Err(Error::Config("case needs end_time or n_steps".into())),
        })
    }

    pub fn n_dof(&self) -> usize {
        self.setup.mesh.n_elements() * self.setup.nodes.len().pow(2)
    }
}

/// What one rank reports back to the coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub rank: usize,
    pub time: f64,
    pub steps: usize,
    /// Time-stepping loop only, without setup and output.
    pub wall_seconds: f64,
    pub rebuilds: usize,
    pub elements: Vec<usize>,
    /// Four values per node.
    pub data: Vec<f64>,
    pub topology: Vec<TopologyRecord>,
    pub trace: Vec<TraceEvent>,
}

/// Runs one rank to the end of `plan`.
pub fn run_rank(ctx: &RunContext, plan: TimePlan, mut ep: Endpoint) -> Result<RankResult> {
    let rank = ep.rank();
    let wrap = |e: Error| match e {
        Error::Rank { .. } => e,
        other => Error::Rank {
            rank,
            source: Box::new(other),
        },
    };
    ep.set_epoch(Epoch::INIT);
    let mut solver = RankSolver::new(ctx.setup.clone(), &ctx.ownership, &mut ep).map_err(wrap)?;
    solver.set_solution(&ctx.initial).map_err(wrap)?;
    solver.place_interfaces(ctx.initial.time);
    let start = Instant::now();
    for _ in 0..plan.n_steps {
        solver.step(&mut ep, plan.dt).map_err(wrap)?;
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    let field = solver.solution();
    Ok(RankResult {
        rank,
        time: field.time,
        steps: solver.steps_taken(),
        wall_seconds,
        rebuilds: solver.rebuild_count(),
        elements: field.elements,
        data: field.data.iter().flatten().copied().collect(),
        topology: solver.topology().to_vec(),
        trace: ep.take_trace(),
    })
}

/// Per-variable errors, conservation and timing of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub norms: ErrorNorms,
    pub totals_initial: StateVec,
    pub totals_final: StateVec,
    /// `|M(T) - M(0)| / |M(0)|` for mass and total energy.
    pub mass_drift: f64,
    pub energy_drift: f64,
    /// Slowest rank's time-stepping wall time.
    pub wall_seconds: f64,
    pub pid: f64,
}

pub struct RunOutcome {
    pub config: RunConfig,
    pub plan: TimePlan,
    pub n_dof: usize,
    pub ownership: Ownership,
    /// Final field on all elements, in element order.
    pub field: SolutionField,
    pub report: ErrorReport,
    /// Interface configuration per stage, identical on all ranks.
    pub topology: Vec<TopologyRecord>,
    /// Messages of all ranks, ordered by step, stage and sender.
    pub trace: Vec<TraceEvent>,
    /// Index-array rebuilds, summed over interfaces.
    pub rebuilds: usize,
}

impl RunOutcome {
    /// Topology log keyed by `(step, stage)`, as the audit expects it.
    pub fn topology_map(&self) -> BTreeMap<(i64, usize), Vec<i64>> {
        self.topology
            .iter()
            .map(|r| ((r.step, r.stage), r.n_delta.clone()))
            .collect()
    }

    /// Number of stages whose `n_delta` differs from the previous stage.
    pub fn topology_changes(&self) -> usize {
        self.topology
            .windows(2)
            .filter(|w| w[0].n_delta != w[1].n_delta)
            .count()
    }
}

fn relative_drift(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
}

/// Runs `config` to its end time on the configured backend.
pub fn run_case(config: &RunConfig) -> Result<RunOutcome> {
    let ctx = RunContext::new(config)?;
    let n = config.parallel.ranks;
    if let Some(cap) = max_workers()? {
        if n > cap {
            return Err(Error::Config(format!(
                "{n} ranks requested but {MAX_WORKERS_ENV} allows {cap}"
            )));
        }
    }
    let plan = ctx.plan()?;
    let results = match config.parallel.backend {
        Backend::Inproc => run_threads(&ctx, plan)?,
        Backend::Proc => worker::run_processes(&ctx, plan)?,
    };
    let outcome = merge(&ctx, plan, results)?;
    if let Some(dir) = &config.output.dir {
        write_outputs(dir, &ctx, &outcome)?;
    }
    Ok(outcome)
}

fn run_threads(ctx: &RunContext, plan: TimePlan) -> Result<Vec<RankResult>> {
    let eps = in_process_endpoints(ctx.config.parallel.ranks);
    let results: Vec<Result<RankResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = eps
            .into_iter()
            .map(|ep| s.spawn(move || run_rank(ctx, plan, ep)))
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(rank, h)| {
                h.join().unwrap_or_else(|_| {
                    Err(Error::Rank {
                        rank,
                        source: Box::new(Error::Internal("worker thread panicked".into())),
                    })
                })
            })
            .collect()
    });
    collect_results(results)
}

/// All results, or the most informative failure: a rank that failed on its
/// own beats ranks that only saw a peer hang up.
pub(crate) fn collect_results(results: Vec<Result<RankResult>>) -> Result<Vec<RankResult>> {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        return Ok(ok);
    }
    let is_secondary = |e: &Error| match e {
        Error::Rank { source, .. } => matches!(**source, Error::Transport(_)),
        Error::Transport(_) => true,
        _ => false,
    };
    let pos = errors.iter().position(|e| !is_secondary(e)).unwrap_or(0);
    Err(errors.swap_remove(pos))
}

fn merge(ctx: &RunContext, plan: TimePlan, mut results: Vec<RankResult>) -> Result<RunOutcome> {
    results.sort_by_key(|r| r.rank);
    let mesh = &ctx.setup.mesh;
    let nodes = &ctx.setup.nodes;
    let nn = nodes.len().pow(2);
    let mut data = vec![[f64::NAN; NVAR]; mesh.n_elements() * nn];
    let mut seen = vec![false; mesh.n_elements()];
    for r in &results {
        if r.data.len() != r.elements.len() * nn * NVAR {
            return Err(Error::Protocol(format!("rank {} returned a malformed field", r.rank)));
        }
        for (k, &e) in r.elements.iter().enumerate() {
            if std::mem::replace(&mut seen[e], true) {
                return Err(Error::Protocol(format!("element {e} returned twice")));
            }
            for n in 0..nn {
                let off = (k * nn + n) * NVAR;
                data[e * nn + n].copy_from_slice(&r.data[off..off + NVAR]);
            }
        }
    }
    if let Some(e) = seen.iter().position(|s| !s) {
        return Err(Error::Protocol(format!("element {e} missing from the results")));
    }
    let time = results[0].time;
    if results.iter().any(|r| r.time.to_bits() != time.to_bits() || r.steps != plan.n_steps) {
        return Err(Error::Protocol("ranks finished at different times".into()));
    }
    let field = SolutionField {
        degree: nodes.degree(),
        elements: (0..mesh.n_elements()).collect(),
        data,
        time,
    };
    let gamma = ctx.setup.gas.gamma;
    let norms = error_norms(mesh, nodes, &field, &ctx.config.case.exact, gamma)?;
    let totals_initial = conserved_totals(mesh, nodes, &ctx.initial);
    let totals_final = conserved_totals(mesh, nodes, &field);
    let wall_seconds = results.iter().map(|r| r.wall_seconds).fold(0.0, f64::max);
    let n_dof = ctx.n_dof();
    let pid = if plan.n_steps > 0 {
        measure_pid(wall_seconds, results.len(), n_dof, plan.n_steps, RK_STAGES)?
    } else {
        0.0
    };
    let mut trace: Vec<TraceEvent> = results.iter_mut().flat_map(|r| std::mem::take(&mut r.trace)).collect();
    trace.sort_by_key(|e| (e.step, e.stage, e.src, e.dst));
    let rebuilds = results.iter().map(|r| r.rebuilds).max().unwrap_or(0);
    Ok(RunOutcome {
        config: ctx.config.clone(),
        plan,
        n_dof,
        ownership: ctx.ownership.clone(),
        field,
        report: ErrorReport {
            norms,
            totals_initial,
            totals_final,
            mass_drift: relative_drift(totals_initial[0], totals_final[0]),
            energy_drift: relative_drift(totals_initial[3], totals_final[3]),
            wall_seconds,
            pid,
        },
        topology: std::mem::take(&mut results[0].topology),
        trace,
        rebuilds,
    })
}

const VARS: [&str; NVAR] = ["rho", "rhov1", "rhov2", "rhoe"];

/// One-row run summary.
pub fn write_summary_csv(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let cfg = &outcome.config;
    let r = &outcome.report;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "case", "degree", "n_elements", "n_dof", "ranks", "n_steps", "dt", "end_time",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(VARS.iter().map(|v| format!("l2_{v}")));
    header.extend(VARS.iter().map(|v| format!("linf_{v}")));
    header.extend(
        ["mass_drift", "energy_drift", "rebuilds", "wall_seconds", "pid"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    let mut row = vec![
        cfg.case.exact.name().to_string(),
        cfg.discretization.degree.to_string(),
        outcome.ownership.element_rank.len().to_string(),
        outcome.n_dof.to_string(),
        cfg.parallel.ranks.to_string(),
        outcome.plan.n_steps.to_string(),
        format!("{:e}", outcome.plan.dt),
        format!("{:e}", outcome.field.time),
    ];
    row.extend(r.norms.l2.iter().map(|v| format!("{v:e}")));
    row.extend(r.norms.linf.iter().map(|v| format!("{v:e}")));
    row.extend([
        format!("{:e}", r.mass_drift),
        format!("{:e}", r.energy_drift),
        outcome.rebuilds.to_string(),
        format!("{:e}", r.wall_seconds),
        format!("{:e}", r.pid),
    ]);
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

/// `n_delta` of every interface at every stage.
pub fn write_topology_csv(path: &Path, topology: &[TopologyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "stage", "interface", "n_delta"])?;
    for r in topology {
        for (k, nd) in r.n_delta.iter().enumerate() {
            w.write_record([r.step.to_string(), r.stage.to_string(), k.to_string(), nd.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(dir: &Path, ctx: &RunContext, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_summary_csv(&dir.join("summary.csv"), outcome)?;
    write_topology_csv(&dir.join("topology.csv"), &outcome.topology)?;
    if ctx.config.output.snapshot {
        write_snapshot(&dir.join("field.bin"), &outcome.field, &ctx.setup.mesh, &ctx.setup.nodes)?;
    }
    if ctx.config.output.trace {
        write_trace_csv(&dir.join("trace.csv"), &outcome.trace)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::density_wave(3, 2, 0.5);
        cfg.case.end_time = None;
        cfg.case.n_steps = Some(3);
        cfg
    }

    #[test]
    fn plan_rounds_step_count_up() {
        let mut cfg = tiny();
        cfg.case.n_steps = None;
        cfg.case.end_time = Some(0.1);
        cfg.case.dt = Some(0.03);
        let plan = RunContext::new(&cfg).unwrap().plan().unwrap();
        assert_eq!(plan.n_steps, 4);
        assert_eq!(plan.dt, 0.025);
        cfg.case.dt = Some(0.025);
        assert_eq!(RunContext::new(&cfg).unwrap().plan().unwrap().n_steps, 4);
    }

    #[test]
    fn threads_and_merge_cover_every_element() {
        let mut cfg = tiny();
        cfg.parallel.ranks = 2;
        let out = run_case(&cfg).unwrap();
        assert_eq!(out.field.elements.len(), 9);
        assert!(out.field.data.iter().flatten().all(|v| v.is_finite()));
        assert_eq!(out.topology.len(), 3 * RK_STAGES);
        assert!(out.report.pid > 0.0);
    }

    #[test]
    fn failing_rank_reports_its_own_error() {
        let mut cfg = tiny();
        cfg.parallel.ranks = 3;
        cfg.case.n_steps = Some(2);
        cfg.case.dt = Some(1e3);
        let err = run_case(&cfg).err().expect("a huge step must fail");
        match err {
            Error::Rank { source, .. } => assert!(
                matches!(*source, Error::Positivity { .. } | Error::NonFinite { .. }),
                "{source}"
            ),
            other => panic!("{other}"),
        }
    }
}
