//! Convergence and scaling studies, and the audited communication run.

use std::path::Path;

use super::{max_workers, run_case, RunConfig, RunOutcome};
use crate::error::{Error, Result};
use crate::partition::{audit_communication, AuditReport, TrafficModel};

/// Errors below this level carry no convergence information.
const MACHINE_LEVEL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub degree: usize,
    pub level: usize,
    /// Elements per direction.
    pub n_elements_1d: usize,
    pub h: f64,
    pub n_dof: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub l2_rho: f64,
    pub linf_rho: f64,
    /// Against the previous level; `None` for the first level or when both
    /// errors are at machine precision.
    pub order: Option<f64>,
    /// Error did not decrease from the previous level.
    pub non_monotone: bool,
    pub wall_seconds: f64,
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if e_coarse < MACHINE_LEVEL && e_fine < MACHINE_LEVEL {
        return None;
    }
    Some((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
}

/// Runs `config` on every refinement level for every degree.
///
/// `levels` are element-count factors relative to the configured mesh.
/// Empty `degrees` means the configured degree.
pub fn convergence_study(config: &RunConfig, levels: &[usize], degrees: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if levels.len() < 3 {
        return Err(Error::Config("a convergence study needs at least three levels".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
        return Err(Error::Config("refinement levels must increase".into()));
    }
    let degrees = if degrees.is_empty() {
        vec![config.discretization.degree]
    } else {
        degrees.to_vec()
    };
    let mut rows = Vec::new();
    for &degree in &degrees {
        let mut prev: Option<ConvergenceRow> = None;
        for &level in levels {
            let mut cfg = config.refined(level);
            cfg.discretization.degree = degree;
            cfg.output.dir = None;
            let out = run_case(&cfg)?;
            let n1 = cfg.mesh.total_n1();
            let h = (cfg.mesh.x1[1] - cfg.mesh.x1[0]) / n1 as f64;
            let l2 = out.report.norms.l2[0];
            let (order, non_monotone) = match &prev {
                Some(p) => (observed_order(p.l2_rho, l2, p.h, h), l2 >= p.l2_rho && l2 >= MACHINE_LEVEL),
                None => (None, false),
            };
            let row = ConvergenceRow {
                degree,
                level,
                n_elements_1d: n1,
                h,
                n_dof: out.n_dof,
                n_steps: out.plan.n_steps,
                dt: out.plan.dt,
                l2_rho: l2,
                linf_rho: out.report.norms.linf[0],
                order,
                non_monotone,
                wall_seconds: out.report.wall_seconds,
            };
            prev = Some(row.clone());
            rows.push(row);
        }
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "degree", "level", "n_elements_1d", "h", "n_dof", "n_steps", "dt", "l2_rho", "linf_rho", "order",
        "non_monotone", "wall_seconds",
    ])?;
    for r in rows {
        w.write_record([
            r.degree.to_string(),
            r.level.to_string(),
            r.n_elements_1d.to_string(),
            format!("{:e}", r.h),
            r.n_dof.to_string(),
            r.n_steps.to_string(),
            format!("{:e}", r.dt),
            format!("{:e}", r.l2_rho),
            format!("{:e}", r.linf_rho),
            fmt_opt(r.order),
            r.non_monotone.to_string(),
            format!("{:e}", r.wall_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub ranks: usize,
    /// `sliding` or `conforming`.
    pub layout: &'static str,
    pub n_dof: usize,
    pub steps: usize,
    pub wall: [f64; 3],
    /// Min, mean and max performance index over the repetitions.
    pub pid: [f64; 3],
    /// Mean PID of the smallest rank count over this mean PID.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// `(ranks, sliding mean PID / conforming mean PID)`.
    pub overhead: Vec<(usize, f64)>,
    /// Rank counts above the worker cap, not run.
    pub skipped: Vec<usize>,
}

fn min_mean_max(v: &[f64]) -> [f64; 3] {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [min, v.iter().sum::<f64>() / v.len() as f64, max]
}

/// Fixed-step timing runs of the sliding mesh and of the same mesh without
/// motion, for every rank count.
pub fn scaling_study(config: &RunConfig, ranks: &[usize]) -> Result<ScalingStudy> {
    let study = &config.study;
    if study.repetitions == 0 || study.steps == 0 {
        return Err(Error::Config("scaling needs positive repetitions and steps".into()));
    }
    let cap = max_workers()?;
    let (run, skipped): (Vec<usize>, Vec<usize>) = ranks.iter().partition(|&&n| cap.is_none_or(|c| n <= c));
    if run.is_empty() {
        return Err(Error::Config("no rank count within the worker cap".into()));
    }
    let mut rows = Vec::new();
    for &n in &run {
        for (layout, base) in [("sliding", config.clone()), ("conforming", config.conforming())] {
            let mut cfg = base;
            cfg.parallel.ranks = n;
            cfg.case.end_time = None;
            cfg.case.n_steps = Some(study.steps);
            cfg.output.dir = None;
            let mut walls = Vec::new();
            let mut pids = Vec::new();
            let mut n_dof = 0;
            for _ in 0..study.repetitions {
                let out = run_case(&cfg)?;
                walls.push(out.report.wall_seconds);
                pids.push(out.report.pid);
                n_dof = out.n_dof;
            }
            rows.push(ScalingRow {
                ranks: n,
                layout,
                n_dof,
                steps: study.steps,
                wall: min_mean_max(&walls),
                pid: min_mean_max(&pids),
                efficiency: f64::NAN,
            });
        }
    }
    for layout in ["sliding", "conforming"] {
        let base = rows.iter().find(|r| r.layout == layout).map(|r| r.pid[1]).unwrap();
        for r in rows.iter_mut().filter(|r| r.layout == layout) {
            r.efficiency = base / r.pid[1];
        }
    }
    let overhead = run
        .iter()
        .map(|&n| {
            let pid = |l: &str| rows.iter().find(|r| r.ranks == n && r.layout == l).unwrap().pid[1];
            (n, pid("sliding") / pid("conforming"))
        })
        .collect();
    Ok(ScalingStudy {
        rows,
        overhead,
        skipped,
    })
}

pub fn write_scaling_csv(path: &Path, study: &ScalingStudy) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "ranks", "layout", "n_dof", "steps", "wall_min", "wall_mean", "wall_max", "pid_min", "pid_mean", "pid_max",
        "efficiency", "overhead",
    ])?;
    for r in &study.rows {
        let overhead = study
            .overhead
            .iter()
            .find(|(n, _)| *n == r.ranks)
            .filter(|_| r.layout == "sliding")
            .map_or(String::new(), |(_, o)| format!("{o:.4}"));
        w.write_record([
            r.ranks.to_string(),
            r.layout.to_string(),
            r.n_dof.to_string(),
            r.steps.to_string(),
            format!("{:e}", r.wall[0]),
            format!("{:e}", r.wall[1]),
            format!("{:e}", r.wall[2]),
            format!("{:e}", r.pid[0]),
            format!("{:e}", r.pid[1]),
            format!("{:e}", r.pid[2]),
            format!("{:.4}", r.efficiency),
            overhead,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct AuditOutcome {
    pub run: RunOutcome,
    pub report: AuditReport,
}

impl AuditOutcome {
    /// Re-audits the run's trace after `edit`, e.g. to inject a violation.
    pub fn reaudit(&self, edit: impl FnOnce(&mut Vec<crate::partition::TraceEvent>)) -> Result<AuditReport> {
        let mut trace = self.run.trace.clone();
        edit(&mut trace);
        audit_trace(&self.run, &trace)
    }
}

fn audit_trace(run: &RunOutcome, trace: &[crate::partition::TraceEvent]) -> Result<AuditReport> {
    let mesh = crate::mesh::build_mesh(&run.config.mesh)?;
    let topology = run.topology_map();
    let model = TrafficModel {
        mesh: &mesh,
        ownership: &run.ownership,
        n_nodes: run.config.discretization.degree + 1,
        viscous: run.config.gas_model()?.is_viscous(),
        topology: &topology,
    };
    Ok(audit_communication(trace, &model))
}

/// One-row audit summary.
pub fn write_audit_csv(path: &Path, audit: &AuditOutcome) -> Result<()> {
    let r = &audit.report;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "messages",
        "data_bytes",
        "init_collectives",
        "collectives_after_init",
        "stages_checked",
        "topology_changes",
        "violations",
        "passed",
    ])?;
    w.write_record([
        r.messages.to_string(),
        r.data_bytes.to_string(),
        r.init_collectives.to_string(),
        r.collectives_after_init.to_string(),
        r.stages_checked.to_string(),
        audit.run.topology_changes().to_string(),
        r.violations.len().to_string(),
        r.passed().to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Runs `config` and checks its message trace against the traffic expected
/// from geometry, ownership and displacement alone.
pub fn audit_run(config: &RunConfig) -> Result<AuditOutcome> {
    let run = run_case(config)?;
    let report = audit_trace(&run, &run.trace)?;
    Ok(AuditOutcome { run, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_of_known_sequences() {
        assert!((observed_order(1.0, 0.25, 2.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((observed_order(8.0, 1.0, 3.0, 1.5).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(observed_order(1e-15, 2e-15, 2.0, 1.0), None);
    }

    #[test]
    fn uniform_flow_has_undefined_orders() {
        let mut cfg = RunConfig::freestream(3, 2, 0.5);
        cfg.case.end_time = Some(0.05);
        let rows = convergence_study(&cfg, &[1, 2, 3], &[]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.order.is_none() && r.l2_rho < MACHINE_LEVEL));
    }

    #[test]
    fn too_few_levels_is_an_error() {
        let cfg = RunConfig::density_wave(3, 2, 0.5);
        assert!(convergence_study(&cfg, &[1, 2], &[]).is_err());
        assert!(convergence_study(&cfg, &[1, 1, 2], &[]).is_err());
    }
}
