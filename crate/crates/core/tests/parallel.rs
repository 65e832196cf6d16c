//! End-to-end runs through the driver: rank independence, conservation,
//! freestream preservation, interface bookkeeping and the traffic audit.

mod common;

use slidemesh::driver::{audit_run, RK_STAGES};
use slidemesh::dgsolver::RkScheme;
use slidemesh::partition::{MessageKind, TraceEvent};
use slidemesh::{build_mesh, run_case, RunConfig, RunOutcome};

fn steps(mut cfg: RunConfig, n: usize) -> RunConfig {
    cfg.case.end_time = None;
    cfg.case.n_steps = Some(n);
    cfg
}

fn with_ranks(cfg: &RunConfig, ranks: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.parallel.ranks = ranks;
    c
}

fn assert_rank_independent(cfg: &RunConfig, ranks: &[usize]) {
    let reference = run_case(&with_ranks(cfg, 1)).unwrap();
    let bits = common::bits(&reference.field.data);
    for &r in ranks {
        let out = run_case(&with_ranks(cfg, r)).unwrap();
        assert_eq!(out.field.elements, reference.field.elements);
        assert!(common::bits(&out.field.data) == bits, "{r} ranks differ from 1 rank");
    }
}

#[test]
fn sliding_density_wave_is_bitwise_rank_independent() {
    let cfg = steps(RunConfig::density_wave(6, 3, 0.5), 50);
    assert_rank_independent(&cfg, &[2, 3, 4, 6]);
}

#[test]
fn viscous_run_is_bitwise_rank_independent() {
    let mut cfg = steps(RunConfig::density_wave(6, 3, 0.8), 20);
    cfg.gas.mu = 0.01;
    assert_rank_independent(&cfg, &[3, 4]);
}

#[test]
fn mass_and_energy_are_conserved_across_sliding_interfaces() {
    let mut cfg = steps(RunConfig::density_wave(6, 3, 0.5), 100);
    cfg.parallel.ranks = 3;
    let out = run_case(&cfg).unwrap();
    assert!(out.rebuilds > 0);
    assert!(out.report.mass_drift < 1e-11, "mass {:e}", out.report.mass_drift);
    assert!(out.report.energy_drift < 1e-11, "energy {:e}", out.report.energy_drift);
}

#[test]
fn viscous_run_conserves_mass() {
    let mut cfg = steps(RunConfig::density_wave(6, 3, 0.5), 50);
    cfg.gas.mu = 0.01;
    cfg.parallel.ranks = 3;
    let out = run_case(&cfg).unwrap();
    assert!(out.report.mass_drift < 1e-11, "mass {:e}", out.report.mass_drift);
    assert!(out.report.energy_drift < 1e-11, "energy {:e}", out.report.energy_drift);
}

/// Freestream at N=4 whose moving band travels at least three face lengths.
fn freestream_run(ranks: usize) -> RunOutcome {
    let mut cfg = RunConfig::freestream(6, 4, 1.0);
    cfg.case.end_time = Some(2.0);
    cfg.case.n_steps = Some(200);
    cfg.parallel.ranks = ranks;
    run_case(&cfg).unwrap()
}

#[test]
fn freestream_is_preserved_while_the_band_slides() {
    let out = freestream_run(3);
    let l_par = 2.0 / 6.0;
    assert!(1.0 * out.field.time >= 3.0 * l_par);
    assert!(out.report.norms.linf.iter().all(|&e| e < 1e-11), "{:?}", out.report.norms.linf);
}

/// Surpassed face count at `t`, computed from the interface velocity alone.
fn expected_n_delta(v: f64, l_par: f64, t: f64) -> i64 {
    (v * t / l_par).floor() as i64
}

#[test]
fn topology_and_rebuilds_follow_the_displacement() {
    let out = freestream_run(2);
    let mesh = build_mesh(&out.config.mesh).unwrap();
    let c = RkScheme::CARPENTER_KENNEDY.c;
    let dt = out.plan.dt;
    let mut changes = vec![0usize; mesh.interfaces.len()];
    let mut prev: Vec<i64> = vec![0; mesh.interfaces.len()];
    let stages: Vec<_> = out.topology.iter().filter(|r| r.step >= 0).collect();
    assert_eq!(stages.len(), out.plan.n_steps * RK_STAGES);
    for rec in stages {
        let t = (rec.step as f64 + c[rec.stage]) * dt;
        for (k, iface) in mesh.interfaces.iter().enumerate() {
            let want = expected_n_delta(iface.relative_velocity, iface.l_par, t);
            assert_eq!(rec.n_delta[k], want, "step {} stage {} interface {k}", rec.step, rec.stage);
            if want != prev[k] {
                changes[k] += 1;
                prev[k] = want;
            }
        }
    }
    // every rank touching an interface rebuilds whenever the count changes
    assert_eq!(out.rebuilds, changes.iter().sum::<usize>());
    assert!(changes.iter().all(|&c| c >= 3), "{changes:?}");
}

fn audit_config(ranks: usize, viscous: bool) -> RunConfig {
    let mut cfg = steps(RunConfig::density_wave(6, 2, 1.5), 40);
    cfg.parallel.ranks = ranks;
    cfg.output.trace = true;
    if viscous {
        cfg.gas.mu = 0.01;
    }
    cfg
}

#[test]
fn traffic_audit_passes_and_detects_injected_violations() {
    let audit = audit_run(&audit_config(3, false)).unwrap();
    assert!(audit.report.passed(), "{:?}", audit.report.violations);
    assert!(audit.run.topology_changes() >= 2);
    assert_eq!(audit.report.collectives_after_init, 0);
    assert_eq!(audit.report.stages_checked, 40 * RK_STAGES);

    let first_data = *audit.run.trace.iter().find(|e| e.step >= 0).unwrap();
    let broadcast = audit
        .reaudit(|t| t.push(TraceEvent { kind: MessageKind::Broadcast, step: 5, ..first_data }))
        .unwrap();
    assert!(!broadcast.passed());
    assert_eq!(broadcast.collectives_after_init, 1);

    let dropped = audit
        .reaudit(|t| {
            let k = t.iter().position(|e| e.kind == MessageKind::MortarSolution).unwrap();
            t.remove(k);
        })
        .unwrap();
    assert!(!dropped.passed());

    let resized = audit
        .reaudit(|t| {
            let e = t.iter_mut().find(|e| e.step >= 0 && e.kind == MessageKind::Flux).unwrap();
            e.bytes += 8;
        })
        .unwrap();
    assert!(!resized.passed());
}

#[test]
fn single_rank_audit_has_no_data_messages() {
    let audit = audit_run(&audit_config(1, false)).unwrap();
    assert!(audit.report.passed(), "{:?}", audit.report.violations);
    assert_eq!(audit.report.messages, 0);
}

#[test]
fn viscous_audit_passes() {
    let audit = audit_run(&audit_config(4, true)).unwrap();
    assert!(audit.report.passed(), "{:?}", audit.report.violations);
    assert!(audit.run.trace.iter().any(|e| e.kind == MessageKind::MortarLiftFlux));
}
