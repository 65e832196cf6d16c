//! Communication audit: every traced message is checked against traffic
//! recomputed from the mesh geometry, the ownership and the displacement.

use std::collections::BTreeMap;
use std::path::Path;

use super::{MessageKind, Ownership, TraceEvent};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::physics::NVAR;

/// Message identity within one stage: `(src, dst, kind, interface)`.
pub type MessageKey = (usize, usize, MessageKind, Option<usize>);

/// Expected point-to-point traffic of a run.
pub struct TrafficModel<'a> {
    pub mesh: &'a Mesh,
    pub ownership: &'a Ownership,
    pub n_nodes: usize,
    pub viscous: bool,
    /// `n_delta` of every interface per `(step, stage)`.
    pub topology: &'a BTreeMap<(i64, usize), Vec<i64>>,
}

impl TrafficModel<'_> {
    fn add(map: &mut BTreeMap<MessageKey, usize>, key: MessageKey, values: usize) {
        if key.0 != key.1 {
            *map.entry(key).or_insert(0) += values * std::mem::size_of::<f64>();
        }
    }

    /// Bytes per message expected at one stage.
    pub fn expected(&self, step: i64, stage: usize) -> BTreeMap<MessageKey, usize> {
        let mut out = BTreeMap::new();
        let owner = |e: usize| self.ownership.owner(e);
        let np = self.n_nodes;
        let sol_vals = if self.viscous { 3 * NVAR } else { NVAR };

        for f in &self.mesh.conforming {
            let (prim, rep) = (owner(f.minus.0), owner(f.plus.0));
            Self::add(&mut out, (rep, prim, MessageKind::Solution, None), np * sol_vals);
            Self::add(&mut out, (prim, rep, MessageKind::Flux, None), np * NVAR);
            if self.viscous {
                Self::add(&mut out, (rep, prim, MessageKind::LiftSolution, None), np * NVAR);
                Self::add(&mut out, (prim, rep, MessageKind::LiftFlux, None), np * NVAR);
            }
        }

        let Some(n_deltas) = self.topology.get(&(step, stage)) else {
            return out;
        };
        for (iface, &n_delta) in self.mesh.interfaces.iter().zip(n_deltas) {
            let n = iface.n_faces_par as i64;
            let static_owner: BTreeMap<usize, usize> = iface
                .static_faces
                .iter()
                .map(|f| (f.i_par, owner(f.element)))
                .collect();
            let moving_owner: BTreeMap<usize, usize> = iface
                .moving_faces
                .iter()
                .map(|f| (f.i_par, owner(f.element)))
                .collect();
            // Lengths in units of l_par with the moving side displaced by
            // n_delta + s. The lower piece [i, i + s] of static face i ends
            // where moving face j ends: j + 1 + n_delta + s = i + s. The
            // upper piece [i + s, i + 1] starts where moving face j starts.
            for (&i, &rs) in &static_owner {
                let i = i as i64;
                let lower = (i - n_delta - 1).rem_euclid(n) as usize;
                let upper = (i - n_delta).rem_euclid(n) as usize;
                for j in [lower, upper] {
                    let rm = moving_owner[&j];
                    let k = Some(iface.id);
                    Self::add(&mut out, (rm, rs, MessageKind::MortarSolution, k), np * sol_vals);
                    Self::add(&mut out, (rs, rm, MessageKind::MortarFlux, k), np * NVAR);
                    if self.viscous {
                        Self::add(&mut out, (rm, rs, MessageKind::MortarLiftSolution, k), np * NVAR);
                        Self::add(&mut out, (rs, rm, MessageKind::MortarLiftFlux, k), np * NVAR);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub messages: usize,
    pub data_bytes: usize,
    pub init_collectives: usize,
    pub collectives_after_init: usize,
    pub stages_checked: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a merged trace of all ranks against `model`.
///
/// Collectives are allowed only at initialization. At every logged stage the
/// sent messages must match the expected set exactly, with identical sizes:
/// no missing, extra or resized messages.
pub fn audit_communication(trace: &[TraceEvent], model: &TrafficModel<'_>) -> AuditReport {
    let mut report = AuditReport {
        messages: trace.len(),
        ..Default::default()
    };
    let mut actual: BTreeMap<(i64, usize), BTreeMap<MessageKey, Vec<usize>>> = BTreeMap::new();
    for ev in trace {
        if ev.kind.is_collective() {
            if ev.step < 0 {
                report.init_collectives += 1;
            } else {
                report.collectives_after_init += 1;
                report.violations.push(format!(
                    "collective {} from rank {} at step {} stage {}",
                    ev.kind.name(),
                    ev.src,
                    ev.step,
                    ev.stage
                ));
            }
            continue;
        }
        report.data_bytes += ev.bytes;
        actual
            .entry((ev.step, ev.stage))
            .or_default()
            .entry((ev.src, ev.dst, ev.kind, ev.interface))
            .or_default()
            .push(ev.bytes);
    }

    for &(step, stage) in model.topology.keys() {
        report.stages_checked += 1;
        let expected = model.expected(step, stage);
        let got = actual.remove(&(step, stage)).unwrap_or_default();
        for (key, bytes) in &expected {
            match got.get(key).map(Vec::as_slice) {
                Some([b]) if b == bytes => {}
                Some(bs) => report.violations.push(format!(
                    "step {step} stage {stage}: {key:?} sent {bs:?} bytes, expected one message of {bytes}"
                )),
                None => report
                    .violations
                    .push(format!("step {step} stage {stage}: missing {key:?}")),
            }
        }
        for key in got.keys().filter(|k| !expected.contains_key(k)) {
            report
                .violations
                .push(format!("step {step} stage {stage}: unexpected {key:?}"));
        }
    }
    for ((step, stage), msgs) in actual {
        report.violations.push(format!(
            "step {step} stage {stage}: {} message groups outside any logged stage",
            msgs.len()
        ));
    }
    report
}

/// One CSV line per message; `step = -1` marks initialization.
pub fn write_trace_csv(path: &Path, trace: &[TraceEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "stage", "src", "dst", "bytes", "kind", "interface"])?;
    for ev in trace {
        w.write_record([
            ev.step.to_string(),
            ev.stage.to_string(),
            ev.src.to_string(),
            ev.dst.to_string(),
            ev.bytes.to_string(),
            ev.kind.name().to_string(),
            ev.interface.map_or(String::new(), |k| k.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
