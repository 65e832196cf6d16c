//! Solver state of one rank and its exchange phases.
//!
//! Every residual evaluation runs the same pattern, once for the lifting
//! variables (viscous runs only) and once for the fluxes:
//!
//! 1. face traces; replica faces send their trace, the moving side of every
//!    sliding interface projects onto its mortars and sends those;
//! 2. volume integrals while messages are in flight;
//! 3. primary faces and static mortars receive, evaluate the two-sided
//!    value and send it back;
//! 4. replica faces and moving mortars receive the result.
//!
//! Each two-sided value is computed exactly once, on the primary side, and
//! every element sums its contributions in a fixed order, so the result does
//! not depend on the number of ranks.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::kernels::{contravariant_fluxes, numerical_flux, Kernels};
use super::{apply_boundary, rk_step, RkScheme, SolutionField, SolverSetup};
use crate::error::{Error, Result};
use crate::mesh::{sigma_from_displacement, Displacement, Side};
use crate::mortar::{InterfaceSide, SideOperators};
use crate::partition::{
    build_schedule, exchange_rank_maps, rebuild_index_arrays, Endpoint, Epoch, IndexArrayA,
    LocalInterfaceFace, MappingM, MessageKind, MessageSchedule, Ownership, RankMaps,
};
use crate::physics::{lifting_variables, state_is_admissible, FluxPair, StateVec, NVAR};

/// Interface configuration used at one stage.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TopologyRecord {
    pub step: i64,
    pub stage: usize,
    pub n_delta: Vec<i64>,
}

/// Conforming-face exchange arrays of the faces this rank is primary for,
/// plus the flux received for its replica faces. `np` entries per face.
#[derive(Debug, Clone, Default)]
pub struct FaceDataArrays {
    pub u_primary: Vec<StateVec>,
    pub u_replica: Vec<StateVec>,
    pub f_primary: Vec<StateVec>,
    pub f_replica: Vec<StateVec>,
}

/// Mortar arrays of one interface side, in `A` order with `np` entries per
/// mortar. The static side fills the primary arrays and `u_replica_sm` by
/// receiving; the moving side fills `u_replica_sm` itself and receives
/// `f_replica_sm`.
#[derive(Debug, Clone, Default)]
struct MortarArrays {
    u_primary_sm: Vec<StateVec>,
    u_replica_sm: Vec<StateVec>,
    g_primary_sm: [Vec<StateVec>; 2],
    g_replica_sm: [Vec<StateVec>; 2],
    f_primary_sm: Vec<StateVec>,
    f_replica_sm: Vec<StateVec>,
}

#[derive(Debug, Clone, Copy)]
struct RoleFace {
    elem: usize,
    side: Side,
    i_par: usize,
    i_perp: usize,
}

#[derive(Debug, Clone)]
struct SideRole {
    side: InterfaceSide,
    faces: Vec<RoleFace>,
    a: IndexArrayA,
    m: MappingM,
    /// `[m(0, f), m(1, f)]` per local face `f`.
    mpos: Vec<[usize; 2]>,
    sched: MessageSchedule,
    ops: Option<SideOperators>,
    arrays: MortarArrays,
}

impl SideRole {
    fn new(side: InterfaceSide, faces: Vec<RoleFace>, np: usize) -> Self {
        let len = 2 * faces.len() * np;
        let z = || vec![[0.0; NVAR]; len];
        Self {
            side,
            faces,
            a: IndexArrayA::default(),
            m: MappingM::default(),
            mpos: Vec::new(),
            sched: MessageSchedule::default(),
            ops: None,
            arrays: MortarArrays {
                u_primary_sm: z(),
                u_replica_sm: z(),
                g_primary_sm: [z(), z()],
                g_replica_sm: [z(), z()],
                f_primary_sm: z(),
                f_replica_sm: z(),
            },
        }
    }

    fn rebuild(&mut self, maps: &RankMaps, n_delta: i64, rank: usize) -> Result<()> {
        let local: Vec<LocalInterfaceFace> = self
            .faces
            .iter()
            .enumerate()
            .map(|(k, f)| LocalInterfaceFace {
                i_face: k,
                i_par: f.i_par,
                i_perp: f.i_perp,
            })
            .collect();
        let (a, m) = rebuild_index_arrays(self.side, &local, maps, n_delta)?;
        self.mpos = (0..self.faces.len())
            .map(|k| Ok([m.get(0, k)?, m.get(1, k)?]))
            .collect::<Result<_>>()?;
        self.sched = build_schedule(&a, rank);
        self.a = a;
        self.m = m;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct RankInterface {
    id: usize,
    maps: RankMaps,
    /// Displacement committed at the start of the current step.
    disp: Displacement,
    velocity: f64,
    built_n_delta: i64,
    sigma: f64,
    rebuilds: usize,
    normal: [f64; 2],
    surf_jac: f64,
    stat: Option<SideRole>,
    mov: Option<SideRole>,
}

impl RankInterface {
    fn rebuild(&mut self, n_delta: i64, rank: usize) -> Result<()> {
        for role in [self.stat.as_mut(), self.mov.as_mut()].into_iter().flatten() {
            role.rebuild(&self.maps, n_delta, rank)?;
        }
        self.built_n_delta = n_delta;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Lift,
    Flux,
}

impl Phase {
    fn kinds(self) -> [MessageKind; 4] {
        match self {
            Phase::Lift => [
                MessageKind::LiftSolution,
                MessageKind::LiftFlux,
                MessageKind::MortarLiftSolution,
                MessageKind::MortarLiftFlux,
            ],
            Phase::Flux => [
                MessageKind::Solution,
                MessageKind::Flux,
                MessageKind::MortarSolution,
                MessageKind::MortarFlux,
            ],
        }
    }
}

/// Solver state of the elements owned by one rank.
pub struct RankSolver {
    setup: Arc<SolverSetup>,
    kern: Kernels,
    rank: usize,
    elems: Vec<usize>,
    local_of: Vec<usize>,
    u: Vec<StateVec>,
    time: f64,
    step: usize,
    viscous: bool,

    local_faces: Vec<usize>,
    primary_remote: Vec<(usize, Vec<usize>)>,
    replica_remote: Vec<(usize, Vec<usize>)>,
    boundary_faces: Vec<usize>,
    interfaces: Vec<RankInterface>,
    pub faces: FaceDataArrays,

    traces: Vec<StateVec>,
    gtraces: [Vec<StateVec>; 2],
    surf: Vec<StateVec>,
    vol: [Vec<StateVec>; 2],
    grads: Vec<FluxPair>,
    with_grads: bool,
    /// Gradients travel with the solution in the current phase.
    phase_grads: bool,
    du: Vec<StateVec>,
    ut: Vec<StateVec>,
    topology: Vec<TopologyRecord>,
}

const NO_LOCAL: usize = usize::MAX;

impl RankSolver {
    /// Sets up the rank owning `ownership.rank_elements[endpoint.rank()]`.
    ///
    /// Exchanges the interface rank maps, the only collective of a run.
    pub fn new(setup: Arc<SolverSetup>, ownership: &Ownership, ep: &mut Endpoint) -> Result<Self> {
        let rank = ep.rank();
        if ownership.n_ranks != ep.size() {
            return Err(Error::Config(format!(
                "ownership for {} ranks used with {} endpoints",
                ownership.n_ranks,
                ep.size()
            )));
        }
        let mesh = setup.mesh.clone();
        let np = setup.nodes.len();
        let nn = np * np;
        let elems = ownership.rank_elements[rank].clone();
        let mut local_of = vec![NO_LOCAL; mesh.n_elements()];
        for (k, &e) in elems.iter().enumerate() {
            local_of[e] = k;
        }

        let mut local_faces = Vec::new();
        let mut primary_remote: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut replica_remote: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in &mesh.conforming {
            let (om, op) = (local_of[f.minus.0] != NO_LOCAL, local_of[f.plus.0] != NO_LOCAL);
            match (om, op) {
                (true, true) => local_faces.push(f.id),
                (true, false) => primary_remote
                    .entry(ownership.owner(f.plus.0))
                    .or_default()
                    .push(f.id),
                (false, true) => replica_remote
                    .entry(ownership.owner(f.minus.0))
                    .or_default()
                    .push(f.id),
                (false, false) => {}
            }
        }
        let boundary_faces = mesh
            .boundary
            .iter()
            .filter(|b| local_of[b.element] != NO_LOCAL)
            .map(|b| b.id)
            .collect();

        let maps = if mesh.interfaces.is_empty() {
            Vec::new()
        } else {
            exchange_rank_maps(ep, &mesh, &elems)?
        };
        let mut interfaces = Vec::new();
        for (iface, maps) in mesh.interfaces.iter().zip(maps) {
            let role = |side: InterfaceSide, faces: &[crate::mesh::InterfaceFace]| {
                let mine: Vec<RoleFace> = faces
                    .iter()
                    .filter(|f| local_of[f.element] != NO_LOCAL)
                    .map(|f| RoleFace {
                        elem: local_of[f.element],
                        side: f.side,
                        i_par: f.i_par,
                        i_perp: f.i_perp,
                    })
                    .collect();
                (!mine.is_empty()).then(|| SideRole::new(side, mine, np))
            };
            let st_face = &mesh.elements[iface.static_faces[0].element].metrics.faces
                [iface.static_faces[0].side.index()];
            let mut ri = RankInterface {
                id: iface.id,
                maps,
                disp: iface.displacement,
                velocity: iface.relative_velocity,
                built_n_delta: iface.displacement.n_delta,
                sigma: f64::NAN,
                rebuilds: 0,
                normal: iface.static_normal,
                surf_jac: st_face.surf_jac,
                stat: role(InterfaceSide::Static, &iface.static_faces),
                mov: role(InterfaceSide::Moving, &iface.moving_faces),
            };
            ri.rebuild(ri.disp.n_delta, rank)?;
            interfaces.push(ri);
        }

        let n_loc = elems.len();
        let viscous = setup.gas.is_viscous();
        let kern = Kernels::new(&setup.nodes, &setup.basis);
        Ok(Self {
            kern,
            rank,
            local_of,
            u: vec![[0.0; NVAR]; n_loc * nn],
            time: 0.0,
            step: 0,
            viscous,
            local_faces,
            primary_remote: primary_remote.into_iter().collect(),
            replica_remote: replica_remote.into_iter().collect(),
            boundary_faces,
            interfaces,
            faces: FaceDataArrays::default(),
            traces: vec![[0.0; NVAR]; n_loc * 4 * np],
            gtraces: [vec![[0.0; NVAR]; n_loc * 4 * np], vec![[0.0; NVAR]; n_loc * 4 * np]],
            surf: vec![[0.0; NVAR]; n_loc * 4 * np],
            vol: [vec![[0.0; NVAR]; n_loc * nn], vec![[0.0; NVAR]; n_loc * nn]],
            grads: vec![[[0.0; NVAR]; 2]; if viscous { n_loc * nn } else { 0 }],
            with_grads: false,
            phase_grads: false,
            du: vec![[0.0; NVAR]; n_loc * nn],
            ut: vec![[0.0; NVAR]; n_loc * nn],
            topology: Vec::new(),
            elems,
            setup,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn owned_elements(&self) -> &[usize] {
        &self.elems
    }

    /// Index-array rebuilds so far, summed over interfaces.
    pub fn rebuild_count(&self) -> usize {
        self.interfaces.iter().map(|i| i.rebuilds).sum()
    }

    /// Committed `n_delta` of every interface.
    pub fn interface_n_delta(&self) -> Vec<i64> {
        self.interfaces.iter().map(|i| i.disp.n_delta).collect()
    }

    pub fn topology(&self) -> &[TopologyRecord] {
        &self.topology
    }

    pub fn solution(&self) -> SolutionField {
        SolutionField {
            degree: self.setup.nodes.degree(),
            elements: self.elems.clone(),
            data: self.u.clone(),
            time: self.time,
        }
    }

    /// Loads the owned part of `field`, which may cover more elements.
    pub fn set_solution(&mut self, field: &SolutionField) -> Result<()> {
        let nn = self.setup.nodes.len().pow(2);
        if field.degree != self.setup.nodes.degree() {
            return Err(Error::Config("field degree does not match the solver".into()));
        }
        let pos: BTreeMap<usize, usize> = field
            .elements
            .iter()
            .enumerate()
            .map(|(k, &e)| (e, k))
            .collect();
        for (k, e) in self.elems.iter().enumerate() {
            let src = *pos.get(e).ok_or_else(|| {
                Error::Config(format!("field lacks element {e} owned by rank {}", self.rank))
            })?;
            self.u[k * nn..(k + 1) * nn].copy_from_slice(&field.data[src * nn..(src + 1) * nn]);
        }
        self.time = field.time;
        Ok(())
    }

    /// Places every interface at its displacement for time `t` and resets
    /// the step counter's time origin.
    pub fn place_interfaces(&mut self, t: f64) {
        for iface in &mut self.interfaces {
            iface.disp = Displacement::new(iface.disp.l_par).shifted(iface.velocity * t);
        }
        self.time = t;
    }

    fn configure(&mut self, shift_time: f64, record: Option<(i64, usize)>) -> Result<()> {
        let rank = self.rank;
        for iface in &mut self.interfaces {
            let d = iface.disp.shifted(iface.velocity * shift_time);
            if d.n_delta != iface.built_n_delta {
                iface.rebuild(d.n_delta, rank)?;
                iface.rebuilds += 1;
            }
            // s_delta < 1 may still round to sigma = 1
            let sigma = sigma_from_displacement(d.s_delta()).min(1.0 - f64::EPSILON);
            if sigma.to_bits() != iface.sigma.to_bits() {
                let ops = self.setup.mortars.get(&self.setup.nodes, sigma)?;
                if let Some(r) = iface.stat.as_mut() {
                    r.ops = Some(SideOperators::new(&ops, InterfaceSide::Static));
                }
                if let Some(r) = iface.mov.as_mut() {
                    r.ops = Some(SideOperators::new(&ops, InterfaceSide::Moving));
                }
                iface.sigma = sigma;
            }
        }
        if let Some((step, stage)) = record {
            let n_delta = self.interfaces.iter().map(|i| i.built_n_delta).collect();
            self.topology.push(TopologyRecord {
                step,
                stage,
                n_delta,
            });
        }
        Ok(())
    }

    fn check_admissible(&self, u: &[StateVec], t: f64) -> Result<()> {
        let nn = self.setup.nodes.len().pow(2);
        let gamma = self.setup.gas.gamma;
        for (k, s) in u.iter().enumerate() {
            if !state_is_admissible(s, gamma) {
                return Err(Error::Positivity {
                    element: self.elems[k / nn],
                    time: t,
                    state: *s,
                });
            }
        }
        Ok(())
    }

    /// Time derivative of the current solution at its time level, with the
    /// interfaces at their committed displacement.
    pub fn residual(&mut self, ep: &mut Endpoint, t: f64) -> Result<Vec<StateVec>> {
        self.configure(0.0, None)?;
        let u = std::mem::take(&mut self.u);
        let mut out = vec![[0.0; NVAR]; u.len()];
        let r = self.rhs(ep, &u, t, &mut out);
        self.u = u;
        r.map(|_| out)
    }

    /// Advances the solution by one Runge-Kutta step.
    pub fn step(&mut self, ep: &mut Endpoint, dt: f64) -> Result<()> {
        let scheme = RkScheme::CARPENTER_KENNEDY;
        let mut u = std::mem::take(&mut self.u);
        let mut du = std::mem::take(&mut self.du);
        let mut ut = std::mem::take(&mut self.ut);
        du.fill([0.0; NVAR]);
        let (t0, step) = (self.time, self.step);
        let result = rk_step(&scheme, &mut u, &mut du, &mut ut, t0, dt, |stage, ts, u, out| {
            ep.set_epoch(Epoch {
                step: step as i64,
                stage,
            });
            self.configure(scheme.c[stage] * dt, Some((step as i64, stage)))?;
            self.check_admissible(u, ts)?;
            self.rhs(ep, u, ts, out)
        });
        let result = result
            .map_err(|e| match e {
                Error::NonFinite { stage, .. } => Error::NonFinite { step, stage },
                other => other,
            })
            .and_then(|_| self.check_admissible(&u, t0 + dt));
        self.u = u;
        self.du = du;
        self.ut = ut;
        result?;
        for iface in &mut self.interfaces {
            iface.disp.advance(iface.velocity * dt);
        }
        self.time = t0 + dt;
        self.step += 1;
        Ok(())
    }

    /// BR1 gradients of an arbitrary four-variable field on the owned elements.
    pub fn lift_field(
        &mut self,
        ep: &mut Endpoint,
        w: &[StateVec],
        t: f64,
        boundary: &dyn Fn([f64; 2]) -> StateVec,
    ) -> Result<Vec<FluxPair>> {
        if w.len() != self.u.len() {
            return Err(Error::Config("lifted field has the wrong size".into()));
        }
        self.configure(0.0, None)?;
        let mut g = vec![[[0.0; NVAR]; 2]; w.len()];
        self.lift(ep, w, t, boundary, &mut g)?;
        Ok(g)
    }

    fn rhs(&mut self, ep: &mut Endpoint, u: &[StateVec], t: f64, out: &mut [StateVec]) -> Result<()> {
        self.with_grads = false;
        if self.viscous {
            let gas = self.setup.gas;
            let w: Vec<StateVec> = u.iter().map(|s| lifting_variables(s, &gas)).collect();
            let setup = self.setup.clone();
            let bc = move |x: [f64; 2]| {
                apply_boundary(&setup.boundary, x, t, setup.gas.gamma)
                    .map(|s| lifting_variables(&s, &setup.gas))
                    .unwrap_or([f64::NAN; NVAR])
            };
            let mut g = std::mem::take(&mut self.grads);
            let r = self.lift(ep, &w, t, &bc, &mut g);
            self.grads = g;
            r?;
            self.with_grads = true;
        }
        self.flux(ep, u, t, out)
    }

    fn lift(
        &mut self,
        ep: &mut Endpoint,
        w: &[StateVec],
        t: f64,
        boundary: &dyn Fn([f64; 2]) -> StateVec,
        out: &mut [FluxPair],
    ) -> Result<()> {
        let np = self.kern.np;
        let nn = np * np;
        self.begin_exchange(ep, Phase::Lift, w, None)?;

        // volume: F~_m = (Ja_m)_d W for both gradient directions
        let mut f1 = vec![[0.0; NVAR]; nn];
        let mut f2 = vec![[0.0; NVAR]; nn];
        for (k, &e) in self.elems.iter().enumerate() {
            let ja = self.setup.mesh.elements[e].metrics.ja;
            let we = &w[k * nn..(k + 1) * nn];
            for d in 0..2 {
                for n in 0..nn {
                    for v in 0..NVAR {
                        f1[n][v] = ja[0][d] * we[n][v];
                        f2[n][v] = ja[1][d] * we[n][v];
                    }
                }
                self.kern
                    .divergence(&f1, &f2, &mut self.vol[d][k * nn..(k + 1) * nn]);
            }
        }

        self.finish_exchange(ep, Phase::Lift, t, Some(boundary))?;

        let mut s = vec![[0.0; NVAR]; 4 * np];
        for (k, &e) in self.elems.iter().enumerate() {
            let metrics = &self.setup.mesh.elements[e].metrics;
            for d in 0..2 {
                for side in Side::ALL {
                    let fg = metrics.faces[side.index()];
                    let scale = fg.normal[d] * fg.surf_jac;
                    for q in 0..np {
                        let src = self.surf[(k * 4 + side.index()) * np + q];
                        for v in 0..NVAR {
                            s[side.index() * np + q][v] = src[v] * scale;
                        }
                    }
                }
                let vol = &mut self.vol[d][k * nn..(k + 1) * nn];
                self.kern.add_surface(&s, vol);
                for n in 0..nn {
                    for v in 0..NVAR {
                        out[k * nn + n][d][v] = vol[n][v] / metrics.jacobian;
                    }
                }
            }
        }
        Ok(())
    }

    fn flux(&mut self, ep: &mut Endpoint, u: &[StateVec], t: f64, out: &mut [StateVec]) -> Result<()> {
        let np = self.kern.np;
        let nn = np * np;
        let grads = std::mem::take(&mut self.grads);
        let g = self.with_grads.then_some(grads.as_slice());
        let r = (|| {
            self.begin_exchange(ep, Phase::Flux, u, g)?;
            let mut f1 = vec![[0.0; NVAR]; nn];
            let mut f2 = vec![[0.0; NVAR]; nn];
            for (k, &e) in self.elems.iter().enumerate() {
                let el = &self.setup.mesh.elements[e];
                contravariant_fluxes(
                    &u[k * nn..(k + 1) * nn],
                    g.map(|g| &g[k * nn..(k + 1) * nn]),
                    &el.metrics.ja,
                    &el.motion,
                    &self.setup.gas,
                    &mut f1,
                    &mut f2,
                );
                self.kern
                    .divergence(&f1, &f2, &mut self.vol[0][k * nn..(k + 1) * nn]);
            }
            self.finish_exchange(ep, Phase::Flux, t, None)
        })();
        self.grads = grads;
        r?;
        for (k, &e) in self.elems.iter().enumerate() {
            let jac = self.setup.mesh.elements[e].metrics.jacobian;
            let vol = &mut self.vol[0][k * nn..(k + 1) * nn];
            self.kern
                .add_surface(&self.surf[k * 4 * np..(k + 1) * 4 * np], vol);
            for (o, v) in out[k * nn..(k + 1) * nn].iter_mut().zip(vol.iter()) {
                for q in 0..NVAR {
                    o[q] = -v[q] / jac;
                }
            }
        }
        Ok(())
    }

    fn slot(&self, elem: usize, side: Side) -> usize {
        (elem * 4 + side.index()) * self.kern.np
    }

    /// Trace values (and gradient traces) of one element side, packed per node.
    fn pack_trace(&self, elem: usize, side: Side, payload: &mut Vec<f64>) {
        let base = self.slot(elem, side);
        for q in 0..self.kern.np {
            payload.extend_from_slice(&self.traces[base + q]);
            if self.phase_grads {
                payload.extend_from_slice(&self.gtraces[0][base + q]);
                payload.extend_from_slice(&self.gtraces[1][base + q]);
            }
        }
    }

    fn values_per_node(&self) -> usize {
        if self.phase_grads {
            3 * NVAR
        } else {
            NVAR
        }
    }

    /// Traces, replica sends and mortar projections: everything that can go
    /// out before the volume integrals.
    fn begin_exchange(
        &mut self,
        ep: &mut Endpoint,
        phase: Phase,
        data: &[StateVec],
        grads: Option<&[FluxPair]>,
    ) -> Result<()> {
        let np = self.kern.np;
        let nn = np * np;
        self.phase_grads = grads.is_some();
        let [sol_kind, _, msol_kind, _] = phase.kinds();

        let mut gline = vec![[0.0; NVAR]; nn];
        for k in 0..self.elems.len() {
            let ue = &data[k * nn..(k + 1) * nn];
            for side in Side::ALL {
                let base = self.slot(k, side);
                self.kern.trace(ue, side, &mut self.traces[base..base + np]);
            }
            if let Some(g) = grads {
                for d in 0..2 {
                    for (n, gl) in gline.iter_mut().enumerate() {
                        *gl = g[k * nn + n][d];
                    }
                    for side in Side::ALL {
                        let base = self.slot(k, side);
                        self.kern
                            .trace(&gline, side, &mut self.gtraces[d][base..base + np]);
                    }
                }
            }
        }

        let mesh = self.setup.mesh.clone();
        for (partner, faces) in &self.replica_remote {
            let mut payload = Vec::with_capacity(faces.len() * np * self.values_per_node());
            for &f in faces {
                let (e, side) = mesh.conforming[f].plus;
                self.pack_trace(self.local_of[e], side, &mut payload);
            }
            ep.isend(*partner, sol_kind, payload)?;
        }

        let with_g = self.phase_grads;
        let vals = self.values_per_node();
        for iface in &mut self.interfaces {
            for role in [iface.mov.as_mut(), iface.stat.as_mut()].into_iter().flatten() {
                project_role(role, &self.traces, &self.gtraces, np, with_g);
            }
            if let Some(mv) = iface.mov.as_ref() {
                for c in &mv.sched.remote {
                    let mut payload = Vec::with_capacity(c.len * np * vals);
                    for q in c.start * np..(c.start + c.len) * np {
                        payload.extend_from_slice(&mv.arrays.u_replica_sm[q]);
                        if with_g {
                            payload.extend_from_slice(&mv.arrays.g_replica_sm[0][q]);
                            payload.extend_from_slice(&mv.arrays.g_replica_sm[1][q]);
                        }
                    }
                    ep.isend_on(c.partner, msol_kind, Some(iface.id), payload)?;
                }
            }
        }
        Ok(())
    }

    /// Two-sided values on primary faces and static mortars, then the
    /// returned values on replica faces and moving mortars. Fills `surf`
    /// with outward `F* sJ` (flux phase) or `W*` (lifting phase).
    fn finish_exchange(
        &mut self,
        ep: &mut Endpoint,
        phase: Phase,
        t: f64,
        boundary: Option<&dyn Fn([f64; 2]) -> StateVec>,
    ) -> Result<()> {
        let np = self.kern.np;
        let [sol_kind, flux_kind, msol_kind, mflux_kind] = phase.kinds();
        let vals = self.values_per_node();
        let with_g = self.phase_grads;
        let mesh = self.setup.mesh.clone();
        let gas = self.setup.gas;

        let two_sided = |ul: &StateVec,
                         ur: &StateVec,
                         g: Option<(FluxPair, FluxPair)>,
                         n: [f64; 2],
                         vgn: f64|
         -> Result<StateVec> {
            match phase {
                Phase::Flux => numerical_flux(ul, ur, g.as_ref().map(|(a, b)| (a, b)), n, vgn, &gas),
                Phase::Lift => {
                    let mut w = [0.0; NVAR];
                    for v in 0..NVAR {
                        w[v] = 0.5 * (ul[v] + ur[v]);
                    }
                    Ok(w)
                }
            }
        };
        // (primary side, replica side) surface entries
        let sides = |val: StateVec, sj: f64| -> (StateVec, StateVec) {
            match phase {
                Phase::Flux => {
                    let a = val.map(|x| x * sj);
                    (a, a.map(|x| -x))
                }
                Phase::Lift => (val, val),
            }
        };
        let gpair = |gt: &[Vec<StateVec>; 2], i: usize| [gt[0][i], gt[1][i]];

        self.faces.u_primary.clear();
        self.faces.u_replica.clear();
        self.faces.f_primary.clear();
        self.faces.f_replica.clear();

        for &f in &self.local_faces {
            let cf = &mesh.conforming[f];
            let bm = self.slot(self.local_of[cf.minus.0], cf.minus.1);
            let bp = self.slot(self.local_of[cf.plus.0], cf.plus.1);
            for q in 0..np {
                let (ul, ur) = (self.traces[bm + q], self.traces[bp + q]);
                let g = with_g.then(|| (gpair(&self.gtraces, bm + q), gpair(&self.gtraces, bp + q)));
                let (a, b) = sides(two_sided(&ul, &ur, g, cf.normal, cf.vg_normal)?, cf.surf_jac);
                self.surf[bm + q] = a;
                self.surf[bp + q] = b;
                self.faces.u_primary.push(ul);
                self.faces.u_replica.push(ur);
                self.faces.f_primary.push(a);
            }
        }

        for (partner, faces) in &self.primary_remote {
            let payload = ep.wait(ep.irecv(*partner, sol_kind, faces.len() * np * vals))?;
            let mut back = Vec::with_capacity(faces.len() * np * NVAR);
            for (fi, &f) in faces.iter().enumerate() {
                let cf = &mesh.conforming[f];
                let bm = self.slot(self.local_of[cf.minus.0], cf.minus.1);
                for q in 0..np {
                    let off = (fi * np + q) * vals;
                    let ur = state_at(&payload, off);
                    let ul = self.traces[bm + q];
                    let g = with_g.then(|| {
                        (
                            gpair(&self.gtraces, bm + q),
                            [state_at(&payload, off + NVAR), state_at(&payload, off + 2 * NVAR)],
                        )
                    });
                    let (a, _) = sides(two_sided(&ul, &ur, g, cf.normal, cf.vg_normal)?, cf.surf_jac);
                    self.surf[bm + q] = a;
                    back.extend_from_slice(&a);
                    self.faces.u_primary.push(ul);
                    self.faces.u_replica.push(ur);
                    self.faces.f_primary.push(a);
                }
            }
            ep.isend(*partner, flux_kind, back)?;
        }

        let xi = self.setup.nodes.nodes().to_vec();
        for &b in &self.boundary_faces {
            let bf = &mesh.boundary[b];
            let el = &mesh.elements[bf.element];
            let base = self.slot(self.local_of[bf.element], bf.side);
            for (q, &x) in xi.iter().enumerate() {
                let pos = el.position(side_point(bf.side, x), t);
                self.surf[base + q] = match phase {
                    Phase::Flux => {
                        let ext = apply_boundary(&self.setup.boundary, pos, t, gas.gamma)?;
                        let ul = self.traces[base + q];
                        let g = with_g.then(|| {
                            let gi = gpair(&self.gtraces, base + q);
                            (gi, gi)
                        });
                        sides(two_sided(&ul, &ext, g, bf.normal, bf.vg_normal)?, bf.surf_jac).0
                    }
                    Phase::Lift => boundary.ok_or_else(|| {
                        Error::Internal("lifting on a boundary face without boundary data".into())
                    })?(pos),
                };
            }
        }

        let mut line = vec![[0.0; NVAR]; np];
        for iface in &mut self.interfaces {
            let RankInterface {
                id,
                stat,
                mov,
                normal,
                surf_jac,
                ..
            } = iface;
            let Some(st) = stat.as_mut() else { continue };
            let arr = &mut st.arrays;
            for c in &st.sched.remote {
                let payload = ep.wait(ep.irecv(c.partner, msol_kind, c.len * np * vals))?;
                for (k, q) in (c.start * np..(c.start + c.len) * np).enumerate() {
                    arr.u_replica_sm[q] = state_at(&payload, k * vals);
                    if with_g {
                        arr.g_replica_sm[0][q] = state_at(&payload, k * vals + NVAR);
                        arr.g_replica_sm[1][q] = state_at(&payload, k * vals + 2 * NVAR);
                    }
                }
            }
            let local = match (st.sched.local, mov.as_ref().and_then(|m| m.sched.local)) {
                (Some(a), Some(b)) if a.len == b.len => Some((a, b)),
                (None, None) => None,
                _ => {
                    return Err(Error::Internal(format!(
                        "interface {id}: local mortar runs of both sides disagree"
                    )))
                }
            };
            if let Some((lc, mc)) = local {
                let mv = mov.as_ref().unwrap();
                let (src, dst) = (mc.start * np..(mc.start + mc.len) * np, lc.start * np);
                arr.u_replica_sm[dst..dst + src.len()].copy_from_slice(&mv.arrays.u_replica_sm[src.clone()]);
                if with_g {
                    for d in 0..2 {
                        arr.g_replica_sm[d][dst..dst + src.len()]
                            .copy_from_slice(&mv.arrays.g_replica_sm[d][src.clone()]);
                    }
                }
            }
            for q in 0..arr.u_primary_sm.len() {
                let g = with_g.then(|| (gpair(&arr.g_primary_sm, q), gpair(&arr.g_replica_sm, q)));
                arr.f_primary_sm[q] = two_sided(&arr.u_primary_sm[q], &arr.u_replica_sm[q], g, *normal, 0.0)?;
            }
            for c in &st.sched.remote {
                let mut payload = Vec::with_capacity(c.len * np * NVAR);
                for q in c.start * np..(c.start + c.len) * np {
                    payload.extend_from_slice(&arr.f_primary_sm[q]);
                }
                ep.isend_on(c.partner, mflux_kind, Some(*id), payload)?;
            }
            if let Some((lc, mc)) = local {
                let mv = mov.as_mut().unwrap();
                let (src, dst) = (lc.start * np..(lc.start + lc.len) * np, mc.start * np);
                mv.arrays.f_replica_sm[dst..dst + src.len()].copy_from_slice(&arr.f_primary_sm[src]);
            }
            let ops = st.ops.as_ref().expect("interface operators configured");
            for (fi, rf) in st.faces.iter().enumerate() {
                let [m0, m1] = st.mpos[fi];
                ops.mortars_to_face(
                    [
                        &arr.f_primary_sm[m0 * np..(m0 + 1) * np],
                        &arr.f_primary_sm[m1 * np..(m1 + 1) * np],
                    ],
                    &mut line,
                );
                let base = (rf.elem * 4 + rf.side.index()) * np;
                for q in 0..np {
                    self.surf[base + q] = sides(line[q], *surf_jac).0;
                }
            }
        }

        for (partner, faces) in &self.replica_remote {
            let payload = ep.wait(ep.irecv(*partner, flux_kind, faces.len() * np * NVAR))?;
            for (fi, &f) in faces.iter().enumerate() {
                let cf = &mesh.conforming[f];
                let bp = self.slot(self.local_of[cf.plus.0], cf.plus.1);
                for q in 0..np {
                    let v = state_at(&payload, (fi * np + q) * NVAR);
                    self.faces.f_replica.push(v);
                    self.surf[bp + q] = match phase {
                        Phase::Flux => v.map(|x| -x),
                        Phase::Lift => v,
                    };
                }
            }
        }

        for iface in &mut self.interfaces {
            let id = iface.id;
            let surf_jac = iface.surf_jac;
            let Some(mv) = iface.mov.as_mut() else { continue };
            for c in &mv.sched.remote {
                let payload = ep.wait(ep.irecv(c.partner, mflux_kind, c.len * np * NVAR))?;
                for (k, q) in (c.start * np..(c.start + c.len) * np).enumerate() {
                    mv.arrays.f_replica_sm[q] = state_at(&payload, k * NVAR);
                }
            }
            let ops = mv.ops.as_ref().ok_or_else(|| {
                Error::Internal(format!("interface {id}: moving operators not configured"))
            })?;
            for (fi, rf) in mv.faces.iter().enumerate() {
                let [m0, m1] = mv.mpos[fi];
                ops.mortars_to_face(
                    [
                        &mv.arrays.f_replica_sm[m0 * np..(m0 + 1) * np],
                        &mv.arrays.f_replica_sm[m1 * np..(m1 + 1) * np],
                    ],
                    &mut line,
                );
                let base = (rf.elem * 4 + rf.side.index()) * np;
                for q in 0..np {
                    self.surf[base + q] = sides(line[q], surf_jac).1;
                }
            }
        }
        Ok(())
    }
}

fn state_at(payload: &[f64], off: usize) -> StateVec {
    [payload[off], payload[off + 1], payload[off + 2], payload[off + 3]]
}

/// Reference coordinates of face node `x` on `side`.
fn side_point(side: Side, x: f64) -> [f64; 2] {
    match side {
        Side::West => [-1.0, x],
        Side::East => [1.0, x],
        Side::South => [x, -1.0],
        Side::North => [x, 1.0],
    }
}

/// Projects the role's own face traces onto its mortars, in `A` order.
fn project_role(
    role: &mut SideRole,
    traces: &[StateVec],
    gtraces: &[Vec<StateVec>; 2],
    np: usize,
    with_g: bool,
) {
    let ops = role.ops.as_ref().expect("interface operators configured");
    let is_static = role.side == InterfaceSide::Static;
    let arr = &mut role.arrays;
    let (u_dst, g_dst) = if is_static {
        (&mut arr.u_primary_sm, &mut arr.g_primary_sm)
    } else {
        (&mut arr.u_replica_sm, &mut arr.g_replica_sm)
    };
    for (fi, rf) in role.faces.iter().enumerate() {
        let base = (rf.elem * 4 + rf.side.index()) * np;
        for (i_sub, &pos) in role.mpos[fi].iter().enumerate() {
            let dst = pos * np..(pos + 1) * np;
            ops.face_to_mortar_into(i_sub, &traces[base..base + np], &mut u_dst[dst.clone()]);
            if with_g {
                for d in 0..2 {
                    ops.face_to_mortar_into(i_sub, &gtraces[d][base..base + np], &mut g_dst[d][dst.clone()]);
                }
            }
        }
    }
}
