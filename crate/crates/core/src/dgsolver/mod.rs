//! DGSEM spatial operator and low-storage Runge-Kutta time stepping.

mod kernels;
mod rank;
mod snapshot;

pub use rank::{FaceDataArrays, RankSolver, TopologyRecord};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::mortar::MortarCache;
use crate::partition::{assign_ranks, in_process_endpoints};
use crate::physics::{
    exact_density_wave, exact_isentropic_vortex, pressure_unchecked, primitive_to_conserved,
    DensityWaveParams, FluxPair, GasModel, Primitive, StateVec, VortexParams, NVAR,
};
use crate::polybasis::{build_basis_operators, BasisOperators, NodeSet};

/// Coefficients of a low-storage (2N) explicit Runge-Kutta method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkScheme {
    pub a: [f64; 5],
    pub b: [f64; 5],
    pub c: [f64; 5],
}

impl RkScheme {
    /// Carpenter and Kennedy's five-stage, fourth-order scheme.
    pub const CARPENTER_KENNEDY: RkScheme = RkScheme {
        a: [
            0.0,
            -567301805773.0 / 1357537059087.0,
            -2404267990393.0 / 2016746695238.0,
            -3550918686646.0 / 2091501179385.0,
            -1275806237668.0 / 842570457699.0,
        ],
        b: [
            1432997174477.0 / 9575080441755.0,
            5161836677717.0 / 13612068292357.0,
            1720146321549.0 / 2090206949498.0,
            3134564353537.0 / 4481467310338.0,
            2277821191437.0 / 14882151754819.0,
        ],
        c: [
            0.0,
            1432997174477.0 / 9575080441755.0,
            2526269341429.0 / 6820363183890.0,
            2006345519317.0 / 3224310063776.0,
            2802321613138.0 / 2924317926251.0,
        ],
    };

    pub const fn n_stages(&self) -> usize {
        5
    }
}

/// Advances `u` by one step. `rhs(stage, t_stage, u, out)` evaluates the
/// time derivative. Only `u` and the stage register `du` persist between
/// stages; `ut` is scratch for the derivative.
#[allow(clippy::too_many_arguments)]
pub fn rk_step<F>(
    scheme: &RkScheme,
    u: &mut [StateVec],
    du: &mut [StateVec],
    ut: &mut [StateVec],
    t: f64,
    dt: f64,
    mut rhs: F,
) -> Result<()>
where
    F: FnMut(usize, f64, &[StateVec], &mut [StateVec]) -> Result<()>,
{
    for stage in 0..scheme.n_stages() {
        rhs(stage, t + scheme.c[stage] * dt, u, ut)?;
        let (a, b) = (scheme.a[stage], scheme.b[stage]);
        for ((ui, di), ti) in u.iter_mut().zip(du.iter_mut()).zip(ut.iter()) {
            for v in 0..NVAR {
                di[v] = a * di[v] + dt * ti[v];
                ui[v] += b * di[v];
            }
        }
        if u.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite { step: 0, stage });
        }
    }
    Ok(())
}

/// Closed-form solutions used for initial and boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExactSolution {
    #[serde(rename = "freestream")]
    Uniform {
        rho: f64,
        v1: f64,
        v2: f64,
        p: f64,
    },
    DensityWave(DensityWaveParams),
    Vortex(VortexParams),
}

impl ExactSolution {
    pub fn eval(&self, x: [f64; 2], t: f64, gamma: f64) -> StateVec {
        match self {
            Self::Uniform { rho, v1, v2, p } => primitive_to_conserved(
                &Primitive {
                    rho: *rho,
                    v1: *v1,
                    v2: *v2,
                    p: *p,
                },
                gamma,
            ),
            Self::DensityWave(params) => exact_density_wave(x, t, params, gamma).0,
            Self::Vortex(params) => exact_isentropic_vortex(x, t, params, gamma).0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "freestream",
            Self::DensityWave(_) => "density-wave",
            Self::Vortex(_) => "vortex",
        }
    }
}

/// Treatment of non-periodic domain boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec {
    Periodic,
    /// External state from the exact solution at face nodes and stage time.
    DirichletExact(ExactSolution),
}

impl BoundarySpec {
    /// Parses `periodic` or `dirichlet-exact`; the latter takes `exact`.
    pub fn parse(name: &str, exact: &ExactSolution) -> Result<Self> {
        match name {
            "periodic" => Ok(Self::Periodic),
            "dirichlet-exact" => Ok(Self::DirichletExact(*exact)),
            other => Err(Error::Config(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl FromStr for BoundarySpec {
    type Err = Error;

    /// Only `periodic` is parseable without an exact solution attached.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            other => Err(Error::Config(format!(
                "boundary condition '{other}' needs an exact solution"
            ))),
        }
    }
}

/// External state on a boundary face node.
pub fn apply_boundary(spec: &BoundarySpec, x: [f64; 2], t: f64, gamma: f64) -> Result<StateVec> {
    match spec {
        BoundarySpec::Periodic => Err(Error::Config(
            "boundary face found but boundaries are periodic".into(),
        )),
        BoundarySpec::DirichletExact(exact) => Ok(exact.eval(x, t, gamma)),
    }
}

/// Nodal DG solution on a set of elements.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub degree: usize,
    /// Global element ids, ascending.
    pub elements: Vec<usize>,
    /// `(N+1)^2` states per element, `i` fastest.
    pub data: Vec<StateVec>,
    pub time: f64,
}

impl SolutionField {
    pub fn n_nodes(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn element(&self, local: usize) -> &[StateVec] {
        let n = self.n_nodes();
        &self.data[local * n..(local + 1) * n]
    }

    /// Samples `f(x)` at the nodes of `elements` at time `t`.
    pub fn from_fn(
        mesh: &Mesh,
        nodes: &NodeSet,
        elements: &[usize],
        t: f64,
        mut f: impl FnMut([f64; 2]) -> StateVec,
    ) -> Self {
        let np = nodes.len();
        let mut data = Vec::with_capacity(elements.len() * np * np);
        for &e in elements {
            let el = &mesh.elements[e];
            for j in 0..np {
                for i in 0..np {
                    data.push(f(el.position([nodes.nodes()[i], nodes.nodes()[j]], t)));
                }
            }
        }
        Self {
            degree: nodes.degree(),
            elements: elements.to_vec(),
            data,
            time: t,
        }
    }

    pub fn from_exact(
        mesh: &Mesh,
        nodes: &NodeSet,
        elements: &[usize],
        exact: &ExactSolution,
        gamma: f64,
        t: f64,
    ) -> Self {
        Self::from_fn(mesh, nodes, elements, t, |x| exact.eval(x, t, gamma))
    }
}

/// Stable explicit step: `min cfl h / (lambda_max (2N + 1))` over elements,
/// with `lambda_max = max |v - vg| + c` over the element's nodes.
pub fn compute_dt(field: &SolutionField, mesh: &Mesh, gas: &GasModel, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0) {
        return Err(Error::Config(format!("cfl must be positive, got {cfl}")));
    }
    let scale = (2 * field.degree + 1) as f64;
    let mut dt = f64::INFINITY;
    for (k, &e) in field.elements.iter().enumerate() {
        let el = &mesh.elements[e];
        let mut lam: f64 = 0.0;
        for u in field.element(k) {
            let p = pressure_unchecked(u, gas.gamma);
            if !(u[0] > 0.0 && p > 0.0) {
                return Err(Error::Positivity {
                    element: e,
                    time: field.time,
                    state: *u,
                });
            }
            let w1 = u[1] / u[0] - el.motion.vg1;
            let w2 = u[2] / u[0] - el.motion.vg2;
            lam = lam.max(w1.hypot(w2) + gas.sound_speed(u[0], p));
        }
        dt = dt.min(cfl * el.metrics.min_edge() / (lam * scale));
    }
    if !dt.is_finite() {
        return Err(Error::Config("no elements to estimate a time step".into()));
    }
    Ok(dt)
}

/// Shared, read-only discretization data of a run.
#[derive(Debug, Clone)]
pub struct SolverSetup {
    pub mesh: Arc<Mesh>,
    pub nodes: NodeSet,
    pub basis: BasisOperators,
    pub gas: GasModel,
    pub boundary: BoundarySpec,
    pub mortars: MortarCache,
}

impl SolverSetup {
    pub fn new(mesh: Arc<Mesh>, nodes: NodeSet, gas: GasModel, boundary: BoundarySpec) -> Result<Self> {
        gas.validate()?;
        if !mesh.boundary.is_empty() && boundary == BoundarySpec::Periodic {
            return Err(Error::Config(
                "mesh has non-periodic boundaries but no boundary condition was given".into(),
            ));
        }
        let basis = build_basis_operators(&nodes);
        Ok(Self {
            mesh,
            nodes,
            basis,
            gas,
            boundary,
            mortars: MortarCache::default(),
        })
    }
}

/// Time derivative of a full-mesh field, evaluated by a single rank.
///
/// `field.time` selects the interface displacement: every sliding interface
/// is placed at `relative_velocity * time`.
pub fn dg_residual(setup: &Arc<SolverSetup>, field: &SolutionField) -> Result<Vec<StateVec>> {
    let own = assign_ranks(&setup.mesh, 1)?;
    let mut ep = in_process_endpoints(1).pop().unwrap();
    let mut solver = RankSolver::new(setup.clone(), &own, &mut ep)?;
    solver.set_solution(field)?;
    solver.place_interfaces(field.time);
    solver.residual(&mut ep, field.time)
}

/// BR1 gradients of an arbitrary nodal field on the full mesh.
///
/// `w` holds four variables per node; `boundary(x)` supplies their values on
/// non-periodic boundaries. Returns `[d/dx1, d/dx2]` per node.
pub fn br1_lift(
    setup: &Arc<SolverSetup>,
    w: &SolutionField,
    boundary: &dyn Fn([f64; 2]) -> StateVec,
) -> Result<Vec<FluxPair>> {
    let own = assign_ranks(&setup.mesh, 1)?;
    let mut ep = in_process_endpoints(1).pop().unwrap();
    let mut solver = RankSolver::new(setup.clone(), &own, &mut ep)?;
    solver.place_interfaces(w.time);
    solver.lift_field(&mut ep, &w.data, w.time, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk_order_on_exponential_decay() {
        let scheme = RkScheme::CARPENTER_KENNEDY;
        let solve = |n: usize| {
            let dt = 1.0 / n as f64;
            let mut u = vec![[1.0, 0.0, 0.0, 0.0]];
            let (mut du, mut ut) = (vec![[0.0; 4]], vec![[0.0; 4]]);
            for s in 0..n {
                rk_step(&scheme, &mut u, &mut du, &mut ut, s as f64 * dt, dt, |_, _, u, out| {
                    out[0][0] = -u[0][0];
                    Ok(())
                })
                .unwrap();
            }
            (u[0][0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (solve(10), solve(20));
        assert!((e1 / e2).log2() > 3.9);
    }

    #[test]
    fn rk_stage_times_follow_c() {
        let scheme = RkScheme::CARPENTER_KENNEDY;
        let mut times = Vec::new();
        let mut u = vec![[0.0; 4]];
        let (mut du, mut ut) = (vec![[0.0; 4]], vec![[0.0; 4]]);
        rk_step(&scheme, &mut u, &mut du, &mut ut, 1.0, 0.5, |_, t, _, out| {
            times.push(t);
            out[0] = [1.0; 4];
            Ok(())
        })
        .unwrap();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        // integrates u' = 1 exactly
        assert!((u[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rk_detects_nan() {
        let mut u = vec![[1.0; 4]];
        let (mut du, mut ut) = (vec![[0.0; 4]], vec![[0.0; 4]]);
        let r = rk_step(&RkScheme::CARPENTER_KENNEDY, &mut u, &mut du, &mut ut, 0.0, 0.1, |s, _, _, out| {
            out[0] = if s == 2 { [f64::NAN; 4] } else { [0.0; 4] };
            Ok(())
        });
        assert!(matches!(r, Err(Error::NonFinite { stage: 2, .. })));
    }

    #[test]
    fn boundary_spec_parsing() {
        let ex = ExactSolution::DensityWave(DensityWaveParams::default());
        assert_eq!(BoundarySpec::parse("periodic", &ex).unwrap(), BoundarySpec::Periodic);
        assert_eq!(
            BoundarySpec::parse("dirichlet-exact", &ex).unwrap(),
            BoundarySpec::DirichletExact(ex)
        );
        assert!(BoundarySpec::parse("wall", &ex).is_err());
        assert!(apply_boundary(&BoundarySpec::Periodic, [0.0; 2], 0.0, 1.4).is_err());
    }

    #[test]
    fn dirichlet_density_wave_matches_exact() {
        let params = DensityWaveParams::default();
        let spec = BoundarySpec::DirichletExact(ExactSolution::DensityWave(params));
        for (x, t) in [([0.3, 0.7], 0.0), ([1.2, -0.4], 2.5)] {
            let got = apply_boundary(&spec, x, t, 1.4).unwrap();
            assert_eq!(got, exact_density_wave(x, t, &params, 1.4).0);
        }
    }
}
