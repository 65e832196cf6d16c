//! Residual checks against closed-form time derivatives on sliding meshes.

use std::f64::consts::PI;
use std::sync::Arc;

use slidemesh::dgsolver::{dg_residual, BoundarySpec, ExactSolution, SolutionField, SolverSetup};
use slidemesh::physics::DensityWaveParams;
use slidemesh::{build_mesh, build_node_set, GasModel, MeshSpec, NodeKind};

fn setup(spec: &MeshSpec, degree: usize) -> Arc<SolverSetup> {
    let mesh = Arc::new(build_mesh(spec).unwrap());
    let nodes = build_node_set(degree, NodeKind::LegendreGaussLobatto).unwrap();
    let gas = GasModel::new(1.4, 287.0, 0.0, 0.72).unwrap();
    Arc::new(SolverSetup::new(mesh, nodes, gas, BoundarySpec::Periodic).unwrap())
}

fn all_elements(s: &SolverSetup) -> Vec<usize> {
    (0..s.mesh.n_elements()).collect()
}

#[test]
fn freestream_is_preserved_across_sliding_interfaces() {
    let s = setup(&MeshSpec::three_band([0.0, 20.0], 6, 2.0), 4);
    let exact = ExactSolution::Uniform {
        rho: 1.2,
        v1: 0.7,
        v2: -0.3,
        p: 2.5,
    };
    // several displacements, including whole-face shifts and fractions
    for t in [0.0, 0.4, 20.0 / 6.0 / 2.0, 1.9, 5.3] {
        let field = SolutionField::from_exact(&s.mesh, &s.nodes, &all_elements(&s), &exact, 1.4, t);
        let r = dg_residual(&s, &field).unwrap();
        let worst = r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-12, "t = {t}: residual {worst:e}");
    }
}

/// Rate of change of the density wave seen by a node moving with `vg`:
/// `(rho_t + vg . grad rho) [1, a1, a2, |a|^2 / 2]`.
fn density_wave_rate(x: [f64; 2], t: f64, vg: [f64; 2], p: &DensityWaveParams) -> [f64; 4] {
    let a = p.advect_velocity;
    let slope = p.alpha * PI * (PI * (x[0] + x[1] - (a[0] + a[1]) * t)).cos();
    let rho_t = slope * (vg[0] + vg[1] - a[0] - a[1]);
    [rho_t, rho_t * a[0], rho_t * a[1], rho_t * 0.5 * (a[0] * a[0] + a[1] * a[1])]
}

fn density_wave_residual_error(degree: usize, t: f64) -> f64 {
    let s = setup(&MeshSpec::three_band([0.0, 2.0], 6, 0.7), degree);
    let params = DensityWaveParams::default();
    let exact = ExactSolution::DensityWave(params);
    let elems = all_elements(&s);
    let field = SolutionField::from_exact(&s.mesh, &s.nodes, &elems, &exact, 1.4, t);
    let r = dg_residual(&s, &field).unwrap();
    let nn = s.nodes.len().pow(2);
    let rate: Vec<[f64; 4]> = elems
        .iter()
        .flat_map(|&e| {
            let el = &s.mesh.elements[e];
            let vg = [el.motion.vg1, el.motion.vg2];
            let f = SolutionField::from_fn(&s.mesh, &s.nodes, &[e], t, |x| density_wave_rate(x, t, vg, &params));
            assert_eq!(f.data.len(), nn);
            f.data
        })
        .collect();
    r.iter()
        .zip(&rate)
        .flat_map(|(a, b)| (0..4).map(move |v| (a[v] - b[v]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn density_wave_residual_converges_spectrally_with_sliding_mortars() {
    // t = 0.37 puts the moving band at a non-conforming offset
    let errs: Vec<f64> = (2..=7).map(|n| density_wave_residual_error(n, 0.37)).collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    assert!(errs[5] < 1e-5, "{errs:?}");
}

/// Vortex residual against a centered difference of the exact solution
/// taken along the path of each node.
fn vortex_residual_error(degree: usize, t: f64) -> f64 {
    use slidemesh::physics::VortexParams;
    let s = setup(&MeshSpec::three_band([0.0, 20.0], 15, 2.0), degree);
    let exact = ExactSolution::Vortex(VortexParams::default());
    let elems = all_elements(&s);
    let field = SolutionField::from_exact(&s.mesh, &s.nodes, &elems, &exact, 1.4, t);
    let r = dg_residual(&s, &field).unwrap();
    let d = 1e-5;
    let rate: Vec<[f64; 4]> = elems
        .iter()
        .flat_map(|&e| {
            let el = &s.mesh.elements[e];
            let vg = [el.motion.vg1, el.motion.vg2];
            SolutionField::from_fn(&s.mesh, &s.nodes, &[e], t, |x| {
                let ahead = exact.eval([x[0] + vg[0] * d, x[1] + vg[1] * d], t + d, 1.4);
                let behind = exact.eval([x[0] - vg[0] * d, x[1] - vg[1] * d], t - d, 1.4);
                std::array::from_fn(|v| (ahead[v] - behind[v]) / (2.0 * d))
            })
            .data
        })
        .collect();
    r.iter()
        .zip(&rate)
        .flat_map(|(a, b)| (0..4).map(move |v| (a[v] - b[v]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn vortex_residual_converges_while_crossing_the_interface() {
    // the vortex core sits on the moving band, at a non-conforming offset
    let errs: Vec<f64> = [3, 5, 7, 9].iter().map(|&n| vortex_residual_error(n, 1.1)).collect();
    for w in errs.windows(2) {
        assert!(w[1] < 0.2 * w[0], "{errs:?}");
    }
    assert!(errs[3] < 1e-3, "{errs:?}");
}
