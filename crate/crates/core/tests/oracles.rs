//! Numerical building blocks checked against independent references.

mod common;

use proptest::prelude::*;
use slidemesh::mortar::build_mortar_operators;
use slidemesh::polybasis::{build_node_set, NodeKind};

#[test]
fn mortar_projection_is_exact_for_face_polynomials() {
    let (restrict, round) = common::mortar_exactness(1..=8, 20, 7);
    assert!(restrict < 1e-12, "restriction error {restrict:e}");
    assert!(round < 1e-12, "round-trip error {round:e}");
}

#[test]
fn roe_flux_on_sod_matches_closed_form_linearization() {
    // zero velocities on both sides: u~ = 0, the contact wave carries no
    // dissipation and the acoustic waves have speeds -+c~
    let g = 1.4;
    let h = |rho: f64, p: f64| (p / (g - 1.0) + p) / rho;
    let (sl, sr) = (1.0f64.sqrt(), 0.125f64.sqrt());
    let ht = (sl * h(1.0, 1.0) + sr * h(0.125, 0.1)) / (sl + sr);
    let c = ((g - 1.0) * ht).sqrt();
    let alpha = (0.1 - 1.0) / (2.0 * c * c);
    let expected = [-c * alpha, 0.55, 0.0, -c * alpha * ht];
    let got = common::sod_roe_flux();
    for v in 0..4 {
        assert!((got[v] - expected[v]).abs() < 1e-14, "{v}: {} vs {}", got[v], expected[v]);
    }
    // the mass flux is close to the exact Godunov value
    assert!(common::sod_roe_deviation()[0] < 0.05);
}

#[test]
fn exact_riemann_reproduces_reference_star_state() {
    // Sod star pressure and velocity, standard reference values
    let (_, u, p) = common::exact_riemann((1.0, 0.0, 1.0), (0.125, 0.0, 0.1), 1.4, 0.5);
    assert!((p - 0.30313).abs() < 1e-5, "{p}");
    assert!((u - 0.92745).abs() < 1e-5, "{u}");
}

#[test]
fn low_storage_rk_is_fourth_order() {
    let q = common::rk_observed_order();
    assert!(q >= 3.9, "observed order {q}");
}

#[test]
fn br1_gradients_converge_at_least_at_degree_order() {
    for n in 2..=5 {
        let q = common::br1_observed_order(n);
        assert!(q >= n as f64 - 0.1, "N={n}: order {q}");
    }
}

#[test]
fn br1_gradients_of_constants_vanish_across_sliding_interfaces() {
    use slidemesh::dgsolver::{br1_lift, BoundarySpec, SolutionField, SolverSetup};
    use slidemesh::{build_mesh, MeshSpec};
    use std::sync::Arc;
    let mesh = Arc::new(build_mesh(&MeshSpec::three_band([0.0, 2.0], 6, 0.37)).unwrap());
    let nodes = build_node_set(3, NodeKind::LegendreGaussLobatto).unwrap();
    let setup = Arc::new(SolverSetup::new(mesh.clone(), nodes, common::inviscid_gas(), BoundarySpec::Periodic).unwrap());
    let elems: Vec<usize> = (0..mesh.n_elements()).collect();
    let w = SolutionField::from_fn(&mesh, &setup.nodes, &elems, 0.8, |_| [1.0, -2.0, 3.5, 0.25]);
    let g = br1_lift(&setup, &w, &|_| [0.0; 4]).unwrap();
    let worst = g.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-12, "{worst:e}");
}

proptest! {
    #[test]
    fn back_projection_conserves_face_integrals(n in 1usize..=8, sigma in -0.999f64..0.999, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut r = rand::rngs::StdRng::seed_from_u64(seed);
        let nodes = build_node_set(n, NodeKind::LegendreGaussLobatto).unwrap();
        let ops = build_mortar_operators(&nodes, sigma).unwrap();
        let w = nodes.weights();
        let m1: Vec<f64> = (0..=n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let m2: Vec<f64> = (0..=n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let face: Vec<f64> = ops.m1_to_face.apply(&m1).iter().zip(ops.m2_to_face.apply(&m2)).map(|(a, b)| a + b).collect();
        // integral over the face vs the sum of mortar integrals scaled by their lengths
        let lhs: f64 = face.iter().zip(w).map(|(f, w)| f * w).sum();
        let rhs: f64 = 0.5 * (1.0 - sigma) * m1.iter().zip(w).map(|(f, w)| f * w).sum::<f64>()
            + 0.5 * (1.0 + sigma) * m2.iter().zip(w).map(|(f, w)| f * w).sum::<f64>();
        prop_assert!((lhs - rhs).abs() < 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn reflection_is_an_involution(n in 1usize..=8, sigma in -0.999f64..0.999) {
        let nodes = build_node_set(n, NodeKind::LegendreGaussLobatto).unwrap();
        let ops = build_mortar_operators(&nodes, sigma).unwrap();
        prop_assert!(ops.face_to_m1.reflected().reflected().max_abs_diff(&ops.face_to_m1) == 0.0);
    }
}
