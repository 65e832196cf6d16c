//! Independent oracles shared by the integration tests and the acceptance
//! target. Nothing here calls into the solver's own numerics except to
//! obtain the quantity under test.
#![allow(dead_code)]

pub mod golden;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use slidemesh::dgsolver::{br1_lift, rk_step, BoundarySpec, RkScheme, SolutionField, SolverSetup};
use slidemesh::mortar::build_mortar_operators;
use slidemesh::physics::{roe_flux, ConservedState, GasModel, Primitive, StateVec};
use slidemesh::polybasis::{build_node_set, NodeKind};
use slidemesh::{build_mesh, MeshSpec};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn inviscid_gas() -> GasModel {
    GasModel::new(1.4, 287.058, 0.0, 0.72).unwrap()
}

/// Horner evaluation of `sum c_k x^k`.
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

/// Worst restriction error and worst round-trip error of the mortar
/// operators over random degree-N polynomials and hanging nodes.
pub fn mortar_exactness(degrees: std::ops::RangeInclusive<usize>, n_sigma: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut restrict, mut round) = (0.0f64, 0.0f64);
    for n in degrees {
        let nodes = build_node_set(n, NodeKind::LegendreGaussLobatto).unwrap();
        let x = nodes.nodes();
        for _ in 0..n_sigma {
            let sigma = r.gen_range(-0.999..0.999);
            let c: Vec<f64> = (0..=n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let face: Vec<f64> = x.iter().map(|&xi| poly(&c, xi)).collect();
            let ops = build_mortar_operators(&nodes, sigma).unwrap();
            let m1 = ops.face_to_m1.apply(&face);
            let m2 = ops.face_to_m2.apply(&face);
            for (k, &z) in x.iter().enumerate() {
                // mortar-local z mapped back onto the face
                let up = sigma + 0.5 * (1.0 - sigma) * (z + 1.0);
                let lo = -1.0 + 0.5 * (1.0 + sigma) * (z + 1.0);
                restrict = restrict.max((m1[k] - poly(&c, up)).abs());
                restrict = restrict.max((m2[k] - poly(&c, lo)).abs());
            }
            let b1 = ops.m1_to_face.apply(&m1);
            let b2 = ops.m2_to_face.apply(&m2);
            for k in 0..x.len() {
                round = round.max((b1[k] + b2[k] - face[k]).abs());
            }
        }
    }
    (restrict, round)
}

/// Sound speed.
fn sound(gamma: f64, rho: f64, p: f64) -> f64 {
    (gamma * p / rho).sqrt()
}

/// Exact solution of the 1D Riemann problem sampled at `x/t = s`, as
/// `(rho, u, p)`. Newton iteration on the star pressure.
pub fn exact_riemann(l: (f64, f64, f64), r: (f64, f64, f64), gamma: f64, s: f64) -> (f64, f64, f64) {
    let (rl, ul, pl) = l;
    let (rr, ur, pr) = r;
    let (cl, cr) = (sound(gamma, rl, pl), sound(gamma, rr, pr));
    let g1 = (gamma - 1.0) / (2.0 * gamma);
    let g2 = (gamma + 1.0) / (2.0 * gamma);
    let f = |p: f64, rk: f64, pk: f64, ck: f64| -> (f64, f64) {
        if p > pk {
            let a = 2.0 / ((gamma + 1.0) * rk);
            let b = (gamma - 1.0) / (gamma + 1.0) * pk;
            let q = (a / (p + b)).sqrt();
            ((p - pk) * q, q * (1.0 - 0.5 * (p - pk) / (b + p)))
        } else {
            let pr = p / pk;
            (
                2.0 * ck / (gamma - 1.0) * (pr.powf(g1) - 1.0),
                1.0 / (rk * ck) * pr.powf(-g2),
            )
        }
    };
    let mut p = (0.5 * (pl + pr)).max(1e-8);
    for _ in 0..100 {
        let (fl, dl) = f(p, rl, pl, cl);
        let (fr, dr) = f(p, rr, pr, cr);
        let next = (p - (fl + fr + ur - ul) / (dl + dr)).max(1e-12);
        let done = (next - p).abs() < 1e-15 * p;
        p = next;
        if done {
            break;
        }
    }
    let (fl, _) = f(p, rl, pl, cl);
    let (fr, _) = f(p, rr, pr, cr);
    let u = 0.5 * (ul + ur) + 0.5 * (fr - fl);
    let gm = (gamma - 1.0) / (gamma + 1.0);
    if s <= u {
        if p > pl {
            let sl = ul - cl * (g2 * p / pl + g1).sqrt();
            if s <= sl {
                (rl, ul, pl)
            } else {
                (rl * (p / pl + gm) / (gm * p / pl + 1.0), u, p)
            }
        } else {
            let cstar = cl * (p / pl).powf(g1);
            if s <= ul - cl {
                (rl, ul, pl)
            } else if s >= u - cstar {
                (rl * (p / pl).powf(1.0 / gamma), u, p)
            } else {
                let c = 2.0 / (gamma + 1.0) * (cl + 0.5 * (gamma - 1.0) * (ul - s));
                let uf = 2.0 / (gamma + 1.0) * (cl + 0.5 * (gamma - 1.0) * ul + s);
                let rho = rl * (c / cl).powf(2.0 / (gamma - 1.0));
                (rho, uf, pl * (c / cl).powf(1.0 / g1))
            }
        }
    } else if p > pr {
        let sr = ur + cr * (g2 * p / pr + g1).sqrt();
        if s >= sr {
            (rr, ur, pr)
        } else {
            (rr * (p / pr + gm) / (gm * p / pr + 1.0), u, p)
        }
    } else {
        let cstar = cr * (p / pr).powf(g1);
        if s >= ur + cr {
            (rr, ur, pr)
        } else if s <= u + cstar {
            (rr * (p / pr).powf(1.0 / gamma), u, p)
        } else {
            let c = 2.0 / (gamma + 1.0) * (cr - 0.5 * (gamma - 1.0) * (ur - s));
            let uf = 2.0 / (gamma + 1.0) * (-cr + 0.5 * (gamma - 1.0) * ur + s);
            let rho = rr * (c / cr).powf(2.0 / (gamma - 1.0));
            (rho, uf, pr * (c / cr).powf(1.0 / g1))
        }
    }
}

/// Sod left and right states as `(rho, u, p)`.
pub const SOD: [(f64, f64, f64); 2] = [(1.0, 0.0, 1.0), (0.125, 0.0, 0.1)];

/// Roe flux on the Sod interface.
pub fn sod_roe_flux() -> StateVec {
    let gas = inviscid_gas();
    let state = |(rho, u, p): (f64, f64, f64)| {
        ConservedState::from_primitive(Primitive { rho, v1: u, v2: 0.0, p }, &gas).unwrap()
    };
    roe_flux(&state(SOD[0]), &state(SOD[1]), [1.0, 0.0], 0.0, &gas).unwrap()
}

/// Exact Godunov flux on the Sod interface.
pub fn sod_exact_flux() -> StateVec {
    let g = 1.4;
    let (rho, u, p) = exact_riemann(SOD[0], SOD[1], g, 0.0);
    let e = p / (g - 1.0) + 0.5 * rho * u * u;
    [rho * u, rho * u * u + p, 0.0, u * (e + p)]
}

/// Component-wise relative deviation of the Roe flux from the exact flux;
/// the tangential momentum component is compared in absolute terms.
pub fn sod_roe_deviation() -> StateVec {
    let (roe, exact) = (sod_roe_flux(), sod_exact_flux());
    let mut d = [0.0; 4];
    for v in 0..4 {
        d[v] = if exact[v] == 0.0 { roe[v].abs() } else { (roe[v] - exact[v]).abs() / exact[v].abs() };
    }
    d
}

/// Observed temporal order of the Runge-Kutta scheme on `y' = -y + cos t`.
pub fn rk_observed_order() -> f64 {
    // exact: y = (cos t + sin t)/2 + (y0 - 1/2) e^{-t}
    let exact = |t: f64| 0.5 * (t.cos() + t.sin()) + 0.5 * (-t).exp();
    let err = |n: usize| {
        let dt = 2.0 / n as f64;
        let mut u = vec![[1.0, 0.0, 0.0, 0.0]];
        let (mut du, mut ut) = (vec![[0.0; 4]], vec![[0.0; 4]]);
        for k in 0..n {
            rk_step(&RkScheme::CARPENTER_KENNEDY, &mut u, &mut du, &mut ut, k as f64 * dt, dt, |_, t, u, out| {
                out[0][0] = -u[0][0] + t.cos();
                Ok(())
            })
            .unwrap();
        }
        (u[0][0] - exact(2.0)).abs()
    };
    (err(20) / err(40)).log2()
}

/// Max-norm error of BR1 gradients of `sin(pi x1) cos(pi x2)` on a sliding
/// three-band mesh of `[0, 2]^2` with `n` elements per direction.
pub fn br1_gradient_error(degree: usize, n: usize, t: f64) -> f64 {
    br1_gradient_error_vg(degree, n, t, 0.37)
}

pub fn br1_gradient_error_vg(degree: usize, n: usize, t: f64, vg: f64) -> f64 {
    let mesh = Arc::new(build_mesh(&MeshSpec::three_band([0.0, 2.0], n, vg)).unwrap());
    let nodes = build_node_set(degree, NodeKind::LegendreGaussLobatto).unwrap();
    let setup = Arc::new(SolverSetup::new(mesh.clone(), nodes, inviscid_gas(), BoundarySpec::Periodic).unwrap());
    let elems: Vec<usize> = (0..mesh.n_elements()).collect();
    let f = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).cos();
    let w = SolutionField::from_fn(&mesh, &setup.nodes, &elems, t, |x| [f(x), 2.0 * f(x), 0.0, 1.0]);
    let g = br1_lift(&setup, &w, &|_| [0.0; 4]).unwrap();
    let exact = SolutionField::from_fn(&mesh, &setup.nodes, &elems, t, |x| {
        [
            PI * (PI * x[0]).cos() * (PI * x[1]).cos(),
            -PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
            0.0,
            0.0,
        ]
    });
    g.iter()
        .zip(&exact.data)
        .map(|(gi, ex)| {
            let e = (gi[0][0] - ex[0]).abs().max((gi[1][0] - ex[1]).abs());
            // the second variable is twice the first, the constant has no gradient
            e.max((gi[0][1] - 2.0 * ex[0]).abs() / 2.0)
                .max(gi[0][2].abs().max(gi[1][3].abs()))
        })
        .fold(0.0, f64::max)
}

/// Observed BR1 order between `n = 12` and `n = 24`. The interface offset
/// is a fixed fraction of the element size on both levels so the hanging
/// nodes sit at the same relative position.
pub fn br1_observed_order(degree: usize) -> f64 {
    let at = |n: usize| br1_gradient_error(degree, n, 0.3 * (2.0 / n as f64) / 0.37);
    let (e1, e2) = (at(12), at(24));
    (e1 / e2).log2()
}

/// Bit patterns of a field, for exact comparisons.
pub fn bits(data: &[StateVec]) -> Vec<u64> {
    data.iter().flatten().map(|v| v.to_bits()).collect()
}
