//! Element-local DGSEM operators on one affine quadrilateral.
//!
//! Nodal data of an element is stored with `i` (along `xi1`) fastest:
//! `u[j * np + i]`. Face lines run along `xi2` for west/east sides and along
//! `xi1` for south/north sides, so both elements sharing a face see its
//! nodes in the same order.

use crate::error::Result;
use crate::mesh::Side;
use crate::physics::{
    ale_flux_with_pressure, pressure_unchecked, roe_flux_raw, viscous_flux_raw, FluxPair,
    GasModel, GridVelocity, StateVec, NVAR,
};
use crate::polybasis::{BasisOperators, NodeSet};

#[derive(Debug, Clone)]
pub(crate) struct Kernels {
    pub np: usize,
    /// Weak-form derivative `dhat[i][k] = -(w_k / w_i) D[k][i]`, row-major.
    dhat: Vec<f64>,
    /// Face evaluation vectors `l_i(-1)`, `l_i(+1)`.
    trace: [Vec<f64>; 2],
    /// Surface lifting coefficients `l_i(+-1) / w_i`.
    lift: [Vec<f64>; 2],
}

impl Kernels {
    pub fn new(nodes: &NodeSet, basis: &BasisOperators) -> Self {
        let np = nodes.len();
        let w = nodes.weights();
        let mut dhat = vec![0.0; np * np];
        for i in 0..np {
            for k in 0..np {
                dhat[i * np + k] = -(w[k] / w[i]) * basis.d[(k, i)];
            }
        }
        let lift = [
            (0..np).map(|i| basis.face_minus[i] / w[i]).collect(),
            (0..np).map(|i| basis.face_plus[i] / w[i]).collect(),
        ];
        Self {
            np,
            dhat,
            trace: [basis.face_minus.clone(), basis.face_plus.clone()],
            lift,
        }
    }

    /// Values of `u` along one side of the element.
    pub fn trace(&self, u: &[StateVec], side: Side, out: &mut [StateVec]) {
        let np = self.np;
        let (ell, along_xi2) = match side {
            Side::West => (&self.trace[0], true),
            Side::East => (&self.trace[1], true),
            Side::South => (&self.trace[0], false),
            Side::North => (&self.trace[1], false),
        };
        for (k, o) in out.iter_mut().enumerate().take(np) {
            let mut acc = [0.0; NVAR];
            for (m, &l) in ell.iter().enumerate() {
                let s = if along_xi2 { u[k * np + m] } else { u[m * np + k] };
                for v in 0..NVAR {
                    acc[v] += l * s[v];
                }
            }
            *o = acc;
        }
    }

    /// Weak-form volume term `sum_k dhat[i][k] f1[k, j] + dhat[j][k] f2[i, k]`.
    pub fn divergence(&self, f1: &[StateVec], f2: &[StateVec], out: &mut [StateVec]) {
        let np = self.np;
        for j in 0..np {
            for i in 0..np {
                let mut acc = [0.0; NVAR];
                let di = &self.dhat[i * np..(i + 1) * np];
                let dj = &self.dhat[j * np..(j + 1) * np];
                for k in 0..np {
                    let a = f1[j * np + k];
                    let b = f2[k * np + i];
                    for v in 0..NVAR {
                        acc[v] += di[k] * a[v] + dj[k] * b[v];
                    }
                }
                out[j * np + i] = acc;
            }
        }
    }

    /// Adds surface contributions `l(+-1)/w * s` of the four sides, in side order.
    pub fn add_surface(&self, surf: &[StateVec], out: &mut [StateVec]) {
        let np = self.np;
        for side in Side::ALL {
            let s = &surf[side.index() * np..(side.index() + 1) * np];
            let (coef, along_xi2) = match side {
                Side::West => (&self.lift[0], true),
                Side::East => (&self.lift[1], true),
                Side::South => (&self.lift[0], false),
                Side::North => (&self.lift[1], false),
            };
            for j in 0..np {
                for i in 0..np {
                    let (c, sv) = if along_xi2 {
                        (coef[i], s[j])
                    } else {
                        (coef[j], s[i])
                    };
                    let o = &mut out[j * np + i];
                    for v in 0..NVAR {
                        o[v] += c * sv[v];
                    }
                }
            }
        }
    }
}

/// Contravariant ALE fluxes minus viscous fluxes at every node of an element.
pub(crate) fn contravariant_fluxes(
    u: &[StateVec],
    grads: Option<&[FluxPair]>,
    ja: &[[f64; 2]; 2],
    vg: &GridVelocity,
    gas: &GasModel,
    f1: &mut [StateVec],
    f2: &mut [StateVec],
) {
    for (n, un) in u.iter().enumerate() {
        let p = pressure_unchecked(un, gas.gamma);
        let mut f = ale_flux_with_pressure(un, p, vg);
        if let Some(g) = grads {
            let fv = viscous_flux_raw(un, &g[n], gas);
            for d in 0..2 {
                for v in 0..NVAR {
                    f[d][v] -= fv[d][v];
                }
            }
        }
        for v in 0..NVAR {
            f1[n][v] = ja[0][0] * f[0][v] + ja[0][1] * f[1][v];
            f2[n][v] = ja[1][0] * f[0][v] + ja[1][1] * f[1][v];
        }
    }
}

/// Normal numerical flux: Roe minus the central viscous flux.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn numerical_flux(
    ul: &StateVec,
    ur: &StateVec,
    grads: Option<(&FluxPair, &FluxPair)>,
    n: [f64; 2],
    vgn: f64,
    gas: &GasModel,
) -> Result<StateVec> {
    let pl = pressure_unchecked(ul, gas.gamma);
    let pr = pressure_unchecked(ur, gas.gamma);
    let mut f = roe_flux_raw(ul, ur, pl, pr, n, vgn, gas.gamma)?;
    if let Some((gl, gr)) = grads {
        let fl = viscous_flux_raw(ul, gl, gas);
        let fr = viscous_flux_raw(ur, gr, gas);
        for v in 0..NVAR {
            f[v] -= 0.5 * ((fl[0][v] + fr[0][v]) * n[0] + (fl[1][v] + fr[1][v]) * n[1]);
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::{build_basis_operators, build_node_set, NodeKind};

    fn kernels(n: usize) -> (NodeSet, Kernels) {
        let ns = build_node_set(n, NodeKind::LegendreGaussLobatto).unwrap();
        let b = build_basis_operators(&ns);
        let k = Kernels::new(&ns, &b);
        (ns, k)
    }

    #[test]
    fn trace_of_lgl_is_edge_values() {
        let (_, k) = kernels(3);
        let u: Vec<StateVec> = (0..16).map(|n| [n as f64; 4]).collect();
        let mut out = vec![[0.0; 4]; 4];
        k.trace(&u, Side::East, &mut out);
        assert_eq!(out.iter().map(|s| s[0]).collect::<Vec<_>>(), vec![3.0, 7.0, 11.0, 15.0]);
        k.trace(&u, Side::South, &mut out);
        assert_eq!(out.iter().map(|s| s[0]).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn weak_derivative_of_linear_flux_matches_strong_derivative() {
        // f1 = xi1: volume + surface terms must reproduce d f1 / d xi1 = 1
        let (ns, k) = kernels(4);
        let np = ns.len();
        let x = ns.nodes();
        let f1: Vec<StateVec> = (0..np * np).map(|n| [x[n % np]; 4]).collect();
        let f2 = vec![[0.0; 4]; np * np];
        let mut out = vec![[0.0; 4]; np * np];
        k.divergence(&f1, &f2, &mut out);
        let mut surf = vec![[0.0; 4]; 4 * np];
        for j in 0..np {
            surf[j] = [1.0; 4]; // outward flux on west: -f1(-1) = 1
            surf[np + j] = [1.0; 4]; // east: f1(1) = 1
        }
        k.add_surface(&surf, &mut out);
        for o in &out {
            assert!((o[0] - 1.0).abs() < 1e-12, "{}", o[0]);
        }
    }
}
