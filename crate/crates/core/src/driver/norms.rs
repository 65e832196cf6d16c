//! Error norms against a closed-form solution and conserved totals.

use crate::dgsolver::{ExactSolution, SolutionField};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::physics::{StateVec, NVAR};
use crate::polybasis::{build_node_set, NodeKind, NodeSet};

/// Per-variable errors of a field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    /// Root mean square over the domain area.
    pub l2: StateVec,
    /// Maximum over the solution nodes.
    pub linf: StateVec,
}

/// Errors of `field` against `exact` at `field.time`.
///
/// The L2 norm interpolates the solution to `2(N+1)` Gauss points per
/// direction and integrates the squared error with the element Jacobian.
pub fn error_norms(
    mesh: &Mesh,
    nodes: &NodeSet,
    field: &SolutionField,
    exact: &ExactSolution,
    gamma: f64,
) -> Result<ErrorNorms> {
    let np = nodes.len();
    let quad = build_node_set(2 * np - 1, NodeKind::LegendreGauss)?;
    let nq = quad.len();
    let interp = nodes.interpolation_matrix(quad.nodes());
    let (xq, wq) = (quad.nodes(), quad.weights());
    let t = field.time;

    let mut sq = [0.0; NVAR];
    let mut linf = [0.0f64; NVAR];
    let mut area = 0.0;
    let mut half = vec![[0.0; NVAR]; nq * np];
    for (k, &e) in field.elements.iter().enumerate() {
        let el = &mesh.elements[e];
        let u = field.element(k);
        for j in 0..np {
            for i in 0..np {
                let x = el.position([nodes.nodes()[i], nodes.nodes()[j]], t);
                let ex = exact.eval(x, t, gamma);
                for v in 0..NVAR {
                    linf[v] = linf[v].max((u[j * np + i][v] - ex[v]).abs());
                }
            }
        }
        // interpolate along xi1, then xi2
        for j in 0..np {
            for a in 0..nq {
                let row = interp.row(a);
                let mut acc = [0.0; NVAR];
                for i in 0..np {
                    for v in 0..NVAR {
                        acc[v] += row[i] * u[j * np + i][v];
                    }
                }
                half[j * nq + a] = acc;
            }
        }
        let jac = el.metrics.jacobian;
        for b in 0..nq {
            let row = interp.row(b);
            for a in 0..nq {
                let mut uq = [0.0; NVAR];
                for j in 0..np {
                    for v in 0..NVAR {
                        uq[v] += row[j] * half[j * nq + a][v];
                    }
                }
                let x = el.position([xq[a], xq[b]], t);
                let ex = exact.eval(x, t, gamma);
                let w = wq[a] * wq[b] * jac;
                for v in 0..NVAR {
                    sq[v] += w * (uq[v] - ex[v]).powi(2);
                }
                area += w;
            }
        }
    }
    Ok(ErrorNorms {
        l2: sq.map(|s| (s / area).sqrt()),
        linf,
    })
}

/// Integrals of the conserved variables with the solution-node quadrature,
/// the quantities the scheme conserves discretely.
pub fn conserved_totals(mesh: &Mesh, nodes: &NodeSet, field: &SolutionField) -> StateVec {
    let np = nodes.len();
    let w = nodes.weights();
    let mut total = [0.0; NVAR];
    for (k, &e) in field.elements.iter().enumerate() {
        let jac = mesh.elements[e].metrics.jacobian;
        let u = field.element(k);
        for j in 0..np {
            for i in 0..np {
                let wij = w[i] * w[j] * jac;
                for v in 0..NVAR {
                    total[v] += wij * u[j * np + i][v];
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshSpec};
    use crate::physics::DensityWaveParams;

    fn fixture(degree: usize) -> (Mesh, NodeSet, Vec<usize>) {
        let mesh = build_mesh(&MeshSpec::three_band([0.0, 2.0], 3, 0.5)).unwrap();
        let nodes = build_node_set(degree, NodeKind::LegendreGaussLobatto).unwrap();
        let elems = (0..mesh.n_elements()).collect();
        (mesh, nodes, elems)
    }

    #[test]
    fn uniform_exact_field_has_zero_error() {
        let (mesh, nodes, elems) = fixture(3);
        let exact = ExactSolution::Uniform {
            rho: 1.0,
            v1: 0.2,
            v2: 0.1,
            p: 1.0,
        };
        let f = SolutionField::from_exact(&mesh, &nodes, &elems, &exact, 1.4, 0.3);
        let n = error_norms(&mesh, &nodes, &f, &exact, 1.4).unwrap();
        for v in 0..NVAR {
            assert!(n.l2[v] < 1e-13 && n.linf[v] < 1e-13);
        }
    }

    #[test]
    fn injected_exact_field_has_zero_nodal_error() {
        let (mesh, nodes, elems) = fixture(4);
        let exact = ExactSolution::DensityWave(DensityWaveParams::default());
        let f = SolutionField::from_exact(&mesh, &nodes, &elems, &exact, 1.4, 0.7);
        let n = error_norms(&mesh, &nodes, &f, &exact, 1.4).unwrap();
        assert!(n.linf.iter().all(|&e| e < 1e-13));
        // the L2 norm also sees the interpolation error between nodes
        assert!(n.l2[0] > 0.0 && n.l2[0] < 1e-3);
    }

    #[test]
    fn constant_offset_gives_offset_norm() {
        let (mesh, nodes, elems) = fixture(2);
        let exact = ExactSolution::Uniform {
            rho: 1.0,
            v1: 0.0,
            v2: 0.0,
            p: 1.0,
        };
        let mut f = SolutionField::from_exact(&mesh, &nodes, &elems, &exact, 1.4, 0.0);
        for s in &mut f.data {
            s[0] += 0.25;
        }
        let n = error_norms(&mesh, &nodes, &f, &exact, 1.4).unwrap();
        assert!((n.l2[0] - 0.25).abs() < 1e-14);
        assert!((n.linf[0] - 0.25).abs() < 1e-14);
        assert_eq!(n.l2[1], 0.0);
    }

    #[test]
    fn totals_integrate_density() {
        let (mesh, nodes, elems) = fixture(3);
        let f = SolutionField::from_fn(&mesh, &nodes, &elems, 0.0, |x| [x[0], 1.0, 0.0, 2.0]);
        let t = conserved_totals(&mesh, &nodes, &f);
        // integral of x1 over [0,2]^2 is 4
        assert!((t[0] - 4.0).abs() < 1e-13);
        assert!((t[1] - 4.0).abs() < 1e-13);
        assert!((t[3] - 8.0).abs() < 1e-13);
    }
}
