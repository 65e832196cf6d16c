//! Mortar projections for a hanging node at `sigma` and the sliding-interface
//! index algebra.
//!
//! A static face `[-1, 1]` is split at `sigma` into the upper mortar `m1`
//! (`[sigma, 1]`) and the lower mortar `m2` (`[-1, sigma]`). Each mortar
//! carries its own local coordinate `z` in `[-1, 1]` and the same nodal basis
//! as the faces.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::physics::StateVec;
use crate::polybasis::{build_node_set, exact_mass_matrix, Matrix, NodeKind, NodeSet};

/// Projection operators between a face and its two mortars.
#[derive(Debug, Clone, PartialEq)]
pub struct MortarOperators {
    pub sigma: f64,
    /// Face to `[sigma, 1]`.
    pub face_to_m1: Matrix,
    /// Face to `[-1, sigma]`.
    pub face_to_m2: Matrix,
    /// Weighted back-projection from `[sigma, 1]`, includes `(1 - sigma)/2`.
    pub m1_to_face: Matrix,
    /// Weighted back-projection from `[-1, sigma]`, includes `(1 + sigma)/2`.
    pub m2_to_face: Matrix,
    pub mass_inv: Matrix,
}

fn invert_spd(m: &Matrix) -> Matrix {
    let n = m.rows();
    let dm = nalgebra::DMatrix::from_row_slice(n, n, m.as_slice());
    let inv = dm
        .cholesky()
        .expect("mass matrix is symmetric positive definite")
        .inverse();
    Matrix::from_fn(n, n, |i, j| inv[(i, j)])
}

/// `S[i][j] = ∫ l_i(xi(z)) l_j(z) dz` for the affine map `xi = lo + (hi - lo)(z + 1)/2`.
fn mortar_coupling(nodeset: &NodeSet, gauss: &NodeSet, lo: f64, hi: f64) -> Matrix {
    let mapped: Vec<f64> = gauss
        .nodes()
        .iter()
        .map(|z| lo + 0.5 * (hi - lo) * (z + 1.0))
        .collect();
    let face_vals = nodeset.interpolation_matrix(&mapped);
    let mortar_vals = nodeset.interpolation_matrix(gauss.nodes());
    let np = nodeset.len();
    Matrix::from_fn(np, np, |i, j| {
        gauss
            .weights()
            .iter()
            .enumerate()
            .map(|(q, w)| w * face_vals[(q, i)] * mortar_vals[(q, j)])
            .sum()
    })
}

/// Assembles the four projection matrices for hanging node `sigma`.
///
/// `sigma = 1` would leave an empty upper mortar and is rejected; the
/// conforming instant of a sliding interface is represented by `sigma = -1`.
pub fn build_mortar_operators(nodeset: &NodeSet, sigma: f64) -> Result<MortarOperators> {
    if !(-1.0..1.0).contains(&sigma) {
        return Err(Error::Config(format!(
            "hanging node position {sigma} outside [-1, 1)"
        )));
    }
    let gauss = build_node_set(nodeset.degree(), NodeKind::LegendreGauss)?;
    let mass = exact_mass_matrix(nodeset);
    let mass_inv = invert_spd(&mass);

    // S^{face -> mortar}[j][i] in row = mortar test function, col = face basis
    let s1 = mortar_coupling(nodeset, &gauss, sigma, 1.0).transpose();
    let s2 = mortar_coupling(nodeset, &gauss, -1.0, sigma).transpose();

    let face_to_m1 = mass_inv.matmul(&s1);
    let face_to_m2 = mass_inv.matmul(&s2);
    let m1_to_face = mass_inv.matmul(&s1.transpose()).scaled(0.5 * (1.0 - sigma));
    let m2_to_face = mass_inv.matmul(&s2.transpose()).scaled(0.5 * (1.0 + sigma));

    Ok(MortarOperators {
        sigma,
        face_to_m1,
        face_to_m2,
        m1_to_face,
        m2_to_face,
        mass_inv,
    })
}

/// Which side of the interface a face sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterfaceSide {
    Static,
    Moving,
}

/// Operators of one interface side, indexed by `i_sub`.
///
/// On the static side `i_sub = 0` is the lower mortar. On the moving side the
/// order is inverted: seen from the moving face the hanging node sits at
/// `-sigma`, which is the static configuration mirrored, so its operators are
/// the static ones conjugated by node reversal.
#[derive(Debug, Clone, PartialEq)]
pub struct SideOperators {
    pub side: InterfaceSide,
    pub to_sub: [Matrix; 2],
    pub from_sub: [Matrix; 2],
}

impl SideOperators {
    pub fn new(ops: &MortarOperators, side: InterfaceSide) -> Self {
        match side {
            InterfaceSide::Static => Self {
                side,
                to_sub: [ops.face_to_m2.clone(), ops.face_to_m1.clone()],
                from_sub: [ops.m2_to_face.clone(), ops.m1_to_face.clone()],
            },
            InterfaceSide::Moving => Self {
                side,
                to_sub: [ops.face_to_m2.reflected(), ops.face_to_m1.reflected()],
                from_sub: [ops.m2_to_face.reflected(), ops.m1_to_face.reflected()],
            },
        }
    }

    /// Face line to mortar lines `[i_sub = 0, i_sub = 1]`.
    pub fn face_to_mortars(&self, face: &[StateVec]) -> [Vec<StateVec>; 2] {
        let np = face.len();
        let mut out = [vec![[0.0; 4]; np], vec![[0.0; 4]; np]];
        for (k, o) in out.iter_mut().enumerate() {
            self.to_sub[k].apply_states(face, o);
        }
        out
    }

    pub fn face_to_mortar_into(&self, i_sub: usize, face: &[StateVec], out: &mut [StateVec]) {
        self.to_sub[i_sub].apply_states(face, out);
    }

    /// Back-projects the two mortar lines onto the face.
    pub fn mortars_to_face(&self, mortars: [&[StateVec]; 2], out: &mut [StateVec]) {
        let np = out.len();
        let mut tmp = vec![[0.0; 4]; np];
        self.from_sub[0].apply_states(mortars[0], out);
        self.from_sub[1].apply_states(mortars[1], &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            for v in 0..4 {
                o[v] += t[v];
            }
        }
    }
}

/// Face values to the two mortars of the given side, ordered by `i_sub`.
pub fn transfer_solution_to_mortars(
    face_values: &[StateVec],
    ops: &MortarOperators,
    side: InterfaceSide,
) -> [Vec<StateVec>; 2] {
    SideOperators::new(ops, side).face_to_mortars(face_values)
}

/// Weighted back-projection of `[upper, lower]` mortar fluxes onto a static face.
pub fn project_flux_to_face(m1: &[StateVec], m2: &[StateVec], ops: &MortarOperators) -> Vec<StateVec> {
    let np = m1.len();
    let mut out = vec![[0.0; 4]; np];
    let mut tmp = vec![[0.0; 4]; np];
    ops.m1_to_face.apply_states(m1, &mut out);
    ops.m2_to_face.apply_states(m2, &mut tmp);
    for (o, t) in out.iter_mut().zip(&tmp) {
        for v in 0..4 {
            o[v] += t[v];
        }
    }
    out
}

/// Mortar sub-index of a point at `xi_offset` from the start of its static face.
pub fn sub_index(xi_offset: f64, s_delta: f64, l_par: f64) -> usize {
    if xi_offset < s_delta * l_par {
        0
    } else {
        1
    }
}

/// Parallel index of the moving face adjacent to mortar `(i_par, i_sub)`.
pub fn moving_index(i_par: usize, n_delta: i64, i_sub: usize, n_faces: usize) -> usize {
    (i_par as i64 - n_delta + i_sub as i64 - 1).rem_euclid(n_faces as i64) as usize
}

/// Static parallel index of the mortar with sub-index `i_sub` on moving face `i_moving`.
pub fn static_index_of_moving(i_moving: usize, n_delta: i64, i_sub: usize, n_faces: usize) -> usize {
    (i_moving as i64 + n_delta - i_sub as i64 + 1).rem_euclid(n_faces as i64) as usize
}

/// Degree, node family and the bits of `sigma`.
type CacheKey = (usize, NodeKind, u64);

/// Operator cache keyed by `(N, kind, sigma)`.
#[derive(Debug, Default, Clone)]
pub struct MortarCache {
    inner: Arc<Mutex<HashMap<CacheKey, Arc<MortarOperators>>>>,
}

impl MortarCache {
    pub fn get(&self, nodeset: &NodeSet, sigma: f64) -> Result<Arc<MortarOperators>> {
        let key = (nodeset.degree(), nodeset.kind(), sigma.to_bits());
        if let Some(ops) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(ops.clone());
        }
        let ops = Arc::new(build_mortar_operators(nodeset, sigma)?);
        let mut map = self.inner.lock().expect("cache lock");
        // keep the cache bounded: sigma changes every stage
        if map.len() > 64 {
            map.clear();
        }
        map.insert(key, ops.clone());
        Ok(ops)
    }
}
