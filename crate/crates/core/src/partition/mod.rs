//! Parallel decomposition and the metadata-free sliding-interface protocol.
//!
//! Ranks are assigned to one side of every sliding interface. The only
//! collective operation is the one-time exchange of the interface rank maps;
//! afterwards every rank derives its communication partners, message sizes
//! and data order from the displacement alone, so messages carry nothing but
//! solution and flux values.

mod audit;
mod index;
mod transport;

pub use audit::{audit_communication, write_trace_csv, AuditReport, TrafficModel};
pub use index::{
    build_schedule, rebuild_index_arrays, Chunk, IndexArrayA, LocalInterfaceFace, MappingM,
    MessageSchedule, MortarColumn,
};
pub use transport::{
    in_process_endpoints, Backend, Endpoint, Epoch, Frame, InProcBackend, MessageKind,
    RecvRequest, SocketBackend, TraceEvent,
};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::mortar::InterfaceSide;

/// Element-to-rank assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ownership {
    pub n_ranks: usize,
    pub element_rank: Vec<usize>,
    pub rank_elements: Vec<Vec<usize>>,
}

impl Ownership {
    pub fn owner(&self, element: usize) -> usize {
        self.element_rank[element]
    }
}

/// Splits `total` into `parts` shares proportional to `weights`, each at least one.
fn proportional_split(weights: &[usize], parts: usize) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| parts as f64 * w as f64 / total as f64)
        .collect();
    let mut shares: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
    let remainder = |k: usize, shares: &[usize]| quotas[k] - shares[k] as f64;
    while shares.iter().sum::<usize>() < parts {
        let k = (0..shares.len())
            .max_by(|&a, &b| {
                remainder(a, &shares)
                    .partial_cmp(&remainder(b, &shares))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        shares[k] += 1;
    }
    while shares.iter().sum::<usize>() > parts {
        let k = (0..shares.len())
            .filter(|&k| shares[k] > 1)
            .min_by(|&a, &b| {
                remainder(a, &shares)
                    .partial_cmp(&remainder(b, &shares))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        shares[k] -= 1;
    }
    shares
}

/// Assigns contiguous element blocks to ranks without letting any rank
/// straddle a sliding interface.
///
/// With at least as many ranks as subdomains, ranks are split per subdomain
/// proportionally to element counts. With fewer, subdomains sharing the same
/// grid motion are pooled first. A single rank owns everything and serves as
/// the serial reference.
pub fn assign_ranks(mesh: &Mesh, n_ranks: usize) -> Result<Ownership> {
    if n_ranks == 0 {
        return Err(Error::Config("need at least one rank".into()));
    }
    let n_el = mesh.n_elements();
    let groups: Vec<Vec<usize>> = if n_ranks == 1 {
        vec![(0..mesh.subdomains.len()).collect()]
    } else if n_ranks >= mesh.subdomains.len() {
        (0..mesh.subdomains.len()).map(|k| vec![k]).collect()
    } else {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for sub in &mesh.subdomains {
            match groups
                .iter_mut()
                .find(|g| mesh.subdomains[g[0]].motion == sub.motion)
            {
                Some(g) => g.push(sub.id),
                None => groups.push(vec![sub.id]),
            }
        }
        if n_ranks < groups.len() {
            return Err(Error::Config(format!(
                "{n_ranks} ranks cannot separate {} relatively moving subdomain groups",
                groups.len()
            )));
        }
        groups
    };

    let group_elements: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            g.iter()
                .flat_map(|&s| {
                    let sub = &mesh.subdomains[s];
                    sub.first_element..sub.first_element + sub.n_elements()
                })
                .collect()
        })
        .collect();
    let sizes: Vec<usize> = group_elements.iter().map(Vec::len).collect();
    let shares = proportional_split(&sizes, n_ranks);

    let mut element_rank = vec![usize::MAX; n_el];
    let mut rank_elements = Vec::with_capacity(n_ranks);
    for (elems, &share) in group_elements.iter().zip(&shares) {
        if share > elems.len() {
            return Err(Error::Config(format!(
                "more ranks ({share}) than elements ({}) in a subdomain group",
                elems.len()
            )));
        }
        let base = elems.len() / share;
        let extra = elems.len() % share;
        let mut start = 0;
        for b in 0..share {
            let len = base + usize::from(b < extra);
            let rank = rank_elements.len();
            let mut block: Vec<usize> = elems[start..start + len].to_vec();
            block.sort_unstable();
            for &e in &block {
                element_rank[e] = rank;
            }
            rank_elements.push(block);
            start += len;
        }
    }
    Ok(Ownership {
        n_ranks,
        element_rank,
        rank_elements,
    })
}

/// Dense `(i_par, i_perp) -> rank` table over one interface side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMap {
    pub n_par: usize,
    pub n_perp: usize,
    data: Vec<usize>,
}

impl RankMap {
    pub fn new(n_par: usize, n_perp: usize) -> Self {
        Self {
            n_par,
            n_perp,
            data: vec![usize::MAX; n_par * n_perp],
        }
    }

    pub fn from_rows(rows: Vec<Vec<usize>>) -> Self {
        let n_perp = rows.len();
        let n_par = rows.first().map_or(0, Vec::len);
        let mut map = Self::new(n_par, n_perp);
        for (i_perp, row) in rows.into_iter().enumerate() {
            for (i_par, r) in row.into_iter().enumerate() {
                map.set(i_par, i_perp, r);
            }
        }
        map
    }

    pub fn get(&self, i_par: usize, i_perp: usize) -> Result<usize> {
        if i_par >= self.n_par || i_perp >= self.n_perp {
            return Err(Error::Internal(format!(
                "rank map lookup ({i_par}, {i_perp}) outside {}x{}",
                self.n_par, self.n_perp
            )));
        }
        let r = self.data[i_perp * self.n_par + i_par];
        if r == usize::MAX {
            return Err(Error::Internal(format!(
                "interface face ({i_par}, {i_perp}) has no owner"
            )));
        }
        Ok(r)
    }

    pub fn set(&mut self, i_par: usize, i_perp: usize, rank: usize) {
        self.data[i_perp * self.n_par + i_par] = rank;
    }

    fn is_total(&self) -> bool {
        self.data.iter().all(|&r| r != usize::MAX)
    }
}

/// Owners of the static (`r`) and moving (`r~`) faces of one interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMaps {
    pub r_static: RankMap,
    pub r_moving: RankMap,
}

impl RankMaps {
    /// Map of the faces on the opposite side of `side`.
    pub fn opposite(&self, side: InterfaceSide) -> &RankMap {
        match side {
            InterfaceSide::Static => &self.r_moving,
            InterfaceSide::Moving => &self.r_static,
        }
    }
}

/// Builds the interface rank maps from each rank's own faces.
///
/// This is the single collective of a run: every rank contributes the
/// interface faces it owns and receives everyone else's.
pub fn exchange_rank_maps(
    endpoint: &mut Endpoint,
    mesh: &Mesh,
    owned: &[usize],
) -> Result<Vec<RankMaps>> {
    let me = endpoint.rank();
    let owned_set: std::collections::HashSet<usize> = owned.iter().copied().collect();
    // entries: (interface, side, i_par, i_perp, rank)
    let mut mine: Vec<f64> = Vec::new();
    for iface in &mesh.interfaces {
        for (side, faces) in [(0.0, &iface.static_faces), (1.0, &iface.moving_faces)] {
            for f in faces.iter().filter(|f| owned_set.contains(&f.element)) {
                mine.extend_from_slice(&[
                    iface.id as f64,
                    side,
                    f.i_par as f64,
                    f.i_perp as f64,
                    me as f64,
                ]);
            }
        }
    }
    let all = endpoint.allgather(MessageKind::RankMap, mine)?;

    let mut maps: Vec<RankMaps> = mesh
        .interfaces
        .iter()
        .map(|i| RankMaps {
            r_static: RankMap::new(i.n_faces_par, i.n_perp()),
            r_moving: RankMap::new(i.n_faces_par, i.n_perp()),
        })
        .collect();
    for block in all {
        for e in block.chunks_exact(5) {
            let (k, side, i_par, i_perp, rank) =
                (e[0] as usize, e[1], e[2] as usize, e[3] as usize, e[4] as usize);
            let map = if side == 0.0 {
                &mut maps[k].r_static
            } else {
                &mut maps[k].r_moving
            };
            if map.data[i_perp * map.n_par + i_par] != usize::MAX {
                return Err(Error::Protocol(format!(
                    "interface {k} face ({i_par}, {i_perp}) claimed twice"
                )));
            }
            map.set(i_par, i_perp, rank);
        }
    }
    for (k, m) in maps.iter().enumerate() {
        if !(m.r_static.is_total() && m.r_moving.is_total()) {
            return Err(Error::Protocol(format!(
                "interface {k} rank maps incomplete after exchange"
            )));
        }
    }
    Ok(maps)
}

/// Wall time per degree of freedom, core and Runge-Kutta stage.
pub fn measure_pid(
    wall_time: f64,
    n_cores: usize,
    n_dof: usize,
    n_steps: usize,
    n_rk_stages: usize,
) -> Result<f64> {
    if n_cores == 0 || n_dof == 0 || n_steps == 0 || n_rk_stages == 0 {
        return Err(Error::Config("PID needs positive counts".into()));
    }
    Ok(wall_time * n_cores as f64 / (n_dof as f64 * n_steps as f64 * n_rk_stages as f64))
}
