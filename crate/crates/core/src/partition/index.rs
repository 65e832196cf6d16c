//! Index array `A`, mapping `m` and the message schedule derived from them.

use std::collections::BTreeMap;

use super::RankMaps;
use crate::error::{Error, Result};
use crate::mortar::{moving_index, static_index_of_moving, InterfaceSide};

/// A process-local interface face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalInterfaceFace {
    /// Process-local face id.
    pub i_face: usize,
    /// Parallel index in the face's own side frame.
    pub i_par: usize,
    pub i_perp: usize,
}

/// One column of `A`: a mortar owned by this rank.
///
/// `i_par` is always the static parallel index and `i_sub` the static
/// sub-index, so both partners sort the shared mortars identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MortarColumn {
    pub partner: usize,
    pub i_par: usize,
    pub i_perp: usize,
    pub i_sub: usize,
    pub i_face: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexArrayA {
    pub columns: Vec<MortarColumn>,
}

impl IndexArrayA {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// `m(i_sub, i_face)`: position of a face's mortar in `A`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingM {
    map: BTreeMap<usize, [usize; 2]>,
}

impl MappingM {
    pub fn get(&self, i_sub: usize, i_face: usize) -> Result<usize> {
        self.map
            .get(&i_face)
            .map(|m| m[i_sub])
            .ok_or_else(|| Error::Internal(format!("face {i_face} has no mortars")))
    }

    pub fn faces(&self) -> impl Iterator<Item = (usize, [usize; 2])> + '_ {
        self.map.iter().map(|(&f, &m)| (f, m))
    }
}

/// Rebuilds `A` and `m` for the current surpassed face count `n_delta`.
///
/// Every local face owns two mortars. On the static side the partner is the
/// owner of the moving face over each sub-interval; on the moving side it is
/// the owner of the static face each mortar belongs to.
pub fn rebuild_index_arrays(
    side: InterfaceSide,
    faces: &[LocalInterfaceFace],
    maps: &RankMaps,
    n_delta: i64,
) -> Result<(IndexArrayA, MappingM)> {
    let opposite = maps.opposite(side);
    let n_faces = opposite.n_par;
    let mut columns = Vec::with_capacity(2 * faces.len());
    for f in faces {
        for i_sub in 0..2 {
            let col = match side {
                InterfaceSide::Static => {
                    let i_mov = moving_index(f.i_par, n_delta, i_sub, n_faces);
                    MortarColumn {
                        partner: opposite.get(i_mov, f.i_perp)?,
                        i_par: f.i_par,
                        i_perp: f.i_perp,
                        i_sub,
                        i_face: f.i_face,
                    }
                }
                InterfaceSide::Moving => {
                    let i_par = static_index_of_moving(f.i_par, n_delta, i_sub, n_faces);
                    MortarColumn {
                        partner: opposite.get(i_par, f.i_perp)?,
                        i_par,
                        i_perp: f.i_perp,
                        i_sub,
                        i_face: f.i_face,
                    }
                }
            };
            columns.push(col);
        }
    }
    // (partner, i_par, i_perp, i_sub) is unique per mortar
    columns.sort_unstable();
    let mut map: BTreeMap<usize, [usize; 2]> = BTreeMap::new();
    for (k, c) in columns.iter().enumerate() {
        map.entry(c.i_face).or_insert([usize::MAX; 2])[c.i_sub] = k;
    }
    Ok((IndexArrayA { columns }, MappingM { map }))
}

/// Contiguous run of `A` exchanged with one partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub partner: usize,
    pub start: usize,
    pub len: usize,
}

/// Messages for one interface side: one per remote partner, plus the
/// self-partner run handled by direct copy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageSchedule {
    pub remote: Vec<Chunk>,
    pub local: Option<Chunk>,
}

/// Splits `A` into partner runs. `A` is sorted by partner, so each run is contiguous.
pub fn build_schedule(a: &IndexArrayA, my_rank: usize) -> MessageSchedule {
    let mut sched = MessageSchedule::default();
    let mut start = 0;
    while start < a.columns.len() {
        let partner = a.columns[start].partner;
        let len = a.columns[start..]
            .iter()
            .take_while(|c| c.partner == partner)
            .count();
        let chunk = Chunk {
            partner,
            start,
            len,
        };
        if partner == my_rank {
            sched.local = Some(chunk);
        } else {
            sched.remote.push(chunk);
        }
        start += len;
    }
    sched
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::RankMap;
    use proptest::prelude::*;

    fn maps(n: usize, r_static: Vec<usize>, r_moving: Vec<usize>) -> RankMaps {
        assert_eq!(r_static.len(), n);
        RankMaps {
            r_static: RankMap::from_rows(vec![r_static]),
            r_moving: RankMap::from_rows(vec![r_moving]),
        }
    }

    #[test]
    fn local_partner_yields_empty_remote_schedule() {
        let m = maps(4, vec![0; 4], vec![0; 4]);
        let faces: Vec<_> = (0..4)
            .map(|i| LocalInterfaceFace {
                i_face: i,
                i_par: i,
                i_perp: 0,
            })
            .collect();
        let (a, _) = rebuild_index_arrays(InterfaceSide::Static, &faces, &m, 0).unwrap();
        let s = build_schedule(&a, 0);
        assert!(s.remote.is_empty());
        assert_eq!(s.local.unwrap().len, 8);
    }

    #[test]
    fn schedule_runs_are_contiguous() {
        let m = maps(4, vec![0; 4], vec![1, 1, 2, 2]);
        let faces: Vec<_> = (0..4)
            .map(|i| LocalInterfaceFace {
                i_face: 10 + i,
                i_par: i,
                i_perp: 0,
            })
            .collect();
        let (a, _) = rebuild_index_arrays(InterfaceSide::Static, &faces, &m, 0).unwrap();
        let s = build_schedule(&a, 0);
        assert_eq!(
            s.remote,
            vec![
                Chunk { partner: 1, start: 0, len: 4 },
                Chunk { partner: 2, start: 4, len: 4 }
            ]
        );
        assert!(s.local.is_none());
    }

    proptest! {
        /// Both sides of every partner pair list the same mortars in the same order.
        #[test]
        fn partners_agree_on_mortar_order(
            n in 2usize..12,
            n_delta in -30i64..30,
            n_static_ranks in 1usize..4,
            n_moving_ranks in 1usize..4,
        ) {
            let r_s: Vec<usize> = (0..n).map(|i| i * n_static_ranks / n).collect();
            let r_m: Vec<usize> = (0..n).map(|i| 10 + i * n_moving_ranks / n).collect();
            let m = maps(n, r_s.clone(), r_m.clone());
            let side_faces = |ranks: &[usize], r: usize| -> Vec<LocalInterfaceFace> {
                (0..n).filter(|&i| ranks[i] == r)
                    .map(|i| LocalInterfaceFace { i_face: 100 + i, i_par: i, i_perp: 0 })
                    .collect()
            };
            let mut total = 0;
            for rs in 0..n_static_ranks {
                let (a_s, m_s) = rebuild_index_arrays(InterfaceSide::Static, &side_faces(&r_s, rs), &m, n_delta).unwrap();
                let sched_s = build_schedule(&a_s, rs);
                total += a_s.len();
                for (f, idx) in m_s.faces() {
                    prop_assert_eq!(a_s.columns[idx[0]].i_face, f);
                    prop_assert_eq!(a_s.columns[idx[1]].i_sub, 1);
                }
                for c in &sched_s.remote {
                    let (a_m, _) = rebuild_index_arrays(InterfaceSide::Moving, &side_faces(&r_m, c.partner), &m, n_delta).unwrap();
                    let sched_m = build_schedule(&a_m, c.partner);
                    let back = sched_m.remote.iter().find(|k| k.partner == rs).unwrap();
                    prop_assert_eq!(back.len, c.len);
                    for k in 0..c.len {
                        let (x, y) = (a_s.columns[c.start + k], a_m.columns[back.start + k]);
                        prop_assert_eq!((x.i_par, x.i_perp, x.i_sub), (y.i_par, y.i_perp, y.i_sub));
                        // geometric check: the moving face over this mortar
                        let expect = (x.i_par as i64 - n_delta + x.i_sub as i64 - 1).rem_euclid(n as i64) as usize;
                        prop_assert_eq!(y.i_face - 100, expect);
                    }
                }
            }
            prop_assert_eq!(total, 2 * n);
        }
    }
}
