//! Worked example of the index array `A` and mapping `m` for one static rank.
//! Indices in the tables are 1-based.

use slidemesh::partition::{LocalInterfaceFace, RankMap, RankMaps};

/// (i_face, i_par, i_perp), 1-based.
pub const STATIC_FACES: [(usize, usize, usize); 5] = [(5, 4, 1), (6, 4, 2), (7, 5, 1), (8, 3, 2), (9, 3, 1)];

/// Columns of `A` as (partner, i_par, i_perp, i_sub, i_face).
pub const EXPECTED_A: [(usize, usize, usize, usize, usize); 10] = [
    (4, 3, 2, 1, 8),
    (4, 4, 1, 1, 5),
    (4, 4, 2, 0, 6),
    (4, 4, 2, 1, 6),
    (4, 5, 1, 0, 7),
    (4, 5, 1, 1, 7),
    (7, 3, 1, 0, 9),
    (7, 3, 1, 1, 9),
    (7, 3, 2, 0, 8),
    (7, 4, 1, 0, 5),
];

/// `m(i_sub, i_face)` for i_face = 5..=9, 1-based mortar positions.
pub const EXPECTED_M: [[usize; 5]; 2] = [[10, 3, 5, 9, 7], [2, 4, 6, 1, 8]];

pub const UNUSED: usize = 99;

pub fn example_maps() -> RankMaps {
    // moving-side owners over i~ = 1..4 (row 1) and 1..3 (row 2)
    let r_moving = RankMap::from_rows(vec![
        vec![7, 7, 4, 4, UNUSED],
        vec![7, 4, 4, UNUSED, UNUSED],
    ]);
    let r_static = RankMap::from_rows(vec![vec![0; 5], vec![0; 5]]);
    RankMaps { r_static, r_moving }
}

pub fn example_faces() -> Vec<LocalInterfaceFace> {
    STATIC_FACES
        .iter()
        .map(|&(i_face, i_par, i_perp)| LocalInterfaceFace {
            i_face,
            i_par: i_par - 1,
            i_perp: i_perp - 1,
        })
        .collect()
}
