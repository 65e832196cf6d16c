//! Worked example of the index array `A` and mapping `m` for one static rank.

mod common;

use common::golden::{example_faces, example_maps, EXPECTED_A, EXPECTED_M};
use slidemesh::mortar::InterfaceSide;
use slidemesh::partition::{build_schedule, rebuild_index_arrays, MortarColumn};

#[test]
fn index_array_matches_worked_example() {
    let (a, _) = rebuild_index_arrays(InterfaceSide::Static, &example_faces(), &example_maps(), 1).unwrap();
    let got: Vec<(usize, usize, usize, usize, usize)> = a
        .columns
        .iter()
        .map(|c: &MortarColumn| (c.partner, c.i_par + 1, c.i_perp + 1, c.i_sub, c.i_face))
        .collect();
    assert_eq!(got, EXPECTED_A.to_vec());
}

#[test]
fn mapping_matches_worked_example() {
    let (_, m) = rebuild_index_arrays(InterfaceSide::Static, &example_faces(), &example_maps(), 1).unwrap();
    for (i_sub, row) in EXPECTED_M.iter().enumerate() {
        for (k, i_face) in (5..=9).enumerate() {
            assert_eq!(m.get(i_sub, i_face).unwrap() + 1, row[k], "m({i_sub}, {i_face})");
        }
    }
}

#[test]
fn worked_example_sends_two_messages() {
    let (a, _) = rebuild_index_arrays(InterfaceSide::Static, &example_faces(), &example_maps(), 1).unwrap();
    let s = build_schedule(&a, 0);
    let runs: Vec<(usize, usize)> = s.remote.iter().map(|c| (c.partner, c.len)).collect();
    assert_eq!(runs, vec![(4, 6), (7, 4)]);
    assert!(s.local.is_none());
}

#[test]
fn independent_mapping_oracle() {
    // Brute force: for every face and sub-index, scan A for the matching column.
    let faces = example_faces();
    let (a, m) = rebuild_index_arrays(InterfaceSide::Static, &faces, &example_maps(), 1).unwrap();
    for f in &faces {
        for i_sub in 0..2 {
            let pos = a
                .columns
                .iter()
                .position(|c| c.i_face == f.i_face && c.i_sub == i_sub)
                .unwrap();
            assert_eq!(m.get(i_sub, f.i_face).unwrap(), pos);
        }
    }
}
