use approx::assert_abs_diff_eq;
use floorfield::environment::{CellIndex, Point};
use floorfield::population::{dispersion_area, dispersion_centroid, group_centroid};
use proptest::prelude::*;

mod common;

use common::oracle_area;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn area_matches_rasterisation(cells in prop::collection::vec((0usize..8, 0usize..8), 1..=5)) {
        let cells: Vec<CellIndex> = cells.into_iter().map(|(r, c)| CellIndex::new(r, c)).collect();
        let got = dispersion_area(&cells).unwrap();
        prop_assert!((got - oracle_area(&cells)).abs() < 1e-12);
    }

    #[test]
    fn area_is_translation_invariant(cells in prop::collection::vec((0usize..6, 0usize..6), 1..=5), dr in 0usize..3, dc in 0usize..3) {
        let a: Vec<CellIndex> = cells.iter().map(|&(r, c)| CellIndex::new(r, c)).collect();
        let b: Vec<CellIndex> = cells.iter().map(|&(r, c)| CellIndex::new(r + dr, c + dc)).collect();
        prop_assert_eq!(dispersion_area(&a).unwrap(), dispersion_area(&b).unwrap());
    }

    #[test]
    fn centroid_dispersion_is_nonnegative(pts in prop::collection::vec((0usize..20, 0usize..20), 1..8)) {
        let pts: Vec<Point> = pts.into_iter().map(|(r, c)| CellIndex::new(r, c).center()).collect();
        prop_assert!(dispersion_centroid(&pts).unwrap() >= 0.0);
    }
}

#[test]
fn exhaustive_small_grid() {
    // every pair and triple on a 4x4 grid
    let cells: Vec<CellIndex> = (0..4).flat_map(|r| (0..4).map(move |c| CellIndex::new(r, c))).collect();
    for (i, &a) in cells.iter().enumerate() {
        for (j, &b) in cells.iter().enumerate().skip(i) {
            assert_eq!(dispersion_area(&[a, b]).unwrap(), oracle_area(&[a, b]));
            for &c in &cells[j..] {
                assert_eq!(dispersion_area(&[a, b, c]).unwrap(), oracle_area(&[a, b, c]));
            }
        }
    }
}

#[test]
fn tabulated_examples() {
    let c = |r, col| CellIndex::new(r, col);
    assert_eq!(dispersion_area(&[c(3, 3)]).unwrap(), 1.0);
    assert_eq!(dispersion_area(&[c(3, 3), c(3, 4)]).unwrap(), 1.0);
    assert_eq!(dispersion_area(&[c(0, 0), c(0, 4), c(4, 0)]).unwrap(), 5.0);
    assert!(dispersion_area(&[]).is_err());

    let p = |x, y| Point::new(x, y);
    assert_eq!(group_centroid(&[p(0.2, 0.2)]).unwrap(), p(0.2, 0.2));
    let mid = group_centroid(&[p(0.2, 0.2), p(0.2, 1.0)]).unwrap();
    assert_abs_diff_eq!(mid.y, 0.6, epsilon = 1e-12);
    assert_eq!(dispersion_centroid(&[p(1.0, 1.0)]).unwrap(), 0.0);
    assert_abs_diff_eq!(dispersion_centroid(&[p(0.0, 0.0), p(0.8, 0.0)]).unwrap(), 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(
        dispersion_centroid(&[p(0.0, 0.0), p(0.4, 0.0), p(0.8, 0.0)]).unwrap(),
        0.8 / 3.0,
        epsilon = 1e-12
    );
    assert!(group_centroid(&[]).is_err());
}
