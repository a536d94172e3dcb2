use approx::assert_abs_diff_eq;
use floorfield::environment::{
    build_grid, compute_obstacle_field, compute_path_field, update_density_field, CellIndex, Marker,
};
use proptest::prelude::*;

mod common;

use common::floyd_warshall;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn fixture() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<usize>)> {
    (1usize..=10, 1usize..=10).prop_flat_map(|(rows, cols)| {
        let n = rows * cols;
        (Just(rows), Just(cols), prop::collection::vec(prop::bool::weighted(0.3), n), prop::collection::vec(0..n, 1..4))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn path_field_matches_all_pairs_oracle((rows, cols, mut blocked, goals) in fixture()) {
        let mut goals = goals;
        goals.sort_unstable();
        goals.dedup();
        for &g in &goals {
            blocked[g] = false;
        }
        let cell = |i: usize| CellIndex::new(i / cols, i % cols);
        let mut markers = vec![Marker::destination(0, goals.iter().map(|&g| cell(g)).collect())];
        let walls: Vec<CellIndex> = (0..rows * cols).filter(|&i| blocked[i]).map(cell).collect();
        if !walls.is_empty() {
            markers.push(Marker::obstacle(walls));
        }
        let grid = build_grid(cols as f64 * 0.4, rows as f64 * 0.4, markers, false).unwrap();
        let field = compute_path_field(&grid, &grid.markers()[0]).unwrap();
        let d = floyd_warshall(rows, cols, &blocked);
        for i in 0..rows * cols {
            if blocked[i] {
                continue;
            }
            let expected = goals.iter().map(|&g| d[i][g]).fold(f64::INFINITY, f64::min);
            let got = field.get(cell(i));
            if expected.is_infinite() {
                prop_assert!(got.is_infinite(), "cell {i}: expected unreachable, got {got}");
            } else {
                prop_assert!((got - expected).abs() < 1e-9, "cell {i}: {got} vs {expected}");
            }
        }
    }
}

#[test]
fn forced_detour_around_a_wall() {
    // 5x5, destination bottom centre, wall on row 2 columns 1..=3, origin top centre
    let wall = vec![CellIndex::new(2, 1), CellIndex::new(2, 2), CellIndex::new(2, 3)];
    let markers = vec![Marker::destination(0, vec![CellIndex::new(4, 2)]), Marker::obstacle(wall)];
    let grid = build_grid(2.0, 2.0, markers, false).unwrap();
    let field = compute_path_field(&grid, &grid.markers()[0]).unwrap();
    assert_eq!(field.get(CellIndex::new(4, 2)), 0.0);
    assert_eq!(field.get(CellIndex::new(3, 2)), 1.0);
    assert_abs_diff_eq!(field.get(CellIndex::new(3, 1)), SQRT_2, epsilon = 1e-12);
    // (1,2) -> (1,1) -> (2,0) -> (3,1) -> (4,2)
    assert_abs_diff_eq!(field.get(CellIndex::new(1, 2)), 1.0 + 3.0 * SQRT_2, epsilon = 1e-12);
}

#[test]
fn obstacle_field_decay() {
    let wall: Vec<CellIndex> = (0..10).map(|r| CellIndex::new(r, 0)).collect();
    let grid = build_grid(2.4, 4.0, vec![Marker::obstacle(wall)], false).unwrap();
    let f = compute_obstacle_field(&grid, 2, 1.0).unwrap();
    assert_eq!(f.get(CellIndex::new(5, 1)), 1.0);
    assert_eq!(f.get(CellIndex::new(5, 2)), 0.5);
    assert_eq!(f.get(CellIndex::new(5, 3)), 0.0);
}

#[test]
fn density_field_counts_windows() {
    let grid = build_grid(2.0, 2.0, vec![], false).unwrap();
    let mut scratch = Vec::new();
    let empty = update_density_field(&grid, std::iter::empty(), 1, &mut scratch);
    assert!(empty.iter().all(|&v| v == 0.0));
    let a = CellIndex::new(2, 2);
    let b = CellIndex::new(2, 3);
    let one = update_density_field(&grid, [a], 1, &mut scratch);
    assert_abs_diff_eq!(one[grid.index(a)], 1.0 / (9.0 * 0.16), epsilon = 1e-12);
    let other = update_density_field(&grid, [b], 1, &mut scratch);
    let both = update_density_field(&grid, [a, b], 1, &mut scratch);
    for i in 0..grid.len() {
        assert_abs_diff_eq!(both[i], one[i] + other[i], epsilon = 1e-12);
    }
}

proptest! {
    #[test]
    fn path_field_satisfies_the_step_property((rows, cols, mut blocked, mut goals) in fixture()) {
        goals.sort_unstable();
        goals.dedup();
        for &g in &goals {
            blocked[g] = false;
        }
        let cell = |i: usize| CellIndex::new(i / cols, i % cols);
        let mut markers = vec![Marker::destination(0, goals.iter().map(|&g| cell(g)).collect())];
        let walls: Vec<CellIndex> = (0..rows * cols).filter(|&i| blocked[i]).map(cell).collect();
        if !walls.is_empty() {
            markers.push(Marker::obstacle(walls));
        }
        let grid = build_grid(cols as f64 * 0.4, rows as f64 * 0.4, markers, false).unwrap();
        let field = compute_path_field(&grid, &grid.markers()[0]).unwrap();
        for i in (0..rows * cols).filter(|&i| !blocked[i] && !goals.contains(&i)) {
            let v = field.get(cell(i));
            let best = grid.moore_neighbors(cell(i)).map(|(n, cost)| field.get(n) + cost).fold(f64::INFINITY, f64::min);
            if v.is_finite() {
                prop_assert!((v - best).abs() < 1e-9, "cell {i}: {v} vs {best}");
            } else {
                prop_assert!(best.is_infinite());
            }
        }
    }

    #[test]
    fn torus_field_is_symmetric_under_row_shift(rows in 3usize..12, cols in 1usize..6, goal in (0usize..12, 0usize..6), shift in 0usize..12) {
        let goal = CellIndex::new(goal.0 % rows, goal.1 % cols);
        let field_for = |g: CellIndex| {
            let grid = build_grid(cols as f64 * 0.4, rows as f64 * 0.4, vec![Marker::destination(0, vec![g])], true).unwrap();
            compute_path_field(&grid, &grid.markers()[0]).unwrap()
        };
        let a = field_for(goal);
        let b = field_for(CellIndex::new((goal.row + shift) % rows, goal.col));
        for r in 0..rows {
            for c in 0..cols {
                let moved = CellIndex::new((r + shift) % rows, c);
                prop_assert!((a.get(CellIndex::new(r, c)) - b.get(moved)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interior_density_mass_is_conserved(people in prop::collection::vec((3usize..7, 3usize..7), 0..12), radius in 1usize..3) {
        // 10x10 grid; everyone at least three cells from the edge so no window touching them is clipped
        let grid = build_grid(4.0, 4.0, vec![], false).unwrap();
        let positions: Vec<CellIndex> = people.iter().map(|&(r, c)| CellIndex::new(r, c)).collect();
        let field = update_density_field(&grid, positions.iter().copied(), radius, &mut Vec::new());
        let window = ((2 * radius + 1) * (2 * radius + 1)) as f64;
        let mut mass = 0.0;
        for r in 0..10 {
            for c in 0..10 {
                let rows = (r + radius).min(9) - r.saturating_sub(radius) + 1;
                let cols = (c + radius).min(9) - c.saturating_sub(radius) + 1;
                mass += field[grid.index(CellIndex::new(r, c))] * (rows * cols) as f64 * 0.16;
            }
        }
        prop_assert!((mass - positions.len() as f64 * window).abs() < 1e-9);
    }
}
