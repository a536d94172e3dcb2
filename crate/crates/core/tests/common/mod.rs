//! Brute-force oracles shared by several test targets.
#![allow(dead_code)]

use floorfield::environment::CellIndex;

/// All-pairs shortest paths over walkable cells, 8-connected.
pub fn floyd_warshall(rows: usize, cols: usize, blocked: &[bool]) -> Vec<Vec<f64>> {
    let n = rows * cols;
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        if blocked[i] {
            continue;
        }
        d[i][i] = 0.0;
        let (r, c) = ((i / cols) as i64, (i % cols) as i64);
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let (nr, nc) = (r + dr, c + dc);
                if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                if !blocked[j] {
                    d[i][j] = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k].is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

type P = (i64, i64);

fn cross(o: P, a: P, b: P) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: P, a: P, b: P) -> bool {
    cross(a, b, p) == 0 && p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn in_triangle(p: P, a: P, b: P, c: P) -> bool {
    let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
    let neg = d1 < 0 || d2 < 0 || d3 < 0;
    let pos = d1 > 0 || d2 > 0 || d3 > 0;
    !(neg && pos)
}

/// A point lies in the convex hull of a planar set iff it lies in a triangle
/// (possibly degenerate) spanned by three of its points.
fn in_hull(p: P, pts: &[P]) -> bool {
    let n = pts.len();
    for i in 0..n {
        if pts[i] == p {
            return true;
        }
        for j in i + 1..n {
            if on_segment(p, pts[i], pts[j]) {
                return true;
            }
            for k in j + 1..n {
                if cross(pts[i], pts[j], pts[k]) != 0 && in_triangle(p, pts[i], pts[j], pts[k]) {
                    return true;
                }
            }
        }
    }
    false
}

pub fn oracle_area(cells: &[CellIndex]) -> f64 {
    let pts: Vec<P> = cells.iter().map(|c| (c.col as i64, c.row as i64)).collect();
    let mut covered = 0;
    for r in 0..8 {
        for c in 0..8 {
            if in_hull((c, r), &pts) {
                covered += 1;
            }
        }
    }
    covered as f64 / cells.len() as f64
}
