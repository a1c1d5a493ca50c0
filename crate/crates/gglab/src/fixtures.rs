//! Shipped example spaces.
//!
//! The flat grid is the designed counterexample half of the roundtrip:
//! a [−R, R]² lattice whose vertical columns are electrified away, so
//! the ambient metric collapses each column to diameter one while the
//! horizontal rows — the subgroup family — stay isometrically embedded
//! and 0-quasiconvex. Every tuple of distinct rows has an accepted
//! joint intersection (the whole grid reaches every row through its
//! column cone), so the geometric height equals the number of rows
//! present and grows with the radius instead of stabilizing.

use crate::electric::electrify;
use crate::error::Result;
use crate::metric::{HLen, MetricGraph};

#[derive(Debug, Clone)]
pub struct FlatGrid {
    /// The electrified ambient: grid plus one cone per column.
    pub space: MetricGraph,
    /// Horizontal rows (vertex indices into `space`), y = −R..R.
    pub rows: Vec<Vec<u32>>,
    pub radius: u32,
}

/// Lattice points of [−R, R]², unit edges, columns coned off.
pub fn flat_grid(radius: u32) -> Result<FlatGrid> {
    let r = radius as i64;
    let side = 2 * r + 1;
    let idx = |x: i64, y: i64| -> u32 { ((x + r) * side + (y + r)) as u32 };
    let mut names = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            names.push(format!("{x},{y}"));
        }
    }
    let mut edges: Vec<(u32, u32, HLen)> = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            if x < r {
                edges.push((idx(x, y), idx(x + 1, y), 2));
            }
            if y < r {
                edges.push((idx(x, y), idx(x, y + 1), 2));
            }
        }
    }
    let base = MetricGraph::new(names, edges)?;
    let columns: Vec<Vec<u32>> = (-r..=r)
        .map(|x| (-r..=r).map(|y| idx(x, y)).collect())
        .collect();
    let space = electrify(&base, &columns)?.graph_el;
    let rows = (-r..=r)
        .map(|y| (-r..=r).map(|x| idx(x, y)).collect())
        .collect();
    Ok(FlatGrid {
        space,
        rows,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graded::{roundtrip_theorem_check, GradedOptions, RoundtripInput};
    use crate::height::{geometric_height, GeomOptions};

    #[test]
    fn grid_shape_and_row_isometry() {
        let f = flat_grid(3).unwrap();
        assert_eq!(f.rows.len(), 7);
        assert!(f.rows.iter().all(|row| row.len() == 7));
        // Rows are isometrically embedded: columns only shortcut
        // vertical travel.
        let row = &f.rows[3]; // y = 0
        let d = f.space.dist(row[0] as usize, row[6] as usize);
        assert_eq!(d, 12); // 6 units
        // Vertical travel is collapsed to one unit by the column cone.
        let col_top = f.space.index_of("0,3").unwrap();
        let col_bot = f.space.index_of("0,-3").unwrap();
        assert_eq!(f.space.dist(col_bot, col_top), 2);
    }

    #[test]
    fn grid_height_is_row_count() {
        for radius in [5u32, 6] {
            let f = flat_grid(radius).unwrap();
            let n_rows = f.rows.len();
            let rep = geometric_height(
                &f.space,
                &f.rows,
                4,
                &[1],
                0,
                n_rows + 1,
                &GeomOptions::default(),
            )
            .unwrap();
            assert_eq!(rep.height, n_rows as u32, "radius {radius}");
            assert!(!rep.truncated);
        }
    }

    #[test]
    fn grid_roundtrip_designed_disagreement() {
        let prev = flat_grid(5).unwrap();
        let cur = flat_grid(6).unwrap();
        let mut opts = GradedOptions::default();
        opts.max_level = 64;
        let input = RoundtripInput {
            base: &cur.space,
            orbit: &cur.rows[cur.radius as usize],
            pieces: &cur.rows,
            safe_radius: cur.radius,
            prev: Some((&prev.space, &prev.rows, prev.radius)),
        };
        let rec = roundtrip_theorem_check(&input, &opts, 8, 256).unwrap();
        assert!(rec.quasiconvex);
        assert_eq!(rec.qc.c_halves, 0);
        assert!(!rec.graded.overall);
        assert!(!rec.graded.height_stable);
        assert!(!rec.agreement);
        assert!(rec.escalate);
    }
}
