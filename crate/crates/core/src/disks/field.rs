//! Procedural obstacle field: one obstacle per cell of a square grid, nudged
//! off its lattice point by at most a quarter of the spacing.

use std::f64::consts::TAU;

use rand::Rng;

use super::Point;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleField {
    seed: u64,
    spacing: f64,
}

impl ObstacleField {
    pub fn new(seed: u64, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidParams(format!(
                "obstacle spacing must be positive, got {spacing}"
            )));
        }
        Ok(ObstacleField { seed, spacing })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Largest offset of an obstacle from its lattice point.
    pub fn jitter(&self) -> f64 {
        self.spacing / 4.0
    }

    /// Guaranteed gap between any two obstacle centres.
    pub fn min_separation(&self) -> f64 {
        self.spacing - 2.0 * self.jitter()
    }

    fn cell_point(&self, i: i64, j: i64) -> Point {
        let stream = ((i as u32 as u64) << 32) | j as u32 as u64;
        let mut draw = rng::stream_at(self.seed, stream, 0);
        let angle = draw.gen_range(0.0..TAU);
        let radius = self.jitter() * draw.gen::<f64>().sqrt();
        Point::new(
            i as f64 * self.spacing + radius * angle.cos(),
            j as f64 * self.spacing + radius * angle.sin(),
        )
    }

    /// Obstacles in the closed box `[lo, hi]`, ordered by cell.
    pub fn obstacles_in(&self, lo: Point, hi: Point) -> Vec<Point> {
        let cells = |a: f64, b: f64| {
            let first = ((a - self.jitter()) / self.spacing).floor() as i64;
            let last = ((b + self.jitter()) / self.spacing).ceil() as i64;
            first..=last
        };
        let mut found = Vec::new();
        for i in cells(lo.x, hi.x) {
            for j in cells(lo.y, hi.y) {
                let p = self.cell_point(i, j);
                if p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y {
                    found.push(p);
                }
            }
        }
        found
    }

    /// Obstacles within distance `r` of `at`, ordered by cell.
    pub fn visible_from(&self, at: Point, r: f64) -> Vec<Point> {
        let reach = Point::new(r, r);
        self.obstacles_in(at - reach, at + reach)
            .into_iter()
            .filter(|p| p.distance(at) <= r)
            .collect()
    }

    /// Upper bound on how many obstacles any closed disk of radius `r` holds.
    ///
    /// An obstacle lies in the disk only if its lattice point lies within
    /// `r + jitter` of the centre, so this is the deepest overlap of
    /// lattice-centred disks of that radius. The maximum is attained at a
    /// lattice point or at a crossing of two boundary circles.
    pub fn m_bound(&self, r: f64) -> usize {
        let s = self.spacing;
        let reach = r + self.jitter();
        let span = (reach / s).ceil() as i64 + 2;
        let lattice: Vec<Point> = (-span..=span + 1)
            .flat_map(|i| (-span..=span + 1).map(move |j| Point::new(i as f64 * s, j as f64 * s)))
            .collect();
        let slack = 1e-9 * reach.max(s);
        let depth = |q: Point| lattice.iter().filter(|p| p.distance(q) <= reach + slack).count();
        let in_cell = |q: Point| q.x >= -slack && q.x <= s + slack && q.y >= -slack && q.y <= s + slack;

        let mut best = depth(Point::new(0.0, 0.0));
        for (a, pa) in lattice.iter().enumerate() {
            for pb in &lattice[a + 1..] {
                let d = pa.distance(*pb);
                if d > 2.0 * reach || d == 0.0 {
                    continue;
                }
                let mid = (*pa + *pb) * 0.5;
                let h = (reach * reach - d * d / 4.0).max(0.0).sqrt();
                let normal = Point::new(-(pb.y - pa.y) / d, (pb.x - pa.x) / d);
                for q in [mid + normal * h, mid - normal * h] {
                    if in_cell(q) {
                        best = best.max(depth(q));
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_queries_agree() {
        let field = ObstacleField::new(9, 0.5).unwrap();
        let lo = Point::new(-2.0, -1.0);
        let hi = Point::new(3.0, 2.5);
        assert_eq!(field.obstacles_in(lo, hi), field.obstacles_in(lo, hi));
        let narrower = field.obstacles_in(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        let wide = field.obstacles_in(lo, hi);
        assert!(narrower.iter().all(|p| wide.contains(p)));
    }

    #[test]
    fn obstacles_keep_their_distance() {
        let field = ObstacleField::new(3, 1.0).unwrap();
        let pts = field.obstacles_in(Point::new(-5.0, -5.0), Point::new(5.0, 5.0));
        assert!(pts.len() >= 80);
        for (a, p) in pts.iter().enumerate() {
            for q in &pts[a + 1..] {
                assert!(p.distance(*q) >= field.min_separation());
            }
        }
    }

    #[test]
    fn bound_on_unit_grid() {
        let field = ObstacleField::new(0, 1.0).unwrap();
        // reach 0.35: a single lattice point
        assert_eq!(field.m_bound(0.1), 1);
        // reach 0.55: two neighbours, but no triangle (circumradius 0.707)
        assert_eq!(field.m_bound(0.3), 2);
        // reach 0.75: a whole unit square
        assert_eq!(field.m_bound(0.5), 4);
    }
}
