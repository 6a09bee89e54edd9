//! Uniform spatial grid over a rectangular region.
//!
//! Cells are stored in compressed-row form: `cell_start[c]..cell_start[c + 1]`
//! indexes into `items`, which holds object indices sorted by cell.

use crate::geometry::Point2;
use crate::model::Rect;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    origin: Point2,
    cell: f64,
    inv_cell: f64,
    cols: usize,
    rows: usize,
    cell_start: Vec<u32>,
    items: Vec<u32>,
}

impl SpatialGrid {
    /// Build a grid over `region`. All points must lie inside the region
    /// (closed bounds); points on the far edge land in the last cell.
    pub fn build(points: &[Point2], region: Rect, cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite(), "cell size must be positive");
        let cols = ((region.width() / cell_size).ceil() as usize).max(1);
        let rows = ((region.height() / cell_size).ceil() as usize).max(1);
        let mut grid = Self {
            origin: region.min,
            cell: cell_size,
            inv_cell: 1.0 / cell_size,
            cols,
            rows,
            cell_start: vec![0; cols * rows + 1],
            items: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|&p| grid.cell_of(p)).collect();
        for &c in &cells {
            grid.cell_start[c + 1] += 1;
        }
        for c in 0..cols * rows {
            grid.cell_start[c + 1] += grid.cell_start[c];
        }
        let mut fill = grid.cell_start.clone();
        for (idx, &c) in cells.iter().enumerate() {
            grid.items[fill[c] as usize] = idx as u32;
            fill[c] += 1;
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    fn col_of(&self, x: f64) -> usize {
        // Saturating cast: negatives and NaN land in cell 0.
        (((x - self.origin.x) * self.inv_cell) as usize).min(self.cols - 1)
    }

    fn row_of(&self, y: f64) -> usize {
        (((y - self.origin.y) * self.inv_cell) as usize).min(self.rows - 1)
    }

    fn cell_of(&self, p: Point2) -> usize {
        self.row_of(p.y) * self.cols + self.col_of(p.x)
    }

    fn cell_items(&self, col: usize, row: usize) -> &[u32] {
        let c = row * self.cols + col;
        &self.items[self.cell_start[c] as usize..self.cell_start[c + 1] as usize]
    }

    /// Visit every object in cells overlapping the axis-aligned box.
    #[inline]
    pub fn for_each_in_box(&self, min: Point2, max: Point2, mut f: impl FnMut(u32)) {
        if !self.box_overlaps(min, max) {
            return;
        }
        let (c0, c1) = (self.col_of(min.x), self.col_of(max.x));
        let (r0, r1) = (self.row_of(min.y), self.row_of(max.y));
        for row in r0..=r1 {
            let start = self.cell_start[row * self.cols + c0] as usize;
            let end = self.cell_start[row * self.cols + c1 + 1] as usize;
            for &idx in &self.items[start..end] {
                f(idx);
            }
        }
    }

    /// Whether the box touches the grid at all.
    #[inline]
    pub fn box_overlaps(&self, min: Point2, max: Point2) -> bool {
        let gx1 = self.origin.x + self.cell * self.cols as f64;
        let gy1 = self.origin.y + self.cell * self.rows as f64;
        !(max.x < self.origin.x || max.y < self.origin.y || min.x > gx1 || min.y > gy1)
    }

    /// Like [`SpatialGrid::for_each_in_box`] but stops at the first object
    /// for which `f` returns true.
    #[inline]
    pub fn any_in_box(&self, min: Point2, max: Point2, mut f: impl FnMut(u32) -> bool) -> bool {
        if !self.box_overlaps(min, max) {
            return false;
        }
        let (c0, c1) = (self.col_of(min.x), self.col_of(max.x));
        let (r0, r1) = (self.row_of(min.y), self.row_of(max.y));
        for row in r0..=r1 {
            let start = self.cell_start[row * self.cols + c0] as usize;
            let end = self.cell_start[row * self.cols + c1 + 1] as usize;
            if self.items[start..end].iter().any(|&idx| f(idx)) {
                return true;
            }
        }
        false
    }

    /// Distance from `p` to the nearest of `points` (the slice the grid was
    /// built from); infinite when empty. `p` must lie inside the region.
    pub fn nearest_distance(&self, points: &[Point2], p: Point2) -> f64 {
        if self.items.is_empty() {
            return f64::INFINITY;
        }
        let (pc, pr) = (self.col_of(p.x) as isize, self.row_of(p.y) as isize);
        let mut best = f64::INFINITY;
        let max_ring = self.cols.max(self.rows) as isize;
        for k in 0..=max_ring {
            for row in pr - k..=pr + k {
                if row < 0 || row >= self.rows as isize {
                    continue;
                }
                let edge = row == pr - k || row == pr + k;
                let step = if edge { 1 } else { (2 * k).max(1) };
                let mut col = pc - k;
                while col <= pc + k {
                    if col >= 0 && col < self.cols as isize {
                        for &idx in self.cell_items(col as usize, row as usize) {
                            best = best.min(points[idx as usize].distance(p));
                        }
                    }
                    col += step;
                }
            }
            if best <= k as f64 * self.cell {
                break;
            }
        }
        best
    }

    /// Conservative annulus lookup: returns every object whose distance from
    /// `center` lies in `[r_inner, r_outer]`, plus possibly some others.
    pub fn query_annulus(&self, center: Point2, r_inner: f64, r_outer: f64) -> Vec<u32> {
        let mut out = Vec::new();
        if r_outer < 0.0 || r_outer < r_inner {
            return out;
        }
        let c0 = self.col_of(center.x - r_outer);
        let c1 = self.col_of(center.x + r_outer);
        let r0 = self.row_of(center.y - r_outer);
        let r1 = self.row_of(center.y + r_outer);
        for row in r0..=r1 {
            let y0 = self.origin.y + row as f64 * self.cell;
            let y1 = y0 + self.cell;
            for col in c0..=c1 {
                let x0 = self.origin.x + col as f64 * self.cell;
                let x1 = x0 + self.cell;
                let dx_near = (x0 - center.x).max(0.0).max(center.x - x1);
                let dy_near = (y0 - center.y).max(0.0).max(center.y - y1);
                let dx_far = (center.x - x0).abs().max((center.x - x1).abs());
                let dy_far = (center.y - y0).abs().max((center.y - y1).abs());
                let near = dx_near.hypot(dy_near);
                let far = dx_far.hypot(dy_far);
                if near > r_outer || far < r_inner {
                    continue;
                }
                out.extend_from_slice(self.cell_items(col, row));
            }
        }
        out
    }
}

/// Raster of lower bounds on the distance to the nearest point, sampled at
/// cell centers. Answers "is this disc certainly empty?" in constant time.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceMap {
    region: Rect,
    inv_cell: f64,
    half_cell: f64,
    cols: usize,
    rows: usize,
    /// Nearest-point distance from each cell center, rounded down.
    dist: Vec<f32>,
}

impl ClearanceMap {
    /// Build over `region` with at most about `max_cells` cells. All points
    /// must lie inside the region.
    pub fn build(points: &[Point2], region: Rect, max_cells: usize) -> Self {
        let area = (region.width() * region.height()).max(f64::MIN_POSITIVE);
        let cell = (area / max_cells.max(1) as f64)
            .sqrt()
            .max(region.width().max(region.height()) / max_cells.max(1) as f64)
            .max(1e-9);
        let cols = ((region.width() / cell).ceil() as usize).max(1);
        let rows = ((region.height() / cell).ceil() as usize).max(1);
        let index = SpatialGrid::build(points, region, (cell * 8.0).max(region.diagonal() / 64.0).max(1e-9));
        let mut dist = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let center = Point2::new(
                    region.min.x + (c as f64 + 0.5) * cell,
                    region.min.y + (r as f64 + 0.5) * cell,
                );
                let d = index.nearest_distance(points, center);
                let mut f = d as f32;
                if f as f64 > d {
                    f = f.next_down();
                }
                dist.push(f);
            }
        }
        Self {
            region,
            inv_cell: 1.0 / cell,
            half_cell: 0.5 * cell,
            cols,
            rows,
            dist,
        }
    }

    /// True when no point lies within `radius` of `q` (closed disc). A false
    /// answer is inconclusive.
    #[inline]
    pub fn is_clear(&self, q: Point2, radius: f64) -> bool {
        let (min, max) = (self.region.min, self.region.max);
        if q.x < min.x - radius || q.x > max.x + radius || q.y < min.y - radius || q.y > max.y + radius {
            return true;
        }
        // In range after the rejection above, so the casts cannot wrap.
        let c = (((q.x - min.x) * self.inv_cell) as i64).clamp(0, self.cols as i64 - 1) as usize;
        let r = (((q.y - min.y) * self.inv_cell) as i64).clamp(0, self.rows as i64 - 1) as usize;
        let d = self.dist[r * self.cols + c] as f64;
        let t = d - radius - 1e-9 * (1.0 + d + radius);
        if !(t > 0.0) {
            return false;
        }
        let dx = q.x - (min.x + c as f64 / self.inv_cell + self.half_cell);
        let dy = q.y - (min.y + r as f64 / self.inv_cell + self.half_cell);
        t * t > (dx * dx + dy * dy) * (1.0 + 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_distance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let region = Rect::new(Point2::new(0.0, 0.0), Point2::new(120.0, 40.0));
        let pts: Vec<Point2> = (0..60)
            .map(|_| Point2::new(rng.random_range(0.0..=120.0), rng.random_range(0.0..=40.0)))
            .collect();
        let grid = SpatialGrid::build(&pts, region, 7.0);
        for _ in 0..500 {
            let q = Point2::new(rng.random_range(0.0..=120.0), rng.random_range(0.0..=40.0));
            let brute = pts.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest_distance(&pts, q), brute);
        }
        let empty = SpatialGrid::build(&[], region, 7.0);
        assert!(empty.nearest_distance(&[], Point2::new(1.0, 1.0)).is_infinite());
    }

    #[test]
    fn clearance_never_hides_a_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let region = Rect::new(Point2::new(-20.0, 10.0), Point2::new(80.0, 70.0));
        let mut pts: Vec<Point2> = (0..300)
            .map(|_| Point2::new(rng.random_range(-20.0..=80.0), rng.random_range(10.0..=70.0)))
            .collect();
        pts.push(region.min);
        pts.push(region.max);
        let map = ClearanceMap::build(&pts, region, 4096);
        let mut cleared = 0;
        for _ in 0..20000 {
            let q = Point2::new(rng.random_range(-40.0..100.0), rng.random_range(-10.0..90.0));
            let radius = rng.random_range(0.0..6.0);
            let nearest = pts.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min);
            if map.is_clear(q, radius) {
                assert!(nearest > radius, "{q:?} r={radius} nearest={nearest}");
                cleared += 1;
            }
        }
        assert!(cleared > 1000);
    }

    #[test]
    fn annulus_is_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let region = Rect::new(Point2::new(0.0, 0.0), Point2::new(250.0, 150.0));
        let pts: Vec<Point2> = (0..400)
            .map(|_| Point2::new(rng.random_range(0.0..=250.0), rng.random_range(0.0..=150.0)))
            .collect();
        let grid = SpatialGrid::build(&pts, region, 10.0);
        for _ in 0..1000 {
            let c = Point2::new(rng.random_range(-50.0..300.0), rng.random_range(-50.0..200.0));
            let r_in = rng.random_range(0.0..60.0);
            let r_out = r_in + rng.random_range(0.0..40.0);
            let got = grid.query_annulus(c, r_in, r_out);
            for (i, p) in pts.iter().enumerate() {
                let d = p.distance(c);
                if d >= r_in && d <= r_out {
                    assert!(got.contains(&(i as u32)), "missing {i} at distance {d}");
                }
            }
        }
    }

    #[test]
    fn box_visits_all_inside() {
        let region = Rect::new(Point2::new(-5.0, -5.0), Point2::new(5.0, 5.0));
        let pts = vec![
            Point2::new(-5.0, -5.0),
            Point2::new(5.0, 5.0),
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 0.0),
        ];
        let grid = SpatialGrid::build(&pts, region, 3.0);
        let mut seen = Vec::new();
        grid.for_each_in_box(Point2::new(-1.0, -1.0), Point2::new(6.0, 6.0), |i| seen.push(i));
        seen.sort();
        assert!(seen.contains(&1) && seen.contains(&2) && seen.contains(&3));
    }

    #[test]
    fn degenerate_region_has_one_cell() {
        let region = Rect::new(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0));
        let grid = SpatialGrid::build(&[Point2::new(1.0, 1.0)], region, 10.0);
        assert_eq!(grid.dims(), (1, 1));
        assert_eq!(grid.query_annulus(Point2::new(0.0, 0.0), 0.0, 2.0), vec![0]);
    }
}
