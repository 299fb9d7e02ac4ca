//! Uniform hash grid for radius and k-nearest-neighbor queries.

use std::collections::HashMap;

use crate::geom::Point;

type Cell = (i64, i64, i64);

#[derive(Clone, Debug)]
pub struct SpatialGrid {
    cell: f64,
    cells: HashMap<Cell, Vec<u32>>,
    points: Vec<Point>,
}

impl SpatialGrid {
    pub fn new(points: &[Point], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, cell)).or_default().push(i as u32);
        }
        Self {
            cell,
            cells,
            points: points.to_vec(),
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Indices of points within `radius` of `p`, ascending.
    pub fn within(&self, p: &Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(p, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Calls `f(index, squared distance)` for every point within `radius`,
    /// in unspecified order.
    pub fn for_each_within(&self, p: &Point, radius: f64, mut f: impl FnMut(usize, f64)) {
        let r2 = radius * radius;
        let lo = cell_of(&(p - nalgebra::Vector3::repeat(radius)), self.cell);
        let hi = cell_of(&(p + nalgebra::Vector3::repeat(radius)), self.cell);
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(ids) = self.cells.get(&(x, y, z)) {
                        for &i in ids {
                            let d2 = (self.points[i as usize] - p).norm_squared();
                            if d2 <= r2 {
                                f(i as usize, d2);
                            }
                        }
                    }
                }
            }
        }
    }

    /// The `k` nearest points to `p` (including `p` itself if present),
    /// ordered by distance then index.
    pub fn knn(&self, p: &Point, k: usize) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let k = k.min(self.points.len());
        let c = cell_of(p, self.cell);
        let mut ring = 1i64;
        loop {
            if ring > 6 {
                let mut all: Vec<(f64, usize)> = self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, q)| ((q - p).norm_squared(), i))
                    .collect();
                all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                return all[..k].iter().map(|c| c.1).collect();
            }
            let mut cand: Vec<(f64, usize)> = Vec::new();
            for x in c.0 - ring..=c.0 + ring {
                for y in c.1 - ring..=c.1 + ring {
                    for z in c.2 - ring..=c.2 + ring {
                        if let Some(ids) = self.cells.get(&(x, y, z)) {
                            cand.extend(
                                ids.iter()
                                    .map(|&i| ((self.points[i as usize] - p).norm_squared(), i as usize)),
                            );
                        }
                    }
                }
            }
            let reach = ring as f64 * self.cell;
            if cand.len() >= k {
                cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if cand[k - 1].0 <= reach * reach || cand.len() == self.points.len() {
                    return cand[..k].iter().map(|c| c.1).collect();
                }
            } else if cand.len() == self.points.len() {
                cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                return cand.into_iter().map(|c| c.1).collect();
            }
            ring += 1;
        }
    }
}

fn cell_of(p: &Point, cell: f64) -> Cell {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn queries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..500)
            .map(|_| Point::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.05)))
            .collect();
        let grid = SpatialGrid::new(&pts, 0.01);
        for q in pts.iter().step_by(7) {
            let mut brute: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= 0.025).collect();
            brute.sort_unstable();
            assert_eq!(grid.within(q, 0.025), brute);

            let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..12].iter().map(|a| a.1).collect();
            assert_eq!(grid.knn(q, 12), want);
        }
        assert_eq!(grid.knn(&Point::new(5.0, 5.0, 5.0), 3).len(), 3);
        assert_eq!(grid.knn(&pts[0], 10_000).len(), 500);
    }
}
