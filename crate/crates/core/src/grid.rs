//! Covering grids on the unit sphere.
//!
//! The grid at level l places a uniform lattice of spacing
//! `h = 2^-l / (2 sqrt(n))` on every n-dimensional face of the cube
//! `[-1, 1]^(n+1)` and normalizes each lattice point radially. A face point
//! lies within `(h/2) sqrt(n)` of a lattice point, normalization from the
//! cube surface is 2-Lipschitz and chordal-to-angular inflation is at most
//! pi/2, so the angular covering radius is at most `2^-l`.
//!
//! Points shared by several faces (cube edges and corners) are kept once,
//! owned by the smallest face axis. Point order is face-major,
//! lattice-minor, which makes indices stable and construction deterministic.
//! Certified runs need levels whose grids cannot be materialized, so the
//! enumeration is exposed in streaming row form as well.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error(
        "grid at level {level} for S^{n} needs {required:.3e} points, over the budget of {budget}"
    )]
    BudgetExceeded {
        n: usize,
        level: u32,
        required: f64,
        budget: u64,
    },
}

/// Combinatorial description of a grid; cheap to construct at any level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: usize,
    level: u32,
    axis_points: u64,
    spacing: f64,
}

impl GridSpec {
    pub fn new(n: usize, level: u32) -> Self {
        assert!(n >= 1, "sphere dimension must be at least 1");
        let spacing = 2f64.powi(-(level as i32)) / (2.0 * (n as f64).sqrt());
        let axis_points = (2.0 / spacing).ceil() as u64 + 1;
        let spec = Self {
            n,
            level,
            axis_points,
            spacing,
        };
        // The one-but-last lattice value must stay strictly inside (-1, 1),
        // otherwise ownership deduplication would see a spurious boundary.
        assert!(spec.lattice_value(axis_points - 2) < 1.0);
        spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Angular covering radius `2^-level`.
    pub fn covering_radius(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    /// Lattice points per axis, `ceil(4 sqrt(n) 2^l) + 1`.
    pub fn axis_points(&self) -> u64 {
        self.axis_points
    }

    fn lattice_value(&self, k: u64) -> f64 {
        if k == 0 {
            -1.0
        } else if k == self.axis_points - 1 {
            1.0
        } else {
            -1.0 + k as f64 * self.spacing
        }
    }

    /// Points owned by one face: free axes below the face axis are interior.
    fn face_count(&self, face_axis: usize) -> u128 {
        let m = self.axis_points as u128;
        let interior = m - 2;
        let mut c = 1u128;
        for j in 0..=self.n {
            if j == face_axis {
                continue;
            }
            c *= if j < face_axis { interior } else { m };
        }
        c
    }

    /// Total point count across all `2(n+1)` faces, after deduplication.
    pub fn point_count(&self) -> u128 {
        (0..=self.n).map(|i| 2 * self.face_count(i)).sum()
    }

    fn row_len(&self, face_axis: usize) -> u64 {
        // The fastest-varying free axis is the largest one.
        if face_axis < self.n {
            self.axis_points
        } else {
            self.axis_points - 2
        }
    }

    fn rows_per_face(&self, face_axis: usize) -> u128 {
        self.face_count(face_axis) / self.row_len(face_axis) as u128
    }

    pub fn row_count(&self) -> u64 {
        let total: u128 = (0..=self.n).map(|i| 2 * self.rows_per_face(i)).sum();
        u64::try_from(total).expect("row count exceeds u64")
    }

    /// Streams one row of points. The callback receives the global point
    /// index and the normalized coordinates (length n + 1).
    pub fn for_each_point_in_row<F>(&self, row: u64, mut visit: F)
    where
        F: FnMut(u64, &[f64]),
    {
        let mut buf = [0f64; MAX_COORDS];
        let dim = self.n + 1;
        let (face_axis, sign, row_in_face, point_start) = self.locate_row(row);
        let cube = &mut buf[..dim];
        // Fixed coordinates of the row.
        cube[face_axis] = sign;
        let mut rem = row_in_face;
        let free_axes: Vec<usize> = (0..=self.n).filter(|&j| j != face_axis).collect();
        let last = *free_axes.last().expect("n >= 1 gives a free axis");
        // Row-major: the first free axis is the slowest, so decompose the
        // row index from the last fixed axis backwards.
        let mut radices: Vec<(usize, u128, bool)> = Vec::with_capacity(self.n);
        for &j in &free_axes {
            if j == last {
                continue;
            }
            let interior = j < face_axis;
            let radix = if interior {
                (self.axis_points - 2) as u128
            } else {
                self.axis_points as u128
            };
            radices.push((j, radix, interior));
        }
        for &(j, radix, interior) in radices.iter().rev() {
            let digit = (rem % radix) as u64;
            rem /= radix;
            let k = if interior { digit + 1 } else { digit };
            cube[j] = self.lattice_value(k);
        }
        debug_assert_eq!(rem, 0);
        let last_interior = last < face_axis;
        let len = self.row_len(face_axis);
        let mut point = [0f64; MAX_COORDS];
        for d in 0..len {
            let k = if last_interior { d + 1 } else { d };
            cube[last] = self.lattice_value(k);
            let norm: f64 = cube.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (o, v) in point[..dim].iter_mut().zip(cube.iter()) {
                *o = v / norm;
            }
            visit(point_start + d, &point[..dim]);
        }
    }

    /// Maps a global row index to (face axis, face sign, row within the
    /// face, global index of the row's first point).
    fn locate_row(&self, row: u64) -> (usize, f64, u128, u64) {
        let mut row = row as u128;
        let mut point_start = 0u128;
        for face_axis in 0..=self.n {
            for sign in [-1.0, 1.0] {
                let rows = self.rows_per_face(face_axis);
                if row < rows {
                    let len = self.row_len(face_axis) as u128;
                    let start = point_start + row * len;
                    return (
                        face_axis,
                        sign,
                        row,
                        u64::try_from(start).expect("point index exceeds u64"),
                    );
                }
                row -= rows;
                point_start += self.face_count(face_axis);
            }
        }
        panic!("row index out of range");
    }

    /// Upper bound on the angular distance from `x` (unit) to the nearest
    /// grid point, found by rounding on each face and probing a small lattice
    /// window. Used to validate the covering radius without materializing
    /// the grid.
    pub fn nearest_angular_upper_bound(&self, x: &[f64], window: i64) -> f64 {
        assert_eq!(x.len(), self.n + 1);
        let m = self.axis_points;
        let mut best: f64 = f64::INFINITY;
        let mut cube = [0f64; MAX_COORDS];
        let mut digits = [0i64; MAX_COORDS];
        for face_axis in 0..=self.n {
            if x[face_axis] == 0.0 {
                continue;
            }
            let sign = x[face_axis].signum();
            let scale = 1.0 / x[face_axis].abs();
            // Projection of x onto the face, then nearest lattice indices.
            let free: Vec<usize> = (0..=self.n).filter(|&j| j != face_axis).collect();
            for (slot, &j) in free.iter().enumerate() {
                let v = (x[j] * scale).clamp(-1.0, 1.0);
                digits[slot] = (((v + 1.0) / self.spacing).round() as i64)
                    .clamp(0, m as i64 - 1);
            }
            let mut offsets = vec![-window; free.len()];
            loop {
                cube[face_axis] = sign;
                for (slot, &j) in free.iter().enumerate() {
                    let k = (digits[slot] + offsets[slot]).clamp(0, m as i64 - 1) as u64;
                    cube[j] = self.lattice_value(k);
                }
                let norm: f64 =
                    cube[..=self.n].iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = cube[..=self.n]
                    .iter()
                    .zip(x)
                    .map(|(c, xi)| c * xi)
                    .sum::<f64>()
                    / norm;
                let ang = dot.clamp(-1.0, 1.0).acos();
                best = best.min(ang);
                // odometer over the window
                let mut s = 0;
                loop {
                    if s == offsets.len() {
                        break;
                    }
                    if offsets[s] < window {
                        offsets[s] += 1;
                        break;
                    }
                    offsets[s] = -window;
                    s += 1;
                }
                if s == offsets.len() {
                    break;
                }
            }
        }
        best
    }
}

/// Largest supported n + 1; enough for every grid this artifact can afford.
const MAX_COORDS: usize = 16;

/// A materialized grid: indexed unit points in face-major, lattice-minor
/// order.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: GridSpec,
    coords: Vec<f64>,
}

impl Grid {
    /// Builds the grid, refusing when the point count exceeds the budget.
    pub fn build(n: usize, level: u32, budget: u64) -> Result<Grid, GridError> {
        let spec = GridSpec::new(n, level);
        let count = spec.point_count();
        if count > budget as u128 {
            return Err(GridError::BudgetExceeded {
                n,
                level,
                required: count as f64,
                budget,
            });
        }
        let count = count as usize;
        let dim = n + 1;
        let mut coords = vec![0f64; count * dim];
        for row in 0..spec.row_count() {
            spec.for_each_point_in_row(row, |idx, p| {
                let at = idx as usize * dim;
                coords[at..at + dim].copy_from_slice(p);
            });
        }
        Ok(Grid { spec, coords })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn level(&self) -> u32 {
        self.spec.level
    }

    pub fn covering_radius(&self) -> f64 {
        self.spec.covering_radius()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / (self.spec.n + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        let dim = self.spec.n + 1;
        &self.coords[idx * dim..(idx + 1) * dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.spec.n + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_grid_point_count() {
        // n = 1, level 3: 33 points per edge, corners deduplicated.
        let spec = GridSpec::new(1, 3);
        assert_eq!(spec.axis_points(), 33);
        assert_eq!(spec.point_count(), 128);
        let grid = Grid::build(1, 3, 1 << 20).unwrap();
        assert_eq!(grid.len(), 128);
    }

    #[test]
    fn all_points_are_unit() {
        let grid = Grid::build(2, 3, 1 << 20).unwrap();
        for p in grid.iter_points() {
            let norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn no_duplicate_points() {
        for (n, level) in [(1usize, 3u32), (1, 5), (2, 2), (2, 3), (3, 1)] {
            let grid = Grid::build(n, level, 1 << 24).unwrap();
            let mut keys: Vec<Vec<u64>> = grid
                .iter_points()
                .map(|p| p.iter().map(|v| v.to_bits()).collect())
                .collect();
            let before = keys.len();
            keys.sort();
            keys.dedup();
            assert_eq!(keys.len(), before, "duplicates at n={n} level={level}");
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = Grid::build(2, 3, 1 << 20).unwrap();
        let b = Grid::build(2, 3, 1 << 20).unwrap();
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn streaming_matches_materialized() {
        let grid = Grid::build(2, 2, 1 << 20).unwrap();
        let spec = grid.spec().clone();
        let mut seen = vec![false; grid.len()];
        for row in 0..spec.row_count() {
            spec.for_each_point_in_row(row, |idx, p| {
                assert_eq!(p, grid.point(idx as usize));
                assert!(!seen[idx as usize]);
                seen[idx as usize] = true;
            });
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn budget_refusal() {
        let err = Grid::build(2, 14, 1_000_000).unwrap_err();
        assert!(matches!(err, GridError::BudgetExceeded { .. }));
    }

    #[test]
    fn covering_radius_monte_carlo() {
        // Deterministic low-discrepancy directions are enough here; the
        // acceptance suite runs the full Monte-Carlo sweep.
        let spec = GridSpec::new(2, 4);
        let r = spec.covering_radius();
        let mut worst: f64 = 0.0;
        let golden = 0.618_033_988_749_894_9_f64;
        for k in 0..2000 {
            let u = (k as f64 * golden).fract() * 2.0 - 1.0;
            let phi = k as f64 * 2.399_963_229_728_653;
            let s = (1.0 - u * u).sqrt();
            let x = [s * phi.cos(), s * phi.sin(), u];
            worst = worst.max(spec.nearest_angular_upper_bound(&x, 2));
        }
        assert!(worst <= r, "covering radius violated: {worst} > {r}");
    }
}
