//! Atomic point clouds sampled from a grid, and Hausdorff distances.
//!
//! For a threshold atom `f_i >= t_j ||f_i||` the cloud keeps the grid points
//! satisfying the inequality with an extra tolerance of `sqrt(D) r` (r the
//! covering radius), i.e. `f_i(x) > (t_j + sqrt(D) r) ||f_i||`; dually for
//! `<=` atoms. The tolerance makes every cloud point an interior witness of
//! its atom while the covering radius keeps the cloud dense in the set.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::formula::{LaxAtom, LaxDir};
use crate::grid::Grid;
use crate::poly::PolyTuple;

/// Sorted, duplicate-free grid indices forming the sample of one atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointCloud {
    atom: LaxAtom,
    indices: Vec<u32>,
}

impl PointCloud {
    pub fn new(atom: LaxAtom, mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { atom, indices }
    }

    pub fn atom(&self) -> LaxAtom {
        self.atom
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: u32) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    /// Coordinates of the members, flat with the grid's stride.
    pub fn coords(&self, grid: &Grid) -> Vec<f64> {
        let dim = grid.n() + 1;
        let mut out = Vec::with_capacity(self.indices.len() * dim);
        for &i in &self.indices {
            out.extend_from_slice(grid.point(i as usize));
        }
        out
    }
}

/// Shifted comparison value for one atom: `t_j + tol` for lower bounds,
/// `t_j - tol` for upper bounds.
pub fn shifted_threshold(t: &[f64], tolerance: f64, atom: &LaxAtom) -> f64 {
    let tj = t[atom.threshold - 1];
    match atom.dir {
        LaxDir::Ge => tj + tolerance,
        LaxDir::Le => tj - tolerance,
    }
}

/// Strict test of one atom against a normalized value `f_i(x) / ||f_i||`.
#[inline]
pub fn atom_holds(dir: LaxDir, normalized_value: f64, shifted: f64) -> bool {
    match dir {
        LaxDir::Ge => normalized_value > shifted,
        LaxDir::Le => normalized_value < shifted,
    }
}

/// Samples the clouds of the requested atoms from a materialized grid. Each
/// needed polynomial is evaluated once per grid point and the value is
/// reused across all thresholds and directions.
pub fn sample_atomic_clouds(
    f: &PolyTuple,
    t: &[f64],
    grid: &Grid,
    needed: &[LaxAtom],
) -> BTreeMap<LaxAtom, PointCloud> {
    let tolerance = (f.max_degree() as f64).sqrt() * grid.covering_radius();
    let norms = f.member_norms();
    let mut polys: Vec<usize> = needed.iter().map(|a| a.poly).collect();
    polys.sort_unstable();
    polys.dedup();
    let shifted: Vec<f64> = needed
        .iter()
        .map(|a| shifted_threshold(t, tolerance, a))
        .collect();

    let chunk = 1usize << 14;
    let point_count = grid.len();
    let parts: Vec<Vec<Vec<u32>>> = (0..point_count.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(point_count);
            let mut values = vec![0f64; f.len()];
            let mut local: Vec<Vec<u32>> = vec![Vec::new(); needed.len()];
            for idx in lo..hi {
                let x = grid.point(idx);
                for &p in &polys {
                    values[p] = f.get(p).eval_unchecked(x) / norms[p];
                }
                for (slot, atom) in needed.iter().enumerate() {
                    if atom_holds(atom.dir, values[atom.poly], shifted[slot]) {
                        local[slot].push(idx as u32);
                    }
                }
            }
            local
        })
        .collect();

    let mut out = BTreeMap::new();
    for (slot, atom) in needed.iter().enumerate() {
        let mut indices = Vec::new();
        for part in &parts {
            indices.extend_from_slice(&part[slot]);
        }
        out.insert(*atom, PointCloud::new(*atom, indices));
    }
    out
}

/// Hausdorff distance between finite point sets (flat coordinates, stride
/// `dim`). Zero when both are empty, infinite when exactly one is.
pub fn hausdorff(a: &[f64], b: &[f64], dim: usize) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        (false, false) => directed_hausdorff(a, b, dim).max(directed_hausdorff(b, a, dim)),
    }
}

/// One-sided distance: the largest distance from a point of `from` to the
/// set `to`.
pub fn directed_hausdorff(from: &[f64], to: &[f64], dim: usize) -> f64 {
    assert!(!from.is_empty() && !to.is_empty());
    from.par_chunks(dim)
        .map(|p| {
            to.chunks_exact(dim)
                .map(|q| {
                    p.iter()
                        .zip(q)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    fn coordinate_tuple() -> PolyTuple {
        // (X0, X1) on S^1.
        PolyTuple::new(vec![
            Polynomial::scaled_variable(2, 0, 1.0),
            Polynomial::scaled_variable(2, 1, 1.0),
        ])
        .unwrap()
    }

    fn ge_atom(poly: usize, threshold: usize) -> LaxAtom {
        LaxAtom {
            poly,
            threshold,
            dir: LaxDir::Ge,
        }
    }

    fn le_atom(poly: usize, threshold: usize) -> LaxAtom {
        LaxAtom {
            poly,
            threshold,
            dir: LaxDir::Le,
        }
    }

    #[test]
    fn cloud_follows_the_tolerance_rule() {
        let f = coordinate_tuple();
        let grid = Grid::build(1, 8, 1 << 20).unwrap();
        let t = [1.0 / 45.0];
        let clouds = sample_atomic_clouds(&f, &t, &grid, &[ge_atom(1, 1)]);
        let cloud = &clouds[&ge_atom(1, 1)];
        let cut = 1.0 / 45.0 + 2f64.powi(-8);
        let expected: Vec<u32> = (0..grid.len() as u32)
            .filter(|&i| grid.point(i as usize)[1] > cut)
            .collect();
        assert_eq!(cloud.indices(), expected.as_slice());
        assert!(!cloud.is_empty());
    }

    #[test]
    fn unreachable_threshold_gives_empty_cloud() {
        let f = coordinate_tuple();
        let grid = Grid::build(1, 4, 1 << 20).unwrap();
        // max of x1 on the circle is 1.
        let t = [1.5];
        let clouds = sample_atomic_clouds(&f, &t, &grid, &[ge_atom(1, 1)]);
        assert!(clouds[&ge_atom(1, 1)].is_empty());
    }

    #[test]
    fn opposite_directions_are_disjoint() {
        let f = coordinate_tuple();
        let grid = Grid::build(1, 6, 1 << 20).unwrap();
        let t = [0.2];
        let needed = [ge_atom(1, 1), le_atom(1, 1)];
        let clouds = sample_atomic_clouds(&f, &t, &grid, &needed);
        let ge = &clouds[&needed[0]];
        let le = &clouds[&needed[1]];
        assert!(ge.indices().iter().all(|i| !le.contains(*i)));
        assert!(!ge.is_empty() && !le.is_empty());
    }

    #[test]
    fn clouds_are_sound_for_their_atoms() {
        let f = coordinate_tuple();
        let grid = Grid::build(1, 7, 1 << 20).unwrap();
        let t = [0.1, -0.3];
        let needed = [ge_atom(0, 1), le_atom(0, 2), ge_atom(1, 2)];
        let clouds = sample_atomic_clouds(&f, &t, &grid, &needed);
        for (atom, cloud) in &clouds {
            for &i in cloud.indices() {
                let v = grid.point(i as usize)[atom.poly];
                let tj = t[atom.threshold - 1];
                match atom.dir {
                    LaxDir::Ge => assert!(v > tj),
                    LaxDir::Le => assert!(v < tj),
                }
            }
        }
    }

    #[test]
    fn ge_clouds_shrink_as_thresholds_grow() {
        let f = coordinate_tuple();
        let grid = Grid::build(1, 6, 1 << 20).unwrap();
        let t = [0.05, 0.3, 0.6];
        let needed = [ge_atom(1, 1), ge_atom(1, 2), ge_atom(1, 3)];
        let clouds = sample_atomic_clouds(&f, &t, &grid, &needed);
        for w in needed.windows(2) {
            let big = &clouds[&w[0]];
            let small = &clouds[&w[1]];
            assert!(small.indices().iter().all(|i| big.contains(*i)));
        }
    }

    #[test]
    fn hausdorff_conventions() {
        assert_eq!(hausdorff(&[], &[], 2), 0.0);
        assert_eq!(hausdorff(&[], &[1.0, 2.0], 2), f64::INFINITY);
        assert_eq!(hausdorff(&[0.0], &[3.0], 1), 3.0);
        assert_eq!(hausdorff(&[1.0, 1.0], &[1.0, 1.0], 2), 0.0);
        // Symmetry and the max of the two directed halves.
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [0.0, 0.5];
        assert_eq!(hausdorff(&a, &b, 2), hausdorff(&b, &a, 2));
        assert!((hausdorff(&a, &b, 2) - 1.25f64.sqrt()).abs() <= 1e-15);
    }
}
