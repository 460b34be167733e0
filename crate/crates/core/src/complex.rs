//! Simplicial complexes over indexed point clouds: minimum enclosing balls,
//! truncated nerve (Cech) complexes, and Boolean combinations of nerve
//! complexes over a shared vertex set.
//!
//! A candidate simplex is included exactly when the smallest ball enclosing
//! its vertices has radius strictly below the nerve radius; that is
//! equivalent to its epsilon-balls having a common point. Enclosing-ball
//! radii only grow under adding vertices, so enumeration can prune entire
//! clique subtrees and downward closure holds by construction.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{LaxAtom, LaxFormula};
use crate::sampling::PointCloud;

#[derive(Debug, Error, PartialEq)]
pub enum ComplexError {
    #[error("minimum enclosing ball of an empty point set")]
    EmptyPointSet,
    #[error("no cloud supplied for atom {0:?}")]
    MissingCloud(LaxAtom),
    #[error("formula has {got} distinct atoms, the combiner supports {max}")]
    TooManyAtoms { got: usize, max: usize },
}

/// Simplices grouped by dimension; each simplex is a sorted vertex tuple and
/// each dimension's list is lexicographically sorted and duplicate free.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimplicialComplex {
    by_dim: Vec<SimplexSet>,
}

/// Sorted flat storage of the simplices of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSet {
    arity: usize,
    flat: Vec<u32>,
}

impl SimplexSet {
    fn new(arity: usize) -> Self {
        Self {
            arity,
            flat: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        if self.arity == 0 {
            0
        } else {
            self.flat.len() / self.arity
        }
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.flat[i * self.arity..(i + 1) * self.arity]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.flat.chunks_exact(self.arity.max(1))
    }

    pub fn position(&self, simplex: &[u32]) -> Option<usize> {
        debug_assert_eq!(simplex.len(), self.arity);
        let mut lo = 0usize;
        let mut hi = self.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.get(mid).cmp(simplex) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    fn sort_dedup(&mut self) {
        if self.arity == 0 || self.flat.is_empty() {
            return;
        }
        let mut tuples: Vec<&[u32]> = self.flat.chunks_exact(self.arity).collect();
        tuples.sort();
        tuples.dedup();
        let mut flat = Vec::with_capacity(tuples.len() * self.arity);
        for t in tuples {
            flat.extend_from_slice(t);
        }
        self.flat = flat;
    }
}

impl SimplicialComplex {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds from an iterator of simplices (vertex tuples in any order),
    /// closing downward so every face of a given simplex is present.
    pub fn from_simplices<I>(simplices: I) -> Self
    where
        I: IntoIterator<Item = Vec<u32>>,
    {
        let mut sets: Vec<SimplexSet> = Vec::new();
        let mut stack: Vec<Vec<u32>> = simplices.into_iter().collect();
        for s in &mut stack {
            s.sort_unstable();
            s.dedup();
        }
        while let Some(s) = stack.pop() {
            assert!(!s.is_empty(), "empty simplex");
            let dim = s.len() - 1;
            while sets.len() <= dim {
                let arity = sets.len() + 1;
                sets.push(SimplexSet::new(arity));
            }
            if dim > 0 {
                for omit in 0..s.len() {
                    let mut face = Vec::with_capacity(s.len() - 1);
                    face.extend(
                        s.iter()
                            .enumerate()
                            .filter(|(i, _)| *i != omit)
                            .map(|(_, v)| *v),
                    );
                    stack.push(face);
                }
            }
            sets[dim].flat.extend_from_slice(&s);
        }
        for set in &mut sets {
            set.sort_dedup();
        }
        let mut c = SimplicialComplex { by_dim: sets };
        c.trim();
        c
    }

    fn trim(&mut self) {
        while self.by_dim.last().is_some_and(SimplexSet::is_empty) {
            self.by_dim.pop();
        }
    }

    /// Largest dimension with any simplex, or None when empty.
    pub fn top_dimension(&self) -> Option<usize> {
        if self.by_dim.is_empty() {
            None
        } else {
            Some(self.by_dim.len() - 1)
        }
    }

    pub fn simplices(&self, dim: usize) -> Option<&SimplexSet> {
        self.by_dim.get(dim)
    }

    pub fn num_simplices(&self, dim: usize) -> usize {
        self.by_dim.get(dim).map_or(0, SimplexSet::len)
    }

    pub fn total_simplices(&self) -> usize {
        self.by_dim.iter().map(SimplexSet::len).sum()
    }

    pub fn contains(&self, simplex: &[u32]) -> bool {
        let dim = simplex.len() - 1;
        self.by_dim
            .get(dim)
            .is_some_and(|s| s.position(simplex).is_some())
    }

    /// Every face of every simplex is present.
    pub fn is_downward_closed(&self) -> bool {
        for dim in 1..self.by_dim.len() {
            for s in self.by_dim[dim].iter() {
                for omit in 0..s.len() {
                    let face: Vec<u32> = s
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != omit)
                        .map(|(_, v)| *v)
                        .collect();
                    if !self.contains(&face) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all: Vec<Vec<u32>> = Vec::new();
        for c in [self, other] {
            for set in &c.by_dim {
                for s in set.iter() {
                    all.push(s.to_vec());
                }
            }
        }
        Self::from_simplices(all)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let mut kept: Vec<Vec<u32>> = Vec::new();
        for set in &self.by_dim {
            for s in set.iter() {
                if other.contains(s) {
                    kept.push(s.to_vec());
                }
            }
        }
        Self::from_simplices(kept)
    }

    /// Flat text export: one simplex per line, sorted vertex ids.
    pub fn to_flat_text(&self) -> String {
        let mut out = String::new();
        for set in &self.by_dim {
            for s in set.iter() {
                let mut first = true;
                for v in s {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    let _ = write!(out, "{v}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Radius of the smallest ball containing all points. Points live in R^dim
/// with coordinates flat in `points` (length `count * dim`).
///
/// All support subsets of affinely independent points are enumerated and the
/// smallest enclosing circumball is kept, which is exact up to the linear
/// solves; the intended inputs have at most `dim + 1` points.
pub fn meb_radius(points: &[f64], dim: usize) -> Result<f64, ComplexError> {
    if points.is_empty() || dim == 0 {
        return Err(ComplexError::EmptyPointSet);
    }
    let count = points.len() / dim;
    debug_assert_eq!(points.len(), count * dim);
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];
    if count == 1 {
        return Ok(0.0);
    }
    if count == 2 {
        return Ok(dist(pt(0), pt(1)) / 2.0);
    }
    let scale = {
        let mut s = 0f64;
        for i in 0..count {
            for j in (i + 1)..count {
                s = s.max(dist2(pt(i), pt(j)));
            }
        }
        s.sqrt()
    };
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut best = f64::INFINITY;
    let mut center = vec![0f64; dim];
    // Support sets of size >= 2; singleton supports only matter when all
    // points coincide, which the scale check above already handled.
    for mask in 1u32..(1 << count) {
        let size = mask.count_ones() as usize;
        if size < 2 || size > dim + 1 {
            continue;
        }
        let support: Vec<usize> = (0..count).filter(|i| mask >> i & 1 == 1).collect();
        let Some(r) = circumball(points, dim, &support, &mut center) else {
            continue;
        };
        if r >= best {
            continue;
        }
        let tol = 1e-12 * scale;
        let ok = (0..count).all(|i| {
            let d2: f64 = pt(i)
                .iter()
                .zip(&center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            d2.sqrt() <= r + tol
        });
        if ok {
            best = r;
        }
    }
    debug_assert!(best.is_finite(), "some support set must enclose");
    Ok(best)
}

/// Center and radius of the sphere through the support points with center in
/// their affine hull; None when the support is (numerically) affinely
/// dependent.
fn circumball(points: &[f64], dim: usize, support: &[usize], center: &mut [f64]) -> Option<f64> {
    let k = support.len() - 1;
    debug_assert!(k <= 8);
    let p0 = &points[support[0] * dim..support[0] * dim + dim];
    // Gram system: 2 v_i . (c - p0) = |v_i|^2 with c - p0 in span(v_i).
    let mut g = [[0f64; 8]; 8];
    let mut b = [0f64; 8];
    let vs: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let p = &points[support[i + 1] * dim..support[i + 1] * dim + dim];
            p.iter().zip(p0).map(|(a, c)| a - c).collect()
        })
        .collect();
    let mut scale = 0f64;
    for i in 0..k {
        for j in 0..k {
            g[i][j] = 2.0 * dot(&vs[i], &vs[j]);
        }
        b[i] = dot(&vs[i], &vs[i]);
        scale = scale.max(g[i][i].abs());
    }
    // Gaussian elimination with partial pivoting.
    let mut lambda = [0f64; 8];
    for col in 0..k {
        let (pivot_row, pivot) = (col..k)
            .map(|r| (r, g[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if pivot <= 1e-12 * scale.max(1e-300) {
            return None;
        }
        g.swap(pivot_row, col);
        b.swap(pivot_row, col);
        for r in (col + 1)..k {
            let f = g[r][col] / g[col][col];
            for c in col..k {
                g[r][c] -= f * g[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..k).rev() {
        let mut s = b[col];
        for c in (col + 1)..k {
            s -= g[col][c] * lambda[c];
        }
        lambda[col] = s / g[col][col];
    }
    center.copy_from_slice(p0);
    for i in 0..k {
        for (c, vi) in center.iter_mut().zip(&vs[i]) {
            *c += lambda[i] * vi;
        }
    }
    let r2: f64 = center
        .iter()
        .zip(p0)
        .map(|(c, a)| (c - a) * (c - a))
        .sum();
    Some(r2.sqrt())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Vertices with their coordinates, the raw material of nerve construction.
/// Ids are cloud/grid indices; coordinates are flat with stride `dim`.
struct VertexSoup<'a> {
    ids: &'a [u32],
    coords: &'a [f64],
    dim: usize,
}

impl VertexSoup<'_> {
    fn coord(&self, local: usize) -> &[f64] {
        &self.coords[local * self.dim..(local + 1) * self.dim]
    }
}

/// Proximity graph: neighbors with strictly larger local index, at distance
/// below `2 eps` (the necessary pair condition for a shared ball).
fn forward_neighbors(soup: &VertexSoup, eps: f64) -> Vec<Vec<u32>> {
    let n = soup.ids.len();
    let cell = 2.0 * eps;
    let mut hash: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / cell).floor() as i64).collect() };
    for local in 0..n {
        hash.entry(key(soup.coord(local)))
            .or_default()
            .push(local as u32);
    }
    let mut out = vec![Vec::new(); n];
    let dim = soup.dim;
    let mut offset = vec![-1i64; dim];
    for (local, neighbors) in out.iter_mut().enumerate() {
        let p = soup.coord(local);
        let base = key(p);
        offset.fill(-1);
        loop {
            let probe: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(bucket) = hash.get(&probe) {
                for &other in bucket {
                    if other as usize <= local {
                        continue;
                    }
                    if dist(p, soup.coord(other as usize)) < cell {
                        neighbors.push(other);
                    }
                }
            }
            let mut i = 0;
            loop {
                if i == dim {
                    break;
                }
                if offset[i] < 1 {
                    offset[i] += 1;
                    break;
                }
                offset[i] = -1;
                i += 1;
            }
            if i == dim {
                break;
            }
        }
        neighbors.sort_unstable();
    }
    out
}

struct CliqueWalk<'a, F> {
    soup: &'a VertexSoup<'a>,
    neighbors: &'a [Vec<u32>],
    eps: f64,
    max_card: usize,
    accept: F,
}

impl<F: FnMut(&[u32]) -> bool> CliqueWalk<'_, F> {
    fn extend(
        &mut self,
        simplex: &mut Vec<u32>,
        coords: &mut Vec<f64>,
        cands: &[u32],
        out: &mut [Vec<Vec<u32>>],
    ) {
        for (pos, &v) in cands.iter().enumerate() {
            simplex.push(v);
            coords.extend_from_slice(self.soup.coord(v as usize));
            let card = simplex.len();
            let radius_ok = card <= 2
                || meb_radius(coords, self.soup.dim).expect("nonempty") < self.eps;
            if radius_ok && (self.accept)(simplex) {
                out[card - 1].push(simplex.clone());
                if card < self.max_card {
                    let next: Vec<u32> = cands[pos + 1..]
                        .iter()
                        .copied()
                        .filter(|w| self.neighbors[v as usize].binary_search(w).is_ok())
                        .collect();
                    self.extend(simplex, coords, &next, out);
                }
            }
            simplex.pop();
            coords.truncate(coords.len() - self.soup.dim);
        }
    }
}

/// Shared clique walk: emits every accepted simplex of cardinality up to
/// `max_card`, in lexicographic order per cardinality. `accept` sees local
/// vertex indices and must be monotone (if it rejects a simplex it rejects
/// all cofaces), which lets rejection prune the subtree.
fn enumerate_cliques<F>(
    soup: &VertexSoup,
    eps: f64,
    max_card: usize,
    mut accept: F,
) -> Vec<Vec<Vec<u32>>>
where
    F: FnMut(&[u32]) -> bool,
{
    let neighbors = forward_neighbors(soup, eps);
    let mut by_card: Vec<Vec<Vec<u32>>> = vec![Vec::new(); max_card];
    let mut simplex: Vec<u32> = Vec::with_capacity(max_card);
    let mut coords: Vec<f64> = Vec::with_capacity(max_card * soup.dim);
    let mut walk = CliqueWalk {
        soup,
        neighbors: &neighbors,
        eps,
        max_card,
        accept: &mut accept,
    };
    for local in 0..soup.ids.len() as u32 {
        simplex.push(local);
        coords.extend_from_slice(soup.coord(local as usize));
        if (walk.accept)(&simplex) {
            by_card[0].push(simplex.clone());
            if walk.max_card > 1 {
                let cands = walk.neighbors[local as usize].clone();
                walk.extend(&mut simplex, &mut coords, &cands, &mut by_card);
            }
        }
        simplex.pop();
        coords.clear();
    }
    by_card
}

fn complex_from_local(by_card: Vec<Vec<Vec<u32>>>, ids: &[u32]) -> SimplicialComplex {
    let mut sets: Vec<SimplexSet> = Vec::new();
    for (card_minus_1, simplices) in by_card.into_iter().enumerate() {
        let arity = card_minus_1 + 1;
        let mut set = SimplexSet::new(arity);
        for s in simplices {
            let mut mapped: Vec<u32> = s.iter().map(|&l| ids[l as usize]).collect();
            mapped.sort_unstable();
            set.flat.extend_from_slice(&mapped);
        }
        set.sort_dedup();
        sets.push(set);
    }
    let mut c = SimplicialComplex { by_dim: sets };
    c.trim();
    c
}

/// Truncated nerve complex of one cloud: the simplices are the vertex sets
/// of cardinality at most `max_card` whose enclosing-ball radius is below
/// `eps`. `coords` holds the cloud's coordinates flat with stride `dim`, in
/// the order of `ids`.
pub fn cech_complex(
    ids: &[u32],
    coords: &[f64],
    dim: usize,
    eps: f64,
    max_card: usize,
) -> SimplicialComplex {
    assert!(eps > 0.0, "nerve radius must be positive");
    assert!(max_card >= 1);
    let soup = VertexSoup { ids, coords, dim };
    let by_card = enumerate_cliques(&soup, eps, max_card, |_| true);
    complex_from_local(by_card, ids)
}

/// Most distinct atoms the mask-based combiner supports.
pub const MAX_COMBINE_ATOMS: usize = 128;

/// The Boolean combination of the per-atom truncated nerve complexes: unions
/// for disjunctions, intersections for conjunctions, all over the shared
/// grid vertex set. A simplex is included exactly when its enclosing-ball
/// radius is below `eps` and the formula holds under the assignment
/// "atom holds iff the simplex is contained in that atom's cloud".
pub fn combine(
    phibar: &LaxFormula,
    clouds: &BTreeMap<LaxAtom, PointCloud>,
    grid: &crate::grid::Grid,
    eps: f64,
    max_card: usize,
) -> Result<SimplicialComplex, ComplexError> {
    let atoms = phibar.atoms();
    for atom in &atoms {
        if !clouds.contains_key(atom) {
            return Err(ComplexError::MissingCloud(*atom));
        }
    }
    if atoms.len() > MAX_COMBINE_ATOMS {
        return Err(ComplexError::TooManyAtoms {
            got: atoms.len(),
            max: MAX_COMBINE_ATOMS,
        });
    }
    // Per-vertex membership masks over the union of the clouds.
    let mut masks: BTreeMap<u32, u128> = BTreeMap::new();
    for (bit, atom) in atoms.iter().enumerate() {
        for &v in clouds[atom].indices() {
            *masks.entry(v).or_insert(0) |= 1u128 << bit;
        }
    }
    let dim = grid.n() + 1;
    let mut ids = Vec::with_capacity(masks.len());
    let mut vertex_masks = Vec::with_capacity(masks.len());
    let mut coords = Vec::with_capacity(masks.len() * dim);
    for (&v, &mask) in &masks {
        ids.push(v);
        vertex_masks.push(mask);
        coords.extend_from_slice(grid.point(v as usize));
    }
    Ok(combine_from_masks(
        phibar,
        &atoms,
        &ids,
        &vertex_masks,
        &coords,
        dim,
        eps,
        max_card,
    ))
}

/// Mask-level entry point for callers that evaluated cloud membership while
/// streaming a grid too large to materialize. `masks[i]` has bit b set when
/// vertex i belongs to the cloud of `atoms[b]`.
#[allow(clippy::too_many_arguments)]
pub fn combine_from_masks(
    phibar: &LaxFormula,
    atoms: &[LaxAtom],
    ids: &[u32],
    masks: &[u128],
    coords: &[f64],
    dim: usize,
    eps: f64,
    max_card: usize,
) -> SimplicialComplex {
    assert!(eps > 0.0, "nerve radius must be positive");
    assert_eq!(ids.len(), masks.len());
    let bit_of: BTreeMap<LaxAtom, usize> =
        atoms.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let satisfies = |mask: u128| -> bool {
        phibar
            .eval_with(&mut |a: &LaxAtom| Some(mask >> bit_of[a] & 1 == 1))
            .expect("all atoms assigned")
    };
    // The formula is monotone, so only vertices whose own mask satisfies it
    // can appear in any satisfying simplex.
    let mut sat_ids = Vec::new();
    let mut sat_masks = Vec::new();
    let mut sat_coords = Vec::new();
    for (i, &mask) in masks.iter().enumerate() {
        if satisfies(mask) {
            sat_ids.push(ids[i]);
            sat_masks.push(mask);
            sat_coords.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
        }
    }
    let soup = VertexSoup {
        ids: &sat_ids,
        coords: &sat_coords,
        dim,
    };
    let by_card = enumerate_cliques(&soup, eps, max_card, |simplex: &[u32]| {
        let mask = simplex
            .iter()
            .fold(u128::MAX, |acc, &l| acc & sat_masks[l as usize]);
        satisfies(mask)
    });
    complex_from_local(by_card, &sat_ids)
}
