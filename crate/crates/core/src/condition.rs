//! Pointwise and global condition numbers of homogeneous polynomial tuples.
//!
//! The pointwise number blends how small the normalized values are with how
//! close the tangent Jacobian is to rank deficiency, maximized over all
//! subtuples. The global estimator sweeps covering grids of increasing
//! level, keeping the running maximum, and stops once the grid resolves the
//! Lipschitz variation of the reciprocal to within one percent, which pins
//! the estimate into `[0.99 kappa_bar, kappa_bar]`. A cheap local ascent
//! from each sweep's argmax hunts for points certifying that the condition
//! number exceeds the cap, so hopeless inputs are rejected without the
//! astronomically fine grids their measurement would need.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridSpec;
use crate::poly::{CompiledPoly, PolyTuple};

#[derive(Debug, Error, PartialEq)]
pub enum ConditionError {
    #[error(
        "estimation at level {level_needed} for S^{n} needs {requires:.3e} grid points, over the budget of {budget}; the condition estimate did not converge within budget"
    )]
    BudgetExceeded {
        n: usize,
        level_needed: u32,
        requires: f64,
        budget: u64,
    },
    #[error("certified estimation rejects tuples with more than {max} polynomials, got {q}")]
    TooManyPolynomials { q: usize, max: usize },
    #[error("condition numbers are defined for homogeneous tuples")]
    NotHomogeneous,
}

/// Outcome of the global estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEstimate {
    pub verdict: Verdict,
    pub grid_level_used: u32,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    /// `0.99 kappa_bar <= K <= kappa_bar`.
    Finite(f64),
    /// A point with condition above the cap was certified, or the sweep
    /// measured one directly.
    IllConditioned { cap: f64 },
}

impl ConditionEstimate {
    pub fn finite(&self) -> Option<f64> {
        match self.verdict {
            Verdict::Finite(k) => Some(k),
            Verdict::IllConditioned { .. } => None,
        }
    }
}

const RANK_RELATIVE_THRESHOLD: f64 = 1e-10;
const MAX_FULL_ENUMERATION_Q: usize = 12;
const MAX_CERTIFIED_Q: usize = 20;

/// Default number of grid points the sweep may visit per level (streamed,
/// not materialized).
pub const DEFAULT_ESTIMATE_BUDGET: u64 = 400_000_000;

/// Precomputed per-polynomial data for pointwise condition evaluation.
pub struct PreparedTuple {
    polys: Vec<CompiledPoly>,
    norms: Vec<f64>,
    inv_sqrt_deg: Vec<f64>,
    degree_max: u32,
    dim: usize,
}

impl PreparedTuple {
    pub fn new(f: &PolyTuple) -> Result<Self, ConditionError> {
        if !f.is_homogeneous() {
            return Err(ConditionError::NotHomogeneous);
        }
        Ok(Self {
            polys: f.polys().iter().map(CompiledPoly::new).collect(),
            norms: f.member_norms(),
            inv_sqrt_deg: f
                .degrees()
                .iter()
                .map(|&d| 1.0 / (d.max(1) as f64).sqrt())
                .collect(),
            degree_max: f.max_degree(),
            dim: f.num_vars(),
        })
    }

    fn q(&self) -> usize {
        self.polys.len()
    }

    /// Values and degree-scaled tangent gradients of every member at `x`.
    fn values_and_rows(&self, x: &[f64], values: &mut [f64], rows: &mut [f64]) {
        let dim = self.dim;
        let mut grad = [0f64; 16];
        let grad = &mut grad[..dim];
        for (i, poly) in self.polys.iter().enumerate() {
            values[i] = poly.eval(x);
            poly.gradient_into(x, grad);
            let dot: f64 = grad.iter().zip(x).map(|(g, xi)| g * xi).sum();
            let scale = self.inv_sqrt_deg[i];
            for (slot, (g, xi)) in rows[i * dim..(i + 1) * dim]
                .iter_mut()
                .zip(grad.iter().zip(x))
            {
                *slot = (g - dot * xi) * scale;
            }
        }
    }
}

/// Condition number of the tuple at a unit point: the tuple norm times the
/// operator norm of the pseudo-inverted tangent Jacobian composed with
/// `diag(sqrt(d_i))`; infinite when the tangent Jacobian is not surjective.
pub fn mu(f: &PolyTuple, x: &[f64]) -> f64 {
    let pre = PreparedTuple::new(f).expect("mu needs a homogeneous tuple");
    let q = pre.q();
    let mut values = vec![0f64; q];
    let mut rows = vec![0f64; q * pre.dim];
    pre.values_and_rows(x, &mut values, &mut rows);
    let idx: Vec<usize> = (0..q).collect();
    let norm: f64 = pre.norms.iter().map(|n| n * n).sum::<f64>().sqrt();
    let sigma = smallest_singular_value(&rows, pre.dim, &idx);
    if sigma <= 0.0 {
        f64::INFINITY
    } else {
        norm / sigma
    }
}

/// Smallest singular value of the selected rows, zero when rank deficient
/// under the relative threshold.
fn smallest_singular_value(rows: &[f64], dim: usize, selected: &[usize]) -> f64 {
    let k = selected.len();
    if k > dim - 1 {
        // More rows than the tangent space dimension: never surjective.
        return 0.0;
    }
    if k == 1 {
        let row = &rows[selected[0] * dim..(selected[0] + 1) * dim];
        return row.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    // Eigenvalues of the k x k Gram matrix.
    let gram = DMatrix::from_fn(k, k, |a, b| {
        let ra = &rows[selected[a] * dim..(selected[a] + 1) * dim];
        let rb = &rows[selected[b] * dim..(selected[b] + 1) * dim];
        ra.iter().zip(rb).map(|(u, v)| u * v).sum::<f64>()
    });
    let eigen = gram.symmetric_eigenvalues();
    let largest = eigen.iter().fold(0f64, |a, &b| a.max(b.max(0.0)));
    let smallest = eigen.iter().fold(f64::INFINITY, |a, &b| a.min(b.max(0.0)));
    let sigma_max = largest.sqrt();
    let sigma_min = smallest.sqrt();
    if sigma_min <= RANK_RELATIVE_THRESHOLD * sigma_max {
        0.0
    } else {
        sigma_min
    }
}

/// Pointwise condition number: the maximum over nonempty subtuples L of
/// `( ||f^L(x)||^2 / ||f^L||^2 + mu(f^L, x)^-2 )^(-1/2)`.
pub fn kappa_point(f: &PolyTuple, x: &[f64]) -> f64 {
    let pre = PreparedTuple::new(f).expect("kappa needs a homogeneous tuple");
    let mut ws = KappaWorkspace::new(&pre);
    kappa_point_prepared(&pre, x, &mut ws)
}

/// Scratch buffers for repeated pointwise evaluations.
pub struct KappaWorkspace {
    values: Vec<f64>,
    rows: Vec<f64>,
    selected: Vec<usize>,
}

impl KappaWorkspace {
    pub fn new(pre: &PreparedTuple) -> Self {
        Self {
            values: vec![0.0; pre.q()],
            rows: vec![0.0; pre.q() * pre.dim],
            selected: Vec::with_capacity(pre.q()),
        }
    }
}

pub fn kappa_point_prepared(pre: &PreparedTuple, x: &[f64], ws: &mut KappaWorkspace) -> f64 {
    pre.values_and_rows(x, &mut ws.values, &mut ws.rows);
    let q = pre.q();
    if q == 1 {
        return kappa_of_subset(pre, ws, &[0]);
    }
    if q <= MAX_FULL_ENUMERATION_Q {
        let mut best = 0f64;
        for mask in 1u32..(1 << q) {
            ws.selected.clear();
            ws.selected.extend((0..q).filter(|i| mask >> i & 1 == 1));
            let sel = std::mem::take(&mut ws.selected);
            let k = kappa_of_subset(pre, ws, &sel);
            ws.selected = sel;
            best = best.max(k);
            if best.is_infinite() {
                return best;
            }
        }
        return best;
    }
    // Large q: singletons and the full tuple always, then subsets of the
    // polynomials whose normalized values are small enough to matter for
    // the running maximum.
    let mut best = 0f64;
    for i in 0..q {
        best = best.max(kappa_of_subset(pre, ws, &[i]));
    }
    let all: Vec<usize> = (0..q).collect();
    best = best.max(kappa_of_subset(pre, ws, &all));
    let candidates: Vec<usize> = (0..q)
        .filter(|&i| ws.values[i].abs() / pre.norms[i] <= 1.0 / best.max(1.0))
        .collect();
    let c = candidates.len();
    if c <= MAX_FULL_ENUMERATION_Q {
        for mask in 1u32..(1 << c) {
            if mask.count_ones() < 2 {
                continue;
            }
            ws.selected.clear();
            ws.selected
                .extend((0..c).filter(|i| mask >> i & 1 == 1).map(|i| candidates[i]));
            let sel = std::mem::take(&mut ws.selected);
            let k = kappa_of_subset(pre, ws, &sel);
            ws.selected = sel;
            best = best.max(k);
            if best.is_infinite() {
                return best;
            }
        }
    }
    best
}

fn kappa_of_subset(pre: &PreparedTuple, ws: &KappaWorkspace, selected: &[usize]) -> f64 {
    let mut value2 = 0f64;
    let mut norm2 = 0f64;
    for &i in selected {
        value2 += ws.values[i] * ws.values[i];
        norm2 += pre.norms[i] * pre.norms[i];
    }
    let sigma = smallest_singular_value(&ws.rows, pre.dim, selected);
    let denom = value2 + sigma * sigma;
    if denom == 0.0 {
        return f64::INFINITY;
    }
    (norm2 / denom).sqrt()
}

/// Global estimation: sweeps grids of increasing level and returns either a
/// two-sided estimate `K` with `0.99 kappa_bar <= K <= kappa_bar` or the
/// verdict that the condition number exceeds the cap.
pub fn estimate_kappa(f: &PolyTuple, cap: f64) -> Result<ConditionEstimate, ConditionError> {
    estimate_kappa_with_budget(f, cap, DEFAULT_ESTIMATE_BUDGET)
}

pub fn estimate_kappa_with_budget(
    f: &PolyTuple,
    cap: f64,
    budget: u64,
) -> Result<ConditionEstimate, ConditionError> {
    assert!(cap > 1.0, "cap must exceed 1");
    if f.len() > MAX_CERTIFIED_Q {
        return Err(ConditionError::TooManyPolynomials {
            q: f.len(),
            max: MAX_CERTIFIED_Q,
        });
    }
    let pre = PreparedTuple::new(f)?;
    let n = pre.dim - 1;
    let sqrt_d = (pre.degree_max as f64).sqrt();
    let mut running_max = 0f64;
    let mut evaluations = 0u64;
    for level in 0.. {
        let spec = GridSpec::new(n, level);
        if spec.point_count() > budget as u128 {
            return Err(ConditionError::BudgetExceeded {
                n,
                level_needed: level,
                requires: spec.point_count() as f64,
                budget,
            });
        }
        let (level_max, argmax) = sweep_level(&pre, &spec);
        evaluations += spec.point_count() as u64;
        running_max = running_max.max(level_max);
        if running_max > cap || running_max.is_infinite() {
            return Ok(ConditionEstimate {
                verdict: Verdict::IllConditioned { cap },
                grid_level_used: level,
                evaluations,
            });
        }
        // Local ascent from the sweep's argmax: a single point with
        // condition above the cap certifies ill-conditioning.
        let mut ws = KappaWorkspace::new(&pre);
        if ascends_past_cap(
            &pre,
            &argmax,
            spec.covering_radius(),
            cap,
            &mut ws,
            &mut evaluations,
        ) {
            return Ok(ConditionEstimate {
                verdict: Verdict::IllConditioned { cap },
                grid_level_used: level,
                evaluations,
            });
        }
        // Stop once the grid resolves the variation of 1/kappa to within
        // one percent of the measured maximum.
        if 2.0 * sqrt_d * spec.covering_radius() * running_max <= 0.005 {
            return Ok(ConditionEstimate {
                verdict: Verdict::Finite(running_max),
                grid_level_used: level,
                evaluations,
            });
        }
    }
    unreachable!("the level loop returns");
}

/// Maximum of kappa over the grid with a deterministic argmax (ties resolve
/// to the smallest point index).
fn sweep_level(pre: &PreparedTuple, spec: &GridSpec) -> (f64, Vec<f64>) {
    let rows = spec.row_count();
    let dim = pre.dim;
    let identity = || (f64::NEG_INFINITY, u64::MAX, vec![0f64; dim]);
    let merge = |a: (f64, u64, Vec<f64>), b: (f64, u64, Vec<f64>)| {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let (max, _, argmax) = (0..rows)
        .into_par_iter()
        .fold(
            || (identity(), KappaWorkspace::new(pre)),
            |(mut best, mut ws), row| {
                spec.for_each_point_in_row(row, |idx, x| {
                    let k = kappa_point_prepared(pre, x, &mut ws);
                    if k > best.0 || (k == best.0 && idx < best.1) {
                        best.0 = k;
                        best.1 = idx;
                        best.2.copy_from_slice(x);
                    }
                });
                (best, ws)
            },
        )
        .map(|(best, _)| best)
        .reduce(identity, merge);
    (max, argmax)
}

/// Pattern ascent on kappa from `start` at the given scale. Returns true
/// when a probe exceeds the cap; gives up once the local scale resolves the
/// local maximum or shrinks away.
fn ascends_past_cap(
    pre: &PreparedTuple,
    start: &[f64],
    start_scale: f64,
    cap: f64,
    ws: &mut KappaWorkspace,
    evaluations: &mut u64,
) -> bool {
    let dim = pre.dim;
    let sqrt_d = (pre.degree_max as f64).sqrt();
    let mut x = start.to_vec();
    let mut scale = start_scale;
    let mut current = kappa_point_prepared(pre, &x, ws);
    *evaluations += 1;
    let mut probe = vec![0f64; dim];
    for _ in 0..600 {
        if current > cap || current.is_infinite() {
            return true;
        }
        if scale < 1e-14 || 2.0 * sqrt_d * scale * current <= 0.0025 {
            return false;
        }
        let basis = tangent_basis(&x);
        let mut best = current;
        let mut best_point: Option<Vec<f64>> = None;
        let consider = |probe: &[f64], ws: &mut KappaWorkspace, best: &mut f64, best_point: &mut Option<Vec<f64>>| {
            let k = kappa_point_prepared(pre, probe, ws);
            if k > *best {
                *best = k;
                *best_point = Some(probe.to_vec());
            }
        };
        for b in &basis {
            for sign in [1.0, -1.0] {
                for (o, (xi, bi)) in probe.iter_mut().zip(x.iter().zip(b)) {
                    *o = xi + sign * scale * bi;
                }
                normalize(&mut probe);
                *evaluations += 1;
                consider(&probe, ws, &mut best, &mut best_point);
            }
        }
        for a in 0..basis.len() {
            for b in (a + 1)..basis.len() {
                for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let inv = std::f64::consts::FRAC_1_SQRT_2;
                    for (o, ((xi, ba), bb)) in probe
                        .iter_mut()
                        .zip(x.iter().zip(&basis[a]).zip(&basis[b]))
                    {
                        *o = xi + scale * inv * (sa * ba + sb * bb);
                    }
                    normalize(&mut probe);
                    *evaluations += 1;
                    consider(&probe, ws, &mut best, &mut best_point);
                }
            }
        }
        match best_point {
            Some(p) => {
                x = p;
                current = best;
            }
            None => scale /= 2.0,
        }
    }
    false
}

fn normalize(x: &mut [f64]) {
    let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x {
        *v /= norm;
    }
}

/// Orthonormal basis of the tangent space at a unit point.
fn tangent_basis(x: &[f64]) -> Vec<Vec<f64>> {
    let dim = x.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim - 1);
    for axis in 0..dim {
        if basis.len() == dim - 1 {
            break;
        }
        let mut v: Vec<f64> = vec![0.0; dim];
        v[axis] = 1.0;
        let dot: f64 = x[axis];
        for (vi, xi) in v.iter_mut().zip(x) {
            *vi -= dot * xi;
        }
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    fn linear_x1(nvars: usize) -> PolyTuple {
        PolyTuple::new(vec![Polynomial::scaled_variable(nvars, 1, 1.0)]).unwrap()
    }

    fn sphere_quadric() -> PolyTuple {
        PolyTuple::new(vec![Polynomial::from_terms(
            3,
            2,
            [
                (1.0, vec![2, 0, 0]),
                (1.0, vec![0, 2, 0]),
                (1.0, vec![0, 0, 2]),
            ],
        )
        .unwrap()])
        .unwrap()
    }

    /// Homogenization of (X, Y, X - Y): ill-posed, the last three members
    /// vanish together at the poles.
    fn ill_posed() -> PolyTuple {
        let p = PolyTuple::new(vec![
            Polynomial::scaled_variable(2, 0, 1.0),
            Polynomial::scaled_variable(2, 1, 1.0),
            Polynomial::from_terms(2, 1, [(1.0, vec![1, 0]), (-1.0, vec![0, 1])]).unwrap(),
        ])
        .unwrap();
        p.homogenize()
    }

    #[test]
    fn mu_of_a_coordinate_function() {
        let f = linear_x1(3);
        // At e1 the gradient is normal to the sphere, so the tangent
        // derivative vanishes; at points orthogonal to e1 it is tangent.
        assert_eq!(mu(&f, &[0.0, 1.0, 0.0]), f64::INFINITY);
        for x in [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.0, 0.8]] {
            let v = mu(&f, &x);
            assert!((v - 1.0).abs() <= 1e-12, "mu = {v}");
        }
    }

    #[test]
    fn mu_is_scale_invariant() {
        let base = Polynomial::from_terms(
            3,
            2,
            [(1.0, vec![1, 1, 0]), (0.5, vec![0, 0, 2]), (-2.0, vec![2, 0, 0])],
        )
        .unwrap();
        let f = PolyTuple::new(vec![base.clone()]).unwrap();
        let scaled = PolyTuple::new(vec![Polynomial::from_terms(
            3,
            2,
            base.terms().map(|(e, c)| (-3.25 * c, e.to_vec())),
        )
        .unwrap()])
        .unwrap();
        let x = [0.48, 0.6, 0.64];
        let a = mu(&f, &x);
        let b = mu(&scaled, &x);
        assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn kappa_point_of_a_coordinate_function_is_one() {
        let f = linear_x1(2);
        for x in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [-0.28, 0.96]] {
            let k = kappa_point(&f, &x);
            assert!((k - 1.0).abs() <= 1e-12, "kappa = {k}");
        }
    }

    #[test]
    fn kappa_point_of_the_sphere_quadric_is_sqrt3() {
        let f = sphere_quadric();
        for x in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.36, 0.48, 0.8]] {
            let k = kappa_point(&f, &x);
            assert!((k - 3f64.sqrt()).abs() <= 1e-9, "kappa = {k}");
        }
    }

    #[test]
    fn kappa_point_blows_up_at_a_common_zero() {
        let f = ill_posed();
        // At the pole (1, 0, 0) the members X1, X2, X1 - X2 all vanish and
        // three tangent gradients cannot be independent in a 2-plane.
        let k = kappa_point(&f, &[1.0, 0.0, 0.0]);
        assert_eq!(k, f64::INFINITY);
    }

    #[test]
    fn kappa_point_is_at_least_one() {
        let f = PolyTuple::new(vec![
            Polynomial::from_terms(3, 2, [(0.7, vec![1, 1, 0]), (-0.2, vec![0, 0, 2])]).unwrap(),
            Polynomial::from_terms(3, 1, [(0.4, vec![0, 1, 0]), (1.1, vec![0, 0, 1])]).unwrap(),
        ])
        .unwrap();
        let golden = 0.618_033_988_749_894_9_f64;
        for k in 0..200 {
            let u = (k as f64 * golden).fract() * 2.0 - 1.0;
            let phi = k as f64 * 2.399_963_229_728_653;
            let s = (1.0 - u * u).sqrt();
            let x = [s * phi.cos(), s * phi.sin(), u];
            assert!(kappa_point(&f, &x) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn estimate_for_a_coordinate_function() {
        let f = linear_x1(2);
        let est = estimate_kappa(&f, 1e6).unwrap();
        let k = est.finite().expect("well conditioned");
        assert!((0.99..=1.0 + 1e-9).contains(&k), "K = {k}");
    }

    #[test]
    fn estimate_for_the_sphere_quadric() {
        let f = sphere_quadric();
        let est = estimate_kappa(&f, 1e6).unwrap();
        let k = est.finite().expect("well conditioned");
        let s3 = 3f64.sqrt();
        assert!(k >= 0.99 * s3 && k <= s3 * (1.0 + 1e-9), "K = {k}");
    }

    #[test]
    fn estimate_rejects_the_ill_posed_tuple() {
        let f = ill_posed();
        let est = estimate_kappa(&f, 1e6).unwrap();
        assert!(matches!(est.verdict, Verdict::IllConditioned { .. }));
    }

    #[test]
    fn estimates_are_deterministic() {
        let f = PolyTuple::new(vec![
            Polynomial::from_terms(2, 1, [(0.6, vec![1, 0]), (0.8, vec![0, 1])]).unwrap(),
            Polynomial::from_terms(2, 1, [(1.0, vec![1, 0]), (-0.5, vec![0, 1])]).unwrap(),
        ])
        .unwrap();
        let a = estimate_kappa(&f, 1e6).unwrap();
        let b = estimate_kappa(&f, 1e6).unwrap();
        assert_eq!(a, b);
        assert!(a.finite().is_some());
    }

    #[test]
    fn small_values_imply_full_rank_and_bounded_mu() {
        // Consistency of the estimate with the pointwise bound: wherever the
        // normalized value is below 1/(sqrt(2) K), the tangent Jacobian has
        // full rank and mu is at most sqrt(2) K / 0.99.
        for f in [linear_x1(2), sphere_quadric()] {
            let est = estimate_kappa(&f, 1e6).unwrap();
            let k = est.finite().unwrap();
            let norm = f.weyl_norm();
            let golden = 0.618_033_988_749_894_9_f64;
            let dim = f.num_vars();
            for t in 0..500 {
                let u = (t as f64 * golden).fract() * 2.0 - 1.0;
                let phi = t as f64 * 2.399_963_229_728_653;
                let s = (1.0 - u * u).sqrt();
                let x = if dim == 2 {
                    vec![phi.cos(), phi.sin()]
                } else {
                    vec![s * phi.cos(), s * phi.sin(), u]
                };
                let value: f64 = f
                    .polys()
                    .iter()
                    .map(|p| {
                        let v = p.evaluate(&x).unwrap();
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt();
                if value / norm < 1.0 / (2f64.sqrt() * k) {
                    let m = mu(&f, &x);
                    assert!(m.is_finite());
                    assert!(m <= 2f64.sqrt() * k / 0.99 + 1e-9, "mu = {m}");
                }
            }
        }
    }

    #[test]
    fn budget_refusal_reports_the_needed_level() {
        let f = sphere_quadric();
        let err = estimate_kappa_with_budget(&f, 1e6, 10_000).unwrap_err();
        assert!(matches!(err, ConditionError::BudgetExceeded { .. }));
    }
}
