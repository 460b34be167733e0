//! Test-support oracles: exact membership predicates for the set families
//! the pipeline approximates, magnitude-bucket signatures, and a brute-force
//! planar homology reference built on rasterization.
//!
//! Nothing here feeds the main pipeline; these are independent references
//! the test suites compare against.

use rayon::prelude::*;
use thiserror::Error;

use crate::formula::{Formula, LaxAtom, LaxDir, LaxFormula};
use crate::homology::{homology_groups, HomologySummary};
use crate::poly::PolyTuple;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("the planar reference needs exactly 2 variables, got {0}")]
    NotPlanar(usize),
}

/// Exact membership of an affine point in the semialgebraic set of a
/// formula: every atom is decided by the sign of its polynomial at `x`.
pub fn member_affine(p: &PolyTuple, formula: &Formula, x: &[f64]) -> bool {
    formula
        .eval_with(&mut |atom| {
            let v = p.get(atom.poly).eval_unchecked(x);
            Some(atom.rel.holds_for_sign(sign_of(v)))
        })
        .expect("total assignment")
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Membership of a unit point in the set of a lax formula over
/// `(f, t)`, relaxed by tolerance `r`: lower bounds loosen to
/// `f_i >= (t_j - r) ||f_i||` and upper bounds to `f_i <= (t_j + r) ||f_i||`.
/// `r = 0` gives the set itself; `strict` turns the comparisons into the
/// open variant.
pub fn member_sphere(
    f: &PolyTuple,
    t: &[f64],
    phibar: &LaxFormula,
    x: &[f64],
    r: f64,
    strict: bool,
) -> bool {
    debug_assert!(r >= 0.0);
    let norms = f.member_norms();
    phibar
        .eval_with(&mut |atom: &LaxAtom| {
            let v = f.get(atom.poly).eval_unchecked(x) / norms[atom.poly];
            let tj = t[atom.threshold - 1];
            Some(match (atom.dir, strict) {
                (LaxDir::Ge, false) => v >= tj - r,
                (LaxDir::Ge, true) => v > tj - r,
                (LaxDir::Le, false) => v <= tj + r,
                (LaxDir::Le, true) => v < tj + r,
            })
        })
        .expect("total assignment")
}

/// Classification of one point against a matrix of magnitude thresholds:
/// for each polynomial, whether its normalized magnitude sits on a
/// threshold (an `at` bucket) or strictly between two (a `between` bucket),
/// together with the sign vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumSignature {
    /// `at[k]` lists the polynomials with `|f_i|/||f_i|| = lambda_{i,k}`.
    pub at: Vec<Vec<usize>>,
    /// `between[k]` lists those strictly inside `(lambda_{i,k}, lambda_{i,k+1})`,
    /// with the last bucket unbounded above.
    pub between: Vec<Vec<usize>>,
    pub signs: Vec<i8>,
}

impl StratumSignature {
    /// The buckets partition the full index set.
    pub fn is_partition(&self, q: usize) -> bool {
        let mut seen = vec![false; q];
        for bucket in self.at.iter().chain(&self.between) {
            for &i in bucket {
                if seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Equality tolerance for magnitude-threshold comparisons.
const SIGNATURE_TOLERANCE: f64 = 1e-9;

/// Buckets each polynomial's normalized magnitude against its row of the
/// threshold matrix. Rows must start at 0 and increase strictly.
pub fn stratum_signature(f: &PolyTuple, lambda: &[Vec<f64>], x: &[f64]) -> StratumSignature {
    let q = f.len();
    assert_eq!(lambda.len(), q);
    let levels = lambda[0].len();
    for row in lambda {
        assert_eq!(row.len(), levels);
        assert_eq!(row[0], 0.0);
        assert!(row.windows(2).all(|w| w[0] < w[1]));
    }
    let norms = f.member_norms();
    let mut at = vec![Vec::new(); levels];
    let mut between = vec![Vec::new(); levels];
    let mut signs = vec![0i8; q];
    for i in 0..q {
        let v = f.get(i).eval_unchecked(x) / norms[i];
        signs[i] = sign_of_with_tol(v);
        let mag = v.abs();
        let row = &lambda[i];
        let mut placed = false;
        for k in 0..levels {
            if (mag - row[k]).abs() <= SIGNATURE_TOLERANCE {
                at[k].push(i);
                placed = true;
                break;
            }
            let upper_open = k + 1 == levels;
            if mag > row[k] && (upper_open || mag < row[k + 1]) {
                between[k].push(i);
                placed = true;
                break;
            }
        }
        debug_assert!(placed, "magnitude buckets cover the half line");
    }
    StratumSignature { at, between, signs }
}

fn sign_of_with_tol(v: f64) -> i8 {
    if v.abs() <= SIGNATURE_TOLERANCE {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Brute-force planar homology reference: rasterizes the window
/// `[cx - r, cx + r] x [cy - r, cy + r]` at pitch `h`, keeps the cells whose
/// center satisfies the predicate, triangulates them on the shared vertex
/// grid and computes homology up to dimension 1. Only trustworthy when the
/// set's features are much larger than `h`; callers document that per
/// fixture.
pub fn cubical_homology_2d_with<F>(
    predicate: F,
    center: (f64, f64),
    halfwidth: f64,
    pitch: f64,
) -> HomologySummary
where
    F: Fn(f64, f64) -> bool + Sync,
{
    let cells = (2.0 * halfwidth / pitch).round() as i64;
    let origin = (center.0 - halfwidth, center.1 - halfwidth);
    let rows: Vec<Vec<(i64, i64)>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let mut hits = Vec::new();
            for j in 0..cells {
                let x = origin.0 + (i as f64 + 0.5) * pitch;
                let y = origin.1 + (j as f64 + 0.5) * pitch;
                if predicate(x, y) {
                    hits.push((i, j));
                }
            }
            hits
        })
        .collect();
    // Shared vertex grid: corner (i, j) gets id i * (cells + 1) + j.
    let vid = |i: i64, j: i64| -> u32 { (i * (cells + 1) + j) as u32 };
    let mut triangles: Vec<Vec<u32>> = Vec::new();
    for hits in rows {
        for (i, j) in hits {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push(vec![a, b, c]);
            triangles.push(vec![a, c, d]);
        }
    }
    let complex = crate::complex::SimplicialComplex::from_simplices(triangles);
    let mut h = homology_groups(&complex, 1);
    if complex.total_simplices() == 0 {
        h = HomologySummary {
            betti: vec![0, 0],
            torsion: vec![Vec::new(), Vec::new()],
        };
    }
    h
}

/// The planar reference for a polynomial tuple and a formula over it.
pub fn cubical_homology_2d(
    p: &PolyTuple,
    formula: &Formula,
    halfwidth: f64,
    pitch: f64,
) -> Result<HomologySummary, OracleError> {
    if p.num_vars() != 2 {
        return Err(OracleError::NotPlanar(p.num_vars()));
    }
    Ok(cubical_homology_2d_with(
        |x, y| member_affine(p, formula, &[x, y]),
        (0.0, 0.0),
        halfwidth,
        pitch,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Relation;
    use crate::poly::Polynomial;
    use crate::schedule::Schedule;

    fn poly(num_vars: usize, d: u32, terms: &[(f64, &[u32])]) -> Polynomial {
        Polynomial::from_terms(num_vars, d, terms.iter().map(|(c, e)| (*c, e.to_vec())))
            .unwrap()
    }

    /// p = (X - Y, Y) with the two-half-lines formula.
    fn half_lines() -> (PolyTuple, Formula) {
        let p = PolyTuple::new(vec![
            poly(2, 1, &[(1.0, &[1, 0]), (-1.0, &[0, 1])]),
            poly(2, 1, &[(1.0, &[0, 1])]),
        ])
        .unwrap();
        let phi = Formula::Or(vec![
            Formula::And(vec![
                Formula::atom(0, Relation::Eq),
                Formula::atom(1, Relation::Gt),
            ]),
            Formula::And(vec![
                Formula::atom(1, Relation::Eq),
                Formula::atom(0, Relation::Gt),
            ]),
        ]);
        (p, phi)
    }

    #[test]
    fn member_affine_on_the_half_lines() {
        let (p, phi) = half_lines();
        assert!(member_affine(&p, &phi, &[1.0, 1.0]));
        assert!(member_affine(&p, &phi, &[2.0, 0.0]));
        assert!(!member_affine(&p, &phi, &[2.0, 1.0]));
        assert!(!member_affine(&p, &phi, &[0.0, 0.0]));
        assert!(!member_affine(&p, &phi, &[-1.0, -1.0]));
    }

    #[test]
    fn sphere_membership_nests_under_relaxation() {
        let (p, phi) = half_lines();
        let f = p.homogenize();
        let schedule = Schedule::with_m(1, 1, 1.0).unwrap();
        let phibar = phi
            .homogenize()
            .unwrap()
            .gv_rewrite(&schedule)
            .unwrap();
        let t = schedule.t();
        let golden = 0.618_033_988_749_894_9_f64;
        let mut members = 0;
        for k in 0..3000 {
            let u = (k as f64 * golden).fract() * 2.0 - 1.0;
            let phi_a = k as f64 * 2.399_963_229_728_653;
            let s = (1.0 - u * u).sqrt();
            let x = [s * phi_a.cos(), s * phi_a.sin(), u];
            let in_set = member_sphere(&f, t, &phibar, &x, 0.0, false);
            let in_open = member_sphere(&f, t, &phibar, &x, 0.01, true);
            let in_closed = member_sphere(&f, t, &phibar, &x, 0.01, false);
            if in_set {
                members += 1;
                assert!(in_open);
            }
            if in_open {
                assert!(in_closed);
            }
        }
        assert!(members > 0, "the sampling should hit the blocks");
    }

    #[test]
    fn signature_buckets_match_hand_values() {
        // f = (X1, X2) on S^2 with shared thresholds (0, 0.1, 0.2).
        let f = PolyTuple::new(vec![
            Polynomial::scaled_variable(3, 1, 1.0),
            Polynomial::scaled_variable(3, 2, 1.0),
        ])
        .unwrap();
        let lambda = vec![vec![0.0, 0.1, 0.2], vec![0.0, 0.1, 0.2]];

        // A zero of f2 with f1 deep in the top bucket.
        let x = [0.8660254037844386, -0.5, 0.0];
        let sig = stratum_signature(&f, &lambda, &x);
        assert_eq!(sig.at[0], vec![1]);
        assert_eq!(sig.between[2], vec![0]);
        assert_eq!(sig.signs, vec![-1, 0]);
        assert!(sig.is_partition(2));

        // Both magnitudes strictly between the first two thresholds.
        let y = [0.97724868742, -0.15, -0.15];
        let sig = stratum_signature(&f, &lambda, &y);
        assert_eq!(sig.between[1], vec![0, 1]);
        assert!(sig.at.iter().all(Vec::is_empty));
        assert_eq!(sig.signs, vec![-1, -1]);

        // Magnitudes above the last threshold land in the open top bucket.
        let z = [0.0, -0.6, 0.8];
        let sig = stratum_signature(&f, &lambda, &z);
        assert_eq!(sig.between[2], vec![0, 1]);
        assert_eq!(sig.signs, vec![-1, 1]);
    }

    #[test]
    fn cubical_reference_on_a_disk() {
        // Closed unit disk: contractible.
        let p = PolyTuple::new(vec![poly(
            2,
            2,
            &[(1.0, &[2, 0]), (1.0, &[0, 2]), (-1.0, &[0, 0])],
        )])
        .unwrap();
        let phi = Formula::atom(0, Relation::Le);
        let h = cubical_homology_2d(&p, &phi, 2.0, 0.05).unwrap();
        assert_eq!(h.betti, vec![1, 0]);
    }

    #[test]
    fn cubical_reference_on_an_annulus() {
        let p = PolyTuple::new(vec![
            poly(2, 2, &[(1.0, &[2, 0]), (1.0, &[0, 2]), (-1.0, &[0, 0])]),
            poly(2, 2, &[(1.0, &[2, 0]), (1.0, &[0, 2]), (-4.0, &[0, 0])]),
        ])
        .unwrap();
        let phi = Formula::And(vec![
            Formula::atom(0, Relation::Gt),
            Formula::atom(1, Relation::Lt),
        ]);
        for pitch in [0.05, 0.02] {
            let h = cubical_homology_2d(&p, &phi, 2.5, pitch).unwrap();
            assert_eq!(h.betti, vec![1, 1], "pitch {pitch}");
            assert!(!h.has_torsion());
        }
    }

    #[test]
    fn cubical_reference_rejects_other_dimensions() {
        let p = PolyTuple::new(vec![Polynomial::scaled_variable(3, 0, 1.0)]).unwrap();
        let phi = Formula::atom(0, Relation::Gt);
        assert_eq!(
            cubical_homology_2d(&p, &phi, 1.0, 0.1).unwrap_err(),
            OracleError::NotPlanar(3)
        );
    }

    #[test]
    fn empty_predicate_yields_zero_homology() {
        let h = cubical_homology_2d_with(|_, _| false, (0.0, 0.0), 1.0, 0.1);
        assert_eq!(h.betti, vec![0, 0]);
    }
}
