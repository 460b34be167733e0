//! Sparse multivariate polynomials: evaluation, gradients, Weyl norms and
//! homogenization onto the sphere.
//!
//! Exponent vectors are exact integer keys in a `BTreeMap`, so term order is
//! canonical (lexicographic) and every summation below is performed in a
//! deterministic order. Coefficients are `f64`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("point has dimension {got}, polynomial expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exponent vector has length {got}, expected {expected}")]
    BadExponentLength { expected: usize, got: usize },
    #[error("term of degree {term_degree} exceeds the degree bound {bound}")]
    DegreeExceeded { term_degree: u32, bound: u32 },
    #[error("point is not on the unit sphere: |x| = {norm}")]
    NotOnSphere { norm: f64 },
}

/// A sparse polynomial in `num_vars` variables with an explicit degree bound.
///
/// Terms map an exponent multi-index `alpha` to its coefficient. Invariants:
/// `|alpha| <= degree_bound` for every stored term and no zero coefficient is
/// kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    num_vars: usize,
    degree_bound: u32,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    /// Builds a polynomial from `(coefficient, exponents)` pairs. Repeated
    /// exponent vectors are accumulated; zero coefficients are dropped.
    pub fn from_terms(
        num_vars: usize,
        degree_bound: u32,
        terms: impl IntoIterator<Item = (f64, Vec<u32>)>,
    ) -> Result<Self, PolyError> {
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (coeff, expo) in terms {
            if expo.len() != num_vars {
                return Err(PolyError::BadExponentLength {
                    expected: num_vars,
                    got: expo.len(),
                });
            }
            let total: u32 = expo.iter().sum();
            if total > degree_bound {
                return Err(PolyError::DegreeExceeded {
                    term_degree: total,
                    bound: degree_bound,
                });
            }
            *map.entry(expo).or_insert(0.0) += coeff;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Self {
            num_vars,
            degree_bound,
            terms: map,
        })
    }

    /// The zero polynomial.
    pub fn zero(num_vars: usize, degree_bound: u32) -> Self {
        Self {
            num_vars,
            degree_bound,
            terms: BTreeMap::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree_bound(&self) -> u32 {
        self.degree_bound
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical (lexicographic) order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// True when every term has total degree exactly `degree_bound`.
    pub fn is_homogeneous(&self) -> bool {
        self.terms
            .keys()
            .all(|e| e.iter().sum::<u32>() == self.degree_bound)
    }

    /// Evaluates at `x`, summing terms in canonical order so results are
    /// bit-identical across runs.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the dimension check, for hot loops that already
    /// validated their inputs.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (expo, coeff) in &self.terms {
            acc += coeff * monomial(expo, x);
        }
        acc
    }

    /// Euclidean gradient at `x`, written into `out` (length `num_vars`).
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.num_vars);
        debug_assert_eq!(out.len(), self.num_vars);
        out.fill(0.0);
        for (expo, coeff) in &self.terms {
            for (i, &e) in expo.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut d = coeff * e as f64;
                for (j, &ej) in expo.iter().enumerate() {
                    let p = if j == i { ej - 1 } else { ej };
                    d *= x[j].powi(p as i32);
                }
                out[i] += d;
            }
        }
    }

    /// Weyl norm. Affine polynomials are measured through their degree-d
    /// homogenization: the term with exponent `alpha` carries the weight
    /// `1 / multinomial(d; d - |alpha|, alpha)`, which leaves the norm
    /// unchanged under homogenization.
    pub fn weyl_norm(&self) -> f64 {
        let d = self.degree_bound;
        let mut acc = 0.0;
        for (expo, coeff) in &self.terms {
            let slack = d - expo.iter().sum::<u32>();
            acc += coeff * coeff / multinomial_with_slack(d, slack, expo);
        }
        acc.sqrt()
    }

    /// Homogenization `p^h = p(X_1/X_0, ...) * X_0^d` in `num_vars + 1`
    /// variables, with the new variable prepended.
    pub fn homogenize(&self) -> Polynomial {
        let d = self.degree_bound;
        let terms = self.terms.iter().map(|(expo, &coeff)| {
            let slack = d - expo.iter().sum::<u32>();
            let mut e = Vec::with_capacity(self.num_vars + 1);
            e.push(slack);
            e.extend_from_slice(expo);
            (coeff, e)
        });
        Polynomial::from_terms(self.num_vars + 1, d, terms)
            .expect("homogenized terms are valid by construction")
    }

    /// `c * X_i` as a polynomial in `num_vars` variables.
    pub fn scaled_variable(num_vars: usize, var: usize, c: f64) -> Self {
        let mut expo = vec![0u32; num_vars];
        expo[var] = 1;
        Polynomial::from_terms(num_vars, 1, [(c, expo)]).expect("valid monomial")
    }
}

/// Flat term layout for hot evaluation loops: coefficients and exponent rows
/// in the polynomial's canonical term order, so results agree bit for bit
/// with [`Polynomial::evaluate`].
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    num_vars: usize,
    coeffs: Vec<f64>,
    exps: Vec<u32>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let mut coeffs = Vec::with_capacity(p.num_terms());
        let mut exps = Vec::with_capacity(p.num_terms() * p.num_vars());
        for (e, c) in p.terms() {
            coeffs.push(c);
            exps.extend_from_slice(e);
        }
        Self {
            num_vars: p.num_vars(),
            coeffs,
            exps,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (t, &coeff) in self.coeffs.iter().enumerate() {
            let expo = &self.exps[t * self.num_vars..(t + 1) * self.num_vars];
            acc += coeff * monomial(expo, x);
        }
        acc
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (t, &coeff) in self.coeffs.iter().enumerate() {
            let expo = &self.exps[t * self.num_vars..(t + 1) * self.num_vars];
            for (i, &e) in expo.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut d = coeff * e as f64;
                for (j, &ej) in expo.iter().enumerate() {
                    let p = if j == i { ej - 1 } else { ej };
                    d *= x[j].powi(p as i32);
                }
                out[i] += d;
            }
        }
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (expo, coeff) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{coeff}")?;
            for (i, &e) in expo.iter().enumerate() {
                if e == 1 {
                    write!(f, "*x{i}")?;
                } else if e > 1 {
                    write!(f, "*x{i}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn monomial(expo: &[u32], x: &[f64]) -> f64 {
    let mut m = 1.0;
    for (&e, &xi) in expo.iter().zip(x) {
        if e == 1 {
            m *= xi;
        } else if e > 1 {
            m *= xi.powi(e as i32);
        }
    }
    m
}

/// `multinomial(d; slack, alpha) = d! / (slack! * prod alpha_i!)`, computed as
/// a product of binomial coefficients. Exact for every value representable in
/// f64, which covers all degrees this pipeline meets.
fn multinomial_with_slack(d: u32, slack: u32, alpha: &[u32]) -> f64 {
    let mut remaining = d;
    let mut acc = 1.0f64;
    let mut take = |k: u32, remaining: &mut u32| {
        acc *= binomial(*remaining, k);
        *remaining -= k;
    };
    take(slack, &mut remaining);
    for &a in alpha {
        take(a, &mut remaining);
    }
    debug_assert_eq!(remaining, 0);
    acc
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// An ordered tuple of polynomials sharing one variable count.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTuple {
    polys: Vec<Polynomial>,
    num_vars: usize,
}

impl PolyTuple {
    pub fn new(polys: Vec<Polynomial>) -> Result<Self, PolyError> {
        assert!(!polys.is_empty(), "empty polynomial tuple");
        let num_vars = polys[0].num_vars();
        for p in &polys {
            if p.num_vars() != num_vars {
                return Err(PolyError::DimensionMismatch {
                    expected: num_vars,
                    got: p.num_vars(),
                });
            }
        }
        Ok(Self { polys, num_vars })
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn polys(&self) -> &[Polynomial] {
        &self.polys
    }

    pub fn get(&self, i: usize) -> &Polynomial {
        &self.polys[i]
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.polys.iter().map(|p| p.degree_bound()).collect()
    }

    /// `D = max d_i`, at least 1.
    pub fn max_degree(&self) -> u32 {
        self.polys
            .iter()
            .map(|p| p.degree_bound())
            .max()
            .unwrap_or(1)
            .max(1)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.polys.iter().all(|p| p.is_homogeneous())
    }

    /// Tuple Weyl norm, `sqrt(sum ||p_i||^2)`.
    pub fn weyl_norm(&self) -> f64 {
        self.polys
            .iter()
            .map(|p| {
                let n = p.weyl_norm();
                n * n
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Per-member Weyl norms, cached once by callers that threshold values.
    pub fn member_norms(&self) -> Vec<f64> {
        self.polys.iter().map(|p| p.weyl_norm()).collect()
    }

    /// The homogenization map: an affine tuple in n variables becomes the
    /// homogeneous tuple `(||p|| X_0, p_1^h, ..., p_q^h)` in n + 1 variables.
    pub fn homogenize(&self) -> PolyTuple {
        let norm = self.weyl_norm();
        let mut polys = Vec::with_capacity(self.polys.len() + 1);
        polys.push(Polynomial::scaled_variable(self.num_vars + 1, 0, norm));
        polys.extend(self.polys.iter().map(Polynomial::homogenize));
        PolyTuple::new(polys).expect("homogenized tuple shares one variable count")
    }

    /// Jacobian of the tuple at a unit point `x`, restricted to the tangent
    /// space of the sphere: row i is the gradient of `f_i` at `x` with its
    /// component along `x` removed. Requires a homogeneous tuple.
    pub fn tangent_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, PolyError> {
        let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(PolyError::NotOnSphere { norm });
        }
        let mut rows = Vec::with_capacity(self.polys.len());
        let mut grad = vec![0.0; self.num_vars];
        for p in &self.polys {
            p.gradient_into(x, &mut grad);
            let dot: f64 = grad.iter().zip(x).map(|(g, xi)| g * xi).sum();
            let row: Vec<f64> = grad.iter().zip(x).map(|(g, xi)| g - dot * xi).collect();
            rows.push(row);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(num_vars: usize, d: u32, terms: &[(f64, &[u32])]) -> Polynomial {
        Polynomial::from_terms(num_vars, d, terms.iter().map(|(c, e)| (*c, e.to_vec())))
            .unwrap()
    }

    #[test]
    fn weyl_norm_of_pure_power_is_one() {
        for d in 1..6 {
            let p = poly(2, d, &[(1.0, &[d, 0])]);
            assert_eq!(p.weyl_norm(), 1.0);
        }
    }

    #[test]
    fn weyl_norm_of_mixed_quadratic_monomial() {
        // X0*X1 at degree 2: multinomial weight 2, norm 1/sqrt(2).
        let p = poly(2, 2, &[(1.0, &[1, 1])]);
        assert!((p.weyl_norm() - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weyl_norm_of_affine_circle_slice() {
        // X1^2 - 1 with d = 2 homogenizes to X1^2 - X0^2, both weights 1.
        let p = poly(1, 2, &[(1.0, &[2]), (-1.0, &[0])]);
        assert!((p.weyl_norm() - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weyl_norm_scale_equivariance() {
        let p = poly(2, 3, &[(1.5, &[1, 2]), (-0.25, &[0, 1]), (3.0, &[3, 0])]);
        for c in [-3.5, -1.0, 0.5, 7.25] {
            let scaled = Polynomial::from_terms(
                2,
                3,
                p.terms().map(|(e, co)| (c * co, e.to_vec())),
            )
            .unwrap();
            let lhs = scaled.weyl_norm();
            let rhs = c.abs() * p.weyl_norm();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
    }

    #[test]
    fn evaluate_matches_hand_values() {
        // X1^2 - X0^2 in two variables.
        let p = poly(2, 2, &[(1.0, &[0, 2]), (-1.0, &[2, 0])]);
        assert_eq!(p.evaluate(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(p.evaluate(&[1.0, 2.0]).unwrap(), 3.0);
        let z = Polynomial::zero(2, 2);
        assert_eq!(z.evaluate(&[4.0, -7.0]).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_rejects_wrong_dimension() {
        let p = poly(2, 1, &[(1.0, &[1, 0])]);
        assert!(matches!(
            p.evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_and_euler_identity() {
        // Homogeneous f of degree d satisfies <grad f(x), x> = d f(x).
        let f = poly(3, 3, &[(2.0, &[1, 1, 1]), (-1.0, &[3, 0, 0]), (0.5, &[0, 2, 1])]);
        let mut grad = vec![0.0; 3];
        let pts = [
            [0.6, 0.8, 0.0],
            [0.0, 0.0, 1.0],
            [-0.5, 0.5, 0.7071067811865476],
        ];
        for x in pts {
            f.gradient_into(&x, &mut grad);
            let dot: f64 = grad.iter().zip(&x).map(|(g, xi)| g * xi).sum();
            let fx = f.evaluate(&x).unwrap();
            assert!((dot - 3.0 * fx).abs() <= 1e-9 * (1.0 + fx.abs()));
        }
    }

    #[test]
    fn homogenize_tuple_prepends_norm_times_x0() {
        // p = (X1) in one variable: ||p|| = 1, H(p) = (X0, X1).
        let p = PolyTuple::new(vec![poly(1, 1, &[(1.0, &[1])])]).unwrap();
        let h = p.homogenize();
        assert_eq!(h.len(), 2);
        assert_eq!(h.get(0), &poly(2, 1, &[(1.0, &[1, 0])]));
        assert_eq!(h.get(1), &poly(2, 1, &[(1.0, &[0, 1])]));
    }

    #[test]
    fn homogenize_circle_slice() {
        // p = (X1^2 - 1): H(p) = (sqrt(2) X0, X1^2 - X0^2).
        let p = PolyTuple::new(vec![poly(1, 2, &[(1.0, &[2]), (-1.0, &[0])])]).unwrap();
        let h = p.homogenize();
        let expected0 = Polynomial::scaled_variable(2, 0, 2.0f64.sqrt());
        assert_eq!(h.get(0), &expected0);
        assert_eq!(h.get(1), &poly(2, 2, &[(1.0, &[0, 2]), (-1.0, &[2, 0])]));
    }

    #[test]
    fn dehomogenization_identity() {
        // p^h(1, x) = p(x) on a fan of points.
        let p = poly(2, 3, &[(1.0, &[2, 1]), (-2.0, &[0, 1]), (0.75, &[0, 0])]);
        let ph = p.homogenize();
        for k in 0..100 {
            let x = [(k as f64) * 0.11 - 5.0, (k as f64) * 0.07 - 3.0];
            let lifted = [1.0, x[0], x[1]];
            let a = p.evaluate(&x).unwrap();
            let b = ph.evaluate(&lifted).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn homogenized_terms_are_homogeneous() {
        let p = poly(2, 4, &[(1.0, &[1, 2]), (3.0, &[0, 0]), (-1.5, &[4, 0])]);
        let ph = p.homogenize();
        assert!(ph.is_homogeneous());
        // p^h(lambda y) = lambda^d p^h(y).
        let y = [0.3, -1.2, 0.8];
        for lambda in [0.5, 2.0, -1.5] {
            let scaled: Vec<f64> = y.iter().map(|v| lambda * v).collect();
            let lhs = ph.evaluate(&scaled).unwrap();
            let rhs = lambda.powi(4) * ph.evaluate(&y).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn tangent_jacobian_annihilates_base_point() {
        let f = PolyTuple::new(vec![
            poly(3, 2, &[(1.0, &[1, 1, 0]), (0.5, &[0, 0, 2])]),
            poly(3, 1, &[(1.0, &[0, 1, 0])]),
        ])
        .unwrap();
        let x = [0.48, 0.6, 0.64];
        let jac = f.tangent_jacobian(&x).unwrap();
        for row in &jac {
            let dot: f64 = row.iter().zip(&x).map(|(r, xi)| r * xi).sum();
            assert!(dot.abs() <= 1e-12);
        }
    }

    #[test]
    fn tangent_jacobian_hand_values() {
        // f = (X1) on S^2: at (0,0,1) the gradient e1 is already tangent; at
        // (1,0,0) it is normal and projects to zero.
        let f = PolyTuple::new(vec![poly(3, 1, &[(1.0, &[0, 1, 0])])]).unwrap();
        let at_pole = f.tangent_jacobian(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(at_pole[0], vec![0.0, 1.0, 0.0]);
        let at_e1 = f.tangent_jacobian(&[0.0, 1.0, 0.0]).unwrap();
        assert!(at_e1[0].iter().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn tangent_jacobian_of_sphere_defining_poly_vanishes() {
        let f = PolyTuple::new(vec![poly(
            3,
            2,
            &[(1.0, &[2, 0, 0]), (1.0, &[0, 2, 0]), (1.0, &[0, 0, 2])],
        )])
        .unwrap();
        let x = [0.36, 0.48, 0.8];
        let jac = f.tangent_jacobian(&x).unwrap();
        assert!(jac[0].iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn tangent_jacobian_rejects_interior_points() {
        let f = PolyTuple::new(vec![poly(2, 1, &[(1.0, &[1, 0])])]).unwrap();
        assert!(matches!(
            f.tangent_jacobian(&[0.5, 0.0]),
            Err(PolyError::NotOnSphere { .. })
        ));
    }
}
