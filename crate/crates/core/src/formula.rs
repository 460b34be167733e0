//! Boolean formulas over polynomial sign atoms, and every rewrite the
//! pipeline needs: negation elimination, lax elimination, homogenization,
//! saturation, and the rewriting of a strict formula into a lax formula over
//! threshold atoms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::Schedule;

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("operation requires a monotone formula (no negations)")]
    NotMonotone,
    #[error("operation requires a strict formula (relations <, =, > only)")]
    NotStrict,
    #[error("atom for polynomial {poly} has no assigned truth value")]
    UnassignedAtom { poly: usize },
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
    #[error("operator {op:?} expects {expected} argument(s), got {got}")]
    BadArity {
        op: String,
        expected: String,
        got: usize,
    },
}

/// Sign relation of an atomic predicate `p_i rel 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Relation {
    pub fn holds_for_sign(self, sign: i8) -> bool {
        match self {
            Relation::Lt => sign < 0,
            Relation::Le => sign <= 0,
            Relation::Eq => sign == 0,
            Relation::Ge => sign >= 0,
            Relation::Gt => sign > 0,
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Relation::Lt | Relation::Eq | Relation::Gt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }

    pub fn parse(s: &str) -> Result<Self, FormulaError> {
        Ok(match s {
            "<" => Relation::Lt,
            "<=" => Relation::Le,
            "=" => Relation::Eq,
            ">=" => Relation::Ge,
            ">" => Relation::Gt,
            other => return Err(FormulaError::UnknownRelation(other.to_string())),
        })
    }
}

/// `p_{poly} rel 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub poly: usize,
    pub rel: Relation,
}

/// Boolean formula over sign atoms. `And([])` is true, `Or([])` is false.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn atom(poly: usize, rel: Relation) -> Self {
        Formula::Atom(Atom { poly, rel })
    }

    /// Formula size: the number of atomic terms. The negation and lax
    /// eliminations below grow this count by a factor of at most two.
    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::And(ch) | Formula::Or(ch) => ch.iter().map(Formula::size).sum(),
            Formula::Not(c) => c.size(),
        }
    }

    /// Number of distinct polynomial indices plus one past the largest, i.e.
    /// the q the formula speaks about (indices are 0-based).
    pub fn poly_count(&self) -> usize {
        fn max_index(f: &Formula) -> Option<usize> {
            match f {
                Formula::Atom(a) => Some(a.poly),
                Formula::And(ch) | Formula::Or(ch) => ch.iter().filter_map(max_index).max(),
                Formula::Not(c) => max_index(c),
            }
        }
        max_index(self).map_or(0, |m| m + 1)
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            Formula::Atom(_) => true,
            Formula::And(ch) | Formula::Or(ch) => ch.iter().all(Formula::is_monotone),
            Formula::Not(_) => false,
        }
    }

    pub fn is_strict(&self) -> bool {
        match self {
            Formula::Atom(a) => a.rel.is_strict(),
            Formula::And(ch) | Formula::Or(ch) => ch.iter().all(Formula::is_strict),
            Formula::Not(_) => false,
        }
    }

    /// Pushes negations to the leaves and resolves them against the atom
    /// relations, so the result has no `Not` node. Linear in the formula size.
    pub fn eliminate_negations(&self) -> Formula {
        fn go(f: &Formula, negate: bool) -> Formula {
            match f {
                Formula::Atom(a) => {
                    if !negate {
                        Formula::Atom(*a)
                    } else {
                        match a.rel {
                            Relation::Lt => Formula::atom(a.poly, Relation::Ge),
                            Relation::Le => Formula::atom(a.poly, Relation::Gt),
                            Relation::Ge => Formula::atom(a.poly, Relation::Lt),
                            Relation::Gt => Formula::atom(a.poly, Relation::Le),
                            Relation::Eq => Formula::Or(vec![
                                Formula::atom(a.poly, Relation::Lt),
                                Formula::atom(a.poly, Relation::Gt),
                            ]),
                        }
                    }
                }
                Formula::And(ch) => {
                    let mapped = ch.iter().map(|c| go(c, negate)).collect();
                    if negate {
                        Formula::Or(mapped)
                    } else {
                        Formula::And(mapped)
                    }
                }
                Formula::Or(ch) => {
                    let mapped = ch.iter().map(|c| go(c, negate)).collect();
                    if negate {
                        Formula::And(mapped)
                    } else {
                        Formula::Or(mapped)
                    }
                }
                Formula::Not(c) => go(c, !negate),
            }
        }
        go(self, false)
    }

    /// Replaces every lax atom by its strict expansion,
    /// `p >= 0` into `(p = 0 or p > 0)` and `p <= 0` into `(p = 0 or p < 0)`.
    /// The input must be monotone; the output is strict and at most twice the
    /// size of the input.
    pub fn eliminate_lax(&self) -> Result<Formula, FormulaError> {
        if !self.is_monotone() {
            return Err(FormulaError::NotMonotone);
        }
        fn go(f: &Formula) -> Formula {
            match f {
                Formula::Atom(a) => match a.rel {
                    Relation::Ge => Formula::Or(vec![
                        Formula::atom(a.poly, Relation::Eq),
                        Formula::atom(a.poly, Relation::Gt),
                    ]),
                    Relation::Le => Formula::Or(vec![
                        Formula::atom(a.poly, Relation::Eq),
                        Formula::atom(a.poly, Relation::Lt),
                    ]),
                    _ => Formula::Atom(*a),
                },
                Formula::And(ch) => Formula::And(ch.iter().map(go).collect()),
                Formula::Or(ch) => Formula::Or(ch.iter().map(go).collect()),
                Formula::Not(_) => unreachable!("checked monotone above"),
            }
        }
        Ok(go(self))
    }

    /// Rewrites a strict formula over an affine tuple into the formula over
    /// its homogenization: atom indices shift by one (index 0 is the new
    /// `||p|| X_0`) and the conjunct `p_0 > 0` is appended at the root.
    pub fn homogenize(&self) -> Result<Formula, FormulaError> {
        if !self.is_strict() {
            return Err(FormulaError::NotStrict);
        }
        fn shift(f: &Formula) -> Formula {
            match f {
                Formula::Atom(a) => Formula::atom(a.poly + 1, a.rel),
                Formula::And(ch) => Formula::And(ch.iter().map(shift).collect()),
                Formula::Or(ch) => Formula::Or(ch.iter().map(shift).collect()),
                Formula::Not(_) => unreachable!("checked strict above"),
            }
        }
        Ok(Formula::And(vec![
            shift(self),
            Formula::atom(0, Relation::Gt),
        ]))
    }

    /// Standard Boolean evaluation with a per-atom truth assignment. Fails on
    /// the first atom the assignment does not cover.
    pub fn eval_with<F>(&self, assign: &mut F) -> Result<bool, FormulaError>
    where
        F: FnMut(&Atom) -> Option<bool>,
    {
        match self {
            Formula::Atom(a) => {
                assign(a).ok_or(FormulaError::UnassignedAtom { poly: a.poly })
            }
            Formula::And(ch) => {
                let mut acc = true;
                for c in ch {
                    acc &= c.eval_with(assign)?;
                }
                Ok(acc)
            }
            Formula::Or(ch) => {
                let mut acc = false;
                for c in ch {
                    acc |= c.eval_with(assign)?;
                }
                Ok(acc)
            }
            Formula::Not(c) => Ok(!c.eval_with(assign)?),
        }
    }

    /// Evaluates under a sign vector: atom `p_i rel 0` is decided by
    /// `signs[i]`. Total, since every relation is decidable from a sign.
    pub fn eval_signs(&self, signs: &[i8]) -> bool {
        self.eval_with(&mut |a: &Atom| Some(a.rel.holds_for_sign(signs[a.poly])))
            .expect("sign assignment is total")
    }

    /// All saturated sign vectors whose cells make up the formula's truth
    /// set: a strict formula over q polynomials becomes the set of vectors in
    /// {-1, 0, +1}^q satisfying it. Exponential in q; this is a test and
    /// oracle path, not a pipeline stage.
    pub fn saturate(&self, q: usize) -> Result<Vec<SaturatedFormula>, FormulaError> {
        if !self.is_strict() {
            return Err(FormulaError::NotStrict);
        }
        let mut out = Vec::new();
        let mut signs = vec![-1i8; q];
        loop {
            if self.eval_signs(&signs) {
                out.push(SaturatedFormula {
                    signs: signs.clone(),
                });
            }
            // odometer increment over {-1, 0, 1}^q
            let mut i = 0;
            loop {
                if i == q {
                    return Ok(out);
                }
                if signs[i] < 1 {
                    signs[i] += 1;
                    break;
                }
                signs[i] = -1;
                i += 1;
            }
        }
    }

    /// Rewrites a strict formula into the lax formula over `(f, t)` whose set
    /// is the union of the m relaxation blocks of the schedule: in block k an
    /// equality becomes a two-sided band of half-width `eps_k ||f_i||` and a
    /// strict inequality becomes a margin of `delta_k ||f_i||`.
    pub fn gv_rewrite(&self, schedule: &Schedule) -> Result<LaxFormula, FormulaError> {
        if !self.is_strict() {
            return Err(FormulaError::NotStrict);
        }
        let m = schedule.m();
        fn block(f: &Formula, k: usize, m: usize) -> LaxFormula {
            match f {
                Formula::Atom(a) => {
                    let (eps_j, delta_j, neg_eps_j, neg_delta_j) = (
                        2 * k - 1,
                        2 * k,
                        2 * m + 2 * k - 1,
                        2 * m + 2 * k,
                    );
                    match a.rel {
                        Relation::Eq => LaxFormula::And(vec![
                            LaxFormula::Atom(LaxAtom {
                                poly: a.poly,
                                threshold: eps_j,
                                dir: LaxDir::Le,
                            }),
                            LaxFormula::Atom(LaxAtom {
                                poly: a.poly,
                                threshold: neg_eps_j,
                                dir: LaxDir::Ge,
                            }),
                        ]),
                        Relation::Gt => LaxFormula::Atom(LaxAtom {
                            poly: a.poly,
                            threshold: delta_j,
                            dir: LaxDir::Ge,
                        }),
                        Relation::Lt => LaxFormula::Atom(LaxAtom {
                            poly: a.poly,
                            threshold: neg_delta_j,
                            dir: LaxDir::Le,
                        }),
                        _ => unreachable!("checked strict above"),
                    }
                }
                Formula::And(ch) => {
                    LaxFormula::And(ch.iter().map(|c| block(c, k, m)).collect())
                }
                Formula::Or(ch) => {
                    LaxFormula::Or(ch.iter().map(|c| block(c, k, m)).collect())
                }
                Formula::Not(_) => unreachable!("checked strict above"),
            }
        }
        Ok(LaxFormula::Or(
            (1..=m).map(|k| block(self, k, m)).collect(),
        ))
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Formula::Atom(a) => serde_json::json!({
                "atom": { "poly": a.poly, "rel": a.rel.as_str() }
            }),
            Formula::And(ch) => serde_json::json!({
                "op": "and",
                "args": ch.iter().map(Formula::to_json).collect::<Vec<_>>()
            }),
            Formula::Or(ch) => serde_json::json!({
                "op": "or",
                "args": ch.iter().map(Formula::to_json).collect::<Vec<_>>()
            }),
            Formula::Not(c) => serde_json::json!({
                "op": "not",
                "args": [c.to_json()]
            }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Formula, FormulaError> {
        let raw: RawFormula = serde_json::from_value(v.clone())
            .map_err(|_| FormulaError::UnknownOperator(v.to_string()))?;
        raw.into_formula()
    }
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawFormula {
    Leaf {
        atom: RawAtom,
    },
    Node {
        op: String,
        args: Vec<RawFormula>,
    },
}

#[derive(Deserialize, Serialize)]
struct RawAtom {
    poly: usize,
    rel: String,
}

impl RawFormula {
    fn into_formula(self) -> Result<Formula, FormulaError> {
        match self {
            RawFormula::Leaf { atom } => Ok(Formula::Atom(Atom {
                poly: atom.poly,
                rel: Relation::parse(&atom.rel)?,
            })),
            RawFormula::Node { op, args } => {
                let children: Vec<Formula> = args
                    .into_iter()
                    .map(RawFormula::into_formula)
                    .collect::<Result<_, _>>()?;
                match op.as_str() {
                    "and" => Ok(Formula::And(children)),
                    "or" => Ok(Formula::Or(children)),
                    "not" => {
                        if children.len() != 1 {
                            return Err(FormulaError::BadArity {
                                op,
                                expected: "1".to_string(),
                                got: children.len(),
                            });
                        }
                        Ok(Formula::Not(Box::new(
                            children.into_iter().next().unwrap(),
                        )))
                    }
                    other => Err(FormulaError::UnknownOperator(other.to_string())),
                }
            }
        }
    }
}

/// Direction of a lax threshold atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LaxDir {
    Le,
    Ge,
}

/// Atom `f_poly dir t_threshold ||f_poly||`. The threshold is a 1-based index
/// into the schedule's t-vector, matching its published ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaxAtom {
    pub poly: usize,
    pub threshold: usize,
    pub dir: LaxDir,
}

/// Monotone formula whose atoms compare polynomial values against scaled
/// thresholds. This is the shape the sampling and complex stages consume.
#[derive(Debug, Clone, PartialEq)]
pub enum LaxFormula {
    Atom(LaxAtom),
    And(Vec<LaxFormula>),
    Or(Vec<LaxFormula>),
}

impl LaxFormula {
    pub fn eval_with<F>(&self, assign: &mut F) -> Result<bool, FormulaError>
    where
        F: FnMut(&LaxAtom) -> Option<bool>,
    {
        match self {
            LaxFormula::Atom(a) => {
                assign(a).ok_or(FormulaError::UnassignedAtom { poly: a.poly })
            }
            LaxFormula::And(ch) => {
                let mut acc = true;
                for c in ch {
                    acc &= c.eval_with(assign)?;
                }
                Ok(acc)
            }
            LaxFormula::Or(ch) => {
                let mut acc = false;
                for c in ch {
                    acc |= c.eval_with(assign)?;
                }
                Ok(acc)
            }
        }
    }

    /// The distinct atoms appearing in the formula, sorted.
    pub fn atoms(&self) -> Vec<LaxAtom> {
        fn collect(f: &LaxFormula, out: &mut Vec<LaxAtom>) {
            match f {
                LaxFormula::Atom(a) => out.push(*a),
                LaxFormula::And(ch) | LaxFormula::Or(ch) => {
                    for c in ch {
                        collect(c, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        collect(self, &mut out);
        out.sort();
        out.dedup();
        out
    }
}

/// A purely conjunctive strict formula in which every polynomial occurs,
/// recorded as its sign vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaturatedFormula {
    pub signs: Vec<i8>,
}
