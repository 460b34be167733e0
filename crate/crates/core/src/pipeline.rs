//! End-to-end pipeline: formula normalization, homogenization, condition
//! estimation, relaxation, grid sampling, nerve combination and homology,
//! plus the input and output file formats.
//!
//! Certified mode derives every parameter from the condition estimate and
//! refuses to continue when the certified grid level exceeds the point
//! budget; the required level is part of the error so the caller sees what
//! the certificate would cost. Heuristic mode reuses the same stages with
//! user-supplied parameters.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex;
use crate::condition::{self, ConditionError, Verdict};
use crate::formula::{Formula, FormulaError, LaxAtom, LaxFormula};
use crate::grid::GridSpec;
use crate::homology::{homology_groups, HomologySummary};
use crate::poly::{CompiledPoly, PolyError, PolyTuple, Polynomial};
use crate::sampling::{atom_holds, shifted_threshold};
use crate::schedule::{Schedule, ScheduleError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the homogenized tuple is ill-conditioned beyond the cap {cap}; certified mode cannot continue")]
    IllConditioned { cap: f64 },
    #[error("certified run needs grid level {level} with {points:.3e} points, over the budget of {budget}")]
    ResourceExceeded { level: u32, points: f64, budget: u64 },
    #[error("condition estimation failed: {0}")]
    Condition(#[from] ConditionError),
    #[error("formula stage error: {0}")]
    Formula(#[from] FormulaError),
    #[error("schedule error: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("polynomial error: {0}")]
    Poly(#[from] PolyError),
    #[error("nerve combination error: {0}")]
    Complex(#[from] complex::ComplexError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0} overrides are only honored in heuristic mode")]
    OverrideInCertifiedMode(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Certified,
    Heuristic,
}

/// Run parameters. The overrides only apply in heuristic mode.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub kappa: Option<f64>,
    pub grid_level: Option<u32>,
    pub cech_radius: Option<f64>,
    pub blocks: Option<usize>,
    pub max_kappa: f64,
    pub grid_budget: u64,
    pub max_dim: Option<usize>,
}

impl RunConfig {
    pub fn certified() -> Self {
        Self {
            mode: Mode::Certified,
            kappa: None,
            grid_level: None,
            cech_radius: None,
            blocks: None,
            max_kappa: 1e6,
            grid_budget: 200_000_000,
            max_dim: None,
        }
    }

    pub fn heuristic() -> Self {
        Self {
            mode: Mode::Heuristic,
            ..Self::certified()
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.mode == Mode::Certified {
            if self.kappa.is_some() {
                return Err(PipelineError::OverrideInCertifiedMode("condition"));
            }
            if self.grid_level.is_some() {
                return Err(PipelineError::OverrideInCertifiedMode("grid level"));
            }
            if self.cech_radius.is_some() {
                return Err(PipelineError::OverrideInCertifiedMode("nerve radius"));
            }
            if self.blocks.is_some() {
                return Err(PipelineError::OverrideInCertifiedMode("block count"));
            }
        }
        Ok(())
    }
}

/// How the condition value entering the schedule was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaSource {
    Estimated,
    Override,
    Default,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub mode: Mode,
    pub kappa: f64,
    pub kappa_source: KappaSource,
    pub condition_evaluations: u64,
    pub blocks: usize,
    pub grid_level: u32,
    pub grid_points: u64,
    pub cech_radius: f64,
    pub cloud_sizes: Vec<(LaxAtom, u64)>,
    pub satisfying_vertices: u64,
    pub simplex_counts: Vec<usize>,
    pub max_dim: usize,
}

#[derive(Debug, Clone)]
pub struct HomologyOutput {
    pub summary: HomologySummary,
    pub diagnostics: Diagnostics,
}

/// Computes the homology groups of the semialgebraic set of `(p, psi)` up
/// to dimension `min(n, max_dim)`.
pub fn homology_semialgebraic(
    p: &PolyTuple,
    psi: &Formula,
    config: &RunConfig,
) -> Result<HomologyOutput, PipelineError> {
    config.validate()?;
    let n = p.num_vars();
    let strict = psi.eliminate_negations().eliminate_lax()?;
    let f = p.homogenize();
    let phi = strict.homogenize()?;
    let degree = f.max_degree();

    let mut evaluations = 0u64;
    let (kappa, kappa_source) = match config.mode {
        Mode::Certified => {
            let est = condition::estimate_kappa_with_budget(
                &f,
                config.max_kappa,
                config.grid_budget,
            )?;
            evaluations = est.evaluations;
            match est.verdict {
                Verdict::Finite(k) => (k.max(1.0), KappaSource::Estimated),
                Verdict::IllConditioned { cap } => {
                    return Err(PipelineError::IllConditioned { cap });
                }
            }
        }
        Mode::Heuristic => match config.kappa {
            Some(k) => (k, KappaSource::Override),
            None => (1.0, KappaSource::Default),
        },
    };

    let m = config.blocks.unwrap_or(n + 2);
    let schedule = Schedule::with_m(m, degree, kappa)?;
    let grid_level = config.grid_level.unwrap_or_else(|| schedule.grid_level());
    let cech_radius = config.cech_radius.unwrap_or_else(|| schedule.cech_radius());
    let phibar = phi.gv_rewrite(&schedule)?;
    let atoms = phibar.atoms();

    let spec = GridSpec::new(n, grid_level);
    if spec.point_count() > config.grid_budget as u128 {
        return Err(PipelineError::ResourceExceeded {
            level: grid_level,
            points: spec.point_count() as f64,
            budget: config.grid_budget,
        });
    }

    let sampled = sample_satisfying_vertices(&f, schedule.t(), &spec, &phibar, &atoms)?;

    // Homology up to max_dim only needs simplices of cardinality
    // max_dim + 2; the truncation bound n + 2 caps it from above.
    let max_dim = config.max_dim.unwrap_or(n).min(n);
    let max_card = (max_dim + 2).min(n + 2);
    let complex = complex::combine_from_masks(
        &phibar,
        &atoms,
        &sampled.ids,
        &sampled.masks,
        &sampled.coords,
        n + 1,
        cech_radius,
        max_card,
    );
    let summary = homology_groups(&complex, max_dim);
    let simplex_counts = (0..=complex.top_dimension().unwrap_or(0))
        .map(|d| complex.num_simplices(d))
        .collect();

    Ok(HomologyOutput {
        summary,
        diagnostics: Diagnostics {
            mode: config.mode,
            kappa,
            kappa_source,
            condition_evaluations: evaluations,
            blocks: m,
            grid_level,
            grid_points: spec.point_count() as u64,
            cech_radius,
            cloud_sizes: atoms
                .iter()
                .zip(&sampled.cloud_sizes)
                .map(|(a, &s)| (*a, s))
                .collect(),
            satisfying_vertices: sampled.ids.len() as u64,
            simplex_counts,
            max_dim,
        },
    })
}

struct SampledVertices {
    ids: Vec<u32>,
    masks: Vec<u128>,
    coords: Vec<f64>,
    cloud_sizes: Vec<u64>,
}

/// Streams the grid, evaluates the needed polynomials once per point, builds
/// the per-atom membership mask and keeps the vertices whose own mask
/// satisfies the formula. Cloud sizes are tallied for all atoms.
fn sample_satisfying_vertices(
    f: &PolyTuple,
    t: &[f64],
    spec: &GridSpec,
    phibar: &LaxFormula,
    atoms: &[LaxAtom],
) -> Result<SampledVertices, PipelineError> {
    if atoms.len() > complex::MAX_COMBINE_ATOMS {
        return Err(PipelineError::Complex(complex::ComplexError::TooManyAtoms {
            got: atoms.len(),
            max: complex::MAX_COMBINE_ATOMS,
        }));
    }
    assert!(
        spec.point_count() <= u32::MAX as u128,
        "grid budget keeps point indices in u32"
    );
    let tolerance = (f.max_degree() as f64).sqrt() * spec.covering_radius();
    let norms = f.member_norms();
    let mut needed_polys: Vec<usize> = atoms.iter().map(|a| a.poly).collect();
    needed_polys.sort_unstable();
    needed_polys.dedup();
    let compiled: Vec<(usize, CompiledPoly)> = needed_polys
        .iter()
        .map(|&i| (i, CompiledPoly::new(f.get(i))))
        .collect();
    let shifted: Vec<f64> = atoms
        .iter()
        .map(|a| shifted_threshold(t, tolerance, a))
        .collect();
    let program = MaskProgram::compile(phibar, atoms);

    struct Part {
        ids: Vec<u32>,
        masks: Vec<u128>,
        coords: Vec<f64>,
        cloud_sizes: Vec<u64>,
    }
    let rows = spec.row_count();
    let parts: Vec<Part> = (0..rows)
        .into_par_iter()
        .map(|row| {
            let mut part = Part {
                ids: Vec::new(),
                masks: Vec::new(),
                coords: Vec::new(),
                cloud_sizes: vec![0u64; atoms.len()],
            };
            let mut values = vec![0f64; f.len()];
            spec.for_each_point_in_row(row, |idx, x| {
                for (i, poly) in &compiled {
                    values[*i] = poly.eval(x) / norms[*i];
                }
                let mut mask = 0u128;
                for (bit, atom) in atoms.iter().enumerate() {
                    if atom_holds(atom.dir, values[atom.poly], shifted[bit]) {
                        mask |= 1 << bit;
                        part.cloud_sizes[bit] += 1;
                    }
                }
                if mask != 0 && program.eval(mask) {
                    part.ids.push(idx as u32);
                    part.masks.push(mask);
                    part.coords.extend_from_slice(x);
                }
            });
            part
        })
        .collect();

    let mut out = SampledVertices {
        ids: Vec::new(),
        masks: Vec::new(),
        coords: Vec::new(),
        cloud_sizes: vec![0u64; atoms.len()],
    };
    for part in parts {
        out.ids.extend(part.ids);
        out.masks.extend(part.masks);
        out.coords.extend(part.coords);
        for (acc, s) in out.cloud_sizes.iter_mut().zip(part.cloud_sizes) {
            *acc += s;
        }
    }
    Ok(out)
}

/// Postfix program evaluating the lax formula over an atom-membership mask;
/// avoids walking the tree once per grid point.
struct MaskProgram {
    ops: Vec<MaskOp>,
}

enum MaskOp {
    Atom(u32),
    And(u32),
    Or(u32),
}

impl MaskProgram {
    fn compile(phibar: &LaxFormula, atoms: &[LaxAtom]) -> Self {
        let bit_of: BTreeMap<LaxAtom, u32> = atoms
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, i as u32))
            .collect();
        let mut ops = Vec::new();
        fn go(f: &LaxFormula, bit_of: &BTreeMap<LaxAtom, u32>, ops: &mut Vec<MaskOp>) {
            match f {
                LaxFormula::Atom(a) => ops.push(MaskOp::Atom(bit_of[a])),
                LaxFormula::And(ch) => {
                    for c in ch {
                        go(c, bit_of, ops);
                    }
                    ops.push(MaskOp::And(ch.len() as u32));
                }
                LaxFormula::Or(ch) => {
                    for c in ch {
                        go(c, bit_of, ops);
                    }
                    ops.push(MaskOp::Or(ch.len() as u32));
                }
            }
        }
        go(phibar, &bit_of, &mut ops);
        Self { ops }
    }

    #[inline]
    fn eval(&self, mask: u128) -> bool {
        let mut stack: Vec<bool> = Vec::with_capacity(16);
        for op in &self.ops {
            match op {
                MaskOp::Atom(bit) => stack.push(mask >> bit & 1 == 1),
                MaskOp::And(k) => {
                    let at = stack.len() - *k as usize;
                    let v = stack[at..].iter().all(|&b| b);
                    stack.truncate(at);
                    stack.push(v);
                }
                MaskOp::Or(k) => {
                    let at = stack.len() - *k as usize;
                    let v = stack[at..].iter().any(|&b| b);
                    stack.truncate(at);
                    stack.push(v);
                }
            }
        }
        stack.pop().unwrap_or(false)
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct InputFile {
    pub n: usize,
    pub polynomials: Vec<PolynomialJson>,
    pub formula: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PolynomialJson {
    pub degree: u32,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Parses the input file into a tuple and formula.
pub fn parse_input(text: &str) -> Result<(PolyTuple, Formula), PipelineError> {
    let input: InputFile =
        serde_json::from_str(text).map_err(|e| PipelineError::Input(e.to_string()))?;
    input_to_problem(&input)
}

pub fn input_to_problem(input: &InputFile) -> Result<(PolyTuple, Formula), PipelineError> {
    if input.polynomials.is_empty() {
        return Err(PipelineError::Input("no polynomials given".to_string()));
    }
    let polys: Result<Vec<Polynomial>, PolyError> = input
        .polynomials
        .iter()
        .map(|pj| {
            Polynomial::from_terms(
                input.n,
                pj.degree,
                pj.terms.iter().map(|t| (t.coeff, t.exponents.clone())),
            )
        })
        .collect();
    let tuple = PolyTuple::new(polys?)?;
    let formula = Formula::from_json(&input.formula)?;
    let q = tuple.len();
    let mut bad_index = None;
    let mut walk = |f: &Formula| {
        if f.poly_count() > q {
            bad_index = Some(f.poly_count() - 1);
        }
    };
    walk(&formula);
    if let Some(i) = bad_index {
        return Err(PipelineError::Input(format!(
            "formula references polynomial {i} but the tuple has {q}"
        )));
    }
    Ok((tuple, formula))
}

/// Output record: Betti numbers, torsion, the condition value used and the
/// run parameters. Torsion coefficients are JSON integers when they fit and
/// decimal strings otherwise.
pub fn output_json(out: &HomologyOutput) -> serde_json::Value {
    let torsion: Vec<Vec<serde_json::Value>> = out
        .summary
        .torsion
        .iter()
        .map(|dim| {
            dim.iter()
                .map(|d| match u64::try_from(d) {
                    Ok(v) => serde_json::json!(v),
                    Err(_) => serde_json::json!(d.to_string()),
                })
                .collect()
        })
        .collect();
    serde_json::json!({
        "betti": out.summary.betti,
        "torsion": torsion,
        "condition": out.diagnostics.kappa,
        "condition_source": out.diagnostics.kappa_source,
        "mode": out.diagnostics.mode,
        "parameters": {
            "m": out.diagnostics.blocks,
            "grid_level": out.diagnostics.grid_level,
            "epsilon_cech": out.diagnostics.cech_radius,
            "grid_points": out.diagnostics.grid_points,
            "simplices": out.diagnostics.simplex_counts,
            "satisfying_vertices": out.diagnostics.satisfying_vertices,
            "max_dim": out.diagnostics.max_dim,
            "cloud_sizes": out.diagnostics.cloud_sizes.iter().map(|(a, s)| {
                serde_json::json!({
                    "poly": a.poly,
                    "threshold": a.threshold,
                    "dir": match a.dir {
                        crate::formula::LaxDir::Ge => ">=",
                        crate::formula::LaxDir::Le => "<=",
                    },
                    "points": s,
                })
            }).collect::<Vec<_>>(),
        },
    })
}

/// The ill-conditioned verdict in the output format.
pub fn ill_conditioned_json(cap: f64, mode: Mode) -> serde_json::Value {
    serde_json::json!({
        "betti": serde_json::Value::Null,
        "torsion": serde_json::Value::Null,
        "condition": "ill-conditioned",
        "max_kappa": cap,
        "mode": mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Relation;

    fn poly_json(degree: u32, terms: &[(f64, &[u32])]) -> PolynomialJson {
        PolynomialJson {
            degree,
            terms: terms
                .iter()
                .map(|(c, e)| TermJson {
                    coeff: *c,
                    exponents: e.to_vec(),
                })
                .collect(),
        }
    }

    fn half_lines_input() -> InputFile {
        InputFile {
            n: 2,
            polynomials: vec![
                poly_json(1, &[(1.0, &[1, 0]), (-1.0, &[0, 1])]),
                poly_json(1, &[(1.0, &[0, 1])]),
            ],
            formula: serde_json::json!({
                "op": "or",
                "args": [
                    {"op": "and", "args": [
                        {"atom": {"poly": 0, "rel": "="}},
                        {"atom": {"poly": 1, "rel": ">"}},
                    ]},
                    {"op": "and", "args": [
                        {"atom": {"poly": 1, "rel": "="}},
                        {"atom": {"poly": 0, "rel": ">"}},
                    ]},
                ],
            }),
        }
    }

    #[test]
    fn input_parses_to_tuple_and_formula() {
        let text = serde_json::to_string(&half_lines_input()).unwrap();
        let (p, psi) = parse_input(&text).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.num_vars(), 2);
        assert_eq!(psi.size(), 4);
    }

    #[test]
    fn input_rejects_out_of_range_atoms() {
        let mut input = half_lines_input();
        input.formula = serde_json::json!({"atom": {"poly": 5, "rel": ">"}});
        let text = serde_json::to_string(&input).unwrap();
        assert!(matches!(
            parse_input(&text),
            Err(PipelineError::Input(_))
        ));
    }

    #[test]
    fn certified_mode_rejects_overrides() {
        let mut config = RunConfig::certified();
        config.kappa = Some(2.0);
        let (p, psi) = parse_input(&serde_json::to_string(&half_lines_input()).unwrap()).unwrap();
        assert!(matches!(
            homology_semialgebraic(&p, &psi, &config),
            Err(PipelineError::OverrideInCertifiedMode(_))
        ));
    }

    #[test]
    fn certified_mode_reports_the_required_level() {
        // On the circle the condition estimate converges on small grids but
        // the certified level still needs more points than this budget; the
        // refusal names the level that would be needed.
        let p = PolyTuple::new(vec![Polynomial::scaled_variable(1, 0, 1.0)]).unwrap();
        let psi = Formula::atom(0, Relation::Gt);
        let mut config = RunConfig::certified();
        config.grid_budget = 100_000;
        match homology_semialgebraic(&p, &psi, &config) {
            Err(PipelineError::ResourceExceeded { level, .. }) => {
                assert!(level >= 14, "level = {level}");
            }
            other => panic!("expected a resource refusal, got {other:?}"),
        }
    }

    #[test]
    fn unsatisfiable_formula_yields_zero_homology() {
        let p = PolyTuple::new(vec![Polynomial::scaled_variable(2, 0, 1.0)]).unwrap();
        let psi = Formula::And(vec![
            Formula::atom(0, Relation::Gt),
            Formula::atom(0, Relation::Lt),
        ]);
        let mut config = RunConfig::heuristic();
        config.grid_level = Some(4);
        config.cech_radius = Some(0.2);
        config.blocks = Some(1);
        config.max_dim = Some(1);
        let out = homology_semialgebraic(&p, &psi, &config).unwrap();
        assert_eq!(out.summary.betti, vec![0, 0]);
        assert!(!out.summary.has_torsion());
    }

    #[test]
    fn mask_program_matches_tree_evaluation() {
        use crate::formula::LaxDir;
        let a = LaxAtom {
            poly: 0,
            threshold: 1,
            dir: LaxDir::Ge,
        };
        let b = LaxAtom {
            poly: 1,
            threshold: 2,
            dir: LaxDir::Le,
        };
        let c = LaxAtom {
            poly: 2,
            threshold: 3,
            dir: LaxDir::Ge,
        };
        let f = LaxFormula::Or(vec![
            LaxFormula::And(vec![LaxFormula::Atom(a), LaxFormula::Atom(b)]),
            LaxFormula::Atom(c),
        ]);
        let atoms = f.atoms();
        let program = MaskProgram::compile(&f, &atoms);
        for mask in 0u128..8 {
            let direct = f
                .eval_with(&mut |at: &LaxAtom| {
                    let bit = atoms.iter().position(|x| x == at).unwrap();
                    Some(mask >> bit & 1 == 1)
                })
                .unwrap();
            assert_eq!(program.eval(mask), direct, "mask {mask:b}");
        }
    }

    #[test]
    fn output_json_shape() {
        let out = HomologyOutput {
            summary: HomologySummary {
                betti: vec![1, 1],
                torsion: vec![vec![], vec![]],
            },
            diagnostics: Diagnostics {
                mode: Mode::Heuristic,
                kappa: 1.0,
                kappa_source: KappaSource::Default,
                condition_evaluations: 0,
                blocks: 1,
                grid_level: 6,
                grid_points: 1000,
                cech_radius: 0.01,
                cloud_sizes: vec![],
                satisfying_vertices: 10,
                simplex_counts: vec![10, 12],
                max_dim: 1,
            },
        };
        let v = output_json(&out);
        assert_eq!(v["betti"], serde_json::json!([1, 1]));
        assert_eq!(v["mode"], serde_json::json!("heuristic"));
        assert_eq!(v["parameters"]["m"], serde_json::json!(1));
    }
}
