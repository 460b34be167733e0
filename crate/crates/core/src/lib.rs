//! Numerical computation of the homology groups (Betti numbers and torsion
//! coefficients) of semialgebraic sets.
//!
//! A semialgebraic set is handed in as a tuple of real polynomials together
//! with a Boolean formula over their signs. The pipeline normalizes the
//! formula, maps the set onto the unit sphere, estimates the condition
//! number of the homogenized tuple, relaxes the formula into compact blocks,
//! samples the sphere with a covering grid, assembles a nerve complex from
//! the sampled point clouds, and reads homology off integer Smith normal
//! forms.

pub mod complex;
pub mod condition;
pub mod formula;
pub mod grid;
pub mod homology;
pub mod oracle;
pub mod pipeline;
pub mod poly;
pub mod sampling;
pub mod schedule;

pub use formula::{Formula, LaxAtom, LaxDir, LaxFormula, Relation};
pub use homology::HomologySummary;
pub use pipeline::{HomologyOutput, Mode, PipelineError, RunConfig};
pub use poly::{PolyTuple, Polynomial};
pub use schedule::Schedule;
