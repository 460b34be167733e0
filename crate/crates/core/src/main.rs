//! Command line front end: reads a problem file, runs the pipeline and
//! prints the homology summary, optionally exporting the sampled clouds and
//! the combined complex.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use semialg_homology::complex::MAX_COMBINE_ATOMS;
use semialg_homology::formula::LaxDir;
use semialg_homology::grid::Grid;
use semialg_homology::pipeline::{
    self, homology_semialgebraic, ill_conditioned_json, output_json, Mode, PipelineError,
    RunConfig,
};
use semialg_homology::sampling::sample_atomic_clouds;
use semialg_homology::schedule::Schedule;

/// Homology (Betti numbers and torsion) of a semialgebraic set given by a
/// polynomial tuple and a Boolean formula.
#[derive(Parser, Debug)]
#[command(name = "homology", version, about)]
struct Args {
    /// Input JSON file: {"n", "polynomials", "formula"}.
    input: PathBuf,

    /// certified derives all parameters from a condition estimate;
    /// heuristic accepts the overrides below.
    #[arg(long, value_enum, default_value = "certified")]
    mode: ModeArg,

    /// Condition value for the schedule (heuristic mode).
    #[arg(long)]
    kappa: Option<f64>,

    /// Grid level (heuristic mode).
    #[arg(long)]
    grid_level: Option<u32>,

    /// Nerve radius (heuristic mode).
    #[arg(long)]
    epsilon: Option<f64>,

    /// Number of relaxation blocks (heuristic mode).
    #[arg(long)]
    m: Option<usize>,

    /// Abort certified runs when the condition estimate exceeds this cap.
    #[arg(long, default_value_t = 1e6)]
    max_kappa: f64,

    /// Largest grid (in points) the run may touch.
    #[arg(long, default_value_t = 200_000_000)]
    budget: u64,

    /// Highest homology dimension to report (defaults to n).
    #[arg(long)]
    max_dim: Option<usize>,

    /// Write the sampled atomic clouds as CSV (atom, index, coordinates).
    #[arg(long)]
    export_cloud: Option<PathBuf>,

    /// Write the combined complex as flat text (one simplex per line).
    #[arg(long)]
    export_complex: Option<PathBuf>,

    /// Machine-readable JSON on stdout instead of the summary.
    #[arg(long)]
    json: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Certified,
    Heuristic,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(&args.input)?;
    let (p, psi) = pipeline::parse_input(&text)?;
    let mode = match args.mode {
        ModeArg::Certified => Mode::Certified,
        ModeArg::Heuristic => Mode::Heuristic,
    };
    let config = RunConfig {
        mode,
        kappa: args.kappa,
        grid_level: args.grid_level,
        cech_radius: args.epsilon,
        blocks: args.m,
        max_kappa: args.max_kappa,
        grid_budget: args.budget,
        max_dim: args.max_dim,
    };

    let out = match homology_semialgebraic(&p, &psi, &config) {
        Ok(out) => out,
        Err(PipelineError::IllConditioned { cap }) => {
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&ill_conditioned_json(cap, mode))?
                );
            } else {
                println!("condition: ill-conditioned (cap {cap:.3e}); no certified answer");
            }
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };

    if let Some(path) = &args.export_complex {
        export_complex(&p, &psi, &config, &out, path)?;
    }
    if let Some(path) = &args.export_cloud {
        export_clouds(&p, &psi, &config, &out, path)?;
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&output_json(&out))?);
    } else {
        let d = &out.diagnostics;
        println!("betti: {:?}", out.summary.betti);
        let torsion: Vec<Vec<String>> = out
            .summary
            .torsion
            .iter()
            .map(|ds| ds.iter().map(|d| d.to_string()).collect())
            .collect();
        println!("torsion: {torsion:?}");
        println!(
            "condition: {:.6} ({:?}), m = {}, grid level = {} ({} points), nerve radius = {:.3e}",
            d.kappa, d.kappa_source, d.blocks, d.grid_level, d.grid_points, d.cech_radius
        );
        println!(
            "vertices kept: {}, simplices per dimension: {:?}",
            d.satisfying_vertices, d.simplex_counts
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Re-runs the combination on a materialized grid to export the complex.
/// Only sensible at heuristic scales; the budget guards the same limit as
/// the main run.
fn export_complex(
    p: &semialg_homology::PolyTuple,
    psi: &semialg_homology::Formula,
    config: &RunConfig,
    out: &pipeline::HomologyOutput,
    path: &std::path::Path,
) -> Result<(), Box<dyn std::error::Error>> {
    let complex = rebuild_complex(p, psi, config, out)?;
    fs::write(path, complex.to_flat_text())?;
    Ok(())
}

fn rebuild_complex(
    p: &semialg_homology::PolyTuple,
    psi: &semialg_homology::Formula,
    config: &RunConfig,
    out: &pipeline::HomologyOutput,
) -> Result<semialg_homology::complex::SimplicialComplex, Box<dyn std::error::Error>> {
    let d = &out.diagnostics;
    let f = p.homogenize();
    let strict = psi.eliminate_negations().eliminate_lax()?;
    let phi = strict.homogenize()?;
    let schedule = Schedule::with_m(d.blocks, f.max_degree(), d.kappa.max(1.0))?;
    let phibar = phi.gv_rewrite(&schedule)?;
    let grid = Grid::build(p.num_vars(), d.grid_level, config.grid_budget)?;
    let clouds = sample_atomic_clouds(&f, schedule.t(), &grid, &phibar.atoms());
    let complex = semialg_homology::complex::combine(
        &phibar,
        &clouds,
        &grid,
        d.cech_radius,
        (d.max_dim + 2).min(p.num_vars() + 2),
    )?;
    Ok(complex)
}

fn export_clouds(
    p: &semialg_homology::PolyTuple,
    psi: &semialg_homology::Formula,
    config: &RunConfig,
    out: &pipeline::HomologyOutput,
    path: &std::path::Path,
) -> Result<(), Box<dyn std::error::Error>> {
    let d = &out.diagnostics;
    let f = p.homogenize();
    let strict = psi.eliminate_negations().eliminate_lax()?;
    let phi = strict.homogenize()?;
    let schedule = Schedule::with_m(d.blocks, f.max_degree(), d.kappa.max(1.0))?;
    let phibar = phi.gv_rewrite(&schedule)?;
    let atoms = phibar.atoms();
    if atoms.len() > MAX_COMBINE_ATOMS {
        return Err("too many atoms to export".into());
    }
    let grid = Grid::build(p.num_vars(), d.grid_level, config.grid_budget)?;
    let clouds = sample_atomic_clouds(&f, schedule.t(), &grid, &atoms);
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write!(file, "poly,threshold,dir,grid_index")?;
    for c in 0..=p.num_vars() {
        write!(file, ",x{c}")?;
    }
    writeln!(file)?;
    for (atom, cloud) in &clouds {
        let dir = match atom.dir {
            LaxDir::Ge => ">=",
            LaxDir::Le => "<=",
        };
        for &idx in cloud.indices() {
            write!(file, "{},{},{},{}", atom.poly, atom.threshold, dir, idx)?;
            for v in grid.point(idx as usize) {
                write!(file, ",{v}")?;
            }
            writeln!(file)?;
        }
    }
    Ok(())
}
