// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod symmetry;
pub mod variational;

pub use analysis::{
    count_nodal_domains, dipole_construct, dipole_study, nodal_sensitivity, radial_symmetry_residual, summarize,
    DipoleResult, FieldSummary, NodalReport, RadialBlock, RadialReport,
};
pub use error::{Error, Result};
pub use grid::{dirichlet_energy, integrate, laplacian_apply, Field, GridSpec};
pub use model::{critical_exponent, potential_values, HypothesisReport, NonlinearityModel, PowerTerm};
pub use solver::{
    linear_ground_eigenpair, multi_start, solve_constrained_ground_state, Init, MultiStart, Problem, SolveReport,
    SolverConfig, StepRule, TraceEntry,
};
pub use symmetry::{GroupElement, SymmetryConstraint, SymmetryGroup};
pub use variational::{Branch, EnergyBreakdown, Functional};

/// Sizes the global rayon pool from `NLS_THREADS` when set. Reductions use
/// fixed blocks, so results do not depend on the thread count.
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var("NLS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("NLS_THREADS = `{raw}` must be a positive integer")))?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
