//! Numerical checks of the stability and robustness properties:
//! positivity and absorption, moment bounds, and Wasserstein decay of
//! input perturbations with depth.

mod checks;
mod experiments;
mod robustness;
mod wasserstein;

pub use checks::{check_moment_bound, check_positivity_and_absorption, MomentReport, PositivityReport};
pub use experiments::{
    diffusion_comparison, form_name, kind_name, missing_rate_sweep, prepare_run, run_pipeline, solver_runtime, test_seed,
    DiffusionComparison, PreparedRun, RunOutcome,
    RunSpec, RuntimeReport, SweepCell, SweepReport, SweepRow, VariantCurve, DIFFUSION_VARIANTS,
};
pub use robustness::{
    dissipative_model, perturb, robustness_curve, CurvePoint, CurveSpec, DissipativeSpec, LipschitzReport, RobustnessCurve,
};
pub use wasserstein::{spearman, w1_sliced, w1_sorted, W1Method, WassersteinEstimate};
