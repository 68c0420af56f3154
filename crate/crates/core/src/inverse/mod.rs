//! Conductivity reconstruction from target CGPTs.

pub mod config;
pub mod history;
pub mod metrics;
pub mod objective;
pub mod reconstruct;
pub mod step;

pub use config::{
    EigenWeight, Functional, InitialGuess, InversionConfig, Method, Penalty, SearchSpace, Stage, StepRule,
    WeightScheme,
};
pub use history::{InversionHistory, IterationRecord, StageSummary, StopReason};
pub use metrics::{epsilon_metrics, first_perturbation, l2_error, spearman};
pub use objective::{frechet_apply, gradient_field, s1_value, s2_value, weight_matrix, Objective};
pub use reconstruct::{recursive_reconstruct, Reconstruction};
pub use step::{landweber_step, morozov_stop, newton_step, InversionState, StepKind, StepOutcome, StepSettings};

use crate::cgpt::CgptMatrix;
use crate::field::AnalyticSigma;

/// Target CGPTs `y_mn` (possibly noisy) with the declared noise level.
#[derive(Debug, Clone)]
pub struct TargetData {
    pub cgpt: CgptMatrix,
    /// Frobenius norm of the data noise; 0 disables the discrepancy principle.
    pub noise_level: f64,
    /// Known conductivity, used only for the `ε_σ` metric.
    pub truth: Option<AnalyticSigma>,
}

/// Adds a symmetric Gaussian perturbation scaled to Frobenius norm `delta`.
pub fn perturb_target(y: &CgptMatrix, delta: f64, seed: u64) -> crate::Result<CgptMatrix> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(crate::error::invalid(format!("noise level must be finite and non-negative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * y.order();
    let g = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let sym = &g + g.transpose();
    let noise = &sym * (delta / sym.norm());
    CgptMatrix::from_assembled(&(y.assemble() + noise))
}
