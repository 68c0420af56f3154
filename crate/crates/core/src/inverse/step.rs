//! Single Landweber and Newton updates.

use serde::{Deserialize, Serialize};

use super::config::{SearchSpace, StepRule};
use super::objective::{descent_direction, Evaluation, Objective};
use crate::error::Result;
use crate::field::{clamp_values, ConductivityField};
use crate::forward::ForwardModel;
use crate::mesh::DiskMesh;

/// Step sizes below this count as a stalled line search.
pub const MIN_STEP: f64 = 1e-14;
/// Newton denominators at or below this fall back to Landweber.
pub const NEWTON_DEGENERACY: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Initial,
    Landweber,
    Newton,
    /// Newton was degenerate or did not decrease the functional.
    NewtonFallback,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::Landweber => "landweber",
            StepKind::Newton => "newton",
            StepKind::NewtonFallback => "newton-fallback",
        }
    }
}

/// Iterate with its forward solution and objective value.
#[derive(Debug, Clone)]
pub struct InversionState {
    pub forward: ForwardModel,
    pub evaluation: Evaluation,
}

impl InversionState {
    pub fn new(sigma: &ConductivityField, boundary_order: usize, objective: &Objective) -> Result<Self> {
        let forward = ForwardModel::new(sigma, boundary_order)?;
        let evaluation = objective.evaluate(&forward)?;
        Ok(Self { forward, evaluation })
    }

    pub fn sigma(&self) -> &ConductivityField {
        self.forward.sigma()
    }

    pub fn value(&self) -> f64 {
        self.evaluation.total()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepSettings {
    pub rule: StepRule,
    pub clamp: f64,
    pub search_space: SearchSpace,
}

#[derive(Debug)]
pub enum StepOutcome {
    Accepted { state: InversionState, step: f64, kind: StepKind },
    /// Zero gradient or line-search underflow.
    Stalled,
}

fn mass_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mass.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

fn project(mesh: &DiskMesh, space: SearchSpace, mut v: Vec<f64>) -> Vec<f64> {
    if space == SearchSpace::Constant {
        let mass = mesh.lumped_mass();
        let mean = mass_dot(&mass, &v, &vec![1.0; v.len()]) / mass.iter().sum::<f64>();
        v.iter_mut().for_each(|x| *x = mean);
    }
    v
}

fn trial(
    state: &InversionState,
    objective: &Objective,
    direction: &[f64],
    t: f64,
    clamp: f64,
) -> Result<(InversionState, Vec<f64>)> {
    let sigma = state.sigma();
    let moved: Vec<f64> = sigma.values().iter().zip(direction).map(|(s, d)| s + t * d).collect();
    let values = clamp_values(&moved, clamp);
    let field = ConductivityField::new(sigma.mesh().clone(), values.clone(), clamp)?;
    let next = InversionState::new(&field, state.forward.boundary_order(), objective)?;
    Ok((next, values))
}

/// `σ + tG` clamped to `[1/c, c]`, with `G` the negative objective gradient.
///
/// Armijo accepts the first `t` with `S(σ₊) ≤ S(σ) − slope·⟨G, σ₊ − σ⟩` and a
/// strict decrease; a trial whose forward solve fails counts as a rejection.
pub fn landweber_step(state: &InversionState, objective: &Objective, settings: &StepSettings) -> Result<StepOutcome> {
    let mesh = state.sigma().mesh().clone();
    let g = project(&mesh, settings.search_space, descent_direction(&state.forward, objective, &state.evaluation)?);
    let mass = mesh.lumped_mass();
    if mass_dot(&mass, &g, &g) == 0.0 {
        return Ok(StepOutcome::Stalled);
    }
    match settings.rule {
        StepRule::Fixed { t } => {
            let (next, _) = trial(state, objective, &g, t, settings.clamp)?;
            Ok(StepOutcome::Accepted { state: next, step: t, kind: StepKind::Landweber })
        }
        StepRule::Armijo { initial, shrink, slope, max_backtracks } => {
            let s0 = state.value();
            let mut t = initial;
            for _ in 0..=max_backtracks {
                if t < MIN_STEP {
                    break;
                }
                if let Ok((next, values)) = trial(state, objective, &g, t, settings.clamp) {
                    let moved: Vec<f64> = values.iter().zip(state.sigma().values()).map(|(a, b)| a - b).collect();
                    let s1 = next.value();
                    if s1 < s0 && s1 <= s0 - slope * mass_dot(&mass, &g, &moved) {
                        return Ok(StepOutcome::Accepted { state: next, step: t, kind: StepKind::Landweber });
                    }
                }
                t *= shrink;
            }
            Ok(StepOutcome::Stalled)
        }
    }
}

/// Pseudo-inverse Newton update over the objective's spanning directions
/// `ψ_p`: `σ₊ = σ − 2S/Σ s_p² · Σ s_p ψ_p` with `s_p = S'(σ)[ψ_p]`.
pub fn newton_step(state: &InversionState, objective: &Objective, settings: &StepSettings) -> Result<StepOutcome> {
    let mesh = state.sigma().mesh().clone();
    let mass = mesh.lumped_mass();
    let s = state.value();
    if s > 0.0 {
        let g = descent_direction(&state.forward, objective, &state.evaluation)?;
        let densities = objective.newton_densities(&state.forward, &state.evaluation)?;
        let mut correction = vec![0.0; mesh.vertex_count()];
        let mut denom = 0.0;
        for density in &densities {
            let psi = project(&mesh, settings.search_space, mesh.element_to_nodal(density));
            let sp = -mass_dot(&mass, &psi, &g);
            denom += sp * sp;
            correction.iter_mut().zip(&psi).for_each(|(c, p)| *c += sp * p);
        }
        if denom > NEWTON_DEGENERACY {
            let scale = -2.0 * s / denom;
            if let Ok((next, _)) = trial(state, objective, &correction, scale, settings.clamp) {
                if next.value() < s {
                    return Ok(StepOutcome::Accepted { state: next, step: 1.0, kind: StepKind::Newton });
                }
            }
        }
    }
    Ok(match landweber_step(state, objective, settings)? {
        StepOutcome::Accepted { state, step, .. } => StepOutcome::Accepted { state, step, kind: StepKind::NewtonFallback },
        StepOutcome::Stalled => StepOutcome::Stalled,
    })
}

/// Discrepancy principle: `residual ≤ τδ`, never with `δ = 0`.
pub fn morozov_stop(residual: f64, delta: f64, tau: f64) -> bool {
    delta > 0.0 && residual <= tau * delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgpt::constant_cgpt;
    use crate::inverse::config::{EigenWeight, Functional, Penalty, WeightScheme};
    use crate::inverse::objective::{weight_matrix, Regularization};
    use crate::mesh::build_refined_mesh;
    use std::sync::Arc;

    fn objective(order: usize, target: crate::cgpt::CgptMatrix) -> Objective {
        Objective {
            target,
            weights: weight_matrix(WeightScheme::Unit, order),
            functional: Functional::S1,
            eigen_weights: EigenWeight::Unit,
            regularization: None,
        }
    }

    fn settings(space: SearchSpace) -> StepSettings {
        StepSettings { rule: StepRule::default(), clamp: 10.0, search_space: space }
    }

    #[test]
    fn morozov_rule() {
        assert!(!morozov_stop(0.0, 0.0, 1.2));
        assert!(morozov_stop(1.2e-3, 1e-3, 1.2));
        assert!(morozov_stop(1.5, 1.0, 1.5));
        assert!(!morozov_stop(1.2e-3 * (1.0 + 1e-12), 1e-3, 1.2));
    }

    #[test]
    fn landweber_decreases_for_fifty_steps() {
        let mesh = Arc::new(build_refined_mesh(8, 3).unwrap());
        let obj = objective(1, constant_cgpt(2.0, 1).unwrap());
        let sigma = ConductivityField::constant(mesh, 1.0).unwrap();
        let mut state = InversionState::new(&sigma, 6, &obj).unwrap();
        let mut accepted = 0;
        for _ in 0..50 {
            match landweber_step(&state, &obj, &settings(SearchSpace::Nodal)).unwrap() {
                StepOutcome::Accepted { state: next, .. } => {
                    assert!(next.value() < state.value());
                    state = next;
                    accepted += 1;
                }
                StepOutcome::Stalled => break,
            }
        }
        assert!(accepted >= 10, "{accepted}");
        assert!(state.value() < 1e-3 * 4.3865, "{}", state.value());
    }

    #[test]
    fn stationary_points_do_not_move() {
        let mesh = Arc::new(build_refined_mesh(8, 3).unwrap());
        let sigma = ConductivityField::constant(mesh, 1.5).unwrap();
        let fwd = ForwardModel::new(&sigma, 6).unwrap();
        let mut obj = objective(2, fwd.cgpt(2).unwrap());
        obj.functional = Functional::S3;
        obj.regularization = Some(Regularization { q: 0.5, penalty: Penalty::L2, reference: sigma.values().to_vec() });
        let state = InversionState::new(&sigma, 6, &obj).unwrap();
        assert_eq!(state.value(), 0.0);
        assert!(matches!(landweber_step(&state, &obj, &settings(SearchSpace::Nodal)).unwrap(), StepOutcome::Stalled));
        assert!(matches!(newton_step(&state, &obj, &settings(SearchSpace::Nodal)).unwrap(), StepOutcome::Stalled));
    }

    #[test]
    fn newton_recovers_constant_quadratically() {
        let mesh = Arc::new(build_refined_mesh(8, 3).unwrap());
        let kb = 6;
        // target from the same discretization so the fixed point is exactly c = 2
        let truth = ConductivityField::constant(mesh.clone(), 2.0).unwrap();
        let target = ForwardModel::new(&truth, kb).unwrap().cgpt(1).unwrap();
        let mut obj = objective(1, target);
        obj.weights[(0, 1)] = 0.0;
        obj.weights[(1, 0)] = 0.0;
        obj.weights[(1, 1)] = 0.0;
        let sigma = ConductivityField::constant(mesh, 1.5).unwrap();
        let mut state = InversionState::new(&sigma, kb, &obj).unwrap();
        let mut steps = 0;
        while (state.sigma().values()[0] - 2.0).abs() >= 1e-6 {
            steps += 1;
            assert!(steps <= 5, "no convergence: {}", state.sigma().values()[0]);
            match newton_step(&state, &obj, &settings(SearchSpace::Constant)).unwrap() {
                StepOutcome::Accepted { state: next, kind, .. } => {
                    assert_eq!(kind, StepKind::Newton);
                    state = next;
                }
                StepOutcome::Stalled => panic!("stalled"),
            }
        }
        let v = state.sigma().values();
        assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-12));
    }

    #[test]
    fn newton_matches_landweber_for_single_orthonormal_direction() {
        // S(σ) = ½(y − aσ)² along one unit direction ψ: Newton lands on the root,
        // and it moves along the Landweber direction.
        let (a, y, sigma): (f64, f64, f64) = (1.7, 0.9, 0.2);
        let s = 0.5 * (y - a * sigma).powi(2);
        let sp = -(y - a * sigma) * a; // S'[ψ]
        let newton = sigma - 2.0 * s / (sp * sp) * sp;
        assert!((a * newton - y).abs() < 1e-15);
        let landweber_dir = -sp;
        assert!((newton - sigma) * landweber_dir > 0.0);
    }
}
