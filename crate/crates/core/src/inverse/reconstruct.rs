//! Recursive order-raising reconstruction.

use std::f64::consts::PI;
use std::sync::Arc;

use super::config::{InitialGuess, InversionConfig, Method, Stage};
use super::history::{InversionHistory, IterationRecord, StageSummary, StopReason};
use super::metrics::{cgpt_discrepancy, relative_l2_squared};
use super::objective::{weight_matrix, Objective, Regularization};
use super::step::{landweber_step, morozov_stop, newton_step, InversionState, StepKind, StepOutcome, StepSettings};
use super::TargetData;
use crate::cgpt::CgptMatrix;
use crate::error::{invalid, Error, Result};
use crate::field::{project_sigma, prolongate, ConductivityField};
use crate::mesh::{build_refined_mesh, refine_mesh, DiskMesh};

/// Final conductivity with its iteration history.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub field: ConductivityField,
    pub history: InversionHistory,
}

/// Constant whose first CGPT matches the mean of `y^cc_11` and `y^ss_11`,
/// inverting `y = 2π(c−1)/(c+1)`.
pub fn leading_fit(target: &CgptMatrix, clamp: f64) -> f64 {
    let y = 0.5 * (target.cc[(0, 0)] + target.ss[(0, 0)]);
    let two_pi = 2.0 * PI;
    if y >= two_pi {
        return clamp;
    }
    ((two_pi + y) / (two_pi - y)).clamp(1.0 / clamp, clamp)
}

fn initial_value(target: &CgptMatrix, config: &InversionConfig) -> f64 {
    match config.initial {
        InitialGuess::Constant { value } => value.clamp(1.0 / config.clamp, config.clamp),
        InitialGuess::LeadingFit => leading_fit(target, config.clamp),
    }
}

fn refine_to(field: ConductivityField, level: usize) -> Result<ConductivityField> {
    let mut field = field;
    while field.mesh().level() < level {
        let child = Arc::new(refine_mesh(field.mesh()));
        field = prolongate(&field, child)?;
    }
    Ok(field)
}

struct Runner<'a> {
    target: &'a TargetData,
    config: &'a InversionConfig,
    delta: f64,
    history: InversionHistory,
    k: usize,
}

impl Runner<'_> {
    fn record(
        &mut self,
        stage: &Stage,
        state: &InversionState,
        truth: Option<&ConductivityField>,
        step: f64,
        kind: StepKind,
    ) -> Result<()> {
        let eps_m = cgpt_discrepancy(&state.evaluation.cgpt, &self.target.cgpt, stage.order)?;
        let eps_sigma = match truth {
            Some(t) => relative_l2_squared(state.sigma(), t)?,
            None => f64::NAN,
        };
        self.history.records.push(IterationRecord {
            k: self.k,
            stage_order: stage.order,
            eps_m,
            eps_sigma,
            step,
            functional: state.value(),
            residual: state.evaluation.residual(),
            kind,
        });
        Ok(())
    }

    fn run_stage(
        &mut self,
        stage: &Stage,
        sigma: ConductivityField,
        reference: &ConductivityField,
        first: bool,
    ) -> Result<(InversionState, StopReason)> {
        let config = self.config;
        let truth = match &self.target.truth {
            Some(spec) => Some(project_sigma(spec, sigma.mesh().clone())?),
            None => None,
        };
        let objective = Objective {
            target: self.target.cgpt.truncate(stage.order)?,
            weights: weight_matrix(config.weights, stage.order),
            functional: config.functional,
            eigen_weights: config.eigen_weights,
            regularization: Some(Regularization {
                q: config.regularization,
                penalty: config.penalty,
                reference: reference.values().to_vec(),
            }),
        };
        let settings = StepSettings { rule: config.step, clamp: config.clamp, search_space: config.search_space };
        let mut state = InversionState::new(&sigma, config.boundary_order(), &objective)?;
        if first {
            self.record(stage, &state, truth.as_ref(), 0.0, StepKind::Initial)?;
        }
        for _ in 0..stage.max_iterations {
            if morozov_stop(state.evaluation.residual(), self.delta, config.morozov_tau) {
                return Ok((state, StopReason::Morozov));
            }
            let outcome = match config.method {
                Method::Landweber => landweber_step(&state, &objective, &settings)?,
                Method::Newton => newton_step(&state, &objective, &settings)?,
            };
            match outcome {
                StepOutcome::Accepted { state: next, step, kind } => {
                    state = next;
                    self.k += 1;
                    self.record(stage, &state, truth.as_ref(), step, kind)?;
                }
                StepOutcome::Stalled => return Ok((state, StopReason::Stalled)),
            }
        }
        if morozov_stop(state.evaluation.residual(), self.delta, config.morozov_tau) {
            return Ok((state, StopReason::Morozov));
        }
        Ok((state, StopReason::MaxIterations))
    }
}

/// Runs the schedule stage by stage; each stage fits orders `1..=order`
/// starting from the previous result interpolated onto the stage mesh.
///
/// Configuration and target problems are errors. A numerical failure inside
/// a stage ends the run with [`StopReason::Failed`], the history so far and
/// the result of the last completed stage.
pub fn recursive_reconstruct(target: &TargetData, config: &InversionConfig) -> Result<Reconstruction> {
    config.validate()?;
    let final_order = config.final_order();
    if target.cgpt.order() < final_order {
        return Err(invalid(format!(
            "target order {} is below the final schedule order {final_order}",
            target.cgpt.order()
        )));
    }
    if !(target.noise_level >= 0.0) {
        return Err(invalid("target noise level must be non-negative"));
    }
    let first = config.schedule[0];
    let mesh: Arc<DiskMesh> = Arc::new(build_refined_mesh(config.base_boundary_count, first.level)?);
    let c0 = initial_value(&target.cgpt, config);
    let mut sigma = ConductivityField::new(mesh.clone(), vec![c0; mesh.vertex_count()], config.clamp)?;
    let mut reference = sigma.clone();

    let mut runner = Runner {
        target,
        config,
        delta: target.noise_level.max(config.noise_level),
        history: InversionHistory::default(),
        k: 0,
    };
    let mut stop = StopReason::MaxIterations;
    for (i, stage) in config.schedule.iter().enumerate() {
        let start = refine_to(sigma.clone(), stage.level)?;
        reference = refine_to(reference, stage.level)?;
        let first_record = runner.history.records.len();
        let k_start = runner.k;
        match runner.run_stage(stage, start, &reference, i == 0) {
            Ok((state, reason)) => {
                let eps_sigma = match &target.truth {
                    Some(spec) => relative_l2_squared(state.sigma(), &project_sigma(spec, state.sigma().mesh().clone())?)?,
                    None => f64::NAN,
                };
                runner.history.stages.push(StageSummary {
                    order: stage.order,
                    level: stage.level,
                    first_record,
                    iterations: runner.k - k_start,
                    stop: reason.clone(),
                    eps_m: cgpt_discrepancy(&state.evaluation.cgpt, &target.cgpt, stage.order)?,
                    eps_sigma,
                    residual: state.evaluation.residual(),
                });
                sigma = state.sigma().clone();
                stop = reason;
            }
            Err(e @ Error::InvalidArgument(_)) => return Err(e),
            Err(e) => {
                stop = StopReason::Failed(e.to_string());
                break;
            }
        }
    }
    runner.history.stop = stop;
    Ok(Reconstruction { field: sigma, history: runner.history })
}
