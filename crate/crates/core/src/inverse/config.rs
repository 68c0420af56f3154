use serde::{Deserialize, Serialize};

use crate::boundary_ops::default_boundary_order;
use crate::error::{invalid, Result};

/// Discrepancy functional. `S3`/`S4` add `q‖σ − σ₀‖²` to `S1`/`S2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    S1,
    S2,
    S3,
    S4,
}

impl Functional {
    pub fn uses_eigenbasis(self) -> bool {
        matches!(self, Functional::S2 | Functional::S4)
    }

    pub fn regularized(self) -> bool {
        matches!(self, Functional::S3 | Functional::S4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Landweber,
    Newton,
}

/// Order weights `ω_mn` on the active orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    Unit,
    /// `ω_mn = 1/(mn)`
    InverseProduct,
}

/// Eigenvalue weights `ω_l(λ)` for the eigenbasis functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenWeight {
    Unit,
    /// `1/(|λ| + 10⁻³ max|λ|)`
    InverseMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    L2,
    LInf,
}

/// Subspace the update is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchSpace {
    Nodal,
    /// Spatially constant updates only.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum StepRule {
    Fixed { t: f64 },
    Armijo { initial: f64, shrink: f64, slope: f64, max_backtracks: usize },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Armijo { initial: 1.0, shrink: 0.5, slope: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialGuess {
    Constant { value: f64 },
    /// Constant whose first CGPT matches the target's `y_11`.
    LeadingFit,
}

/// One pass of the order-raising schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub order: usize,
    pub level: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub base_boundary_count: usize,
    pub schedule: Vec<Stage>,
    /// Fourier truncation of the boundary operators; `2N + 8` for the final order `N` when unset.
    pub boundary_order: Option<usize>,
    pub functional: Functional,
    pub method: Method,
    pub weights: WeightScheme,
    pub eigen_weights: EigenWeight,
    pub step: StepRule,
    pub regularization: f64,
    pub penalty: Penalty,
    pub noise_level: f64,
    pub morozov_tau: f64,
    pub clamp: f64,
    pub initial: InitialGuess,
    pub search_space: SearchSpace,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            base_boundary_count: 8,
            schedule: default_schedule(8, 5, 5, 400),
            boundary_order: None,
            functional: Functional::S1,
            method: Method::Landweber,
            weights: WeightScheme::Unit,
            eigen_weights: EigenWeight::Unit,
            step: StepRule::default(),
            regularization: 0.0,
            penalty: Penalty::L2,
            noise_level: 0.0,
            morozov_tau: 1.2,
            clamp: 10.0,
            initial: InitialGuess::LeadingFit,
            search_space: SearchSpace::Nodal,
        }
    }
}

/// Smallest level whose boundary resolves `boundary_order` modes.
pub fn min_level(base_boundary_count: usize, boundary_order: usize) -> usize {
    let mut level = 0;
    while (base_boundary_count << level) / 2 < boundary_order + 2 {
        level += 1;
    }
    level
}

/// Orders `1..=final_order`; the last stage sits on `final_level`, all earlier
/// stages one level coarser (never below the level resolving the boundary order).
pub fn default_schedule(
    base_boundary_count: usize,
    final_order: usize,
    final_level: usize,
    max_iterations: usize,
) -> Vec<Stage> {
    let floor = min_level(base_boundary_count, default_boundary_order(final_order)).min(final_level);
    (1..=final_order)
        .map(|order| Stage {
            order,
            level: if order == final_order { final_level } else { final_level.saturating_sub(1).max(floor) },
            max_iterations,
        })
        .collect()
}

impl InversionConfig {
    pub fn final_order(&self) -> usize {
        self.schedule.last().map_or(0, |s| s.order)
    }

    pub fn boundary_order(&self) -> usize {
        self.boundary_order.unwrap_or_else(|| default_boundary_order(self.final_order()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_boundary_count < 8 || self.base_boundary_count % 2 != 0 {
            return Err(invalid("base_boundary_count must be an even number of at least 8"));
        }
        if self.schedule.is_empty() {
            return Err(invalid("schedule must contain at least one stage"));
        }
        for (i, s) in self.schedule.iter().enumerate() {
            if s.order == 0 {
                return Err(invalid(format!("schedule[{i}]: order must be positive")));
            }
            if i > 0 {
                let prev = self.schedule[i - 1];
                if s.order < prev.order || s.level < prev.level {
                    return Err(invalid(format!("schedule[{i}]: orders and levels must be nondecreasing")));
                }
            }
        }
        let kb = self.boundary_order();
        if kb < self.final_order() + 4 {
            return Err(invalid(format!("boundary_order {kb} must be at least final order + 4")));
        }
        let first = self.schedule[0].level;
        if first < min_level(self.base_boundary_count, kb) {
            return Err(invalid(format!(
                "schedule[0]: level {first} cannot resolve boundary order {kb} (needs level {})",
                min_level(self.base_boundary_count, kb)
            )));
        }
        match self.step {
            StepRule::Fixed { t } if !(t > 0.0) => return Err(invalid("step t must be positive")),
            StepRule::Armijo { initial, shrink, slope, .. } => {
                if !(initial > 0.0) {
                    return Err(invalid("armijo initial step must be positive"));
                }
                if !(shrink > 0.0 && shrink < 1.0) {
                    return Err(invalid("armijo shrink must lie in (0, 1)"));
                }
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(invalid("armijo slope must lie in (0, 1)"));
                }
            }
            _ => {}
        }
        if !(self.regularization >= 0.0) {
            return Err(invalid("regularization must be non-negative"));
        }
        if !(self.noise_level >= 0.0) {
            return Err(invalid("noise_level must be non-negative"));
        }
        if !(self.morozov_tau > 1.0) {
            return Err(invalid("morozov_tau must exceed 1"));
        }
        if !(self.clamp > 1.0) {
            return Err(invalid("clamp must exceed 1"));
        }
        if let InitialGuess::Constant { value } = self.initial {
            if !(value > 0.0) {
                return Err(invalid("initial constant must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_respects_resolution() {
        let s = default_schedule(8, 6, 5, 100);
        assert_eq!(s.iter().map(|s| s.order).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(s.iter().map(|s| s.level).collect::<Vec<_>>(), vec![4, 4, 4, 4, 4, 5]);
        assert_eq!(default_schedule(8, 6, 3, 10).iter().map(|s| s.level).collect::<Vec<_>>(), vec![3; 6]);
        let cfg = InversionConfig { schedule: s, ..InversionConfig::default() };
        cfg.validate().unwrap();
        assert_eq!(cfg.boundary_order(), 20);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = InversionConfig::default();
        ok.validate().unwrap();
        let mut c = ok.clone();
        c.morozov_tau = 1.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.schedule.swap(0, 1);
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.schedule[0].level = 1;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.step = StepRule::Fixed { t: 0.0 };
        assert!(c.validate().is_err());
        let mut c = ok;
        c.clamp = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = InversionConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        let back: InversionConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<InversionConfig>("{\"bogus\": 1}").is_err());
    }
}
