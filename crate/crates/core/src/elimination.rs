//! Confidence radii for successive elimination and the matching sample-complexity budgets.
//!
//! Every radius has the shape `c · sqrt(ln(A · t²/δ) / (2t))` with natural log:
//!
//! | radius                    | c | A        |
//! |---------------------------|---|----------|
//! | [`variable_radius`]        | 4 | 4KM      |
//! | [`action_radius`]          | 2 | 4K       |
//! | [`forest_variable_radius`] | 4 | 4KMDL    |
//! | [`forest_action_radius`]   | 2 | 4KL      |
//!
//! A candidate is dropped when `best − score + ε ≥ radius` ([`should_eliminate`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem sizes and confidence parameters shared by every elimination check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EliminationConfig {
    pub num_actions: usize,
    pub num_vars: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub trees: usize,
    pub depth: usize,
}

impl EliminationConfig {
    /// A single stump: `L = 1`, `D = 1`.
    pub fn stump(num_actions: usize, num_vars: usize, delta: f64, epsilon: f64) -> Result<Self> {
        Self {
            num_actions,
            num_vars,
            delta,
            epsilon,
            trees: 1,
            depth: 1,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.num_actions < 2 {
            return Err(Error::config(format!("K must be at least 2, got {}", self.num_actions)));
        }
        if self.num_vars < 2 {
            return Err(Error::config(format!("M must be at least 2, got {}", self.num_vars)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.trees < 1 || self.depth < 1 {
            return Err(Error::config("L and D must be at least 1"));
        }
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

fn radius(scale: f64, log_factor: f64, delta: f64, t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::contract("confidence radius needs at least one sample"));
    }
    let t = t as f64;
    Ok(scale * ((log_factor * t * t / delta).ln() / (2.0 * t)).sqrt())
}

/// Variable elimination radius for a lone stump.
pub fn variable_radius(cfg: &EliminationConfig, t_k: u64) -> Result<f64> {
    let (k, m) = (cfg.num_actions as f64, cfg.num_vars as f64);
    radius(4.0, 4.0 * k * m, cfg.delta, t_k)
}

/// Action elimination radius for a lone stump or plain successive elimination.
pub fn action_radius(cfg: &EliminationConfig, t_k: u64) -> Result<f64> {
    radius(2.0, 4.0 * cfg.num_actions as f64, cfg.delta, t_k)
}

/// Variable radius with the union bound over `L` trees of depth up to `D`.
pub fn forest_variable_radius(cfg: &EliminationConfig, t: u64) -> Result<f64> {
    let f = 4.0 * cfg.num_actions as f64 * cfg.num_vars as f64 * cfg.depth as f64 * cfg.trees as f64;
    radius(4.0, f, cfg.delta, t)
}

/// Action radius with the union bound over `L` trees.
pub fn forest_action_radius(cfg: &EliminationConfig, t: u64) -> Result<f64> {
    radius(2.0, 4.0 * cfg.num_actions as f64 * cfg.trees as f64, cfg.delta, t)
}

/// `best − score + ε ≥ radius` (inclusive).
pub fn should_eliminate(best_score: f64, score: f64, epsilon: f64, radius: f64) -> bool {
    best_score - score + epsilon >= radius
}

/// Which pair of radii a learner uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    Stump,
    Forest,
}

/// A config, the `ε` actually in force, and the radius family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EliminationRule {
    pub cfg: EliminationConfig,
    pub epsilon: f64,
    pub scope: Scope,
}

impl EliminationRule {
    pub fn stump(cfg: EliminationConfig) -> Self {
        Self {
            cfg,
            epsilon: cfg.epsilon,
            scope: Scope::Stump,
        }
    }

    pub fn forest(cfg: EliminationConfig, epsilon: f64) -> Self {
        Self {
            cfg,
            epsilon,
            scope: Scope::Forest,
        }
    }

    pub fn variable_radius(&self, t: u64) -> Result<f64> {
        match self.scope {
            Scope::Stump => variable_radius(&self.cfg, t),
            Scope::Forest => forest_variable_radius(&self.cfg, t),
        }
    }

    pub fn action_radius(&self, t: u64) -> Result<f64> {
        match self.scope {
            Scope::Stump => action_radius(&self.cfg, t),
            Scope::Forest => forest_action_radius(&self.cfg, t),
        }
    }
}

/// Predicted stopping time for a given gap (or pair of gaps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBudget {
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub t_star: u64,
}

fn check_gap(gap: f64, name: &str) -> Result<()> {
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(Error::contract(format!("{name} must lie in (0, 1], got {gap}")));
    }
    Ok(())
}

fn variable_term(k: f64, log_factor: f64, delta: f64, gap: f64) -> f64 {
    64.0 * k / (gap * gap) * (log_factor / (delta * gap)).ln()
}

fn ceil_budget(t: f64) -> u64 {
    (t.ceil() as u64).max(1)
}

/// `64K/Δ₁² · ln(4KM/(δΔ₁))`
pub fn lemma1_budget(cfg: &EliminationConfig, delta1: f64) -> Result<GapBudget> {
    check_gap(delta1, "variable gap")?;
    let k = cfg.num_actions as f64;
    let t = variable_term(k, 4.0 * k * cfg.num_vars as f64, cfg.delta, delta1);
    Ok(GapBudget {
        delta1: Some(delta1),
        delta2: None,
        t_star: ceil_budget(t),
    })
}

/// `64K/Δ₂² · ln(4K/(δΔ₂))`
pub fn lemma3_budget(cfg: &EliminationConfig, delta2: f64) -> Result<GapBudget> {
    check_gap(delta2, "action gap")?;
    let k = cfg.num_actions as f64;
    let t = variable_term(k, 4.0 * k, cfg.delta, delta2);
    Ok(GapBudget {
        delta1: None,
        delta2: Some(delta2),
        t_star: ceil_budget(t),
    })
}

/// Sum of the variable and action terms, rounded up once.
pub fn theorem1_budget(cfg: &EliminationConfig, delta1: f64, delta2: f64) -> Result<GapBudget> {
    check_gap(delta1, "variable gap")?;
    check_gap(delta2, "action gap")?;
    let k = cfg.num_actions as f64;
    let t = variable_term(k, 4.0 * k * cfg.num_vars as f64, cfg.delta, delta1)
        + variable_term(k, 4.0 * k, cfg.delta, delta2);
    Ok(GapBudget {
        delta1: Some(delta1),
        delta2: Some(delta2),
        t_star: ceil_budget(t),
    })
}

/// `2^D (64K/Δ₁² · ln(4KMDL/(δΔ₁)) + 64K/Δ₂² · ln(4LK/(δΔ₂)))`
pub fn theorem3_budget(cfg: &EliminationConfig, delta1: f64, delta2: f64) -> Result<GapBudget> {
    check_gap(delta1, "variable gap")?;
    check_gap(delta2, "action gap")?;
    let k = cfg.num_actions as f64;
    let (m, d, l) = (cfg.num_vars as f64, cfg.depth as f64, cfg.trees as f64);
    let inner = variable_term(k, 4.0 * k * m * d * l, cfg.delta, delta1)
        + variable_term(k, 4.0 * l * k, cfg.delta, delta2);
    let t = 2f64.powi(cfg.depth as i32) * inner;
    Ok(GapBudget {
        delta1: Some(delta1),
        delta2: Some(delta2),
        t_star: ceil_budget(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(k: usize, m: usize, delta: f64) -> EliminationConfig {
        EliminationConfig::stump(k, m, delta, 0.0).unwrap()
    }

    fn forest_cfg(k: usize, m: usize, d: usize, l: usize, delta: f64) -> EliminationConfig {
        EliminationConfig {
            num_actions: k,
            num_vars: m,
            delta,
            epsilon: 0.0,
            trees: l,
            depth: d,
        }
        .validated()
        .unwrap()
    }

    // Reference values below come from a 40-digit evaluation of the closed forms.

    #[test]
    fn variable_radius_reference_value() {
        let r = variable_radius(&cfg(2, 2, 0.5), 8).unwrap();
        assert!((r - 2.761_271_262_690_321).abs() < 1e-12);
        assert!(r > variable_radius(&cfg(2, 2, 0.5), 9).unwrap());
    }

    #[test]
    fn doubling_m_shifts_squared_radius_by_ln2() {
        for t in [1, 7, 100, 12345] {
            let a = variable_radius(&cfg(3, 5, 0.1), t).unwrap();
            let b = variable_radius(&cfg(3, 10, 0.1), t).unwrap();
            let expect = 16.0 / (2.0 * t as f64) * 2f64.ln();
            assert!((b * b - a * a - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn action_radius_reference_value() {
        let r = action_radius(&cfg(2, 2, 0.5), 8).unwrap();
        assert!((r - 1.316_384_423_867_080).abs() < 1e-12);
    }

    #[test]
    fn action_radius_is_half_variable_radius_at_equal_log_arguments() {
        // 4K'·t²/δ with K' = K·M makes both log arguments coincide.
        let c = cfg(2, 3, 0.2);
        let wide = cfg(6, 2, 0.2);
        for t in [1, 10, 1000] {
            let v = variable_radius(&c, t).unwrap();
            let a = action_radius(&wide, t).unwrap();
            assert!((a - v / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_radii_reference_values() {
        let r = forest_variable_radius(&forest_cfg(2, 4, 3, 10, 0.1), 100).unwrap();
        assert!((r - 1.212_595_851_862_676).abs() < 1e-12);
        let r = forest_action_radius(&forest_cfg(7, 2, 1, 100, 0.05), 50).unwrap();
        assert!((r - 0.866_190_579_043_055).abs() < 1e-12);
    }

    #[test]
    fn forest_radii_collapse_at_single_tree_of_depth_one() {
        let c = cfg(3, 7, 0.05);
        for t in 1..2000 {
            assert!((forest_variable_radius(&c, t).unwrap() - variable_radius(&c, t).unwrap()).abs() < 1e-12);
            assert!((forest_action_radius(&c, t).unwrap() - action_radius(&c, t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_samples_is_a_contract_violation() {
        let c = cfg(2, 2, 0.5);
        assert!(variable_radius(&c, 0).is_err());
        assert!(action_radius(&c, 0).is_err());
        assert!(forest_variable_radius(&c, 0).is_err());
        assert!(forest_action_radius(&c, 0).is_err());
    }

    #[test]
    fn radii_vanish_for_large_t() {
        let c = forest_cfg(7, 94, 18, 100, 0.05);
        for f in [variable_radius, action_radius, forest_variable_radius, forest_action_radius] {
            let r = f(&c, 1_000_000_000).unwrap();
            assert!(r.is_finite() && r > 0.0 && r < 1e-2, "{r}");
        }
    }

    #[test]
    fn elimination_inequality_examples() {
        assert!(!should_eliminate(0.5, 0.5, 0.0, 0.1));
        assert!(should_eliminate(0.75, 0.5, 0.0, 0.25));
        assert!(should_eliminate(0.5, 0.5, 0.3, 0.3));
    }

    #[test]
    fn budget_reference_values() {
        let c = cfg(2, 2, 0.05);
        assert_eq!(lemma1_budget(&c, 9.0 / 32.0).unwrap().t_star, 11_387);
        assert_eq!(lemma3_budget(&c, 0.8).unwrap().t_star, 1_060);
        assert_eq!(theorem1_budget(&c, 9.0 / 32.0, 5.0 / 16.0).unwrap().t_star, 19_564);
        let f = forest_cfg(2, 4, 2, 10, 0.05);
        assert_eq!(theorem3_budget(&f, 0.25, 0.5).unwrap().t_star, 105_360);
        assert!(lemma1_budget(&c, 0.0).is_err());
        assert!(lemma3_budget(&c, -0.1).is_err());
    }

    #[test]
    fn theorem3_at_unit_depth_and_trees_is_twice_theorem1() {
        let c = cfg(3, 5, 0.1);
        let t1 = theorem1_budget(&c, 0.2, 0.3).unwrap().t_star as f64;
        let t3 = theorem3_budget(&c, 0.2, 0.3).unwrap().t_star as f64;
        assert!((t3 - 2.0 * t1).abs() <= 2.0);
    }

    #[test]
    fn budgets_are_monotone() {
        let base = forest_cfg(3, 5, 2, 4, 0.1);
        let gaps = [0.05, 0.1, 0.2, 0.4, 0.8];
        for w in gaps.windows(2) {
            assert!(lemma1_budget(&base, w[0]).unwrap().t_star > lemma1_budget(&base, w[1]).unwrap().t_star);
            assert!(lemma3_budget(&base, w[0]).unwrap().t_star > lemma3_budget(&base, w[1]).unwrap().t_star);
            assert!(
                theorem3_budget(&base, w[0], 0.3).unwrap().t_star
                    > theorem3_budget(&base, w[1], 0.3).unwrap().t_star
            );
        }
        let bigger = [
            EliminationConfig { num_actions: 4, ..base },
            EliminationConfig { num_vars: 9, ..base },
            EliminationConfig { trees: 8, ..base },
            EliminationConfig { depth: 3, ..base },
        ];
        let t = theorem3_budget(&base, 0.2, 0.3).unwrap().t_star;
        for b in bigger {
            assert!(theorem3_budget(&b, 0.2, 0.3).unwrap().t_star > t);
        }
        assert!(lemma1_budget(&bigger[1], 0.2).unwrap().t_star > lemma1_budget(&base, 0.2).unwrap().t_star);
    }

    #[test]
    fn radius_strictly_decreasing_on_grid() {
        // 4KM/δ ≥ 8 for every config here.
        let configs = [cfg(2, 2, 1.0), cfg(2, 2, 0.05), forest_cfg(7, 94, 10, 100, 0.05)];
        for c in configs {
            let mut prev_v = f64::INFINITY;
            let mut prev_a = f64::INFINITY;
            let mut t = 1u64;
            while t <= 1_000_000 {
                let v = variable_radius(&c, t).unwrap();
                let a = action_radius(&c, t).unwrap();
                let fv = forest_variable_radius(&c, t).unwrap();
                let fa = forest_action_radius(&c, t).unwrap();
                assert!(v < prev_v && a < prev_a, "t={t}");
                assert!(fv >= v && fa >= a);
                prev_v = v;
                prev_a = a;
                t = if t < 10_000 { t + 1 } else { t + 997 };
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(EliminationConfig::stump(1, 2, 0.1, 0.0).is_err());
        assert!(EliminationConfig::stump(2, 1, 0.1, 0.0).is_err());
        assert!(EliminationConfig::stump(2, 2, 0.0, 0.0).is_err());
        assert!(EliminationConfig::stump(2, 2, 1.5, 0.0).is_err());
        assert!(EliminationConfig::stump(2, 2, 0.5, -1.0).is_err());
        assert!(EliminationConfig::stump(2, 2, 1.0, 0.0).is_ok());
    }

    proptest! {
        #[test]
        fn elimination_monotone_in_gap_and_radius(
            best in 0.0f64..1.0, score in 0.0f64..1.0, eps in 0.0f64..0.5,
            radius in 0.0f64..2.0, widen in 0.0f64..0.5, shrink in 0.0f64..1.0,
        ) {
            if should_eliminate(best, score, eps, radius) {
                prop_assert!(should_eliminate(best + widen, score, eps, radius * shrink));
            }
        }
    }
}
