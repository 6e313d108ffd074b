//! Variable selection, action selection, and the decision stump that runs both at once.
//!
//! Learners never sample the environment themselves: `step` methods take a
//! reward source `(context, action) -> reward`, and `observe` methods accept
//! rewards for actions chosen elsewhere (the forest drives stumps that way).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::elimination::{should_eliminate, EliminationRule};
use crate::error::{Error, Result};
use crate::stats::{argmax, ActionId, ActionStatTable, ContextVector, PairStatTable, RoundRobinCursor, VarId};

/// Finds the best contextual variable by parallel exploration of all `K` actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSelection {
    remaining: Vec<VarId>,
    stats: PairStatTable,
    cursor: RoundRobinCursor,
}

impl VariableSelection {
    pub fn new(num_vars: usize, num_actions: usize) -> Self {
        Self {
            remaining: (0..num_vars).collect(),
            stats: PairStatTable::new(num_vars, num_actions),
            cursor: RoundRobinCursor::over(num_actions),
        }
    }

    /// Restricts the candidate set to `candidates` (sorted, deduplicated, non-empty).
    pub fn with_candidates(num_vars: usize, num_actions: usize, mut candidates: Vec<VarId>) -> Result<Self> {
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.is_empty() {
            return Err(Error::contract("variable selection needs at least one candidate"));
        }
        if let Some(&bad) = candidates.iter().find(|&&i| i >= num_vars) {
            return Err(Error::contract(format!("candidate variable {bad} out of range")));
        }
        Ok(Self {
            remaining: candidates,
            ..Self::new(num_vars, num_actions)
        })
    }

    pub fn remaining(&self) -> &[VarId] {
        &self.remaining
    }

    pub fn stats(&self) -> &PairStatTable {
        &self.stats
    }

    pub fn is_finished(&self) -> bool {
        self.remaining.len() == 1
    }

    pub fn chosen(&self) -> Option<VarId> {
        self.is_finished().then(|| self.remaining[0])
    }

    /// Current leader among remaining variables.
    pub fn leader(&self) -> VarId {
        let idx = argmax(self.remaining.iter().map(|&i| self.stats.score(i))).expect("non-empty");
        self.remaining[idx]
    }

    pub fn choose(&mut self) -> Result<ActionId> {
        if self.is_finished() {
            return Err(Error::contract("variable selection already finished"));
        }
        Ok(self.cursor.next_action()?.0)
    }

    /// Credits one reward and, when `action` closes a sweep over all actions,
    /// drops every variable the rule rejects. Returns the dropped variables.
    pub fn observe(
        &mut self,
        x: &ContextVector,
        action: ActionId,
        reward: f64,
        rule: &EliminationRule,
    ) -> Result<Vec<VarId>> {
        self.stats.increment(action)?;
        self.stats.update(x, action, reward, &self.remaining)?;
        if self.remaining.len() < 2 || action + 1 != self.stats.num_actions() {
            return Ok(Vec::new());
        }
        // Equal to t_k under round-robin play; the smallest count otherwise.
        let t = self.stats.min_count();
        if t == 0 {
            return Ok(Vec::new());
        }
        let radius = rule.variable_radius(t)?;
        let leader = self.leader();
        let best = self.stats.score(leader);
        let mut dropped = Vec::new();
        let stats = &self.stats;
        self.remaining.retain(|&i| {
            let drop = i != leader && should_eliminate(best, stats.score(i), rule.epsilon, radius);
            if drop {
                dropped.push(i);
            }
            !drop
        });
        Ok(dropped)
    }

    pub fn step<F>(&mut self, x: &ContextVector, rule: &EliminationRule, mut reward_source: F) -> Result<ActionId>
    where
        F: FnMut(&ContextVector, ActionId) -> f64,
    {
        let action = self.choose()?;
        let reward = reward_source(x, action);
        self.observe(x, action, reward, rule)?;
        Ok(action)
    }
}

/// Successive elimination over an action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSelection {
    cursor: RoundRobinCursor,
    stats: ActionStatTable,
}

impl ActionSelection {
    pub fn new(num_actions: usize) -> Self {
        Self {
            cursor: RoundRobinCursor::over(num_actions),
            stats: ActionStatTable::new(num_actions),
        }
    }

    pub fn remaining(&self) -> &[ActionId] {
        self.cursor.remaining()
    }

    pub fn stats(&self) -> &ActionStatTable {
        &self.stats
    }

    pub fn is_finished(&self) -> bool {
        self.cursor.len() == 1
    }

    /// Empirical best remaining action (lowest id on ties).
    pub fn best(&self) -> ActionId {
        let remaining = self.cursor.remaining();
        let idx = argmax(remaining.iter().map(|&k| self.stats.mean(k))).expect("non-empty");
        remaining[idx]
    }

    pub fn choose(&mut self) -> Result<ActionId> {
        if self.is_finished() {
            return Err(Error::contract("action selection already finished"));
        }
        Ok(self.cursor.next_action()?.0)
    }

    /// Credits one reward; when `action` is the last remaining action, runs the
    /// elimination check. Returns the eliminated actions.
    pub fn observe(&mut self, action: ActionId, reward: f64, rule: &EliminationRule) -> Result<Vec<ActionId>> {
        self.stats.increment(action)?;
        self.stats.update(action, reward)?;
        if self.cursor.len() < 2 || self.cursor.last_action() != Some(action) {
            return Ok(Vec::new());
        }
        let leader = self.best();
        let best = self.stats.mean(leader);
        let lead_count = self.stats.count(leader);
        let mut dropped = Vec::new();
        for &k in self.cursor.remaining() {
            if k == leader {
                continue;
            }
            // Pairwise confidence: the weaker of the two sample sizes.
            let t = self.stats.count(k).min(lead_count);
            if t == 0 {
                continue;
            }
            if should_eliminate(best, self.stats.mean(k), rule.epsilon, rule.action_radius(t)?) {
                dropped.push(k);
            }
        }
        if !dropped.is_empty() {
            self.cursor.retain(|k| !dropped.contains(&k));
        }
        Ok(dropped)
    }

    pub fn step<F>(&mut self, rule: &EliminationRule, mut reward_source: F) -> Result<ActionId>
    where
        F: FnMut(ActionId) -> f64,
    {
        let action = self.choose()?;
        let reward = reward_source(action);
        self.observe(action, reward, rule)?;
        Ok(action)
    }
}

/// One variable, one best action per value of it.
///
/// While several variables remain, play sweeps all actions and every
/// `(variable, observed value)` pair runs its own action elimination on the
/// side; those eliminations only govern play once the variable is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStump {
    vs: VariableSelection,
    #[serde(with = "crate::serde_pairs")]
    per_value: BTreeMap<(VarId, usize), ActionSelection>,
}

impl DecisionStump {
    pub fn new(num_vars: usize, num_actions: usize) -> Self {
        Self::from_selection(VariableSelection::new(num_vars, num_actions))
    }

    pub fn with_candidates(num_vars: usize, num_actions: usize, candidates: Vec<VarId>) -> Result<Self> {
        Ok(Self::from_selection(VariableSelection::with_candidates(
            num_vars,
            num_actions,
            candidates,
        )?))
    }

    fn from_selection(vs: VariableSelection) -> Self {
        let num_actions = vs.stats().num_actions();
        let per_value = vs
            .remaining()
            .iter()
            .flat_map(|&i| [(i, 0), (i, 1)])
            .map(|key| (key, ActionSelection::new(num_actions)))
            .collect();
        Self { vs, per_value }
    }

    pub fn variable_selection(&self) -> &VariableSelection {
        &self.vs
    }

    pub fn chosen_var(&self) -> Option<VarId> {
        self.vs.chosen()
    }

    pub fn action_selection(&self, var: VarId, value: usize) -> Option<&ActionSelection> {
        self.per_value.get(&(var, value))
    }

    pub fn action_selections(&self) -> impl Iterator<Item = (&(VarId, usize), &ActionSelection)> {
        self.per_value.iter()
    }

    /// Remaining actions of the leaf `x` falls into, once the variable is chosen.
    pub fn leaf(&self, x: &ContextVector) -> Option<&ActionSelection> {
        let i = self.chosen_var()?;
        self.per_value.get(&(i, x.value(i)))
    }

    /// Variable chosen and the leaf for `x` reduced to one action.
    pub fn leaf_settled(&self, x: &ContextVector) -> bool {
        self.leaf(x).is_some_and(ActionSelection::is_finished)
    }

    /// Variable chosen and both leaves reduced to one action.
    pub fn is_converged(&self) -> bool {
        match self.chosen_var() {
            Some(i) => (0..2).all(|v| self.per_value.get(&(i, v)).is_some_and(ActionSelection::is_finished)),
            None => false,
        }
    }

    /// Greedy action for `x` under the current estimates.
    pub fn best_action(&self, x: &ContextVector) -> ActionId {
        if let Some(leaf) = self.leaf(x) {
            return leaf.best();
        }
        let stats = self.vs.stats();
        let i = self.vs.leader();
        let v = x.value(i);
        argmax((0..stats.num_actions()).map(|k| stats.mean(i, k, v))).unwrap_or(0)
    }

    pub fn choose(&mut self, x: &ContextVector) -> Result<ActionId> {
        match self.chosen_var() {
            None => self.vs.choose(),
            Some(i) => {
                let v = x.value(i);
                let leaf = self
                    .per_value
                    .get_mut(&(i, v))
                    .ok_or_else(|| Error::contract("missing leaf for the chosen variable"))?;
                if leaf.is_finished() {
                    Ok(leaf.remaining()[0])
                } else {
                    leaf.choose()
                }
            }
        }
    }

    /// Credits one reward to the variable statistics and to every remaining
    /// `(variable, observed value)` action set. Returns the dropped variables.
    pub fn observe(&mut self, x: &ContextVector, action: ActionId, reward: f64, rule: &EliminationRule) -> Result<Vec<VarId>> {
        let dropped = self.vs.observe(x, action, reward, rule)?;
        if !dropped.is_empty() {
            self.per_value.retain(|(i, _), _| !dropped.contains(i));
        }
        for &i in self.vs.remaining() {
            let v = x.value(i);
            let leaf = self
                .per_value
                .get_mut(&(i, v))
                .ok_or_else(|| Error::contract(format!("missing action set for ({i}, {v})")))?;
            leaf.observe(action, reward, rule)?;
        }
        Ok(dropped)
    }

    /// Drops the per-value action sets; used once a node has children and
    /// never plays from its own leaves again.
    pub(crate) fn clear_leaves(&mut self) {
        self.per_value.clear();
    }

    pub fn step<F>(&mut self, x: &ContextVector, rule: &EliminationRule, mut reward_source: F) -> Result<ActionId>
    where
        F: FnMut(&ContextVector, ActionId) -> f64,
    {
        let action = self.choose(x)?;
        let reward = reward_source(x, action);
        self.observe(x, action, reward, rule)?;
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elimination::{action_radius, variable_radius, EliminationConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rule(k: usize, m: usize, delta: f64, eps: f64) -> EliminationRule {
        EliminationRule::stump(EliminationConfig::stump(k, m, delta, eps).unwrap())
    }

    #[test]
    fn action_selection_single_action_is_finished() {
        let mut a = ActionSelection::new(1);
        assert!(a.is_finished());
        assert!(a.step(&rule(2, 2, 0.1, 0.0), |_| 1.0).is_err());
    }

    #[test]
    fn deterministic_arms_eliminate_at_first_small_radius() {
        let r = rule(2, 2, 0.05, 0.0);
        // Oracle: scan the closed form directly.
        let t_star = (1u64..)
            .find(|&t| {
                let t = t as f64;
                2.0 * ((8.0 * t * t / 0.05f64).ln() / (2.0 * t)).sqrt() <= 1.0
            })
            .unwrap();
        let mut a = ActionSelection::new(2);
        let mut steps = 0u64;
        while !a.is_finished() {
            a.step(&r, |k| if k == 0 { 1.0 } else { 0.0 }).unwrap();
            steps += 1;
        }
        assert_eq!(t_star, 23);
        assert_eq!(steps, 2 * t_star);
        assert_eq!(a.remaining(), &[0]);
        assert!(action_radius(&r.cfg, t_star).unwrap() <= 1.0);
    }

    #[test]
    fn action_checks_only_at_sweep_boundaries() {
        let r = rule(4, 2, 0.2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let means = [0.9, 0.2, 0.5, 0.1];
        let mut a = ActionSelection::new(4);
        let mut since_sweep = 0usize;
        let mut prev = a.remaining().to_vec();
        while !a.is_finished() {
            let size = a.remaining().len();
            let k = a.step(&r, |k| rng.gen_bool(means[k]) as u8 as f64).unwrap();
            since_sweep += 1;
            let now = a.remaining().to_vec();
            if now != prev {
                assert_eq!(since_sweep % size, 0);
                assert_eq!(k, *prev.last().unwrap());
                assert!(now.iter().all(|x| prev.contains(x)));
            }
            if k == *prev.last().unwrap() {
                since_sweep = 0;
            }
            prev = now;
        }
        assert_eq!(a.remaining(), &[0]);
    }

    /// Context at sweep `s`: x0 flips every sweep, x1 every other sweep.
    fn schedule(sweep: u64) -> ContextVector {
        ContextVector::new(vec![sweep % 2 == 1, (sweep / 2) % 2 == 1])
    }

    /// Action 0 pays when x0 = 1, action 1 when x0 = 0.
    fn payoff(x: &ContextVector, k: ActionId) -> f64 {
        if (k == 0) == x.get(0) {
            1.0
        } else {
            0.0
        }
    }

    /// Batch-mean replay of the schedule: first sweep count at which the
    /// trailing variable's exact gap reaches the radius.
    fn first_elimination_sweep(r: &EliminationRule) -> u64 {
        let mut rows: Vec<(ContextVector, ActionId, f64)> = Vec::new();
        for sweeps in 1u64.. {
            let x = schedule(sweeps - 1);
            for k in 0..2 {
                rows.push((x.clone(), k, payoff(&x, k)));
            }
            let score = |i: usize| -> f64 {
                (0..2)
                    .map(|v| {
                        (0..2)
                            .map(|k| {
                                let mine: Vec<_> = rows.iter().filter(|r| r.1 == k).collect();
                                mine.iter().filter(|r| r.0.value(i) == v).map(|r| r.2).sum::<f64>()
                                    / mine.len() as f64
                            })
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .sum()
            };
            let (s0, s1) = (score(0), score(1));
            let radius = variable_radius(&r.cfg, sweeps).unwrap();
            if s0 - s1 >= radius {
                return sweeps;
            }
        }
        unreachable!()
    }

    #[test]
    fn variable_elimination_fires_at_first_qualifying_sweep_boundary() {
        let r = rule(2, 2, 0.05, 0.0);
        let expected_sweeps = first_elimination_sweep(&r);
        let mut vs = VariableSelection::new(2, 2);
        let mut steps = 0u64;
        while !vs.is_finished() {
            let x = schedule(steps / 2);
            vs.step(&x, &r, payoff).unwrap();
            steps += 1;
            if !vs.is_finished() {
                assert_eq!(vs.remaining(), &[0, 1]);
            }
        }
        assert_eq!(vs.chosen(), Some(0));
        assert_eq!(steps, 2 * expected_sweeps);
        // The gap is 1/2 at multiples of four sweeps; the radius must have dropped well below it.
        assert!(variable_radius(&r.cfg, expected_sweeps).unwrap() <= 0.5 + 0.25);
    }

    #[test]
    fn identical_variables_terminate_with_positive_epsilon() {
        let r = rule(2, 2, 0.05, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut vs = VariableSelection::new(2, 2);
        let mut steps = 0;
        while !vs.is_finished() {
            let b = rng.gen_bool(0.5);
            let x = ContextVector::new(vec![b, b]);
            let y: f64 = rng.gen_bool(if b { 0.8 } else { 0.3 }) as u8 as f64;
            vs.step(&x, &r, |_, _| y).unwrap();
            steps += 1;
            assert!(steps < 2_000_000);
        }
        assert!(vs.step(&ContextVector::zeros(2), &r, |_, _| 0.0).is_err());
    }

    #[test]
    fn stump_with_identical_arms_terminates() {
        let r = rule(2, 3, 0.05, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stump = DecisionStump::new(3, 2);
        let mut steps = 0;
        while !stump.is_converged() {
            let x = ContextVector::new((0..3).map(|_| rng.gen_bool(0.5)).collect());
            let y = rng.gen_bool(0.5) as u8 as f64;
            stump.step(&x, &r, |_, _| y).unwrap();
            steps += 1;
            assert!(steps < 2_000_000);
        }
    }

    #[test]
    fn stump_sets_only_shrink_and_leaf_play_follows_leaf_set() {
        let r = rule(3, 3, 0.1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut stump = DecisionStump::new(3, 3);
        let mut prev_vars = stump.variable_selection().remaining().to_vec();
        for _ in 0..60_000 {
            let x = ContextVector::new((0..3).map(|_| rng.gen_bool(0.5)).collect());
            let before_leaf = stump.leaf(&x).map(|l| l.remaining().to_vec());
            let good = if x.get(1) { 2 } else { 0 };
            let k = stump
                .step(&x, &r, |_, k| rng.gen_bool(if k == good { 0.8 } else { 0.3 }) as u8 as f64)
                .unwrap();
            if let Some(leaf) = before_leaf {
                assert!(leaf.contains(&k));
            }
            let vars = stump.variable_selection().remaining().to_vec();
            assert!(vars.iter().all(|v| prev_vars.contains(v)));
            for (&(i, _), _) in stump.action_selections() {
                assert!(vars.contains(&i));
            }
            prev_vars = vars;
        }
        assert!(stump.is_converged());
        assert_eq!(stump.chosen_var(), Some(1));
        let x0 = ContextVector::from_bits(&[0, 0, 0]).unwrap();
        let x1 = ContextVector::from_bits(&[0, 1, 0]).unwrap();
        assert_eq!(stump.best_action(&x0), 0);
        assert_eq!(stump.best_action(&x1), 2);
    }
}
