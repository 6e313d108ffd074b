//! Domain types and incremental statistics shared by every learner.
//!
//! All running means follow the same update, `m ← y/t + (t−1)/t · m`, where `t`
//! is the post-increment play count of the credited action. Callers bump the
//! count first and then hand the observation to the table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ActionId = usize;
pub type VarId = usize;

/// Binary context `x ∈ {0,1}^M`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextVector {
    bits: Vec<bool>,
}

impl ContextVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            bits: vec![false; width],
        }
    }

    /// Builds a context from 0/1 integers, rejecting anything else.
    pub fn from_bits(values: &[u8]) -> Result<Self> {
        let bits = values
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::contract(format!("context bit must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, var: VarId) -> bool {
        self.bits[var]
    }

    /// Value of variable `var` as an index into `{0, 1}`.
    pub fn value(&self, var: VarId) -> usize {
        self.bits[var] as usize
    }

    pub fn set(&mut self, var: VarId, bit: bool) {
        self.bits[var] = bit;
    }

    pub fn flip(&mut self, var: VarId) {
        self.bits[var] = !self.bits[var];
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn hamming(&self, other: &ContextVector) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub(crate) fn check_width(&self, width: usize) -> Result<()> {
        if self.bits.len() != width {
            return Err(Error::contract(format!(
                "context has {} variables, expected {width}",
                self.bits.len()
            )));
        }
        Ok(())
    }
}

/// The revealed reward of the played action.
///
/// `propensity` is the probability with which the action was drawn; it is 1.0
/// whenever the choice was deterministic (round-robin or vote).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardObservation {
    pub action: ActionId,
    pub reward: f64,
    pub propensity: f64,
}

impl RewardObservation {
    pub fn new(action: ActionId, reward: f64, propensity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::contract(format!("reward {reward} outside [0, 1]")));
        }
        if !(propensity > 0.0 && propensity <= 1.0) {
            return Err(Error::contract(format!("propensity {propensity} outside (0, 1]")));
        }
        Ok(Self {
            action,
            reward,
            propensity,
        })
    }

    /// Deterministic play: propensity 1.
    pub fn certain(action: ActionId, reward: f64) -> Result<Self> {
        Self::new(action, reward, 1.0)
    }

    /// Inverse-propensity scaled reward, `y / p`.
    pub fn ips_reward(&self) -> f64 {
        self.reward / self.propensity
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<I>(values: I) -> Option<usize>
where
    I: IntoIterator<Item = f64>,
{
    let mut best: Option<(usize, f64)> = None;
    for (idx, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((idx, v)),
        }
    }
    best.map(|(idx, _)| idx)
}

/// Running estimates `μ̂^i_{k,v} = mean of y_k·1{x_i = v}` for one stump, with
/// the derived variable scores `μ̂^i = Σ_v max_k μ̂^i_{k,v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatTable {
    num_vars: usize,
    num_actions: usize,
    mu_hat: Vec<f64>,
    counts: Vec<u64>,
    var_scores: Vec<f64>,
}

impl PairStatTable {
    pub fn new(num_vars: usize, num_actions: usize) -> Self {
        Self {
            num_vars,
            num_actions,
            mu_hat: vec![0.0; num_vars * num_actions * 2],
            counts: vec![0; num_actions],
            var_scores: vec![0.0; num_vars],
        }
    }

    #[inline]
    fn slot(&self, var: VarId, action: ActionId, value: usize) -> usize {
        (var * self.num_actions + action) * 2 + value
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn mean(&self, var: VarId, action: ActionId, value: usize) -> f64 {
        self.mu_hat[self.slot(var, action, value)]
    }

    pub fn count(&self, action: ActionId) -> u64 {
        self.counts[action]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// `μ̂^i`; always consistent with the current means.
    pub fn score(&self, var: VarId) -> f64 {
        self.var_scores[var]
    }

    /// Bumps `t_k` and returns the new count.
    pub fn increment(&mut self, action: ActionId) -> Result<u64> {
        let c = self
            .counts
            .get_mut(action)
            .ok_or_else(|| Error::contract(format!("unknown action {action}")))?;
        *c += 1;
        Ok(*c)
    }

    /// Credits `obs` (already IPS-scaled by the caller if needed) to every active
    /// variable. The action's count must already include this observation.
    pub fn update(&mut self, x: &ContextVector, action: ActionId, reward: f64, active_vars: &[VarId]) -> Result<()> {
        if action >= self.num_actions {
            return Err(Error::contract(format!("unknown action {action}")));
        }
        x.check_width(self.num_vars)?;
        let t = self.counts[action];
        if t == 0 {
            return Err(Error::contract(format!(
                "count of action {action} must be incremented before the update"
            )));
        }
        let t = t as f64;
        let keep = (t - 1.0) / t;
        for &var in active_vars {
            if var >= self.num_vars {
                return Err(Error::contract(format!("unknown variable {var}")));
            }
            let hit = x.value(var);
            for value in 0..2 {
                let ind = if hit == value { 1.0 } else { 0.0 };
                let s = self.slot(var, action, value);
                self.mu_hat[s] = reward / t * ind + keep * self.mu_hat[s];
            }
            self.refresh_score(var);
        }
        Ok(())
    }

    fn refresh_score(&mut self, var: VarId) {
        let mut total = 0.0;
        for value in 0..2 {
            let best = (0..self.num_actions)
                .map(|k| self.mu_hat[self.slot(var, k, value)])
                .fold(f64::NEG_INFINITY, f64::max);
            total += best;
        }
        self.var_scores[var] = total;
    }
}

/// Context-free running means `μ̂_k` and play counts `t_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStatTable {
    mu_hat: Vec<f64>,
    counts: Vec<u64>,
}

impl ActionStatTable {
    pub fn new(num_actions: usize) -> Self {
        Self {
            mu_hat: vec![0.0; num_actions],
            counts: vec![0; num_actions],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn mean(&self, action: ActionId) -> f64 {
        self.mu_hat[action]
    }

    pub fn count(&self, action: ActionId) -> u64 {
        self.counts[action]
    }

    pub fn increment(&mut self, action: ActionId) -> Result<u64> {
        let c = self
            .counts
            .get_mut(action)
            .ok_or_else(|| Error::contract(format!("unknown action {action}")))?;
        *c += 1;
        Ok(*c)
    }

    pub fn update(&mut self, action: ActionId, reward: f64) -> Result<()> {
        let t = *self
            .counts
            .get(action)
            .ok_or_else(|| Error::contract(format!("unknown action {action}")))?;
        if t == 0 {
            return Err(Error::contract(format!(
                "count of action {action} must be incremented before the update"
            )));
        }
        let t = t as f64;
        self.mu_hat[action] = reward / t + (t - 1.0) / t * self.mu_hat[action];
        Ok(())
    }
}

/// Cyclic player over an ordered remaining set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRobinCursor {
    order: Vec<ActionId>,
    next: usize,
    last_returned: Option<ActionId>,
}

impl RoundRobinCursor {
    pub fn new(mut actions: Vec<ActionId>) -> Self {
        actions.sort_unstable();
        actions.dedup();
        Self {
            order: actions,
            next: 0,
            last_returned: None,
        }
    }

    pub fn over(num_actions: usize) -> Self {
        Self::new((0..num_actions).collect())
    }

    pub fn remaining(&self) -> &[ActionId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Last element of the ordered set: playing it completes a sweep.
    pub fn last_action(&self) -> Option<ActionId> {
        self.order.last().copied()
    }

    /// Next action and whether it completes the current sweep.
    pub fn next_action(&mut self) -> Result<(ActionId, bool)> {
        if self.order.is_empty() {
            return Err(Error::contract("round-robin over an empty set"));
        }
        let action = self.order[self.next];
        self.next = (self.next + 1) % self.order.len();
        self.last_returned = Some(action);
        Ok((action, self.next == 0))
    }

    /// Replaces the remaining set, keeping the sweep position: the next call
    /// returns the first surviving action after the last one played.
    pub fn retain(&mut self, mut keep: impl FnMut(ActionId) -> bool) {
        self.order.retain(|&a| keep(a));
        self.next = match self.last_returned {
            Some(last) => self.order.iter().position(|&a| a > last).unwrap_or(0),
            None => 0,
        };
    }
}

/// Plurality vote; ties go to the lowest action id.
pub fn plurality_vote(votes: &[ActionId]) -> Result<ActionId> {
    let mut tally: BTreeMap<ActionId, usize> = BTreeMap::new();
    for &v in votes {
        *tally.entry(v).or_default() += 1;
    }
    let mut best: Option<(ActionId, usize)> = None;
    for (action, count) in tally {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((action, count));
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| Error::contract("plurality vote over an empty list"))
}
