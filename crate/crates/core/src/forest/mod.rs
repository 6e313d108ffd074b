//! Bandit Forest: `L` greedy trees grown online, voting once every selected
//! path has settled and exploring otherwise.

mod tree;

pub use tree::{Node, PathKey, Tree, TreeRandomization};

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elimination::{EliminationConfig, EliminationRule};
use crate::error::{Error, Result};
use crate::stats::{plurality_vote, ActionId, ContextVector, RewardObservation, RoundRobinCursor};

/// How the engine explores while some selected path is still learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationMode {
    /// Round-robin over all actions, rewards credited as observed.
    RoundRobin,
    /// Uniform draw over the union of the selected paths' live actions,
    /// rewards credited as `y / p`.
    UniformIps,
}

/// When the trees are allowed to vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteGate {
    /// Every path selected by the current context has settled.
    Local,
    /// Additionally, every tree has settled everywhere.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub depth_min: usize,
    pub depth_max: usize,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    pub keep_fraction: f64,
    pub delta: f64,
    pub mode: ExplorationMode,
    pub gate: VoteGate,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 10,
            depth_min: 2,
            depth_max: 2,
            epsilon_min: 0.4,
            epsilon_max: 0.8,
            keep_fraction: 0.8,
            delta: 0.05,
            mode: ExplorationMode::UniformIps,
            gate: VoteGate::Local,
            seed: 0,
        }
    }
}

impl ForestConfig {
    /// A single unrandomized tree.
    pub fn single_tree(depth: usize, epsilon: f64, delta: f64) -> Self {
        Self {
            trees: 1,
            depth_min: depth,
            depth_max: depth,
            epsilon_min: epsilon,
            epsilon_max: epsilon,
            keep_fraction: 1.0,
            delta,
            ..Self::default()
        }
    }

    /// Draws one randomization per tree from `seed`.
    pub fn randomizations(&self) -> Result<Vec<TreeRandomization>> {
        if self.trees < 1 {
            return Err(Error::config("a forest needs at least one tree"));
        }
        if self.depth_min < 1 || self.depth_min > self.depth_max {
            return Err(Error::config(format!(
                "depth range [{}, {}] is empty or starts below 1",
                self.depth_min, self.depth_max
            )));
        }
        if !(self.epsilon_min >= 0.0 && self.epsilon_min <= self.epsilon_max) {
            return Err(Error::config("epsilon range must be non-negative and ordered"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..self.trees)
            .map(|_| {
                let theta_seed = rng.gen::<u64>();
                let depth_cap = rng.gen_range(self.depth_min..=self.depth_max);
                let epsilon = if self.epsilon_max > self.epsilon_min {
                    rng.gen_range(self.epsilon_min..self.epsilon_max)
                } else {
                    self.epsilon_min
                };
                TreeRandomization {
                    theta_seed,
                    depth_cap,
                    epsilon,
                    keep_fraction: self.keep_fraction,
                }
            })
            .collect())
    }
}

/// Outcome of [`ForestEngine::decide`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: ActionId,
    pub propensity: f64,
    pub keys: Vec<PathKey>,
    pub voted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestEngine {
    cfg: EliminationConfig,
    mode: ExplorationMode,
    gate: VoteGate,
    trees: Vec<Tree>,
    cursor: RoundRobinCursor,
    steps: u64,
}

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    engine: ForestEngine,
}

impl ForestEngine {
    pub fn new(num_actions: usize, num_vars: usize, config: &ForestConfig) -> Result<Self> {
        let rands = config.randomizations()?;
        Self::with_randomizations(num_actions, num_vars, config.delta, config.mode, config.gate, rands)
    }

    pub fn with_randomizations(
        num_actions: usize,
        num_vars: usize,
        delta: f64,
        mode: ExplorationMode,
        gate: VoteGate,
        rands: Vec<TreeRandomization>,
    ) -> Result<Self> {
        if rands.is_empty() {
            return Err(Error::config("a forest needs at least one tree"));
        }
        let depth = rands.iter().map(|r| r.depth_cap).max().unwrap_or(1);
        let cfg = EliminationConfig {
            num_actions,
            num_vars,
            delta,
            epsilon: 0.0,
            trees: rands.len(),
            depth,
        }
        .validated()?;
        let trees = rands
            .into_iter()
            .map(|r| Tree::new(r, num_vars, num_actions))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            mode,
            gate,
            trees,
            cursor: RoundRobinCursor::over(num_actions),
            steps: 0,
        })
    }

    pub fn config(&self) -> &EliminationConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ExplorationMode {
        self.mode
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn rule(&self, tree: &Tree) -> EliminationRule {
        EliminationRule::forest(self.cfg, tree.randomization().epsilon)
    }

    pub fn select_paths(&self, x: &ContextVector) -> Vec<PathKey> {
        self.trees.iter().map(|t| t.select_path(x)).collect()
    }

    /// Votes of the selected paths, if the gate is open.
    fn votes(&self, x: &ContextVector, keys: &[PathKey]) -> Option<Vec<ActionId>> {
        if self.gate == VoteGate::Global && !self.trees.iter().all(Tree::is_converged) {
            return None;
        }
        self.trees.iter().zip(keys).map(|(t, k)| t.vote(k, x)).collect()
    }

    pub fn decide<R: Rng + ?Sized>(&mut self, x: &ContextVector, rng: &mut R) -> Result<Decision> {
        x.check_width(self.cfg.num_vars)?;
        let keys = self.select_paths(x);
        if let Some(votes) = self.votes(x, &keys) {
            return Ok(Decision {
                action: plurality_vote(&votes)?,
                propensity: 1.0,
                keys,
                voted: true,
            });
        }
        let (action, propensity) = match self.mode {
            ExplorationMode::RoundRobin => (self.cursor.next_action()?.0, 1.0),
            ExplorationMode::UniformIps => {
                let union: BTreeSet<ActionId> = self
                    .trees
                    .iter()
                    .zip(&keys)
                    .flat_map(|(t, k)| t.live_actions(k, x))
                    .collect();
                let union: Vec<_> = union.into_iter().collect();
                let pick = union[rng.gen_range(0..union.len())];
                (pick, 1.0 / union.len() as f64)
            }
        };
        Ok(Decision {
            action,
            propensity,
            keys,
            voted: false,
        })
    }

    fn credited(&self, obs: &RewardObservation) -> f64 {
        match self.mode {
            ExplorationMode::RoundRobin => obs.reward,
            ExplorationMode::UniformIps => obs.ips_reward(),
        }
    }

    fn check_update(&self, x: &ContextVector, obs: &RewardObservation, keys: &[PathKey]) -> Result<()> {
        if keys.len() != self.trees.len() {
            return Err(Error::contract(format!(
                "{} path keys for {} trees",
                keys.len(),
                self.trees.len()
            )));
        }
        if obs.action >= self.cfg.num_actions {
            return Err(Error::contract(format!("unknown action {}", obs.action)));
        }
        x.check_width(self.cfg.num_vars)
    }

    /// Credits `obs` to the node each tree selected for `x`.
    pub fn update(&mut self, x: &ContextVector, obs: &RewardObservation, keys: &[PathKey]) -> Result<()> {
        self.check_update(x, obs, keys)?;
        let reward = self.credited(obs);
        let cfg = self.cfg;
        for (tree, key) in self.trees.iter_mut().zip(keys) {
            let rule = EliminationRule::forest(cfg, tree.randomization().epsilon);
            tree.update(key, x, obs.action, reward, &rule)?;
        }
        self.steps += 1;
        Ok(())
    }

    /// Same as [`update`](Self::update), one rayon task per tree.
    pub fn update_parallel(&mut self, x: &ContextVector, obs: &RewardObservation, keys: &[PathKey]) -> Result<()> {
        self.check_update(x, obs, keys)?;
        let reward = self.credited(obs);
        let cfg = self.cfg;
        self.trees
            .par_iter_mut()
            .zip(keys.par_iter())
            .try_for_each(|(tree, key)| {
                let rule = EliminationRule::forest(cfg, tree.randomization().epsilon);
                tree.update(key, x, obs.action, reward, &rule)
            })?;
        self.steps += 1;
        Ok(())
    }

    /// Plurality of each tree's greedy action, regardless of convergence.
    pub fn greedy_action(&self, x: &ContextVector) -> ActionId {
        let votes: Vec<_> = self.trees.iter().map(|t| t.best_action(x)).collect();
        plurality_vote(&votes).unwrap_or(0)
    }

    /// Per-tree radius rule; exposed for diagnostics.
    pub fn tree_rule(&self, tree: usize) -> Option<EliminationRule> {
        self.trees.get(tree).map(|t| self.rule(t))
    }

    /// Versioned JSON image of the whole engine.
    pub fn snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string(&Snapshot {
            version: SNAPSHOT_VERSION,
            engine: self.clone(),
        })?)
    }

    pub fn restore(snapshot: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(snapshot)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion(snap.version));
        }
        Ok(snap.engine)
    }
}
