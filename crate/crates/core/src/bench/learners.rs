use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elimination::{EliminationConfig, EliminationRule};
use crate::error::{Error, Result};
use crate::forest::{Decision, ForestConfig, ForestEngine};
use crate::oracle::Policy;
use crate::stats::{ActionId, ContextVector, RewardObservation};
use crate::stump::{ActionSelection, DecisionStump};

/// Anything that can play the bandit game: pick an action for a context, then
/// hear the reward of that action only.
pub trait Learner: Send {
    fn act(&mut self, x: &ContextVector) -> Result<ActionId>;
    fn observe(&mut self, x: &ContextVector, action: ActionId, reward: f64) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerSpec {
    BanditForest,
    /// One unrandomized tree.
    BanditTree,
    ContextFreeSe,
    UniformRandom,
    DecisionStump,
    /// Plays the reference policy itself.
    Reference,
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BanditForest => "bandit-forest",
            Self::BanditTree => "bandit-tree",
            Self::ContextFreeSe => "context-free-se",
            Self::UniformRandom => "uniform-random",
            Self::DecisionStump => "decision-stump",
            Self::Reference => "reference",
        }
    }
}

pub struct ForestLearner {
    engine: ForestEngine,
    rng: ChaCha8Rng,
    pending: Option<Decision>,
    parallel: bool,
}

impl ForestLearner {
    pub fn new(num_actions: usize, num_vars: usize, cfg: &ForestConfig, seed: u64, parallel: bool) -> Result<Self> {
        Ok(Self {
            engine: ForestEngine::new(num_actions, num_vars, cfg)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            parallel,
        })
    }

    pub fn engine(&self) -> &ForestEngine {
        &self.engine
    }
}

impl Learner for ForestLearner {
    fn act(&mut self, x: &ContextVector) -> Result<ActionId> {
        let d = self.engine.decide(x, &mut self.rng)?;
        let action = d.action;
        self.pending = Some(d);
        Ok(action)
    }

    fn observe(&mut self, x: &ContextVector, action: ActionId, reward: f64) -> Result<()> {
        let d = self
            .pending
            .take()
            .filter(|d| d.action == action)
            .ok_or_else(|| Error::contract("observe without a matching act"))?;
        let obs = RewardObservation::new(action, reward, d.propensity)?;
        if self.parallel {
            self.engine.update_parallel(x, &obs, &d.keys)
        } else {
            self.engine.update(x, &obs, &d.keys)
        }
    }
}

/// Successive elimination over actions, ignoring the context.
pub struct ContextFreeLearner {
    arms: ActionSelection,
    rule: EliminationRule,
}

impl ContextFreeLearner {
    pub fn new(num_actions: usize, delta: f64, epsilon: f64) -> Result<Self> {
        // The action radius does not involve M; any admissible width will do.
        let cfg = EliminationConfig::stump(num_actions, 2, delta, epsilon)?;
        Ok(Self {
            arms: ActionSelection::new(num_actions),
            rule: EliminationRule::stump(cfg),
        })
    }

    pub fn selection(&self) -> &ActionSelection {
        &self.arms
    }
}

impl Learner for ContextFreeLearner {
    fn act(&mut self, _x: &ContextVector) -> Result<ActionId> {
        if self.arms.is_finished() {
            Ok(self.arms.remaining()[0])
        } else {
            self.arms.choose()
        }
    }

    fn observe(&mut self, _x: &ContextVector, action: ActionId, reward: f64) -> Result<()> {
        if !self.arms.is_finished() {
            self.arms.observe(action, reward, &self.rule)?;
        }
        Ok(())
    }
}

pub struct UniformLearner {
    num_actions: usize,
    rng: ChaCha8Rng,
}

impl UniformLearner {
    pub fn new(num_actions: usize, seed: u64) -> Self {
        Self {
            num_actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Learner for UniformLearner {
    fn act(&mut self, _x: &ContextVector) -> Result<ActionId> {
        Ok(self.rng.gen_range(0..self.num_actions))
    }

    fn observe(&mut self, _x: &ContextVector, _action: ActionId, _reward: f64) -> Result<()> {
        Ok(())
    }
}

pub struct StumpLearner {
    stump: DecisionStump,
    rule: EliminationRule,
}

impl StumpLearner {
    pub fn new(num_actions: usize, num_vars: usize, delta: f64, epsilon: f64) -> Result<Self> {
        let cfg = EliminationConfig::stump(num_actions, num_vars, delta, epsilon)?;
        Ok(Self {
            stump: DecisionStump::new(num_vars, num_actions),
            rule: EliminationRule::stump(cfg),
        })
    }

    pub fn stump(&self) -> &DecisionStump {
        &self.stump
    }
}

impl Learner for StumpLearner {
    fn act(&mut self, x: &ContextVector) -> Result<ActionId> {
        self.stump.choose(x)
    }

    fn observe(&mut self, x: &ContextVector, action: ActionId, reward: f64) -> Result<()> {
        self.stump.observe(x, action, reward, &self.rule).map(|_| ())
    }
}

/// Wraps a fixed policy.
pub struct PolicyLearner<P>(pub P);

impl<P: Policy + Send> Learner for PolicyLearner<P> {
    fn act(&mut self, x: &ContextVector) -> Result<ActionId> {
        Ok(self.0.act(x))
    }

    fn observe(&mut self, _x: &ContextVector, _action: ActionId, _reward: f64) -> Result<()> {
        Ok(())
    }
}
