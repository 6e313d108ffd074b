use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::elimination::EliminationRule;
use crate::error::{Error, Result};
use crate::stats::{ActionId, ContextVector, VarId};
use crate::stump::DecisionStump;

/// The `(variable, value)` tests from a tree's root to a node.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathKey(Vec<(VarId, u8)>);

impl PathKey {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn from_steps(steps: Vec<(VarId, u8)>) -> Result<Self> {
        let mut seen: Vec<VarId> = steps.iter().map(|s| s.0).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != steps.len() {
            return Err(Error::contract("a path may test each variable once"));
        }
        if steps.iter().any(|s| s.1 > 1) {
            return Err(Error::contract("path values must be 0 or 1"));
        }
        Ok(Self(steps))
    }

    pub fn child(&self, var: VarId, value: usize) -> Self {
        let mut steps = self.0.clone();
        steps.push((var, value as u8));
        Self(steps)
    }

    pub fn steps(&self) -> &[(VarId, u8)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn uses(&self, var: VarId) -> bool {
        self.0.iter().any(|s| s.0 == var)
    }

    /// Whether `x` satisfies every test on the path.
    pub fn matches(&self, x: &ContextVector) -> bool {
        self.0.iter().all(|&(i, v)| x.value(i) == v as usize)
    }
}

/// Per-tree randomization `θ`: depth cap, `ε`, and the variable-subsampling function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeRandomization {
    pub theta_seed: u64,
    pub depth_cap: usize,
    pub epsilon: f64,
    pub keep_fraction: f64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl TreeRandomization {
    /// No subsampling: every available variable is a candidate.
    pub fn unrandomized(depth_cap: usize, epsilon: f64) -> Self {
        Self {
            theta_seed: 0,
            depth_cap,
            epsilon,
            keep_fraction: 1.0,
        }
    }

    pub fn validate(&self, num_vars: usize) -> Result<()> {
        if self.depth_cap < 1 || self.depth_cap > num_vars {
            return Err(Error::config(format!(
                "depth cap {} must lie in [1, {num_vars}]",
                self.depth_cap
            )));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::config(format!(
                "keep fraction {} outside (0, 1]",
                self.keep_fraction
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("tree epsilon {} must be >= 0", self.epsilon)));
        }
        Ok(())
    }

    /// `f(θ, c, i)`: a Bernoulli(keep_fraction) draw that is a pure function of
    /// the seed, the path, and the variable.
    pub fn keeps(&self, path: &PathKey, var: VarId) -> bool {
        if self.keep_fraction >= 1.0 {
            return true;
        }
        let mut h = splitmix(self.theta_seed);
        for &(i, v) in path.steps() {
            h = splitmix(h ^ ((i as u64) << 1 | v as u64));
        }
        h = splitmix(h ^ (var as u64).wrapping_mul(GOLDEN));
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        u < self.keep_fraction
    }

    /// Candidate set for a new node; never empty when `available` is not.
    pub fn candidates(&self, path: &PathKey, available: &[VarId]) -> Vec<VarId> {
        let mut kept: Vec<VarId> = available.iter().copied().filter(|&i| self.keeps(path, i)).collect();
        if kept.is_empty() {
            if let Some(&lowest) = available.iter().min() {
                kept.push(lowest);
            }
        }
        kept
    }
}

/// One node of a growing tree: a stump over the node's candidate variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub stump: DecisionStump,
    /// Variables not yet used on the path (the pool the candidates were drawn from).
    pub available: Vec<VarId>,
    pub depth: usize,
    pub has_children: bool,
}

impl Node {
    pub fn candidates(&self) -> &[VarId] {
        self.stump.variable_selection().remaining()
    }
}

/// A greedy tree grown by stacking stumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    rand: TreeRandomization,
    num_vars: usize,
    num_actions: usize,
    #[serde(with = "crate::serde_pairs")]
    nodes: BTreeMap<PathKey, Node>,
}

impl Tree {
    pub fn new(rand: TreeRandomization, num_vars: usize, num_actions: usize) -> Result<Self> {
        rand.validate(num_vars)?;
        let mut tree = Self {
            rand,
            num_vars,
            num_actions,
            nodes: BTreeMap::new(),
        };
        tree.new_path(PathKey::root(), (0..num_vars).collect())?;
        Ok(tree)
    }

    pub fn randomization(&self) -> &TreeRandomization {
        &self.rand
    }

    pub fn node(&self, key: &PathKey) -> Option<&Node> {
        self.nodes.get(key)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&PathKey, &Node)> {
        self.nodes.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Allocates the stump for `key` with zeroed statistics, drawing its
    /// candidates from `available`.
    pub fn new_path(&mut self, key: PathKey, available: Vec<VarId>) -> Result<()> {
        if self.nodes.contains_key(&key) {
            return Err(Error::contract("path already allocated"));
        }
        if let Some(&(i, _)) = key.steps().iter().find(|s| available.contains(&s.0)) {
            return Err(Error::contract(format!("variable {i} is both on the path and available")));
        }
        let depth = key.len() + 1;
        if depth > self.rand.depth_cap {
            return Err(Error::contract("path deeper than the tree's depth cap"));
        }
        let candidates = self.rand.candidates(&key, &available);
        let stump = DecisionStump::with_candidates(self.num_vars, self.num_actions, candidates)?;
        self.nodes.insert(
            key,
            Node {
                stump,
                available,
                depth,
                has_children: false,
            },
        );
        Ok(())
    }

    /// Walks from the root along chosen variables until an unfinished or terminal node.
    pub fn select_path(&self, x: &ContextVector) -> PathKey {
        let mut key = PathKey::root();
        loop {
            let node = &self.nodes[&key];
            match node.stump.chosen_var() {
                Some(i) if node.has_children => key = key.child(i, x.value(i)),
                _ => return key,
            }
        }
    }

    fn terminal(&self, node: &Node) -> bool {
        node.depth == self.rand.depth_cap
    }

    /// The node's vote for `x`, if it is at the depth cap with a settled leaf.
    pub fn vote(&self, key: &PathKey, x: &ContextVector) -> Option<ActionId> {
        let node = self.nodes.get(key)?;
        if !self.terminal(node) {
            return None;
        }
        let leaf = node.stump.leaf(x)?;
        leaf.is_finished().then(|| leaf.remaining()[0])
    }

    /// Actions the node still considers for `x`: all of them during the
    /// variable phase, the leaf's remaining set afterwards.
    pub fn live_actions(&self, key: &PathKey, x: &ContextVector) -> Vec<ActionId> {
        match self.nodes.get(key).and_then(|n| n.stump.leaf(x)) {
            Some(leaf) => leaf.remaining().to_vec(),
            None => (0..self.num_actions).collect(),
        }
    }

    /// Greedy action of the node selected by `x`.
    pub fn best_action(&self, x: &ContextVector) -> ActionId {
        let key = self.select_path(x);
        self.nodes[&key].stump.best_action(x)
    }

    /// Every reachable leaf is at the depth cap with both leaves settled.
    pub fn is_converged(&self) -> bool {
        self.nodes
            .values()
            .filter(|n| !n.has_children)
            .all(|n| self.terminal(n) && n.stump.is_converged())
    }

    /// Credits one reward to the node at `key`, spawning both children when
    /// its variable phase ends below the depth cap.
    pub fn update(&mut self, key: &PathKey, x: &ContextVector, action: ActionId, reward: f64, rule: &EliminationRule) -> Result<()> {
        let cap = self.rand.depth_cap;
        let node = self
            .nodes
            .get_mut(key)
            .ok_or_else(|| Error::contract("update for a path the tree does not have"))?;
        if node.has_children {
            return Err(Error::contract("update routed to an internal node"));
        }
        node.stump.observe(x, action, reward, rule)?;
        let Some(var) = node.stump.chosen_var() else {
            return Ok(());
        };
        if node.depth >= cap {
            return Ok(());
        }
        node.available.retain(|&i| i != var);
        node.has_children = true;
        node.stump.clear_leaves();
        let available = node.available.clone();
        self.new_path(key.child(var, 0), available.clone())?;
        self.new_path(key.child(var, 1), available)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keyed(steps: &[(VarId, u8)]) -> PathKey {
        PathKey::from_steps(steps.to_vec()).unwrap()
    }

    #[test]
    fn full_keep_fraction_keeps_everything() {
        let r = TreeRandomization::unrandomized(3, 0.5);
        let avail: Vec<_> = (0..10).filter(|&i| i != 3).collect();
        assert_eq!(r.candidates(&keyed(&[(3, 1)]), &avail), avail);
    }

    #[test]
    fn subsampling_is_replayable() {
        let r = TreeRandomization {
            theta_seed: 42,
            depth_cap: 3,
            epsilon: 0.5,
            keep_fraction: 0.8,
        };
        let all: Vec<_> = (0..10).collect();
        let a = r.candidates(&PathKey::root(), &all);
        let b = r.candidates(&PathKey::root(), &all);
        assert_eq!(a, b);
        let again: Vec<_> = all.iter().copied().filter(|&i| r.keeps(&PathKey::root(), i)).collect();
        assert_eq!(a, again);
        assert!(!a.is_empty() && a.len() <= 10);
    }

    #[test]
    fn subsampling_rate_matches_keep_fraction() {
        let mut kept = 0usize;
        let mut total = 0usize;
        for seed in 0..400u64 {
            let r = TreeRandomization {
                theta_seed: seed,
                depth_cap: 2,
                epsilon: 0.5,
                keep_fraction: 0.8,
            };
            for i in 0..50 {
                kept += r.keeps(&keyed(&[(60, 0)]), i) as usize;
                total += 1;
            }
        }
        let rate = kept as f64 / total as f64;
        // 20k Bernoulli(0.8) draws: sd ≈ 0.0028
        assert!((rate - 0.8).abs() < 0.012, "{rate}");
    }

    #[test]
    fn empty_draw_forces_lowest_variable() {
        let r = TreeRandomization {
            theta_seed: 1,
            depth_cap: 2,
            epsilon: 0.5,
            keep_fraction: 1e-12,
        };
        assert_eq!(r.candidates(&PathKey::root(), &[7, 4, 9]), vec![4]);
    }

    #[test]
    fn path_key_validation() {
        assert!(PathKey::from_steps(vec![(1, 0), (1, 1)]).is_err());
        assert!(PathKey::from_steps(vec![(1, 2)]).is_err());
        let k = keyed(&[(2, 1), (0, 0)]);
        assert!(k.matches(&ContextVector::from_bits(&[0, 1, 1]).unwrap()));
        assert!(!k.matches(&ContextVector::from_bits(&[1, 1, 1]).unwrap()));
    }

    #[test]
    fn new_path_rejects_duplicates_and_used_variables() {
        let mut t = Tree::new(TreeRandomization::unrandomized(2, 0.5), 4, 2).unwrap();
        assert!(t.new_path(PathKey::root(), vec![0, 1]).is_err());
        assert!(t.new_path(keyed(&[(3, 0)]), vec![0, 3]).is_err());
        t.new_path(keyed(&[(3, 0)]), vec![0, 1, 2]).unwrap();
        assert_eq!(t.node(&keyed(&[(3, 0)])).unwrap().depth, 2);
        assert!(t.new_path(keyed(&[(3, 0), (1, 1)]), vec![0, 2]).is_err());
    }

    #[test]
    fn depth_cap_validated_against_width() {
        assert!(Tree::new(TreeRandomization::unrandomized(5, 0.5), 4, 2).is_err());
        assert!(Tree::new(TreeRandomization::unrandomized(0, 0.5), 4, 2).is_err());
    }
}
