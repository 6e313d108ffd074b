//! Greedy trees built with full knowledge of the distribution, and exact
//! policy evaluation.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{PathKey, TreeRandomization};
use crate::stats::{argmax, plurality_vote, ActionId, ContextVector, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    /// Enumerated `P(x)` and `E[y | x]`.
    Explicit,
    /// A full-information dataset taken as the distribution itself.
    Empirical,
}

/// One support point: context, its probability, and `E[y_k | x]` per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRow {
    pub x: ContextVector,
    pub p: f64,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownDistribution {
    kind: DistributionKind,
    num_vars: usize,
    num_actions: usize,
    rows: Vec<WeightedRow>,
}

const PROB_TOL: f64 = 1e-9;

impl KnownDistribution {
    pub fn explicit(rows: Vec<WeightedRow>) -> Result<Self> {
        let dist = Self::checked(DistributionKind::Explicit, rows)?;
        let total: f64 = dist.rows.iter().map(|r| r.p).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::contract(format!("probabilities sum to {total}, not 1")));
        }
        Ok(dist)
    }

    /// Each row weighs `1/n`; rows sharing a context are merged into one
    /// support point carrying their average reward vector.
    pub fn empirical(rows: Vec<(ContextVector, Vec<f64>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::contract("empirical distribution needs at least one row"));
        }
        let n = rows.len() as f64;
        let mut index: HashMap<ContextVector, usize> = HashMap::new();
        let mut merged: Vec<(ContextVector, Vec<f64>, usize)> = Vec::new();
        for (x, y) in rows {
            match index.get(&x) {
                Some(&j) => {
                    let entry = &mut merged[j];
                    if entry.1.len() != y.len() {
                        return Err(Error::contract("reward vectors differ in length"));
                    }
                    entry.1.iter_mut().zip(&y).for_each(|(s, v)| *s += v);
                    entry.2 += 1;
                }
                None => {
                    index.insert(x.clone(), merged.len());
                    merged.push((x, y, 1));
                }
            }
        }
        let rows = merged
            .into_iter()
            .map(|(x, sums, c)| WeightedRow {
                x,
                p: c as f64 / n,
                means: sums.into_iter().map(|s| s / c as f64).collect(),
            })
            .collect();
        Self::checked(DistributionKind::Empirical, rows)
    }

    fn checked(kind: DistributionKind, rows: Vec<WeightedRow>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::contract("distribution has no rows"))?;
        let (num_vars, num_actions) = (first.x.len(), first.means.len());
        if num_actions == 0 {
            return Err(Error::contract("distribution needs at least one action"));
        }
        for r in &rows {
            if r.x.len() != num_vars || r.means.len() != num_actions {
                return Err(Error::contract("rows disagree on context width or action count"));
            }
            if !(r.p >= 0.0 && r.p <= 1.0 + PROB_TOL) {
                return Err(Error::contract(format!("probability {} outside [0, 1]", r.p)));
            }
            if r.means.iter().any(|m| !(0.0..=1.0).contains(m)) {
                return Err(Error::contract("mean rewards must lie in [0, 1]"));
            }
        }
        Ok(Self {
            kind,
            num_vars,
            num_actions,
            rows,
        })
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn rows(&self) -> &[WeightedRow] {
        &self.rows
    }

    /// `E[y | x]` for a context in the support.
    pub fn means_at(&self, x: &ContextVector) -> Option<&[f64]> {
        self.rows.iter().find(|r| &r.x == x).map(|r| r.means.as_slice())
    }

    /// The two-variable example: `x0, x1` independent with `P(x0 = 1) = 3/8`,
    /// `P(x1 = 1) = 1/4`; action 0 pays `x0`; action 1 pays a context-dependent
    /// rate chosen so every conditional mean in the table comes out exact.
    pub fn table1() -> Self {
        let p0 = [5.0 / 8.0, 3.0 / 8.0];
        let p1 = [3.0 / 4.0, 1.0 / 4.0];
        let k2 = [[1.0 / 2.0, 9.0 / 10.0], [1.0 / 18.0, 1.0 / 2.0]];
        let mut rows = Vec::with_capacity(4);
        for a in 0..2 {
            for b in 0..2 {
                rows.push(WeightedRow {
                    x: ContextVector::new(vec![a == 1, b == 1]),
                    p: p0[a] * p1[b],
                    means: vec![a as f64, k2[a][b]],
                });
            }
        }
        Self::explicit(rows).expect("table is well formed")
    }

    /// Reads the plain-text form: header `x0,..,x{M-1},p,y0,..,y{K-1}`, one
    /// row per context.
    pub fn read_explicit<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let m = header.iter().take_while(|h| h.starts_with('x')).count();
        if header.get(m) != Some("p") {
            return Err(Error::parse(1, "expected columns x0..x{M-1}, p, y0..y{K-1}"));
        }
        let k = header.len() - m - 1;
        if k == 0 || !header.iter().skip(m + 1).all(|h| h.starts_with('y')) {
            return Err(Error::parse(1, "expected at least one y column after p"));
        }
        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = n + 2;
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec.get(j)
                    .ok_or_else(|| Error::parse(line, "short row"))?
                    .parse::<f64>()
                    .map_err(|e| Error::parse(line, e.to_string()))
            };
            let bits = (0..m)
                .map(|j| match num(j)? {
                    b if b == 0.0 => Ok(false),
                    b if b == 1.0 => Ok(true),
                    b => Err(Error::parse(line, format!("context bit {b}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(WeightedRow {
                x: ContextVector::new(bits),
                p: num(m)?,
                means: (0..k).map(|j| num(m + 1 + j)).collect::<Result<_>>()?,
            });
        }
        Self::explicit(rows)
    }

    pub fn write_explicit<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.num_vars).map(|i| format!("x{i}")).collect();
        header.push("p".into());
        header.extend((0..self.num_actions).map(|k| format!("y{k}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.x.bits().iter().map(|&b| (b as u8).to_string()).collect();
            rec.push(r.p.to_string());
            rec.extend(r.means.iter().map(|m| m.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn on_path<'a>(&'a self, path: &'a PathKey) -> impl Iterator<Item = &'a WeightedRow> + 'a {
        self.rows.iter().filter(move |r| path.matches(&r.x))
    }
}

/// Per-action `E[y_k | path]`.
fn conditional_means<'a>(rows: impl Iterator<Item = &'a WeightedRow>, num_actions: usize) -> Result<Vec<f64>> {
    let mut mass = 0.0;
    let mut sums = vec![0.0; num_actions];
    for r in rows {
        mass += r.p;
        sums.iter_mut().zip(&r.means).for_each(|(s, m)| *s += r.p * m);
    }
    if mass <= 0.0 {
        return Err(Error::ZeroProbabilityPath);
    }
    Ok(sums.into_iter().map(|s| s / mass).collect())
}

fn scores_over(rows: &[&WeightedRow], num_actions: usize, candidates: &[VarId]) -> Result<Vec<f64>> {
    let mass: f64 = rows.iter().map(|r| r.p).sum();
    if mass <= 0.0 {
        return Err(Error::ZeroProbabilityPath);
    }
    let mut joint = vec![0.0; candidates.len() * 2 * num_actions];
    for r in rows {
        for (c, &i) in candidates.iter().enumerate() {
            let base = (c * 2 + r.x.value(i)) * num_actions;
            for (k, m) in r.means.iter().enumerate() {
                joint[base + k] += r.p * m;
            }
        }
    }
    Ok(joint
        .chunks(2 * num_actions)
        .map(|cell| {
            let best = |v: usize| cell[v * num_actions..(v + 1) * num_actions].iter().copied().fold(f64::MIN, f64::max);
            (best(0) + best(1)) / mass
        })
        .collect())
}

/// `Σ_v max_k E[y_k · 1{x_i = v} | path]` for each candidate.
pub fn conditional_scores(dist: &KnownDistribution, path: &PathKey, candidates: &[VarId]) -> Result<BTreeMap<VarId, f64>> {
    if let Some(&i) = candidates.iter().find(|&&i| i >= dist.num_vars) {
        return Err(Error::contract(format!("unknown variable {i}")));
    }
    let rows: Vec<_> = dist.on_path(path).collect();
    let scores = scores_over(&rows, dist.num_actions, candidates)?;
    Ok(candidates.iter().copied().zip(scores).collect())
}

/// `max_k E[y_k | path]` and its arg max.
pub fn best_action(dist: &KnownDistribution, path: &PathKey) -> Result<(ActionId, f64)> {
    let means = conditional_means(dist.on_path(path), dist.num_actions)?;
    let k = argmax(means.iter().copied()).expect("at least one action");
    Ok((k, means[k]))
}

/// Value of the best single action, ignoring the context.
pub fn best_constant_value(dist: &KnownDistribution) -> f64 {
    best_action(dist, &PathKey::root()).map(|b| b.1).unwrap_or(0.0)
}

pub trait Policy {
    fn act(&self, x: &ContextVector) -> ActionId;
}

impl<F: Fn(&ContextVector) -> ActionId> Policy for F {
    fn act(&self, x: &ContextVector) -> ActionId {
        self(x)
    }
}

/// Expected per-round reward of a deterministic policy.
pub fn policy_value(dist: &KnownDistribution, policy: &(impl Policy + ?Sized)) -> f64 {
    dist.rows.iter().map(|r| r.p * r.means[policy.act(&r.x)]).sum()
}

/// Expected per-round reward of uniform play over all actions.
pub fn uniform_random_value(dist: &KnownDistribution) -> f64 {
    let k = dist.num_actions as f64;
    dist.rows.iter().map(|r| r.p * r.means.iter().sum::<f64>() / k).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyNode {
    Split { var: VarId },
    Leaf { action: ActionId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyTreePolicy {
    pub rand: TreeRandomization,
    #[serde(with = "crate::serde_pairs")]
    nodes: BTreeMap<PathKey, GreedyNode>,
}

impl GreedyTreePolicy {
    pub fn nodes(&self) -> impl Iterator<Item = (&PathKey, &GreedyNode)> {
        self.nodes.iter()
    }

    pub fn node(&self, key: &PathKey) -> Option<&GreedyNode> {
        self.nodes.get(key)
    }

    /// Leaf reached by `x`.
    pub fn leaf_key(&self, x: &ContextVector) -> PathKey {
        let mut key = PathKey::root();
        while let Some(GreedyNode::Split { var }) = self.nodes.get(&key) {
            key = key.child(*var, x.value(*var));
        }
        key
    }
}

impl Policy for GreedyTreePolicy {
    fn act(&self, x: &ContextVector) -> ActionId {
        match self.nodes.get(&self.leaf_key(x)) {
            Some(GreedyNode::Leaf { action }) => *action,
            _ => 0,
        }
    }
}

struct Builder<'a> {
    dist: &'a KnownDistribution,
    rand: TreeRandomization,
    nodes: BTreeMap<PathKey, GreedyNode>,
}

impl Builder<'_> {
    fn grow(&mut self, key: PathKey, rows: Vec<&WeightedRow>, available: Vec<VarId>, parent_best: ActionId) {
        let k = self.dist.num_actions;
        let Ok(means) = conditional_means(rows.iter().copied(), k) else {
            self.nodes.insert(key, GreedyNode::Leaf { action: parent_best });
            return;
        };
        let best = argmax(means.iter().copied()).expect("at least one action");
        let depth = key.len() + 1;
        let single = self.dist.kind == DistributionKind::Empirical && rows.iter().filter(|r| r.p > 0.0).count() <= 1;
        let candidates = self.rand.candidates(&key, &available);
        if depth > self.rand.depth_cap || candidates.is_empty() || single {
            self.nodes.insert(key, GreedyNode::Leaf { action: best });
            return;
        }
        let scores = scores_over(&rows, k, &candidates).expect("mass checked above");
        let var = candidates[argmax(scores.iter().copied()).expect("non-empty")];
        self.nodes.insert(key.clone(), GreedyNode::Split { var });
        let rest: Vec<VarId> = available.into_iter().filter(|&i| i != var).collect();
        let (ones, zeros): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.x.get(var));
        self.grow(key.child(var, 0), zeros, rest.clone(), best);
        self.grow(key.child(var, 1), ones, rest, best);
    }
}

/// Splits on the best-scoring kept candidate at each node down to the depth
/// cap; leaves carry the conditional best action.
pub fn build_theta_optimal_greedy(dist: &KnownDistribution, rand: TreeRandomization) -> GreedyTreePolicy {
    let mut b = Builder {
        dist,
        rand,
        nodes: BTreeMap::new(),
    };
    let rows: Vec<_> = dist.rows.iter().collect();
    b.grow(PathKey::root(), rows, (0..dist.num_vars).collect(), 0);
    GreedyTreePolicy {
        rand,
        nodes: b.nodes,
    }
}

/// Plurality vote of θ-optimal greedy trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestPolicy {
    pub trees: Vec<GreedyTreePolicy>,
}

impl Policy for ForestPolicy {
    fn act(&self, x: &ContextVector) -> ActionId {
        let votes: Vec<_> = self.trees.iter().map(|t| t.act(x)).collect();
        plurality_vote(&votes).unwrap_or(0)
    }
}

pub fn optimal_forest_policy(dist: &KnownDistribution, rands: &[TreeRandomization]) -> ForestPolicy {
    ForestPolicy {
        trees: rands.par_iter().map(|&r| build_theta_optimal_greedy(dist, r)).collect(),
    }
}

/// The unrandomized reference: `trees` copies would vote identically, so a
/// single tree capped at the context width stands in for the whole forest.
pub fn reference_policy(dist: &KnownDistribution) -> ForestPolicy {
    let cap = dist.num_vars.max(1);
    optimal_forest_policy(dist, &[TreeRandomization::unrandomized(cap, 0.0)])
}
