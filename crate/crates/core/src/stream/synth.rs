use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_noise, Column, ColumnKind, Environment, LabeledDataset, Round, RewardVector};
use crate::error::{Error, Result};
use crate::oracle::{KnownDistribution, WeightedRow};
use crate::stats::{argmax, ActionId, ContextVector};

/// Largest width [`SynthProblem::explicit`] will enumerate.
pub const MAX_EXPLICIT_VARS: usize = 16;

/// Synthetic problems with known conditional means. Rewards are Bernoulli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum SynthProblem {
    /// The two-variable, two-action example with independent variables.
    Table1,
    /// Uniform bits; the rewarded action is `x0 xor x1`, the rest are distractors.
    Xor { num_vars: usize },
    /// Uniform bits; variable 0 decides which of actions 0 and 1 is best.
    /// The best variable leads every other by `delta1` and in each leaf the
    /// best action leads the rest by at least `delta2`.
    Gap {
        num_actions: usize,
        num_vars: usize,
        delta1: f64,
        delta2: f64,
    },
}

const TABLE1_P: [f64; 2] = [3.0 / 8.0, 1.0 / 4.0];

impl SynthProblem {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Table1 => Ok(()),
            Self::Xor { num_vars } if num_vars < 2 => Err(Error::config("xor needs at least two variables")),
            Self::Xor { .. } => Ok(()),
            Self::Gap {
                num_actions,
                num_vars,
                delta1,
                delta2,
            } => {
                if num_actions < 2 || num_vars < 1 {
                    return Err(Error::config("gap problem needs K >= 2 and M >= 1"));
                }
                let ok = delta1 > 0.0
                    && delta2 > 0.0
                    && delta1 <= 0.5
                    && delta1 <= delta2
                    && delta2 <= 2.0 * delta1 + 1e-12
                    && (num_actions > 2 || (delta2 - 2.0 * delta1).abs() < 1e-12);
                if ok {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "infeasible gaps: need delta2/2 <= delta1 <= min(delta2, 1/2), and delta2 = 2 delta1 when K = 2 (got {delta1}, {delta2})"
                    )))
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        match *self {
            Self::Table1 => 2,
            Self::Xor { num_vars } | Self::Gap { num_vars, .. } => num_vars,
        }
    }

    pub fn num_actions(&self) -> usize {
        match *self {
            Self::Table1 | Self::Xor { .. } => 2,
            Self::Gap { num_actions, .. } => num_actions,
        }
    }

    fn bit_prob(&self, i: usize) -> f64 {
        match self {
            Self::Table1 => TABLE1_P[i],
            _ => 0.5,
        }
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> ContextVector {
        ContextVector::new((0..self.num_vars()).map(|i| rng.gen_bool(self.bit_prob(i))).collect())
    }

    /// `E[y_k | x]` for every action.
    pub fn expected_rewards(&self, x: &ContextVector) -> Vec<f64> {
        match *self {
            Self::Table1 => {
                let k2 = [[1.0 / 2.0, 9.0 / 10.0], [1.0 / 18.0, 1.0 / 2.0]];
                vec![x.value(0) as f64, k2[x.value(0)][x.value(1)]]
            }
            Self::Xor { .. } => {
                let label = (x.get(0) ^ x.get(1)) as usize;
                (0..2).map(|k| (k == label) as u8 as f64).collect()
            }
            Self::Gap {
                num_actions,
                delta1,
                delta2,
                ..
            } => {
                let top = 0.5 + delta1;
                let best = x.value(0);
                (0..num_actions)
                    .map(|k| match k {
                        k if k == best => top,
                        0 | 1 => 0.5 - delta1,
                        _ => top - delta2,
                    })
                    .collect()
            }
        }
    }

    /// Bayes-optimal action.
    pub fn optimal_action(&self, x: &ContextVector) -> ActionId {
        argmax(self.expected_rewards(x)).unwrap_or(0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (ContextVector, Vec<f64>, Vec<f64>) {
        let x = self.sample_context(rng);
        let means = self.expected_rewards(&x);
        let y = means.iter().map(|&m| rng.gen_bool(m) as u8 as f64).collect();
        (x, y, means)
    }

    /// Enumerated distribution; only for narrow problems.
    pub fn explicit(&self) -> Result<KnownDistribution> {
        let m = self.num_vars();
        if m > MAX_EXPLICIT_VARS {
            return Err(Error::config(format!("{m} variables is too wide to enumerate")));
        }
        let rows = (0..1usize << m)
            .map(|n| {
                let bits: Vec<bool> = (0..m).map(|i| n >> i & 1 == 1).collect();
                let p = bits
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| if b { self.bit_prob(i) } else { 1.0 - self.bit_prob(i) })
                    .product();
                let x = ContextVector::new(bits);
                let means = self.expected_rewards(&x);
                WeightedRow { x, p, means }
            })
            .collect();
        KnownDistribution::explicit(rows)
    }
}

/// Iid rounds from a synthetic problem. Noise, if any, is applied to the
/// context the learner sees; `expected` stays that of the clean draw.
#[derive(Debug, Clone)]
pub struct SynthStream {
    problem: SynthProblem,
    noise: f64,
    rng: ChaCha8Rng,
}

impl SynthStream {
    pub fn new(problem: SynthProblem, noise: f64, seed: u64) -> Result<Self> {
        problem.validate()?;
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::config(format!("noise {noise} outside [0, 1]")));
        }
        Ok(Self {
            problem,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn problem(&self) -> &SynthProblem {
        &self.problem
    }
}

impl Environment for SynthStream {
    fn num_vars(&self) -> usize {
        self.problem.num_vars()
    }

    fn num_actions(&self) -> usize {
        self.problem.num_actions()
    }

    fn next_round(&mut self) -> Result<Round> {
        let (x, y, means) = self.problem.sample(&mut self.rng);
        let x = apply_noise(&x, self.noise, &mut self.rng)?;
        Ok(Round {
            x,
            rewards: RewardVector::new(y),
            expected: Some(means),
            row: None,
        })
    }
}

/// A mixed-type classification table in the usual UCI shape: six continuous
/// columns, three categorical, two binary, four classes decided by a small
/// tree over a few of them, and `label_noise` of the labels redrawn uniformly.
pub fn synth_labeled_dataset(rows: usize, label_noise: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Column> = (0..6)
        .map(|j| Column {
            name: format!("num{j}"),
            kind: ColumnKind::Continuous,
        })
        .collect();
    let cat_sizes = [3usize, 5, 4];
    for j in 0..cat_sizes.len() {
        columns.push(Column {
            name: format!("cat{j}"),
            kind: ColumnKind::Categorical,
        });
    }
    for j in 0..2 {
        columns.push(Column {
            name: format!("flag{j}"),
            kind: ColumnKind::Binary,
        });
    }
    let mut data = Vec::with_capacity(rows);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let num: Vec<f64> = (0..6).map(|_| (rng.gen::<f64>() * 1000.0).round() / 1000.0).collect();
        let cat: Vec<usize> = cat_sizes.iter().map(|&s| rng.gen_range(0..s)).collect();
        let flag: Vec<bool> = (0..2).map(|_| rng.gen_bool(0.5)).collect();
        let mut label = if num[0] > 0.6 {
            if cat[0] == 0 {
                0
            } else {
                1
            }
        } else if num[1] > 0.4 && flag[0] {
            2
        } else {
            3
        };
        if rng.gen_bool(label_noise) {
            label = rng.gen_range(0..4);
        }
        let mut row: Vec<String> = num.iter().map(|v| v.to_string()).collect();
        row.extend(cat.iter().enumerate().map(|(j, &c)| format!("{}{c}", (b'a' + j as u8) as char)));
        row.extend(flag.iter().map(|&b| (b as u8).to_string()));
        data.push(row);
        labels.push(label);
    }
    LabeledDataset {
        columns,
        label_name: "class".into(),
        labels_vocab: (0..4).map(|c| format!("c{c}")).collect(),
        rows: data,
        labels,
    }
}
