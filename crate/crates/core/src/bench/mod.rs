//! Regret harness: learners against environments, traced against a reference policy.

mod learners;

pub use learners::{
    ContextFreeLearner, ForestLearner, Learner, LearnerSpec, PolicyLearner, StumpLearner, UniformLearner,
};

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ExplorationMode, ForestConfig, VoteGate};
use crate::oracle::{reference_policy, ForestPolicy, Policy};
use crate::stats::{argmax, ActionId, ContextVector};
use crate::stream::{
    fit_binarization, BinarizationSpec, DatasetStream, Environment, LabeledDataset, StreamConfig, SynthProblem,
    SynthStream,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSpec {
    Table1,
    Xor,
    Gap,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSpec {
    /// Bayes-optimal for synthetic sources, the empirical optimal forest for datasets.
    Optimal,
    /// Best fixed action.
    None,
}

/// Everything a run needs. Read from a flat TOML file; omitted keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub learners: Vec<LearnerSpec>,
    pub trees: usize,
    pub depth_min: usize,
    pub depth_max: usize,
    pub delta: f64,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    pub keep_fraction: f64,
    /// Tolerance for the single-tree, stump and context-free learners.
    pub epsilon: f64,
    pub mode: ExplorationMode,
    pub gate: VoteGate,
    pub parallel_trees: bool,
    pub source: SourceSpec,
    pub dataset: Option<PathBuf>,
    pub num_vars: usize,
    pub num_actions: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub noise: f64,
    pub loop_stream: bool,
    pub horizon: u64,
    pub trials: usize,
    pub reference: ReferenceSpec,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let forest = ForestConfig::default();
        Self {
            learners: vec![LearnerSpec::BanditForest, LearnerSpec::ContextFreeSe],
            trees: forest.trees,
            depth_min: forest.depth_min,
            depth_max: forest.depth_max,
            delta: forest.delta,
            epsilon_min: forest.epsilon_min,
            epsilon_max: forest.epsilon_max,
            keep_fraction: forest.keep_fraction,
            epsilon: 0.0,
            mode: forest.mode,
            gate: forest.gate,
            parallel_trees: false,
            source: SourceSpec::Xor,
            dataset: None,
            num_vars: 4,
            num_actions: 3,
            delta1: 0.2,
            delta2: 0.3,
            noise: 0.05,
            loop_stream: true,
            horizon: 100_000,
            trials: 10,
            reference: ReferenceSpec::Optimal,
            output: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.learners.is_empty() {
            return Err(Error::config("no learners configured"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config(format!("noise {} outside [0, 1]", self.noise)));
        }
        if self.source == SourceSpec::Dataset && self.dataset.is_none() {
            return Err(Error::config("source = \"dataset\" needs a dataset path"));
        }
        self.forest_config(0).randomizations().map(|_| ())
    }

    pub fn forest_config(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            trees: self.trees,
            depth_min: self.depth_min,
            depth_max: self.depth_max,
            epsilon_min: self.epsilon_min,
            epsilon_max: self.epsilon_max,
            keep_fraction: self.keep_fraction,
            delta: self.delta,
            mode: self.mode,
            gate: self.gate,
            seed,
        }
    }

    fn synth_problem(&self) -> Option<SynthProblem> {
        match self.source {
            SourceSpec::Table1 => Some(SynthProblem::Table1),
            SourceSpec::Xor => Some(SynthProblem::Xor { num_vars: self.num_vars }),
            SourceSpec::Gap => Some(SynthProblem::Gap {
                num_actions: self.num_actions,
                num_vars: self.num_vars,
                delta1: self.delta1,
                delta2: self.delta2,
            }),
            SourceSpec::Dataset => None,
        }
    }
}

/// The policy regret is measured against.
#[derive(Debug, Clone)]
pub enum Reference {
    Bayes(SynthProblem),
    Forest(Arc<ForestPolicy>),
    Fixed(ActionId),
}

impl Policy for Reference {
    fn act(&self, x: &ContextVector) -> ActionId {
        match self {
            Self::Bayes(p) => p.optimal_action(x),
            Self::Forest(f) => f.act(x),
            Self::Fixed(k) => *k,
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    Synth(SynthProblem),
    Dataset(Arc<(LabeledDataset, BinarizationSpec)>),
}

/// Expected reward of each action with the context ignored.
fn marginal_means(p: &SynthProblem) -> Vec<f64> {
    match *p {
        SynthProblem::Table1 => vec![3.0 / 8.0, 7.0 / 16.0],
        SynthProblem::Xor { .. } => vec![0.5, 0.5],
        SynthProblem::Gap {
            num_actions,
            delta1,
            delta2,
            ..
        } => (0..num_actions).map(|k| if k < 2 { 0.5 } else { 0.5 + delta1 - delta2 }).collect(),
    }
}

/// One trial of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub checkpoints: Vec<u64>,
    /// Accumulated regret: reference reward (expected when known) minus realized reward.
    pub regret: Vec<f64>,
    /// Accumulated expected regret, when the environment knows `E[y | x]`.
    pub expected_regret: Option<Vec<f64>>,
    /// Mean realized reward over the final window.
    pub final_rate: f64,
    pub seconds: f64,
}

/// Powers of two up to `horizon`, then `horizon`.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut c: Vec<u64> = std::iter::successors(Some(1u64), |t| t.checked_mul(2))
        .take_while(|&t| t <= horizon)
        .collect();
    if c.last() != Some(&horizon) {
        c.push(horizon);
    }
    c
}

/// Rounds averaged for the final classification rate.
pub fn final_window(horizon: u64) -> u64 {
    (horizon / 10).clamp(1, 100_000)
}

/// Reproducible per-trial seeds.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..trials).map(|_| rng.gen()).collect()
}

/// A configuration with its data loaded and its reference built.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: RunConfig,
    source: Source,
    reference: Reference,
    num_vars: usize,
    num_actions: usize,
}

impl Experiment {
    pub fn prepare(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.synth_problem() {
            Some(problem) => Self::synth(cfg, problem),
            None => {
                let path = cfg.dataset.clone().expect("validated");
                let data = LabeledDataset::read(std::fs::File::open(path)?)?;
                Self::from_dataset(cfg, data)
            }
        }
    }

    fn synth(cfg: RunConfig, problem: SynthProblem) -> Result<Self> {
        problem.validate()?;
        let reference = match cfg.reference {
            ReferenceSpec::Optimal => Reference::Bayes(problem.clone()),
            ReferenceSpec::None => Reference::Fixed(argmax(marginal_means(&problem)).unwrap_or(0)),
        };
        Ok(Self {
            num_vars: problem.num_vars(),
            num_actions: problem.num_actions(),
            source: Source::Synth(problem),
            reference,
            cfg,
        })
    }

    /// Dataset run without touching the filesystem.
    pub fn from_dataset(cfg: RunConfig, data: LabeledDataset) -> Result<Self> {
        cfg.validate()?;
        let spec = fit_binarization(&data)?;
        let probe = DatasetStream::new(&data, &spec, StreamConfig::default())?;
        let reference = match cfg.reference {
            ReferenceSpec::Optimal => Reference::Forest(Arc::new(reference_policy(&probe.empirical_distribution()?))),
            ReferenceSpec::None => {
                let mut counts = vec![0usize; data.num_actions()];
                data.labels.iter().for_each(|&l| counts[l] += 1);
                Reference::Fixed(argmax(counts.iter().map(|&c| c as f64)).unwrap_or(0))
            }
        };
        Ok(Self {
            num_vars: spec.width(),
            num_actions: spec.labels.len(),
            source: Source::Dataset(Arc::new((data, spec))),
            reference,
            cfg,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn against_best_fixed(&self) -> bool {
        self.cfg.reference == ReferenceSpec::None
    }

    pub fn environment(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match &self.source {
            Source::Synth(p) => Box::new(SynthStream::new(p.clone(), self.cfg.noise, seed)?),
            Source::Dataset(d) => Box::new(DatasetStream::new(
                &d.0,
                &d.1,
                StreamConfig {
                    noise_flip_prob: self.cfg.noise,
                    loop_stream: self.cfg.loop_stream,
                    shuffle_seed: seed,
                    horizon: self.cfg.horizon,
                },
            )?),
        })
    }

    pub fn learner(&self, spec: LearnerSpec, seed: u64) -> Result<Box<dyn Learner>> {
        let (k, m, c) = (self.num_actions, self.num_vars, &self.cfg);
        Ok(match spec {
            LearnerSpec::BanditForest => Box::new(ForestLearner::new(k, m, &c.forest_config(seed), seed, c.parallel_trees)?),
            LearnerSpec::BanditTree => {
                let tree = ForestConfig {
                    mode: c.mode,
                    gate: c.gate,
                    ..ForestConfig::single_tree(c.depth_max, c.epsilon, c.delta)
                };
                Box::new(ForestLearner::new(k, m, &tree, seed, false)?)
            }
            LearnerSpec::ContextFreeSe => Box::new(ContextFreeLearner::new(k, c.delta, c.epsilon)?),
            LearnerSpec::UniformRandom => Box::new(UniformLearner::new(k, seed)),
            LearnerSpec::DecisionStump => Box::new(StumpLearner::new(k, m, c.delta, c.epsilon)?),
            LearnerSpec::Reference => Box::new(PolicyLearner(self.reference.clone())),
        })
    }

    /// Drives `horizon` rounds of act, reveal, observe.
    pub fn run_trial(&self, spec: LearnerSpec, trial_seed: u64) -> Result<TrialTrace> {
        let started = Instant::now();
        let mut split = ChaCha8Rng::seed_from_u64(trial_seed);
        let (env_seed, learner_seed) = (split.gen::<u64>(), split.gen::<u64>());
        let mut env = self.environment(env_seed)?;
        let mut learner = self.learner(spec, learner_seed)?;
        let horizon = self.cfg.horizon;
        let marks = checkpoints(horizon);
        let window_start = horizon - final_window(horizon);
        let mut next_mark = 0;
        let (mut regret, mut expected_regret, mut window_sum) = (0.0, 0.0, 0.0);
        let mut trace = TrialTrace {
            checkpoints: marks.clone(),
            regret: Vec::with_capacity(marks.len()),
            expected_regret: None,
            final_rate: 0.0,
            seconds: 0.0,
        };
        let mut expected_trace = Vec::with_capacity(marks.len());
        let mut knows_means = true;
        for t in 1..=horizon {
            let round = env.next_round()?;
            let action = learner.act(&round.x)?;
            let y = round.rewards.reveal(action)?;
            learner.observe(&round.x, action, y)?;
            let best = self.reference.act(&round.x);
            match &round.expected {
                Some(means) => {
                    regret += means[best] - y;
                    expected_regret += means[best] - means[action];
                }
                None => {
                    regret += round.rewards.reveal(best)? - y;
                    knows_means = false;
                }
            }
            if t > window_start {
                window_sum += y;
            }
            if t == marks[next_mark] {
                trace.regret.push(regret);
                expected_trace.push(expected_regret);
                next_mark += 1;
            }
        }
        trace.expected_regret = knows_means.then_some(expected_trace);
        trace.final_rate = window_sum / final_window(horizon) as f64;
        trace.seconds = started.elapsed().as_secs_f64();
        Ok(trace)
    }

    /// Every configured learner over `trials` seeds derived from the master
    /// seed; all learners see the same environment seeds.
    pub fn run(&self) -> Result<ExperimentReport> {
        let seeds = trial_seeds(self.cfg.seed, self.cfg.trials);
        let jobs: Vec<(LearnerSpec, u64)> = self
            .cfg
            .learners
            .iter()
            .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
            .collect();
        let traces = jobs
            .par_iter()
            .map(|&(l, s)| self.run_trial(l, s))
            .collect::<Result<Vec<_>>>()?;
        let learners = self
            .cfg
            .learners
            .iter()
            .zip(traces.chunks(seeds.len()))
            .map(|(l, chunk)| LearnerSummary::aggregate(l.name(), chunk))
            .collect();
        Ok(ExperimentReport {
            checkpoints: checkpoints(self.cfg.horizon),
            trial_seeds: seeds,
            learners,
            against_best_fixed: self.against_best_fixed(),
        })
    }
}

pub fn run_experiment(cfg: RunConfig) -> Result<ExperimentReport> {
    Experiment::prepare(cfg)?.run()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub name: String,
    pub regret_mean: Vec<f64>,
    pub regret_std: Vec<f64>,
    pub expected_regret_mean: Option<Vec<f64>>,
    pub final_regret: Vec<f64>,
    pub final_regret_mean: f64,
    pub final_regret_std: f64,
    /// Half-width of the normal 95% interval on the mean final regret.
    pub ci95: f64,
    pub rates: Vec<f64>,
    pub rate_mean: f64,
    pub seconds_mean: f64,
}

impl LearnerSummary {
    fn aggregate(name: &str, traces: &[TrialTrace]) -> Self {
        let points = traces[0].regret.len();
        let column = |j: usize| traces.iter().map(|t| t.regret[j]).collect::<Vec<_>>();
        let (regret_mean, regret_std): (Vec<f64>, Vec<f64>) = (0..points).map(|j| mean_std(&column(j))).unzip();
        let expected_regret_mean = traces
            .iter()
            .map(|t| t.expected_regret.as_ref())
            .collect::<Option<Vec<_>>>()
            .map(|all| (0..points).map(|j| mean_std(&all.iter().map(|e| e[j]).collect::<Vec<_>>()).0).collect());
        let final_regret = column(points - 1);
        let (final_regret_mean, final_regret_std) = mean_std(&final_regret);
        let rates: Vec<f64> = traces.iter().map(|t| t.final_rate).collect();
        Self {
            name: name.to_string(),
            regret_mean,
            regret_std,
            expected_regret_mean,
            ci95: 1.96 * final_regret_std / (traces.len() as f64).sqrt(),
            final_regret,
            final_regret_mean,
            final_regret_std,
            rate_mean: mean_std(&rates).0,
            rates,
            seconds_mean: mean_std(&traces.iter().map(|t| t.seconds).collect::<Vec<_>>()).0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub checkpoints: Vec<u64>,
    pub trial_seeds: Vec<u64>,
    pub learners: Vec<LearnerSummary>,
    /// Regret is against the best fixed action rather than the optimal policy.
    pub against_best_fixed: bool,
}

impl ExperimentReport {
    pub fn learner(&self, name: &str) -> Option<&LearnerSummary> {
        self.learners.iter().find(|l| l.name == name)
    }

    /// `t`, then `<learner>_regret_mean`, `<learner>_regret_std` per learner.
    /// Timing is left out so identical configurations give identical bytes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for l in &self.learners {
            header.push(format!("{}_regret_mean", l.name));
            header.push(format!("{}_regret_std", l.name));
        }
        w.write_record(&header)?;
        for (j, t) in self.checkpoints.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            for l in &self.learners {
                rec.push(l.regret_mean[j].to_string());
                rec.push(l.regret_std[j].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Final regret with its 95% interval, final-window classification rate,
    /// and mean wall-clock seconds per trial.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let against = if self.against_best_fixed { "best fixed action" } else { "optimal policy" };
        let _ = writeln!(out, "regret against the {against}, {} trials", self.trial_seeds.len());
        let _ = writeln!(out, "{:<18} {:>26} {:>20} {:>10}", "learner", "final regret", "classification rate", "time (s)");
        for l in &self.learners {
            let regret = format!("{:.1} ± {:.1}", l.final_regret_mean, l.ci95);
            let _ = writeln!(out, "{:<18} {:>26} {:>20.4} {:>10.2}", l.name, regret, l.rate_mean, l.seconds_mean);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{policy_value, uniform_random_value, KnownDistribution};

    fn table1_cfg(learners: Vec<LearnerSpec>, horizon: u64, trials: usize) -> RunConfig {
        RunConfig {
            learners,
            source: SourceSpec::Table1,
            noise: 0.0,
            horizon,
            trials,
            seed: 11,
            ..RunConfig::default()
        }
    }

    #[test]
    fn checkpoint_schedule() {
        assert_eq!(checkpoints(1), vec![1]);
        assert_eq!(checkpoints(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(checkpoints(16), vec![1, 2, 4, 8, 16]);
        assert_eq!(final_window(50), 5);
        assert_eq!(final_window(5), 1);
        assert_eq!(final_window(10_000_000), 100_000);
    }

    #[test]
    fn trial_seeds_are_distinct_and_reproducible() {
        let a = trial_seeds(3, 10);
        assert_eq!(a, trial_seeds(3, 10));
        let set: std::collections::BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 10);
        assert_ne!(a, trial_seeds(4, 10));
    }

    #[test]
    fn uniform_random_regret_on_table1_matches_enumeration() {
        let d = KnownDistribution::table1();
        let optimum = policy_value(&d, &|x: &ContextVector| SynthProblem::Table1.optimal_action(x));
        let per_step = optimum - uniform_random_value(&d);
        assert!((optimum - 0.75).abs() < 1e-12);
        let horizon = 200_000;
        let report = Experiment::prepare(table1_cfg(vec![LearnerSpec::UniformRandom], horizon, 4)).unwrap().run().unwrap();
        let l = &report.learners[0];
        let expected = l.expected_regret_mean.as_ref().unwrap().last().unwrap() / horizon as f64;
        // Per-step expected regret is a mean of bounded terms; 4·2·10^5 draws.
        assert!((expected - per_step).abs() < 0.005, "{expected} vs {per_step}");
        let realized = l.final_regret_mean / horizon as f64;
        assert!((realized - per_step).abs() < 0.01, "{realized} vs {per_step}");
    }

    #[test]
    fn reference_against_itself_has_zero_expected_regret() {
        let report = Experiment::prepare(table1_cfg(vec![LearnerSpec::Reference], 50_000, 3)).unwrap().run().unwrap();
        let l = &report.learners[0];
        assert!(l.expected_regret_mean.as_ref().unwrap().iter().all(|&r| r == 0.0));
        // Realized regret: sum of 5·10^4 centred terms of variance ≤ 1/4.
        let sd = (50_000.0f64 * 0.25).sqrt();
        for &r in &l.final_regret {
            assert!(r.abs() <= 3.0 * sd, "{r}");
        }
    }

    #[test]
    fn expected_regret_is_nonnegative_and_nondecreasing() {
        let cfg = table1_cfg(
            vec![LearnerSpec::BanditForest, LearnerSpec::ContextFreeSe, LearnerSpec::DecisionStump, LearnerSpec::UniformRandom],
            20_000,
            3,
        );
        let report = Experiment::prepare(RunConfig { depth_min: 1, ..cfg }).unwrap().run().unwrap();
        for l in &report.learners {
            let e = l.expected_regret_mean.as_ref().unwrap();
            assert!(e.iter().all(|&r| r >= -1e-9), "{}", l.name);
            assert!(e.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{}", l.name);
        }
    }

    #[test]
    fn context_free_baseline_settles_on_the_second_action() {
        let exp = Experiment::prepare(RunConfig {
            epsilon: 0.0,
            ..table1_cfg(vec![LearnerSpec::ContextFreeSe], 1, 1)
        })
        .unwrap();
        let mut learner = ContextFreeLearner::new(2, 0.05, 0.0).unwrap();
        let mut env = exp.environment(5).unwrap();
        for _ in 0..400_000 {
            let r = env.next_round().unwrap();
            let a = learner.act(&r.x).unwrap();
            learner.observe(&r.x, a, r.rewards.reveal(a).unwrap()).unwrap();
        }
        assert_eq!(learner.selection().remaining(), &[1]);
        let d = KnownDistribution::table1();
        assert!((policy_value(&d, &|_: &ContextVector| 1) - 7.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn context_free_on_xor_cannot_classify() {
        let cfg = RunConfig {
            learners: vec![LearnerSpec::ContextFreeSe],
            source: SourceSpec::Xor,
            num_vars: 3,
            noise: 0.0,
            horizon: 50_000,
            trials: 2,
            epsilon: 0.1,
            ..RunConfig::default()
        };
        let report = run_experiment(cfg).unwrap();
        // 5000-round window of fair coin flips: 3 sd ≈ 0.021.
        assert!(report.learners[0].rate_mean <= 0.5 + 0.021 * 2.0);
    }

    #[test]
    fn identical_configs_give_identical_csv() {
        let cfg = RunConfig {
            learners: vec![LearnerSpec::BanditForest, LearnerSpec::BanditTree],
            horizon: 5_000,
            trials: 3,
            seed: 21,
            ..RunConfig::default()
        };
        let csv = |cfg: RunConfig| {
            let mut buf = Vec::new();
            run_experiment(cfg).unwrap().write_csv(&mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = csv(cfg.clone());
        assert_eq!(a, csv(cfg.clone()));
        assert!(a.starts_with("t,bandit-forest_regret_mean,bandit-forest_regret_std,bandit-tree_regret_mean,bandit-tree_regret_std\n"));
        assert_eq!(a.lines().count(), 1 + checkpoints(5_000).len());
        assert_ne!(a, csv(RunConfig { seed: 22, ..cfg }));
    }

    #[test]
    fn summary_statistics() {
        let traces: Vec<TrialTrace> = [1.0, 3.0, 5.0]
            .iter()
            .map(|&r| TrialTrace {
                checkpoints: vec![1, 2],
                regret: vec![0.0, r],
                expected_regret: None,
                final_rate: r / 10.0,
                seconds: 0.0,
            })
            .collect();
        let s = LearnerSummary::aggregate("x", &traces);
        assert_eq!(s.final_regret_mean, 3.0);
        assert_eq!(s.final_regret_std, 2.0);
        assert!((s.ci95 - 1.96 * 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((s.rate_mean - 0.3).abs() < 1e-12);
        assert_eq!(s.expected_regret_mean, None);
    }

    #[test]
    fn final_window_rate_is_the_windowed_mean() {
        // The reference on deterministic XOR is always right.
        let cfg = RunConfig {
            learners: vec![LearnerSpec::Reference, LearnerSpec::UniformRandom],
            source: SourceSpec::Xor,
            noise: 0.0,
            horizon: 1_000,
            trials: 1,
            ..RunConfig::default()
        };
        let exp = Experiment::prepare(cfg).unwrap();
        let seed = trial_seeds(0, 1)[0];
        assert_eq!(exp.run_trial(LearnerSpec::Reference, seed).unwrap().final_rate, 1.0);
        // Replay the uniform learner by hand over the last 100 rounds.
        let trace = exp.run_trial(LearnerSpec::UniformRandom, seed).unwrap();
        let mut split = ChaCha8Rng::seed_from_u64(seed);
        let (env_seed, learner_seed) = (split.gen::<u64>(), split.gen::<u64>());
        let mut env = exp.environment(env_seed).unwrap();
        let mut l = exp.learner(LearnerSpec::UniformRandom, learner_seed).unwrap();
        let mut hits = 0.0;
        for t in 1..=1_000 {
            let r = env.next_round().unwrap();
            let a = l.act(&r.x).unwrap();
            if t > 900 {
                hits += r.rewards.reveal(a).unwrap();
            }
        }
        assert_eq!(trace.final_rate, hits / 100.0);
    }

    #[test]
    fn config_parses_flat_toml() {
        let cfg = RunConfig::from_toml(
            r#"
            learners = ["bandit-forest", "context-free-se"]
            trees = 30
            depth_min = 1
            depth_max = 3
            mode = "round-robin"
            source = "gap"
            delta1 = 0.25
            delta2 = 0.4
            seed = 9
            "#,
        )
        .unwrap();
        assert_eq!(cfg.trees, 30);
        assert_eq!(cfg.mode, ExplorationMode::RoundRobin);
        assert_eq!(cfg.source, SourceSpec::Gap);
        assert_eq!(cfg.horizon, RunConfig::default().horizon);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig { trials: 0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { source: SourceSpec::Dataset, ..RunConfig::default() }.validate().is_err());
    }

    #[test]
    fn dataset_experiment_uses_the_empirical_reference() {
        let data = crate::stream::synth_labeled_dataset(2_000, 0.0, 4);
        let cfg = RunConfig {
            learners: vec![LearnerSpec::Reference, LearnerSpec::UniformRandom],
            source: SourceSpec::Dataset,
            dataset: Some("unused".into()),
            noise: 0.0,
            horizon: 4_000,
            trials: 2,
            ..RunConfig::default()
        };
        let report = Experiment::from_dataset(cfg, data).unwrap().run().unwrap();
        let reference = report.learner("reference").unwrap();
        assert!(reference.final_regret.iter().all(|&r| r == 0.0));
        assert!(reference.expected_regret_mean.is_none());
        assert!(report.learner("uniform-random").unwrap().final_regret_mean > 0.0);
    }
}
