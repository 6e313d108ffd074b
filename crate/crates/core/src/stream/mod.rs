//! Environments: schema-headed datasets, binarization, noise, looping
//! streams, and synthetic problems.

mod synth;

pub use synth::{synth_labeled_dataset, SynthProblem, SynthStream};

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::KnownDistribution;
use crate::stats::{ActionId, ContextVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Binary,
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "categorical" => Ok(Self::Categorical),
            "binary" => Ok(Self::Binary),
            other => Err(Error::config(format!("unknown column kind {other:?}"))),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Continuous => "continuous",
            Self::Categorical => "categorical",
            Self::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Raw feature rows with class labels.
///
/// On disk: a comma-separated file whose header line names every column as
/// `name:kind`, kind one of `continuous`, `categorical`, `binary`, and exactly
/// one `name:label`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub columns: Vec<Column>,
    pub label_name: String,
    pub labels_vocab: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub labels: Vec<ActionId>,
}

impl LabeledDataset {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let mut columns = Vec::new();
        let mut label_at = None;
        let mut label_name = String::new();
        for (j, h) in header.iter().enumerate() {
            let (name, kind) = h
                .rsplit_once(':')
                .ok_or_else(|| Error::parse(1, format!("column {h:?} lacks a :kind suffix")))?;
            if kind == "label" {
                if label_at.replace(j).is_some() {
                    return Err(Error::parse(1, "more than one label column"));
                }
                label_name = name.to_string();
            } else {
                let kind = kind.parse().map_err(|e: Error| Error::parse(1, e.to_string()))?;
                columns.push(Column {
                    name: name.to_string(),
                    kind,
                });
            }
        }
        let label_at = label_at.ok_or_else(|| Error::parse(1, "no label column"))?;
        let mut raw_labels = Vec::new();
        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::parse(n + 2, format!("{} fields, header has {}", rec.len(), header.len())));
            }
            let mut row = Vec::with_capacity(columns.len());
            for (j, field) in rec.iter().enumerate() {
                if j == label_at {
                    raw_labels.push(field.to_string());
                } else {
                    row.push(field.to_string());
                }
            }
            rows.push(row);
        }
        let labels_vocab: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let labels = raw_labels
            .iter()
            .map(|l| labels_vocab.binary_search(l).expect("collected above"))
            .collect();
        Ok(Self {
            columns,
            label_name,
            labels_vocab,
            rows,
            labels,
        })
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.columns.iter().map(|c| format!("{}:{}", c.name, c.kind)).collect();
        header.push(format!("{}:label", self.label_name));
        w.write_record(&header)?;
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut rec = row.clone();
            rec.push(self.labels_vocab[label].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.labels_vocab.len()
    }
}

/// Encoding of one source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnEncoding {
    /// Cut points between five equal-frequency bins.
    Continuous { cuts: Vec<f64> },
    /// One indicator per category, in this order.
    Categorical { categories: Vec<String> },
    Binary,
}

impl ColumnEncoding {
    pub fn width(&self) -> usize {
        match self {
            Self::Continuous { cuts } => cuts.len() + 1,
            Self::Categorical { categories } => categories.len(),
            Self::Binary => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationSpec {
    pub columns: Vec<(String, ColumnEncoding)>,
    pub labels: Vec<String>,
}

pub const NUM_BINS: usize = 5;

/// Linear interpolation between order statistics (R's type 7).
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn parse_number(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("{s:?} is not a number")))
}

fn parse_binary(s: &str, line: usize) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(line, format!("binary column holds {other:?}"))),
    }
}

pub fn fit_binarization(dataset: &LabeledDataset) -> Result<BinarizationSpec> {
    if dataset.len() < NUM_BINS {
        return Err(Error::contract(format!("need at least {NUM_BINS} rows, got {}", dataset.len())));
    }
    let mut columns = Vec::with_capacity(dataset.columns.len());
    for (j, col) in dataset.columns.iter().enumerate() {
        let values = dataset.rows.iter().map(|r| r[j].as_str());
        let enc = match col.kind {
            ColumnKind::Continuous => {
                let mut v = values
                    .enumerate()
                    .map(|(n, s)| parse_number(s, n + 2))
                    .collect::<Result<Vec<_>>>()?;
                v.sort_by(f64::total_cmp);
                let cuts = (1..NUM_BINS).map(|b| quantile_type7(&v, b as f64 / NUM_BINS as f64)).collect();
                ColumnEncoding::Continuous { cuts }
            }
            ColumnKind::Categorical => ColumnEncoding::Categorical {
                categories: values.map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect(),
            },
            ColumnKind::Binary => {
                for (n, s) in values.enumerate() {
                    parse_binary(s, n + 2)?;
                }
                ColumnEncoding::Binary
            }
        };
        columns.push((col.name.clone(), enc));
    }
    Ok(BinarizationSpec {
        columns,
        labels: dataset.labels_vocab.clone(),
    })
}

impl BinarizationSpec {
    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.1.width()).sum()
    }

    /// Encodes one raw row. Returns the context and the number of unseen
    /// categories (each leaves its block all zero).
    pub fn encode(&self, row: &[String]) -> Result<(ContextVector, usize)> {
        if row.len() != self.columns.len() {
            return Err(Error::contract(format!("row has {} fields, spec has {}", row.len(), self.columns.len())));
        }
        let mut bits = Vec::with_capacity(self.width());
        let mut unseen = 0;
        for (value, (_, enc)) in row.iter().zip(&self.columns) {
            match enc {
                ColumnEncoding::Continuous { cuts } => {
                    let v = parse_number(value, 0)?;
                    let bin = cuts.iter().filter(|&&c| v > c).count();
                    bits.extend((0..cuts.len() + 1).map(|b| b == bin));
                }
                ColumnEncoding::Categorical { categories } => {
                    let hit = categories.iter().position(|c| c == value);
                    unseen += hit.is_none() as usize;
                    bits.extend((0..categories.len()).map(|b| Some(b) == hit));
                }
                ColumnEncoding::Binary => bits.push(parse_binary(value, 0)?),
            }
        }
        Ok((ContextVector::new(bits), unseen))
    }

    /// Tab-separated lines: `name`, `kind`, then cut points or categories.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (name, enc) in &self.columns {
            match enc {
                ColumnEncoding::Continuous { cuts } => {
                    let cuts: Vec<_> = cuts.iter().map(|c| c.to_string()).collect();
                    writeln!(w, "{name}\tcontinuous\t{}", cuts.join("\t"))?;
                }
                ColumnEncoding::Categorical { categories } => {
                    writeln!(w, "{name}\tcategorical\t{}", categories.join("\t"))?;
                }
                ColumnEncoding::Binary => writeln!(w, "{name}\tbinary")?,
            }
        }
        writeln!(w, "\tlabel\t{}", self.labels.join("\t"))?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut columns = Vec::new();
        let mut labels = None;
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let name = fields.next().unwrap_or_default().to_string();
            let kind = fields.next().ok_or_else(|| Error::parse(n + 1, "missing kind"))?;
            let rest: Vec<String> = fields.map(str::to_string).collect();
            let enc = match kind {
                "label" => {
                    labels = Some(rest);
                    continue;
                }
                "continuous" => {
                    let cuts = rest.iter().map(|c| parse_number(c, n + 1)).collect::<Result<Vec<_>>>()?;
                    if cuts.windows(2).any(|w| w[0] > w[1]) {
                        return Err(Error::parse(n + 1, "cut points must be nondecreasing"));
                    }
                    ColumnEncoding::Continuous { cuts }
                }
                "categorical" => {
                    let distinct: BTreeSet<_> = rest.iter().collect();
                    if distinct.len() != rest.len() {
                        return Err(Error::parse(n + 1, "duplicate category"));
                    }
                    ColumnEncoding::Categorical { categories: rest }
                }
                "binary" => ColumnEncoding::Binary,
                other => return Err(Error::parse(n + 1, format!("unknown kind {other:?}"))),
            };
            columns.push((name, enc));
        }
        Ok(Self {
            columns,
            labels: labels.ok_or_else(|| Error::parse(0, "spec lacks a label line"))?,
        })
    }

    /// Maps a dataset's label ids onto this spec's label vocabulary.
    fn label_map(&self, dataset: &LabeledDataset) -> Result<Vec<ActionId>> {
        dataset
            .labels_vocab
            .iter()
            .map(|l| {
                self.labels
                    .iter()
                    .position(|s| s == l)
                    .ok_or_else(|| Error::contract(format!("label {l:?} not in the spec")))
            })
            .collect()
    }
}

/// Flips each bit independently with probability `p`.
pub fn apply_noise<R: Rng + ?Sized>(x: &ContextVector, p: f64, rng: &mut R) -> Result<ContextVector> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::contract(format!("flip probability {p} outside [0, 1]")));
    }
    let mut out = x.clone();
    if p > 0.0 {
        for i in 0..x.len() {
            if rng.gen_bool(p) {
                out.flip(i);
            }
        }
    }
    Ok(out)
}

/// Full reward vector of a round, read one entry at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(rewards: Vec<f64>) -> Self {
        Self(rewards)
    }

    pub fn one_hot(num_actions: usize, label: ActionId) -> Self {
        Self((0..num_actions).map(|k| (k == label) as u8 as f64).collect())
    }

    pub fn reveal(&self, action: ActionId) -> Result<f64> {
        self.0
            .get(action)
            .copied()
            .ok_or_else(|| Error::contract(format!("no reward for action {action}")))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One round handed to a learner: the (noised) context, the hidden rewards,
/// and `E[y | x]` when the environment knows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub x: ContextVector,
    pub rewards: RewardVector,
    pub expected: Option<Vec<f64>>,
    /// Source row for dataset streams.
    pub row: Option<usize>,
}

pub trait Environment: Send {
    fn num_vars(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn next_round(&mut self) -> Result<Round>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub noise_flip_prob: f64,
    pub loop_stream: bool,
    pub shuffle_seed: u64,
    pub horizon: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            noise_flip_prob: 0.05,
            loop_stream: true,
            shuffle_seed: 0,
            horizon: 100_000,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_flip_prob) {
            return Err(Error::config(format!("noise {} outside [0, 1]", self.noise_flip_prob)));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Shuffled pass over an encoded dataset, reshuffled every epoch when looping.
#[derive(Debug, Clone)]
pub struct DatasetStream {
    contexts: Vec<ContextVector>,
    labels: Vec<ActionId>,
    num_actions: usize,
    cfg: StreamConfig,
    order: Vec<usize>,
    pos: usize,
    t: u64,
    rng: ChaCha8Rng,
    unseen: usize,
}

impl DatasetStream {
    pub fn new(dataset: &LabeledDataset, spec: &BinarizationSpec, cfg: StreamConfig) -> Result<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(Error::contract("empty dataset"));
        }
        let map = spec.label_map(dataset)?;
        let mut unseen = 0;
        let contexts = dataset
            .rows
            .iter()
            .map(|r| {
                let (x, u) = spec.encode(r)?;
                unseen += u;
                Ok(x)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
        let mut order: Vec<usize> = (0..contexts.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            contexts,
            labels: dataset.labels.iter().map(|&l| map[l]).collect(),
            num_actions: spec.labels.len(),
            cfg,
            order,
            pos: 0,
            t: 0,
            rng,
            unseen,
        })
    }

    /// Unseen categories met while encoding.
    pub fn unseen_categories(&self) -> usize {
        self.unseen
    }

    /// Noise-free encoded rows with one-hot rewards, taken as the distribution.
    pub fn empirical_distribution(&self) -> Result<KnownDistribution> {
        KnownDistribution::empirical(
            self.contexts
                .iter()
                .zip(&self.labels)
                .map(|(x, &l)| (x.clone(), RewardVector::one_hot(self.num_actions, l).0))
                .collect(),
        )
    }

    pub fn rounds_played(&self) -> u64 {
        self.t
    }
}

impl Environment for DatasetStream {
    fn num_vars(&self) -> usize {
        self.contexts[0].len()
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn next_round(&mut self) -> Result<Round> {
        if self.t >= self.cfg.horizon {
            return Err(Error::StreamExhausted(self.t));
        }
        if self.pos == self.order.len() {
            if !self.cfg.loop_stream {
                return Err(Error::StreamExhausted(self.t));
            }
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let row = self.order[self.pos];
        self.pos += 1;
        self.t += 1;
        let x = apply_noise(&self.contexts[row], self.cfg.noise_flip_prob, &mut self.rng)?;
        Ok(Round {
            x,
            rewards: RewardVector::one_hot(self.num_actions, self.labels[row]),
            expected: None,
            row: Some(row),
        })
    }
}
