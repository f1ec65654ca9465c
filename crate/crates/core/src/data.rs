//! Logged datasets, conditional predicates and the candidate/safety split.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ElfError, Result};

/// One logged record: features, true label, sensitive attribute, the
/// behavior model's prediction and the delayed impact observed after it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: usize,
    pub t: usize,
    pub y_hat_beta: usize,
    pub i_beta: f64,
}

/// An ordered collection of examples sharing feature dimension, label count
/// and group count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    dim: usize,
    n_labels: usize,
    n_groups: usize,
}

impl Dataset {
    pub fn new(
        examples: Vec<LabeledExample>,
        dim: usize,
        n_labels: usize,
        n_groups: usize,
    ) -> Result<Self> {
        if n_labels < 2 {
            return Err(ElfError::Data(format!("need at least 2 labels, got {n_labels}")));
        }
        if n_groups < 1 {
            return Err(ElfError::Data("need at least 1 group".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.x.len() != dim {
                return Err(ElfError::Data(format!(
                    "example {i} has {} features, expected {dim}",
                    ex.x.len()
                )));
            }
            if ex.x.iter().any(|v| !v.is_finite()) || !ex.i_beta.is_finite() {
                return Err(ElfError::Data(format!("example {i} has a non-finite value")));
            }
            if ex.y >= n_labels || ex.y_hat_beta >= n_labels {
                return Err(ElfError::Data(format!("example {i} has a label out of range")));
            }
            if ex.t >= n_groups {
                return Err(ElfError::Data(format!("example {i} has a group out of range")));
            }
        }
        Ok(Dataset {
            examples,
            dim,
            n_labels,
            n_groups,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    /// A dataset with the same dimensions holding the examples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            dim: self.dim,
            n_labels: self.n_labels,
            n_groups: self.n_groups,
        }
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.extend(["y", "t", "yhat_beta", "i_beta"].map(String::from));
        w.write_record(&header)?;
        for ex in &self.examples {
            let mut row: Vec<String> = ex.x.iter().map(|v| format!("{v:.16e}")).collect();
            row.push(ex.y.to_string());
            row.push(ex.t.to_string());
            row.push(ex.y_hat_beta.to_string());
            row.push(format!("{:.16e}", ex.i_beta));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| ElfError::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the CSV format written by [`Dataset::write_csv`]. Label and group
    /// counts are inferred (at least 2 each) unless given.
    pub fn read_csv<R: Read>(
        reader: R,
        n_labels: Option<usize>,
        n_groups: Option<usize>,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 4 {
            return Err(ElfError::Data("csv header has fewer than 4 columns".into()));
        }
        let dim = header.len() - 4;
        for (j, name) in header.iter().take(dim).enumerate() {
            if name != format!("x{j}") {
                return Err(ElfError::Data(format!("unexpected column {name:?} at {j}")));
            }
        }
        let tail: Vec<&str> = header.iter().skip(dim).collect();
        if tail != ["y", "t", "yhat_beta", "i_beta"] {
            return Err(ElfError::Data(format!("unexpected trailing columns {tail:?}")));
        }

        let parse_f = |s: &str, line: usize| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| ElfError::Data(format!("row {line}: {s:?}: {e}")))
        };
        let parse_u = |s: &str, line: usize| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| ElfError::Data(format!("row {line}: {s:?}: {e}")))
        };

        let mut examples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let x = (0..dim)
                .map(|j| parse_f(&rec[j], line))
                .collect::<Result<Vec<_>>>()?;
            examples.push(LabeledExample {
                x,
                y: parse_u(&rec[dim], line)?,
                t: parse_u(&rec[dim + 1], line)?,
                y_hat_beta: parse_u(&rec[dim + 2], line)?,
                i_beta: parse_f(&rec[dim + 3], line)?,
            });
        }
        let max_label = examples.iter().map(|e| e.y.max(e.y_hat_beta)).max().unwrap_or(0);
        let max_group = examples.iter().map(|e| e.t).max().unwrap_or(0);
        Dataset::new(
            examples,
            dim,
            n_labels.unwrap_or((max_label + 1).max(2)),
            n_groups.unwrap_or((max_group + 1).max(2)),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| ElfError::io(path, e))?;
        self.write_csv(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| ElfError::io(path, e))?;
        Dataset::read_csv(f, None, None)
    }
}

/// Boolean conditional `c(X, Y, T)` selecting the examples a constraint
/// is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    GroupEquals(usize),
    LabelEquals(usize),
    And(Vec<Predicate>),
    True,
}

impl Predicate {
    pub fn matches(&self, _x: &[f64], y: usize, t: usize) -> bool {
        match self {
            Predicate::GroupEquals(g) => t == *g,
            Predicate::LabelEquals(l) => y == *l,
            Predicate::And(ps) => ps.iter().all(|p| p.matches(_x, y, t)),
            Predicate::True => true,
        }
    }

    pub fn evaluate(&self, ex: &LabeledExample) -> bool {
        self.matches(&ex.x, ex.y, ex.t)
    }
}

/// Splits `data` into a candidate set and a safety set, stratified by
/// (group, label).
///
/// Each stratum contributes either the floor or the ceiling of its share;
/// the extra slots go to the strata with the largest remainders so the
/// candidate set totals `round(fraction * n)`. Both halves keep the
/// original example order.
pub fn stratified_partition(
    data: &Dataset,
    candidate_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(candidate_fraction > 0.0 && candidate_fraction < 1.0) {
        return Err(ElfError::Config(format!(
            "candidate fraction must lie in (0, 1), got {candidate_fraction}"
        )));
    }
    if data.is_empty() {
        return Err(ElfError::EmptyDataset);
    }

    let mut strata: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, ex) in data.iter().enumerate() {
        strata.entry((ex.t, ex.y)).or_default().push(i);
    }

    let mut quotas: Vec<(usize, f64)> = strata
        .values()
        .map(|idx| {
            let share = candidate_fraction * idx.len() as f64;
            (share.floor() as usize, share - share.floor())
        })
        .collect();
    let target = (candidate_fraction * data.len() as f64).round() as usize;
    let assigned: usize = quotas.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..quotas.len()).filter(|&s| quotas[s].1 > 0.0).collect();
    // stable sort keeps stratum order among equal remainders
    order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1));
    for &s in order.iter().take(target.saturating_sub(assigned)) {
        quotas[s].0 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidate = Vec::with_capacity(target);
    let mut safety = Vec::with_capacity(data.len() - target);
    for (idx, (take, _)) in strata.values().zip(&quotas) {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        candidate.extend_from_slice(&shuffled[..*take]);
        safety.extend_from_slice(&shuffled[*take..]);
    }
    if candidate.is_empty() {
        return Err(ElfError::EmptyPartition("candidate"));
    }
    if safety.is_empty() {
        return Err(ElfError::EmptyPartition("safety"));
    }
    candidate.sort_unstable();
    safety.sort_unstable();
    Ok((data.subset(&candidate), data.subset(&safety)))
}
