//! Train/validation/test splitting and classification metrics.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = Self {
            train,
            validation,
            test,
        };
        f.validate()?;
        Ok(f)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        for x in self.as_array() {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "split fraction {x} outside (0, 1)"
                )));
            }
        }
        let sum: f64 = self.as_array().iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

/// Sorted, disjoint index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    fn from_buckets(mut buckets: [Vec<usize>; 3]) -> Self {
        buckets.iter_mut().for_each(|b| b.sort_unstable());
        let [train, validation, test] = buckets;
        Self {
            train,
            validation,
            test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn argmax_ties(values: impl Iterator<Item = (usize, f64)>) -> Vec<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for (j, v) in values {
        if v > best {
            best = v;
            out.clear();
            out.push(j);
        } else if v == best {
            out.push(j);
        }
    }
    out
}

/// Greedy multi-label stratification.
///
/// Examples carrying the label with the fewest unassigned positives are placed
/// first, each into the split that still wants the most of that label. Ties go
/// to the split with the most remaining capacity, then to a seeded draw.
/// Examples without any label fill remaining capacity at the end.
pub fn iterative_stratified_split(
    labels: &[Vec<bool>],
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment> {
    fractions.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptySelection(
            "cannot split an empty dataset".into(),
        ));
    }
    let n_labels = labels[0].len();
    if let Some(row) = labels.iter().find(|r| r.len() != n_labels) {
        return Err(Error::DimensionMismatch {
            expected: n_labels,
            actual: row.len(),
        });
    }
    let r = fractions.as_array();
    let n = labels.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut remaining_per_label: Vec<usize> = (0..n_labels)
        .map(|l| labels.iter().filter(|row| row[l]).count())
        .collect();
    let mut desired_total: [f64; 3] = r.map(|f| f * n as f64);
    let mut desired_label: Vec<[f64; 3]> = remaining_per_label
        .iter()
        .map(|&c| r.map(|f| f * c as f64))
        .collect();
    let mut assigned = vec![false; n];
    let mut buckets: [Vec<usize>; 3] = Default::default();

    let mut place = |i: usize,
                     split: usize,
                     assigned: &mut [bool],
                     desired_total: &mut [f64; 3],
                     desired_label: &mut [[f64; 3]],
                     remaining: &mut [usize]| {
        assigned[i] = true;
        buckets[split].push(i);
        desired_total[split] -= 1.0;
        for (l, &has) in labels[i].iter().enumerate() {
            if has {
                desired_label[l][split] -= 1.0;
                remaining[l] -= 1;
            }
        }
    };

    loop {
        let next_label = remaining_per_label
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .min_by_key(|(l, &c)| (c, *l))
            .map(|(l, _)| l);
        let Some(label) = next_label else { break };
        for &i in &order {
            if assigned[i] || !labels[i][label] {
                continue;
            }
            let by_label = argmax_ties((0..3).map(|j| (j, desired_label[label][j])));
            let mut candidates = argmax_ties(by_label.iter().map(|&j| (j, desired_total[j])));
            let split = if candidates.len() == 1 {
                candidates.pop().unwrap()
            } else {
                candidates[rng.random_range(0..candidates.len())]
            };
            place(
                i,
                split,
                &mut assigned,
                &mut desired_total,
                &mut desired_label,
                &mut remaining_per_label,
            );
        }
    }
    for &i in &order {
        if assigned[i] {
            continue;
        }
        let candidates = argmax_ties((0..3).map(|j| (j, desired_total[j])));
        let split = if candidates.len() == 1 {
            candidates[0]
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        place(
            i,
            split,
            &mut assigned,
            &mut desired_total,
            &mut desired_label,
            &mut remaining_per_label,
        );
    }
    Ok(SplitAssignment::from_buckets(buckets))
}

/// Largest-remainder allocation of `count` items over the fractions.
fn largest_remainder(count: usize, r: [f64; 3]) -> [usize; 3] {
    let quotas = r.map(|f| f * count as f64);
    let mut sizes = quotas.map(|q| (q + 1e-9).floor() as usize);
    let mut left = count - sizes.iter().sum::<usize>().min(count);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - sizes[a] as f64;
        let fb = quotas[b] - sizes[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[j] += 1;
        left -= 1;
    }
    sizes
}

/// Per-class proportional split with a seeded shuffle inside each class.
/// Returns the assignment and any warnings about tiny classes.
pub fn stratified_binary_split(
    labels: &[bool],
    fractions: SplitFractions,
    seed: u64,
) -> Result<(SplitAssignment, Vec<String>)> {
    fractions.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptySelection(
            "cannot split an empty dataset".into(),
        ));
    }
    let r = fractions.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: [Vec<usize>; 3] = Default::default();
    let mut warnings = Vec::new();
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            warnings.push(format!(
                "class {} has {} examples, fewer than the 3 splits",
                u8::from(class),
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        let sizes = largest_remainder(members.len(), r);
        let mut rest = members.as_slice();
        for (bucket, size) in buckets.iter_mut().zip(sizes) {
            let (head, tail) = rest.split_at(size);
            bucket.extend_from_slice(head);
            rest = tail;
        }
    }
    Ok((SplitAssignment::from_buckets(buckets), warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelMetrics {
    pub subset_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub hamming_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metric bundle exported as one flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub multilabel: Option<MultiLabelMetrics>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub binary: Option<BinaryMetrics>,
}

impl MetricReport {
    /// Header and row in the column order of the published tables.
    pub fn csv_columns(&self) -> (Vec<&'static str>, Vec<f64>) {
        let mut header = Vec::new();
        let mut row = Vec::new();
        if let Some(m) = &self.multilabel {
            header.extend([
                "subset_accuracy",
                "micro_precision",
                "micro_recall",
                "micro_f1",
                "hamming_loss",
            ]);
            row.extend([
                m.subset_accuracy,
                m.micro_precision,
                m.micro_recall,
                m.micro_f1,
                m.hamming_loss,
            ]);
        }
        if let Some(b) = &self.binary {
            header.extend(["accuracy", "precision", "recall", "f1"]);
            row.extend([b.accuracy, b.precision, b.recall, b.f1]);
        }
        (header, row)
    }

    pub fn write_csv<W: Write>(&self, model: &str, writer: W) -> Result<()> {
        let (header, row) = self.csv_columns();
        let mut w = csv::Writer::from_writer(writer);
        let mut h = vec!["model"];
        h.extend(header);
        w.write_record(&h)?;
        let mut r = vec![model.to_owned()];
        r.extend(row.iter().map(|v| format!("{v:.4}")));
        w.write_record(&r)?;
        w.flush()?;
        Ok(())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_multilabel_metrics(
    y_true: &[Vec<bool>],
    y_pred: &[Vec<bool>],
) -> Result<MultiLabelMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptySelection("no rows to score".into()));
    }
    let (mut tp, mut fp, mut fn_, mut wrong, mut exact, mut cells) = (0, 0, 0, 0, 0, 0);
    for (t, p) in y_true.iter().zip(y_pred) {
        if t.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                actual: p.len(),
            });
        }
        let mut row_ok = true;
        for (&a, &b) in t.iter().zip(p) {
            match (a, b) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
            if a != b {
                wrong += 1;
                row_ok = false;
            }
        }
        cells += t.len();
        exact += usize::from(row_ok);
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(MultiLabelMetrics {
        subset_accuracy: ratio(exact, y_true.len()),
        micro_precision: precision,
        micro_recall: recall,
        micro_f1: harmonic(precision, recall),
        hamming_loss: ratio(wrong, cells),
    })
}

pub fn compute_binary_metrics(y_true: &[bool], y_pred: &[bool]) -> Result<BinaryMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptySelection("no rows to score".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(BinaryMetrics {
        accuracy: ratio(tp + tn, y_true.len()),
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}
