//! Statistical evaluation kernels: confusion matrices, MCC, per-class F1,
//! paired significance tests (exact and asymptotic McNemar, Cochran's Q with
//! Holm-adjusted post-hoc pairs), a chi-squared goodness-of-fit test, and
//! Fleiss' kappa for annotator agreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("inputs must have equal, non-zero length (got {0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("inputs must be non-empty")]
    Empty,
    #[error("Cochran's Q needs at least 2 treatments (got {0})")]
    TooFewTreatments(usize),
    #[error("treatment `{0}` has {1} outcomes, expected {2}")]
    RaggedTreatments(String, usize, usize),
    #[error("observed and expected must have equal length and at least 2 cells")]
    BadGofShape,
    #[error("expected count at cell {0} must be positive")]
    BadExpected(usize),
    #[error("observed count at cell {0} must be non-negative")]
    NegativeObserved(usize),
    #[error("observed total is zero")]
    ZeroObservations,
    #[error("rating matrix must be non-empty with a constant rater count >= 2 per item")]
    BadRatings,
}

/// Outcome of a significance test, alongside everything needed to report it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub dof: Option<u64>,
    pub alpha: f64,
    pub significant: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl TestResult {
    fn new(test_name: &str, statistic: f64, p_value: f64, dof: Option<u64>, alpha: f64) -> Self {
        Self {
            test_name: test_name.to_string(),
            statistic,
            p_value,
            dof,
            alpha,
            significant: p_value < alpha,
            notes: Vec::new(),
        }
    }
}

/// Square confusion matrix over a fixed label vocabulary.
/// Rows index the true label, columns the predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Tallies paired label sequences. The vocabulary is the sorted set of
    /// labels seen on either side.
    pub fn from_pairs(truth: &[String], predicted: &[String]) -> Result<Self, StatsError> {
        if truth.len() != predicted.len() {
            return Err(StatsError::LengthMismatch(truth.len(), predicted.len()));
        }
        if truth.is_empty() {
            return Err(StatsError::Empty);
        }
        let mut vocab: Vec<String> = truth
            .iter()
            .chain(predicted.iter())
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        vocab.dedup();
        let index: BTreeMap<&str, usize> = vocab
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let k = vocab.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (t, p) in truth.iter().zip(predicted) {
            counts[index[t.as_str()]][index[p.as_str()]] += 1;
        }
        Ok(Self {
            labels: vocab,
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        correct as f64 / self.total() as f64
    }
}

/// Per-class precision, recall, F1, and support for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class scores in vocabulary order. A class with no predicted or no
/// true instances scores 0 for the undefined ratio.
pub fn per_class_f1(matrix: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..matrix.labels.len())
        .map(|i| {
            let tp = matrix.counts[i][i] as f64;
            let pred = matrix.col_sum(i) as f64;
            let truth = matrix.row_sum(i) as f64;
            let precision = if pred > 0.0 { tp / pred } else { 0.0 };
            let recall = if truth > 0.0 { tp / truth } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                label: matrix.labels[i].clone(),
                precision,
                recall,
                f1,
                support: matrix.row_sum(i),
            }
        })
        .collect()
}

/// F1 of a single binary contingency given raw counts.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = (2 * tp + fp + fn_) as f64;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp as f64 / denom
    }
}

/// Multiclass Matthews correlation coefficient in covariance form:
/// (c*s - sum t_k p_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2)),
/// where c is the trace, s the total, t_k row sums, p_k column sums.
/// Returns 0 when either variance term vanishes.
pub fn mcc(matrix: &ConfusionMatrix) -> f64 {
    let k = matrix.labels.len();
    let s: f64 = matrix.total() as f64;
    let c: f64 = (0..k).map(|i| matrix.counts[i][i] as f64).sum();
    let t: Vec<f64> = (0..k).map(|i| matrix.row_sum(i) as f64).collect();
    let p: Vec<f64> = (0..k).map(|j| matrix.col_sum(j) as f64).collect();
    let cov_tp: f64 = c * s - t.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
    let var_p = s * s - p.iter().map(|x| x * x).sum::<f64>();
    let var_t = s * s - t.iter().map(|x| x * x).sum::<f64>();
    if var_p <= 0.0 || var_t <= 0.0 {
        return 0.0;
    }
    cov_tp / (var_p * var_t).sqrt()
}

/// Reduces paired label sequences to correctness indicators: element i is
/// true when `predicted[i]` equals `truth[i]`.
pub fn binarize(truth: &[String], predicted: &[String]) -> Result<Vec<bool>, StatsError> {
    if truth.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(truth.iter().zip(predicted).map(|(t, p)| t == p).collect())
}

/// Cell-set binarization: an item is valid only when the predicted stage
/// set equals the ground-truth set exactly. The per-item Jaccard overlap is
/// returned alongside as the graded supplement (1 for two empty sets).
pub fn binarize_sets(
    truth: &[std::collections::BTreeSet<String>],
    predicted: &[std::collections::BTreeSet<String>],
) -> Result<(Vec<bool>, Vec<f64>), StatsError> {
    if truth.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut valid = Vec::with_capacity(truth.len());
    let mut jaccard = Vec::with_capacity(truth.len());
    for (t, p) in truth.iter().zip(predicted) {
        valid.push(t == p);
        let union = t.union(p).count();
        if union == 0 {
            jaccard.push(1.0);
        } else {
            jaccard.push(t.intersection(p).count() as f64 / union as f64);
        }
    }
    Ok((valid, jaccard))
}

fn chi2_sf(statistic: f64, dof: u64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    dist.sf(statistic)
}

/// n choose k as u128; safe for n <= 127 comfortably beyond the exact-test
/// threshold of 25 discordant pairs.
fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// McNemar's test on two paired correctness vectors.
///
/// With b = wins for the first classifier only and c = wins for the second
/// only: when b + c < 25 the exact binomial form is used,
/// p = min(1, 2 * sum_{k<=min(b,c)} C(n,k) / 2^n) with n = b + c (the
/// statistic reported is min(b, c)); otherwise the asymptotic form,
/// chi2 = (b - c)^2 / (b + c) on 1 degree of freedom, with no continuity
/// correction. b + c = 0 reports p = 1.
pub fn mcnemar(first: &[bool], second: &[bool], alpha: f64) -> Result<TestResult, StatsError> {
    if first.len() != second.len() {
        return Err(StatsError::LengthMismatch(first.len(), second.len()));
    }
    if first.is_empty() {
        return Err(StatsError::Empty);
    }
    let b = first
        .iter()
        .zip(second)
        .filter(|(f, s)| **f && !**s)
        .count() as u64;
    let c = first
        .iter()
        .zip(second)
        .filter(|(f, s)| !**f && **s)
        .count() as u64;
    let n = b + c;
    if n == 0 {
        let mut result = TestResult::new("mcnemar_exact", 0.0, 1.0, None, alpha);
        result.notes.push("no discordant pairs".to_string());
        return Ok(result);
    }
    if n < 25 {
        let m = b.min(c);
        let tail: u128 = (0..=m).map(|k| binomial(n, k)).sum();
        let p = (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0);
        Ok(TestResult::new("mcnemar_exact", m as f64, p, None, alpha))
    } else {
        let statistic = (b as f64 - c as f64).powi(2) / n as f64;
        let p = chi2_sf(statistic, 1);
        Ok(TestResult::new(
            "mcnemar_chi2",
            statistic,
            p,
            Some(1),
            alpha,
        ))
    }
}

/// Cochran's Q across k >= 2 paired correctness vectors:
/// Q = (k - 1) [k * sum C_j^2 - N^2] / [k * N - sum R_i^2] on k - 1 degrees
/// of freedom, with C_j the per-treatment success counts, R_i the per-item
/// success counts, N the grand total. A zero denominator (all items
/// unanimous) reports Q = 0, p = 1.
pub fn cochran_q(treatments: &[(String, Vec<bool>)], alpha: f64) -> Result<TestResult, StatsError> {
    let k = treatments.len();
    if k < 2 {
        return Err(StatsError::TooFewTreatments(k));
    }
    let n_items = treatments[0].1.len();
    if n_items == 0 {
        return Err(StatsError::Empty);
    }
    for (name, outcomes) in treatments {
        if outcomes.len() != n_items {
            return Err(StatsError::RaggedTreatments(
                name.clone(),
                outcomes.len(),
                n_items,
            ));
        }
    }
    let col: Vec<f64> = treatments
        .iter()
        .map(|(_, o)| o.iter().filter(|x| **x).count() as f64)
        .collect();
    let row: Vec<f64> = (0..n_items)
        .map(|i| treatments.iter().filter(|(_, o)| o[i]).count() as f64)
        .collect();
    let total: f64 = col.iter().sum();
    let kf = k as f64;
    let numerator = (kf - 1.0) * (kf * col.iter().map(|c| c * c).sum::<f64>() - total * total);
    let denominator = kf * total - row.iter().map(|r| r * r).sum::<f64>();
    let dof = (k - 1) as u64;
    if denominator <= 0.0 {
        let mut result = TestResult::new("cochran_q", 0.0, 1.0, Some(dof), alpha);
        result.notes.push("all items unanimous".to_string());
        return Ok(result);
    }
    let q = numerator / denominator;
    Ok(TestResult::new(
        "cochran_q",
        q,
        chi2_sf(q, dof),
        Some(dof),
        alpha,
    ))
}

/// One Holm-adjusted pairwise McNemar comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub first: String,
    pub second: String,
    pub result: TestResult,
    pub p_adjusted: f64,
    pub significant_adjusted: bool,
}

/// All-pairs McNemar tests with Holm step-down adjustment: order raw
/// p-values ascending, adj_(i) = min(1, max(adj_(i-1), (m - i + 1) * p_(i)))
/// for i = 1..m. Results come back in input pair order.
pub fn posthoc_mcnemar(
    treatments: &[(String, Vec<bool>)],
    alpha: f64,
) -> Result<Vec<PairwiseComparison>, StatsError> {
    let k = treatments.len();
    if k < 2 {
        return Err(StatsError::TooFewTreatments(k));
    }
    let mut raw = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let result = mcnemar(&treatments[i].1, &treatments[j].1, alpha)?;
            raw.push((i, j, result));
        }
    }
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| raw[x].2.p_value.total_cmp(&raw[y].2.p_value));
    let mut adjusted = vec![0.0f64; m];
    let mut running: f64 = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = (m - rank) as f64 * raw[idx].2.p_value;
        running = running.max(scaled).min(1.0);
        adjusted[idx] = running;
    }
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(idx, (i, j, result))| PairwiseComparison {
            first: treatments[i].0.clone(),
            second: treatments[j].0.clone(),
            p_adjusted: adjusted[idx],
            significant_adjusted: adjusted[idx] < alpha,
            result,
        })
        .collect())
}

/// Pearson's chi-squared goodness-of-fit against expected counts.
///
/// Expected counts are rescaled so their sum matches the observed total,
/// then chi2 = sum (O - E)^2 / E on (cells - 1) degrees of freedom. Cells
/// with rescaled expectation below 5 add a reliability warning note.
pub fn chi_squared_gof(
    observed: &[u64],
    expected: &[f64],
    alpha: f64,
) -> Result<TestResult, StatsError> {
    let observed: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    chi_squared_gof_weighted(&observed, expected, alpha)
}

/// Goodness-of-fit over real-valued observed tallies. Counts projected
/// across taxonomies may be apportioned fractionally, so observed cells are
/// any non-negative reals with a positive total.
pub fn chi_squared_gof_weighted(
    observed: &[f64],
    expected: &[f64],
    alpha: f64,
) -> Result<TestResult, StatsError> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(StatsError::BadGofShape);
    }
    if let Some(i) = expected.iter().position(|e| *e <= 0.0) {
        return Err(StatsError::BadExpected(i));
    }
    if let Some(i) = observed.iter().position(|o| *o < 0.0) {
        return Err(StatsError::NegativeObserved(i));
    }
    let observed_total: f64 = observed.iter().sum();
    if observed_total <= 0.0 {
        return Err(StatsError::ZeroObservations);
    }
    let expected_total: f64 = expected.iter().sum();
    let scale = observed_total / expected_total;
    let mut statistic = 0.0;
    let mut low_cells = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        let e = e * scale;
        if e < 5.0 {
            low_cells += 1;
        }
        statistic += (o - e).powi(2) / e;
    }
    let dof = (observed.len() - 1) as u64;
    let mut result = TestResult::new(
        "chi2_gof",
        statistic,
        chi2_sf(statistic, dof),
        Some(dof),
        alpha,
    );
    if low_cells > 0 {
        result.notes.push(format!(
            "{low_cells} cell(s) have expected count < 5; p-value may be unreliable"
        ));
    }
    Ok(result)
}

/// Fleiss' kappa for agreement among a fixed number of raters.
///
/// `ratings[i][j]` counts raters assigning item i to category j; every row
/// must sum to the same rater count n >= 2. kappa = (Pbar - Pe) / (1 - Pe);
/// perfect chance agreement (Pe = 1) reports kappa = 1 when observed
/// agreement is also perfect.
pub fn fleiss_kappa(ratings: &[Vec<u64>]) -> Result<f64, StatsError> {
    if ratings.is_empty() || ratings[0].is_empty() {
        return Err(StatsError::BadRatings);
    }
    let categories = ratings[0].len();
    let n: u64 = ratings[0].iter().sum();
    if n < 2 {
        return Err(StatsError::BadRatings);
    }
    for row in ratings {
        if row.len() != categories || row.iter().sum::<u64>() != n {
            return Err(StatsError::BadRatings);
        }
    }
    let items = ratings.len() as f64;
    let nf = n as f64;
    // Per-item agreement P_i = [sum_j n_ij^2 - n] / [n (n - 1)].
    let p_bar: f64 = ratings
        .iter()
        .map(|row| {
            let sq: u64 = row.iter().map(|c| c * c).sum();
            (sq as f64 - nf) / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / items;
    // Category shares p_j over all assignments.
    let p_e: f64 = (0..categories)
        .map(|j| {
            let share = ratings.iter().map(|row| row[j]).sum::<u64>() as f64 / (items * nf);
            share * share
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if (p_bar - 1.0).abs() < 1e-15 {
            1.0
        } else {
            0.0
        });
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
