//! Confusion matrices and Cohen's kappa, with pairwise averaging over
//! many annotators.

use std::collections::BTreeMap;

use serde::Serialize;

use super::MetricsError;
use crate::collection::RelevanceGrade;

/// k x k table counting co-occurrences of label pairs. Rows are annotator
/// A's label, columns annotator B's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    cells: Vec<u64>,
    n: u64,
}

impl ConfusionMatrix {
    /// Build from explicit cell counts, row-major.
    pub fn from_cells(k: usize, cells: Vec<u64>) -> Result<Self, MetricsError> {
        if k == 0 || cells.len() != k * k {
            return Err(MetricsError::NotSquare(cells.len()));
        }
        let n = cells.iter().sum();
        Ok(ConfusionMatrix { k, cells, n })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::NotSquare(rows.iter().map(Vec::len).sum()));
        }
        Self::from_cells(k, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn cell(&self, row: usize, col: usize) -> u64 {
        self.cells[row * self.k + col]
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.cell(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.cell(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.k)
            .map(|j| (0..self.k).map(|i| self.cell(i, j)).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut cells = vec![0u64; self.k * self.k];
        for i in 0..self.k {
            for j in 0..self.k {
                cells[j * self.k + i] = self.cell(i, j);
            }
        }
        ConfusionMatrix {
            k: self.k,
            cells,
            n: self.n,
        }
    }
}

/// Tally aligned grade pairs into a 4x4 confusion matrix.
///
/// Inputs must already be aligned item-by-item (same (query, doc) order).
pub fn confusion_matrix(
    labels_a: &[RelevanceGrade],
    labels_b: &[RelevanceGrade],
) -> Result<ConfusionMatrix, MetricsError> {
    if labels_a.len() != labels_b.len() {
        return Err(MetricsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(MetricsError::EmptyLabels);
    }
    let k = RelevanceGrade::ALL.len();
    let mut cells = vec![0u64; k * k];
    for (a, b) in labels_a.iter().zip(labels_b) {
        cells[a.value() as usize * k + b.value() as usize] += 1;
    }
    ConfusionMatrix::from_cells(k, cells)
}

/// Cohen's kappa together with its observed and expected agreement.
///
/// `kappa` is `None` exactly when the statistic is degenerate: both
/// marginals concentrate on a single category, so expected agreement is 1
/// and chance correction would divide by zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaResult {
    pub p_observed: f64,
    pub p_expected: f64,
    pub kappa: Option<f64>,
}

impl KappaResult {
    pub fn is_degenerate(&self) -> bool {
        self.kappa.is_none()
    }
}

/// Chance-corrected agreement (p_o - p_e) / (1 - p_e) over a confusion
/// matrix.
///
/// The value is computed from exact integer marginals in a single
/// division, kappa = (n * trace - S) / (n^2 - S) with S = sum of
/// row_i * col_i, which keeps it within one rounding of the true ratio.
pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<KappaResult, MetricsError> {
    if m.n() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = m.n();
    let rows = m.row_sums();
    let cols = m.col_sums();
    let s: u128 = rows
        .iter()
        .zip(&cols)
        .map(|(&r, &c)| u128::from(r) * u128::from(c))
        .sum();
    let n2 = u128::from(n) * u128::from(n);
    let trace = m.trace();

    let p_observed = trace as f64 / n as f64;
    let p_expected = s as f64 / n2 as f64;

    // Degenerate iff both marginals sit entirely on one category, which
    // is the exact integer condition for p_expected == 1.
    let degenerate = (0..m.k()).any(|i| rows[i] == n && cols[i] == n);
    let kappa = if degenerate {
        None
    } else {
        let num = i128::from(n) * i128::from(trace) - s as i128;
        let den = n2 as i128 - s as i128;
        Some(num as f64 / den as f64)
    };

    Ok(KappaResult {
        p_observed,
        p_expected,
        kappa,
    })
}

/// Mean Cohen's kappa over all unordered annotator pairs.
///
/// Pairs whose kappa is degenerate are excluded from the mean; if every
/// pair is degenerate there is nothing to average and that is an error.
pub fn pairwise_average_kappa(
    label_sets: &BTreeMap<String, Vec<RelevanceGrade>>,
) -> Result<f64, MetricsError> {
    if label_sets.len() < 2 {
        return Err(MetricsError::TooFewAnnotators(label_sets.len()));
    }
    let annotators: Vec<&String> = label_sets.keys().collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..annotators.len() {
        for j in (i + 1)..annotators.len() {
            let a = &label_sets[annotators[i]];
            let b = &label_sets[annotators[j]];
            let m = confusion_matrix(a, b)?;
            if let Some(k) = cohen_kappa(&m)?.kappa {
                sum += k;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricsError::AllPairsDegenerate);
    }
    Ok(sum / count as f64)
}
