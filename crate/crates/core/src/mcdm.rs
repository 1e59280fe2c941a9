//! Entropy-weighted TOPSIS.
//!
//! Criterion weights come from the Shannon entropy of each column: a
//! criterion on which the candidates barely differ carries little
//! information and gets a small weight. TOPSIS then ranks the candidates by
//! relative closeness to the ideal point built from the weighted, vector
//! normalised matrix.

use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    /// Larger is better.
    Benefit,
    /// Smaller is better.
    Cost,
}

/// `m` alternatives × `n` criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMatrix {
    values: Vec<Vec<f64>>,
    criterion_kinds: Vec<CriterionKind>,
    row_labels: Vec<String>,
    column_labels: Vec<String>,
}

impl DecisionMatrix {
    pub fn new(
        values: Vec<Vec<f64>>,
        criterion_kinds: Vec<CriterionKind>,
        row_labels: Vec<String>,
        column_labels: Vec<String>,
    ) -> Result<Self> {
        let m = values.len();
        let n = criterion_kinds.len();
        if m == 0 || n == 0 {
            return Err(Error::Matrix(format!("needs at least one row and column, got {m}x{n}")));
        }
        if let Some((i, row)) = values.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Matrix(format!("row {i} has {} values, expected {n}", row.len())));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Matrix("non-finite value".into()));
        }
        if row_labels.len() != m || column_labels.len() != n {
            return Err(Error::Matrix("label count does not match the matrix shape".into()));
        }
        Ok(DecisionMatrix {
            values,
            criterion_kinds,
            row_labels,
            column_labels,
        })
    }

    /// Unlabelled matrix where every criterion is a benefit criterion.
    pub fn benefit(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.first().map_or(0, Vec::len);
        let m = values.len();
        DecisionMatrix::new(
            values,
            vec![CriterionKind::Benefit; n],
            (0..m).map(|i| format!("A{}", i + 1)).collect(),
            (0..n).map(|j| format!("X{}", j + 1)).collect(),
        )
    }

    pub fn with_kinds(mut self, kinds: Vec<CriterionKind>) -> Result<Self> {
        if kinds.len() != self.cols() {
            return Err(Error::Matrix("criterion kind count does not match columns".into()));
        }
        self.criterion_kinds = kinds;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.criterion_kinds.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn criterion_kinds(&self) -> &[CriterionKind] {
        &self.criterion_kinds
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |row| row[j])
    }

    fn is_nonnegative(&self) -> bool {
        self.values.iter().flatten().all(|v| *v >= 0.0)
    }
}

/// Adds `-min` to every column whose minimum is negative. Returns the shifted
/// matrix and the per-column offsets (0 for untouched columns).
pub fn shift_nonnegative(matrix: &DecisionMatrix) -> (DecisionMatrix, Vec<f64>) {
    let offsets: Vec<f64> = (0..matrix.cols())
        .map(|j| {
            let min = matrix.column(j).fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                -min
            } else {
                0.0
            }
        })
        .collect();
    let mut shifted = matrix.clone();
    for row in &mut shifted.values {
        for (v, off) in row.iter_mut().zip(&offsets) {
            *v += off;
        }
    }
    (shifted, offsets)
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("weight vector is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}, expected 1")));
        }
        Ok(WeightVector(weights))
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Entropy weights together with the intermediate quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyWeights {
    pub weights: WeightVector,
    pub entropy: Vec<f64>,
    pub diversification: Vec<f64>,
    /// True when every column was uniform and equal weights were returned.
    pub uniform_fallback: bool,
}

/// Shannon-entropy criterion weights of a non-negative matrix with `m >= 2`.
///
/// `P_ij = r_ij / sum_i r_ij`, `E_j = -sum_i P_ij ln P_ij / ln m` with
/// `0 ln 0 = 0`, `d_j = 1 - E_j`, `W_j = d_j / sum d`. A column that sums to
/// zero or holds one repeated value has `d_j = 0` exactly.
pub fn entropy_weights(matrix: &DecisionMatrix) -> Result<EntropyWeights> {
    let m = matrix.rows();
    if m < 2 {
        return Err(Error::Matrix(format!("entropy weighting needs at least 2 rows, got {m}")));
    }
    if !matrix.is_nonnegative() {
        return Err(Error::Matrix("entropy weighting needs a non-negative matrix".into()));
    }
    let ln_m = libm::log(m as f64);

    let mut entropy = Vec::with_capacity(matrix.cols());
    let mut diversification = Vec::with_capacity(matrix.cols());
    for j in 0..matrix.cols() {
        let sum: f64 = matrix.column(j).sum();
        let first = matrix.values[0][j];
        let uniform = sum == 0.0 || matrix.column(j).all(|v| v == first);
        let e = if uniform {
            1.0
        } else {
            -matrix
                .column(j)
                .map(|r| r / sum)
                .filter(|p| *p > 0.0)
                .map(|p| p * libm::log(p))
                .sum::<f64>()
                / ln_m
        };
        entropy.push(e);
        diversification.push((1.0 - e).max(0.0));
    }

    let total: f64 = diversification.iter().sum();
    let (weights, uniform_fallback) = if total > 0.0 {
        let w = diversification.iter().map(|d| d / total).collect();
        (WeightVector(w), false)
    } else {
        log::debug!("all criteria uniform; falling back to equal weights");
        (WeightVector::uniform(matrix.cols()), true)
    };
    Ok(EntropyWeights {
        weights,
        entropy,
        diversification,
        uniform_fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// Distance to the ideal point.
    pub ideal: f64,
    /// Distance to the anti-ideal point.
    pub anti_ideal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopsisResult {
    pub closeness: Vec<f64>,
    /// Row indices by descending closeness; equal closeness keeps row order.
    pub ranking: Vec<usize>,
    pub ideal: Vec<f64>,
    pub anti_ideal: Vec<f64>,
    pub separations: Vec<Separation>,
    /// Rows whose two separations were both zero and were assigned closeness 1.
    pub degenerate_rows: Vec<usize>,
}

/// Ranks the rows of a non-negative matrix.
pub fn topsis_rank(matrix: &DecisionMatrix, weights: &WeightVector) -> Result<TopsisResult> {
    let (m, n) = (matrix.rows(), matrix.cols());
    if weights.len() != n {
        return Err(Error::Matrix(format!("{} weights for {n} criteria", weights.len())));
    }
    if !matrix.is_nonnegative() {
        return Err(Error::Matrix("TOPSIS needs a non-negative matrix".into()));
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| matrix.column(j).map(|r| r * r).sum::<f64>().sqrt())
        .collect();
    let weighted: Vec<Vec<f64>> = matrix
        .values
        .iter()
        .map(|row| {
            row.iter()
                .zip(&norms)
                .zip(weights.as_slice())
                .map(|((r, norm), w)| if *norm > 0.0 { w * (r / norm) } else { 0.0 })
                .collect()
        })
        .collect();

    let mut ideal = Vec::with_capacity(n);
    let mut anti_ideal = Vec::with_capacity(n);
    for (j, kind) in matrix.criterion_kinds.iter().enumerate() {
        let max = weighted.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        let min = weighted.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let (best, worst) = match kind {
            CriterionKind::Benefit => (max, min),
            CriterionKind::Cost => (min, max),
        };
        ideal.push(best);
        anti_ideal.push(worst);
    }

    let distance = |row: &[f64], point: &[f64]| {
        row.iter()
            .zip(point)
            .map(|(v, p)| (v - p) * (v - p))
            .sum::<f64>()
            .sqrt()
    };
    let mut closeness = Vec::with_capacity(m);
    let mut separations = Vec::with_capacity(m);
    let mut degenerate_rows = Vec::new();
    for (i, row) in weighted.iter().enumerate() {
        let d_plus = distance(row, &ideal);
        let d_minus = distance(row, &anti_ideal);
        let total = d_plus + d_minus;
        let cl = if total > 0.0 {
            d_minus / total
        } else {
            degenerate_rows.push(i);
            1.0
        };
        closeness.push(cl);
        separations.push(Separation {
            ideal: d_plus,
            anti_ideal: d_minus,
        });
    }

    let mut ranking: Vec<usize> = (0..m).collect();
    ranking.sort_by(|a, b| closeness[*b].total_cmp(&closeness[*a]).then(a.cmp(b)));

    Ok(TopsisResult {
        closeness,
        ranking,
        ideal,
        anti_ideal,
        separations,
        degenerate_rows,
    })
}

/// The winning row, plus a note when a closeness tie had to be broken.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub tie_break: Option<String>,
}

/// Picks the candidate with the highest closeness. Rows tied on closeness go
/// to the visually closer source, then the higher cosine, then the
/// lexicographically smaller caption.
pub fn select_best(result: &TopsisResult, candidates: &[Candidate<'_>]) -> Result<Selection> {
    if result.closeness.len() != candidates.len() || candidates.is_empty() {
        return Err(Error::Matrix(format!(
            "{} closeness values for {} candidates",
            result.closeness.len(),
            candidates.len()
        )));
    }
    let top = result.closeness[result.ranking[0]];
    let tied: Vec<usize> = result
        .ranking
        .iter()
        .copied()
        .take_while(|i| result.closeness[*i] == top)
        .collect();
    let best = tied
        .iter()
        .copied()
        .min_by(|a, b| {
            let (x, y) = (&candidates[*a], &candidates[*b]);
            y.visual_similarity
                .total_cmp(&x.visual_similarity)
                .then(y.cosine.total_cmp(&x.cosine))
                .then_with(|| x.caption.text.cmp(&y.caption.text))
                .then(a.cmp(b))
        })
        .expect("ranking is non-empty");
    let tie_break = (tied.len() > 1).then(|| {
        format!(
            "closeness tie at {top} among rows {tied:?}; chose row {best} by visual similarity, cosine, caption text"
        )
    });
    Ok(Selection {
        index: best,
        tie_break,
    })
}
