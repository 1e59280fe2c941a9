//! Corpus BLEU-1..4 and ROUGE-L.
//!
//! BLEU follows the canonical corpus definition: clipped n-gram counts and
//! candidate/reference lengths are summed over the whole corpus before the
//! precisions and the single brevity penalty are formed. No smoothing is
//! applied at corpus level.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// ROUGE-L recall weight, as used by the MS COCO caption evaluation code.
pub const ROUGE_BETA: f64 = 1.2;

/// Sufficient statistics for BLEU of one or more segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, other: Self) {
        for k in 0..MAX_ORDER {
            self.matches[k] += other.matches[k];
            self.totals[k] += other.totals[k];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches for one candidate against its references. The
/// effective reference length is the one closest to the candidate length,
/// preferring the shorter on ties.
pub fn segment_stats<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>]) -> BleuStats {
    let mut stats = BleuStats {
        candidate_len: candidate.len(),
        reference_len: closest_length(candidate.len(), references),
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (gram, c) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        stats.totals[n - 1] = candidate.len().saturating_sub(n - 1);
        stats.matches[n - 1] = cand
            .iter()
            .map(|(gram, c)| (*c).min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

fn closest_length<S>(candidate_len: usize, references: &[Vec<S>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|len| (len.abs_diff(candidate_len), *len))
        .unwrap_or(0)
}

fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len < reference_len {
        libm::exp(1.0 - reference_len as f64 / candidate_len as f64)
    } else {
        1.0
    }
}

impl BleuStats {
    /// Unsmoothed BLEU-1..4.
    pub fn scores(&self) -> [f64; MAX_ORDER] {
        let precisions: Vec<f64> = (0..MAX_ORDER)
            .map(|k| {
                if self.totals[k] == 0 {
                    0.0
                } else {
                    self.matches[k] as f64 / self.totals[k] as f64
                }
            })
            .collect();
        self.combine(&precisions)
    }

    /// Add-epsilon smoothed BLEU-1..4, for per-segment display only.
    pub fn smoothed_scores(&self) -> [f64; MAX_ORDER] {
        const TINY: f64 = 1e-15;
        const SMALL: f64 = 1e-9;
        let precisions: Vec<f64> = (0..MAX_ORDER)
            .map(|k| (self.matches[k] as f64 + TINY) / (self.totals[k] as f64 + SMALL))
            .collect();
        self.combine(&precisions)
    }

    fn combine(&self, precisions: &[f64]) -> [f64; MAX_ORDER] {
        let bp = brevity_penalty(self.candidate_len, self.reference_len);
        let mut out = [0.0; MAX_ORDER];
        let mut log_sum = 0.0;
        for n in 1..=MAX_ORDER {
            let p = precisions[n - 1];
            if p <= 0.0 {
                // Every higher order inherits the zero.
                break;
            }
            log_sum += libm::log(p);
            out[n - 1] = bp * libm::exp(log_sum / n as f64);
        }
        out
    }
}

/// Corpus BLEU-1..`max_n`.
pub fn bleu<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<Vec<S>>],
    max_n: usize,
) -> Result<Vec<f64>> {
    if !(1..=MAX_ORDER).contains(&max_n) {
        return Err(Error::InvalidParameter(format!("max_n must be in 1..=4, got {max_n}")));
    }
    Ok(corpus_bleu(candidates, references)?[..max_n].to_vec())
}

pub fn corpus_bleu<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<Vec<S>>],
) -> Result<[f64; MAX_ORDER]> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate list".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidParameter(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total += segment_stats(c, r);
    }
    Ok(total.scores())
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with recall weight [`ROUGE_BETA`], best over references.
/// An empty candidate scores 0.
pub fn rouge_l<S: AsRef<str> + PartialEq>(candidate: &[S], references: &[Vec<S>]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let beta2 = ROUGE_BETA * ROUGE_BETA;
    references
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let lcs = lcs_len(candidate, r) as f64;
            let p = lcs / candidate.len() as f64;
            let rec = lcs / r.len() as f64;
            if p > 0.0 && rec > 0.0 {
                (1.0 + beta2) * p * rec / (rec + beta2 * p)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub candidate: String,
    /// Add-epsilon smoothed sentence BLEU-1..4. Not the canonical corpus
    /// score; for inspection only.
    pub bleu_smoothed: [f64; MAX_ORDER],
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub corpus_size: usize,
    /// Queries that had no selection and were left out.
    pub skipped: usize,
    pub per_image: Vec<ImageMetrics>,
}

impl EvalReport {
    pub fn bleu(&self) -> [f64; MAX_ORDER] {
        [self.bleu_1, self.bleu_2, self.bleu_3, self.bleu_4]
    }
}

/// One scored item: image id, candidate tokens, reference token lists.
pub struct EvalItem {
    pub image_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

/// Corpus BLEU, mean ROUGE-L and the per-image rows.
pub fn evaluate_corpus(items: &[EvalItem], skipped: usize) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput("evaluation corpus".into()));
    }
    let mut total = BleuStats::default();
    let mut rouge_sum = 0.0;
    let mut per_image = Vec::with_capacity(items.len());
    for item in items {
        let stats = segment_stats(&item.candidate, &item.references);
        total += stats;
        let rouge = rouge_l(&item.candidate, &item.references);
        rouge_sum += rouge;
        per_image.push(ImageMetrics {
            image_id: item.image_id.clone(),
            candidate: item.candidate.join(" "),
            bleu_smoothed: stats.smoothed_scores(),
            rouge_l: rouge,
        });
    }
    let [bleu_1, bleu_2, bleu_3, bleu_4] = total.scores();
    Ok(EvalReport {
        bleu_1,
        bleu_2,
        bleu_3,
        bleu_4,
        rouge_l: rouge_sum / items.len() as f64,
        corpus_size: items.len(),
        skipped,
        per_image,
    })
}
