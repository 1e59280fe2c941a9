//! Semantic re-ranking of the retrieved captions.
//!
//! The reference vector is the sum of the predicted tag vectors (the "MIL
//! vector"). When no tag survives, a query-expansion vector is used instead:
//! the visually weighted average of every retrieved caption vector.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::{caption_vector, cosine_similarity, DenseVector, EmbeddingTable, StopwordList};
use crate::error::{Error, Result};
use crate::retrieval::{CaptionRecord, NeighborSet};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagCategory {
    Noun,
    #[serde(alias = "adj")]
    Adjective,
    Verb,
    #[default]
    Unknown,
}

/// One predicted concept for a query image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagPrediction {
    pub word: String,
    #[serde(rename = "prob")]
    pub probability: f64,
    #[serde(rename = "pos", default)]
    pub category: TagCategory,
}

impl TagPrediction {
    pub fn new(word: &str, probability: f64, category: TagCategory) -> Result<Self> {
        TagPrediction {
            word: word.to_string(),
            probability,
            category,
        }
        .normalized()
    }

    /// Lowercases the word and checks the probability range.
    pub fn normalized(mut self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidParameter(format!(
                "tag `{}` has probability {} outside [0, 1]",
                self.word, self.probability
            )));
        }
        self.word = text::normalize(&self.word);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Mil,
    QueryExpansion,
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceKind::Mil => f.write_str("mil"),
            ReferenceKind::QueryExpansion => f.write_str("query_expansion"),
        }
    }
}

/// Sum of the vectors of every tag with `probability >= min_probability`
/// that is in vocabulary. Multi-word tags contribute the sum of their words.
/// `None` means no tag qualified and the caller should fall back to
/// [`build_q_vector`].
pub fn build_mil_vector(
    tags: &[TagPrediction],
    table: &EmbeddingTable,
    min_probability: f64,
) -> Option<DenseVector> {
    mil_vector(tags, table, min_probability, false)
}

/// Like [`build_mil_vector`] but each tag vector is scaled by its probability.
pub fn build_weighted_mil_vector(
    tags: &[TagPrediction],
    table: &EmbeddingTable,
    min_probability: f64,
) -> Option<DenseVector> {
    mil_vector(tags, table, min_probability, true)
}

fn mil_vector(
    tags: &[TagPrediction],
    table: &EmbeddingTable,
    min_probability: f64,
    weighted: bool,
) -> Option<DenseVector> {
    let mut sum = DenseVector::zeros(table.dimension());
    let mut used = 0;
    for tag in tags.iter().filter(|t| t.probability >= min_probability) {
        if let Some(v) = table.phrase_vector(&tag.word) {
            let scale = if weighted { tag.probability } else { 1.0 };
            sum.add_scaled(scale, &v).ok()?;
            used += 1;
        }
    }
    (used > 0).then_some(sum)
}

/// Visually weighted average of the retrieved caption vectors:
/// `sum_i sum_j sim_i * c_ij / (N * M)`, where `N * M` is the number of
/// (image, caption) pairs.
pub fn build_q_vector(
    neighbors: &NeighborSet<'_>,
    table: &EmbeddingTable,
    stopwords: &StopwordList,
) -> Result<DenseVector> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighbors);
    }
    let sims = neighbors.similarities();
    let mut q = DenseVector::zeros(table.dimension());
    let mut pairs = 0usize;
    for (n, sim) in neighbors.entries.iter().zip(sims) {
        for caption in &n.record.captions {
            let cv = caption_vector(&caption.tokens, table, stopwords);
            q.add_scaled(sim, &cv.vector)?;
            pairs += 1;
        }
    }
    if pairs > 0 {
        q.scale(1.0 / pairs as f64);
    }
    Ok(q)
}

#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub image_id: &'a str,
    pub caption_index: usize,
    pub caption: &'a CaptionRecord,
    pub vector: DenseVector,
    pub coverage: usize,
    pub cosine: f64,
    pub visual_similarity: f64,
}

/// Top captions by cosine similarity to the reference vector, best first.
#[derive(Debug, Clone)]
pub struct CandidateSet<'a> {
    pub entries: Vec<Candidate<'a>>,
    pub reference_kind: ReferenceKind,
    /// Number of captions that were scored before truncation.
    pub total_captions: usize,
    /// Human-readable notes for every cosine tie that a secondary key settled.
    pub tie_breaks: Vec<String>,
}

impl<'a> CandidateSet<'a> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores every caption of every neighbour against `reference` and keeps the
/// best `n`. Ties on cosine go to the visually closer source image, then to
/// the lexicographically smaller caption text.
pub fn select_candidates<'a>(
    neighbors: &NeighborSet<'a>,
    reference: &DenseVector,
    reference_kind: ReferenceKind,
    table: &EmbeddingTable,
    stopwords: &StopwordList,
    n: usize,
) -> Result<CandidateSet<'a>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n_candidates must be positive".into()));
    }
    let sims = neighbors.similarities();
    let mut all = Vec::new();
    for (neighbor, sim) in neighbors.entries.iter().zip(sims) {
        let record = neighbor.record;
        for (caption_index, caption) in record.captions.iter().enumerate() {
            let cv = caption_vector(&caption.tokens, table, stopwords);
            let cosine = cosine_similarity(&cv.vector, reference)?;
            all.push(Candidate {
                image_id: &record.image_id,
                caption_index,
                caption,
                vector: cv.vector,
                coverage: cv.coverage,
                cosine,
                visual_similarity: sim,
            });
        }
    }
    if all.is_empty() {
        return Err(Error::NoCaptions);
    }
    let total_captions = all.len();
    all.sort_by(compare_candidates);

    // Ties that matter: inside the kept prefix and across the cut.
    let inspected = n.min(all.len() - 1) + 1;
    let tie_breaks = all[..inspected.min(all.len())]
        .windows(2)
        .filter(|w| w[0].cosine == w[1].cosine)
        .map(|w| describe_tie(&w[0], &w[1]))
        .collect();

    all.truncate(n);
    Ok(CandidateSet {
        entries: all,
        reference_kind,
        total_captions,
        tie_breaks,
    })
}

fn compare_candidates(a: &Candidate<'_>, b: &Candidate<'_>) -> Ordering {
    b.cosine
        .total_cmp(&a.cosine)
        .then_with(|| b.visual_similarity.total_cmp(&a.visual_similarity))
        .then_with(|| a.caption.text.cmp(&b.caption.text))
        .then_with(|| a.image_id.cmp(b.image_id))
        .then_with(|| a.caption_index.cmp(&b.caption_index))
}

fn describe_tie(first: &Candidate<'_>, second: &Candidate<'_>) -> String {
    let key = if first.visual_similarity != second.visual_similarity {
        "visual similarity"
    } else if first.caption.text != second.caption.text {
        "caption text"
    } else {
        "source image id and caption index"
    };
    format!(
        "candidate cosine tie at {}: {}#{} before {}#{} by {key}",
        first.cosine, first.image_id, first.caption_index, second.image_id, second.caption_index
    )
}
