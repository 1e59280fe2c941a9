//! Criterion scores for one candidate caption against the query tags.
//!
//! Objects (nouns), actions (verbs) and attributes (adjective-noun pairs) are
//! extracted from both sides with prepared lexicons and compared through
//! word-vector cosine similarity. Each criterion yields one number in the
//! decision matrix.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{Candidate, TagCategory, TagPrediction};
use crate::embedding::{cosine_similarity, EmbeddingTable};
use crate::error::{Error, Result};
use crate::mcdm::{CriterionKind, DecisionMatrix};
use crate::text;

/// Maximum token distance between an adjective and the noun it describes.
pub const PAIRING_WINDOW: usize = 3;

/// Cosine similarities this close to 1 count as a complete attribute match.
pub const EXACT_MATCH_TOLERANCE: f64 = 1e-9;

pub const CRITERIA: [&str; 3] = ["objects", "attributes", "actions"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    #[serde(alias = "adj")]
    Adjective,
    Verb,
    Other,
}

impl std::str::FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noun" => Ok(PosTag::Noun),
            "adjective" | "adj" => Ok(PosTag::Adjective),
            "verb" => Ok(PosTag::Verb),
            "other" => Ok(PosTag::Other),
            other => Err(format!("unknown part of speech `{other}`")),
        }
    }
}

/// Most frequent part of speech per token.
#[derive(Debug, Clone, Default)]
pub struct PosLexicon {
    entries: HashMap<String, PosTag>,
}

impl PosLexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, PosTag)>,
        S: AsRef<str>,
    {
        let mut entries = HashMap::new();
        for (token, tag) in pairs {
            entries.entry(text::normalize(token.as_ref())).or_insert(tag);
        }
        PosLexicon { entries }
    }

    /// TSV `token<TAB>pos`. A repeated token keeps its first tag.
    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::ingest(source_name, line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (token, pos) = split_pair(&line)
                .ok_or_else(|| Error::ingest(source_name, line_no, "expected `token<TAB>pos`"))?;
            let tag: PosTag = pos
                .parse()
                .map_err(|e: String| Error::ingest(source_name, line_no, e))?;
            let token = text::normalize(token);
            if entries.contains_key(&token) {
                log::warn!("{source_name}:{line_no}: duplicate entry for `{token}`; keeping the first");
                continue;
            }
            entries.insert(token, tag);
        }
        Ok(PosLexicon { entries })
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PosLexicon::load(BufReader::new(file), &path.display().to_string())
    }

    pub fn get(&self, token: &str) -> Option<PosTag> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Adjective → nouns it has been observed describing.
#[derive(Debug, Clone, Default)]
pub struct AdjNounLexicon {
    entries: HashMap<String, Vec<String>>,
}

impl AdjNounLexicon {
    pub fn from_pairs<I, A, N>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, N)>,
        A: AsRef<str>,
        N: AsRef<str>,
    {
        let mut lex = AdjNounLexicon::default();
        for (adj, noun) in pairs {
            lex.insert(text::normalize(adj.as_ref()), text::normalize(noun.as_ref()));
        }
        lex
    }

    fn insert(&mut self, adjective: String, noun: String) {
        let nouns = self.entries.entry(adjective).or_default();
        if !nouns.contains(&noun) {
            nouns.push(noun);
        }
    }

    /// TSV `adjective<TAB>noun`, one observed pairing per line.
    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut lex = AdjNounLexicon::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::ingest(source_name, line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (adj, noun) = split_pair(&line).ok_or_else(|| {
                Error::ingest(source_name, line_no, "expected `adjective<TAB>noun`")
            })?;
            lex.insert(text::normalize(adj), text::normalize(noun));
        }
        Ok(lex)
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        AdjNounLexicon::load(BufReader::new(file), &path.display().to_string())
    }

    pub fn nouns_for(&self, adjective: &str) -> &[String] {
        self.entries.get(adjective).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pairs(&self, adjective: &str, noun: &str) -> bool {
        self.nouns_for(adjective).iter().any(|n| n == noun)
    }
}

fn split_pair(line: &str) -> Option<(&str, &str)> {
    let line = line.trim_end_matches(['\r', '\n']);
    let (a, b) = line.split_once('\t')?;
    if a.trim().is_empty() || b.trim().is_empty() || b.contains('\t') {
        return None;
    }
    Some((a, b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributePair {
    pub adjective: String,
    /// `None` when no noun could be attached to the adjective.
    pub noun: Option<String>,
}

impl AttributePair {
    pub fn new(adjective: &str, noun: Option<&str>) -> Self {
        AttributePair {
            adjective: adjective.to_string(),
            noun: noun.map(str::to_string),
        }
    }

    /// The text whose word vectors are summed to represent the pair.
    pub fn phrase(&self) -> String {
        match &self.noun {
            Some(noun) => format!("{} {}", self.adjective, noun),
            None => self.adjective.clone(),
        }
    }
}

/// Objects, actions and attribute pairs of a query or a caption.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSet {
    pub objects: Vec<String>,
    pub actions: Vec<String>,
    pub attribute_pairs: Vec<AttributePair>,
}

impl SlotSet {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.actions.is_empty() && self.attribute_pairs.is_empty()
    }

    fn push_object(&mut self, word: &str) {
        push_unique(&mut self.objects, word.to_string());
    }

    fn push_action(&mut self, word: &str) {
        push_unique(&mut self.actions, word.to_string());
    }

    fn push_pair(&mut self, pair: AttributePair) {
        push_unique(&mut self.attribute_pairs, pair);
    }
}

fn push_unique<T: PartialEq>(list: &mut Vec<T>, item: T) {
    if !list.contains(&item) {
        list.push(item);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub threshold_h: f64,
}

impl MatchParams {
    pub fn new(threshold_h: f64) -> Result<Self> {
        if !(threshold_h > 0.0 && threshold_h <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold_H must be in (0, 1], got {threshold_h}"
            )));
        }
        Ok(MatchParams { threshold_h })
    }
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams { threshold_h: 0.85 }
    }
}

fn resolve_tag_pos(tag: &TagPrediction, pos_lex: &PosLexicon) -> PosTag {
    match tag.category {
        TagCategory::Noun => PosTag::Noun,
        TagCategory::Adjective => PosTag::Adjective,
        TagCategory::Verb => PosTag::Verb,
        TagCategory::Unknown => pos_lex
            .get(&tag.word)
            // multi-word tags fall back to their head (last) word
            .or_else(|| tag.word.rsplit(' ').next().and_then(|head| pos_lex.get(head)))
            .unwrap_or(PosTag::Other),
    }
}

/// Slots of the query image from its predicted tags.
///
/// An adjective is attached to the most probable noun tag of the same image
/// that the adjective-noun lexicon lists for it; otherwise it stays unpaired.
pub fn extract_query_slots(
    tags: &[TagPrediction],
    pos_lex: &PosLexicon,
    adjnoun_lex: &AdjNounLexicon,
) -> SlotSet {
    let resolved: Vec<(&TagPrediction, PosTag)> =
        tags.iter().map(|t| (t, resolve_tag_pos(t, pos_lex))).collect();
    let nouns: Vec<&TagPrediction> = resolved
        .iter()
        .filter(|(_, p)| *p == PosTag::Noun)
        .map(|(t, _)| *t)
        .collect();

    let mut slots = SlotSet::default();
    for (tag, pos) in &resolved {
        match pos {
            PosTag::Noun => slots.push_object(&tag.word),
            PosTag::Verb => slots.push_action(&tag.word),
            PosTag::Adjective => {
                let mut best: Option<&TagPrediction> = None;
                for noun in &nouns {
                    let head = noun.word.rsplit(' ').next().unwrap_or(&noun.word);
                    let listed = adjnoun_lex.pairs(&tag.word, &noun.word)
                        || adjnoun_lex.pairs(&tag.word, head);
                    if listed && best.is_none_or(|b| noun.probability > b.probability) {
                        best = Some(noun);
                    }
                }
                slots.push_pair(AttributePair::new(&tag.word, best.map(|n| n.word.as_str())));
            }
            PosTag::Other => {}
        }
    }
    slots
}

/// Slots of a candidate caption via lexicon lookup.
///
/// An adjective takes the nearest following noun within [`PAIRING_WINDOW`]
/// tokens, else the nearest preceding one within the same window.
pub fn extract_caption_slots<S: AsRef<str>>(tokens: &[S], pos_lex: &PosLexicon) -> SlotSet {
    let tags: Vec<Option<PosTag>> = tokens.iter().map(|t| pos_lex.get(t.as_ref())).collect();
    let is_noun = |j: usize| tags[j] == Some(PosTag::Noun);

    let mut slots = SlotSet::default();
    for (i, token) in tokens.iter().map(AsRef::as_ref).enumerate() {
        match tags[i] {
            Some(PosTag::Noun) => slots.push_object(token),
            Some(PosTag::Verb) => slots.push_action(token),
            Some(PosTag::Adjective) => {
                let following = (i + 1..tokens.len().min(i + 1 + PAIRING_WINDOW)).find(|&j| is_noun(j));
                let preceding = (i.saturating_sub(PAIRING_WINDOW)..i).rev().find(|&j| is_noun(j));
                let noun = following.or(preceding).map(|j| tokens[j].as_ref());
                slots.push_pair(AttributePair::new(token, noun));
            }
            Some(PosTag::Other) | None => {}
        }
    }
    slots
}

/// Outcome of comparing one query slot list with one caption slot list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub score: f64,
    /// Number of one-to-one matches formed.
    pub matched: usize,
    /// Sum of the match contributions.
    pub similarity_sum: f64,
    /// `(query index, caption index, contribution)` in the order formed.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Penalty per surplus item when the counts differ.
pub fn count_penalty(query_count: usize, caption_count: usize) -> f64 {
    use std::cmp::Ordering::*;
    match query_count.cmp(&caption_count) {
        Greater => 0.5,
        Less => 1.0 / 3.0,
        Equal => 0.0,
    }
}

/// Scores a precomputed `Q × B` similarity matrix.
///
/// Cross pairs with similarity `>= threshold` are matched greedily, highest
/// first, each item used at most once. Ties go to the lower query index, then
/// the lower caption index. `snap_exact` turns contributions within
/// [`EXACT_MATCH_TOLERANCE`] of 1 into exactly 1.
pub fn score_similarity_matrix(
    similarity: &[Vec<f64>],
    caption_count: usize,
    threshold: f64,
    snap_exact: bool,
) -> MatchOutcome {
    let query_keys: Vec<usize> = (0..similarity.len()).collect();
    let caption_keys: Vec<usize> = (0..caption_count).collect();
    greedy_score(similarity, &query_keys, &caption_keys, threshold, snap_exact)
}

/// Greedy one-to-one matching followed by the count-penalised aggregate.
/// Equal similarities are ordered by `(query_keys[i], caption_keys[j])`.
fn greedy_score<K: Ord>(
    similarity: &[Vec<f64>],
    query_keys: &[K],
    caption_keys: &[K],
    threshold: f64,
    snap_exact: bool,
) -> MatchOutcome {
    let q = query_keys.len();
    let b = caption_keys.len();
    if q == 0 {
        return MatchOutcome {
            score: 0.0,
            matched: 0,
            similarity_sum: 0.0,
            pairs: vec![],
        };
    }

    let mut edges: Vec<(usize, usize, f64)> = similarity
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, s)| (i, j, *s)))
        .filter(|(_, _, s)| *s >= threshold)
        .collect();
    edges.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then_with(|| query_keys[x.0].cmp(&query_keys[y.0]))
            .then_with(|| caption_keys[x.1].cmp(&caption_keys[y.1]))
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });

    let mut query_used = vec![false; q];
    let mut caption_used = vec![false; b];
    let mut pairs = Vec::new();
    let mut similarity_sum = 0.0;
    for (i, j, s) in edges {
        if query_used[i] || caption_used[j] {
            continue;
        }
        query_used[i] = true;
        caption_used[j] = true;
        let contribution = if snap_exact && s >= 1.0 - EXACT_MATCH_TOLERANCE { 1.0 } else { s };
        similarity_sum += contribution;
        pairs.push((i, j, contribution));
    }

    let matched = pairs.len();
    let unmatched = (q.min(b) - matched) as f64;
    let surplus = q.abs_diff(b) as f64;
    let score = (similarity_sum - unmatched - surplus * count_penalty(q, b)) / q as f64;
    MatchOutcome {
        score,
        matched,
        similarity_sum,
        pairs,
    }
}

fn similarity_matrix(query: &[String], caption: &[String], table: &EmbeddingTable) -> Vec<Vec<f64>> {
    let caption_vectors: Vec<_> = caption.iter().map(|c| table.phrase_vector(c)).collect();
    query
        .iter()
        .map(|qi| {
            let qv = table.phrase_vector(qi);
            caption_vectors
                .iter()
                .map(|cv| match (&qv, cv) {
                    (Some(a), Some(b)) => cosine_similarity(a, b).unwrap_or(0.0),
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Object or action criterion for one candidate.
pub fn slot_match(
    query_items: &[String],
    caption_items: &[String],
    table: &EmbeddingTable,
    params: &MatchParams,
) -> MatchOutcome {
    let sims = similarity_matrix(query_items, caption_items, table);
    greedy_score(&sims, query_items, caption_items, params.threshold_h, false)
}

pub fn slot_match_score(
    query_items: &[String],
    caption_items: &[String],
    table: &EmbeddingTable,
    params: &MatchParams,
) -> f64 {
    slot_match(query_items, caption_items, table, params).score
}

/// Attribute criterion: pairs are compared as summed adjective+noun vectors;
/// a complete match contributes exactly 1, a partial one its similarity.
pub fn attribute_match(
    query_pairs: &[AttributePair],
    caption_pairs: &[AttributePair],
    table: &EmbeddingTable,
    params: &MatchParams,
) -> MatchOutcome {
    let q: Vec<String> = query_pairs.iter().map(AttributePair::phrase).collect();
    let c: Vec<String> = caption_pairs.iter().map(AttributePair::phrase).collect();
    let sims = similarity_matrix(&q, &c, table);
    greedy_score(&sims, &q, &c, params.threshold_h, true)
}

pub fn attribute_match_score(
    query_pairs: &[AttributePair],
    caption_pairs: &[AttributePair],
    table: &EmbeddingTable,
    params: &MatchParams,
) -> f64 {
    attribute_match(query_pairs, caption_pairs, table, params).score
}

/// Criterion scores of one candidate, in [`CRITERIA`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub slots: SlotSet,
    pub objects: MatchOutcome,
    pub attributes: MatchOutcome,
    pub actions: MatchOutcome,
}

impl CandidateScores {
    pub fn row(&self) -> Vec<f64> {
        vec![self.objects.score, self.attributes.score, self.actions.score]
    }
}

pub fn score_candidate<S: AsRef<str>>(
    query: &SlotSet,
    caption_tokens: &[S],
    table: &EmbeddingTable,
    pos_lex: &PosLexicon,
    params: &MatchParams,
) -> CandidateScores {
    let slots = extract_caption_slots(caption_tokens, pos_lex);
    CandidateScores {
        objects: slot_match(&query.objects, &slots.objects, table, params),
        attributes: attribute_match(&query.attribute_pairs, &slots.attribute_pairs, table, params),
        actions: slot_match(&query.actions, &slots.actions, table, params),
        slots,
    }
}

/// One row per candidate, columns `[objects, attributes, actions]`, all
/// benefit criteria.
pub fn build_decision_matrix(
    query: &SlotSet,
    candidates: &[Candidate<'_>],
    table: &EmbeddingTable,
    pos_lex: &PosLexicon,
    params: &MatchParams,
) -> Result<(DecisionMatrix, Vec<CandidateScores>)> {
    if candidates.is_empty() {
        return Err(Error::Matrix("no candidates to score".into()));
    }
    let scores: Vec<CandidateScores> = candidates
        .iter()
        .map(|c| score_candidate(query, &c.caption.tokens, table, pos_lex, params))
        .collect();
    let matrix = DecisionMatrix::new(
        scores.iter().map(CandidateScores::row).collect(),
        vec![CriterionKind::Benefit; CRITERIA.len()],
        candidates
            .iter()
            .map(|c| format!("{}#{}", c.image_id, c.caption_index))
            .collect(),
        CRITERIA.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok((matrix, scores))
}
