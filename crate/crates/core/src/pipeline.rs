//! End-to-end caption selection: retrieval, re-ranking, matching and
//! ranking for each query image, plus corpus evaluation of the results.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    build_mil_vector, build_q_vector, build_weighted_mil_vector, select_candidates, Candidate,
    ReferenceKind, TagPrediction,
};
use crate::config::PipelineConfig;
use crate::data::{self, CaptionDatabase, ImageStore};
use crate::embedding::{load_embeddings_file, EmbeddingTable, StopwordList};
use crate::error::{Error, Result};
use crate::matching::{
    build_decision_matrix, extract_query_slots, AdjNounLexicon, CandidateScores, MatchParams,
    PosLexicon, SlotSet,
};
use crate::mcdm::{entropy_weights, select_best, shift_nonnegative, topsis_rank, EntropyWeights, TopsisResult};
use crate::metrics::{evaluate_corpus, EvalItem, EvalReport};
use crate::retrieval::retrieve_neighbors;

/// Everything a run reads, loaded once and shared read-only by all workers.
#[derive(Debug)]
pub struct Resources {
    pub config: PipelineConfig,
    pub embeddings: EmbeddingTable,
    pub stopwords: StopwordList,
    pub pos_lexicon: PosLexicon,
    pub adj_noun_lexicon: AdjNounLexicon,
    pub store: ImageStore,
    pub captions: CaptionDatabase,
    pub tags: HashMap<String, Vec<TagPrediction>>,
}

impl Resources {
    pub fn load(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let embeddings = load_embeddings_file(
            &config.embeddings_path,
            config.embedding_format,
            config.embedding_dimension,
        )?;
        let stopwords = StopwordList::load_file(&config.stopwords_path)?;
        let pos_lexicon = PosLexicon::load_file(&config.pos_lexicon_path)?;
        let adj_noun_lexicon = AdjNounLexicon::load_file(&config.adj_noun_lexicon_path)?;
        let captions = CaptionDatabase::load_file(&config.caption_database_path)?;
        let features = data::load_features_file(&config.image_features_path)?;
        let store = ImageStore::new(features, &captions)?;
        let tags = data::load_tags_file(&config.tag_predictions_path)?;
        log::info!(
            "loaded {} embeddings, {} images, {} caption entries, {} tag entries",
            embeddings.len(),
            store.len(),
            captions.len(),
            tags.len()
        );
        Ok(Resources {
            config,
            embeddings,
            stopwords,
            pos_lexicon,
            adj_noun_lexicon,
            store,
            captions,
            tags,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// One line of the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub image_id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

impl SelectionReport {
    pub fn chosen_caption(&self) -> Option<&str> {
        self.decision.as_ref().map(|d| d.chosen.caption.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub branch: ReferenceKind,
    /// Tags that contributed to the MIL vector.
    pub reference_tags: Vec<String>,
    pub neighbors: NeighborReport,
    pub query_slots: SlotSet,
    /// Captions scored before the top-n cut.
    pub total_captions: usize,
    pub candidates: Vec<CandidateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<EntropyWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topsis: Option<TopsisResult>,
    pub chosen: ChosenCaption,
    pub tie_breaks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborReport {
    pub count: usize,
    pub radius: f64,
    pub closest_distance: f64,
    pub truncated: usize,
    pub excluded_self: bool,
    pub entries: Vec<NeighborEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub image_id: String,
    pub distance: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub image_id: String,
    pub caption_index: usize,
    pub caption: String,
    pub cosine: f64,
    pub visual_similarity: f64,
    pub coverage: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<CandidateScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub criteria: Vec<String>,
    pub raw: Vec<Vec<f64>>,
    pub shifted: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenCaption {
    /// Position in `candidates`.
    pub candidate: usize,
    pub image_id: String,
    pub caption_index: usize,
    pub caption: String,
}

/// Runs every query on a pool of `workers` threads. Reports come back in
/// query order; a failing query yields an error report and the run goes on.
pub fn run_pipeline(resources: &Resources, query_ids: &[String], workers: usize) -> Result<Vec<SelectionReport>> {
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        query_ids
            .par_iter()
            .map(|id| match process_query(resources, id) {
                Ok(decision) => SelectionReport {
                    image_id: id.clone(),
                    status: Status::Ok,
                    error: None,
                    decision: Some(decision),
                },
                Err(e) => {
                    log::warn!("query `{id}` failed: {e}");
                    SelectionReport {
                        image_id: id.clone(),
                        status: Status::Error,
                        error: Some(e.to_string()),
                        decision: None,
                    }
                }
            })
            .collect()
    }))
}

/// Selects a caption for one query image.
pub fn process_query(res: &Resources, query_id: &str) -> Result<Decision> {
    let config = &res.config;
    let query = res
        .store
        .get(query_id)
        .ok_or_else(|| Error::MissingFeatures(query_id.to_string()))?;
    log::debug!("`{query_id}`: excluding the query image from its own neighbourhood");
    let pool = res.store.records().iter().filter(|r| r.image_id != query_id);
    let neighbors = retrieve_neighbors(&query.feature, pool, config.epsilon, config.max_images)?;
    let similarities = neighbors.similarities();

    let mut tie_breaks = Vec::new();
    for w in neighbors.entries.windows(2) {
        if w[0].distance == w[1].distance {
            tie_breaks.push(format!(
                "neighbour distance tie at {}: {} before {} by image id",
                w[0].distance, w[0].record.image_id, w[1].record.image_id
            ));
        }
    }

    let tags: Vec<TagPrediction> = match res.tags.get(query_id) {
        Some(t) => t
            .iter()
            .filter(|t| t.probability >= config.min_tag_probability)
            .cloned()
            .collect(),
        None => {
            log::warn!("`{query_id}`: no tag predictions");
            Vec::new()
        }
    };
    let reference_tags: Vec<String> = tags
        .iter()
        .filter(|t| res.embeddings.phrase_vector(&t.word).is_some())
        .map(|t| t.word.clone())
        .collect();
    let mil = if config.probability_weighted_mil {
        build_weighted_mil_vector(&tags, &res.embeddings, 0.0)
    } else {
        build_mil_vector(&tags, &res.embeddings, 0.0)
    };
    let (reference, branch) = match mil {
        Some(v) => (v, ReferenceKind::Mil),
        None => {
            log::info!("`{query_id}`: no usable tag, using query expansion");
            (
                build_q_vector(&neighbors, &res.embeddings, &res.stopwords)?,
                ReferenceKind::QueryExpansion,
            )
        }
    };

    let candidates = select_candidates(
        &neighbors,
        &reference,
        branch,
        &res.embeddings,
        &res.stopwords,
        config.n_candidates,
    )?;
    tie_breaks.extend(candidates.tie_breaks.iter().cloned());
    let query_slots = extract_query_slots(&tags, &res.pos_lexicon, &res.adj_noun_lexicon);

    let mut reports: Vec<CandidateReport> = candidates.entries.iter().map(candidate_report).collect();
    let (chosen_index, matrix, weights, topsis) = if candidates.len() == 1 {
        (0, None, None, None)
    } else {
        let params = MatchParams::new(config.threshold_h)?;
        let (raw, scores) =
            build_decision_matrix(&query_slots, &candidates.entries, &res.embeddings, &res.pos_lexicon, &params)?;
        let (shifted, offsets) = shift_nonnegative(&raw);
        let weights = entropy_weights(&shifted)?;
        if weights.uniform_fallback {
            tie_breaks.push("every criterion uniform: equal weights used".into());
        }
        let topsis = topsis_rank(&shifted, &weights.weights)?;
        for row in &topsis.degenerate_rows {
            tie_breaks.push(format!("row {row} coincides with both ideal points: closeness set to 1"));
        }
        let selection = select_best(&topsis, &candidates.entries)?;
        tie_breaks.extend(selection.tie_break);
        for (report, s) in reports.iter_mut().zip(scores) {
            report.scores = Some(s);
        }
        let matrix = MatrixReport {
            criteria: raw.column_labels().to_vec(),
            raw: raw.values().to_vec(),
            shifted: shifted.values().to_vec(),
            offsets,
        };
        (selection.index, Some(matrix), Some(weights), Some(topsis))
    };

    let chosen = &candidates.entries[chosen_index];
    Ok(Decision {
        branch,
        reference_tags,
        neighbors: NeighborReport {
            count: neighbors.len(),
            radius: neighbors.radius,
            closest_distance: neighbors.closest_distance,
            truncated: neighbors.truncated,
            excluded_self: true,
            entries: neighbors
                .entries
                .iter()
                .zip(similarities)
                .map(|(n, similarity)| NeighborEntry {
                    image_id: n.record.image_id.clone(),
                    distance: n.distance,
                    similarity,
                })
                .collect(),
        },
        query_slots,
        total_captions: candidates.total_captions,
        candidates: reports,
        matrix,
        weights,
        topsis,
        chosen: ChosenCaption {
            candidate: chosen_index,
            image_id: chosen.image_id.to_string(),
            caption_index: chosen.caption_index,
            caption: chosen.caption.text.clone(),
        },
        tie_breaks,
    })
}

fn candidate_report(c: &Candidate<'_>) -> CandidateReport {
    CandidateReport {
        image_id: c.image_id.to_string(),
        caption_index: c.caption_index,
        caption: c.caption.text.clone(),
        cosine: c.cosine,
        visual_similarity: c.visual_similarity,
        coverage: c.coverage,
        scores: None,
    }
}

/// Writes one compact JSON object per line.
pub fn write_reports<W: Write>(mut out: W, reports: &[SelectionReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<report output>", e))?;
    }
    out.flush().map_err(|e| Error::io("<report output>", e))
}

pub fn read_reports<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<SelectionReport>> {
    Ok(data::read_jsonl(reader, source_name)?.into_iter().map(|(_, r)| r).collect())
}

/// Scores the chosen captions against every reference caption of their query
/// image. Failed queries are skipped and counted.
pub fn evaluate(reports: &[SelectionReport], references: &CaptionDatabase) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("report list".into()));
    }
    let mut items = Vec::with_capacity(reports.len());
    let mut skipped = 0;
    for report in reports {
        let Some(chosen) = report.chosen_caption() else {
            skipped += 1;
            continue;
        };
        let refs = references
            .get(&report.image_id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::MissingReferences(report.image_id.clone()))?;
        items.push(EvalItem {
            image_id: report.image_id.clone(),
            candidate: crate::text::tokenize(chosen),
            references: refs.iter().map(|c| c.tokens.clone()).collect(),
        });
    }
    evaluate_corpus(&items, skipped)
}
