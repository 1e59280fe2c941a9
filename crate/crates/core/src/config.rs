//! Pipeline configuration, read from JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingFormat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Neighbourhood slack: images within `(1 + epsilon) * d_min` are kept.
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::max_images")]
    pub max_images: usize,
    #[serde(default = "defaults::n_candidates")]
    pub n_candidates: usize,
    #[serde(rename = "threshold_H", default = "defaults::threshold_h")]
    pub threshold_h: f64,
    #[serde(default)]
    pub min_tag_probability: f64,
    #[serde(default = "defaults::embedding_dimension")]
    pub embedding_dimension: usize,
    #[serde(default)]
    pub embedding_format: EmbeddingFormat,
    /// Scale each tag vector by its probability when building the MIL vector.
    #[serde(default)]
    pub probability_weighted_mil: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,

    pub embeddings_path: PathBuf,
    pub stopwords_path: PathBuf,
    pub pos_lexicon_path: PathBuf,
    pub adj_noun_lexicon_path: PathBuf,
    pub image_features_path: PathBuf,
    pub caption_database_path: PathBuf,
    pub tag_predictions_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_list_path: Option<PathBuf>,
}

mod defaults {
    pub fn epsilon() -> f64 {
        0.15
    }
    pub fn max_images() -> usize {
        100
    }
    pub fn n_candidates() -> usize {
        50
    }
    pub fn threshold_h() -> f64 {
        0.85
    }
    pub fn embedding_dimension() -> usize {
        500
    }
}

impl PipelineConfig {
    /// Parses and validates; relative paths are left as written.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file, resolving relative paths against its directory,
    /// and checks that every input file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        config.resolve_paths(base);
        config.check_paths()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.max_images == 0 {
            return bad("max_images must be positive".into());
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be positive".into());
        }
        if !(self.threshold_h > 0.0 && self.threshold_h <= 1.0) {
            return bad(format!("threshold_H must lie in (0, 1], got {}", self.threshold_h));
        }
        if !(0.0..=1.0).contains(&self.min_tag_probability) {
            return bad(format!(
                "min_tag_probability must lie in [0, 1], got {}",
                self.min_tag_probability
            ));
        }
        if self.embedding_dimension == 0 {
            return bad("embedding_dimension must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        Ok(())
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut paths = vec![
            &mut self.embeddings_path,
            &mut self.stopwords_path,
            &mut self.pos_lexicon_path,
            &mut self.adj_noun_lexicon_path,
            &mut self.image_features_path,
            &mut self.caption_database_path,
            &mut self.tag_predictions_path,
        ];
        if let Some(q) = self.query_list_path.as_mut() {
            paths.push(q);
        }
        paths
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn check_paths(&mut self) -> Result<()> {
        for p in self.paths_mut() {
            if !p.is_file() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}
