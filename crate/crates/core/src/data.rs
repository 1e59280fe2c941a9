//! JSON Lines inputs: image features, the caption database and tag
//! predictions, plus the plain-text query list.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::candidates::TagPrediction;
use crate::embedding::DenseVector;
use crate::error::{Error, Result};
use crate::retrieval::{CaptionRecord, ImageRecord};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses one JSON object per non-blank line, keeping the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, source_name: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::ingest(source_name, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::ingest(source_name, line_no, e.to_string()))?;
        out.push((line_no, value));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct FeatureLine {
    image_id: String,
    feature: Vec<f64>,
}

#[derive(Deserialize)]
struct CaptionLine {
    image_id: String,
    captions: Vec<String>,
}

#[derive(Deserialize)]
struct TagLine {
    image_id: String,
    tags: Vec<TagPrediction>,
}

/// `{"image_id": ..., "feature": [...]}` per line. Ids must be unique and
/// all features must share one dimension.
pub fn load_features<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<(String, DenseVector)>> {
    let lines: Vec<(usize, FeatureLine)> = read_jsonl(reader, source_name)?;
    if lines.is_empty() {
        return Err(Error::EmptyInput(source_name.to_string()));
    }
    let dimension = lines[0].1.feature.len();
    let mut seen = HashMap::new();
    let mut out = Vec::with_capacity(lines.len());
    for (line_no, l) in lines {
        if l.feature.len() != dimension || dimension == 0 {
            return Err(Error::ingest(
                source_name,
                line_no,
                format!("feature has {} components, expected {dimension}", l.feature.len()),
            ));
        }
        if let Some(first) = seen.insert(l.image_id.clone(), line_no) {
            return Err(Error::ingest(
                source_name,
                line_no,
                format!("image `{}` already defined on line {first}", l.image_id),
            ));
        }
        let feature = DenseVector::new(l.feature)
            .map_err(|_| Error::ingest(source_name, line_no, "non-finite feature component"))?;
        out.push((l.image_id, feature));
    }
    Ok(out)
}

pub fn load_features_file(path: &Path) -> Result<Vec<(String, DenseVector)>> {
    load_features(open(path)?, &path.display().to_string())
}

/// Reference captions per image.
#[derive(Debug, Clone, Default)]
pub struct CaptionDatabase {
    captions: HashMap<String, Vec<CaptionRecord>>,
}

impl CaptionDatabase {
    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let lines: Vec<(usize, CaptionLine)> = read_jsonl(reader, source_name)?;
        let mut captions = HashMap::new();
        for (line_no, l) in lines {
            let records = l.captions.into_iter().map(CaptionRecord::new).collect();
            if captions.insert(l.image_id.clone(), records).is_some() {
                return Err(Error::ingest(
                    source_name,
                    line_no,
                    format!("captions for `{}` listed twice", l.image_id),
                ));
            }
        }
        Ok(CaptionDatabase { captions })
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        CaptionDatabase::load(open(path)?, &path.display().to_string())
    }

    pub fn get(&self, image_id: &str) -> Option<&[CaptionRecord]> {
        self.captions.get(image_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }
}

/// Training images with features and captions, searchable by id.
#[derive(Debug, Clone)]
pub struct ImageStore {
    records: Vec<ImageRecord>,
    index: HashMap<String, usize>,
}

impl ImageStore {
    /// Joins features with captions. Images without a caption entry are kept
    /// with no captions.
    pub fn new(features: Vec<(String, DenseVector)>, captions: &CaptionDatabase) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyStore);
        }
        let mut records = Vec::with_capacity(features.len());
        let mut index = HashMap::with_capacity(features.len());
        for (image_id, feature) in features {
            if index.contains_key(&image_id) {
                return Err(Error::InvalidParameter(format!("duplicate image id `{image_id}`")));
            }
            let caps = captions.get(&image_id).map(<[_]>::to_vec).unwrap_or_else(|| {
                log::warn!("image `{image_id}` has features but no captions");
                Vec::new()
            });
            index.insert(image_id.clone(), records.len());
            records.push(ImageRecord {
                image_id,
                feature,
                captions: caps,
            });
        }
        Ok(ImageStore { records, index })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|i| &self.records[*i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `{"image_id": ..., "tags": [{"word", "prob", "pos"}]}` per line. Words are
/// normalised and probabilities range-checked.
pub fn load_tags<R: BufRead>(reader: R, source_name: &str) -> Result<HashMap<String, Vec<TagPrediction>>> {
    let lines: Vec<(usize, TagLine)> = read_jsonl(reader, source_name)?;
    let mut out = HashMap::new();
    for (line_no, l) in lines {
        let tags = l
            .tags
            .into_iter()
            .map(TagPrediction::normalized)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::ingest(source_name, line_no, e.to_string()))?;
        if out.insert(l.image_id.clone(), tags).is_some() {
            return Err(Error::ingest(
                source_name,
                line_no,
                format!("tags for `{}` listed twice", l.image_id),
            ));
        }
    }
    Ok(out)
}

pub fn load_tags_file(path: &Path) -> Result<HashMap<String, Vec<TagPrediction>>> {
    load_tags(open(path)?, &path.display().to_string())
}

/// One image id per line; blank lines and `#` comments are ignored.
pub fn load_query_list<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::ingest(source_name, idx + 1, e.to_string()))?;
        let id = line.trim();
        if !id.is_empty() && !id.starts_with('#') {
            ids.push(id.to_string());
        }
    }
    Ok(ids)
}

pub fn load_query_list_file(path: &Path) -> Result<Vec<String>> {
    load_query_list(open(path)?, &path.display().to_string())
}
