//! Adaptive visual neighbourhood.
//!
//! A training image is kept when its feature distance to the query is within
//! `(1 + epsilon)` times the distance of the closest training image. The
//! candidate count therefore adapts to how isolated the query is.

use std::cmp::Ordering;

use serde::Serialize;

use crate::embedding::{euclidean_distance, DenseVector};
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptionRecord {
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

impl CaptionRecord {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = text::tokenize(&text);
        CaptionRecord { text, tokens }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub feature: DenseVector,
    pub captions: Vec<CaptionRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub record: &'a ImageRecord,
    pub distance: f64,
}

/// Training images inside the adaptive radius, closest first.
#[derive(Debug, Clone)]
pub struct NeighborSet<'a> {
    pub entries: Vec<Neighbor<'a>>,
    pub radius: f64,
    pub closest_distance: f64,
    /// Images that were inside the radius but dropped by the `max_images` cap.
    pub truncated: usize,
}

impl<'a> NeighborSet<'a> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Visual similarity of every entry, using the radius as normaliser so
    /// that all values fall in `[0, 1]`. When the radius is zero every entry
    /// sits at distance zero and gets similarity 1.
    pub fn similarities(&self) -> Vec<f64> {
        if self.radius > 0.0 {
            self.entries
                .iter()
                .map(|n| (1.0 - n.distance / self.radius).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![1.0; self.entries.len()]
        }
    }
}

/// Exhaustive scan. Ties in distance are ordered by `image_id`.
pub fn retrieve_neighbors<'a, I>(
    query: &DenseVector,
    store: I,
    epsilon: f64,
    max_images: usize,
) -> Result<NeighborSet<'a>>
where
    I: IntoIterator<Item = &'a ImageRecord>,
{
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    if max_images == 0 {
        return Err(Error::InvalidParameter("max_images must be positive".into()));
    }

    let mut scored = Vec::new();
    for record in store {
        let distance = euclidean_distance(query, &record.feature)?;
        scored.push(Neighbor { record, distance });
    }
    if scored.is_empty() {
        return Err(Error::EmptyStore);
    }

    let closest_distance = scored
        .iter()
        .map(|n| n.distance)
        .fold(f64::INFINITY, f64::min);
    let radius = (1.0 + epsilon) * closest_distance;

    scored.retain(|n| n.distance <= radius);
    scored.sort_by(compare_neighbors);
    let truncated = scored.len().saturating_sub(max_images);
    scored.truncate(max_images);

    Ok(NeighborSet {
        entries: scored,
        radius,
        closest_distance,
        truncated,
    })
}

pub(crate) fn compare_neighbors(a: &Neighbor<'_>, b: &Neighbor<'_>) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.record.image_id.cmp(&b.record.image_id))
}

/// `1 - distance / z`.
pub fn similarity_from_distance(distance: f64, z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "similarity normaliser must be positive, got {z}"
        )));
    }
    Ok(1.0 - distance / z)
}

pub fn visual_similarity(query: &DenseVector, record: &ImageRecord, z: f64) -> Result<f64> {
    similarity_from_distance(euclidean_distance(query, &record.feature)?, z)
}
