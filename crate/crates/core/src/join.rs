//! The related-entity query: top-K neighbors of an entity with hubs filtered
//! out and the list padded from further down the ranking.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::refine::{persistence_confidence, HubnessMetadata};
use crate::store::EmbeddingStore;

/// Size of the unfiltered candidate window used for confidence, as a multiple of K.
pub const CONFIDENCE_WINDOW: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinHit {
    pub entity: String,
    pub distance: f64,
    pub hubness: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovedHub {
    pub entity: String,
    pub distance: f64,
    pub hubness: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct JoinResult {
    pub results: Vec<JoinHit>,
    pub removed_hubs: Vec<RemovedHub>,
}

impl JoinResult {
    /// True when the store ran out of non-hub entities before K was reached.
    pub fn is_short(&self, k: usize) -> bool {
        self.results.len() < k
    }
}

pub fn termite_join(
    store: &EmbeddingStore,
    meta: &HubnessMetadata,
    entity: &str,
    k: usize,
    with_confidence: bool,
) -> Result<JoinResult> {
    let qi = store
        .index_of(entity)
        .ok_or_else(|| Error::EntityNotFound(entity.to_string()))?;
    if k == 0 {
        return Ok(JoinResult::default());
    }
    let ranking = store.knn_excluding(store.vector_at(qi), store.len(), Some(qi))?;

    let mut out = JoinResult::default();
    for (rank, n) in ranking.iter().enumerate() {
        if out.results.len() == k {
            break;
        }
        let hubness = meta.count(&n.entity);
        if hubness > meta.cutoff {
            if rank < k {
                out.removed_hubs.push(RemovedHub {
                    entity: n.entity.clone(),
                    distance: n.distance,
                    hubness,
                });
            }
            continue;
        }
        out.results.push(JoinHit {
            entity: n.entity.clone(),
            distance: n.distance,
            hubness,
            confidence: None,
        });
    }
    if out.is_short(k) {
        log::warn!(
            "only {} non-hub entities available for `{entity}` (asked for {k})",
            out.results.len()
        );
    }

    if with_confidence && !out.results.is_empty() {
        let window = k.saturating_mul(CONFIDENCE_WINDOW).min(ranking.len());
        let mut candidates: Vec<String> = ranking[..window].iter().map(|n| n.entity.clone()).collect();
        // Padding can reach past the window; those results still need a score.
        for hit in &out.results {
            if !candidates.contains(&hit.entity) {
                candidates.push(hit.entity.clone());
            }
        }
        let scores = persistence_confidence(store, entity, &candidates)?;
        for hit in &mut out.results {
            hit.confidence = scores
                .iter()
                .find(|(name, _)| *name == hit.entity)
                .map(|(_, c)| *c);
        }
    }
    Ok(out)
}
