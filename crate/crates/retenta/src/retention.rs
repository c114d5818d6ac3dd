//! Personalized retention offers via collaborative filtering.
//!
//! Unlike a general recommender, the neighborhood for a risky customer is
//! drawn exclusively from the loyal set J. Similarity is the cosine over
//! co-rated offers only; a pair with no co-rated offers has no similarity at
//! all and is excluded rather than imputed to zero.
//!
//! Ranking keys (similarity for neighbor selection, predicted preference for
//! offer ranking) are quantized to six decimals before comparison, the same
//! canonical precision used by every persisted score, so rankings are stable
//! under summation-order differences.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::churn::Segmentation;
use crate::dataset::{RatingsMatrix, RATING_MAX, RATING_MIN};
use crate::error::{Error, Result};
use crate::round6;

/// Cosine similarity over the co-rated offer set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    /// In [0, 1]; ratings are positive so the cosine cannot be negative.
    pub value: f64,
    /// |S_ij|, the number of offers rated by both customers.
    pub co_rated_count: usize,
}

/// Loyal neighbors of one risky customer, sorted by descending similarity
/// with ties broken by ascending customer id.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub risky_customer: String,
    pub neighbors: Vec<(String, SimilarityScore)>,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendedItem {
    pub offer_id: String,
    pub predicted_preference: f64,
    /// Number of neighbors whose rating supports this offer.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub risky_customer: String,
    pub items: Vec<RecommendedItem>,
}

impl RecommendationList {
    /// A risky customer with no valid neighbor or candidate offer.
    pub fn is_cold_start(&self) -> bool {
        self.items.is_empty()
    }
}

/// Neighborhood and ranking parameters.
#[derive(Debug, Clone)]
pub struct RetentionParams {
    pub top_k: usize,
    /// Maximum number of offers per recommendation list.
    pub max_recommendations: usize,
    /// A neighbor rating at or above this counts as having liked the offer.
    pub like_threshold: f64,
    /// Minimum |S_ij| for a similarity to be usable; |S_ij| = 1 makes the
    /// cosine degenerate (always 1), so the default is 2.
    pub min_co_rated: usize,
}

impl Default for RetentionParams {
    fn default() -> Self {
        RetentionParams {
            top_k: 10,
            max_recommendations: 5,
            like_threshold: 3.5,
            min_co_rated: 2,
        }
    }
}

/// Cosine over co-rated offers; `None` when the pair shares no offers or a
/// restricted vector has zero norm.
pub fn cosine_similarity(
    ratings_i: &BTreeMap<String, f64>,
    ratings_j: &BTreeMap<String, f64>,
) -> Option<SimilarityScore> {
    let mut dot = 0.0;
    let mut norm_i = 0.0;
    let mut norm_j = 0.0;
    let mut co_rated = 0usize;
    for (offer, ri) in ratings_i {
        if let Some(rj) = ratings_j.get(offer) {
            dot += ri * rj;
            norm_i += ri * ri;
            norm_j += rj * rj;
            co_rated += 1;
        }
    }
    if co_rated == 0 || norm_i == 0.0 || norm_j == 0.0 {
        return None;
    }
    let value = (dot / (norm_i.sqrt() * norm_j.sqrt())).clamp(0.0, 1.0);
    Some(SimilarityScore {
        value,
        co_rated_count: co_rated,
    })
}

/// Rank the loyal set against one risky customer and keep the top_k most
/// similar neighbors with at least `min_co_rated` co-rated offers.
pub fn build_neighborhood(
    customer_id: &str,
    segmentation: &Segmentation,
    ratings: &RatingsMatrix,
    top_k: usize,
    min_co_rated: usize,
) -> Result<Neighborhood> {
    if !segmentation.risky.contains(customer_id) {
        return Err(Error::NotRisky {
            customer_id: customer_id.to_string(),
        });
    }
    let empty = BTreeMap::new();
    let ratings_i = ratings.ratings_of(customer_id).unwrap_or(&empty);

    let mut neighbors: Vec<(String, SimilarityScore)> = Vec::new();
    for loyal_id in &segmentation.loyal {
        let Some(ratings_j) = ratings.ratings_of(loyal_id) else {
            continue;
        };
        if let Some(sim) = cosine_similarity(ratings_i, ratings_j) {
            if sim.co_rated_count >= min_co_rated {
                neighbors.push((loyal_id.clone(), sim));
            }
        }
    }
    neighbors.sort_by(|a, b| {
        round6(b.1.value)
            .partial_cmp(&round6(a.1.value))
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    neighbors.truncate(top_k);
    Ok(Neighborhood {
        risky_customer: customer_id.to_string(),
        neighbors,
        capacity: top_k,
    })
}

fn preference_with_support(
    offer_id: &str,
    neighborhood: &Neighborhood,
    ratings: &RatingsMatrix,
) -> Result<(f64, usize)> {
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut support = 0usize;
    for (neighbor, sim) in &neighborhood.neighbors {
        let Some(rating) = ratings.ratings_of(neighbor).and_then(|r| r.get(offer_id)) else {
            continue;
        };
        weighted += sim.value * rating;
        weight += sim.value;
        support += 1;
    }
    if support == 0 || weight <= 0.0 {
        return Err(Error::NoSupport {
            offer_id: offer_id.to_string(),
        });
    }
    Ok(((weighted / weight).clamp(RATING_MIN, RATING_MAX), support))
}

/// Similarity-weighted mean of neighbor ratings for one offer.
pub fn predicted_preference(
    offer_id: &str,
    neighborhood: &Neighborhood,
    ratings: &RatingsMatrix,
) -> Result<f64> {
    preference_with_support(offer_id, neighborhood, ratings).map(|(p, _)| p)
}

/// Rank candidate offers for one risky customer.
///
/// Candidates are offers rated at or above `like_threshold` by at least one
/// neighbor, minus offers the customer already rated. Ranking is by
/// predicted preference descending, ties by ascending offer id, truncated to
/// `max_items`. An empty list is a valid cold-start outcome.
pub fn recommend_offers(
    neighborhood: &Neighborhood,
    ratings: &RatingsMatrix,
    max_items: usize,
    like_threshold: f64,
) -> Result<RecommendationList> {
    let already_rated: BTreeSet<&str> = ratings
        .ratings_of(&neighborhood.risky_customer)
        .map(|r| r.keys().map(|s| s.as_str()).collect())
        .unwrap_or_default();

    let mut candidates: BTreeSet<&str> = BTreeSet::new();
    for (neighbor, _) in &neighborhood.neighbors {
        if let Some(rated) = ratings.ratings_of(neighbor) {
            for (offer, &value) in rated {
                if value >= like_threshold && !already_rated.contains(offer.as_str()) {
                    candidates.insert(offer);
                }
            }
        }
    }

    let mut items = Vec::with_capacity(candidates.len());
    for offer in candidates {
        let (pred, support) = preference_with_support(offer, neighborhood, ratings)?;
        items.push(RecommendedItem {
            offer_id: offer.to_string(),
            predicted_preference: round6(pred),
            support,
        });
    }
    items.sort_by(|a, b| {
        b.predicted_preference
            .partial_cmp(&a.predicted_preference)
            .unwrap()
            .then_with(|| a.offer_id.cmp(&b.offer_id))
    });
    items.truncate(max_items);

    Ok(RecommendationList {
        risky_customer: neighborhood.risky_customer.clone(),
        items,
    })
}

/// Recommendation lists for every risky customer, keyed by customer id.
pub fn recommend_all(
    segmentation: &Segmentation,
    ratings: &RatingsMatrix,
    params: &RetentionParams,
) -> Result<BTreeMap<String, RecommendationList>> {
    let mut out = BTreeMap::new();
    for risky_id in &segmentation.risky {
        let neighborhood = build_neighborhood(
            risky_id,
            segmentation,
            ratings,
            params.top_k,
            params.min_co_rated,
        )?;
        let list = recommend_offers(
            &neighborhood,
            ratings,
            params.max_recommendations,
            params.like_threshold,
        )?;
        out.insert(risky_id.clone(), list);
    }
    Ok(out)
}

#[derive(Serialize)]
struct RecommendationFile<'a> {
    customer_id: &'a str,
    items: Vec<ItemFile<'a>>,
    cold_start: bool,
}

#[derive(Serialize)]
struct ItemFile<'a> {
    offer_id: &'a str,
    score: f64,
    support: usize,
}

/// Write recommendation lists as a JSON array sorted by customer id.
pub fn write_recommendations(
    lists: &BTreeMap<String, RecommendationList>,
    path: &Path,
) -> Result<()> {
    let file: Vec<RecommendationFile> = lists
        .values()
        .map(|list| RecommendationFile {
            customer_id: &list.risky_customer,
            items: list
                .items
                .iter()
                .map(|item| ItemFile {
                    offer_id: &item.offer_id,
                    score: item.predicted_preference,
                    support: item.support,
                })
                .collect(),
            cold_start: list.is_cold_start(),
        })
        .collect();
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Json(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}
