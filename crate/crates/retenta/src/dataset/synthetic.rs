//! Seeded synthetic population generator for desk-scale verification.
//!
//! The generator plants three recoverable structures:
//!
//! - **Gaussian blobs** in the numeric feature space (cluster structure),
//! - **churn labels** drawn from a known logistic model over the written
//!   feature values, with the intercept solved so the expected churn rate
//!   matches the configured fraction,
//! - **taste groups**, independent of the blobs: every customer rates
//!   offers of their own group high and everything else low.
//!
//! All draws come from one seeded ChaCha8 stream in a fixed order, so equal
//! seeds give byte-identical output.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CustomerRecord, CustomerTable, RatingsMatrix, NUMERIC_COLUMNS};
use crate::error::{Error, Result};

/// Nominal raw-unit (mean, sd) per numeric column, chosen so the planted
/// blobs stay inside each column's valid domain.
const NOMINAL: [(f64, f64); 7] = [
    (45.0, 5.0),     // age
    (1200.0, 220.0), // tenure_days
    (60.0, 11.0),    // order_count
    (2500.0, 450.0), // total_spend
    (80.0, 15.0),    // days_since_last_order
    (45.0, 8.0),     // purchase_interval_mean
    (5.5, 1.0),      // nps
];

const BLOB_SD: f64 = 0.4;
const CENTER_SPREAD: f64 = 3.0;
const CENTER_MIN_SEPARATION: f64 = 4.0;
const RATING_DENSITY: f64 = 0.55;

const REGIONS: [&str; 4] = ["E", "N", "S", "W"];

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_customers: usize,
    /// Target expected churn rate, in (0, 1).
    pub churn_fraction: f64,
    /// Number of planted blobs; also the number of taste groups.
    pub n_clusters: usize,
    pub n_offers: usize,
    /// Label temperature. 0 makes labels exactly `indicator(z > 0)`;
    /// larger values flip more labels near the decision boundary.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_customers: 300,
            churn_fraction: 0.3,
            n_clusters: 3,
            n_offers: 30,
            noise: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_customers == 0 || self.n_customers > 99_999 {
            return Err(Error::InvalidConfig(
                "n_customers must be in [1, 99999]".into(),
            ));
        }
        if !(self.churn_fraction > 0.0 && self.churn_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "churn_fraction must be in (0, 1)".into(),
            ));
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_customers {
            return Err(Error::InvalidConfig(
                "n_clusters must be in [1, n_customers]".into(),
            ));
        }
        if self.n_offers == 0 || self.n_offers > 999 {
            return Err(Error::InvalidConfig("n_offers must be in [1, 999]".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig("noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Everything the generator knows that the pipeline is later asked to recover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Intercept of the labeling model, in raw feature units.
    pub alpha: f64,
    /// Coefficients over `NUMERIC_COLUMNS`, in raw feature units.
    pub beta: Vec<f64>,
    /// Planted blob centers in raw feature units, over `NUMERIC_COLUMNS`.
    pub cluster_centers: Vec<Vec<f64>>,
    /// Planted blob index per customer, in table row order.
    pub cluster_assignments: Vec<usize>,
    /// Taste group per customer, drawn independently of the blobs.
    pub taste_groups: BTreeMap<String, usize>,
    /// Taste group per offer.
    pub offer_groups: BTreeMap<String, usize>,
    pub seed: u64,
}

#[derive(Serialize)]
struct GroundTruthFile<'a> {
    alpha: f64,
    beta: &'a [f64],
    cluster_centers: &'a [Vec<f64>],
    seed: u64,
}

impl GroundTruth {
    /// Linear score of the labeling model on a record's raw features.
    pub fn linear_score(&self, record: &CustomerRecord) -> f64 {
        let mut z = self.alpha;
        for (j, col) in NUMERIC_COLUMNS.iter().enumerate() {
            z += self.beta[j] * record.numeric(col).expect("numeric column");
        }
        z
    }

    /// Write the `alpha`/`beta`/`cluster_centers`/`seed` record as JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = GroundTruthFile {
            alpha: self.alpha,
            beta: &self.beta,
            cluster_centers: &self.cluster_centers,
            seed: self.seed,
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Json(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// One standard normal draw via Box-Muller; consumes exactly two uniforms.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (v * scale).round() / scale
}

/// Draw blob centers in standardized space, keeping them well separated.
fn draw_centers(rng: &mut ChaCha8Rng, k: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut accepted = None;
        for _attempt in 0..200 {
            let candidate: Vec<f64> = (0..dims)
                .map(|_| rng.random_range(-CENTER_SPREAD..CENTER_SPREAD))
                .collect();
            let ok = centers.iter().all(|c| {
                let d2: f64 = c
                    .iter()
                    .zip(&candidate)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt() >= CENTER_MIN_SEPARATION
            });
            if ok {
                accepted = Some(candidate);
                break;
            }
        }
        // After 200 rejections take the last candidate; with k small relative
        // to the volume this effectively never happens.
        let center = accepted.unwrap_or_else(|| {
            (0..dims)
                .map(|_| rng.random_range(-CENTER_SPREAD..CENTER_SPREAD))
                .collect()
        });
        centers.push(center);
    }
    centers
}

/// Solve for the intercept that makes the mean label probability equal the
/// configured churn fraction.
fn solve_alpha(scores: &[f64], fraction: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        // Exactly round(fraction * n) positive scores, split between order
        // statistics.
        let n = scores.len();
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
        if n == 1 {
            return if fraction >= 0.5 {
                -sorted[0] + 1.0
            } else {
                -sorted[0] - 1.0
            };
        }
        return -(sorted[k - 1] + sorted[k]) / 2.0;
    }
    let mean_p = |alpha: f64| -> f64 {
        scores
            .iter()
            .map(|s| sigmoid((alpha + s) / noise))
            .sum::<f64>()
            / scores.len() as f64
    };
    let span = scores.iter().fold(0f64, |acc, s| acc.max(s.abs())).max(1.0);
    let mut lo = -span - 50.0 * noise.max(1.0);
    let mut hi = span + 50.0 * noise.max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generate a seeded synthetic population with recorded ground truth.
pub fn generate_synthetic(
    config: &SyntheticConfig,
) -> Result<(CustomerTable, RatingsMatrix, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims = NUMERIC_COLUMNS.len();

    // 1. Planted structure: blob centers and labeling coefficients.
    let centers_std = draw_centers(&mut rng, config.n_clusters, dims);
    let beta_std: Vec<f64> = (0..dims)
        .map(|_| {
            let magnitude = rng.random_range(0.8..1.6);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let beta_raw: Vec<f64> = beta_std
        .iter()
        .zip(NOMINAL.iter())
        .map(|(b, (_, sd))| b / sd)
        .collect();

    // 2. Customers: blob membership, region, and blob-centered features.
    let mut records = Vec::with_capacity(config.n_customers);
    let mut assignments = Vec::with_capacity(config.n_customers);
    for i in 0..config.n_customers {
        let blob = rng.random_range(0..config.n_clusters);
        let region = REGIONS[rng.random_range(0..REGIONS.len())];
        let mut raw = [0f64; 7];
        for (j, value) in raw.iter_mut().enumerate() {
            let std_value = centers_std[blob][j] + BLOB_SD * normal(&mut rng);
            let (mean, sd) = NOMINAL[j];
            *value = mean + sd * std_value;
        }
        let record = CustomerRecord {
            customer_id: format!("C{i:05}"),
            age: raw[0].round().clamp(18.0, 95.0),
            region: region.to_string(),
            tenure_days: raw[1].round().clamp(1.0, 5000.0),
            order_count: raw[2].round().clamp(0.0, 500.0),
            total_spend: round_to(raw[3], 2).clamp(0.0, 100_000.0),
            days_since_last_order: raw[4].round().clamp(0.0, 2000.0),
            purchase_interval_mean: round_to(raw[5], 1).clamp(1.0, 365.0),
            nps: raw[6].round().clamp(0.0, 10.0),
            churn_label: None,
            churn_reason: None,
        };
        records.push(record);
        assignments.push(blob);
    }

    // 3. Labels from the written feature values so that ground truth applies
    //    to the CSV exactly as persisted.
    let partial_scores: Vec<f64> = records
        .iter()
        .map(|r| {
            let mut s = 0.0;
            for (j, col) in NUMERIC_COLUMNS.iter().enumerate() {
                s += beta_raw[j] * r.numeric(col).unwrap();
            }
            s
        })
        .collect();
    let alpha = solve_alpha(&partial_scores, config.churn_fraction, config.noise);
    for (record, s) in records.iter_mut().zip(&partial_scores) {
        let z = alpha + s;
        let p = if config.noise == 0.0 {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            sigmoid(z / config.noise)
        };
        let u: f64 = rng.random();
        record.churn_label = Some(u8::from(u < p));
    }

    // 4. Taste groups drawn independently of the feature blobs. Churn risk
    //    follows the blobs, so tying tastes to blobs would leave risky
    //    customers without same-taste loyal peers; independent draws keep
    //    every taste group represented on both sides of the split.
    let taste: Vec<usize> = (0..config.n_customers)
        .map(|_| rng.random_range(0..config.n_clusters))
        .collect();

    // 5. Ratings correlated within taste groups.
    let offer_ids: Vec<String> = (0..config.n_offers).map(|j| format!("O{j:03}")).collect();
    let mut ratings = RatingsMatrix::new();
    for id in &offer_ids {
        ratings.register_offer(id);
    }
    for (i, record) in records.iter().enumerate() {
        let group = taste[i];
        for (j, offer_id) in offer_ids.iter().enumerate() {
            let u_rate: f64 = rng.random();
            if u_rate >= RATING_DENSITY {
                continue;
            }
            let u_val: f64 = rng.random();
            let value = if j % config.n_clusters == group {
                4.5 + (u_val - 0.5) * 1.0
            } else {
                1.9 + (u_val - 0.5) * 1.2
            };
            let rating = (round_to(value * 2.0, 0) / 2.0).clamp(1.0, 5.0);
            ratings.insert(&record.customer_id, offer_id, rating)?;
        }
    }

    let cluster_centers: Vec<Vec<f64>> = centers_std
        .iter()
        .map(|c| {
            c.iter()
                .zip(NOMINAL.iter())
                .map(|(v, (mean, sd))| mean + sd * v)
                .collect()
        })
        .collect();
    let taste_groups = records
        .iter()
        .zip(&taste)
        .map(|(r, &g)| (r.customer_id.clone(), g))
        .collect();
    let offer_groups = offer_ids
        .iter()
        .enumerate()
        .map(|(j, id)| (id.clone(), j % config.n_clusters))
        .collect();

    Ok((
        CustomerTable { rows: records },
        ratings,
        GroundTruth {
            alpha,
            beta: beta_raw,
            cluster_centers,
            cluster_assignments: assignments,
            taste_groups,
            offer_groups,
            seed: config.seed,
        },
    ))
}
