//! Population profiling: k-means over standardized features (plus the churn
//! probability as one extra column), cluster validation reports, and a naive
//! single-linkage baseline for the runtime comparison.

mod agglomerative;
mod kmeans;

pub use agglomerative::{agglomerative_cluster, AGGLOMERATIVE_MAX_POINTS};
pub use kmeans::{kmeans, kmeans_best_of};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::churn::RiskScore;
use crate::dataset::{CustomerTable, FeatureMatrix, ScalingParams};
use crate::error::{Error, Result};
use crate::round6;

/// A hard partition of the input points.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input row, aligned with `row_ids`.
    pub assignments: Vec<usize>,
    pub row_ids: Vec<String>,
    /// Within-cluster sum of squares of the returned partition.
    pub wcss: f64,
    pub iterations_run: usize,
    pub seed: u64,
    /// Objective value after each iteration; non-increasing.
    pub wcss_trace: Vec<f64>,
}

impl Clustering {
    pub fn assignment_map(&self) -> BTreeMap<&str, usize> {
        self.row_ids
            .iter()
            .map(|s| s.as_str())
            .zip(self.assignments.iter().copied())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Recompute the objective from points, assignments, and centroids.
pub fn wcss_of(points: &FeatureMatrix, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .rows()
        .zip(assignments)
        .map(|(row, &a)| sq_dist(row, &centroids[a]))
        .sum()
}

/// Deterministic child seed for restart / sweep streams; restart r of
/// `kmeans_best_of(seed)` runs `kmeans` with `derive_seed(seed, r)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn splitmix64(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(master ^ splitmix64(index))
}

/// Three-part cluster validation: segment sizes, descriptive
/// centroid profiles in original units, and summaries of variables not used
/// in clustering.
#[derive(Debug, Clone)]
pub struct ClusterReport {
    pub k: usize,
    pub wcss: f64,
    pub sizes: Vec<usize>,
    /// Per-cluster centroid profile, un-standardized to original units.
    pub profiles: Vec<BTreeMap<String, f64>>,
    pub external_vars: Vec<ExternalVars>,
    /// Clusters whose size falls below the minimum fraction.
    pub flagged_small: Vec<usize>,
    /// Objective values over a k sweep, for manual elbow selection.
    pub wcss_sweep: Vec<(usize, f64)>,
}

/// Summary of variables not used during clustering.
#[derive(Debug, Clone)]
pub struct ExternalVars {
    pub mean_churn_probability: f64,
    /// Observed churn-label rate; `None` when no member carries a label.
    pub churn_rate: Option<f64>,
}

/// Default minimum cluster-size fraction before a cluster is flagged.
pub const DEFAULT_MIN_CLUSTER_FRACTION: f64 = 0.01;

/// Validate a clustering against the customer table it was built from.
///
/// `scaling` must cover every clustering column (identity entries for
/// pass-through columns such as the churn probability).
pub fn evaluate_clusters(
    clustering: &Clustering,
    table: &CustomerTable,
    scores: &[RiskScore],
    scaling: &ScalingParams,
    column_names: &[String],
    min_fraction: f64,
) -> Result<ClusterReport> {
    if clustering.row_ids.len() != table.len() {
        return Err(Error::AssignmentMismatch(format!(
            "{} assignments for {} customers",
            clustering.row_ids.len(),
            table.len()
        )));
    }
    for (id, row) in clustering.row_ids.iter().zip(&table.rows) {
        if id != &row.customer_id {
            return Err(Error::AssignmentMismatch(format!(
                "row order mismatch at customer '{}'",
                row.customer_id
            )));
        }
    }
    let dims = clustering.centroids.first().map_or(0, |c| c.len());
    if scaling.len() != dims || column_names.len() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: scaling.len(),
        });
    }
    let score_map: BTreeMap<&str, f64> = scores
        .iter()
        .map(|s| (s.customer_id.as_str(), s.churn_probability))
        .collect();

    let sizes = clustering.sizes();
    let n = table.len();

    let profiles = clustering
        .centroids
        .iter()
        .map(|centroid| {
            centroid
                .iter()
                .enumerate()
                .map(|(j, &v)| (column_names[j].clone(), round6(scaling.unscale_value(j, v))))
                .collect()
        })
        .collect();

    let mut prob_sum = vec![0.0; clustering.k];
    let mut label_sum = vec![0.0; clustering.k];
    let mut label_count = vec![0usize; clustering.k];
    for (row, &a) in table.rows.iter().zip(&clustering.assignments) {
        let p = score_map
            .get(row.customer_id.as_str())
            .copied()
            .ok_or_else(|| Error::MissingScore {
                customer_id: row.customer_id.clone(),
            })?;
        prob_sum[a] += p;
        if let Some(label) = row.churn_label {
            label_sum[a] += f64::from(label);
            label_count[a] += 1;
        }
    }
    let external_vars = (0..clustering.k)
        .map(|c| ExternalVars {
            mean_churn_probability: if sizes[c] > 0 {
                round6(prob_sum[c] / sizes[c] as f64)
            } else {
                0.0
            },
            churn_rate: (label_count[c] > 0).then(|| round6(label_sum[c] / label_count[c] as f64)),
        })
        .collect();

    let flagged_small = (0..clustering.k)
        .filter(|&c| (sizes[c] as f64) < min_fraction * n as f64)
        .collect();

    Ok(ClusterReport {
        k: clustering.k,
        wcss: clustering.wcss,
        sizes,
        profiles,
        external_vars,
        flagged_small,
        wcss_sweep: Vec::new(),
    })
}

/// Best-of-restarts objective for each k in `[k_min, k_max]`, for manual
/// elbow selection.
pub fn wcss_sweep(
    points: &FeatureMatrix,
    k_min: usize,
    k_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for k in k_min..=k_max.min(points.n_rows) {
        let c = kmeans_best_of(points, k, restarts, derive_seed(seed, 1000 + k as u64))?;
        out.push((k, c.wcss));
    }
    Ok(out)
}

/// Write `customer_id,cluster_index` rows, preserving input row order.
pub fn write_clusters(clustering: &Clustering, path: &Path) -> Result<()> {
    let mut out = String::from("customer_id,cluster_index\n");
    for (id, a) in clustering.row_ids.iter().zip(&clustering.assignments) {
        let _ = writeln!(out, "{id},{a}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a> {
    k: usize,
    wcss: f64,
    sizes: &'a [usize],
    profiles: &'a [BTreeMap<String, f64>],
    external_vars: Vec<ExternalFile>,
    wcss_sweep: Vec<SweepFile>,
}

#[derive(Serialize)]
struct ExternalFile {
    mean_churn_probability: f64,
    churn_rate: Option<f64>,
}

#[derive(Serialize)]
struct SweepFile {
    k: usize,
    wcss: f64,
}

/// Write the cluster report JSON with six-decimal reals.
pub fn write_cluster_report(report: &ClusterReport, path: &Path) -> Result<()> {
    let file = ReportFile {
        k: report.k,
        wcss: round6(report.wcss),
        sizes: &report.sizes,
        profiles: &report.profiles,
        external_vars: report
            .external_vars
            .iter()
            .map(|e| ExternalFile {
                mean_churn_probability: e.mean_churn_probability,
                churn_rate: e.churn_rate,
            })
            .collect(),
        wcss_sweep: report
            .wcss_sweep
            .iter()
            .map(|&(k, wcss)| SweepFile {
                k,
                wcss: round6(wcss),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Json(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Seeded Gaussian-blob point cloud for benchmarks and clustering tests.
pub fn make_blob_points(n: usize, d: usize, n_blobs: usize, seed: u64) -> Result<FeatureMatrix> {
    if n == 0 || d == 0 || n_blobs == 0 {
        return Err(Error::InvalidConfig(
            "blob points need n, d, n_blobs >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..n_blobs)
        .map(|_| (0..d).map(|_| rng.random_range(-8.0..8.0)).collect())
        .collect();
    let mut values = Vec::with_capacity(n * d);
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let c = rng.random_range(0..n_blobs);
        for &center in &centers[c] {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            values.push(center + z);
        }
        ids.push(format!("P{i:05}"));
    }
    FeatureMatrix::new(values, (0..d).map(|j| format!("x{j}")).collect(), ids)
}
