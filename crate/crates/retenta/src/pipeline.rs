//! End-to-end orchestration: load → standardize → fit → score → segment →
//! cluster → evaluate → recommend, with deterministic report files.
//!
//! All computation happens before any file is written, and a failed write
//! removes whatever this run already wrote, so a failed run leaves no
//! partial outputs behind. Every numeric value in the report files is
//! derived from the inputs and the single config seed; stage wall times are
//! reported on stdout and in the returned summary only, and the persisted
//! `wall_ms` fields are fixed at zero so identical runs stay byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::churn::{self, ChurnModel, FitParams, RiskScore};
use crate::dataset::{
    build_feature_matrix, load_customers, load_ratings, standardize, CustomerTable, FeatureMatrix,
    ScalingParams,
};
use crate::error::{Error, Result};
use crate::profiler::{
    evaluate_clusters, kmeans_best_of, wcss_sweep, write_cluster_report, write_clusters, Clustering,
};
use crate::retention::{recommend_all, write_recommendations, RetentionParams};
use crate::round6;

pub const OUTPUT_DIR_ENV: &str = "RETENTA_OUTPUT_DIR";

/// Names of the files a pipeline run writes into the output directory.
pub const OUTPUT_FILES: [&str; 6] = [
    "model.json",
    "scores.csv",
    "clusters.csv",
    "cluster_report.json",
    "recommendations.json",
    "result.json",
];

/// Fully resolved configuration for one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub customers: PathBuf,
    pub ratings: PathBuf,
    pub output_dir: PathBuf,
    pub features: Vec<String>,
    pub fit: FitParams,
    pub risky_threshold: f64,
    pub loyal_threshold: f64,
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub retention: RetentionParams,
    pub min_cluster_fraction: f64,
}

/// Default feature spec: every schema column except the id and the label.
pub fn default_features() -> Vec<String> {
    [
        "age",
        "region",
        "tenure_days",
        "order_count",
        "total_spend",
        "days_since_last_order",
        "purchase_interval_mean",
        "nps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.customers.exists() {
            return Err(Error::InvalidConfig(format!(
                "customers file not found: {}",
                self.customers.display()
            )));
        }
        if !self.ratings.exists() {
            return Err(Error::InvalidConfig(format!(
                "ratings file not found: {}",
                self.ratings.display()
            )));
        }
        if self.loyal_threshold >= self.risky_threshold {
            return Err(Error::ThresholdOrder {
                loyal: self.loyal_threshold,
                risky: self.risky_threshold,
            });
        }
        if self.k == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("k and restarts must be >= 1".into()));
        }
        if self.features.is_empty() {
            return Err(Error::InvalidConfig("feature spec is empty".into()));
        }
        Ok(())
    }
}

/// Parse a `key = value` config file with `#` comments.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "config line {} is not 'key = value': {raw_line}",
                i + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Summary returned by a successful run. Wall times here are real
/// measurements; the persisted result file zeroes them by design.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub model_alpha: f64,
    pub model_iterations: usize,
    pub model_final_loss: f64,
    pub score_count: usize,
    pub mean_probability: f64,
    pub risky_count: usize,
    pub loyal_count: usize,
    pub neither_count: usize,
    pub k: usize,
    pub wcss: f64,
    pub cluster_sizes: Vec<usize>,
    pub served: usize,
    pub cold_start: usize,
    pub stage_wall_ms: Vec<(&'static str, u64)>,
}

/// Standardized clustering inputs: features plus the churn probability as
/// one extra pass-through column.
pub fn build_clustering_inputs(
    table: &CustomerTable,
    features: &[String],
    scores: &[RiskScore],
) -> Result<(FeatureMatrix, ScalingParams)> {
    let raw = build_feature_matrix(table, features)?;
    let (std_features, params) = standardize(&raw)?;
    let by_id: BTreeMap<&str, f64> = scores
        .iter()
        .map(|s| (s.customer_id.as_str(), s.churn_probability))
        .collect();
    let mut probs = Vec::with_capacity(table.len());
    for id in table.ids() {
        let p = by_id.get(id).copied().ok_or_else(|| Error::MissingScore {
            customer_id: id.to_string(),
        })?;
        probs.push(p);
    }
    let points = std_features.with_column("churn_probability", &probs)?;
    Ok((points, params.extended(1)))
}

struct StageClock {
    times: Vec<(&'static str, u64)>,
    started: Instant,
}

impl StageClock {
    fn new() -> StageClock {
        StageClock {
            times: Vec::new(),
            started: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let elapsed = self.started.elapsed().as_millis() as u64;
        self.times.push((stage, elapsed));
        self.started = Instant::now();
    }
}

/// Run the full three-stage platform and write all six report files.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult> {
    config.validate()?;
    let mut clock = StageClock::new();

    let table = load_customers(&config.customers, &CustomerTable::default_schema())
        .map_err(|e| e.in_stage("load"))?;
    let ratings = load_ratings(&config.ratings).map_err(|e| e.in_stage("load"))?;
    clock.lap("load");

    let raw_features =
        build_feature_matrix(&table, &config.features).map_err(|e| e.in_stage("standardize"))?;
    let (std_features, scaling) =
        standardize(&raw_features).map_err(|e| e.in_stage("standardize"))?;
    clock.lap("standardize");

    let labels = table.labels().map_err(|e| e.in_stage("fit"))?;
    let model =
        churn::fit(&std_features, &labels, &scaling, &config.fit).map_err(|e| e.in_stage("fit"))?;
    clock.lap("fit");

    let scores = model.score_all(&table).map_err(|e| e.in_stage("score"))?;
    clock.lap("score");

    let segmentation = churn::segment(&scores, config.risky_threshold, config.loyal_threshold)
        .map_err(|e| e.in_stage("segment"))?;
    clock.lap("segment");

    let (points, cluster_scaling) = build_clustering_inputs(&table, &config.features, &scores)
        .map_err(|e| e.in_stage("cluster"))?;
    let clustering = kmeans_best_of(&points, config.k, config.restarts, config.seed)
        .map_err(|e| e.in_stage("cluster"))?;
    clock.lap("cluster");

    let mut report = evaluate_clusters(
        &clustering,
        &table,
        &scores,
        &cluster_scaling,
        &points.column_names,
        config.min_cluster_fraction,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    report.wcss_sweep = wcss_sweep(&points, 2, 10, config.restarts, config.seed)
        .map_err(|e| e.in_stage("evaluate"))?;
    clock.lap("evaluate");

    let recommendations = recommend_all(&segmentation, &ratings, &config.retention)
        .map_err(|e| e.in_stage("recommend"))?;
    clock.lap("recommend");

    let served = recommendations
        .values()
        .filter(|l| !l.is_cold_start())
        .count();
    let cold_start = recommendations.len() - served;
    let result = PipelineResult {
        model_alpha: model.alpha,
        model_iterations: model.training.iterations,
        model_final_loss: model.training.final_loss,
        score_count: scores.len(),
        mean_probability: if scores.is_empty() {
            0.0
        } else {
            round6(scores.iter().map(|s| s.churn_probability).sum::<f64>() / scores.len() as f64)
        },
        risky_count: segmentation.risky.len(),
        loyal_count: segmentation.loyal.len(),
        neither_count: scores.len() - segmentation.risky.len() - segmentation.loyal.len(),
        k: clustering.k,
        wcss: clustering.wcss,
        cluster_sizes: clustering.sizes(),
        served,
        cold_start,
        stage_wall_ms: clock.times.clone(),
    };

    write_outputs(
        config,
        &model,
        &scores,
        &clustering,
        &report,
        &recommendations,
        &result,
    )?;
    Ok(result)
}

#[derive(Serialize)]
struct ResultFile {
    stages: Vec<StageFile>,
    segment_sizes: SegmentSizes,
    clustering: ClusteringSummary,
    recommendations: RecommendationSummary,
}

#[derive(Serialize)]
struct StageFile {
    name: &'static str,
    wall_ms: u64,
}

#[derive(Serialize)]
struct SegmentSizes {
    risky: usize,
    loyal: usize,
    neither: usize,
}

#[derive(Serialize)]
struct ClusteringSummary {
    k: usize,
    wcss: f64,
}

#[derive(Serialize)]
struct RecommendationSummary {
    served: usize,
    cold_start: usize,
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    config: &PipelineConfig,
    model: &ChurnModel,
    scores: &[RiskScore],
    clustering: &Clustering,
    report: &crate::profiler::ClusterReport,
    recommendations: &BTreeMap<String, crate::retention::RecommendationList>,
    result: &PipelineResult,
) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    let path = |name: &str| config.output_dir.join(name);
    let mut written: Vec<PathBuf> = Vec::new();

    let mut write_all = || -> Result<()> {
        let p = path("model.json");
        model.write(&p)?;
        written.push(p);

        let p = path("scores.csv");
        churn::write_scores(scores, &p)?;
        written.push(p);

        let p = path("clusters.csv");
        write_clusters(clustering, &p)?;
        written.push(p);

        let p = path("cluster_report.json");
        write_cluster_report(report, &p)?;
        written.push(p);

        let p = path("recommendations.json");
        write_recommendations(recommendations, &p)?;
        written.push(p);

        let file = ResultFile {
            stages: result
                .stage_wall_ms
                .iter()
                .map(|&(name, _)| StageFile { name, wall_ms: 0 })
                .collect(),
            segment_sizes: SegmentSizes {
                risky: result.risky_count,
                loyal: result.loyal_count,
                neither: result.neither_count,
            },
            clustering: ClusteringSummary {
                k: result.k,
                wcss: round6(result.wcss),
            },
            recommendations: RecommendationSummary {
                served: result.served,
                cold_start: result.cold_start,
            },
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Json(e.to_string()))?;
        let p = path("result.json");
        std::fs::write(&p, json + "\n")?;
        written.push(p);
        Ok(())
    };

    if let Err(e) = write_all() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e.in_stage("write"));
    }
    Ok(())
}
