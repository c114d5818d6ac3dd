//! Command-line front end.
//!
//! Every pipeline stage is exposed as its own subcommand so runs can be
//! reproduced stage by stage from persisted files; `pipeline` chains them
//! all. Exit codes: 0 on success, 1 for validation/usage problems, 2 for
//! runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::churn::{self, FitParams};
use crate::dataset::{
    self, generate_synthetic, load_customers, load_ratings, CustomerTable, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::pipeline::{
    self, build_clustering_inputs, default_features, parse_config_file, PipelineConfig,
    OUTPUT_DIR_ENV,
};
use crate::profiler::{
    agglomerative_cluster, evaluate_clusters, kmeans_best_of, make_blob_points, wcss_sweep,
    write_cluster_report, write_clusters, DEFAULT_MIN_CLUSTER_FRACTION,
};
use crate::retention::{recommend_all, write_recommendations, RetentionParams};

#[derive(Parser)]
#[command(
    name = "retenta",
    version,
    about = "Batch churn scoring, customer profiling, and retention-offer recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic bundle (customers, ratings, ground truth)
    Synth(SynthArgs),
    /// Fit the logistic churn model and write model.json
    Train(TrainArgs),
    /// Score customers with a trained model and write scores.csv
    Score(ScoreArgs),
    /// Split scored customers into risky and loyal sets
    Segment(SegmentArgs),
    /// Cluster customers and write clusters.csv plus cluster_report.json
    Cluster(ClusterArgs),
    /// Produce retention offers for risky customers
    Recommend(RecommendArgs),
    /// Run all stages end to end from a config file
    Pipeline(Box<PipelineArgs>),
    /// Time k-means against the naive single-linkage baseline
    BenchClustering(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Population size
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    churn_fraction: f64,
    /// Planted blob / taste-group count
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 30)]
    offers: usize,
    /// Label temperature; 0 gives noiseless threshold labels
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory (falls back to RETENTA_OUTPUT_DIR)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitFlags {
    #[arg(long, default_value_t = 1e-4)]
    l2_lambda: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
}

impl FitFlags {
    fn params(&self) -> FitParams {
        FitParams {
            l2_lambda: self.l2_lambda,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    customers: PathBuf,
    /// Comma-separated feature columns
    #[arg(long)]
    features: Option<String>,
    #[command(flatten)]
    fit: FitFlags,
    /// Where to write model.json
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    customers: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "scores.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    risky: f64,
    #[arg(long, default_value_t = 0.10)]
    loyal: f64,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    customers: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    features: Option<String>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_CLUSTER_FRACTION)]
    min_fraction: f64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    risky: f64,
    #[arg(long, default_value_t = 0.10)]
    loyal: f64,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 5)]
    max_recommendations: usize,
    #[arg(long, default_value_t = 3.5)]
    like_threshold: f64,
    #[arg(long, default_value_t = 2)]
    min_co_rated: usize,
    #[arg(long, default_value = "recommendations.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// key = value config file; flags below override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    customers: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    l2_lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    risky: Option<f64>,
    #[arg(long)]
    loyal: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    max_recommendations: Option<usize>,
    #[arg(long)]
    like_threshold: Option<f64>,
    #[arg(long)]
    min_co_rated: Option<usize>,
    #[arg(long)]
    min_fraction: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

/// Parse argv and run; returns the process exit code.
pub fn cli_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "output directory required (--out-dir flag or {OUTPUT_DIR_ENV})"
            ))
        })
}

fn split_features(raw: Option<&str>) -> Vec<String> {
    match raw {
        Some(s) => s
            .split(',')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect(),
        None => default_features(),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => {
            let out_dir = resolve_out_dir(args.out_dir)?;
            let config = SyntheticConfig {
                n_customers: args.n,
                churn_fraction: args.churn_fraction,
                n_clusters: args.clusters,
                n_offers: args.offers,
                noise: args.noise,
                seed: args.seed,
            };
            let (table, ratings, truth) = generate_synthetic(&config)?;
            std::fs::create_dir_all(&out_dir)?;
            dataset::write_customers(&table, &out_dir.join("customers.csv"))?;
            dataset::write_ratings(&ratings, &out_dir.join("ratings.csv"))?;
            truth.write(&out_dir.join("ground_truth.json"))?;
            println!(
                "wrote {} customers, {} ratings, ground truth to {}",
                table.len(),
                ratings.n_entries(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Train(args) => {
            let table = load_customers(&args.customers, &CustomerTable::default_schema())?;
            let features = split_features(args.features.as_deref());
            let raw = dataset::build_feature_matrix(&table, &features)?;
            let (std_features, scaling) = dataset::standardize(&raw)?;
            let labels = table.labels()?;
            let model = churn::fit(&std_features, &labels, &scaling, &args.fit.params())?;
            model.write(&args.out)?;
            println!(
                "fitted {} coefficients in {} iterations (final loss {:.6}); wrote {}",
                model.beta.len(),
                model.training.iterations,
                model.training.final_loss,
                args.out.display()
            );
            Ok(())
        }
        Command::Score(args) => {
            let table = load_customers(&args.customers, &CustomerTable::default_schema())?;
            let model = churn::ChurnModel::load(&args.model)?;
            let scores = model.score_all(&table)?;
            churn::write_scores(&scores, &args.out)?;
            println!(
                "scored {} customers; wrote {}",
                scores.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Segment(args) => {
            let scores = churn::load_scores(&args.scores)?;
            let segmentation = churn::segment(&scores, args.risky, args.loyal)?;
            let neither = scores.len() - segmentation.risky.len() - segmentation.loyal.len();
            println!(
                "risky={} loyal={} neither={}",
                segmentation.risky.len(),
                segmentation.loyal.len(),
                neither
            );
            Ok(())
        }
        Command::Cluster(args) => {
            let out_dir = resolve_out_dir(args.out_dir)?;
            let table = load_customers(&args.customers, &CustomerTable::default_schema())?;
            let scores = churn::load_scores(&args.scores)?;
            let features = split_features(args.features.as_deref());
            let (points, scaling) = build_clustering_inputs(&table, &features, &scores)?;
            let clustering = kmeans_best_of(&points, args.k, args.restarts, args.seed)?;
            let mut report = evaluate_clusters(
                &clustering,
                &table,
                &scores,
                &scaling,
                &points.column_names,
                args.min_fraction,
            )?;
            report.wcss_sweep = wcss_sweep(&points, 2, 10, args.restarts, args.seed)?;
            std::fs::create_dir_all(&out_dir)?;
            write_clusters(&clustering, &out_dir.join("clusters.csv"))?;
            write_cluster_report(&report, &out_dir.join("cluster_report.json"))?;
            println!(
                "k={} wcss={:.6} sizes={:?}",
                clustering.k,
                clustering.wcss,
                clustering.sizes()
            );
            Ok(())
        }
        Command::Recommend(args) => {
            let ratings = load_ratings(&args.ratings)?;
            let scores = churn::load_scores(&args.scores)?;
            let segmentation = churn::segment(&scores, args.risky, args.loyal)?;
            let params = RetentionParams {
                top_k: args.top_k,
                max_recommendations: args.max_recommendations,
                like_threshold: args.like_threshold,
                min_co_rated: args.min_co_rated,
            };
            let lists = recommend_all(&segmentation, &ratings, &params)?;
            write_recommendations(&lists, &args.out)?;
            let cold = lists.values().filter(|l| l.is_cold_start()).count();
            println!(
                "recommended for {} risky customers ({} cold start); wrote {}",
                lists.len(),
                cold,
                args.out.display()
            );
            Ok(())
        }
        Command::Pipeline(args) => {
            let args = *args;
            let config = resolve_pipeline_config(args)?;
            let result = pipeline::run_pipeline(&config)?;
            for (stage, ms) in &result.stage_wall_ms {
                println!("stage {stage}: {ms} ms");
            }
            println!(
                "scores: {} customers, mean churn probability {:.6}",
                result.score_count, result.mean_probability
            );
            println!(
                "segments: risky={} loyal={} neither={}",
                result.risky_count, result.loyal_count, result.neither_count
            );
            println!(
                "clustering: k={} wcss={:.6} sizes={:?}",
                result.k, result.wcss, result.cluster_sizes
            );
            println!(
                "recommendations: served={} cold_start={}",
                result.served, result.cold_start
            );
            Ok(())
        }
        Command::BenchClustering(args) => {
            let points = make_blob_points(args.n, args.d, args.k, args.seed)?;

            let started = Instant::now();
            let km = kmeans_best_of(&points, args.k, args.restarts, args.seed)?;
            let kmeans_ms = started.elapsed().as_millis();

            let started = Instant::now();
            let agg = agglomerative_cluster(&points, args.k)?;
            let agglomerative_ms = started.elapsed().as_millis();

            println!("kmeans_wall_ms={kmeans_ms}");
            println!("agglomerative_wall_ms={agglomerative_ms}");
            println!(
                "k-means best-of-{} wcss {:.3}; single-linkage wcss {:.3}",
                args.restarts, km.wcss, agg.wcss
            );
            println!("kmeans_faster={}", kmeans_ms < agglomerative_ms);
            Ok(())
        }
    }
}

const CONFIG_KEYS: [&str; 18] = [
    "customers",
    "ratings",
    "output_dir",
    "features",
    "l2_lambda",
    "max_iters",
    "tolerance",
    "learning_rate",
    "risky_threshold",
    "loyal_threshold",
    "k",
    "restarts",
    "seed",
    "top_k",
    "max_recommendations",
    "like_threshold",
    "min_co_rated",
    "min_cluster_fraction",
];

fn resolve_pipeline_config(args: PipelineArgs) -> Result<PipelineConfig> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => Default::default(),
    };
    for key in file.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidConfig(format!("unknown config key '{key}'")));
        }
    }
    let get = |key: &str| file.get(key).map(|s| s.as_str());

    fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {raw}")))
    }
    macro_rules! resolve {
        ($flag:expr, $key:literal, $default:expr) => {
            match ($flag, get($key)) {
                (Some(v), _) => v,
                (None, Some(raw)) => parse($key, raw)?,
                (None, None) => $default,
            }
        };
    }

    let customers: PathBuf = match (args.customers, get("customers")) {
        (Some(p), _) => p,
        (None, Some(raw)) => PathBuf::from(raw),
        (None, None) => return Err(Error::InvalidConfig("customers path required".into())),
    };
    let ratings: PathBuf = match (args.ratings, get("ratings")) {
        (Some(p), _) => p,
        (None, Some(raw)) => PathBuf::from(raw),
        (None, None) => return Err(Error::InvalidConfig("ratings path required".into())),
    };
    let output_dir = resolve_out_dir(
        args.out_dir
            .or_else(|| get("output_dir").map(PathBuf::from)),
    )?;
    let features = match (args.features.as_deref(), get("features")) {
        (Some(raw), _) => split_features(Some(raw)),
        (None, Some(raw)) => split_features(Some(raw)),
        (None, None) => default_features(),
    };

    let defaults_fit = FitParams::default();
    let defaults_retention = RetentionParams::default();
    Ok(PipelineConfig {
        customers,
        ratings,
        output_dir,
        features,
        fit: FitParams {
            l2_lambda: resolve!(args.l2_lambda, "l2_lambda", defaults_fit.l2_lambda),
            max_iters: resolve!(args.max_iters, "max_iters", defaults_fit.max_iters),
            tolerance: resolve!(args.tolerance, "tolerance", defaults_fit.tolerance),
            learning_rate: resolve!(
                args.learning_rate,
                "learning_rate",
                defaults_fit.learning_rate
            ),
        },
        risky_threshold: resolve!(args.risky, "risky_threshold", 0.5),
        loyal_threshold: resolve!(args.loyal, "loyal_threshold", 0.10),
        k: resolve!(args.k, "k", 3),
        restarts: resolve!(args.restarts, "restarts", 5),
        seed: resolve!(args.seed, "seed", 7),
        retention: RetentionParams {
            top_k: resolve!(args.top_k, "top_k", defaults_retention.top_k),
            max_recommendations: resolve!(
                args.max_recommendations,
                "max_recommendations",
                defaults_retention.max_recommendations
            ),
            like_threshold: resolve!(
                args.like_threshold,
                "like_threshold",
                defaults_retention.like_threshold
            ),
            min_co_rated: resolve!(
                args.min_co_rated,
                "min_co_rated",
                defaults_retention.min_co_rated
            ),
        },
        min_cluster_fraction: resolve!(
            args.min_fraction,
            "min_cluster_fraction",
            DEFAULT_MIN_CLUSTER_FRACTION
        ),
    })
}
