//! Logistic churn model: fitting, risk scoring, and population segmentation.
//!
//! The model is the textbook logistic curve over a standardized feature row,
//! fitted by batch gradient descent with a backtracking (Armijo) line search
//! so the recorded loss sequence never increases. The intercept is never
//! regularized.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_feature_matrix, CustomerTable, FeatureMatrix, ScalingParams};
use crate::error::{Error, Result};
use crate::round6;

/// Numerically stable logistic function, exact at 0 and bounded in [0, 1].
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Why gradient descent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopCondition {
    /// Gradient infinity-norm fell at or below the tolerance.
    GradientConverged,
    /// Iteration cap reached first.
    MaxIterations,
    /// Line search could not find a descent step above machine precision.
    StepVanished,
}

/// Fit-time diagnostics kept on the model but not persisted.
#[derive(Debug, Clone)]
pub struct TrainingInfo {
    pub iterations: usize,
    pub final_loss: f64,
    pub stop: StopCondition,
    /// Loss before each accepted step plus the final loss; non-increasing.
    pub loss_trace: Vec<f64>,
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone)]
pub struct FitParams {
    pub l2_lambda: f64,
    pub max_iters: usize,
    /// Stop when the gradient infinity-norm is at or below this.
    pub tolerance: f64,
    /// Initial line-search step.
    pub learning_rate: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            l2_lambda: 1e-4,
            max_iters: 500,
            tolerance: 1e-6,
            learning_rate: 1.0,
        }
    }
}

/// Fitted logistic churn model plus the scaling needed to apply it.
#[derive(Debug, Clone)]
pub struct ChurnModel {
    pub alpha: f64,
    pub beta: Vec<f64>,
    /// Expanded column names aligned with `beta` (one-hot columns included).
    pub feature_columns: Vec<String>,
    pub scaling: ScalingParams,
    pub l2_lambda: f64,
    pub training: TrainingInfo,
}

/// One customer's churn probability. Probabilities coming out of `score_all`
/// are quantized to six decimals, the canonical precision of every persisted
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskScore {
    pub customer_id: String,
    pub churn_probability: f64,
}

/// Disjoint risky / loyal split of the scored population.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub risky: BTreeSet<String>,
    pub loyal: BTreeSet<String>,
    pub risky_threshold: f64,
    pub loyal_threshold: f64,
}

impl ChurnModel {
    /// Linear score α + Σ bᵢxᵢ over an already-standardized row.
    pub fn predict_linear(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        let mut z = self.alpha;
        for (b, v) in self.beta.iter().zip(x) {
            z += b * v;
        }
        Ok(z)
    }

    /// Churn probability 1 / (1 + e^(−linear score)).
    pub fn predict_churn_probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.predict_linear(x)?))
    }

    /// Score every customer, preserving table order.
    pub fn score_all(&self, table: &CustomerTable) -> Result<Vec<RiskScore>> {
        let raw = build_feature_matrix(table, &self.feature_columns)?;
        let scaled = self.scaling.apply(&raw)?;
        let mut out = Vec::with_capacity(table.len());
        for (i, row) in scaled.rows().enumerate() {
            let p = self.predict_churn_probability(row)?;
            out.push(RiskScore {
                customer_id: scaled.row_ids[i].clone(),
                churn_probability: round6(p),
            });
        }
        Ok(out)
    }

    /// Persist as JSON with full-precision coefficients so that scoring from
    /// the file reproduces in-memory scores bit for bit.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            alpha: self.alpha,
            beta: self.beta.clone(),
            feature_columns: self.feature_columns.clone(),
            scaling: ScalingFile {
                mean: self.scaling.mean.clone(),
                sd: self.scaling.sd.clone(),
            },
            l2_lambda: self.l2_lambda,
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Json(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ChurnModel> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::Json(e.to_string()))?;
        if file.beta.len() != file.feature_columns.len() {
            return Err(Error::DimensionMismatch {
                expected: file.feature_columns.len(),
                got: file.beta.len(),
            });
        }
        Ok(ChurnModel {
            alpha: file.alpha,
            beta: file.beta,
            feature_columns: file.feature_columns,
            scaling: ScalingParams {
                mean: file.scaling.mean,
                sd: file.scaling.sd,
            },
            l2_lambda: file.l2_lambda,
            training: TrainingInfo {
                iterations: 0,
                final_loss: f64::NAN,
                stop: StopCondition::GradientConverged,
                loss_trace: Vec::new(),
            },
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    alpha: f64,
    beta: Vec<f64>,
    feature_columns: Vec<String>,
    scaling: ScalingFile,
    l2_lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct ScalingFile {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

fn check_dims(beta: &[f64], features: &FeatureMatrix, labels: &[u8]) -> Result<()> {
    if beta.len() != features.n_cols {
        return Err(Error::DimensionMismatch {
            expected: features.n_cols,
            got: beta.len(),
        });
    }
    if labels.len() != features.n_rows {
        return Err(Error::DimensionMismatch {
            expected: features.n_rows,
            got: labels.len(),
        });
    }
    Ok(())
}

/// Mean negative log-likelihood plus (λ/2)·‖β‖², without the gradient.
///
/// Uses the max(z,0) − z·y + ln(1 + e^(−|z|)) form, which is exact for
/// saturated predictions instead of overflowing.
pub fn loss_only(
    alpha: f64,
    beta: &[f64],
    features: &FeatureMatrix,
    labels: &[u8],
    l2_lambda: f64,
) -> Result<f64> {
    check_dims(beta, features, labels)?;
    let n = features.n_rows as f64;
    let mut loss = 0.0;
    for (row, &y) in features.rows().zip(labels) {
        let mut z = alpha;
        for (b, v) in beta.iter().zip(row) {
            z += b * v;
        }
        loss += z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p();
    }
    loss /= n;
    let penalty: f64 = beta.iter().map(|b| b * b).sum::<f64>() * l2_lambda / 2.0;
    Ok(loss + penalty)
}

/// Loss and its exact analytic gradient; the intercept is not regularized.
pub fn loss_and_gradient(
    alpha: f64,
    beta: &[f64],
    features: &FeatureMatrix,
    labels: &[u8],
    l2_lambda: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    check_dims(beta, features, labels)?;
    let n = features.n_rows as f64;
    let mut loss = 0.0;
    let mut grad_alpha = 0.0;
    let mut grad_beta = vec![0.0; beta.len()];
    for (row, &y) in features.rows().zip(labels) {
        let mut z = alpha;
        for (b, v) in beta.iter().zip(row) {
            z += b * v;
        }
        loss += z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p();
        let residual = sigmoid(z) - f64::from(y);
        grad_alpha += residual;
        for (g, v) in grad_beta.iter_mut().zip(row) {
            *g += residual * v;
        }
    }
    loss /= n;
    grad_alpha /= n;
    for (g, b) in grad_beta.iter_mut().zip(beta) {
        *g = *g / n + l2_lambda * b;
    }
    let penalty: f64 = beta.iter().map(|b| b * b).sum::<f64>() * l2_lambda / 2.0;
    Ok((loss + penalty, grad_alpha, grad_beta))
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Fit a logistic model on standardized features by batch gradient descent
/// with backtracking line search, starting from all-zero parameters.
pub fn fit(
    features: &FeatureMatrix,
    labels: &[u8],
    scaling: &ScalingParams,
    params: &FitParams,
) -> Result<ChurnModel> {
    if labels.len() != features.n_rows {
        return Err(Error::DimensionMismatch {
            expected: features.n_rows,
            got: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateLabels);
    }

    let mut alpha = 0.0;
    let mut beta = vec![0.0; features.n_cols];
    let mut trace = Vec::new();
    let mut stop = StopCondition::MaxIterations;
    let mut iterations = 0;

    let (mut loss, mut grad_alpha, mut grad_beta) =
        loss_and_gradient(alpha, &beta, features, labels, params.l2_lambda)?;
    trace.push(loss);

    for _ in 0..params.max_iters {
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let grad_inf = grad_beta
            .iter()
            .fold(grad_alpha.abs(), |acc, g| acc.max(g.abs()));
        if grad_inf <= params.tolerance {
            stop = StopCondition::GradientConverged;
            break;
        }

        let grad_sq: f64 = grad_alpha * grad_alpha + grad_beta.iter().map(|g| g * g).sum::<f64>();
        let mut step = params.learning_rate;
        let mut accepted = false;
        while step >= MIN_STEP {
            let cand_alpha = alpha - step * grad_alpha;
            let cand_beta: Vec<f64> = beta
                .iter()
                .zip(&grad_beta)
                .map(|(b, g)| b - step * g)
                .collect();
            let cand_loss = loss_only(cand_alpha, &cand_beta, features, labels, params.l2_lambda)?;
            if cand_loss.is_finite() && cand_loss <= loss - ARMIJO_C * step * grad_sq {
                alpha = cand_alpha;
                beta = cand_beta;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            stop = StopCondition::StepVanished;
            break;
        }
        iterations += 1;
        trace.push(loss);
        let refreshed = loss_and_gradient(alpha, &beta, features, labels, params.l2_lambda)?;
        loss = refreshed.0;
        grad_alpha = refreshed.1;
        grad_beta = refreshed.2;
    }

    Ok(ChurnModel {
        alpha,
        beta,
        feature_columns: features.column_names.clone(),
        scaling: scaling.clone(),
        l2_lambda: params.l2_lambda,
        training: TrainingInfo {
            iterations,
            final_loss: loss,
            stop,
            loss_trace: trace,
        },
    })
}

/// Split scored customers into the risky set I and the loyal set J.
///
/// Customers strictly between the thresholds belong to neither set. The
/// default loyal threshold of 0.10 encodes loyalty above 90%: a customer is
/// loyal when the churn probability is at most 0.10.
pub fn segment(
    scores: &[RiskScore],
    risky_threshold: f64,
    loyal_threshold: f64,
) -> Result<Segmentation> {
    if loyal_threshold >= risky_threshold {
        return Err(Error::ThresholdOrder {
            loyal: loyal_threshold,
            risky: risky_threshold,
        });
    }
    if !(0.0..=1.0).contains(&loyal_threshold) || !(0.0..=1.0).contains(&risky_threshold) {
        return Err(Error::InvalidConfig("thresholds must lie in [0, 1]".into()));
    }
    let mut risky = BTreeSet::new();
    let mut loyal = BTreeSet::new();
    for s in scores {
        if s.churn_probability >= risky_threshold {
            risky.insert(s.customer_id.clone());
        } else if s.churn_probability <= loyal_threshold {
            loyal.insert(s.customer_id.clone());
        }
    }
    Ok(Segmentation {
        risky,
        loyal,
        risky_threshold,
        loyal_threshold,
    })
}

/// Write scores as `customer_id,churn_probability` with six decimal places.
pub fn write_scores(scores: &[RiskScore], path: &Path) -> Result<()> {
    let mut out = String::from("customer_id,churn_probability\n");
    for s in scores {
        let _ = writeln!(out, "{},{:.6}", s.customer_id, s.churn_probability);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a scores file back, preserving row order.
pub fn load_scores(path: &Path) -> Result<Vec<RiskScore>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let id_col = headers
        .iter()
        .position(|h| h == "customer_id")
        .ok_or(Error::MissingColumn {
            column: "customer_id".into(),
        })?;
    let p_col = headers
        .iter()
        .position(|h| h == "churn_probability")
        .ok_or(Error::MissingColumn {
            column: "churn_probability".into(),
        })?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        let raw = record.get(p_col).unwrap_or("").trim();
        let p: f64 = raw.parse().map_err(|_| Error::NonNumericField {
            line,
            column: "churn_probability".into(),
            value: raw.to_string(),
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ValueOutOfRange {
                line,
                column: "churn_probability".into(),
                value: p,
                min: 0.0,
                max: 1.0,
            });
        }
        out.push(RiskScore {
            customer_id: record.get(id_col).unwrap_or("").trim().to_string(),
            churn_probability: p,
        });
    }
    Ok(out)
}
