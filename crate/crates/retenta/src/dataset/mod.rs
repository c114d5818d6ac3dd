//! Customer, rating, and feature-matrix handling.
//!
//! Ingestion is CSV-only (UTF-8, comma-separated, mandatory header row).
//! Validation fails loudly: missing numeric fields, out-of-range values,
//! and duplicate keys abort with the offending line number rather than
//! being imputed or silently dropped.

mod synthetic;

pub use synthetic::{generate_synthetic, GroundTruth, SyntheticConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Numeric columns of the canonical customer schema, in file order.
pub const NUMERIC_COLUMNS: [&str; 7] = [
    "age",
    "tenure_days",
    "order_count",
    "total_spend",
    "days_since_last_order",
    "purchase_interval_mean",
    "nps",
];

/// Categorical columns. `region` is required, `churn_reason` optional.
pub const CATEGORICAL_COLUMNS: [&str; 2] = ["region", "churn_reason"];

/// Required header, in canonical order.
pub const REQUIRED_COLUMNS: [&str; 9] = [
    "customer_id",
    "age",
    "region",
    "tenure_days",
    "order_count",
    "total_spend",
    "days_since_last_order",
    "purchase_interval_mean",
    "nps",
];

/// One ingested customer row.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerRecord {
    pub customer_id: String,
    pub age: f64,
    pub region: String,
    pub tenure_days: f64,
    pub order_count: f64,
    pub total_spend: f64,
    pub days_since_last_order: f64,
    pub purchase_interval_mean: f64,
    /// Net Promoter Score, 0–10.
    pub nps: f64,
    /// 1 = churned. Present only on training data.
    pub churn_label: Option<u8>,
    /// Optional historic attrition cause, usable as a one-hot feature.
    pub churn_reason: Option<String>,
}

impl CustomerRecord {
    /// Value of a numeric column by name.
    pub fn numeric(&self, column: &str) -> Option<f64> {
        match column {
            "age" => Some(self.age),
            "tenure_days" => Some(self.tenure_days),
            "order_count" => Some(self.order_count),
            "total_spend" => Some(self.total_spend),
            "days_since_last_order" => Some(self.days_since_last_order),
            "purchase_interval_mean" => Some(self.purchase_interval_mean),
            "nps" => Some(self.nps),
            _ => None,
        }
    }

    /// Value of a categorical column by name; `None` when the field is absent.
    pub fn categorical(&self, column: &str) -> Option<&str> {
        match column {
            "region" => Some(self.region.as_str()),
            "churn_reason" => self.churn_reason.as_deref(),
            _ => None,
        }
    }
}

/// Validated set of customer records, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomerTable {
    pub rows: Vec<CustomerRecord>,
}

impl CustomerTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.customer_id.as_str())
    }

    /// Churn labels for every row; training data must carry them all.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.rows
            .iter()
            .map(|r| {
                r.churn_label.ok_or(Error::MissingColumn {
                    column: "churn_label".into(),
                })
            })
            .collect()
    }

    /// The canonical schema expected by `load_customers`.
    pub fn default_schema() -> Vec<String> {
        REQUIRED_COLUMNS.iter().map(|c| c.to_string()).collect()
    }
}

/// Dense row-major feature matrix with aligned row ids and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    values: Vec<f64>,
    pub column_names: Vec<String>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    /// Build a matrix, rejecting non-finite entries and misaligned metadata.
    pub fn new(
        values: Vec<f64>,
        column_names: Vec<String>,
        row_ids: Vec<String>,
    ) -> Result<FeatureMatrix> {
        let n_rows = row_ids.len();
        let n_cols = column_names.len();
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite matrix entry {bad}"
            )));
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            values,
            column_names,
            row_ids,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols.max(1))
    }

    /// Append one extra column, keeping row alignment.
    pub fn with_column(&self, name: &str, column: &[f64]) -> Result<FeatureMatrix> {
        if column.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: column.len(),
            });
        }
        let mut values = Vec::with_capacity(self.n_rows * (self.n_cols + 1));
        for (i, row) in self.rows().enumerate() {
            values.extend_from_slice(row);
            values.push(column[i]);
        }
        let mut column_names = self.column_names.clone();
        column_names.push(name.to_string());
        FeatureMatrix::new(values, column_names, self.row_ids.clone())
    }
}

/// Per-column affine transform recorded at standardization time so that
/// scoring-time transforms match training-time exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub mean: Vec<f64>,
    /// Sample standard deviation (n − 1 denominator); 0 flags a constant column.
    pub sd: Vec<f64>,
}

impl ScalingParams {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.sd[j] == 0.0
    }

    /// Identity params (mean 0, sd 1) for columns that pass through unscaled.
    pub fn identity(n_cols: usize) -> ScalingParams {
        ScalingParams {
            mean: vec![0.0; n_cols],
            sd: vec![1.0; n_cols],
        }
    }

    /// Extend with identity entries for appended pass-through columns.
    pub fn extended(&self, extra: usize) -> ScalingParams {
        let mut out = self.clone();
        out.mean.extend(std::iter::repeat_n(0.0, extra));
        out.sd.extend(std::iter::repeat_n(1.0, extra));
        out
    }

    /// Apply the training-time transform to a matrix with matching columns.
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.n_cols != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: m.n_cols,
            });
        }
        let mut values = Vec::with_capacity(m.values.len());
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                values.push(self.scale_value(j, v));
            }
        }
        FeatureMatrix::new(values, m.column_names.clone(), m.row_ids.clone())
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        if self.is_constant(j) {
            0.0
        } else {
            (v - self.mean[j]) / self.sd[j]
        }
    }

    /// Invert the transform, mapping a standardized value back to original units.
    pub fn unscale_value(&self, j: usize, v: f64) -> f64 {
        if self.is_constant(j) {
            self.mean[j]
        } else {
            v * self.sd[j] + self.mean[j]
        }
    }
}

/// Sparse customer × offer ratings on a [1, 5] scale.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingsMatrix {
    by_customer: BTreeMap<String, BTreeMap<String, f64>>,
    catalog: BTreeSet<String>,
}

pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 5.0;

impl RatingsMatrix {
    pub fn new() -> RatingsMatrix {
        RatingsMatrix::default()
    }

    /// Register an offer in the catalog without requiring a rating.
    pub fn register_offer(&mut self, offer_id: &str) {
        self.catalog.insert(offer_id.to_string());
    }

    /// Insert one rating, enforcing the range and at-most-one-per-pair invariants.
    pub fn insert(&mut self, customer_id: &str, offer_id: &str, rating: f64) -> Result<()> {
        if !(RATING_MIN..=RATING_MAX).contains(&rating) {
            return Err(Error::RatingOutOfRange { line: 0, rating });
        }
        let entry = self.by_customer.entry(customer_id.to_string()).or_default();
        if entry.contains_key(offer_id) {
            return Err(Error::DuplicatePair {
                customer_id: customer_id.to_string(),
                offer_id: offer_id.to_string(),
                line: 0,
            });
        }
        entry.insert(offer_id.to_string(), rating);
        self.catalog.insert(offer_id.to_string());
        Ok(())
    }

    pub fn ratings_of(&self, customer_id: &str) -> Option<&BTreeMap<String, f64>> {
        self.by_customer.get(customer_id)
    }

    pub fn customers(&self) -> impl Iterator<Item = &str> {
        self.by_customer.keys().map(|s| s.as_str())
    }

    /// Sorted offer catalog.
    pub fn catalog(&self) -> impl Iterator<Item = &str> {
        self.catalog.iter().map(|s| s.as_str())
    }

    pub fn n_entries(&self) -> usize {
        self.by_customer.values().map(|m| m.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

fn header_of(rdr: &mut csv::Reader<std::fs::File>) -> Result<Vec<String>> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}

fn column_index(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn parse_numeric(raw: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::NonNumericField {
        line,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonNumericField {
            line,
            column: column.to_string(),
            value: raw.to_string(),
        });
    }
    Ok(v)
}

/// Load and validate a customer CSV file.
///
/// `schema` lists the columns the caller expects; the header must contain
/// each of them. The optional `churn_label` and `churn_reason` columns are
/// picked up when present. Any other header column is rejected.
pub fn load_customers(path: &Path, schema: &[String]) -> Result<CustomerTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let header = header_of(&mut rdr)?;

    for col in schema {
        if !REQUIRED_COLUMNS.contains(&col.as_str()) {
            return Err(Error::UnknownColumn {
                column: col.clone(),
            });
        }
        if column_index(&header, col).is_none() {
            return Err(Error::MissingColumn {
                column: col.clone(),
            });
        }
    }
    for (i, col) in header.iter().enumerate() {
        let known = REQUIRED_COLUMNS.contains(&col.as_str())
            || col == "churn_label"
            || col == "churn_reason";
        if !known {
            return Err(Error::UnknownColumn {
                column: col.clone(),
            });
        }
        if header[..i].contains(col) {
            return Err(Error::Csv(format!("duplicated header column '{col}'")));
        }
    }

    let idx = |name: &str| column_index(&header, name);
    let id_col = idx("customer_id").ok_or(Error::MissingColumn {
        column: "customer_id".into(),
    })?;
    let region_col = idx("region").ok_or(Error::MissingColumn {
        column: "region".into(),
    })?;
    let label_col = idx("churn_label");
    let reason_col = idx("churn_reason");

    let mut numeric_cols = Vec::new();
    for name in NUMERIC_COLUMNS {
        let j = idx(name).ok_or(Error::MissingColumn {
            column: name.into(),
        })?;
        numeric_cols.push((name, j));
    }

    let mut rows = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2; // header is line 1
        let record = record.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        let field = |j: usize| record.get(j).unwrap_or("").trim();

        let customer_id = field(id_col).to_string();
        if customer_id.is_empty() {
            return Err(Error::NonNumericField {
                line,
                column: "customer_id".into(),
                value: String::new(),
            });
        }
        if let Some(first) = seen.insert(customer_id.clone(), line) {
            let _ = first;
            return Err(Error::DuplicateId {
                id: customer_id,
                line,
            });
        }

        let mut values = BTreeMap::new();
        for &(name, j) in &numeric_cols {
            values.insert(name, parse_numeric(field(j), line, name)?);
        }
        let nps = values["nps"];
        if !(0.0..=10.0).contains(&nps) {
            return Err(Error::ValueOutOfRange {
                line,
                column: "nps".into(),
                value: nps,
                min: 0.0,
                max: 10.0,
            });
        }

        let churn_label = match label_col.map(&field) {
            None => None,
            Some("") => None,
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(other) => {
                return Err(Error::ValueOutOfRange {
                    line,
                    column: "churn_label".into(),
                    value: other.parse().unwrap_or(f64::NAN),
                    min: 0.0,
                    max: 1.0,
                })
            }
        };
        let churn_reason = match reason_col.map(&field) {
            None | Some("") => None,
            Some(reason) => Some(reason.to_string()),
        };

        rows.push(CustomerRecord {
            customer_id,
            age: values["age"],
            region: field(region_col).to_string(),
            tenure_days: values["tenure_days"],
            order_count: values["order_count"],
            total_spend: values["total_spend"],
            days_since_last_order: values["days_since_last_order"],
            purchase_interval_mean: values["purchase_interval_mean"],
            nps,
            churn_label,
            churn_reason,
        });
    }

    Ok(CustomerTable { rows })
}

/// Write a customer table in canonical column order.
///
/// Optional columns appear only when at least one row carries them, so a
/// load → write → load cycle reproduces the table exactly.
pub fn write_customers(table: &CustomerTable, path: &Path) -> Result<()> {
    let has_label = table.rows.iter().any(|r| r.churn_label.is_some());
    let has_reason = table.rows.iter().any(|r| r.churn_reason.is_some());

    let mut out = String::new();
    out.push_str(&REQUIRED_COLUMNS.join(","));
    if has_label {
        out.push_str(",churn_label");
    }
    if has_reason {
        out.push_str(",churn_reason");
    }
    out.push('\n');

    for r in &table.rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.customer_id,
            r.age,
            r.region,
            r.tenure_days,
            r.order_count,
            r.total_spend,
            r.days_since_last_order,
            r.purchase_interval_mean,
            r.nps,
        );
        if has_label {
            match r.churn_label {
                Some(l) => {
                    let _ = write!(out, ",{l}");
                }
                None => out.push(','),
            }
        }
        if has_reason {
            match &r.churn_reason {
                Some(reason) => {
                    let _ = write!(out, ",{reason}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a sparse ratings CSV with columns `customer_id,offer_id,rating`.
pub fn load_ratings(path: &Path) -> Result<RatingsMatrix> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let header = header_of(&mut rdr)?;
    for col in ["customer_id", "offer_id", "rating"] {
        if column_index(&header, col).is_none() {
            return Err(Error::MissingColumn { column: col.into() });
        }
    }
    let id_col = column_index(&header, "customer_id").unwrap();
    let offer_col = column_index(&header, "offer_id").unwrap();
    let rating_col = column_index(&header, "rating").unwrap();

    let mut matrix = RatingsMatrix::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        let field = |j: usize| record.get(j).unwrap_or("").trim();
        let customer_id = field(id_col).to_string();
        let offer_id = field(offer_col).to_string();
        let rating = parse_numeric(field(rating_col), line, "rating")?;
        matrix
            .insert(&customer_id, &offer_id, rating)
            .map_err(|e| match e {
                Error::RatingOutOfRange { rating, .. } => Error::RatingOutOfRange { line, rating },
                Error::DuplicatePair {
                    customer_id,
                    offer_id,
                    ..
                } => Error::DuplicatePair {
                    customer_id,
                    offer_id,
                    line,
                },
                other => other,
            })?;
    }
    Ok(matrix)
}

/// Write ratings sorted by (customer_id, offer_id).
pub fn write_ratings(matrix: &RatingsMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("customer_id,offer_id,rating\n");
    for customer in matrix.customers() {
        for (offer, rating) in matrix.ratings_of(customer).unwrap() {
            let _ = writeln!(out, "{customer},{offer},{rating}");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Feature construction
// ---------------------------------------------------------------------------

/// Expand a feature spec into concrete matrix columns.
///
/// Numeric names map to one column each. A categorical name expands to one
/// indicator column per distinct value, in lexical order, named
/// `column=value`. An explicit `column=value` entry maps to that single
/// indicator, which keeps scoring deterministic when a model trained on one
/// table is applied to another.
pub fn build_feature_matrix(table: &CustomerTable, spec: &[String]) -> Result<FeatureMatrix> {
    enum Col {
        Numeric(String),
        Indicator(String, String),
    }

    let mut cols = Vec::new();
    for entry in spec {
        if let Some((base, value)) = entry.split_once('=') {
            if !CATEGORICAL_COLUMNS.contains(&base) {
                return Err(Error::UnknownColumn {
                    column: entry.clone(),
                });
            }
            cols.push(Col::Indicator(base.to_string(), value.to_string()));
        } else if NUMERIC_COLUMNS.contains(&entry.as_str()) {
            cols.push(Col::Numeric(entry.clone()));
        } else if CATEGORICAL_COLUMNS.contains(&entry.as_str()) {
            let mut categories = BTreeSet::new();
            for r in &table.rows {
                if let Some(v) = r.categorical(entry) {
                    categories.insert(v.to_string());
                }
            }
            for cat in categories {
                cols.push(Col::Indicator(entry.clone(), cat));
            }
        } else {
            return Err(Error::UnknownColumn {
                column: entry.clone(),
            });
        }
    }

    let column_names: Vec<String> = cols
        .iter()
        .map(|c| match c {
            Col::Numeric(name) => name.clone(),
            Col::Indicator(base, value) => format!("{base}={value}"),
        })
        .collect();
    for (i, name) in column_names.iter().enumerate() {
        if column_names[..i].contains(name) {
            return Err(Error::InvalidConfig(format!(
                "feature column '{name}' listed twice"
            )));
        }
    }

    let mut values = Vec::with_capacity(table.len() * cols.len());
    for r in &table.rows {
        for col in &cols {
            let v = match col {
                Col::Numeric(name) => r.numeric(name).expect("validated numeric column"),
                Col::Indicator(base, value) => {
                    if r.categorical(base) == Some(value.as_str()) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            values.push(v);
        }
    }
    let row_ids = table.ids().map(|s| s.to_string()).collect();
    FeatureMatrix::new(values, column_names, row_ids)
}

/// Standardize each column to sample mean 0 and sample standard deviation 1.
///
/// Constant columns (sd = 0) pass through as zeros and are flagged by the
/// zero entry in `ScalingParams::sd`.
pub fn standardize(m: &FeatureMatrix) -> Result<(FeatureMatrix, ScalingParams)> {
    if m.n_rows == 0 || m.n_cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = m.n_rows as f64;
    let mut mean = vec![0.0; m.n_cols];
    for row in m.rows() {
        for (j, &v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    for mj in mean.iter_mut() {
        *mj /= n;
    }

    let mut sd = vec![0.0; m.n_cols];
    if m.n_rows > 1 {
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                sd[j] += d * d;
            }
        }
        for sj in sd.iter_mut() {
            *sj = (*sj / (n - 1.0)).sqrt();
        }
    }

    let params = ScalingParams { mean, sd };
    let scaled = params.apply(m)?;
    Ok((scaled, params))
}
