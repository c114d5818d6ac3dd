//! Independent oracles used by the integration and acceptance suites.
//!
//! Everything here is written with plain loops against the textbook
//! definitions, deliberately sharing no code with the library paths it
//! checks.

#![allow(dead_code)]
#![allow(clippy::manual_clamp)] // the oracle stays plain loops on purpose

use retenta::dataset::FeatureMatrix;

/// Reference logistic loss: mean of −y ln p − (1−y) ln(1−p) plus the ridge
/// penalty, straight from the definition.
pub fn reference_loss(alpha: f64, beta: &[f64], rows: &[Vec<f64>], labels: &[u8], l2: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in rows.iter().zip(labels) {
        let mut z = alpha;
        for (b, x) in beta.iter().zip(row) {
            z += b * x;
        }
        let p = 1.0 / (1.0 + (-z).exp());
        total += if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
    }
    let mut penalty = 0.0;
    for b in beta {
        penalty += b * b;
    }
    total / rows.len() as f64 + 0.5 * l2 * penalty
}

/// Central finite differences of the reference loss, one parameter at a time.
pub fn finite_difference_gradient(
    alpha: f64,
    beta: &[f64],
    rows: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
    step: f64,
) -> (f64, Vec<f64>) {
    let g_alpha = (reference_loss(alpha + step, beta, rows, labels, l2)
        - reference_loss(alpha - step, beta, rows, labels, l2))
        / (2.0 * step);
    let mut g_beta = Vec::with_capacity(beta.len());
    for j in 0..beta.len() {
        let mut plus = beta.to_vec();
        plus[j] += step;
        let mut minus = beta.to_vec();
        minus[j] -= step;
        g_beta.push(
            (reference_loss(alpha, &plus, rows, labels, l2)
                - reference_loss(alpha, &minus, rows, labels, l2))
                / (2.0 * step),
        );
    }
    (g_alpha, g_beta)
}

/// Exhaustive minimizer of the regularized logistic loss over the
/// (alpha, b) grid [−10, 10] × [−10, 10] with step 1e-2.
pub fn grid_search_logistic(xs: &[f64], labels: &[u8], l2: f64) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for ai in -1000..=1000i64 {
        let alpha = ai as f64 * 1e-2;
        for bi in -1000..=1000i64 {
            let b = bi as f64 * 1e-2;
            let loss = reference_loss(alpha, &[b], &rows, labels, l2);
            if loss < best.0 {
                best = (loss, alpha, b);
            }
        }
    }
    (best.1, best.2)
}

/// Area under the ROC curve by the rank statistic, with average ranks on
/// score ties.
pub fn auc(scored: &[(f64, u8)]) -> f64 {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut n_pos = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // ranks are 1-based; tied scores share the average rank
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored[idx].1 == 1 {
                rank_sum_pos += avg_rank;
                n_pos += 1;
            }
        }
        i = j + 1;
    }
    let n_neg = scored.len() - n_pos;
    assert!(n_pos > 0 && n_neg > 0, "AUC needs both classes");
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// Global minimum within-cluster sum of squares over every partition of the
/// points into at most k clusters, by enumerating all k^n assignments.
pub fn optimal_wcss(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut assign = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut wcss = 0.0;
        for (p, &a) in points.iter().zip(&assign) {
            for (s, v) in sums[a].iter().zip(p) {
                let mean = s / counts[a] as f64;
                wcss += (v - mean) * (v - mean);
            }
        }
        if wcss < best {
            best = wcss;
        }

        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            assign[pos] += 1;
            if assign[pos] < k {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> FeatureMatrix {
    let d = rows[0].len();
    let values: Vec<f64> = rows.iter().flatten().copied().collect();
    FeatureMatrix::new(
        values,
        (0..d).map(|j| format!("x{j}")).collect(),
        (0..rows.len()).map(|i| format!("P{i:03}")).collect(),
    )
    .unwrap()
}

fn quantize6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Flat recommendation lists: (offer, score, support) items per risky
/// customer, sorted by customer id.
pub type FlatRecommendations = Vec<(String, Vec<(String, f64, usize)>)>;

/// Naive-loop reimplementation of the whole retention stage: segmentation by
/// thresholds, cosine over co-rated offers, loyalty-restricted top-k
/// neighborhoods, and like-threshold offer ranking.
///
/// Input is flat: `(customer, probability)` pairs and `(customer, offer,
/// rating)` triples. Output lists are sorted by customer id; items carry
/// `(offer, score, support)`.
#[allow(clippy::too_many_arguments)]
pub fn naive_recommendations(
    scores: &[(String, f64)],
    ratings: &[(String, String, f64)],
    risky_threshold: f64,
    loyal_threshold: f64,
    top_k: usize,
    min_co_rated: usize,
    max_items: usize,
    like_threshold: f64,
) -> FlatRecommendations {
    let mut risky: Vec<&str> = Vec::new();
    let mut loyal: Vec<&str> = Vec::new();
    for (id, p) in scores {
        if *p >= risky_threshold {
            risky.push(id);
        } else if *p <= loyal_threshold {
            loyal.push(id);
        }
    }
    risky.sort_unstable();
    loyal.sort_unstable();

    // ratings of one customer, sorted by offer id
    let ratings_of = |customer: &str| -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = ratings
            .iter()
            .filter(|(c, _, _)| c == customer)
            .map(|(_, o, r)| (o.as_str(), *r))
            .collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    };

    let mut results = Vec::new();
    for &i in &risky {
        let ri = ratings_of(i);

        // cosine against every loyal candidate
        let mut neighbors: Vec<(&str, f64)> = Vec::new();
        for &j in &loyal {
            let rj = ratings_of(j);
            let mut dot = 0.0;
            let mut ni = 0.0;
            let mut nj = 0.0;
            let mut co = 0usize;
            for &(oi, vi) in &ri {
                for &(oj, vj) in &rj {
                    if oi == oj {
                        dot += vi * vj;
                        ni += vi * vi;
                        nj += vj * vj;
                        co += 1;
                    }
                }
            }
            if co >= min_co_rated && ni > 0.0 && nj > 0.0 {
                let mut sim = dot / (ni.sqrt() * nj.sqrt());
                if sim > 1.0 {
                    sim = 1.0;
                }
                neighbors.push((j, sim));
            }
        }
        neighbors.sort_by(|a, b| {
            quantize6(b.1)
                .partial_cmp(&quantize6(a.1))
                .unwrap()
                .then(a.0.cmp(b.0))
        });
        neighbors.truncate(top_k);

        // candidate offers: liked by at least one neighbor, not rated by i
        let mut candidates: Vec<&str> = Vec::new();
        for &(j, _) in &neighbors {
            for &(offer, value) in &ratings_of(j) {
                if value >= like_threshold
                    && !ri.iter().any(|&(o, _)| o == offer)
                    && !candidates.contains(&offer)
                {
                    candidates.push(offer);
                }
            }
        }
        candidates.sort_unstable();

        let mut items: Vec<(String, f64, usize)> = Vec::new();
        for offer in candidates {
            let mut weighted = 0.0;
            let mut weight = 0.0;
            let mut support = 0usize;
            for &(j, sim) in &neighbors {
                for &(o, r) in &ratings_of(j) {
                    if o == offer {
                        weighted += sim * r;
                        weight += sim;
                        support += 1;
                    }
                }
            }
            if support == 0 {
                continue;
            }
            let mut pred = weighted / weight;
            if pred < 1.0 {
                pred = 1.0;
            }
            if pred > 5.0 {
                pred = 5.0;
            }
            items.push((offer.to_string(), quantize6(pred), support));
        }
        items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        items.truncate(max_items);
        results.push((i.to_string(), items));
    }
    results
}
