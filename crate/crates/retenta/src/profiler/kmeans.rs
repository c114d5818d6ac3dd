//! Lloyd iteration with k-means++ seeding and a single-point-move polish.
//!
//! Lloyd alone, restarted from point seeds, can sit in local optima that a
//! single reassignment would improve (the improving seed pair is sometimes
//! one the D²-weighted seeding almost never draws). After Lloyd stabilizes,
//! a deterministic Hartigan-style pass moves individual points while the
//! exact objective delta is negative, then Lloyd re-runs; the loop ends when
//! neither phase changes anything. Move-stability implies every point sits
//! with its nearest centroid, so the polish strengthens the convergence
//! contract rather than weakening it.
//!
//! Determinism rules: the seeding stream is ChaCha8 from the given seed,
//! distance ties assign to the lowest cluster index, centroid updates sum in
//! row order, move scans run in row order, and an emptied cluster is
//! reseeded at the point farthest from its current centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, sq_dist, wcss_of, Clustering};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

fn assign_points(points: &FeatureMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .rows()
        .map(|row| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(row, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Means per cluster; empty clusters are reseeded at the point farthest from
/// their current centroid (ties broken by the lowest row index).
fn update_centroids(
    points: &FeatureMatrix,
    assignments: &[usize],
    old: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let k = old.len();
    let d = points.n_cols;
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in points.rows().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(row) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for s in sums[c].iter_mut() {
                *s /= counts[c] as f64;
            }
        } else {
            let mut far = 0usize;
            let mut far_d = -1.0;
            for (i, row) in points.rows().enumerate() {
                let d2 = sq_dist(row, &old[c]);
                if d2 > far_d {
                    far_d = d2;
                    far = i;
                }
            }
            sums[c] = points.row(far).to_vec();
        }
    }
    sums
}

fn kmeanspp_init(points: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.n_rows;
    let first = rng.random_range(0..n);
    let mut centroids = vec![points.row(first).to_vec()];
    let mut nearest = vec![f64::INFINITY; n];
    while centroids.len() < k {
        let last = centroids.last().unwrap();
        for (i, row) in points.rows().enumerate() {
            let d = sq_dist(row, last);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
        let total: f64 = nearest.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining mass sits on already-chosen points
            rng.random_range(0..n)
        };
        centroids.push(points.row(chosen).to_vec());
    }
    centroids
}

/// Iterate assign/update until assignments stabilize, the maximum centroid
/// displacement falls to `tol`, or the iteration budget runs out. Returns
/// the number of iterations used.
fn lloyd_phase(
    points: &FeatureMatrix,
    centroids: &mut Vec<Vec<f64>>,
    assignments: &mut Vec<usize>,
    budget: usize,
    tol: f64,
    wcss_trace: &mut Vec<f64>,
) -> usize {
    let mut used = 0usize;
    for _ in 0..budget {
        let new_assignments = assign_points(points, centroids);
        if !assignments.is_empty() && new_assignments == *assignments {
            // Centroids are already the means of this partition and every
            // point sits with its nearest centroid.
            break;
        }
        *assignments = new_assignments;
        used += 1;

        let updated = update_centroids(points, assignments, centroids);
        let displacement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        *centroids = updated;
        wcss_trace.push(wcss_of(points, assignments, centroids));

        if displacement <= tol {
            let refreshed = assign_points(points, centroids);
            if refreshed != *assignments {
                *assignments = refreshed;
                *centroids = update_centroids(points, assignments, centroids);
                wcss_trace.push(wcss_of(points, assignments, centroids));
            }
            break;
        }
    }
    used
}

/// Plain member means; an empty cluster keeps its previous centroid.
fn exact_means(points: &FeatureMatrix, assignments: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = old.len();
    let d = points.n_cols;
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in points.rows().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(row) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for s in sums[c].iter_mut() {
                *s /= counts[c] as f64;
            }
        } else {
            sums[c] = old[c].clone();
        }
    }
    sums
}

/// Single-point-move refinement. In row order, move a point to the cluster
/// with the most negative exact objective delta
///
///   Δ = n_b/(n_b+1)·‖x − μ_b‖² − n_a/(n_a−1)·‖x − μ_a‖²
///
/// repeating until a full sweep makes no move. A cluster's last member never
/// moves, so k stays fixed. Returns true when anything moved; centroids are
/// then recomputed as exact means.
fn hartigan_pass(
    points: &FeatureMatrix,
    centroids: &mut Vec<Vec<f64>>,
    assignments: &mut [usize],
) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }

    let mut any = false;
    for _sweep in 0..100 {
        let mut changed = false;
        for (i, row) in points.rows().enumerate() {
            let a = assignments[i];
            if counts[a] <= 1 {
                continue;
            }
            let n_a = counts[a] as f64;
            let removal_gain = n_a / (n_a - 1.0) * sq_dist(row, &centroids[a]);
            let mut best_delta = -1e-12;
            let mut best_b = a;
            for (b, centroid) in centroids.iter().enumerate() {
                if b == a {
                    continue;
                }
                let n_b = counts[b] as f64;
                let delta = n_b / (n_b + 1.0) * sq_dist(row, centroid) - removal_gain;
                if delta < best_delta {
                    best_delta = delta;
                    best_b = b;
                }
            }
            if best_b != a {
                let n_b = counts[best_b] as f64;
                for (c, v) in centroids[a].iter_mut().zip(row) {
                    *c = (*c * n_a - v) / (n_a - 1.0);
                }
                for (c, v) in centroids[best_b].iter_mut().zip(row) {
                    *c = (*c * n_b + v) / (n_b + 1.0);
                }
                counts[a] -= 1;
                counts[best_b] += 1;
                assignments[i] = best_b;
                changed = true;
                any = true;
            }
        }
        if !changed {
            break;
        }
    }
    if any {
        *centroids = exact_means(points, assignments, centroids);
    }
    any
}

/// Lloyd iteration: assign each point to its nearest centroid by Euclidean
/// distance, recompute centroids as means, and stop once assignments are
/// stable, the maximum centroid displacement is at most `tol`, or
/// `max_iters` is reached. A single-point-move polish then alternates with
/// further Lloyd rounds until neither phase changes the partition.
pub fn kmeans(
    points: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Clustering> {
    let n = points.n_rows;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(points, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut wcss_trace = Vec::new();
    let mut iterations = 0usize;
    let mut budget = max_iters;

    for _round in 0..50 {
        let used = lloyd_phase(
            points,
            &mut centroids,
            &mut assignments,
            budget,
            tol,
            &mut wcss_trace,
        );
        iterations += used;
        budget = budget.saturating_sub(used);

        if !hartigan_pass(points, &mut centroids, &mut assignments) {
            break;
        }
        wcss_trace.push(wcss_of(points, &assignments, &centroids));
        if budget == 0 {
            break;
        }
    }

    let wcss = wcss_of(points, &assignments, &centroids);
    Ok(Clustering {
        k,
        centroids,
        assignments,
        row_ids: points.row_ids.clone(),
        wcss,
        iterations_run: iterations,
        seed,
        wcss_trace,
    })
}

/// Run `kmeans` under seeds derived from `(seed, restart index)` and keep
/// the minimum-objective result; ties go to the lowest restart index.
pub fn kmeans_best_of(
    points: &FeatureMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Clustering> {
    if restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be >= 1".into()));
    }
    let mut best: Option<Clustering> = None;
    for r in 0..restarts {
        let c = kmeans(points, k, derive_seed(seed, r as u64), 300, 1e-6)?;
        let better = best.as_ref().is_none_or(|b| c.wcss < b.wcss);
        if better {
            best = Some(c);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
