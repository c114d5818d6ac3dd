//! Naive single-linkage agglomerative clustering.
//!
//! Starts from n singletons and repeatedly merges the pair of clusters with
//! the smallest inter-cluster distance, scanning the full active-pair matrix
//! on every merge. The cost is cubic in n; the point guard keeps desk-scale
//! runs honest about it. Serves as the runtime baseline that k-means is
//! compared against.

use super::{sq_dist, wcss_of, Clustering};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

pub const AGGLOMERATIVE_MAX_POINTS: usize = 20_000;

// Upper-triangle index for i < j in an n-point condensed matrix.
fn condensed(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Merge n singletons down to k clusters under single linkage.
///
/// Merge ties are broken by the lowest pair of cluster representatives, a
/// cluster's representative being its smallest original row index. The
/// returned cluster indices are assigned in ascending representative order,
/// and centroids are computed as member means afterward.
pub fn agglomerative_cluster(points: &FeatureMatrix, k: usize) -> Result<Clustering> {
    let n = points.n_rows;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > AGGLOMERATIVE_MAX_POINTS {
        return Err(Error::TooManyPoints {
            n,
            max: AGGLOMERATIVE_MAX_POINTS,
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }

    // Squared distances preserve the single-linkage merge order.
    let mut dist = vec![0f64; n * (n - 1) / 2];
    for i in 0..n {
        for j in (i + 1)..n {
            dist[condensed(i, j, n)] = sq_dist(points.row(i), points.row(j));
        }
    }

    let mut active: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = 0usize;

    while active.len() > k {
        // Full scan for the closest active pair.
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let d = dist[condensed(i, j, n)];
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;

        // Single-linkage update: the merged cluster keeps the lower id i.
        for &m in &active {
            if m == i || m == j {
                continue;
            }
            let (a, b) = if m < i { (m, i) } else { (i, m) };
            let (c, d) = if m < j { (m, j) } else { (j, m) };
            let dj = dist[condensed(c, d, n)];
            let di = &mut dist[condensed(a, b, n)];
            if dj < *di {
                *di = dj;
            }
        }
        let absorbed = std::mem::take(&mut members[j]);
        members[i].extend(absorbed);
        active.retain(|&m| m != j);
        merges += 1;
    }

    // Representatives ascend because cluster ids never increase on merge.
    let d = points.n_cols;
    let mut assignments = vec![0usize; n];
    let mut centroids = Vec::with_capacity(k);
    for (cluster, &rep) in active.iter().enumerate() {
        let mut centroid = vec![0.0; d];
        for &row in &members[rep] {
            assignments[row] = cluster;
            for (c, v) in centroid.iter_mut().zip(points.row(row)) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= members[rep].len() as f64;
        }
        centroids.push(centroid);
    }

    let wcss = wcss_of(points, &assignments, &centroids);
    Ok(Clustering {
        k,
        centroids,
        assignments,
        row_ids: points.row_ids.clone(),
        wcss,
        iterations_run: merges,
        seed: 0,
        wcss_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(
            xs.to_vec(),
            vec!["x".into()],
            (0..xs.len()).map(|i| format!("P{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn separated_pairs_match_kmeans_partition() {
        // merges (0,1) at d=1 and (2,3) at d=1, then stops at k=2
        let points = points_1d(&[0.0, 1.0, 9.0, 10.0]);
        let c = agglomerative_cluster(&points, 2).unwrap();
        assert_eq!(c.assignments, vec![0, 0, 1, 1]);
        assert_eq!(c.centroids[0][0], 0.5);
        assert_eq!(c.centroids[1][0], 9.5);
        assert!((c.wcss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_keeps_singletons() {
        let points = points_1d(&[4.0, 7.0, 1.0]);
        let c = agglomerative_cluster(&points, 3).unwrap();
        assert_eq!(c.assignments, vec![0, 1, 2]);
        assert_eq!(c.wcss, 0.0);
    }

    #[test]
    fn guards_fire() {
        let points = points_1d(&[1.0, 2.0]);
        assert!(matches!(
            agglomerative_cluster(&points, 3),
            Err(Error::KTooLarge { .. })
        ));
        let empty = FeatureMatrix::new(vec![], vec!["x".into()], vec![]).unwrap();
        assert!(matches!(
            agglomerative_cluster(&empty, 1),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn merge_ties_prefer_lowest_indices() {
        // Distances: (0,1) = 1, (2,3) = 1, gap 5 between the pairs. With
        // k = 3 exactly one tied merge happens; it must be (0,1).
        let points = points_1d(&[0.0, 1.0, 6.0, 7.0]);
        let c = agglomerative_cluster(&points, 3).unwrap();
        assert_eq!(c.assignments[0], c.assignments[1]);
        assert_ne!(c.assignments[2], c.assignments[3]);
    }
}
