use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sensitivity::SensitivityMatrix;
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 300;
pub const RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Susceptible,
    Resistant,
}

impl ClusterLabel {
    pub fn name(self) -> &'static str {
        match self {
            ClusterLabel::Susceptible => "susceptible",
            ClusterLabel::Resistant => "resistant",
        }
    }
}

/// Best of several Lloyd runs.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia of every restart, in order.
    pub restart_inertia: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub hybrid_ids: Vec<String>,
    pub labels: Vec<ClusterLabel>,
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub susceptible_cluster: usize,
    pub inertia: f64,
    pub silhouette: f64,
    pub silhouette_samples: Vec<f64>,
    pub seed: u64,
    pub iterations: usize,
}

impl ClusterResult {
    pub fn susceptible(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l == ClusterLabel::Susceptible).collect()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].to_vec()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].to_vec());
    }
    centroids
}

fn lloyd(points: &[&[f64]], mut centroids: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<f64>>, f64, usize) {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            sums[assignment[i]].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(points[a], &centroids[assignment[a]])
                            .total_cmp(&dist2(points[b], &centroids[assignment[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[c] = points[far].to_vec();
                assignment[far] = c;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| dist2(p, &centroids[c]))
        .sum();
    (assignment, centroids, inertia, iterations)
}

/// K-means with k-means++ seeding; restart `r` draws from stream `r` of the
/// seeded generator and the lowest-inertia run is kept.
pub fn kmeans(points: &[&[f64]], k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 || points.len() < k {
        return Err(Error::DegenerateClustering(format!(
            "{} rows cannot form {k} clusters",
            points.len()
        )));
    }
    let mut best: Option<KMeansFit> = None;
    let mut restart_inertia = Vec::with_capacity(restarts);
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let init = plus_plus_init(points, k, &mut rng);
        let (assignment, centroids, inertia, iterations) = lloyd(points, init);
        restart_inertia.push(inertia);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansFit {
                assignment,
                centroids,
                inertia,
                iterations,
                restart_inertia: Vec::new(),
            });
        }
    }
    let mut best = best.unwrap();
    best.restart_inertia = restart_inertia;
    Ok(best)
}

/// Per-point silhouette values; points in singleton clusters score 0.
pub fn silhouette_samples(points: &[&[f64]], assignment: &[usize], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    (0..n)
        .map(|i| {
            let own = assignment[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[assignment[j]] += dist2(points[i], points[j]).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect()
}

/// Two-cluster K-means over matrix rows. The cluster whose members have the
/// larger mean absolute value is labelled susceptible.
pub fn kmeans_cluster(matrix: &SensitivityMatrix, seed: u64) -> Result<ClusterResult> {
    let points: Vec<&[f64]> = (0..matrix.n_rows()).map(|i| matrix.row(i)).collect();
    if points.len() < 2 {
        return Err(Error::DegenerateClustering("fewer than two rows".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::DegenerateClustering("all rows are identical".into()));
    }
    let fit = kmeans(&points, 2, RESTARTS, seed)?;
    let mut abs_sum = [0.0; 2];
    let mut counts = [0usize; 2];
    for (p, &c) in points.iter().zip(&fit.assignment) {
        abs_sum[c] += p.iter().map(|v| v.abs()).sum::<f64>();
        counts[c] += p.len();
    }
    let mean_abs = |c: usize| if counts[c] == 0 { 0.0 } else { abs_sum[c] / counts[c] as f64 };
    let susceptible_cluster = if mean_abs(1) > mean_abs(0) { 1 } else { 0 };
    let labels = fit
        .assignment
        .iter()
        .map(|&c| {
            if c == susceptible_cluster {
                ClusterLabel::Susceptible
            } else {
                ClusterLabel::Resistant
            }
        })
        .collect();
    let samples = silhouette_samples(&points, &fit.assignment, 2);
    let silhouette = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(ClusterResult {
        hybrid_ids: matrix.hybrid_ids.clone(),
        labels,
        assignment: fit.assignment,
        centroids: fit.centroids,
        susceptible_cluster,
        inertia: fit.inertia,
        silhouette,
        silhouette_samples: samples,
        seed,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::{ColumnSemantics, EnvFilter, MatrixKind};
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: Vec<Vec<f64>>) -> SensitivityMatrix {
        let cols = rows[0].len();
        SensitivityMatrix::new(
            MatrixKind::RHeat,
            EnvFilter::All,
            ColumnSemantics::ConvolutionWindow,
            (0..rows.len()).map(|i| format!("H{i}")).collect(),
            cols,
            rows.concat(),
        )
        .unwrap()
    }

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let truth: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let rows = truth
            .iter()
            .map(|&t| {
                (0..5)
                    .map(|_| noise.sample(&mut rng) + if t { sep } else { 0.0 })
                    .collect()
            })
            .collect();
        (rows, truth)
    }

    #[test]
    fn separated_blobs_recovered() {
        let (rows, truth) = blobs(60, 10.0, 3);
        let r = kmeans_cluster(&matrix(rows), 5).unwrap();
        assert_eq!(r.susceptible(), truth);
        assert!(r.silhouette > 0.8, "{}", r.silhouette);
    }

    #[test]
    fn duplicates_share_labels() {
        let (rows, _) = blobs(20, 3.0, 9);
        let doubled: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
        let r = kmeans_cluster(&matrix(doubled), 1).unwrap();
        assert_eq!(r.labels[..20], r.labels[20..]);
    }

    #[test]
    fn two_distinct_rows_are_singletons() {
        let r = kmeans_cluster(&matrix(vec![vec![0.0, 0.0], vec![1.0, 2.0]]), 0).unwrap();
        assert_eq!(r.silhouette, 0.0);
        assert_ne!(r.assignment[0], r.assignment[1]);
        assert_eq!(r.labels[1], ClusterLabel::Susceptible);
    }

    #[test]
    fn degenerate_inputs() {
        let same = matrix(vec![vec![1.0, 2.0]; 4]);
        assert!(matches!(kmeans_cluster(&same, 0), Err(Error::DegenerateClustering(_))));
        assert!(matches!(
            kmeans_cluster(&matrix(vec![vec![1.0]]), 0),
            Err(Error::DegenerateClustering(_))
        ));
    }

    #[test]
    fn best_restart_kept() {
        let (rows, _) = blobs(50, 1.0, 4);
        let points: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let fit = kmeans(&points, 3, RESTARTS, 2).unwrap();
        assert!(fit.restart_inertia.iter().all(|&i| fit.inertia <= i));
    }
}
