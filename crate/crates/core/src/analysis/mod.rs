//! Ranking, ranking comparison, susceptibility clustering and plots.

pub mod kmeans;
pub mod plot;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sensitivity::SensitivityMatrix;
use crate::{Error, Result};

pub use kmeans::{kmeans, kmeans_cluster, silhouette_samples, ClusterLabel, ClusterResult, KMeansFit};
pub use plot::{heatmap_svg, scatter_svg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

impl Norm {
    pub fn of(self, row: &[f64]) -> f64 {
        match self {
            Norm::L1 => row.iter().map(|v| v.abs()).sum(),
            Norm::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => row.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "l1" => Some(Norm::L1),
            "l2" => Some(Norm::L2),
            "linf" => Some(Norm::Linf),
            _ => None,
        }
    }
}

/// Hybrids ordered by descending row norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub norm: Norm,
    pub hybrid_ids: Vec<String>,
    /// Row norm per hybrid index.
    pub scores: Vec<f64>,
    /// Hybrid indices, most susceptible first.
    pub order: Vec<usize>,
}

impl Ranking {
    /// Rank position (0-based) of each hybrid index.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (r, &h) in self.order.iter().enumerate() {
            pos[h] = r;
        }
        pos
    }
}

pub fn rank_hybrids(matrix: &SensitivityMatrix, norm: Norm) -> Ranking {
    let scores: Vec<f64> = (0..matrix.n_rows()).map(|i| norm.of(matrix.row(i))).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ranking {
        norm,
        hybrid_ids: matrix.hybrid_ids.clone(),
        scores,
        order,
    }
}

/// Paired rank positions of the hybrids of two rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    pub hybrid_ids: Vec<String>,
    pub position_a: Vec<usize>,
    pub position_b: Vec<usize>,
    pub spearman: f64,
}

/// Spearman correlation of two tie-free rank vectors.
pub fn spearman(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 1.0;
    }
    let d2: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn compare_rankings(a: &Ranking, b: &Ranking) -> Result<RankComparison> {
    let b_index: HashMap<&str, usize> = b.hybrid_ids.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let a_set: HashMap<&str, usize> = a.hybrid_ids.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let mut missing: Vec<String> = a
        .hybrid_ids
        .iter()
        .filter(|h| !b_index.contains_key(h.as_str()))
        .chain(b.hybrid_ids.iter().filter(|h| !a_set.contains_key(h.as_str())))
        .cloned()
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::Pairing { missing });
    }
    let pa = a.positions();
    let pb = b.positions();
    let position_b: Vec<usize> = a.hybrid_ids.iter().map(|h| pb[b_index[h.as_str()]]).collect();
    let spearman = spearman(&pa, &position_b);
    Ok(RankComparison {
        hybrid_ids: a.hybrid_ids.clone(),
        position_a: pa,
        position_b,
        spearman,
    })
}

/// Fraction of hybrids labelled resistant in every result.
pub fn resistant_fraction(results: &[&ClusterResult]) -> Result<f64> {
    let Some(first) = results.first() else {
        return Err(Error::EmptyAnalysis("no clustering results".into()));
    };
    for r in &results[1..] {
        if r.hybrid_ids != first.hybrid_ids {
            let mut missing: Vec<String> = first
                .hybrid_ids
                .iter()
                .filter(|h| !r.hybrid_ids.contains(h))
                .chain(r.hybrid_ids.iter().filter(|h| !first.hybrid_ids.contains(h)))
                .cloned()
                .collect();
            missing.sort();
            return Err(Error::Pairing { missing });
        }
    }
    let n = first.hybrid_ids.len();
    if n == 0 {
        return Err(Error::EmptyAnalysis("no hybrids".into()));
    }
    let resistant = (0..n)
        .filter(|&i| results.iter().all(|r| r.labels[i] == ClusterLabel::Resistant))
        .count();
    Ok(resistant as f64 / n as f64)
}

/// Agreement between predicted and true binary labels, maximized over the
/// two possible label permutations.
pub fn label_accuracy(predicted: &[bool], truth: &[bool]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let agree = predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
    agree.max(1.0 - agree)
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn header(provenance: Option<&str>) -> String {
    provenance.map(|p| format!("# {p}\n")).unwrap_or_default()
}

/// CSV `rank,hybrid_id,score`, rank starting at 1.
pub fn write_ranking(ranking: &Ranking, path: &Path, provenance: Option<&str>) -> Result<()> {
    let mut out = header(provenance);
    out.push_str("rank,hybrid_id,score\n");
    for (r, &h) in ranking.order.iter().enumerate() {
        out.push_str(&format!("{},{},{:e}\n", r + 1, ranking.hybrid_ids[h], ranking.scores[h]));
    }
    write_text(path, out)
}

/// CSV `hybrid_id,label,silhouette_sample`.
pub fn write_clusters(result: &ClusterResult, path: &Path, provenance: Option<&str>) -> Result<()> {
    let mut out = header(provenance);
    out.push_str("hybrid_id,label,silhouette_sample\n");
    for (i, id) in result.hybrid_ids.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{:e}\n",
            id,
            result.labels[i].name(),
            result.silhouette_samples[i]
        ));
    }
    write_text(path, out)
}

/// CSV `hybrid_id,position_a,position_b`.
pub fn write_comparison(cmp: &RankComparison, path: &Path, provenance: Option<&str>) -> Result<()> {
    let mut out = header(provenance);
    out.push_str("hybrid_id,position_a,position_b\n");
    for (i, id) in cmp.hybrid_ids.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", id, cmp.position_a[i] + 1, cmp.position_b[i] + 1));
    }
    write_text(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::{ColumnSemantics, EnvFilter, MatrixKind};

    fn matrix(rows: &[&[f64]]) -> SensitivityMatrix {
        SensitivityMatrix::new(
            MatrixKind::CHeat,
            EnvFilter::All,
            ColumnSemantics::GrowthPeriod,
            (0..rows.len()).map(|i| format!("H{i}")).collect(),
            rows[0].len(),
            rows.concat(),
        )
        .unwrap()
    }

    #[test]
    fn ranking_examples() {
        let m = matrix(&[&[3.0, 0.0], &[0.0, 1.0], &[0.0, -2.0]]);
        assert_eq!(rank_hybrids(&m, Norm::L2).order, vec![0, 2, 1]);
        let z = matrix(&[&[0.0; 3], &[0.0; 3], &[0.0; 3], &[0.0; 3]]);
        assert_eq!(rank_hybrids(&z, Norm::L1).order, vec![0, 1, 2, 3]);
        let m = matrix(&[&[1.0, -4.0], &[3.0, 3.0], &[-2.0, 0.5]]);
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let mut scaled = m.clone();
            scaled.data.iter_mut().for_each(|v| *v *= 5.0);
            assert_eq!(rank_hybrids(&m, norm).order, rank_hybrids(&scaled, norm).order);
        }
    }

    #[test]
    fn comparison_extremes() {
        let m = matrix(&[&[4.0], &[3.0], &[2.0], &[1.0]]);
        let a = rank_hybrids(&m, Norm::L2);
        let same = compare_rankings(&a, &a).unwrap();
        assert_eq!(same.spearman, 1.0);
        assert_eq!(same.position_a, same.position_b);
        let mut rev = a.clone();
        rev.order.reverse();
        assert_eq!(compare_rankings(&a, &rev).unwrap().spearman, -1.0);
        let mut other = a.clone();
        other.hybrid_ids[3] = "X".into();
        match compare_rankings(&a, &other) {
            Err(Error::Pairing { missing }) => assert_eq!(missing, vec!["H3".to_string(), "X".to_string()]),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn accuracy_is_permutation_invariant() {
        assert_eq!(label_accuracy(&[true, false, true], &[false, true, false]), 1.0);
        assert_eq!(label_accuracy(&[true, true, false, false], &[true, false, false, false]), 0.75);
    }
}
