//! Embedding-based scoring of cluster descriptions.
//!
//! Each member image's caption document is embedded and compared with the
//! description embedding by cosine similarity. Per cluster we report the mean
//! similarity and coverage@tau, the percentage of members with similarity
//! `>= tau`.

pub mod report;
pub mod runner;

use serde::{Deserialize, Serialize};

use crate::dataset::{image_caption_document, Dataset};
use crate::describe::ClusterDescription;
use crate::error::{Error, Result};
use crate::gateway::{EmbeddingVector, Gateway};

pub use report::{write_report, ReportFiles};
pub use runner::{
    run_experiment, Cell, CellReport, CellStatus, ExperimentConfig, ExperimentReport,
};

pub const DEFAULT_TAU: f64 = 0.5;

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Eval(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Eval("cosine of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(a.values(), b.values())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSimilarity {
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvaluation {
    pub cluster_id: usize,
    pub n_images: usize,
    pub tau: f64,
    pub mean_similarity: f64,
    /// Percentage in [0, 100].
    pub coverage_at_tau: f64,
    pub covered: usize,
    pub per_image_similarity: Vec<ImageSimilarity>,
}

pub fn mean_similarity(similarities: &[f64]) -> f64 {
    similarities.iter().sum::<f64>() / similarities.len() as f64
}

/// Number of similarities `>= tau`.
pub fn covered_count(similarities: &[f64], tau: f64) -> usize {
    similarities.iter().filter(|&&s| s >= tau).count()
}

pub fn coverage_at(similarities: &[f64], tau: f64) -> f64 {
    100.0 * covered_count(similarities, tau) as f64 / similarities.len() as f64
}

impl ClusterEvaluation {
    pub fn from_similarities(
        cluster_id: usize,
        per_image_similarity: Vec<ImageSimilarity>,
        tau: f64,
    ) -> Result<Self> {
        if per_image_similarity.is_empty() {
            return Err(Error::Eval("no images to evaluate".into()));
        }
        let sims: Vec<f64> = per_image_similarity.iter().map(|s| s.similarity).collect();
        Ok(Self {
            cluster_id,
            n_images: sims.len(),
            tau,
            mean_similarity: mean_similarity(&sims),
            coverage_at_tau: coverage_at(&sims, tau),
            covered: covered_count(&sims, tau),
            per_image_similarity,
        })
    }
}

/// Scores `description` against every listed member's caption document.
pub fn evaluate_cluster(
    description: &ClusterDescription,
    member_ids: &[String],
    dataset: &Dataset,
    gateway: &Gateway,
    tau: f64,
) -> Result<ClusterEvaluation> {
    let cluster_id = description.cluster_id;
    let run = || -> Result<ClusterEvaluation> {
        if member_ids.is_empty() {
            return Err(Error::Eval("empty member list".into()));
        }
        let desc = gateway.embed(&description.text)?;
        let mut sims = Vec::with_capacity(member_ids.len());
        for id in member_ids {
            let rec = dataset
                .get(id)
                .ok_or_else(|| Error::Eval(format!("member {id:?} not in dataset")))?;
            let img = gateway.embed(&image_caption_document(rec))?;
            sims.push(ImageSimilarity {
                id: id.clone(),
                similarity: cosine(&img, &desc)?,
            });
        }
        ClusterEvaluation::from_similarities(cluster_id, sims, tau)
    };
    run().map_err(|e| e.in_cluster(cluster_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub n_clusters: usize,
    pub n_images: usize,
    /// Image-weighted mean similarity.
    pub mean_similarity: f64,
    /// Image-weighted coverage percentage.
    pub coverage: f64,
    /// Unweighted mean of cluster means.
    pub cluster_mean_similarity: f64,
    /// Unweighted mean of cluster coverages.
    pub cluster_coverage: f64,
}

pub fn aggregate_overall(evals: &[ClusterEvaluation]) -> Result<OverallMetrics> {
    if evals.is_empty() {
        return Err(Error::Eval("no cluster evaluations to aggregate".into()));
    }
    let n: usize = evals.iter().map(|e| e.n_images).sum();
    let weighted: f64 = evals
        .iter()
        .map(|e| e.mean_similarity * e.n_images as f64)
        .sum();
    let covered: usize = evals.iter().map(|e| e.covered).sum();
    let k = evals.len() as f64;
    Ok(OverallMetrics {
        n_clusters: evals.len(),
        n_images: n,
        mean_similarity: weighted / n as f64,
        coverage: 100.0 * covered as f64 / n as f64,
        cluster_mean_similarity: evals.iter().map(|e| e.mean_similarity).sum::<f64>() / k,
        cluster_coverage: evals.iter().map(|e| e.coverage_at_tau).sum::<f64>() / k,
    })
}
