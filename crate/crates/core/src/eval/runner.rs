//! Experiment matrix execution: for each (strategy, generator) cell and each
//! cluster, sample, describe, then evaluate against all members.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::ClusterModel;
use crate::dataset::text::TextPreprocessor;
use crate::dataset::Dataset;
use crate::describe::{
    describe_llm_at, ClusterDescription, Generator, Method, PosLexicon, PromptTemplates,
    PromptVariant, TfidfDescriber, DEFAULT_TOP_K,
};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, DEFAULT_TEMPERATURE};
use crate::sampling::{cluster_seed, sample_cluster, SampleResult, SamplingConfig, Strategy};

use super::{aggregate_overall, evaluate_cluster, ClusterEvaluation, OverallMetrics, DEFAULT_TAU};

/// Serialized as `"strategy/generator"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Cell {
    pub strategy: Strategy,
    pub generator: Generator,
}

impl Cell {
    pub fn new(strategy: Strategy, generator: Generator) -> Self {
        Self {
            strategy,
            generator,
        }
    }

    /// Every strategy crossed with every generator, strategy-major.
    pub fn full_matrix() -> Vec<Cell> {
        Strategy::ALL
            .into_iter()
            .flat_map(|s| Generator::ALL.into_iter().map(move |g| Cell::new(s, g)))
            .collect()
    }

    pub fn method(&self) -> Method {
        self.generator.method()
    }

    pub fn prompt(&self) -> Option<PromptVariant> {
        self.generator.prompt()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.strategy, self.generator)
    }
}

impl From<Cell> for String {
    fn from(c: Cell) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Cell {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Cell {
    type Err = Error;

    /// `"strategy/generator"`, e.g. `"density/llm-cot"`.
    fn from_str(s: &str) -> Result<Self> {
        let (st, g) = s
            .split_once('/')
            .ok_or_else(|| Error::Config(format!("cell {s:?} is not `strategy/generator`")))?;
        Ok(Cell::new(st.parse()?, g.parse()?))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Base sampling settings; the strategy is taken from each cell and the
    /// seed is the global seed from which per-cluster seeds derive.
    pub sampling: SamplingConfig,
    pub tau: f64,
    pub tfidf_k: usize,
    pub temperature: f64,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    /// Digest recorded in the report. Empty means one is derived from the
    /// experiment inputs.
    pub config_digest: String,
    pub templates: PromptTemplates,
    pub preprocessor: TextPreprocessor,
    pub lexicon: PosLexicon,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            tau: DEFAULT_TAU,
            tfidf_k: DEFAULT_TOP_K,
            temperature: DEFAULT_TEMPERATURE,
            jobs: 0,
            config_digest: String::new(),
            templates: PromptTemplates::bundled(),
            preprocessor: TextPreprocessor::bundled().clone(),
            lexicon: PosLexicon::bundled().clone(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut base = self.sampling;
        for s in Strategy::ALL {
            base.strategy = s;
            if s != Strategy::Stratified {
                base.validate()?;
            }
        }
        if !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "tau must be finite, got {}",
                self.tau
            )));
        }
        if self.tfidf_k == 0 {
            return Err(Error::Config("tfidf_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cluster_id: Option<usize>,
    pub message: String,
    pub transport: bool,
}

impl CellFailure {
    fn from_error(e: &Error) -> Self {
        Self {
            cluster_id: e.cluster_id(),
            message: e.to_string(),
            transport: e.is_transport(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: String,
    pub strategy: Strategy,
    pub method: Method,
    pub prompt: Option<PromptVariant>,
    pub status: CellStatus,
    pub failures: Vec<CellFailure>,
    /// Aggregate over the clusters that were evaluated.
    pub overall: Option<OverallMetrics>,
    pub clusters: Vec<ClusterEvaluation>,
    pub descriptions: Vec<ClusterDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_digest: String,
    pub k: usize,
    pub n_images: usize,
    pub tau: f64,
    pub chat_model: String,
    pub embed_model: String,
    pub cells: Vec<CellReport>,
    /// Samples per strategy used by the matrix, by cluster id.
    pub samples: Vec<SampleResult>,
}

impl ExperimentReport {
    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Complete)
    }

    pub fn has_transport_failure(&self) -> bool {
        self.cells
            .iter()
            .flat_map(|c| &c.failures)
            .any(|f| f.transport)
    }

    pub fn cell(&self, cell: &Cell) -> Option<&CellReport> {
        let key = cell.to_string();
        self.cells.iter().find(|c| c.cell == key)
    }
}

fn derived_digest(
    cfg: &ExperimentConfig,
    matrix: &[Cell],
    model: &ClusterModel,
    gateway: &Gateway,
) -> String {
    let view = serde_json::json!({
        "sampling": cfg.sampling,
        "tau": cfg.tau,
        "tfidf_k": cfg.tfidf_k,
        "temperature": cfg.temperature,
        "matrix": matrix.iter().map(Cell::to_string).collect::<Vec<_>>(),
        "k": model.k(),
        "kmeans_seed": model.seed(),
        "chat_model": gateway.chat_model(),
        "embed_model": gateway.embed_model(),
    });
    hex::encode(Sha256::digest(view.to_string().as_bytes()))
}

fn cluster_samples(
    members: &[Vec<crate::clustering::Member>],
    base: &SamplingConfig,
    strategy: Strategy,
) -> Vec<Result<SampleResult>> {
    members
        .par_iter()
        .enumerate()
        .map(|(cid, m)| {
            let cfg = base
                .with_strategy(strategy)
                .with_seed(cluster_seed(base.seed, cid));
            cfg.validate().map_err(|e| e.in_cluster(cid))?;
            sample_cluster(cid, m, &cfg)
        })
        .collect()
}

/// Runs every cell of `matrix`. Per-cluster failures mark the cell
/// incomplete; they do not abort the run.
pub fn run_experiment(
    dataset: &Dataset,
    model: &ClusterModel,
    matrix: &[Cell],
    cfg: &ExperimentConfig,
    gateway: &Gateway,
) -> Result<ExperimentReport> {
    if matrix.is_empty() {
        return Err(Error::Config("experiment matrix is empty".into()));
    }
    cfg.validate()?;
    model.check_covers(dataset)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        let members = model.all_members();
        let member_ids: Vec<Vec<String>> = members
            .iter()
            .map(|m| {
                let mut ids: Vec<String> = m.iter().map(|x| x.id.clone()).collect();
                ids.sort();
                ids
            })
            .collect();

        let mut strategies: Vec<Strategy> = matrix.iter().map(|c| c.strategy).collect();
        strategies.sort();
        strategies.dedup();
        let samples: BTreeMap<Strategy, Vec<Result<SampleResult>>> = strategies
            .iter()
            .map(|&s| (s, cluster_samples(&members, &cfg.sampling, s)))
            .collect();

        let mut cells = Vec::with_capacity(matrix.len());
        for cell in matrix {
            let report = run_cell(
                dataset,
                cell,
                &samples[&cell.strategy],
                &member_ids,
                cfg,
                gateway,
            );
            log::info!(
                "cell {cell}: {} clusters evaluated, {} failures",
                report.clusters.len(),
                report.failures.len()
            );
            cells.push(report);
        }

        let flat_samples = samples
            .values()
            .flatten()
            .filter_map(|r| r.as_ref().ok().cloned())
            .collect();
        let config_digest = if cfg.config_digest.is_empty() {
            derived_digest(cfg, matrix, model, gateway)
        } else {
            cfg.config_digest.clone()
        };
        Ok(ExperimentReport {
            config_digest,
            k: model.k(),
            n_images: dataset.len(),
            tau: cfg.tau,
            chat_model: gateway.chat_model().to_string(),
            embed_model: gateway.embed_model().to_string(),
            cells,
            samples: flat_samples,
        })
    })
}

fn run_cell(
    dataset: &Dataset,
    cell: &Cell,
    samples: &[Result<SampleResult>],
    member_ids: &[Vec<String>],
    cfg: &ExperimentConfig,
    gateway: &Gateway,
) -> CellReport {
    let mut failures = Vec::new();
    let ok_samples: Vec<SampleResult> = samples
        .iter()
        .filter_map(|r| r.as_ref().ok().cloned())
        .collect();

    let tfidf = match cell.generator {
        Generator::Tfidf => match TfidfDescriber::new(&ok_samples, dataset, &cfg.preprocessor) {
            Ok(d) => Some(d),
            Err(e) => {
                failures.push(CellFailure::from_error(&e));
                None
            }
        },
        Generator::Llm(_) => None,
    };

    type Outcome = std::result::Result<(ClusterDescription, ClusterEvaluation), CellFailure>;
    let outcomes: Vec<Outcome> = samples
        .par_iter()
        .enumerate()
        .map(|(cid, sample)| {
            let sample = sample.as_ref().map_err(CellFailure::from_error)?;
            let run = || -> Result<(ClusterDescription, ClusterEvaluation)> {
                let description = match (cell.generator, &tfidf) {
                    (Generator::Llm(variant), _) => describe_llm_at(
                        sample,
                        dataset,
                        variant,
                        &cfg.templates,
                        gateway,
                        cfg.temperature,
                    )?,
                    (Generator::Tfidf, Some(d)) => d.describe(cid, cfg.tfidf_k, &cfg.lexicon)?,
                    (Generator::Tfidf, None) => {
                        return Err(
                            Error::Describe("TF-IDF corpus unavailable".into()).in_cluster(cid)
                        )
                    }
                };
                let evaluation =
                    evaluate_cluster(&description, &member_ids[cid], dataset, gateway, cfg.tau)?;
                Ok((description, evaluation))
            };
            run().map_err(|e| CellFailure::from_error(&e))
        })
        .collect();

    let mut clusters = Vec::new();
    let mut descriptions = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((d, e)) => {
                descriptions.push(d);
                clusters.push(e);
            }
            Err(f) => {
                log::warn!("cell {cell}: {}", f.message);
                failures.push(f);
            }
        }
    }
    let overall = aggregate_overall(&clusters).ok();
    let status = if failures.is_empty() && clusters.len() == member_ids.len() {
        CellStatus::Complete
    } else {
        CellStatus::Incomplete
    };
    CellReport {
        cell: cell.to_string(),
        strategy: cell.strategy,
        method: cell.method(),
        prompt: cell.prompt(),
        status,
        failures,
        overall,
        clusters,
        descriptions,
    }
}
