//! Run configuration, read from TOML. Every field has a default, so an empty
//! file is valid; command-line flags are applied on top by the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assets::AssetSource;
use crate::clustering::{KMeansParams, DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_N_INIT, DEFAULT_TOL};
use crate::dataset::text::TextPreprocessor;
use crate::describe::{PosLexicon, PromptTemplates, DEFAULT_TOP_K};
use crate::error::{Error, Result};
use crate::eval::{Cell, ExperimentConfig, DEFAULT_TAU};
use crate::gateway::{BackendConfig, DEFAULT_TEMPERATURE};
use crate::sampling::{
    Bandwidth, SamplingConfig, Strategy, DEFAULT_HYBRID_FRACTIONS, DEFAULT_N, DEFAULT_STRATA,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    /// Strategy used by the single-stage `sample` command.
    pub strategy: Strategy,
    pub n: usize,
    pub strata: usize,
    pub hybrid_fractions: [f64; 3],
    pub kde_bandwidth: Bandwidth,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Random,
            n: DEFAULT_N,
            strata: DEFAULT_STRATA,
            hybrid_fractions: DEFAULT_HYBRID_FRACTIONS,
            kde_bandwidth: Bandwidth::Scott,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    /// Directory overriding bundled stopwords, lemma rules, lexicon and
    /// prompt templates file by file.
    pub assets: Option<PathBuf>,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    pub tau: f64,
    pub temperature: f64,
    pub tfidf_k: usize,
    pub jobs: usize,
    pub sampling: SamplingSection,
    pub matrix: Vec<Cell>,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out: PathBuf::from("out"),
            cache: None,
            assets: None,
            k: DEFAULT_K,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            n_init: DEFAULT_N_INIT,
            tau: DEFAULT_TAU,
            temperature: DEFAULT_TEMPERATURE,
            tfidf_k: DEFAULT_TOP_K,
            jobs: 0,
            sampling: SamplingSection::default(),
            matrix: Cell::full_matrix(),
            backend: BackendConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sampling settings with the global seed; per-cluster seeds derive from it.
    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            strategy: self.sampling.strategy,
            n: self.sampling.n,
            seed: self.seed,
            strata: self.sampling.strata,
            hybrid_fractions: self.sampling.hybrid_fractions,
            kde_bandwidth: self.sampling.kde_bandwidth,
        }
    }

    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            n_init: self.n_init,
        }
    }

    pub fn asset_source(&self) -> AssetSource {
        match &self.assets {
            Some(dir) => AssetSource::from_dir(dir),
            None => AssetSource::embedded(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.matrix.is_empty() {
            return Err(Error::Config("matrix must list at least one cell".into()));
        }
        if !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "tau must be finite, got {}",
                self.tau
            )));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.tfidf_k == 0 {
            return Err(Error::Config("tfidf_k must be at least 1".into()));
        }
        let mut s = self.sampling_config();
        if s.strategy != Strategy::Stratified {
            s.strategy = Strategy::Random;
        }
        s.validate()?;
        self.backend.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring settings that do not
    /// change results (output and cache locations, thread count).
    pub fn digest(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        canon.cache = None;
        canon.jobs = 0;
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let src = self.asset_source();
        Ok(ExperimentConfig {
            sampling: self.sampling_config(),
            tau: self.tau,
            tfidf_k: self.tfidf_k,
            temperature: self.temperature,
            jobs: self.jobs,
            config_digest: self.digest(),
            templates: PromptTemplates::load(&src)?,
            preprocessor: TextPreprocessor::from_source(&src)?,
            lexicon: PosLexicon::from_source(&src)?,
        })
    }
}
