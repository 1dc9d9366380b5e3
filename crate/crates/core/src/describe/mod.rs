//! Cluster description generation: chat-model prompting or the TF-IDF noun
//! template.

pub mod pos;
pub mod prompt;
pub mod tfidf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::text::TextPreprocessor;
use crate::dataset::{image_caption_document, Dataset};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, DEFAULT_TEMPERATURE};
use crate::sampling::{SampleResult, Strategy};

pub use pos::{filter_nouns, PosLexicon, PosTag};
pub use prompt::{render_prompt, PromptTemplates, PromptVariant};
pub use tfidf::{tfidf_keywords, KeywordScore, TfidfCorpus, DEFAULT_TOP_K};

pub const TFIDF_FALLBACK: &str =
    "Images in this cluster share visual similarity without dominant nameable objects.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Llm,
    Tfidf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Llm => "llm",
            Method::Tfidf => "tfidf",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "llm" => Ok(Method::Llm),
            "tfidf" => Ok(Method::Tfidf),
            _ => Err(Error::Config(format!(
                "unknown method {s:?} (expected llm or tfidf)"
            ))),
        }
    }
}

/// A generation method together with its prompt, as used in experiment cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Generator {
    Llm(PromptVariant),
    Tfidf,
}

impl Generator {
    pub const ALL: [Generator; 3] = [
        Generator::Llm(PromptVariant::Standard),
        Generator::Llm(PromptVariant::Cot),
        Generator::Tfidf,
    ];

    pub fn method(self) -> Method {
        match self {
            Generator::Llm(_) => Method::Llm,
            Generator::Tfidf => Method::Tfidf,
        }
    }

    pub fn prompt(self) -> Option<PromptVariant> {
        match self {
            Generator::Llm(p) => Some(p),
            Generator::Tfidf => None,
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Llm(p) => write!(f, "llm-{p}"),
            Generator::Tfidf => f.write_str("tfidf"),
        }
    }
}

impl From<Generator> for String {
    fn from(g: Generator) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for Generator {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "tfidf" {
            return Ok(Generator::Tfidf);
        }
        match s.strip_prefix("llm-") {
            Some(p) => Ok(Generator::Llm(p.parse()?)),
            None => Err(Error::Config(format!(
                "unknown generation method {s:?} (expected llm-standard, llm-cot or tfidf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSample {
    pub strategy: Strategy,
    pub size: usize,
    /// SHA-256 over the selected ids, newline separated.
    pub digest: String,
}

impl SourceSample {
    pub fn of(sample: &SampleResult) -> Self {
        let mut h = Sha256::new();
        for id in &sample.selected {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        Self {
            strategy: sample.strategy,
            size: sample.selected.len(),
            digest: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDescription {
    pub cluster_id: usize,
    pub method: Method,
    pub prompt: Option<PromptVariant>,
    pub text: String,
    pub source_sample: SourceSample,
    pub model_name: Option<String>,
    /// Set when the TF-IDF route found no nouns and used the fallback text.
    #[serde(default)]
    pub fallback: bool,
}

/// One `"- caption; caption"` line per sampled image, in sample order.
pub fn build_caption_block(sample: &SampleResult, dataset: &Dataset) -> Result<String> {
    if sample.selected.is_empty() {
        return Err(Error::Describe("empty sample".into()));
    }
    let mut lines = Vec::with_capacity(sample.selected.len());
    for id in &sample.selected {
        let rec = dataset
            .get(id)
            .ok_or_else(|| Error::Describe(format!("sampled id {id:?} not in dataset")))?;
        lines.push(format!("- {}", image_caption_document(rec)));
    }
    Ok(lines.join("\n"))
}

pub fn describe_llm(
    sample: &SampleResult,
    dataset: &Dataset,
    variant: PromptVariant,
    templates: &PromptTemplates,
    gateway: &Gateway,
) -> Result<ClusterDescription> {
    describe_llm_at(
        sample,
        dataset,
        variant,
        templates,
        gateway,
        DEFAULT_TEMPERATURE,
    )
}

/// [`describe_llm`] with an explicit sampling temperature.
pub fn describe_llm_at(
    sample: &SampleResult,
    dataset: &Dataset,
    variant: PromptVariant,
    templates: &PromptTemplates,
    gateway: &Gateway,
    temperature: f64,
) -> Result<ClusterDescription> {
    let cluster_id = sample.cluster_id;
    let run = || -> Result<ClusterDescription> {
        let block = build_caption_block(sample, dataset)?;
        let mut request = render_prompt(templates, variant, cluster_id, &block)?;
        request.temperature = temperature;
        let text = gateway.chat(&request)?;
        Ok(ClusterDescription {
            cluster_id,
            method: Method::Llm,
            prompt: Some(variant),
            text,
            source_sample: SourceSample::of(sample),
            model_name: Some(gateway.chat_model().to_string()),
            fallback: false,
        })
    };
    run().map_err(|e| e.in_cluster(cluster_id))
}

/// `"Images predominantly featuring a, b and c."`
pub fn render_keyword_template(terms: &[&str]) -> Option<String> {
    let list = match terms {
        [] => return None,
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    };
    Some(format!("Images predominantly featuring {list}."))
}

/// TF-IDF describer for one set of per-cluster samples. The corpus is built
/// once and shared by every cluster's description.
#[derive(Debug, Clone)]
pub struct TfidfDescriber {
    corpus: TfidfCorpus,
    doc_index: Vec<(usize, SourceSample)>,
}

impl TfidfDescriber {
    pub fn new(
        samples: &[SampleResult],
        dataset: &Dataset,
        pre: &TextPreprocessor,
    ) -> Result<Self> {
        let mut docs = Vec::with_capacity(samples.len());
        let mut doc_index = Vec::with_capacity(samples.len());
        for s in samples {
            let mut captions = Vec::new();
            for id in &s.selected {
                let rec = dataset.get(id).ok_or_else(|| {
                    Error::Describe(format!("sampled id {id:?} not in dataset"))
                        .in_cluster(s.cluster_id)
                })?;
                captions.extend(rec.captions.iter().map(String::as_str));
            }
            docs.push(captions.join("\n"));
            doc_index.push((s.cluster_id, SourceSample::of(s)));
        }
        Ok(Self {
            corpus: TfidfCorpus::build(&docs, pre),
            doc_index,
        })
    }

    pub fn corpus(&self) -> &TfidfCorpus {
        &self.corpus
    }

    pub fn describe(
        &self,
        cluster_id: usize,
        k: usize,
        lexicon: &PosLexicon,
    ) -> Result<ClusterDescription> {
        let run = || -> Result<ClusterDescription> {
            let pos = self
                .doc_index
                .iter()
                .position(|(c, _)| *c == cluster_id)
                .ok_or_else(|| Error::Describe("no sample for this cluster".into()))?;
            let nouns = self.corpus.top_nouns(pos, k, lexicon)?;
            let terms: Vec<&str> = nouns.iter().map(|k| k.term.as_str()).collect();
            let (text, fallback) = match render_keyword_template(&terms) {
                Some(t) => (t, false),
                None => {
                    log::warn!("cluster {cluster_id}: no noun keywords, using fallback text");
                    (TFIDF_FALLBACK.to_string(), true)
                }
            };
            Ok(ClusterDescription {
                cluster_id,
                method: Method::Tfidf,
                prompt: None,
                text,
                source_sample: self.doc_index[pos].1.clone(),
                model_name: None,
                fallback,
            })
        };
        run().map_err(|e| e.in_cluster(cluster_id))
    }
}

/// TF-IDF description of one cluster, building the corpus from `samples`.
pub fn describe_tfidf(
    samples: &[SampleResult],
    dataset: &Dataset,
    cluster_id: usize,
    k: usize,
) -> Result<ClusterDescription> {
    TfidfDescriber::new(samples, dataset, TextPreprocessor::bundled())?.describe(
        cluster_id,
        k,
        PosLexicon::bundled(),
    )
}
