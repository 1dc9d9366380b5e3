//! Cluster description pipeline for captioned image collections.
//!
//! The crate clusters image feature vectors with K-means, selects
//! representative members per cluster under several sampling strategies,
//! describes each cluster either through a chat model or with a TF-IDF
//! keyword template, and scores every description against the caption text
//! of all cluster members using embedding cosine similarity.
//!
//! Model access goes through [`gateway`], which ships deterministic mock
//! backends so complete experiment matrices run offline and reproducibly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assets;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod describe;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod io;
pub mod sampling;
pub mod synth;

pub use clustering::{kmeans_fit, ClusterModel, KMeansParams, Member};
pub use dataset::text::{preprocess_caption, TextPreprocessor, TokenizedCaption};
pub use dataset::{image_caption_document, load_dataset, Dataset, ImageRecord};
pub use describe::{ClusterDescription, Method, PromptVariant};
pub use error::{Error, Result};
pub use eval::{ClusterEvaluation, ExperimentReport, OverallMetrics};
pub use gateway::{EmbeddingVector, Gateway};
pub use sampling::{Bandwidth, SampleResult, SamplingConfig, Strategy};
