//! Command-line front end. Each stage reads and writes artifacts under the
//! output directory so later stages can resume without redoing earlier ones.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 partial
//! experiment, 3 transport failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::clustering::{kmeans_fit, load_model, save_model, ClusterModel};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::describe::{
    describe_llm_at, ClusterDescription, Generator, Method, PromptVariant, TfidfDescriber,
};
use crate::error::{Error, Result};
use crate::eval::report::{self, write_report};
use crate::eval::{
    aggregate_overall, evaluate_cluster, run_experiment, ClusterEvaluation, ExperimentReport,
};
use crate::gateway::{BackendKind, Gateway};
use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::sampling::{cluster_seed, sample_cluster, SampleResult, Strategy};
use crate::synth::{synth_dataset, SynthConfig};

pub const MODEL_FILE: &str = "model.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const DESCRIPTIONS_FILE: &str = "descriptions.jsonl";
pub const EVALUATIONS_FILE: &str = "evaluations.jsonl";
pub const DIGEST_FILE: &str = "config_digest.txt";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "clusterscribe",
    version,
    about = "Describe and score clusters of captioned images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset file (line-delimited JSON).
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Sample size per cluster.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// random, centroid, stratified, hybrid, density or all.
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    /// llm or tfidf.
    #[arg(long, global = true)]
    pub method: Option<Method>,
    /// standard or cot.
    #[arg(long, global = true)]
    pub prompt: Option<PromptVariant>,
    /// http or mock.
    #[arg(long, global = true)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Response cache directory.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Directory of asset overrides.
    #[arg(long, global = true)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset file and print a summary.
    Validate {
        /// Dataset file; defaults to --dataset.
        path: Option<PathBuf>,
    },
    /// Fit K-means and write the model dump.
    Cluster,
    /// Sample each cluster with one strategy.
    Sample,
    /// Describe each sampled cluster with one method.
    Describe,
    /// Score the stored descriptions against all cluster members.
    Evaluate,
    /// Run the full experiment matrix.
    Run {
        /// Fit K-means first instead of loading the model dump.
        #[arg(long)]
        cluster_first: bool,
    },
    /// Write a synthetic dataset with topic-dependent features and captions.
    Synth {
        #[arg(long, default_value_t = 3)]
        topics: usize,
        #[arg(long, default_value_t = 20)]
        per_topic: usize,
        /// Destination dataset file.
        #[arg(long)]
        output: PathBuf,
    },
}

impl Overrides {
    /// Config file (if any) with these flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.n {
            cfg.sampling.n = v;
        }
        if let Some(v) = self.strategy {
            cfg.sampling.strategy = v;
        }
        if let Some(v) = self.backend {
            cfg.backend.kind = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.cache {
            cfg.cache = Some(v.clone());
        }
        if let Some(v) = &self.assets {
            cfg.assets = Some(v.clone());
        }
        Ok(cfg)
    }

    /// Generator selected by `--method` and `--prompt`.
    pub fn generator(&self) -> Generator {
        match self.method {
            Some(Method::Tfidf) => Generator::Tfidf,
            _ => Generator::Llm(self.prompt.unwrap_or(PromptVariant::Standard)),
        }
    }

    /// Keeps only matrix cells matching the strategy, method and prompt flags.
    pub fn filter_matrix(&self, cfg: &mut RunConfig) -> Result<()> {
        cfg.matrix.retain(|c| {
            self.strategy.is_none_or(|s| c.strategy == s)
                && self.method.is_none_or(|m| c.method() == m)
                && self.prompt.is_none_or(|p| c.prompt() == Some(p))
        });
        if cfg.matrix.is_empty() {
            return Err(Error::Config(
                "no matrix cell matches the --strategy/--method/--prompt filters".into(),
            ));
        }
        Ok(())
    }
}

pub fn dataset_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset.as_deref().ok_or_else(|| {
        Error::Config("no dataset given (use --dataset or `dataset` in the config file)".into())
    })
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

fn gateway(cfg: &RunConfig) -> Result<Gateway> {
    Ok(Gateway::from_config(&cfg.backend, cfg.cache.as_deref())?)
}

fn load_model_for(cfg: &RunConfig, dataset: &Dataset) -> Result<ClusterModel> {
    let path = cfg.out.join(MODEL_FILE);
    if !path.exists() {
        return Err(Error::Config(format!(
            "model dump {} not found; run `cluster` first or pass --cluster-first",
            path.display()
        )));
    }
    let model = load_model(&path)?;
    model.check_covers(dataset)?;
    Ok(model)
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<Dataset> {
    let ds = load_dataset(path)?;
    let w = |e| Error::io("<stdout>", e);
    writeln!(out, "records: {}", ds.len()).map_err(w)?;
    writeln!(out, "feature_dim: {}", ds.feature_dim()).map_err(w)?;
    writeln!(out, "captions per record:").map_err(w)?;
    for (count, records) in ds.caption_histogram() {
        writeln!(out, "  {count}: {records}").map_err(w)?;
    }
    Ok(ds)
}

pub fn cmd_cluster(cfg: &RunConfig, out: &mut dyn Write) -> Result<ClusterModel> {
    let ds = load_dataset(dataset_path(cfg)?)?;
    let model = kmeans_fit(&ds, &cfg.kmeans_params())?;
    ensure_out(cfg)?;
    save_model(&model, &cfg.out.join(MODEL_FILE))?;
    let w = |e| Error::io("<stdout>", e);
    writeln!(out, "k: {}", model.k()).map_err(w)?;
    writeln!(out, "sse: {}", model.sse()).map_err(w)?;
    writeln!(out, "iterations: {}", model.iterations()).map_err(w)?;
    for (c, size) in model.cluster_sizes().iter().enumerate() {
        writeln!(out, "  cluster {c}: {size}").map_err(w)?;
    }
    Ok(model)
}

/// Samples every cluster with `cfg.sampling.strategy`; clusters that cannot
/// be sampled are reported and skipped.
pub fn cmd_sample(cfg: &RunConfig, out: &mut dyn Write) -> Result<(Vec<SampleResult>, Vec<Error>)> {
    let ds = load_dataset(dataset_path(cfg)?)?;
    let model = load_model_for(cfg, &ds)?;
    let base = cfg.sampling_config();
    base.validate()?;
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (cid, members) in model.all_members().iter().enumerate() {
        let c = base.with_seed(cluster_seed(cfg.seed, cid));
        match sample_cluster(cid, members, &c) {
            Ok(s) => samples.push(s),
            Err(e) => failures.push(e),
        }
    }
    write_jsonl(&cfg.out.join(SAMPLES_FILE), &samples)?;
    writeln!(
        out,
        "{} clusters sampled with {}",
        samples.len(),
        base.strategy
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok((samples, failures))
}

pub fn cmd_describe(
    cfg: &RunConfig,
    generator: Generator,
    out: &mut dyn Write,
) -> Result<(Vec<ClusterDescription>, Vec<Error>)> {
    let ds = load_dataset(dataset_path(cfg)?)?;
    let gw = gateway(cfg)?;
    let exp = cfg.experiment_config()?;
    let samples: Vec<SampleResult> = read_jsonl(&cfg.out.join(SAMPLES_FILE))?;
    let mut descriptions = Vec::new();
    let mut failures = Vec::new();
    let tfidf = match generator {
        Generator::Tfidf => Some(TfidfDescriber::new(&samples, &ds, &exp.preprocessor)?),
        Generator::Llm(_) => None,
    };
    for s in &samples {
        let d = match (generator, &tfidf) {
            (Generator::Llm(v), _) => {
                describe_llm_at(s, &ds, v, &exp.templates, &gw, exp.temperature)
            }
            (Generator::Tfidf, Some(t)) => t.describe(s.cluster_id, exp.tfidf_k, &exp.lexicon),
            (Generator::Tfidf, None) => unreachable!("describer built above"),
        };
        match d {
            Ok(d) => descriptions.push(d),
            Err(e) => failures.push(e),
        }
    }
    write_jsonl(&cfg.out.join(DESCRIPTIONS_FILE), &descriptions)?;
    let w = |e| Error::io("<stdout>", e);
    for d in &descriptions {
        writeln!(out, "cluster {}: {}", d.cluster_id, d.text).map_err(w)?;
    }
    Ok((descriptions, failures))
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<(Vec<ClusterEvaluation>, Vec<Error>)> {
    let ds = load_dataset(dataset_path(cfg)?)?;
    let model = load_model_for(cfg, &ds)?;
    let gw = gateway(cfg)?;
    let descriptions: Vec<ClusterDescription> = read_jsonl(&cfg.out.join(DESCRIPTIONS_FILE))?;
    let mut evals = Vec::new();
    let mut failures = Vec::new();
    for d in &descriptions {
        let mut ids: Vec<String> = match model.cluster_members(d.cluster_id) {
            Ok(m) => m.into_iter().map(|m| m.id).collect(),
            Err(e) => {
                failures.push(e.in_cluster(d.cluster_id));
                continue;
            }
        };
        ids.sort();
        match evaluate_cluster(d, &ids, &ds, &gw, cfg.tau) {
            Ok(e) => evals.push(e),
            Err(e) => failures.push(e),
        }
    }
    write_jsonl(&cfg.out.join(EVALUATIONS_FILE), &evals)?;
    let w = |e| Error::io("<stdout>", e);
    for e in &evals {
        writeln!(
            out,
            "cluster {}: n={} mean_sim={:.4} coverage={:.1}%",
            e.cluster_id, e.n_images, e.mean_similarity, e.coverage_at_tau
        )
        .map_err(w)?;
    }
    if let Ok(o) = aggregate_overall(&evals) {
        writeln!(
            out,
            "overall: mean_sim={:.4} coverage={:.1}%",
            o.mean_similarity, o.coverage
        )
        .map_err(w)?;
    }
    Ok((evals, failures))
}

/// Runs the configured matrix and writes the report, CSV tables, samples,
/// descriptions and config digest into the output directory.
pub fn cmd_run(
    cfg: &RunConfig,
    cluster_first: bool,
    out: &mut dyn Write,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let gw = gateway(cfg)?;
    let exp = cfg.experiment_config()?;
    let ds = load_dataset(dataset_path(cfg)?)?;
    ensure_out(cfg)?;
    let model = if cluster_first {
        let m = kmeans_fit(&ds, &cfg.kmeans_params())?;
        save_model(&m, &cfg.out.join(MODEL_FILE))?;
        m
    } else {
        load_model_for(cfg, &ds)?
    };
    let report = run_experiment(&ds, &model, &cfg.matrix, &exp, &gw)?;
    write_report(&report, &cfg.out)?;
    write_jsonl(&cfg.out.join(SAMPLES_FILE), &report.samples)?;
    write_jsonl(
        &cfg.out.join(DESCRIPTIONS_FILE),
        report.cells.iter().flat_map(|c| &c.descriptions),
    )?;
    write_atomic(
        &cfg.out.join(DIGEST_FILE),
        format!("{}\n", report.config_digest).as_bytes(),
    )?;
    let overall = report::overall_csv(&report)?;
    out.write_all(&overall)
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(report)
}

pub fn cmd_synth(topics: usize, per_topic: usize, seed: u64, output: &Path) -> Result<Dataset> {
    let ds = synth_dataset(&SynthConfig {
        topics,
        per_topic,
        seed,
        ..SynthConfig::default()
    })?;
    save_dataset(&ds, output)?;
    Ok(ds)
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_transport() {
        EXIT_TRANSPORT
    } else {
        EXIT_INVALID
    }
}

fn stage_exit(failures: &[Error]) -> i32 {
    for f in failures {
        eprintln!("error: {f}");
    }
    if failures.iter().any(Error::is_transport) {
        EXIT_TRANSPORT
    } else if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let o = &cli.overrides;
    let mut cfg = o.resolve()?;
    match &cli.command {
        Command::Validate { path } => {
            let p = match path {
                Some(p) => p.as_path(),
                None => dataset_path(&cfg)?,
            };
            cmd_validate(p, out)?;
            Ok(EXIT_OK)
        }
        Command::Cluster => {
            cmd_cluster(&cfg, out)?;
            Ok(EXIT_OK)
        }
        Command::Sample => Ok(stage_exit(&cmd_sample(&cfg, out)?.1)),
        Command::Describe => Ok(stage_exit(&cmd_describe(&cfg, o.generator(), out)?.1)),
        Command::Evaluate => Ok(stage_exit(&cmd_evaluate(&cfg, out)?.1)),
        Command::Run { cluster_first } => {
            o.filter_matrix(&mut cfg)?;
            let report = cmd_run(&cfg, *cluster_first, out)?;
            for c in &report.cells {
                for f in &c.failures {
                    eprintln!("error: cell {}: {}", c.cell, f.message);
                }
            }
            Ok(if report.has_transport_failure() {
                EXIT_TRANSPORT
            } else if report.is_complete() {
                EXIT_OK
            } else {
                EXIT_PARTIAL
            })
        }
        Command::Synth {
            topics,
            per_topic,
            output,
        } => {
            cmd_synth(*topics, *per_topic, cfg.seed, output)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(&cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("clusterscribe").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "k = 4\nseed = 9\n[sampling]\nn = 10\n").unwrap();
        let cli = parse(&[
            "run",
            "--config",
            file.to_str().unwrap(),
            "--k",
            "6",
            "--tau",
            "0.3",
        ]);
        let cfg = cli.overrides.resolve().unwrap();
        assert_eq!((cfg.k, cfg.seed, cfg.sampling.n, cfg.tau), (6, 9, 10, 0.3));
    }

    #[test]
    fn matrix_filter() {
        let cli = parse(&["run", "--strategy", "density", "--method", "llm"]);
        let mut cfg = cli.overrides.resolve().unwrap();
        cli.overrides.filter_matrix(&mut cfg).unwrap();
        let names: Vec<String> = cfg.matrix.iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["density/llm-standard", "density/llm-cot"]);
        let cli = parse(&["run", "--method", "tfidf", "--prompt", "cot"]);
        let mut cfg = cli.overrides.resolve().unwrap();
        assert!(cli.overrides.filter_matrix(&mut cfg).is_err());
    }

    #[test]
    fn generator_from_flags() {
        assert_eq!(
            parse(&["describe"]).overrides.generator(),
            Generator::Llm(PromptVariant::Standard)
        );
        assert_eq!(
            parse(&["describe", "--prompt", "cot"])
                .overrides
                .generator(),
            Generator::Llm(PromptVariant::Cot)
        );
        assert_eq!(
            parse(&["describe", "--method", "tfidf"])
                .overrides
                .generator(),
            Generator::Tfidf
        );
    }

    #[test]
    fn missing_dataset_names_the_path() {
        let err = cmd_validate(Path::new("/nonexistent/data.jsonl"), &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/data.jsonl"));
        assert_eq!(exit_code(&err), EXIT_INVALID);
    }
}
