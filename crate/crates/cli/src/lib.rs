//! `esg` command line: every pipeline stage reads and writes files under
//! `--out`, so stages can be rerun independently.

mod transport;

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use esg_core::catalog::Catalog;
use esg_core::clustering::{elbow_scan, kmeans, save_model, write_assignments, Metric};
use esg_core::config::ExperimentConfig;
use esg_core::corpus::{dedup_records, extract_paragraphs, prune_companies, read_jsonl, to_record, write_jsonl, ArticleRecord, Cleaner, RawArticle};
use esg_core::experiment::{
    ablation, apply_split_scaler, baseline_sokolov, evaluate, run_protocol, split, train, Precision, SokolovRatings,
};
use esg_core::features::{assemble, Dataset, FeatureConfig};
use esg_core::gdelt::{GdeltClient, RateLimiter, RetryPolicy, Transport};
use esg_core::models::{Arch, Head, ModelSpec, Network};
use esg_core::synth::generate;
use esg_core::weak_label::{attach_predictions, label_records, read_embeddings, EmbeddingTable};
use esg_core::YearMonth;
use esg_neuro::Scalar;
use serde::Serialize;

pub use transport::UreqTransport;

pub const RAW_FILE: &str = "raw.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const CATALOG_DIR: &str = "catalog";
pub const CLUSTERS_DIR: &str = "clusters";
pub const DATASET_DIR: &str = "dataset";
pub const MODEL_DIR: &str = "model";

#[derive(Debug, Parser)]
#[command(name = "esg", version, about = "Monthly news-signal timeseries and ESG rating prediction")]
pub struct Cli {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the split, clustering and synthetic-data seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for every artifact.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes the effective configuration as JSON.
    Config,
    /// Generates a synthetic catalog and labeled article records.
    Synth {
        #[arg(long)]
        companies: Option<usize>,
    },
    /// Fetches GDELT article lists and article pages into raw JSONL.
    Ingest {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        year: Option<i32>,
        /// Single month `YYYY-MM` instead of the whole year.
        #[arg(long)]
        month: Option<YearMonth>,
        /// Keep only article lists; skip downloading pages.
        #[arg(long)]
        hits_only: bool,
    },
    /// Cleans raw articles into summarized records.
    Clean {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Sets weak relevance labels and/or attaches classifier outputs.
    Label(LabelArgs),
    /// Fits k-means on article embeddings and assigns clusters.
    Cluster(ClusterArgs),
    /// Assembles the monthly series of one year.
    Features {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Trains one model on one split and evaluates it on the test part.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "deep-cnn")]
        arch: Arch,
        #[arg(long, default_value = "regression")]
        head: Head,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Runs every configured model over all splits with baselines.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Records with relevance probabilities for the probability-average baseline.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Trains on each feature subset.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        head: Option<Head>,
    },
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Article embeddings keyed by article id.
    #[arg(long, requires = "definitions")]
    pub embeddings: Option<PathBuf>,
    /// Embeddings of the ESG definitions.
    #[arg(long, requires = "embeddings")]
    pub definitions: Option<PathBuf>,
    /// CSV `article_id,relevance_prob`.
    #[arg(long)]
    pub relevance: Option<PathBuf>,
    /// CSV `article_id,sentiment`.
    #[arg(long)]
    pub sentiment: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Objective for each k in `LO..HI` instead of fitting one model.
    #[arg(long, value_parser = parse_range)]
    pub elbow: Option<RangeInclusive<usize>>,
    /// Records to receive the cluster ids.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

fn parse_range(s: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let (lo, hi): (usize, usize) = (lo.parse().map_err(|e| format!("{e}"))?, hi.parse().map_err(|e| format!("{e}"))?);
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= LO <= HI, got {lo}..{hi}"));
    }
    Ok(lo..=hi)
}

/// Effective configuration: file or defaults, then `--seed`.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.split_seed = seed;
        cfg.clustering.seed = seed;
        cfg.synth.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let or = |p: &Option<PathBuf>, default: &str| p.clone().unwrap_or_else(|| out.join(default));
    match &cli.command {
        Command::Config => {
            let path = out.join("config.json");
            cfg.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Synth { companies } => {
            let mut synth = cfg.synth.clone();
            if let Some(n) = companies {
                synth.n_companies = *n;
            }
            synth.validate()?;
            let data = generate(&synth)?;
            data.catalog.save_dir(&out.join(CATALOG_DIR))?;
            write_jsonl(&out.join(RECORDS_FILE), &data.records)?;
            let coefficients: Vec<(String, f64)> = data.coefficients.iter().map(|(r, b)| (r.to_string(), *b)).collect();
            write_json(&out.join("synth.json"), &serde_json::json!({ "config": synth, "coefficients": coefficients }))?;
            println!("{} companies, {} records", data.catalog.companies().len(), data.records.len());
        }
        Command::Ingest { catalog, year, month, hits_only } => {
            let catalog = Catalog::load_dir(&or(catalog, CATALOG_DIR))?;
            let months: Vec<YearMonth> = match month {
                Some(m) => vec![*m],
                None => YearMonth::year_months(year.unwrap_or(cfg.year)).collect(),
            };
            let transport = UreqTransport::new(Duration::from_secs(60));
            let raw = ingest(&transport, &catalog, &months, &cfg, *hits_only)?;
            write_jsonl(&out.join(RAW_FILE), &raw)?;
            println!("{} articles", raw.len());
        }
        Command::Clean { input, catalog, year } => {
            let catalog = Catalog::load_dir(&or(catalog, CATALOG_DIR))?;
            let raw: Vec<RawArticle> = read_jsonl(&or(input, RAW_FILE))?;
            let records = clean(&raw, &catalog, year.unwrap_or(cfg.year), &cfg)?;
            write_jsonl(&out.join(RECORDS_FILE), &records)?;
            println!("{} of {} articles kept", records.len(), raw.len());
        }
        Command::Label(args) => {
            let path = or(&args.records, RECORDS_FILE);
            let mut records: Vec<ArticleRecord> = read_jsonl(&path)?;
            ensure!(
                args.embeddings.is_some() || args.relevance.is_some() || args.sentiment.is_some(),
                "nothing to do: pass --embeddings/--definitions, --relevance or --sentiment"
            );
            if let (Some(e), Some(d)) = (&args.embeddings, &args.definitions) {
                let table = EmbeddingTable::new(read_embeddings(e)?, read_embeddings(d)?)?;
                label_records(&mut records, &table, &cfg.weak_label)?;
            }
            attach_predictions(&mut records, args.relevance.as_deref(), args.sentiment.as_deref())?;
            write_jsonl(&out.join(RECORDS_FILE), &records)?;
            let relevant =
                records.iter().filter(|r| r.relevance_label == Some(esg_core::corpus::RelevanceLabel::Relevant)).count();
            println!("{relevant} of {} records relevant", records.len());
        }
        Command::Cluster(args) => cluster(args, &cfg, out)?,
        Command::Features { records, catalog, year } => {
            let catalog = Catalog::load_dir(&or(catalog, CATALOG_DIR))?;
            let records: Vec<ArticleRecord> = read_jsonl(&or(records, RECORDS_FILE))?;
            let year = year.unwrap_or(cfg.year);
            let dataset = features(&records, &catalog, year, &cfg.features)?;
            dataset.save(&out.join(DATASET_DIR))?;
            dataset.export_csv(&out.join("series.csv"))?;
            println!("{} company series for {year}", dataset.series.len());
        }
        Command::Train { dataset, arch, head, year } => {
            let dataset = Dataset::load(&or(dataset, DATASET_DIR))?;
            if let Some(y) = year {
                ensure!(*y == dataset.year, "dataset holds {} but --year is {y}", dataset.year);
            }
            let spec = ModelSpec::new(*arch, *head).with_input_rows(dataset.rows().len());
            let summary = match cfg.train.precision {
                Precision::F32 => train_one::<f32>(&dataset, &spec, &cfg, out)?,
                Precision::F64 => train_one::<f64>(&dataset, &spec, &cfg, out)?,
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate { dataset, records } => {
            let dataset = Dataset::load(&or(dataset, DATASET_DIR))?;
            let sokolov = match records {
                Some(path) => Some(sokolov_ratings(&read_jsonl(path)?, &dataset)?),
                None => None,
            };
            let rows = dataset.rows().len();
            let specs: Vec<ModelSpec> = cfg.models.iter().map(|s| s.clone().with_input_rows(rows)).collect();
            let report = run_protocol(&dataset.series, &specs, sokolov.as_ref(), &cfg.train)?;
            std::fs::write(out.join("report.json"), report.to_json()?)?;
            let table = report.to_table();
            std::fs::write(out.join("report.txt"), &table)?;
            println!("{table}");
        }
        Command::Ablate { dataset, arch, head } => {
            let dataset = Dataset::load(&or(dataset, DATASET_DIR))?;
            let spec = match (arch, head) {
                (None, None) => None,
                (a, h) => Some(ModelSpec::new(a.unwrap_or(Arch::DeepCnn), h.unwrap_or(Head::Regression))),
            };
            let report = ablation(&dataset.series, spec, &cfg.train)?;
            write_json(&out.join("ablation.json"), &report)?;
            let table = report.to_table();
            std::fs::write(out.join("ablation.txt"), &table)?;
            println!("{table}");
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Article lists of every company-month, then each listed page. Pages that
/// fail to download are skipped.
pub fn ingest<T: Transport>(
    transport: &T,
    catalog: &Catalog,
    months: &[YearMonth],
    cfg: &ExperimentConfig,
    hits_only: bool,
) -> Result<Vec<RawArticle>> {
    let ingest = &cfg.ingest;
    let mut client = GdeltClient::new(transport)
        .with_endpoint(ingest.endpoint.clone())
        .with_rate_limiter(RateLimiter::new(ingest.requests_per_second, 1))
        .with_retry(RetryPolicy { attempts: ingest.retry_attempts, ..RetryPolicy::default() });
    if let Some(dir) = &ingest.archive_dir {
        client = client.with_archive(dir.clone());
    }
    let mut out = Vec::new();
    for company in catalog.companies() {
        for &month in months {
            let hits = client
                .fetch_company_month(company, month, &ingest.combination)
                .with_context(|| format!("fetching {} {month}", company.id))?;
            for hit in hits.into_iter().take(ingest.max_records) {
                let paragraphs = if hits_only {
                    Vec::new()
                } else {
                    match transport.get(&hit.url, &[]) {
                        Ok(r) if (200..300).contains(&r.status) => extract_paragraphs(&r.body),
                        _ => continue,
                    }
                };
                out.push(RawArticle {
                    company_id: company.id.clone(),
                    month,
                    url: hit.url,
                    title: hit.title,
                    paragraphs,
                    seen_date: Some(hit.seen_date),
                });
            }
        }
    }
    Ok(out)
}

/// Cleaned, summarized, deduplicated records of rated companies with enough
/// articles in `year`.
pub fn clean(raw: &[RawArticle], catalog: &Catalog, year: i32, cfg: &ExperimentConfig) -> Result<Vec<ArticleRecord>> {
    let cleaner = Cleaner::new(&cfg.clean)?;
    let records: Vec<ArticleRecord> = raw
        .iter()
        .filter_map(|r| catalog.company(&r.company_id).and_then(|c| cleaner.clean(r, c)))
        .filter_map(|r| to_record(&r))
        .collect();
    Ok(prune_companies(&dedup_records(records), catalog.ratings(), year))
}

fn cluster(args: &ClusterArgs, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let embeddings = read_embeddings(&args.embeddings)?;
    let points = embeddings.to_rows();
    let mut km = cfg.clustering;
    if let Some(k) = args.k {
        km.k = k;
    }
    if let Some(m) = args.metric {
        km.metric = m;
    }
    if let Some(range) = &args.elbow {
        let scan = elbow_scan(&points, range.clone(), &km)?;
        let mut csv = String::from("k,objective\n");
        for (k, obj) in &scan {
            csv.push_str(&format!("{k},{obj}\n"));
        }
        std::fs::write(out.join("elbow.csv"), &csv)?;
        print!("{csv}");
        return Ok(());
    }
    let (model, assignments) = kmeans(&points, &km)?;
    let dir = out.join(CLUSTERS_DIR);
    save_model(&dir, &model)?;
    write_assignments(&dir.join("assignments.csv"), embeddings.ids(), &assignments)?;
    if let Some(path) = &args.records {
        let mut records: Vec<ArticleRecord> = read_jsonl(path)?;
        for r in &mut records {
            let i = embeddings
                .ids()
                .iter()
                .position(|id| *id == r.article_id)
                .with_context(|| format!("no embedding for article {}", r.article_id))?;
            r.cluster_id = Some(assignments[i]);
        }
        write_jsonl(&out.join(RECORDS_FILE), &records)?;
    }
    println!("k={} {:?} objective {} after {} iterations", model.k, model.metric, model.sse, model.iterations);
    Ok(())
}

/// Unscaled series; scalers are fitted per split.
pub fn features(records: &[ArticleRecord], catalog: &Catalog, year: i32, cfg: &FeatureConfig) -> Result<Dataset> {
    let series = assemble(records, catalog, year, cfg)?;
    ensure!(!series.is_empty(), "no company has both articles and a rating in {year}");
    Ok(Dataset { year, config: *cfg, series, scaler: None })
}

fn sokolov_ratings(records: &[ArticleRecord], dataset: &Dataset) -> Result<SokolovRatings> {
    let keys: Vec<(String, i32)> = dataset.series.iter().map(|s| s.key()).collect();
    let ratings = baseline_sokolov(records, &keys)?;
    if ratings.ratings.is_empty() {
        bail!("no record carries a relevance probability");
    }
    Ok(ratings)
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub model: String,
    pub parameters: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub test: esg_core::experiment::HeadMetrics,
    pub test_abs_diff: esg_core::experiment::AbsDiff,
}

/// First split of the configured seed; writes the checkpoint, scaler,
/// history and test predictions under `out/model`.
pub fn train_one<T: Scalar>(dataset: &Dataset, spec: &ModelSpec, cfg: &ExperimentConfig, out: &Path) -> Result<TrainSummary> {
    let tc = &cfg.train;
    let parts = split(dataset.series.len(), tc, tc.split_seed)?;
    let (scaler, scaled) = apply_split_scaler(&dataset.series, &parts)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| &scaled[i]).collect::<Vec<_>>();
    let (train_set, val, test) = (pick(&parts.train), pick(&parts.val), pick(&parts.test));
    ensure!(!test.is_empty(), "test split is empty");
    let mut net = Network::<T>::build(spec, tc.split_seed)?;
    let outcome = train(&mut net, &train_set, &val, tc, tc.split_seed ^ 0x5eed)?;
    let eval = evaluate(&mut net, &test)?;
    let targets: Vec<f64> = test.iter().map(|s| s.target).collect();
    let abs = esg_core::experiment::abs_diff_metrics(&eval.predictions, &targets)?;

    let dir = out.join(MODEL_DIR);
    net.save(&dir, None)?;
    write_json(&dir.join("scaler.json"), &scaler)?;
    write_json(&dir.join("history.json"), &outcome)?;
    let predictions: Vec<serde_json::Value> = test
        .iter()
        .zip(&eval.predictions)
        .map(|(s, p)| serde_json::json!({ "company_id": s.company_id, "target": s.target, "prediction": p }))
        .collect();
    write_json(&dir.join("predictions.json"), &predictions)?;
    let summary = TrainSummary {
        model: spec.label(),
        parameters: net.parameter_count(),
        n_train: train_set.len(),
        n_val: val.len(),
        n_test: test.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        test: eval.metrics,
        test_abs_diff: abs,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
