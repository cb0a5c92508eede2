use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use clap::Parser;
use esg_cli::{clean, ingest, run, Cli};
use esg_core::catalog::{Catalog, Company, RatingRecord};
use esg_core::clustering::ClusterModel;
use esg_core::config::ExperimentConfig;
use esg_core::corpus::{read_jsonl, ArticleRecord, RawArticle};
use esg_core::features::Dataset;
use esg_core::gdelt::{HttpResponse, Transport};
use esg_core::weak_label::{write_embeddings, Embeddings};
use esg_core::YearMonth;

fn cli(out: &Path, args: &[&str]) -> Cli {
    let mut argv = vec!["esg".to_string(), "--out".into(), out.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    Cli::try_parse_from(argv).expect("arguments parse")
}

fn fast_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.n_companies = 40;
    cfg.train.max_epochs = 2;
    cfg.train.max_epochs_deep_transformer_regression = 2;
    cfg.train.n_runs = 2;
    cfg.models.retain(|m| m.arch == esg_core::models::Arch::BasicCnn);
    let path = dir.join("fast.json");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = fast_config(out).display().to_string();
    let with_config = |args: &[&str]| {
        let mut v = vec!["--config", config.as_str()];
        v.extend_from_slice(args);
        cli(out, &v)
    };
    run(&with_config(&["synth"])).unwrap();
    assert!(out.join("catalog/companies.csv").exists());
    run(&with_config(&["features"])).unwrap();
    let dataset = Dataset::load(&out.join("dataset")).unwrap();
    assert_eq!(dataset.series.len(), 40);
    assert!(dataset.series.iter().all(|s| s.scaled_by.is_none()));

    run(&with_config(&["train", "--arch", "basic-cnn", "--head", "regression", "--year", "2020"])).unwrap();
    for file in ["summary.json", "scaler.json", "history.json", "predictions.json", "manifest.json"] {
        assert!(out.join("model").join(file).exists(), "{file}");
    }

    run(&with_config(&["evaluate", "--records", out.join("records.jsonl").to_str().unwrap()])).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(out.join("report.txt")).unwrap();
    for name in ["basic-cnn/regression", "basic-cnn/classification", "baseline/mean", "baseline/random", "baseline/sokolov"] {
        assert!(table.contains(name), "{name} missing from\n{table}");
    }
}

#[test]
fn train_rejects_wrong_year() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = fast_config(out).display().to_string();
    run(&cli(out, &["--config", &config, "synth"])).unwrap();
    run(&cli(out, &["--config", &config, "features"])).unwrap();
    let err = run(&cli(out, &["--config", &config, "train", "--year", "2019"])).unwrap_err();
    assert!(err.to_string().contains("2019"), "{err}");
}

#[test]
fn seed_flag_overrides_config_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = esg_cli::load_config(&cli(dir.path(), &["--seed", "42", "config"])).unwrap();
    assert_eq!((cfg.train.split_seed, cfg.clustering.seed, cfg.synth.seed), (42, 42, 42));
    run(&cli(dir.path(), &["--seed", "42", "config"])).unwrap();
    let written = ExperimentConfig::load(&dir.path().join("config.json")).unwrap();
    assert_eq!(written, cfg);
}

#[test]
fn argument_parsing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Cli::try_parse_from(["esg", "train", "--arch", "cnn_deep_transformer", "--head", "cls"]).is_ok());
    assert!(Cli::try_parse_from(["esg", "train", "--arch", "lstm"]).is_err());
    assert!(Cli::try_parse_from(["esg", "cluster", "--embeddings", "e.bin", "--metric", "cosine", "--elbow", "2..10"]).is_ok());
    assert!(Cli::try_parse_from(["esg", "cluster", "--embeddings", "e.bin", "--elbow", "5..2"]).is_err());
    assert!(Cli::try_parse_from(["esg", "ingest", "--month", "2020-13"]).is_err());
    assert!(Cli::try_parse_from(["esg", "label", "--embeddings", "e.bin"]).is_err());
    assert!(run(&cli(dir.path(), &["label", "--records", "missing.jsonl"])).is_err());
}

fn points() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9], vec![0.95, 0.05], vec![0.05, 0.95]]
}

#[test]
fn cluster_elbow_and_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let ids: Vec<String> = (0..6).map(|i| format!("a{i}")).collect();
    let emb_path = out.join("emb.bin");
    write_embeddings(&emb_path, &Embeddings::from_rows(ids.clone(), &points()).unwrap()).unwrap();
    let records: Vec<ArticleRecord> = ids
        .iter()
        .map(|id| ArticleRecord {
            article_id: id.clone(),
            company_id: "C".into(),
            month: YearMonth::new(2020, 1).unwrap(),
            summary: "s".into(),
            relevance_prob: None,
            relevance_label: None,
            sentiment_label: None,
            cluster_id: None,
            seen_date: None,
        })
        .collect();
    let rec_path = out.join("in.jsonl");
    esg_core::corpus::write_jsonl(&rec_path, &records).unwrap();
    let emb = emb_path.to_str().unwrap();

    run(&cli(out, &["cluster", "--embeddings", emb, "--elbow", "2..4"])).unwrap();
    let elbow = std::fs::read_to_string(out.join("elbow.csv")).unwrap();
    assert_eq!(elbow.lines().count(), 4);
    assert!(elbow.starts_with("k,objective\n2,"));

    run(&cli(out, &["cluster", "--embeddings", emb, "--k", "2", "--metric", "cosine", "--records", rec_path.to_str().unwrap()]))
        .unwrap();
    let model: ClusterModel = esg_core::clustering::load_model(&out.join("clusters")).unwrap();
    assert_eq!(model.k, 2);
    let labeled: Vec<ArticleRecord> = read_jsonl(&out.join("records.jsonl")).unwrap();
    let c: Vec<usize> = labeled.iter().map(|r| r.cluster_id.unwrap()).collect();
    assert_eq!(c[0], c[1]);
    assert_eq!(c[0], c[4]);
    assert_eq!(c[2], c[3]);
    assert_ne!(c[0], c[2]);
}

/// Serves recorded bodies keyed by URL and counts requests.
struct Fixture {
    bodies: HashMap<String, String>,
    requests: Mutex<Vec<String>>,
}

impl Transport for Fixture {
    fn get(&self, url: &str, _params: &[(String, String)]) -> esg_core::Result<HttpResponse> {
        self.requests.lock().unwrap().push(url.to_string());
        Ok(match self.bodies.get(url) {
            Some(b) => HttpResponse { status: 200, body: b.clone() },
            None => HttpResponse { status: 404, body: String::new() },
        })
    }
}

fn catalog() -> Catalog {
    Catalog::new(
        vec![Company {
            id: "V".into(),
            name_long: "Visa Inc".into(),
            name_short: "Visa".into(),
            name_oneword: "Visa".into(),
            market_cap_usd: Some(4e11),
        }],
        vec![RatingRecord { company_id: "V".into(), year: 2020, rating: 60.0 }],
    )
    .unwrap()
}

#[test]
fn ingest_then_clean_with_recorded_responses() {
    let endpoint = "https://gdelt.example/doc";
    let list = r#"{"articles":[
        {"url":"https://news.example/a","title":"Visa expands","seendate":"20200115T101500Z","domain":"news.example","language":"English","sourcecountry":"US"},
        {"url":"https://news.example/gone","title":"Visa gone","seendate":"20200116T101500Z","domain":"news.example","language":"English","sourcecountry":"US"}
    ]}"#;
    let long = "Visa announced a new sustainability programme for its payment network. ".repeat(5);
    let page = format!("<html><body><p>{long}</p><p>Unrelated text.</p><script>x()</script></body></html>");
    let mut bodies = HashMap::new();
    bodies.insert(endpoint.to_string(), list.to_string());
    bodies.insert("https://news.example/a".to_string(), page);
    let fixture = Fixture { bodies, requests: Mutex::new(Vec::new()) };

    let mut cfg = ExperimentConfig::default();
    cfg.ingest.endpoint = endpoint.into();
    cfg.ingest.requests_per_second = 1000.0;
    let month = YearMonth::new(2020, 1).unwrap();
    let raw: Vec<RawArticle> = ingest(&fixture, &catalog(), &[month], &cfg, false).unwrap();
    assert_eq!(raw.len(), 1);
    assert_eq!(raw[0].paragraphs.len(), 2);
    assert_eq!(fixture.requests.lock().unwrap().len(), 3);

    let hits_only = ingest(&fixture, &catalog(), &[month], &cfg, true).unwrap();
    assert_eq!(hits_only.len(), 2);
    assert!(hits_only.iter().all(|r| r.paragraphs.is_empty()));

    // Five copies of the article under distinct URLs clear the per-company minimum.
    let many: Vec<RawArticle> =
        (0..5).map(|i| RawArticle { url: format!("https://news.example/a{i}"), ..raw[0].clone() }).collect();
    let records = clean(&many, &catalog(), 2020, &cfg).unwrap();
    assert_eq!(records.len(), 5);
    assert!(records[0].summary.starts_with("Visa expands"));
    assert!(!records[0].summary.contains("Unrelated"));
    assert!(clean(&many[..4], &catalog(), 2020, &cfg).unwrap().is_empty());
}
