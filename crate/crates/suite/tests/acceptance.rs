//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use esg_core::catalog::{Catalog, Company, RatingRecord};
use esg_core::clustering::{kmeans, KMeansConfig, Metric};
use esg_core::corpus::{article_id, ArticleRecord, RelevanceLabel, SentimentLabel};
use esg_core::experiment::{
    ablation, baseline_sokolov, run_protocol, simulate, sokolov_rating, FeatureSubset, TrainConfig,
};
use esg_core::features::{assemble, pos_neg, rel_noise, FeatureConfig, MonthlyCounts, SeriesRow};
use esg_core::models::{Arch, Head, ModelSpec, Network};
use esg_core::synth::{generate, SignalRows, SynthConfig};
use esg_core::weak_label::{basis_definitions, synthetic_article_vectors, weak_label, EmbeddingTable, Embeddings, WeakLabelConfig};
use esg_core::YearMonth;
use esg_neuro::gradcheck::{check_layer, well_separated_input, STEP};
use esg_neuro::layers::{
    BatchNorm1d, Conv1d, Dense, Dropout, Flatten, GlobalMaxPool1d, Layer, LayerNorm, MaxPool1d, MultiHeadAttention,
    Relu, Softmax,
};
use esg_neuro::loss::scce;
use esg_neuro::{Context, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of one criterion: pass flag and a one-line summary.
type Outcome = (bool, String);

type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, failures: &mut Vec<String>, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        (true, summary)
    } else {
        (false, format!("{summary}; {}", failures.join("; ")))
    }
}

// ---------------------------------------------------------------- gradients

const GRAD_SEEDS: u64 = 20;
const GRAD_TOLERANCE: f64 = 1e-3;

type LayerFactory = Box<dyn Fn(&mut ChaCha8Rng) -> Box<dyn Layer<f64>>>;

fn layer_cases() -> Vec<(&'static str, Vec<usize>, LayerFactory)> {
    vec![
        ("conv1d k=3", vec![2, 6, 3], Box::new(|r| Box::new(Conv1d::new(3, 3, 2, r)))),
        ("conv1d k=2", vec![2, 6, 3], Box::new(|r| Box::new(Conv1d::new(2, 3, 2, r)))),
        ("conv1d k=1", vec![2, 5, 3], Box::new(|r| Box::new(Conv1d::new(1, 3, 4, r)))),
        ("dense 2-d", vec![3, 4], Box::new(|r| Box::new(Dense::new(4, 3, r)))),
        ("dense 3-d", vec![2, 3, 4], Box::new(|r| Box::new(Dense::new(4, 5, r)))),
        ("maxpool1d", vec![2, 6, 3], Box::new(|_| Box::new(MaxPool1d::new(2)))),
        ("global maxpool", vec![2, 5, 3], Box::new(|_| Box::new(GlobalMaxPool1d::new()))),
        ("flatten", vec![2, 3, 4], Box::new(|_| Box::new(Flatten::new()))),
        ("relu", vec![2, 5, 3], Box::new(|_| Box::new(Relu::new()))),
        ("softmax", vec![3, 5], Box::new(|_| Box::new(Softmax::new()))),
        ("dropout", vec![2, 5, 3], Box::new(|_| Box::new(Dropout::new(0.2)))),
        (
            "batchnorm",
            vec![4, 5, 3],
            Box::new(|r| {
                let mut bn = BatchNorm1d::new(3);
                for (i, p) in bn.parameters_mut().into_iter().enumerate() {
                    for v in p.data_mut() {
                        *v = if i == 0 { r.random_range(0.5..1.5) } else { r.random_range(-0.5..0.5) };
                    }
                }
                for (i, b) in bn.buffers_mut().into_iter().enumerate() {
                    for v in b.data_mut() {
                        *v = if i == 0 { r.random_range(-0.5..0.5) } else { r.random_range(0.5..1.5) };
                    }
                }
                Box::new(bn)
            }),
        ),
        (
            "layernorm",
            vec![2, 4, 5],
            Box::new(|r| {
                let mut ln = LayerNorm::new(5);
                for p in ln.parameters_mut() {
                    for v in p.data_mut() {
                        *v = r.random_range(-1.0..1.0);
                    }
                }
                Box::new(ln)
            }),
        ),
        ("attention", vec![2, 4, 4], Box::new(|r| Box::new(MultiHeadAttention::new(4, 2, 3, r)))),
        ("attention single step", vec![3, 1, 4], Box::new(|r| Box::new(MultiHeadAttention::new(4, 2, 2, r)))),
    ]
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let cases = layer_cases();
    for (name, shape, make) in &cases {
        for seed in 0..GRAD_SEEDS {
            for mode in [Mode::Train, Mode::Eval] {
                let mut layer = make(&mut ChaCha8Rng::seed_from_u64(seed));
                let x = well_separated_input(shape, 2e-3, 1000 + seed);
                let report = check_layer(layer.as_mut(), &x, mode, seed, 77 + seed).expect("layer runs");
                worst = worst.max(report.worst());
                check(report.worst() <= GRAD_TOLERANCE, &mut failures, || {
                    format!("{name} seed {seed} {mode:?} rel err {:.2e}", report.worst())
                });
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), &mut failures, || format!("runtime {elapsed:?} >= 60 s"));
    outcome(
        failures,
        format!(
            "{} layers x {GRAD_SEEDS} seeds x 2 modes, h = {STEP:e}, worst rel err {worst:.2e}, {:.2} s",
            cases.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ k-means

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn dis(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => sq(a, b),
        Metric::Cosine => 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Plain Lloyd iteration from the given centroid indices until assignments
/// repeat. Returns the objective history.
fn oracle_lloyd(points: &[Vec<f64>], init: &[usize], metric: Metric) -> Vec<f64> {
    let k = init.len();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| points[i].clone()).collect();
    let mut last: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    for _ in 0..10_000 {
        let mut assign: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut best = 0;
                for j in 1..k {
                    if dis(p, &centroids[j], metric) < dis(p, &centroids[best], metric) {
                        best = j;
                    }
                }
                best
            })
            .collect();
        for j in 0..k {
            if assign.contains(&j) {
                continue;
            }
            let size = |c: usize, a: &[usize]| a.iter().filter(|&&x| x == c).count();
            let mut far: Option<usize> = None;
            for i in 0..points.len() {
                if size(assign[i], &assign) < 2 {
                    continue;
                }
                let d = dis(&points[i], &centroids[assign[i]], metric);
                if far.is_none_or(|f| d > dis(&points[f], &centroids[assign[f]], metric)) {
                    far = Some(i);
                }
            }
            let i = far.expect("some cluster has two members");
            assign[i] = j;
            centroids[j] = points[i].clone();
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
            let mut mean = vec![0.0; c.len()];
            for m in &members {
                for (s, x) in mean.iter_mut().zip(m.iter()) {
                    *s += x;
                }
            }
            *c = match metric {
                Metric::Euclidean => mean.iter().map(|s| s / members.len() as f64).collect(),
                Metric::Cosine if mean.iter().any(|s| *s != 0.0) => unit(&mean),
                Metric::Cosine => c.clone(),
            };
        }
        history.push(points.iter().zip(&assign).map(|(p, &a)| dis(p, &centroids[a], metric)).sum());
        if last.as_ref() == Some(&assign) {
            break;
        }
        last = Some(assign);
    }
    history
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (k - 1..n)
        .flat_map(|last| {
            combinations(last, k - 1).into_iter().map(move |mut c| {
                c.push(last);
                c
            })
        })
        .collect()
}

fn nonincreasing(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
}

fn kmeans_oracle() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap = 0.0f64;
    let mut worst_norm = 0.0f64;
    let instances = 50;
    for inst in 0..instances {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=3usize.min(n));
        let metric = if inst % 2 == 0 { Metric::Euclidean } else { Metric::Cosine };
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| loop {
                let p: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
                if p.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
                    break p;
                }
            })
            .collect();
        let prepared: Vec<Vec<f64>> =
            if metric == Metric::Cosine { raw.iter().map(|p| unit(p)).collect() } else { raw.clone() };
        let mut best = f64::INFINITY;
        for init in combinations(n, k) {
            let h = oracle_lloyd(&prepared, &init, metric);
            check(nonincreasing(&h), &mut failures, || format!("instance {inst}: oracle objective increased"));
            best = best.min(*h.last().expect("one iteration"));
        }
        let cfg = KMeansConfig { k, metric, seed: inst, max_iter: 10_000, tol: 0.0, n_init: 100, ..Default::default() };
        let (model, assignments) = kmeans(&raw, &cfg).expect("valid instance");
        let gap = (model.sse - best).abs();
        worst_gap = worst_gap.max(gap);
        check(gap <= 1e-9, &mut failures, || format!("instance {inst} ({metric:?}, n {n}, k {k}): {} vs oracle {best}", model.sse));
        check(nonincreasing(&model.history), &mut failures, || format!("instance {inst}: objective increased"));
        check((0..k).all(|j| assignments.contains(&j)), &mut failures, || format!("instance {inst}: empty cluster"));
        if metric == Metric::Cosine {
            for c in &model.centroids {
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                worst_norm = worst_norm.max((norm - 1.0).abs());
                check((norm - 1.0).abs() <= 1e-9, &mut failures, || format!("instance {inst}: centroid norm {norm}"));
            }
        }
    }
    outcome(
        failures,
        format!("{instances} instances, max objective gap {worst_gap:.1e}, max unit-norm deviation {worst_norm:.1e}"),
    )
}

// --------------------------------------------------------------- timeseries

fn random_fixture(rng: &mut ChaCha8Rng, fixture: usize, k: usize) -> (Catalog, Vec<ArticleRecord>) {
    let n_companies = rng.random_range(1..=6);
    let mut companies = Vec::new();
    let mut ratings = Vec::new();
    let mut records = Vec::new();
    for c in 0..n_companies {
        let id = format!("F{fixture}C{c}");
        companies.push(Company {
            id: id.clone(),
            name_long: format!("Fixture {fixture} Company {c} Inc"),
            name_short: format!("Fixture {fixture} Company {c}"),
            name_oneword: format!("Fixture{fixture}{c}"),
            market_cap_usd: Some(rng.random_range(1e8..1e11)),
        });
        ratings.push(RatingRecord { company_id: id.clone(), year: 2020, rating: rng.random_range(0.0..100.0) });
        for i in 0..rng.random_range(1..60) {
            let year = if rng.random::<f64>() < 0.1 { 2019 } else { 2020 };
            let month = YearMonth::new(year, rng.random_range(1..=12)).expect("valid month");
            let url = format!("https://fixture.example/{fixture}/{c}/{i}");
            records.push(ArticleRecord {
                article_id: article_id(&url, &id),
                company_id: id.clone(),
                month,
                summary: String::new(),
                relevance_prob: None,
                relevance_label: Some(if rng.random() { RelevanceLabel::Relevant } else { RelevanceLabel::Noise }),
                sentiment_label: Some(if rng.random() { SentimentLabel::Positive } else { SentimentLabel::Negative }),
                cluster_id: (rng.random::<f64>() < 0.9).then(|| rng.random_range(0..k)),
                seen_date: None,
            });
        }
    }
    (Catalog::new(companies, ratings).expect("valid fixture"), records)
}

/// Cell value computed by filtering the records for one company, month and
/// row.
fn naive_cell(records: &[ArticleRecord], company: &str, month: u32, row: SeriesRow) -> f64 {
    let here: Vec<&ArticleRecord> =
        records.iter().filter(|r| r.company_id == company && r.month.year == 2020 && r.month.month == month).collect();
    let count = |f: &dyn Fn(&ArticleRecord) -> bool| here.iter().filter(|r| f(r)).count() as f64;
    let rel = |r: &ArticleRecord| r.relevance_label == Some(RelevanceLabel::Relevant);
    let pos = |r: &ArticleRecord| r.sentiment_label == Some(SentimentLabel::Positive);
    let ratio = |a: f64, b: f64| if a + b == 0.0 { 0.0 } else { (a - b) / (a + b) };
    match row {
        SeriesRow::RelNoise => ratio(count(&|r| rel(r)), count(&|r| !rel(r))),
        SeriesRow::PosNegRelevant => ratio(count(&|r| rel(r) && pos(r)), count(&|r| rel(r) && !pos(r))),
        SeriesRow::PosNegNoise => ratio(count(&|r| !rel(r) && pos(r)), count(&|r| !rel(r) && !pos(r))),
        SeriesRow::Cluster(j) => count(&|r| r.cluster_id == Some(j)),
    }
}

fn timeseries_oracle() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = FeatureConfig::default();
    let mut cells = 0usize;
    for fixture in 0..25 {
        let (catalog, records) = random_fixture(&mut rng, fixture, cfg.k);
        let series = assemble(&records, &catalog, 2020, &cfg).expect("assembles");
        for s in &series {
            check(s.n_rows() == 9 && s.matrix.len() == 9 * 12, &mut failures, || format!("fixture {fixture}: shape"));
            for (r, &row) in s.rows.iter().enumerate() {
                for m in 0..12 {
                    let got = s.row(r)[m];
                    let want = naive_cell(&records, &s.company_id, m as u32 + 1, row);
                    cells += 1;
                    check(got == want, &mut failures, || format!("fixture {fixture} {} {row} month {}: {got} vs {want}", s.company_id, m + 1));
                    if !matches!(row, SeriesRow::Cluster(_)) {
                        check((-1.0..=1.0).contains(&got), &mut failures, || format!("{row} = {got} outside [-1, 1]"));
                    }
                }
            }
        }
    }
    outcome(failures, format!("25 fixtures, {cells} cells equal to the naive count"))
}

// ----------------------------------------------------------------- formulas

fn formula_anchors() -> Outcome {
    let mut failures = Vec::new();
    let counts = MonthlyCounts { n_total: 10, n_relevant: 7, n_noise: 3, ..Default::default() };
    let rn = rel_noise(&counts);
    let rn_oracle = f64::from(counts.n_relevant - counts.n_noise) / f64::from(counts.n_total);
    check(rn == rn_oracle && rn == 0.4, &mut failures, || format!("rel_noise {rn}"));
    let (pos, neg) = (3u32, 1u32);
    let pn = pos_neg(pos, neg);
    let pn_oracle = f64::from(pos - neg) / f64::from(pos + neg);
    check(pn == pn_oracle && pn == 0.5, &mut failures, || format!("pos_neg {pn}"));
    let sk = sokolov_rating(&[vec![0.8, 0.6], vec![0.7]]).expect("non-empty days");
    let sk_oracle = 100.0 * ((0.8 + 0.6) / 2.0 + 0.7) / 2.0;
    check(sk == sk_oracle && sk == 70.0, &mut failures, || format!("sokolov {sk}"));
    let uniform = Tensor::from_vec(&[4, 100], vec![0.01f64; 400]).expect("shape");
    let loss = scce(&uniform, &[0, 17, 42, 99]).expect("valid classes");
    check((loss - 100f64.ln()).abs() <= 1e-9, &mut failures, || format!("scce {loss}"));
    outcome(failures, format!("rel_noise {rn}, pos_neg {pn}, sokolov {sk}, scce {loss:.12} (ln 100 = {:.12})", 100f64.ln()))
}

// ------------------------------------------------------------- architectures

/// Stated total for the BasicCNN classifier; the sum of its own layer terms
/// is 129,841.
const STATED_BASIC_CNN_COUNT: usize = 129_557;

fn architecture_anchors() -> Outcome {
    let mut failures = Vec::new();
    // conv(k=2, 9 -> 64) + dense(6 * 64 -> 265) + dense(265 -> 100)
    let oracle = (2 * 9 * 64 + 64) + (6 * 64 * 265 + 265) + (265 * 100 + 100);
    let basic = Network::<f64>::build(&ModelSpec::new(Arch::BasicCnn, Head::classification()), 0).expect("builds");
    let count = basic.parameter_count();
    check(count == oracle, &mut failures, || format!("BasicCNN count {count} vs oracle {oracle}"));
    check(count == STATED_BASIC_CNN_COUNT, &mut failures, || {
        format!("BasicCNN count {count} is not the stated {STATED_BASIC_CNN_COUNT}")
    });
    let zero = Tensor::<f64>::zeros(&[5, 12, 9]);
    for arch in Arch::ALL {
        for head in [Head::classification(), Head::Regression] {
            let mut net = Network::<f64>::build(&ModelSpec::new(arch, head), 1).expect("builds");
            for mut ctx in [Context::train(3), Context::eval()] {
                let out = net.forward(&zero, &mut ctx).expect("forward");
                check(out.data().iter().all(|v| v.is_finite()), &mut failures, || format!("{arch:?}/{head:?} non-finite"));
            }
            if let Head::Classification { n_classes } = head {
                let probs = net.predict(&zero).expect("predict");
                for row in probs.data().chunks(n_classes) {
                    let sum: f64 = row.iter().sum();
                    check((sum - 1.0).abs() <= 1e-9, &mut failures, || format!("{arch:?} row sum {sum}"));
                }
            }
        }
    }
    outcome(
        failures,
        format!(
            "BasicCNN classification has {count} parameters (shape-arithmetic oracle {oracle}, stated \
             {STATED_BASIC_CNN_COUNT}); 8 networks finite on zero input; softmax rows sum to 1"
        ),
    )
}

// ------------------------------------------------------------ train control

fn training_control() -> Outcome {
    let mut failures = Vec::new();
    let cfg = TrainConfig::default();
    let a = simulate(&cfg, &[1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 0.2, 0.1], cfg.max_epochs);
    check(a.epochs == 7 && a.stopped_early && a.best_epoch == Some(2), &mut failures, || format!("plateau: {a:?}"));
    let improving: Vec<f64> = (0..40).map(|i| 100.0 - i as f64).collect();
    let b = simulate(&cfg, &improving, cfg.max_epochs);
    check(b.epochs == 25 && !b.stopped_early && b.lrs.iter().all(|&lr| lr == 1e-3), &mut failures, || format!("improving: {b:?}"));
    let slow: Vec<f64> = (0..8).map(|i| 1.0 - 0.005 * i as f64).collect();
    let c = simulate(&cfg, &slow, cfg.max_epochs);
    let expected_lrs = [1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-4, 1e-4];
    let lr_ok = c.lrs.len() == 8 && c.lrs.iter().zip(expected_lrs).all(|(a, b)| (a - b).abs() <= 1e-15);
    check(lr_ok && !c.stopped_early, &mut failures, || format!("slow: {:?}", c.lrs));
    outcome(
        failures,
        format!(
            "plateau stops after epoch {} restoring epoch {:?}; improving runs {} epochs; 0.005 steps give lr {:e} from epoch 7",
            a.epochs, a.best_epoch, b.epochs, c.lrs[6]
        ),
    )
}

// ----------------------------------------------------------- end to end

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let data = generate(&SynthConfig::default()).expect("generates");
    let series = assemble(&data.records, &data.catalog, 2020, &FeatureConfig::default()).expect("assembles");
    let keys: Vec<(String, i32)> = series.iter().map(|s| s.key()).collect();
    let sokolov = baseline_sokolov(&data.records, &keys).expect("sokolov");
    let specs = esg_core::config::default_models();
    let cfg = TrainConfig::default();
    let report = run_protocol(&series, &specs, Some(&sokolov), &cfg).expect("protocol");
    let elapsed = start.elapsed();
    let mean = |name: &str| report.summary_row(name).expect("row present").mean;
    let baseline = mean("baseline/mean");
    let random = mean("baseline/random");
    let deep = mean("deep-cnn/regression");
    let gain = 1.0 - deep / baseline;
    check(series.len() == 300 && report.runs.len() == 10, &mut failures, || "expected 300 companies x 10 splits".into());
    check(gain >= 0.15, &mut failures, || format!("deep-cnn/regression {deep:.2} vs mean baseline {baseline:.2} ({:.1}%)", 100.0 * gain));
    let mut regression = Vec::new();
    for spec in specs.iter().filter(|s| s.head == Head::Regression) {
        let m = mean(&spec.label());
        let g = 1.0 - m / random;
        regression.push(format!("{} {m:.2}", spec.arch.name()));
        check(g >= 0.40, &mut failures, || format!("{} {m:.2} vs random {random:.2} ({:.1}%)", spec.label(), 100.0 * g));
    }
    check(elapsed < Duration::from_secs(600), &mut failures, || format!("runtime {elapsed:?}"));
    let mut ordering: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for arch in Arch::ALL {
        let r = mean(&ModelSpec::new(arch, Head::Regression).label());
        let c = mean(&ModelSpec::new(arch, Head::classification()).label());
        ordering.insert(arch.name(), (r, c));
    }
    let reg_beats_cls = ordering.values().filter(|(r, c)| r < c).count();
    println!("{}", report.to_table());
    outcome(
        failures,
        format!(
            "deep-cnn/regression {deep:.2} vs mean {baseline:.2} ({:.1}% better); regression [{}] vs random {random:.2}; \
             regression beats classification for {reg_beats_cls}/4 architectures; {:.0} s",
            100.0 * gain,
            regression.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ----------------------------------------------------------------- ablation

fn ablation_ordering() -> Outcome {
    let mut failures = Vec::new();
    let data = generate(&SynthConfig { signal_rows: SignalRows::ClusterOnly, ..SynthConfig::default() }).expect("generates");
    let series = assemble(&data.records, &data.catalog, 2020, &FeatureConfig::default()).expect("assembles");
    let report = ablation(&series, None, &TrainConfig::default()).expect("ablation");
    let mean = |s: FeatureSubset| report.row(s).expect("subset present").summary.mean;
    let (rel, sem, all) = (mean(FeatureSubset::Relevance), mean(FeatureSubset::Semantic), mean(FeatureSubset::All));
    check(report.rows.len() == 4, &mut failures, || "expected 4 subsets".into());
    check(sem < rel, &mut failures, || format!("X_semantic {sem:.2} not below X_relevance {rel:.2}"));
    check(all <= sem, &mut failures, || format!("X_all {all:.2} above X_semantic {sem:.2}"));
    println!("{}", report.to_table());
    outcome(
        failures,
        format!(
            "X_relevance {rel:.2}, X_sentiment {:.2}, X_semantic {sem:.2}, X_all {all:.2}",
            mean(FeatureSubset::Sentiment)
        ),
    )
}

// --------------------------------------------------------------- weak label

fn weak_label_balance() -> Outcome {
    let mut failures = Vec::new();
    let (dim, defs, n) = (32, 10, 10_000);
    let definitions = basis_definitions(defs, dim);
    let (vectors, _) = synthetic_article_vectors(n, defs, dim, 0.1, 0.54, 7);
    let entries = Embeddings::from_rows((0..n).map(|i| i.to_string()).collect(), &vectors).expect("rows");
    let table = EmbeddingTable::new(entries, definitions).expect("table");
    let cfg = WeakLabelConfig::default();
    let relevant = vectors
        .iter()
        .filter(|v| weak_label(v, &table, &cfg).expect("labels") == RelevanceLabel::Relevant)
        .count();
    let share = relevant as f64 / n as f64;
    check((share - 0.54).abs() <= 0.02, &mut failures, || format!("relevant share {share:.4}"));
    outcome(failures, format!("{relevant} of {n} relevant ({:.2}%) at threshold {}", 100.0 * share, cfg.threshold))
}

// -------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let mut failures = Vec::new();
    let data = generate(&SynthConfig { seed: 5, ..SynthConfig::default() }).expect("generates");
    let series = assemble(&data.records, &data.catalog, 2020, &FeatureConfig::default()).expect("assembles");
    let keys: Vec<(String, i32)> = series.iter().map(|s| s.key()).collect();
    let sokolov = baseline_sokolov(&data.records, &keys).expect("sokolov");
    let specs = esg_core::config::default_models();
    let cfg = TrainConfig { n_runs: 2, split_seed: 11, ..TrainConfig::default() };
    let first = run_protocol(&series, &specs, Some(&sokolov), &cfg).expect("protocol").to_json().expect("json");
    let second = run_protocol(&series, &specs, Some(&sokolov), &cfg).expect("protocol").to_json().expect("json");
    check(first == second, &mut failures, || "reports differ".into());
    outcome(failures, format!("two protocol runs ({} models, {} splits) give identical {}-byte reports", specs.len(), cfg.n_runs, first.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient suite", gradient_suite),
        ("k-means oracle", kmeans_oracle),
        ("timeseries oracle", timeseries_oracle),
        ("formula anchors", formula_anchors),
        ("architecture anchors", architecture_anchors),
        ("training control", training_control),
        ("synthetic end-to-end", end_to_end),
        ("ablation ordering", ablation_ordering),
        ("weak-label balance", weak_label_balance),
        ("determinism", determinism),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _) in &criteria {
            println!("{name}: test");
        }
        return;
    }
    let filter: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (ok, detail) = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!ok);
        let line = format!("acceptance {:>2} {name}: {} - {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        let _ = std::io::stdout().flush();
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
