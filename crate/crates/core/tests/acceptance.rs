//! Acceptance suite. One PASS/FAIL line per criterion; pass a substring
//! argument to run a subset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::ContinuousCDF;

use steward_core::cluster::{
    adjusted_rand_index, block_means, cluster_notes, similarity_matrix, ClusterConfig,
};
use steward_core::cohort::{
    format_timestamp, grouped_split, Antibiotic, Cohort, EDVisit, Partition, Targets,
};
use steward_core::embed::{tokenize, SgnsConfig};
use steward_core::eval::{bootstrap_ci, f1_and_mcc, pr_auc, roc_auc, BootstrapConfig, Metric};
use steward_core::gbdt::{fit, fit_multilabel, TrainConfig};
use steward_core::ingest::ingest_dir;
use steward_core::notes::{serialize_visit, truncate_to_budget};
use steward_core::pipeline::{
    build_features, cohort_notes, row_ids, FeatureConfig, Representation,
};
use steward_core::synthgen::{builtin_phenotypes, generate, Channel, SynthConfig, SynthManifest};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cohort_from(
    dir: &Path,
    config: &SynthConfig,
    test_fraction: f64,
    split_seed: u64,
) -> (Cohort, SynthManifest) {
    let manifest = generate(config, dir).expect("synthetic cohort");
    let ingest = ingest_dir(dir, &Default::default(), &Default::default()).expect("ingest");
    (
        grouped_split(&ingest.cohort, test_fraction, split_seed).expect("split"),
        manifest,
    )
}

// ---------------------------------------------------------------- metrics

fn brute_auroc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn brute_ap(s: &[f64], y: &[bool]) -> f64 {
    let p = y.iter().filter(|v| **v).count() as f64;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = s.iter().zip(y).filter(|(v, l)| **v >= t && **l).count() as f64;
        let predicted = s.iter().filter(|v| **v >= t).count() as f64;
        let recall = tp / p;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

fn brute_f1_mcc(s: &[f64], y: &[bool]) -> (f64, f64) {
    let count = |pred: bool, truth: bool| {
        s.iter()
            .zip(y)
            .filter(|(v, l)| (**v >= 0.5) == pred && **l == truth)
            .count() as f64
    };
    let (tp, fp, fn_, tn) = (
        count(true, true),
        count(true, false),
        count(false, true),
        count(false, false),
    );
    let f1 = if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom.sqrt()
    };
    (f1, mcc)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut fixtures = 0;
    while fixtures < 1000 {
        let n = rng.gen_range(2..=200);
        let discrete = rng.gen_bool(0.5);
        let s: Vec<f64> = (0..n)
            .map(|_| {
                if discrete {
                    rng.gen_range(0..6) as f64 / 5.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let rate = rng.gen_range(0.05..0.95);
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(rate)).collect();
        let pos = y.iter().filter(|v| **v).count();
        if pos == 0 || pos == n {
            continue;
        }
        fixtures += 1;
        let fm = f1_and_mcc(&s, &y, 0.5).unwrap();
        let (f1, mcc) = brute_f1_mcc(&s, &y);
        for (a, b) in [
            (roc_auc(&s, &y).unwrap(), brute_auroc(&s, &y)),
            (pr_auc(&s, &y).unwrap(), brute_ap(&s, &y)),
            (fm.f1, f1),
            (fm.mcc, mcc),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{fixtures} fixtures, max abs deviation {worst:.1e} (tol 1e-12)"),
    )
}

// -------------------------------------------------------------- bootstrap

fn bootstrap_coverage() -> Outcome {
    let target = 0.80;
    let std = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    // AUROC of N(mu,1) vs N(0,1) is Phi(mu / sqrt 2)
    let mu = std::f64::consts::SQRT_2 * std.inverse_cdf(target);
    let (n_pos, n_neg) = (150, 150);
    let mut covered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let pos = Normal::new(mu, 1.0).unwrap();
        let neg = Normal::new(0.0, 1.0).unwrap();
        let mut scores: Vec<f64> = (0..n_pos).map(|_| pos.sample(&mut rng)).collect();
        scores.extend((0..n_neg).map(|_| neg.sample(&mut rng)));
        let labels: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
        let cfg = BootstrapConfig {
            n_resamples: 1000,
            level: 0.95,
            seed,
        };
        let ci = bootstrap_ci(&scores, &labels, Metric::RocAuc, &cfg).unwrap();
        if ci.ci_low <= target && target <= ci.ci_high {
            covered += 1;
        }
    }
    outcome(
        covered >= 90,
        format!("95% CI covered AUROC 0.80 in {covered}/100 seeds (need >= 90)"),
    )
}

// ---------------------------------------------------------- planted signal

/// Four phenotypes at equal prior; for each antibiotic a different pair is
/// pushed toward susceptible and the other pair toward resistant.
fn planted_config(n_patients: usize, channels: Vec<Channel>, seed: u64) -> SynthConfig {
    // logistic(a) with a chosen so that the two-group Bayes AUROC is 0.85
    let a = 1.7346;
    let keep = ["sepsis", "diabetes", "stomach acid", "respiratory"];
    let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut phenotypes: Vec<_> = builtin_phenotypes()
        .into_iter()
        .filter(|p| keep.contains(&p.name.as_str()))
        .collect();
    for (i, p) in phenotypes.iter_mut().enumerate() {
        p.prior = 0.25;
        for (j, ab) in Antibiotic::ALL.iter().enumerate() {
            let (x, y) = pairs[j % pairs.len()];
            p.offsets.insert(*ab, if i == x || i == y { a } else { -a });
        }
    }
    SynthConfig {
        n_patients,
        phenotypes,
        base_rates: Antibiotic::ALL.iter().map(|a| (*a, 0.5)).collect(),
        signal_channels: channels,
        seed,
        ..Default::default()
    }
}

fn arm_aurocs(
    cohort: &Cohort,
    rep: &Representation,
    features: &FeatureConfig,
) -> BTreeMap<Antibiotic, f64> {
    let x = build_features(cohort, rep, features).expect("features");
    let targets = Targets::from_cohort(cohort, &row_ids(cohort)).expect("targets");
    let train = TrainConfig {
        num_trees: 100,
        learning_rate: 0.05,
        num_leaves: 15,
        ..Default::default()
    };
    let model = fit_multilabel(x.view(), &targets, &train).expect("fit");
    let mut out = BTreeMap::new();
    for ab in cohort.antibiotics() {
        let Some(scores) = model.predict_proba(ab, x.view()) else {
            continue;
        };
        let scores = scores.expect("predict");
        let mask = targets.mask(ab, Partition::Test);
        let labels = targets.dense(ab);
        let (s, y): (Vec<f64>, Vec<bool>) = scores
            .iter()
            .zip(&labels)
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|((s, y), _)| (*s, *y))
            .unzip();
        if let Ok(v) = roc_auc(&s, &y) {
            out.insert(ab, v);
        }
    }
    out
}

fn text_features() -> FeatureConfig {
    FeatureConfig {
        sgns: SgnsConfig {
            dim: 50,
            epochs: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn fmt_map(m: &BTreeMap<Antibiotic, f64>) -> String {
    m.iter()
        .map(|(a, v)| format!("{}={v:.3}", a.slug()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn planted_signal() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(2000, Channel::ALL.to_vec(), 7);
    let (cohort, manifest) = cohort_from(dir.path(), &cfg, 0.2, 0);
    let bayes = manifest.bayes_auroc.clone();
    let mut pass = true;
    let mut detail = format!("bayes {}", fmt_map(&bayes));
    for rep in [Representation::Tabular, Representation::Word2vec] {
        let auc = arm_aurocs(&cohort, &rep, &text_features());
        let min = auc.values().cloned().fold(f64::INFINITY, f64::min);
        let arm = mean(auc.values().copied());
        let arm_bayes = mean(auc.keys().map(|a| bayes[a]));
        let ok = auc.len() == Antibiotic::ALL.len() && min >= 0.75 && arm <= arm_bayes + 0.03;
        pass &= ok;
        detail += &format!(
            "\n      {rep}: mean {arm:.3} (bayes {arm_bayes:.3}), min {min:.3}; {}",
            fmt_map(&auc)
        );
    }
    outcome(pass, detail)
}

fn directional() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(2000, vec![Channel::Medication, Channel::Dispensed], 8);
    let (cohort, _) = cohort_from(dir.path(), &cfg, 0.2, 0);
    let tab = arm_aurocs(&cohort, &Representation::Tabular, &text_features());
    let text = arm_aurocs(&cohort, &Representation::Word2vec, &text_features());
    let wins = Antibiotic::ALL
        .iter()
        .filter(|a| match (text.get(a), tab.get(a)) {
            (Some(t), Some(b)) => t - b >= 0.10,
            _ => false,
        })
        .count();
    outcome(
        wins >= 8,
        format!(
            "word2vec beats tabular by >= 0.10 on {wins}/10 (need >= 8)\n      word2vec: {}\n      tabular:  {}",
            fmt_map(&text),
            fmt_map(&tab)
        ),
    )
}

// ---------------------------------------------------------- serialization

fn num(v: f64) -> String {
    format!("{v}")
}

/// Every non-null recorded value of a visit, enumerated field by field.
fn field_values(v: &EDVisit) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut put = |name: &str, value: Option<String>| {
        if let Some(value) = value {
            out.push((name.to_owned(), value));
        }
    };
    let a = &v.arrival;
    put("intime", Some(format_timestamp(&a.intime)));
    put("gender", a.gender.clone());
    put("race", a.race.clone());
    put("arrival_transport", a.arrival_transport.clone());
    put("age", a.age.map(|x| x.to_string()));
    let t = &v.triage;
    for (n, x) in [
        ("temperature", t.temperature),
        ("heartrate", t.heartrate),
        ("resprate", t.resprate),
        ("o2sat", t.o2sat),
        ("sbp", t.sbp),
        ("dbp", t.dbp),
    ] {
        put(n, x.map(num));
    }
    put("pain", t.pain.clone());
    put("acuity", t.acuity.map(|x| x.to_string()));
    put("chiefcomplaint", t.chiefcomplaint.clone());
    for m in &v.medrecon {
        put("medrecon.charttime", Some(format_timestamp(&m.charttime)));
        put("medrecon.name", Some(m.name.clone()));
        put("medrecon.etcdescription", m.etcdescription.clone());
    }
    for s in &v.vitals {
        put("vitals.charttime", Some(format_timestamp(&s.charttime)));
        for (n, x) in [
            ("vitals.temperature", s.temperature),
            ("vitals.heartrate", s.heartrate),
            ("vitals.resprate", s.resprate),
            ("vitals.o2sat", s.o2sat),
            ("vitals.sbp", s.sbp),
            ("vitals.dbp", s.dbp),
        ] {
            put(n, x.map(num));
        }
        put("vitals.rhythm", s.rhythm.clone());
        put("vitals.pain", s.pain.clone());
    }
    for d in &v.diagnoses {
        put("icd_code", Some(d.icd_code.clone()));
        put("icd_version", Some(d.icd_version.to_string()));
        put("icd_title", Some(d.icd_title.clone()));
    }
    for p in &v.pyxis {
        put("pyxis.charttime", Some(format_timestamp(&p.charttime)));
        put("pyxis.name", Some(p.name.clone()));
    }
    out
}

fn serialization_fidelity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_patients: 600,
        null_rate: 0.2,
        seed: 21,
        ..Default::default()
    };
    let (cohort, _) = cohort_from(dir.path(), &cfg, 0.2, 0);
    let visits: Vec<&EDVisit> = cohort.visits().values().take(500).collect();
    let mut missing = Vec::new();
    let mut checked = 0usize;
    let mut not_idempotent = 0usize;
    for v in &visits {
        let note = serialize_visit(v);
        for (field, value) in field_values(v) {
            checked += 1;
            if !note.text.contains(&value) {
                missing.push(format!("{}:{field}={value:?}", v.stay_id.as_str()));
            }
        }
        for budget in [1, 64, 512] {
            let once = truncate_to_budget(&note, budget);
            if truncate_to_budget(&once, budget) != once {
                not_idempotent += 1;
            }
        }
    }
    let pass = visits.len() == 500 && missing.is_empty() && not_idempotent == 0;
    let mut detail = format!(
        "{} visits, {checked} field values, {} missing, {not_idempotent} non-idempotent truncations",
        visits.len(),
        missing.len()
    );
    if let Some(first) = missing.first() {
        detail += &format!(" (first: {first})");
    }
    outcome(pass, detail)
}

// ------------------------------------------------------------------ split

fn split_contamination() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_patients: 400,
        multi_visit_rate: 0.5,
        seed: 31,
        ..Default::default()
    };
    generate(&cfg, dir.path()).unwrap();
    let ingest = ingest_dir(dir.path(), &Default::default(), &Default::default()).unwrap();
    let mut worst = 0usize;
    let mut unassigned = 0usize;
    for seed in 0..50u64 {
        let cohort = grouped_split(&ingest.cohort, 0.2, seed).unwrap();
        let mut train = BTreeSet::new();
        let mut test = BTreeSet::new();
        for row in cohort.labels() {
            let visit = &cohort.visits()[&row.stay_id];
            match cohort.partition_of(&visit.subject_id) {
                Some(Partition::Train) => train.insert(visit.subject_id.clone()),
                Some(Partition::Test) => test.insert(visit.subject_id.clone()),
                None => {
                    unassigned += 1;
                    false
                }
            };
        }
        worst = worst.max(train.intersection(&test).count());
    }
    outcome(
        worst == 0 && unassigned == 0,
        format!("50 seeds, max subject overlap {worst}, unassigned rows {unassigned}"),
    )
}

// ------------------------------------------------------------- clustering

fn clustering_blocks() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let keep = ["sepsis", "diabetes", "respiratory"];
    let mut cfg = SynthConfig {
        n_patients: 300,
        seed: 41,
        ..Default::default()
    };
    cfg.phenotypes.retain(|p| keep.contains(&p.name.as_str()));
    for p in cfg.phenotypes.iter_mut() {
        p.prior = 1.0 / 3.0;
    }
    let (cohort, manifest) = cohort_from(dir.path(), &cfg, 0.2, 0);
    let notes = cohort_notes(&cohort, 512).unwrap();
    let tokens: Vec<Vec<String>> = notes.iter().map(|n| tokenize(&n.text)).collect();
    let names: Vec<&str> = manifest
        .phenotypes
        .iter()
        .map(|p| p.name.as_str())
        .collect();
    let truth: Vec<usize> = notes
        .iter()
        .map(|n| {
            let name = &manifest.stay_phenotype[n.stay_id.as_str()];
            names.iter().position(|x| x == name).unwrap()
        })
        .collect();

    // a shared component plus a per-phenotype centre and isotropic noise
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let z = Normal::new(0.0, 1.0).unwrap();
    let dim = 64;
    let shared: Vec<f64> = (0..dim).map(|_| z.sample(&mut rng)).collect();
    let centres: Vec<Vec<f64>> = (0..names.len())
        .map(|_| {
            (0..dim)
                .map(|j| 0.5 * shared[j] + z.sample(&mut rng))
                .collect()
        })
        .collect();
    let emb = Array2::from_shape_fn((notes.len(), dim), |(i, j)| {
        (centres[truth[i]][j] + 0.6 * z.sample(&mut rng)) as f32
    });

    let result = cluster_notes(emb.view(), &tokens, &ClusterConfig::default()).unwrap();
    let assign: Vec<usize> = result.assignments.iter().map(|a| *a as usize).collect();
    let ari = adjusted_rand_index(&assign, &truth);
    let sim = similarity_matrix(emb.view(), &result.ordering).unwrap();
    let labels: Vec<usize> = result.ordering.iter().map(|&i| assign[i]).collect();
    let (within, between) = block_means(&sim, &labels);

    let mut vocab_ok = true;
    let mut report = Vec::new();
    for c in 0..result.k {
        let members: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == c).collect();
        let mut votes = vec![0usize; names.len()];
        for &i in &members {
            votes[truth[i]] += 1;
        }
        let majority = (0..names.len()).max_by_key(|&p| votes[p]).unwrap();
        let top: Vec<&str> = result.top_terms[c]
            .iter()
            .map(|t| t.term.as_str())
            .collect();
        let vocab = &manifest.phenotypes[majority].vocabulary;
        let hits = vocab.iter().filter(|w| top.contains(&w.as_str())).count();
        vocab_ok &= hits == vocab.len();
        report.push(format!("{}: {hits}/{}", names[majority], vocab.len()));
    }
    let pass = ari >= 0.9 && within - between >= 0.2 && vocab_ok && result.k == names.len();
    outcome(
        pass,
        format!(
            "k={} ARI {ari:.3}, within {within:.3} vs between {between:.3}; vocabulary in top-10: {}",
            result.k,
            report.join(", ")
        ),
    )
}

// ------------------------------------------------------------------- gbdt

fn gbdt_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut monotone = 0;
    let mut isolated = 0;
    for d in 0..20 {
        let n = rng.gen_range(100..400);
        let p = rng.gen_range(2..10);
        let mut x = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>() * 4.0 - 2.0);
        for v in x.iter_mut() {
            if rng.gen_bool(0.1) {
                *v = f64::NAN;
            }
        }
        let y: Vec<bool> = (0..n)
            .map(|i| {
                let s = x
                    .row(i)
                    .iter()
                    .take(2)
                    .map(|v| if v.is_nan() { 0.3 } else { *v })
                    .sum::<f64>();
                rng.gen::<f64>() < 1.0 / (1.0 + (-s).exp())
            })
            .collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        let cfg = TrainConfig {
            num_trees: 30,
            num_leaves: rng.gen_range(2..16),
            min_samples_leaf: rng.gen_range(1..10),
            learning_rate: rng.gen_range(0.05..0.5),
            seed: d,
            ..Default::default()
        };
        let model = fit(x.view(), &y, &mask, &cfg).unwrap();
        if model.train_loss.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }

        let mut x2 = x.clone();
        let mut y2 = y.clone();
        for i in (0..n).filter(|&i| !mask[i]) {
            for v in x2.row_mut(i) {
                *v = rng.gen::<f64>() * 1e6 - 5e5;
            }
            y2[i] = !y2[i];
        }
        let other = fit(x2.view(), &y2, &mask, &cfg).unwrap();
        if model.to_json().unwrap() == other.to_json().unwrap() {
            isolated += 1;
        }
    }
    outcome(
        monotone == 20 && isolated == 20,
        format!("non-increasing loss on {monotone}/20 datasets, bitwise identical under masked-row perturbation on {isolated}/20"),
    )
}

// ------------------------------------------------------------------- main

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("metric oracles", Duration::from_secs(10), metric_oracles),
        (
            "bootstrap coverage",
            Duration::from_secs(120),
            bootstrap_coverage,
        ),
        (
            "planted-signal recovery",
            Duration::from_secs(300),
            planted_signal,
        ),
        (
            "text beats tabular on text-only signal",
            Duration::MAX,
            directional,
        ),
        (
            "serialization fidelity",
            Duration::MAX,
            serialization_fidelity,
        ),
        ("split contamination", Duration::MAX, split_contamination),
        (
            "clustering block structure",
            Duration::MAX,
            clustering_blocks,
        ),
        ("gbdt soundness", Duration::MAX, gbdt_soundness),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(", limit {}s", limit.as_secs())
        };
        println!(
            "{} {name}: {} [{:.1}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
