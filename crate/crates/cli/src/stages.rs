//! Pipeline stages. Each reads the previous stage's files from the work
//! directory and writes its own outputs plus `run_manifest.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use steward_core::cluster::{
    block_means, cluster_notes, heatmap_svg, similarity_csv, similarity_matrix,
};
use steward_core::cohort::{
    grouped_split, prevalence_table, Cohort, InclusionCriteria, Partition, StayId, Targets,
};
use steward_core::embed::{read_matrix, tokenize, EmbeddingMatrix};
use steward_core::eval::{
    curves_csv, evaluate_all, metrics_table_csv, Curves, Evaluation, MetricReport, ReportContext,
};
use steward_core::gbdt::{fit_multilabel, MultilabelModel};
use steward_core::ingest::ingest_dir;
use steward_core::notes::{read_jsonl, write_jsonl};
use steward_core::pipeline::{cohort_notes, embed_texts, row_ids, Representation};
use steward_core::synthgen::generate;
use steward_core::tabfeat::featurize_tabular;
use steward_core::{Error, Result};

use crate::config::{sha256_hex, RunConfig};
use crate::plots::emit_plots;

pub const MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Serialize,
    Embed,
    Train,
    Evaluate,
    Cluster,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Serialize => "serialize",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to re-run a stage and check its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub version: String,
    pub config_fingerprint: String,
    /// None for stages that use no randomness.
    pub seed: Option<u64>,
    pub settings: serde_json::Value,
    /// Input file → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub struct Runner {
    pub config: RunConfig,
    workdir: PathBuf,
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        io(dir, fs::create_dir_all(dir))?;
    }
    io(path, fs::write(path, bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = io(path, fs::File::open(path))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&io(path, fs::read(path))?))
}

/// Regular files directly inside `dir`, sorted, without the stage manifest.
fn files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in io(dir, fs::read_dir(dir))? {
        let path = io(dir, entry)?.path();
        if path.is_file() && path.file_name().is_some_and(|n| n != MANIFEST) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

impl Runner {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let workdir = config.workdir();
        Ok(Runner { config, workdir })
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.workdir.clone(), |p, s| p.join(s))
    }

    fn slug(&self) -> String {
        self.config.representation.slug()
    }

    /// Name for a file in a manifest: relative to the work directory when
    /// inside it, else relative to the input directory.
    fn display_name(&self, path: &Path) -> String {
        if let Ok(rel) = path.strip_prefix(&self.workdir) {
            return rel.to_string_lossy().replace('\\', "/");
        }
        if let Ok(rel) = path.strip_prefix(self.config.input_dir()) {
            return format!("input/{}", rel.to_string_lossy().replace('\\', "/"));
        }
        path.to_string_lossy().into_owned()
    }

    fn finish(
        &self,
        stage: Stage,
        seed: Option<u64>,
        dir: &Path,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<()> {
        let hashes = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| Ok((self.display_name(p), hash_file(p)?)))
                .collect()
        };
        let manifest = StageManifest {
            stage: stage.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_fingerprint: self.config.fingerprint(),
            seed,
            settings: self.config.settings(),
            inputs: hashes(inputs)?,
            outputs: hashes(outputs)?,
        };
        write_json(&dir.join(MANIFEST), &manifest)?;
        tracing::info!(stage = stage.name(), dir = %dir.display(), "stage complete");
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        tracing::info!(stage = stage.name(), "starting");
        match stage {
            Stage::Synth => self.synth(),
            Stage::Ingest => self.ingest(),
            Stage::Serialize => self.serialize(),
            Stage::Embed => self.embed(),
            Stage::Train => self.train(),
            Stage::Evaluate => self.evaluate(),
            Stage::Cluster => self.cluster(),
            Stage::Report => self.report(),
        }
    }

    /// Stages `all` chains; synthesis only when no input directory is set.
    pub fn all_stages(&self) -> Vec<Stage> {
        let mut stages = Vec::new();
        if self.config.input.is_none() {
            stages.push(Stage::Synth);
        }
        stages.extend([
            Stage::Ingest,
            Stage::Serialize,
            Stage::Embed,
            Stage::Train,
            Stage::Evaluate,
        ]);
        if self.config.representation.uses_notes() {
            stages.push(Stage::Cluster);
        }
        stages.push(Stage::Report);
        stages
    }

    fn synth(&self) -> Result<()> {
        let dir = self.config.input_dir();
        let cfg = self.config.synth_config();
        let manifest = generate(&cfg, &dir)?;
        tracing::info!(
            patients = manifest.n_patients,
            visits = manifest.n_visits,
            "synthetic tables written"
        );
        let outputs = files_in(&dir)?;
        self.finish(Stage::Synth, Some(cfg.seed), &dir, &[], &outputs)
    }

    fn cohort_path(&self) -> PathBuf {
        self.path(&["cohort", "cohort.json"])
    }

    fn load_cohort(&self) -> Result<Cohort> {
        read_json(&self.cohort_path())
    }

    fn ingest(&self) -> Result<()> {
        let input = self.config.input_dir();
        if !input.is_dir() {
            return Err(Error::Config(format!(
                "input directory {} does not exist",
                input.display()
            )));
        }
        let out = ingest_dir(
            &input,
            &InclusionCriteria::default(),
            &self.config.cohort.policy(),
        )?;
        let cohort = grouped_split(
            &out.cohort,
            self.config.cohort.test_fraction,
            self.config.cohort.seed,
        )?;
        let dir = self.path(&["cohort"]);

        let cohort_path = self.cohort_path();
        write(&cohort_path, serde_json::to_string(&cohort)? + "\n")?;

        let prevalence_path = dir.join("prevalence.csv");
        let mut w = csv_writer();
        w.write_record(["antibiotic", "train_count", "test_count", "prevalence_pct"])?;
        for r in prevalence_table(&cohort) {
            w.write_record([
                r.antibiotic.name().to_owned(),
                r.train_count.to_string(),
                r.test_count.to_string(),
                format!("{:.2}", r.prevalence_pct),
            ])?;
        }
        write(&prevalence_path, csv_bytes(w)?)?;

        let rejected_path = dir.join("rejected.csv");
        let mut w = csv_writer();
        w.write_record(["table", "row", "stay_id", "reason"])?;
        for r in &out.rejected {
            w.write_record([
                r.table.clone(),
                r.row.to_string(),
                r.stay_id.clone().unwrap_or_default(),
                r.reason.clone(),
            ])?;
        }
        write(&rejected_path, csv_bytes(w)?)?;

        let count = |part: Partition| {
            let subjects: std::collections::BTreeSet<_> = cohort
                .labels()
                .iter()
                .filter(|l| cohort.partition_of(&l.subject_id) == Some(part))
                .map(|l| &l.subject_id)
                .collect();
            let rows = cohort
                .labels()
                .iter()
                .filter(|l| cohort.partition_of(&l.subject_id) == Some(part))
                .count();
            json!({ "label_rows": rows, "subjects": subjects.len() })
        };
        let summary_path = dir.join("summary.json");
        write_json(
            &summary_path,
            &json!({
                "visits_assembled": out.visits_assembled,
                "labels_before_inclusion": out.labels_before_inclusion,
                "labelled_visits": cohort.visit_order().len(),
                "label_rows": cohort.labels().len(),
                "rejected_rows": out.rejected.len(),
                "train": count(Partition::Train),
                "test": count(Partition::Test),
            }),
        )?;
        tracing::info!(
            visits = cohort.visit_order().len(),
            labels = cohort.labels().len(),
            rejected = out.rejected.len(),
            "cohort built"
        );
        let inputs = files_in(&input)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect::<Vec<_>>();
        self.finish(
            Stage::Ingest,
            Some(self.config.cohort.seed),
            &dir,
            &inputs,
            &[cohort_path, prevalence_path, rejected_path, summary_path],
        )
    }

    fn notes_path(&self) -> PathBuf {
        self.path(&["notes", "notes.jsonl"])
    }

    fn serialize(&self) -> Result<()> {
        let cohort = self.load_cohort()?;
        let notes = cohort_notes(&cohort, self.config.features.token_budget)?;
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &notes)?;
        let path = self.notes_path();
        write(&path, buf)?;
        let truncated = notes.iter().filter(|n| n.truncated).count();
        tracing::info!(notes = notes.len(), truncated, "pseudo-notes written");
        let dir = self.path(&["notes"]);
        self.finish(Stage::Serialize, None, &dir, &[self.cohort_path()], &[path])
    }

    fn features_stem(&self) -> PathBuf {
        self.path(&["features", &self.slug()])
    }

    fn embed(&self) -> Result<()> {
        let cohort = self.load_cohort()?;
        let stem = self.features_stem();
        let dir = self.path(&["features"]);
        io(&dir, fs::create_dir_all(&dir))?;
        let rep = &self.config.representation;
        let mut inputs = vec![self.cohort_path()];
        let mut outputs = vec![stem.with_extension("bin"), stem.with_extension("json")];
        if rep.uses_notes() {
            let notes_path = self.notes_path();
            let file = io(&notes_path, fs::File::open(&notes_path))?;
            let records = read_jsonl(BufReader::new(file))?;
            let ids: Vec<StayId> = records.iter().map(|r| r.stay_id.clone()).collect();
            if ids != row_ids(&cohort) {
                return Err(Error::Validation {
                    message: "notes do not match the cohort; re-run serialize".into(),
                    rows: vec![],
                });
            }
            let texts: Vec<String> = records.into_iter().map(|r| r.text).collect();
            let m = embed_texts(&cohort, &ids, &texts, rep, &self.config.features)?;
            m.write(&stem)?;
            inputs.push(notes_path);
        } else {
            let frame = featurize_tabular::<f32>(&cohort, self.config.features.cardinality_cap)?;
            frame.write(&stem)?;
            outputs.push(stem.with_extension("dict.json"));
        }
        let seed = (self.config.representation == Representation::Word2vec)
            .then_some(self.config.features.sgns.seed);
        self.finish(Stage::Embed, seed, &dir, &inputs, &outputs)
    }

    fn load_features(&self, cohort: &Cohort) -> Result<ndarray::Array2<f32>> {
        let stem = self.features_stem();
        let (header, data) = read_matrix::<f32>(&stem)?;
        if header.stay_ids != row_ids(cohort) {
            return Err(Error::Validation {
                message: format!(
                    "{} rows do not match the cohort; re-run embed",
                    stem.display()
                ),
                rows: vec![],
            });
        }
        Ok(data)
    }

    fn model_dir(&self) -> PathBuf {
        self.path(&["models", &self.slug()])
    }

    fn train(&self) -> Result<()> {
        let cohort = self.load_cohort()?;
        let x = self.load_features(&cohort)?;
        let targets = Targets::from_cohort(&cohort, &row_ids(&cohort))?;
        let model = fit_multilabel(x.view(), &targets, &self.config.train)?;
        let dir = self.model_dir();
        let model_path = dir.join("model.json");
        write(&model_path, serde_json::to_string(&model)? + "\n")?;
        let summary_path = dir.join("summary.json");
        let final_loss: BTreeMap<String, f64> = model
            .models
            .iter()
            .map(|(ab, m)| {
                (
                    ab.name().to_owned(),
                    m.train_loss.last().copied().unwrap_or(f64::NAN),
                )
            })
            .collect();
        let untrainable: BTreeMap<String, &String> = model
            .untrainable
            .iter()
            .map(|(ab, r)| (ab.name().to_owned(), r))
            .collect();
        let train_rows: BTreeMap<String, usize> = model
            .train_rows
            .iter()
            .map(|(ab, n)| (ab.name().to_owned(), *n))
            .collect();
        write_json(
            &summary_path,
            &json!({ "final_train_loss": final_loss, "train_rows": train_rows, "untrainable": untrainable }),
        )?;
        tracing::info!(
            models = model.models.len(),
            untrainable = model.untrainable.len(),
            "models trained"
        );
        let stem = self.features_stem();
        self.finish(
            Stage::Train,
            Some(self.config.train.seed),
            &dir,
            &[
                self.cohort_path(),
                stem.with_extension("bin"),
                stem.with_extension("json"),
            ],
            &[model_path, summary_path],
        )
    }

    fn eval_dir(&self) -> PathBuf {
        self.path(&["eval", &self.slug()])
    }

    fn evaluate(&self) -> Result<()> {
        let cohort = self.load_cohort()?;
        let x = self.load_features(&cohort)?;
        let model_path = self.model_dir().join("model.json");
        let model: MultilabelModel = read_json(&model_path)?;
        let targets = Targets::from_cohort(&cohort, &row_ids(&cohort))?;
        let ctx = ReportContext {
            representation: self.config.representation.to_string(),
            config_fingerprint: self.config.fingerprint(),
            bootstrap: self.config.eval,
        };
        let eval = evaluate_all(&model, x.view(), &targets, &ctx)?;
        for (what, why) in &eval.skipped {
            tracing::warn!(target = %what, reason = %why, "not reported");
        }
        let dir = self.eval_dir();
        let outputs = write_evaluation(&dir, &eval)?;
        let stem = self.features_stem();
        self.finish(
            Stage::Evaluate,
            Some(self.config.eval.seed),
            &dir,
            &[
                self.cohort_path(),
                stem.with_extension("bin"),
                stem.with_extension("json"),
                model_path,
            ],
            &outputs,
        )
    }

    fn cluster(&self) -> Result<()> {
        let rep = &self.config.representation;
        if !rep.uses_notes() {
            return Err(Error::Config(
                "clustering needs a text representation, not tabular".into(),
            ));
        }
        let stem = self.features_stem();
        let emb = EmbeddingMatrix::<f32>::read(&stem)?;
        let notes_path = self.notes_path();
        let file = io(&notes_path, fs::File::open(&notes_path))?;
        let records = read_jsonl(BufReader::new(file))?;
        if records.len() != emb.len()
            || records
                .iter()
                .zip(&emb.stay_ids)
                .any(|(r, id)| r.stay_id != *id)
        {
            return Err(Error::Validation {
                message: "notes and embeddings are not aligned; re-run serialize and embed".into(),
                rows: vec![],
            });
        }
        let tokens: Vec<Vec<String>> = records.iter().map(|r| tokenize(&r.text)).collect();
        let result = cluster_notes(emb.data.view(), &tokens, &self.config.cluster)?;

        let n = result.ordering.len();
        let m = n.min(self.config.similarity.max_rows);
        let kept: Vec<usize> = (0..m).map(|j| result.ordering[j * n / m]).collect();
        let sim = similarity_matrix(emb.data.view(), &kept)?;
        let labels: Vec<usize> = kept
            .iter()
            .map(|&i| result.assignments[i] as usize)
            .collect();
        let (within, between) = block_means(&sim, &labels);
        let ids: Vec<String> = kept
            .iter()
            .map(|&i| emb.stay_ids[i].as_str().to_owned())
            .collect();

        let dir = self.path(&["cluster", &self.slug()]);
        let clusters_path = dir.join("clusters.json");
        let clusters: Vec<serde_json::Value> = (0..result.k)
            .map(|c| {
                let size = result
                    .assignments
                    .iter()
                    .filter(|a| **a == c as i64)
                    .count();
                json!({ "id": c, "size": size, "top_terms": result.top_terms.get(c) })
            })
            .collect();
        let assignments: Vec<serde_json::Value> = emb
            .stay_ids
            .iter()
            .zip(&result.assignments)
            .map(|(id, a)| json!({ "stay_id": id, "cluster": a }))
            .collect();
        write_json(
            &clusters_path,
            &json!({
                "representation": rep.to_string(),
                "k": result.k,
                "silhouette": result.silhouette,
                "silhouette_by_k": result.silhouette_by_k,
                "explained_variance_ratio": result.explained_variance_ratio,
                "degenerate": result.degenerate,
                "within_block_cosine": within,
                "between_block_cosine": between,
                "similarity_rows": m,
                "clusters": clusters,
                "assignments": assignments,
            }),
        )?;
        let csv_path = dir.join("similarity.csv");
        write(&csv_path, similarity_csv(&sim, &ids))?;
        let svg_path = dir.join("similarity.svg");
        let title = format!("Note similarity ({rep}), k = {}", result.k);
        write(
            &svg_path,
            heatmap_svg(&sim, &labels, &title, self.config.similarity.max_cells),
        )?;
        tracing::info!(
            k = result.k,
            silhouette = result.silhouette,
            within,
            between,
            "clusters written"
        );
        self.finish(
            Stage::Cluster,
            Some(self.config.cluster.kmeans.seed),
            &dir,
            &[
                stem.with_extension("bin"),
                stem.with_extension("json"),
                notes_path,
            ],
            &[clusters_path, csv_path, svg_path],
        )
    }

    fn report(&self) -> Result<()> {
        let eval_root = self.path(&["eval"]);
        let mut reports: Vec<MetricReport> = Vec::new();
        let mut curves: Vec<Curves> = Vec::new();
        let mut inputs = Vec::new();
        if eval_root.is_dir() {
            let mut dirs: Vec<PathBuf> = io(&eval_root, fs::read_dir(&eval_root))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            dirs.sort();
            for d in dirs {
                let (m, c) = (d.join("metrics.json"), d.join("curves.json"));
                if !m.is_file() || !c.is_file() {
                    continue;
                }
                reports.extend(read_json::<Vec<MetricReport>>(&m)?);
                curves.extend(read_json::<Vec<Curves>>(&c)?);
                inputs.extend([m, c]);
            }
        }
        if inputs.is_empty() {
            return Err(Error::Config(format!(
                "no evaluations under {}; run evaluate first",
                eval_root.display()
            )));
        }
        let dir = self.path(&["report"]);
        let plot_dir = dir.join("plots");
        if plot_dir.is_dir() {
            io(&plot_dir, fs::remove_dir_all(&plot_dir))?;
        }
        let mut outputs = emit_plots(&plot_dir, &curves, &reports)?;
        let n_plots = outputs.len();
        let metrics_json = dir.join("metrics.json");
        write_json(&metrics_json, &reports)?;
        let metrics_csv = dir.join("metrics.csv");
        write(&metrics_csv, metrics_table_csv(&reports)?)?;
        outputs.extend([metrics_json, metrics_csv]);
        let prevalence = self.path(&["cohort", "prevalence.csv"]);
        if prevalence.is_file() {
            let copy = dir.join("prevalence.csv");
            io(&copy, fs::copy(&prevalence, &copy))?;
            inputs.push(prevalence);
            outputs.push(copy);
        }
        tracing::info!(reports = reports.len(), plots = n_plots, "report written");
        self.finish(Stage::Report, None, &dir, &inputs, &outputs)
    }
}

/// metrics.json, metrics.csv, curves.json, curves.csv and skipped.json.
pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = [
        "metrics.json",
        "metrics.csv",
        "curves.json",
        "curves.csv",
        "skipped.json",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect();
    write_json(&paths[0], &eval.reports)?;
    write(&paths[1], metrics_table_csv(&eval.reports)?)?;
    write(&paths[2], serde_json::to_string(&eval.curves)? + "\n")?;
    write(&paths[3], curves_csv(&eval.curves)?)?;
    write_json(&paths[4], &eval.skipped)?;
    Ok(paths)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))
}
