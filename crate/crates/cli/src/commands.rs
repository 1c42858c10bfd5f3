use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use procgan::evaluation::{build_report, length_stats, MetricsReport, Provenance, ScorerBundle};
use procgan::event_log::{
    load_dataset, parse_csv, parse_xes, save_dataset, write_csv, CsvOptions, ParsedLog, PreparedDataset,
};
use procgan::toyproc::{simulate, ToyProcessSpec};
use procgan::training::{
    generate_samples, train_adversarial, train_mle, train_nar, write_jsonl, GanConfig, GanVariant, TrainError,
};
use procgan::workflow::{discover, export_dot, DiscoveryConfig};
use procgan::{Checkpoint, ModelKind, Trace, Vocabulary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LogFormat {
    Csv,
    Xes,
}

impl LogFormat {
    /// From the file extension; CSV unless it ends in `.xes`.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("xes") => LogFormat::Xes,
            _ => LogFormat::Csv,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

/// `model.ckpt` -> `model.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn read_log(path: &Path, format: LogFormat) -> Result<ParsedLog> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = match format {
        LogFormat::Csv => parse_csv(&bytes, &CsvOptions::default()),
        LogFormat::Xes => parse_xes(&bytes),
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    if parsed.warning_count() > 0 {
        warn!(
            "{}: skipped {} events without an activity, dropped {} empty traces",
            path.display(),
            parsed.skipped_events,
            parsed.dropped_traces
        );
    }
    Ok(parsed)
}

pub fn read_traces(path: &Path) -> Result<Vec<Trace>> {
    Ok(read_log(path, LogFormat::infer(path))?.traces)
}

fn write_traces(path: &Path, traces: &[Trace]) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(traces, std::io::BufWriter::new(file))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub cases: usize,
    pub length_mean: f64,
    pub length_std: f64,
    pub activity_types: usize,
    pub max_len: usize,
    pub skipped_events: usize,
    pub dropped_traces: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

/// Parse, split 0.8/0.1/0.1 and write the dataset directory plus `stats.json`.
pub fn ingest(input: &Path, format: LogFormat, out: &Path, cfg: &RunConfig) -> Result<IngestStats> {
    let parsed = read_log(input, format)?;
    let data = PreparedDataset::prepare(&parsed.traces, cfg.seed, cfg.ingest.max_len)?;
    save_dataset(out, &data).with_context(|| format!("writing dataset to {}", out.display()))?;
    let (length_mean, length_std) = length_stats(&parsed.traces)?;
    let stats = IngestStats {
        cases: parsed.traces.len(),
        length_mean,
        length_std,
        activity_types: data.vocabulary.size(),
        max_len: data.max_len,
        skipped_events: parsed.skipped_events,
        dropped_traces: parsed.dropped_traces,
        train: data.train.len(),
        valid: data.valid.len(),
        test: data.test.len(),
        seed: data.seed,
    };
    write_json(&out.join("stats.json"), &stats)?;
    println!("cases           {}", stats.cases);
    println!("length          {:.2} ± {:.2}", stats.length_mean, stats.length_std);
    println!("activity types  {}", stats.activity_types);
    println!("max length      {}", stats.max_len);
    println!("split           {} / {} / {}", stats.train, stats.valid, stats.test);
    Ok(stats)
}

#[derive(Serialize)]
struct LossRecord {
    epoch: usize,
    loss: f64,
}

/// Train `kind` on a dataset directory. Writes the checkpoint to `out`, the
/// per-epoch log to `<out stem>.log.jsonl` and, for adversarial models, the
/// final state to `<out stem>.last.ckpt` (`out` holds the equilibrium one).
/// Returns every file written.
pub fn train(data_dir: &Path, kind: ModelKind, out: &Path, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load_dataset(data_dir).with_context(|| format!("loading dataset {}", data_dir.display()))?;
    let train = data.encoded("train")?;
    let valid = data.encoded("valid")?;
    create_parent(out)?;
    let log_path = sibling(out, "log.jsonl");
    let mut written = vec![out.to_path_buf(), log_path.clone()];
    let log_file = || -> Result<std::io::BufWriter<fs::File>> {
        Ok(std::io::BufWriter::new(fs::File::create(&log_path)?))
    };
    let keep_last_good = |err: TrainError| -> anyhow::Error {
        if let TrainError::NonFinite { last_good: Some(ck), .. } = &err {
            let path = sibling(out, "last_good.ckpt");
            match ck.save(&path) {
                Ok(()) => warn!("last good state saved to {}", path.display()),
                Err(e) => warn!("could not save last good state: {e}"),
            }
        }
        err.into()
    };

    if let Some(variant) = GanVariant::from_kind(kind) {
        let gan = GanConfig { variant, ..cfg.gan.clone() };
        let outcome = train_adversarial(&train, &valid, &gan).map_err(keep_last_good)?;
        outcome.equilibrium.save(out)?;
        let last = sibling(out, "last.ckpt");
        outcome.last.save(&last)?;
        write_jsonl(&outcome.log, log_file()?)?;
        written.push(last);
        println!(
            "{kind}: {} epochs, w_a {:.4}, equilibrium at epoch {}",
            outcome.log.len(),
            outcome.w_a,
            outcome.equilibrium.epoch
        );
    } else if kind == ModelKind::TransNar {
        let outcome = train_nar(&train, &cfg.nar).map_err(keep_last_good)?;
        outcome.checkpoint.save(out)?;
        let records: Vec<LossRecord> = outcome
            .losses
            .iter()
            .enumerate()
            .map(|(epoch, &loss)| LossRecord { epoch, loss })
            .collect();
        write_jsonl(&records, log_file()?)?;
        println!(
            "{kind}: {} epochs, loss {:.4} -> {:.4}",
            outcome.losses.len(),
            outcome.initial_loss,
            outcome.losses.last().copied().unwrap_or(f64::NAN)
        );
    } else {
        let outcome = train_mle(&train, &valid, kind, &cfg.mle).map_err(keep_last_good)?;
        outcome.checkpoint.save(out)?;
        write_jsonl(&outcome.log, log_file()?)?;
        println!(
            "{kind}: {} epochs, kept epoch {}",
            outcome.log.len(),
            outcome.checkpoint.epoch
        );
    }
    info!("checkpoint written to {}", out.display());
    Ok(written)
}

/// Sidecar of a generated CSV: where the traces came from and how many were
/// empty (empty traces have no rows in the CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub model: String,
    pub checkpoint: String,
    pub seed: u64,
    pub count: usize,
    pub empty: usize,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    sibling(csv, "meta.json")
}

pub fn generate(checkpoint: &Path, count: usize, out: &Path, cfg: &RunConfig) -> Result<SampleMeta> {
    if count == 0 {
        bail!("count must be at least 1");
    }
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let samples = generate_samples(&ck, count, cfg.seed, cfg.generate.options())?;
    write_traces(out, &samples.traces)?;
    let meta = SampleMeta {
        model: ck.kind.to_string(),
        checkpoint: file_name(checkpoint),
        seed: cfg.seed,
        count,
        empty: samples.empty,
    };
    write_json(&meta_path(out), &meta)?;
    println!("{count} traces from {} written to {} ({} empty)", ck.kind, out.display(), samples.empty);
    Ok(meta)
}

/// Synthetic traces from a CSV, with the empty ones recorded in its sidecar
/// restored so they count towards the sample size.
fn read_synthetic(path: &Path) -> Result<(Vec<Trace>, Option<SampleMeta>)> {
    let mut traces = read_traces(path)?;
    let meta_file = meta_path(path);
    if !meta_file.exists() {
        return Ok((traces, None));
    }
    let meta: SampleMeta = serde_json::from_slice(&fs::read(&meta_file)?)
        .with_context(|| format!("parsing {}", meta_file.display()))?;
    if traces.len() + meta.empty != meta.count {
        bail!(
            "{} lists {} traces ({} empty) but {} has {} non-empty ones",
            meta_file.display(),
            meta.count,
            meta.empty,
            path.display(),
            traces.len()
        );
    }
    traces.extend((0..meta.empty).map(|i| Trace::new(format!("empty_{}", i + 1), Vec::<String>::new())));
    Ok((traces, Some(meta)))
}

pub fn evaluate(authentic: &Path, synthetic: &Path, scorer: Option<&Path>, out: &Path) -> Result<MetricsReport> {
    let auth = read_traces(authentic)?;
    let (syn, meta) = read_synthetic(synthetic)?;
    let vocabulary = Vocabulary::build(auth.iter().chain(&syn));
    let bundle = scorer
        .map(|p| ScorerBundle::load(p).with_context(|| format!("loading scorer {}", p.display())))
        .transpose()?;
    let provenance = meta.map_or_else(Provenance::default, |m| Provenance {
        model: Some(m.model),
        checkpoint: Some(m.checkpoint),
        seed: Some(m.seed),
    });
    let report = build_report(&auth, &syn, &vocabulary, bundle.as_ref(), &provenance)?;
    create_parent(out)?;
    write_json(out, &report)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!("authentic  {} traces, length {:.2} ± {:.2}, SPE {:.4}", report.n_authentic, report.authentic_length_mean, report.authentic_length_std, report.authentic_spe);
    println!(
        "synthetic  {} traces ({} empty), length {} ± {}, SPE {}",
        report.n_synthetic,
        report.n_empty_synthetic,
        opt(report.synthetic_length_mean),
        opt(report.synthetic_length_std),
        opt(report.synthetic_spe)
    );
    println!("occurrence distance  {:.4}", report.occurrence_distance);
    println!("SPE gap              {}", opt(report.spe_gap()));
    println!("FPR                  {}", opt(report.fpr));
    if let Some(d) = &report.scorer_diagnostic {
        warn!("{d}");
    }
    Ok(report)
}

pub fn scorer_train(data_dir: &Path, out: &Path, cfg: &RunConfig) -> Result<ScorerBundle> {
    let data = load_dataset(data_dir).with_context(|| format!("loading dataset {}", data_dir.display()))?;
    let bundle = procgan::evaluation::train_scorer(&data.train, &data.valid, &data.vocabulary, data.max_len, &cfg.scorer)?;
    create_parent(out)?;
    bundle.save(out)?;
    println!("scorer F1 {:.4} (epoch {})", bundle.f1, bundle.epoch);
    if let Some(d) = &bundle.diagnostic {
        warn!("{d}");
    }
    Ok(bundle)
}

/// Write the workflow diagram to `out` and its summary to `<out stem>.json`.
pub fn discover_workflow(log: &Path, out: &Path, cfg: &DiscoveryConfig) -> Result<Vec<PathBuf>> {
    let traces = read_traces(log)?;
    let found = discover(&traces, cfg)?;
    create_parent(out)?;
    fs::write(out, export_dot(&found.graph)).with_context(|| format!("writing {}", out.display()))?;
    let summary_path = sibling(out, "json");
    write_json(&summary_path, &found.summary)?;
    let backbone: Vec<&str> = found.summary.backbone.iter().map(|b| b.activity.as_str()).collect();
    println!("backbone       {}", backbone.join(" > "));
    for side in &found.summary.side_branches {
        println!(
            "side branch    {} ({}) between {} and {}",
            side.activity,
            side.frequency,
            side.attach_after.as_deref().unwrap_or("start"),
            side.attach_before.as_deref().unwrap_or("end")
        );
    }
    Ok(vec![out.to_path_buf(), summary_path])
}

/// Concatenate trace files; case ids become `part<i>_<id>` (1-based `i`).
pub fn concat(inputs: &[PathBuf], out: &Path) -> Result<usize> {
    if inputs.is_empty() {
        bail!("need at least one input");
    }
    let mut all = Vec::new();
    for (i, path) in inputs.iter().enumerate() {
        for t in read_traces(path)? {
            all.push(Trace {
                case_id: format!("part{}_{}", i + 1, t.case_id),
                activities: t.activities,
            });
        }
    }
    write_traces(out, &all)?;
    println!("{} traces written to {}", all.len(), out.display());
    Ok(all.len())
}

/// Simulate the toy process (or a spec from a JSON file) with the run seed.
pub fn simulate_log(spec: Option<&Path>, count: usize, out: &Path, cfg: &RunConfig) -> Result<()> {
    let mut spec = match spec {
        Some(p) => serde_json::from_slice::<ToyProcessSpec>(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ToyProcessSpec::toy6(cfg.seed),
    };
    spec.seed = cfg.seed;
    let sim = simulate(&spec, count)?;
    write_traces(out, &sim.traces)?;
    println!(
        "{count} traces written to {} (expected length {:.3})",
        out.display(),
        sim.expected_length
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub model: String,
    pub input: String,
    pub config: RunConfig,
    /// Path relative to the output directory -> SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// ingest -> [scorer] -> train -> generate -> evaluate -> discover, all under `out`.
pub fn run_all(
    input: &Path,
    format: LogFormat,
    kind: ModelKind,
    with_scorer: bool,
    out: &Path,
    cfg: &RunConfig,
) -> Result<RunManifest> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let data_dir = out.join("data");
    let mut files = Vec::new();
    let mut notes = Vec::new();

    println!("== ingest");
    ingest(input, format, &data_dir, cfg)?;
    for f in ["manifest.json", "stats.json", "train.csv", "valid.csv", "test.csv"] {
        files.push(data_dir.join(f));
    }
    let scorer_path = out.join("scorer.json");
    if with_scorer {
        println!("== scorer-train");
        scorer_train(&data_dir, &scorer_path, cfg)?;
        files.push(scorer_path.clone());
    }
    println!("== train {kind}");
    let ckpt = out.join("model.ckpt");
    files.extend(train(&data_dir, kind, &ckpt, cfg)?);
    println!("== generate");
    let synthetic = out.join("synthetic.csv");
    generate(&ckpt, cfg.generate.count, &synthetic, cfg)?;
    files.push(synthetic.clone());
    files.push(meta_path(&synthetic));
    println!("== evaluate");
    let report = out.join("report.json");
    evaluate(&data_dir.join("test.csv"), &synthetic, with_scorer.then_some(scorer_path.as_path()), &report)?;
    files.push(report);
    println!("== discover (authentic)");
    files.extend(discover_workflow(&data_dir.join("train.csv"), &out.join("workflow_authentic.dot"), &cfg.discovery)?);
    println!("== discover (synthetic)");
    match discover_workflow(&synthetic, &out.join("workflow_synthetic.dot"), &cfg.discovery) {
        Ok(written) => files.extend(written),
        Err(e) => {
            warn!("no synthetic workflow: {e:#}");
            notes.push(format!("synthetic workflow skipped: {e:#}"));
        }
    }

    let mut artifacts = BTreeMap::new();
    for f in &files {
        let rel = f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
        artifacts.insert(rel, sha256_file(f)?);
    }
    let manifest = RunManifest {
        seed: cfg.seed,
        model: kind.to_string(),
        input: file_name(input),
        config: cfg.clone(),
        artifacts,
        notes,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("manifest written to {}", out.join("manifest.json").display());
    Ok(manifest)
}
