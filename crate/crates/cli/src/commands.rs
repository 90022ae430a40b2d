//! The batch commands: synth, train, detect, localize, eval.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use eegart_core::attention::AttentionMap;
use eegart_core::dataset::corpus::{labels_path, load_corpus, recording_path, subject_epochs, write_synthetic_corpus};
use eegart_core::dataset::{LabelRecord, SyntheticSpec};
use eegart_core::evaluation::plot::{attention_svg, roc_svg};
use eegart_core::evaluation::{
    confusion_at, localize, localize_all, roc_auc, sweep_localization_threshold, Decision, EvalReport, LocalizationStats,
};
use eegart_core::models::{Model, ModelKind, Profile};
use eegart_core::pipeline::{train_on_subjects, TrainPlan, TrainSummary};
use eegart_core::signal::io::read_recording;
use eegart_core::signal::{prepare, raw_epochs, segment_epochs, Label, EPOCH_S, WINDOWS_PER_EPOCH};
use eegart_nn::WeightFile;

use crate::files::{
    attention_path_for, jsonl_bytes, read_jsonl, write_atomic, DetectionRow, LocalizationRow,
    DEFAULT_LOCALIZATION_THRESHOLD, REPORT_SUFFIX,
};

/// Epoch-level attention figures written by `eval`.
const MAX_EPOCH_FIGURES: usize = 12;

pub fn synth(spec_path: Option<&Path>, seed: u64, out: &Path) -> Result<Vec<String>> {
    let mut spec: SyntheticSpec = match spec_path {
        Some(p) => serde_json::from_slice(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SyntheticSpec::default(),
    };
    spec.seed = seed;
    Ok(write_synthetic_corpus(out, &spec)?)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub arch: ModelKind,
    pub data: PathBuf,
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
}

/// Summary written next to the weights.
pub fn summary_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".train.json");
    PathBuf::from(s)
}

pub fn train(args: &TrainArgs) -> Result<TrainSummary> {
    let subjects = load_corpus(&args.data)?;
    ensure!(!subjects.is_empty(), "no recordings in {}", args.data.display());
    let mut sets = Vec::with_capacity(subjects.len());
    for s in &subjects {
        ensure!(s.labels.is_some(), "recording {} has no labels file", s.id);
        sets.push((s.id.clone(), subject_epochs(s)?));
    }
    let mut plan = TrainPlan::new(args.arch, args.profile, args.seed);
    if let Some(v) = args.max_epochs {
        plan.max_epochs = v;
        plan.patience = plan.patience.min(v);
    }
    if let Some(v) = args.patience {
        plan.patience = v;
    }
    if let Some(v) = args.batch_size {
        plan.batch_size = v;
    }
    if let Some(v) = args.lr {
        plan.lr = v;
    }
    let trained = train_on_subjects(sets, &plan)?;
    let wf = trained.model.to_weight_file(trained.summary.metadata())?;
    write_atomic(&args.out, &wf.to_bytes()?)?;
    let mut summary = serde_json::to_vec_pretty(&trained.summary)?;
    summary.push(b'\n');
    write_atomic(&summary_path(&args.out), &summary)?;
    Ok(trained.summary)
}

pub struct LoadedModel {
    pub model: Model,
    pub threshold: f64,
    pub localization_threshold: Option<f64>,
}

/// Reads and verifies a weight file; refuses unknown versions, checksum
/// failures, and (when `expected` is given) a different architecture.
pub fn load_model(path: &Path, expected: Option<ModelKind>) -> Result<LoadedModel> {
    let wf = WeightFile::read(path).with_context(|| format!("refusing weights {}", path.display()))?;
    let model = Model::from_weight_file(&wf).with_context(|| format!("refusing weights {}", path.display()))?;
    if let Some(k) = expected {
        ensure!(k == model.kind, "weights hold a {} model, {} was requested", model.kind, k);
    }
    let meta = &wf.manifest.metadata;
    let threshold = meta["threshold"].as_f64().unwrap_or(0.5);
    Ok(LoadedModel { model, threshold, localization_threshold: meta["localization_threshold"].as_f64() })
}

struct Inferred {
    rows: Vec<DetectionRow>,
    maps: Vec<AttentionMap>,
}

fn run_model(loaded: &LoadedModel, rec_path: &Path) -> Result<Inferred> {
    let rec = read_recording(rec_path).with_context(|| format!("reading {}", rec_path.display()))?;
    let prepared = prepare(&rec)?;
    let epochs = segment_epochs(&prepared, EPOCH_S);
    ensure!(!epochs.is_empty(), "recording {} holds no complete 20-s epoch after preprocessing", rec.id);
    let inputs: Vec<&[f64]> = epochs.iter().map(|e| e.values.as_slice()).collect();
    let model = &loaded.model;
    let mut rows = Vec::with_capacity(epochs.len());
    let mut maps = Vec::new();
    for (i, inf) in model.infer(&inputs, 0)?.into_iter().enumerate() {
        rows.push(DetectionRow {
            recording_id: rec.id.clone(),
            model: model.kind.to_string(),
            epoch_index: i,
            start_s: prepared.start_offset_s + i as f64 * EPOCH_S,
            artifact_prob: inf.artifact_prob,
            flagged: inf.artifact_prob >= loaded.threshold,
            threshold: loaded.threshold,
            localization_threshold: loaded.localization_threshold,
        });
        maps.extend(inf.attention);
    }
    Ok(Inferred { rows, maps })
}

/// Writes the report and, for attention models, the maps next to it.
pub fn detect(weights: &Path, rec: &Path, out: &Path, arch: Option<ModelKind>) -> Result<Vec<DetectionRow>> {
    let loaded = load_model(weights, arch)?;
    let inferred = run_model(&loaded, rec)?;
    write_atomic(out, &jsonl_bytes(&inferred.rows)?)?;
    if loaded.model.attention_shape().is_some() {
        write_atomic(&attention_path_for(out), &jsonl_bytes(&inferred.maps)?)?;
    }
    Ok(inferred.rows)
}

pub fn localize_cmd(weights: &Path, rec: &Path, threshold: Option<f64>, out: &Path) -> Result<Vec<LocalizationRow>> {
    let loaded = load_model(weights, None)?;
    ensure!(loaded.model.attention_shape().is_some(), "{} has no attention module to localize with", loaded.model.kind);
    let t = threshold.or(loaded.localization_threshold).unwrap_or(DEFAULT_LOCALIZATION_THRESHOLD);
    ensure!((0.0..=1.0).contains(&t), "threshold {t} outside [0, 1]");
    let inferred = run_model(&loaded, rec)?;
    let rows: Vec<LocalizationRow> = inferred
        .rows
        .iter()
        .zip(&inferred.maps)
        .map(|(r, m)| LocalizationRow {
            recording_id: r.recording_id.clone(),
            epoch_index: r.epoch_index,
            artifact_prob: r.artifact_prob,
            flagged: r.flagged,
            threshold: t,
            intervals: localize(m, t),
        })
        .collect();
    write_atomic(out, &jsonl_bytes(&rows)?)?;
    Ok(rows)
}

struct Scored {
    row: DetectionRow,
    label: LabelRecord,
    map: Option<AttentionMap>,
}

fn report_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(REPORT_SUFFIX))
        .collect();
    out.sort();
    Ok(out)
}

fn single<T: PartialEq + Clone + std::fmt::Debug>(values: impl Iterator<Item = T>, what: &str) -> Result<T> {
    let mut it = values;
    let first = it.next().ok_or_else(|| anyhow!("no {what}"))?;
    for v in it {
        ensure!(v == first, "reports disagree on {what}: {first:?} vs {v:?}");
    }
    Ok(first)
}

/// Scores detection reports against label files. Every labeled epoch counts
/// toward the ROC; localization is scored on flagged epochs with maps.
pub fn eval(reports: &Path, labels: &Path, out: &Path, plots: Option<&Path>) -> Result<EvalReport> {
    let files = report_files(reports)?;
    ensure!(!files.is_empty(), "no *{REPORT_SUFFIX} files in {}", reports.display());
    let mut scored = Vec::new();
    let mut recordings = Vec::new();
    for f in &files {
        let rows: Vec<DetectionRow> = read_jsonl(f)?;
        let Some(first) = rows.first() else { continue };
        let id = first.recording_id.clone();
        let lp = labels_path(labels, &id);
        let by_epoch: BTreeMap<usize, LabelRecord> = read_jsonl::<LabelRecord>(&lp)?.into_iter().map(|l| (l.epoch_index, l)).collect();
        let ap = attention_path_for(f);
        let maps: BTreeMap<usize, AttentionMap> = if ap.exists() {
            read_jsonl::<AttentionMap>(&ap)?.into_iter().map(|m| (m.epoch_index, m)).collect()
        } else {
            BTreeMap::new()
        };
        for row in rows {
            if let Some(l) = by_epoch.get(&row.epoch_index).filter(|l| l.label != Label::Unlabeled) {
                scored.push(Scored { map: maps.get(&row.epoch_index).cloned(), label: l.clone(), row });
            }
        }
        recordings.push(id);
    }
    let model = single(scored.iter().map(|s| s.row.model.clone()), "model")?;
    let threshold = single(scored.iter().map(|s| s.row.threshold), "operating threshold")?;
    let scores: Vec<f64> = scored.iter().map(|s| s.row.artifact_prob).collect();
    let truth: Vec<bool> = scored.iter().map(|s| s.label.label == Label::Artifact).collect();
    let roc = roc_auc(&scores, &truth)?;
    let mut report = EvalReport::from_roc(&model, recordings, scored.len(), &roc);
    report.operating_threshold = threshold;
    report.confusion = confusion_at(&scores, &truth, threshold, Decision::AtLeast);
    report.confusion_at_best = confusion_at(&scores, &truth, roc.best.threshold, Decision::AtLeast);

    let selected: Vec<&Scored> = scored
        .iter()
        .filter(|s| s.row.flagged && s.map.is_some() && s.label.window_labels.iter().all(|l| *l != Label::Unlabeled))
        .collect();
    let maps: Vec<AttentionMap> = selected.iter().map(|s| s.map.clone().expect("filtered")).collect();
    let window_labels: Vec<[Label; WINDOWS_PER_EPOCH]> = selected.iter().map(|s| s.label.window_labels).collect();
    if let Ok(sweep) = sweep_localization_threshold(&maps, &window_labels) {
        let confusion = localize_all(&maps, &window_labels, sweep.best.threshold)?.confusion();
        report.localization = Some(LocalizationStats::from_sweep(maps.len(), &sweep, confusion));
    }

    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    write_atomic(out, &bytes)?;
    if let Some(dir) = plots {
        write_plots(dir, labels, &report, &selected)?;
    }
    Ok(report)
}

fn write_plots(dir: &Path, labels: &Path, report: &EvalReport, selected: &[&Scored]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut curves = vec![(report.model.as_str(), report.roc_points.as_slice())];
    let loc_name = format!("{} attention", report.model);
    if let Some(loc) = &report.localization {
        curves.push((loc_name.as_str(), loc.roc_points.as_slice()));
    }
    write_atomic(&dir.join("roc.svg"), roc_svg(&curves).as_bytes())?;
    let Some(loc) = &report.localization else { return Ok(()) };
    let mut traces: BTreeMap<String, Option<Vec<Vec<f64>>>> = BTreeMap::new();
    for s in selected.iter().take(MAX_EPOCH_FIGURES) {
        let id = &s.row.recording_id;
        let epochs = traces.entry(id.clone()).or_insert_with(|| {
            let p = recording_path(labels, id);
            read_recording(&p)
                .ok()
                .and_then(|r| prepare(&r).ok())
                .map(|r| raw_epochs(&r, EPOCH_S).into_iter().map(<[f64]>::to_vec).collect())
        });
        let trace = epochs.as_ref().and_then(|e| e.get(s.row.epoch_index)).cloned().unwrap_or_default();
        let map = s.map.as_ref().expect("selected epochs carry maps");
        let svg = attention_svg(&trace, map, &localize(map, loc.threshold), &s.label.window_labels, loc.threshold);
        write_atomic(&dir.join(format!("attention_{id}_{:04}.svg", s.row.epoch_index)), svg.as_bytes())?;
    }
    Ok(())
}

pub fn parse_kind(s: &str) -> Result<ModelKind> {
    s.parse::<ModelKind>().map_err(|e| anyhow!("{e}"))
}

pub fn parse_profile(s: &str) -> Result<Profile> {
    s.parse::<Profile>().map_err(|e| anyhow!("{e}"))
}

pub fn bail_if_missing(p: &Path) -> Result<()> {
    if !p.exists() {
        bail!("{} does not exist", p.display());
    }
    Ok(())
}
