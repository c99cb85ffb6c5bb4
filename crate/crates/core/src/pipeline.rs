//! End-to-end orchestration: each stage reads the previous stage's files,
//! so any stage can be rerun alone from preserved outputs.
//!
//! Output layout under `out`:
//!
//! ```text
//! preprocessed/<case>/<sequence>.gmv   preprocessed/<case>/brain_mask.gmv
//! preprocessed/stats.json              plan.json
//! masks/<case>.gmv                     folds.json
//! features.tsv                         dice.tsv, dice_summary.json
//! report.tsv, report.json              run.json
//! ```
//!
//! A case that fails a stage is logged and left out of later stages; the
//! batch carries on. [`RunStatus`] tells apart full success, partial failure
//! and a stage where nothing succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{dice, make_folds, pool_and_score, FoldPlan};
use crate::fsutil::{create_dir_all, write_atomic};
use crate::manifest::{read_manifest, CaseManifest, CaseRecord, Sequence};
use crate::preprocess::{
    compute_dataset_stats, rescale_to_reference, window_level_normalize, zscore, DatasetStats,
    DEFAULT_P_HIGH, DEFAULT_P_LOW, DEFAULT_TARGET,
};
use crate::radiogenomics::{
    report_tsv, run_hypotheses, AssociationOptions, BinningScope, FisherOptions, GenomicLabels,
};
use crate::shape::{extract_features, ShapeFeatureRecord, SlicePolicy};
use crate::tables::{dice_tsv, features_tsv};
use crate::trainprep::{plan_manifest, ChannelPolicy};
use crate::volume::{load_volume, read_volume_header, write_volume, VoxelVolume};
use crate::{postprocess, radiogenomics, seed};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    /// In-plane size `(ny, nx)` of preprocessed volumes.
    pub target: [usize; 2],
    pub p_low: f64,
    pub p_high: f64,
    pub slice_policy: SlicePolicy,
    pub channel_policy: ChannelPolicy,
    pub alpha: f64,
    pub tests: usize,
    pub binning_scope: BinningScope,
    /// Fold count; `None` uses `cases / fold_size` when that divides evenly.
    pub folds: Option<usize>,
    pub fold_size: usize,
    /// Directory of ground-truth masks `<case>.gmv`; enables Dice.
    pub truth: Option<PathBuf>,
    /// `labels.json`; without it labels come from the manifest.
    pub labels: Option<PathBuf>,
    /// Case-level worker threads; 0 lets rayon decide.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: PathBuf::from("manifest.json"),
            out: PathBuf::from("out"),
            seed: 0,
            target: [DEFAULT_TARGET.0, DEFAULT_TARGET.1],
            p_low: DEFAULT_P_LOW,
            p_high: DEFAULT_P_HIGH,
            slice_policy: SlicePolicy::default(),
            channel_policy: ChannelPolicy::default(),
            alpha: radiogenomics::DEFAULT_ALPHA,
            tests: radiogenomics::HYPOTHESES.len(),
            binning_scope: BinningScope::default(),
            folds: None,
            fold_size: crate::evaluation::DEFAULT_FOLD_SIZE,
            truth: None,
            labels: None,
            workers: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn association(&self) -> AssociationOptions {
        AssociationOptions {
            alpha: self.alpha,
            tests: self.tests,
            scope: self.binning_scope,
            fisher: FisherOptions {
                seed: seed::derive_u64(self.seed, &[b"associate"]),
                ..FisherOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub attempted: usize,
    pub succeeded: usize,
    pub failures: Vec<CaseFailure>,
    /// Stage-level error that stopped the stage as a whole.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageReport {
    fn fail(&mut self, case_id: &str, e: &Error) {
        warn!("case {case_id}: {e}");
        self.failures.push(CaseFailure {
            case_id: case_id.to_string(),
            error: e.to_string(),
        });
    }

    fn abort(&mut self, stage: &str, e: &Error) {
        warn!("stage {stage}: {e}");
        self.error = Some(e.to_string());
    }

    pub fn fully_failed(&self) -> bool {
        self.error.is_some() || (self.attempted > 0 && self.succeeded == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Failed => 1,
            RunStatus::Partial => 2,
        }
    }

    pub fn from_stages<'a>(stages: impl IntoIterator<Item = &'a StageReport>) -> Self {
        let mut status = RunStatus::Success;
        for s in stages {
            if s.fully_failed() {
                return RunStatus::Failed;
            }
            if !s.failures.is_empty() {
                status = RunStatus::Partial;
            }
        }
        status
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub status: RunStatus,
    pub stages: BTreeMap<String, StageReport>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            warn!("cannot build a pool of {workers} workers: {e}");
            f()
        }
    }
}

fn check_geometry(
    case_id: &str,
    what: &str,
    reference: &VoxelVolume,
    other: &VoxelVolume,
) -> Result<()> {
    if reference.same_geometry(other) {
        Ok(())
    } else {
        Err(Error::InconsistentGeometry {
            case_id: case_id.to_string(),
            what: what.to_string(),
        })
    }
}

struct WindowedCase {
    case_id: String,
    brain: Option<VoxelVolume>,
    sequences: BTreeMap<Sequence, VoxelVolume>,
}

fn window_case(
    case: &CaseRecord,
    target: (usize, usize),
    p_low: f64,
    p_high: f64,
) -> Result<WindowedCase> {
    let flair = load_volume(
        case.flair()
            .ok_or_else(|| Error::MissingFlair(case.case_id.clone()))?,
    )?;
    let brain = match &case.brain_mask {
        Some(p) => {
            let b = load_volume(p)?;
            check_geometry(&case.case_id, "brain_mask", &flair, &b)?;
            Some(rescale_to_reference(&b, target)?)
        }
        None => None,
    };
    let mut sequences = BTreeMap::new();
    for (&s, path) in &case.sequences {
        let v = if s == Sequence::Flair {
            flair.clone()
        } else {
            load_volume(path)?
        };
        check_geometry(&case.case_id, s.as_str(), &flair, &v)?;
        let r = rescale_to_reference(&v, target)?;
        sequences.insert(
            s,
            window_level_normalize(&r, brain.as_ref(), p_low, p_high)?,
        );
    }
    Ok(WindowedCase {
        case_id: case.case_id.clone(),
        brain,
        sequences,
    })
}

/// Rescales, windows and z-scores every case. Z-score statistics are pooled
/// per sequence over the cases that loaded, in manifest order.
pub fn preprocess_cases(
    manifest: &CaseManifest,
    out: &Path,
    target: (usize, usize),
    p_low: f64,
    p_high: f64,
) -> Result<StageReport> {
    let mut report = StageReport {
        attempted: manifest.cases.len(),
        ..StageReport::default()
    };
    let windowed: Vec<Result<WindowedCase>> = manifest
        .cases
        .par_iter()
        .map(|c| window_case(c, target, p_low, p_high))
        .collect();
    let mut ok = Vec::new();
    for (case, w) in manifest.cases.iter().zip(windowed) {
        match w {
            Ok(w) => ok.push(w),
            Err(e) => report.fail(&case.case_id, &e),
        }
    }
    let mut stats: BTreeMap<Sequence, DatasetStats> = BTreeMap::new();
    for s in Sequence::ALL {
        let (vols, brains): (Vec<&VoxelVolume>, Vec<Option<&VoxelVolume>>) = ok
            .iter()
            .filter_map(|w| w.sequences.get(&s).map(|v| (v, w.brain.as_ref())))
            .unzip();
        if vols.is_empty() {
            continue;
        }
        let st = compute_dataset_stats(&vols, &brains)?;
        if st.is_degenerate() {
            return Err(Error::Degenerate(format!(
                "{s} intensities have zero spread"
            )));
        }
        stats.insert(s, st);
    }
    let written: Vec<Result<()>> = ok
        .par_iter()
        .map(|w| {
            let dir = out.join(&w.case_id);
            create_dir_all(&dir)?;
            for (s, v) in &w.sequences {
                write_volume(&zscore(v, &stats[s])?, dir.join(format!("{s}.gmv")))?;
            }
            if let Some(b) = &w.brain {
                write_volume(b, dir.join("brain_mask.gmv"))?;
            }
            Ok(())
        })
        .collect();
    for (w, r) in ok.iter().zip(written) {
        match r {
            Ok(()) => report.succeeded += 1,
            Err(e) => report.fail(&w.case_id, &e),
        }
    }
    let named: BTreeMap<&str, DatasetStats> = stats.iter().map(|(s, v)| (s.as_str(), *v)).collect();
    write_json(&out.join("stats.json"), &named)?;
    Ok(report)
}

/// Keeps the largest 6-connected component of one mask file.
pub fn postprocess_file(input: &Path, output: &Path) -> Result<()> {
    let mask = load_volume(input)?;
    write_volume(&postprocess::keep_largest_component(&mask)?, output)
}

/// Cleans every case's tumor mask into `out/<case>.gmv`.
pub fn postprocess_cases(manifest: &CaseManifest, out: &Path) -> Result<StageReport> {
    create_dir_all(out)?;
    let results: Vec<Result<()>> = manifest
        .cases
        .par_iter()
        .map(|c| {
            let path = c
                .tumor_mask
                .as_ref()
                .ok_or_else(|| Error::MissingTumorMask(c.case_id.clone()))?;
            let flair = read_volume_header(
                c.flair()
                    .ok_or_else(|| Error::MissingFlair(c.case_id.clone()))?,
            )?;
            let mask = load_volume(path)?;
            if mask.dims() != flair.dims || mask.spacing() != flair.spacing {
                return Err(Error::InconsistentGeometry {
                    case_id: c.case_id.clone(),
                    what: "tumor_mask".into(),
                });
            }
            write_volume(
                &postprocess::keep_largest_component(&mask)?,
                out.join(format!("{}.gmv", c.case_id)),
            )
        })
        .collect();
    Ok(collect_report(manifest.cases.iter().map(|c| c.case_id.as_str()), results).0)
}

fn collect_report<'a, T>(
    ids: impl Iterator<Item = &'a str>,
    results: Vec<Result<T>>,
) -> (StageReport, Vec<(String, T)>) {
    let mut report = StageReport {
        attempted: results.len(),
        ..StageReport::default()
    };
    let mut ok = Vec::new();
    for (id, r) in ids.zip(results) {
        match r {
            Ok(v) => {
                report.succeeded += 1;
                ok.push((id.to_string(), v));
            }
            Err(e) => report.fail(id, &e),
        }
    }
    (report, ok)
}

/// Features of `masks/<case>.gmv` for each id, in the given order.
pub fn extract_case_features(
    case_ids: &[String],
    masks: &Path,
    policy: SlicePolicy,
) -> (StageReport, Vec<ShapeFeatureRecord>) {
    let results: Vec<Result<ShapeFeatureRecord>> = case_ids
        .par_iter()
        .map(|id| extract_features(id, &load_volume(masks.join(format!("{id}.gmv")))?, policy))
        .collect();
    let (report, ok) = collect_report(case_ids.iter().map(String::as_str), results);
    (report, ok.into_iter().map(|(_, r)| r).collect())
}

/// Case ids of the `*.gmv` files in a directory, sorted.
pub fn mask_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "gmv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Dice of `pred/<case>.gmv` against `truth/<case>.gmv` for each id.
pub fn dice_cases(
    case_ids: &[String],
    pred: &Path,
    truth: &Path,
) -> (StageReport, BTreeMap<String, f64>) {
    let results: Vec<Result<f64>> = case_ids
        .par_iter()
        .map(|id| {
            let name = format!("{id}.gmv");
            dice(
                &load_volume(pred.join(&name))?,
                &load_volume(truth.join(&name))?,
            )
        })
        .collect();
    let (report, ok) = collect_report(case_ids.iter().map(String::as_str), results);
    (report, ok.into_iter().collect())
}

/// Writes `dice.tsv` and, when any case scored, `dice_summary.json` next to
/// it.
pub fn write_dice(
    out: &Path,
    per_case: &BTreeMap<String, f64>,
    plan: Option<&FoldPlan>,
) -> Result<()> {
    write_atomic(out, dice_tsv(per_case, plan).as_bytes())?;
    if !per_case.is_empty() {
        let summary = pool_and_score(per_case, plan)?;
        write_json(&out.with_file_name("dice_summary.json"), &summary)?;
    }
    Ok(())
}

/// Labels from the manifest's `genomic_labels` fields.
pub fn manifest_labels(manifest: &CaseManifest) -> Result<GenomicLabels> {
    let raw: BTreeMap<String, BTreeMap<String, String>> = manifest
        .cases
        .iter()
        .filter(|c| !c.genomic_labels.is_empty())
        .map(|c| (c.case_id.clone(), c.genomic_labels.clone()))
        .collect();
    radiogenomics::parse_labels(&raw)
}

/// Runs the ten tests and writes `report.tsv` plus `report.json` beside it.
pub fn write_association(
    out: &Path,
    features: &[ShapeFeatureRecord],
    labels: &GenomicLabels,
    opts: &AssociationOptions,
) -> Result<()> {
    let rows = run_hypotheses(features, labels, opts)?;
    write_atomic(out, report_tsv(&rows).as_bytes())?;
    write_json(&out.with_extension("json"), &rows)
}

fn fold_plan(cfg: &PipelineConfig, ids: &[String]) -> Result<Option<FoldPlan>> {
    let k = match cfg.folds {
        Some(k) => k,
        None if cfg.fold_size > 0 && !ids.is_empty() && ids.len() % cfg.fold_size == 0 => {
            ids.len() / cfg.fold_size
        }
        None => {
            info!(
                "{} cases do not split into folds of {}; skipping folds",
                ids.len(),
                cfg.fold_size
            );
            return Ok(None);
        }
    };
    make_folds(ids, k, cfg.fold_size, cfg.seed).map(Some)
}

/// Runs every stage and writes `run.json`. Returns `Err` only when the
/// manifest or output directory is unusable; everything else is recorded
/// in the returned log.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunLog> {
    let manifest = read_manifest(&cfg.manifest)?;
    create_dir_all(&cfg.out)?;
    let out = cfg.out.as_path();
    let ids: Vec<String> = manifest.cases.iter().map(|c| c.case_id.clone()).collect();
    let mut stages = BTreeMap::new();

    with_pool(cfg.workers, || -> Result<()> {
        let target = (cfg.target[0], cfg.target[1]);
        let pre = preprocess_cases(
            &manifest,
            &out.join("preprocessed"),
            target,
            cfg.p_low,
            cfg.p_high,
        )
        .unwrap_or_else(|e| {
            let mut r = StageReport {
                attempted: manifest.cases.len(),
                ..StageReport::default()
            };
            r.abort("preprocess", &e);
            r
        });
        stages.insert("preprocess".to_string(), pre);

        let (plan, failed) = plan_manifest(&manifest, cfg.seed, cfg.channel_policy);
        let mut tp = StageReport {
            attempted: manifest.cases.len(),
            succeeded: manifest.cases.len() - failed.len(),
            ..StageReport::default()
        };
        for (id, e) in &failed {
            tp.fail(id, e);
        }
        if let Err(e) = write_atomic(&out.join("plan.json"), plan.to_json().as_bytes()) {
            tp.abort("trainprep", &e);
        }
        stages.insert("trainprep".to_string(), tp);

        let masks = out.join("masks");
        let post = postprocess_cases(&manifest, &masks)?;
        let cleaned: Vec<String> = ids
            .iter()
            .filter(|id| !post.failures.iter().any(|f| &f.case_id == *id))
            .cloned()
            .collect();
        stages.insert("postprocess".to_string(), post);

        let (mut feat, records) = extract_case_features(&cleaned, &masks, cfg.slice_policy);
        if let Err(e) = write_atomic(&out.join("features.tsv"), features_tsv(&records).as_bytes()) {
            feat.abort("features", &e);
        }
        stages.insert("features".to_string(), feat);

        let folds = match fold_plan(cfg, &ids) {
            Ok(p) => p,
            Err(e) => {
                let mut r = StageReport::default();
                r.abort("folds", &e);
                stages.insert("folds".to_string(), r);
                None
            }
        };
        if let Some(p) = &folds {
            write_json(&out.join("folds.json"), p)?;
        }

        if let Some(truth) = &cfg.truth {
            let (mut ev, per_case) = dice_cases(&cleaned, &masks, truth);
            if let Err(e) = write_dice(&out.join("dice.tsv"), &per_case, folds.as_ref()) {
                ev.abort("evaluate", &e);
            }
            stages.insert("evaluate".to_string(), ev);
        }

        let mut assoc = StageReport {
            attempted: 1,
            ..StageReport::default()
        };
        let labels = match &cfg.labels {
            Some(p) => radiogenomics::load_labels(p),
            None => manifest_labels(&manifest),
        };
        match labels.and_then(|l| {
            write_association(&out.join("report.tsv"), &records, &l, &cfg.association())
        }) {
            Ok(()) => assoc.succeeded = 1,
            Err(e) => assoc.abort("associate", &e),
        }
        stages.insert("associate".to_string(), assoc);
        Ok(())
    })?;

    let log = RunLog {
        version: VERSION.to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        status: RunStatus::from_stages(stages.values()),
        stages,
    };
    write_json(&out.join("run.json"), &log)?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_from_stages() {
        let ok = StageReport {
            attempted: 3,
            succeeded: 3,
            ..StageReport::default()
        };
        let mut partial = ok.clone();
        partial.succeeded = 2;
        partial.failures.push(CaseFailure {
            case_id: "x".into(),
            error: "bad".into(),
        });
        let none = StageReport {
            attempted: 2,
            ..StageReport::default()
        };
        assert_eq!(RunStatus::from_stages([&ok, &ok]), RunStatus::Success);
        assert_eq!(RunStatus::from_stages([&ok, &partial]), RunStatus::Partial);
        assert_eq!(RunStatus::from_stages([&partial, &none]), RunStatus::Failed);
        assert_eq!(RunStatus::Partial.exit_code(), 2);
        assert_eq!(RunStatus::Failed.exit_code(), 1);
    }

    #[test]
    fn config_defaults_and_hash() {
        let c = PipelineConfig::default();
        assert_eq!(c.target, [256, 256]);
        assert_eq!((c.p_low, c.p_high), (0.01, 0.99));
        assert_eq!(c.tests, 10);
        let parsed: PipelineConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.hash(), parsed.clone().hash());
        assert_ne!(parsed.hash(), c.hash());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sead": 7}"#).is_err());
    }
}
