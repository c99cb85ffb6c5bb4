//! Tab-separated feature and Dice tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a table back yields bit-identical values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::FoldPlan;
use crate::shape::ShapeFeatureRecord;

pub const FEATURES_HEADER: &str = "case_id\tasd\tbevr\tmf\tslice_used\ttumor_voxels";
pub const DICE_HEADER: &str = "case_id\tdice\tfold";

pub fn features_tsv(records: &[ShapeFeatureRecord]) -> String {
    let mut out = format!("{FEATURES_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.case_id, r.asd, r.bevr, r.mf, r.slice_used, r.tumor_voxels
        ));
    }
    out
}

pub fn parse_features_tsv(text: &str, path: &Path) -> Result<Vec<ShapeFeatureRecord>> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == FEATURES_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("unexpected header `{h}`"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err(i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| err(i + 1, format!("`{s}`: {e}")))
        };
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| err(i + 1, format!("`{s}`: {e}")))
        };
        out.push(ShapeFeatureRecord {
            case_id: f[0].to_string(),
            asd: real(f[1])?,
            bevr: real(f[2])?,
            mf: real(f[3])?,
            slice_used: count(f[4])?,
            tumor_voxels: count(f[5])?,
        });
    }
    Ok(out)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<ShapeFeatureRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features_tsv(&text, path)
}

/// One row per case in id order; the fold column is empty without a plan
/// or for cases outside it.
pub fn dice_tsv(per_case: &BTreeMap<String, f64>, plan: Option<&FoldPlan>) -> String {
    let mut out = format!("{DICE_HEADER}\n");
    for (id, d) in per_case {
        let fold = plan
            .and_then(|p| p.fold_of(id))
            .map(|f| f.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{id}\t{d}\t{fold}\n"));
    }
    out
}
