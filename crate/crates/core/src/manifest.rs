//! Case manifest: the JSON listing of cases, their volumes and genomic labels.
//!
//! Relative paths are resolved against the manifest's directory at load time.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{read_volume_header, VolumeHeader};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    PreContrast,
    Flair,
    PostContrast,
}

impl Sequence {
    pub const ALL: [Sequence; 3] = [
        Sequence::PreContrast,
        Sequence::Flair,
        Sequence::PostContrast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sequence::PreContrast => "pre_contrast",
            Sequence::Flair => "flair",
            Sequence::PostContrast => "post_contrast",
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub case_id: String,
    pub sequences: BTreeMap<Sequence, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brain_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tumor_mask: Option<PathBuf>,
    /// Scheme name to cluster label; schemes without data are absent.
    #[serde(default)]
    pub genomic_labels: BTreeMap<String, String>,
}

impl CaseRecord {
    pub fn flair(&self) -> Option<&Path> {
        self.sequences.get(&Sequence::Flair).map(PathBuf::as_path)
    }

    pub fn has_all_sequences(&self) -> bool {
        Sequence::ALL.iter().all(|s| self.sequences.contains_key(s))
    }

    fn resolve(&mut self, base: &Path) {
        for p in self.sequences.values_mut() {
            *p = base.join(&*p);
        }
        for p in [&mut self.brain_mask, &mut self.tumor_mask]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub schema_version: u32,
    pub cases: Vec<CaseRecord>,
}

impl CaseManifest {
    pub fn new(cases: Vec<CaseRecord>) -> Self {
        CaseManifest {
            schema_version: SCHEMA_VERSION,
            cases,
        }
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// Structural checks that need no file access: schema version, unique
    /// ids, flair presence.
    pub fn validate_structure(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for case in &self.cases {
            if !seen.insert(case.case_id.as_str()) {
                return Err(Error::DuplicateCase(case.case_id.clone()));
            }
            if case.flair().is_none() {
                return Err(Error::MissingFlair(case.case_id.clone()));
            }
        }
        Ok(())
    }

    /// Reads every referenced volume header and checks that all volumes of a
    /// case share the flair geometry.
    pub fn validate_geometry(&self) -> Result<()> {
        for case in &self.cases {
            let flair = read_volume_header(case.flair().expect("structure validated"))?;
            let mut others: Vec<(String, &Path)> = case
                .sequences
                .iter()
                .filter(|(s, _)| **s != Sequence::Flair)
                .map(|(s, p)| (s.to_string(), p.as_path()))
                .collect();
            if let Some(p) = &case.brain_mask {
                others.push(("brain_mask".into(), p));
            }
            if let Some(p) = &case.tumor_mask {
                others.push(("tumor_mask".into(), p));
            }
            for (what, path) in others {
                let h: VolumeHeader = read_volume_header(path)?;
                if h.dims != flair.dims || h.spacing != flair.spacing {
                    return Err(Error::InconsistentGeometry {
                        case_id: case.case_id.clone(),
                        what,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Parses a manifest without touching the referenced volumes.
pub fn parse_manifest(text: &str, base: &Path) -> Result<CaseManifest> {
    let mut manifest: CaseManifest =
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    for case in &mut manifest.cases {
        case.resolve(base);
    }
    manifest.validate_structure()?;
    Ok(manifest)
}

/// Reads a manifest and checks its structure only; volumes are not opened.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<CaseManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, base)
}

/// Loads a manifest and validates it, including per-case geometry.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CaseManifest> {
    let manifest = read_manifest(path)?;
    manifest.validate_geometry()?;
    Ok(manifest)
}
