//! Training-set planning: empty-slice filtering, tumor-slice oversampling
//! with rotation/scale augmentation, and input channel assembly.
//!
//! Every tumor slice appears three times in a plan: unchanged, rotated by
//! 5°–15° and rescaled by 4%–8%. Parameters come from a ChaCha8 stream keyed
//! by `(seed, case_id, z)` (see [`crate::seed`]), so a plan does not depend
//! on the order or the thread cases are processed on.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{CaseManifest, CaseRecord, Sequence};
use crate::seed;
use crate::volume::{load_volume, Slice2D, VoxelVolume};

pub const ROTATION_DEGREES: (f64, f64) = (5.0, 15.0);
pub const SCALE_FRACTION: (f64, f64) = (0.04, 0.08);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Rotate { degrees: f64 },
    Scale { factor: f64 },
}

impl Transform {
    /// Whether the parameters are inside the augmentation ranges.
    pub fn in_range(&self) -> bool {
        match *self {
            Transform::Identity => true,
            Transform::Rotate { degrees } => {
                let a = degrees.abs();
                (ROTATION_DEGREES.0..=ROTATION_DEGREES.1).contains(&a)
            }
            Transform::Scale { factor } => {
                let m = factor.max(1.0 / factor);
                (1.0 + SCALE_FRACTION.0..=1.0 + SCALE_FRACTION.1).contains(&m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRef {
    pub sequence: Sequence,
    /// Slice offset from the entry's `z`, already clamped to the volume.
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePlanEntry {
    pub case_id: String,
    pub z: usize,
    pub transform: Transform,
    pub channels: [ChannelRef; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub seed: u64,
    pub entries: Vec<SlicePlanEntry>,
}

impl AugmentationPlan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

/// How the three input channels are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPolicy {
    /// All three sequences when present, otherwise FLAIR neighbours.
    #[default]
    Auto,
    /// Always `(flair[z-1], flair[z], flair[z+1])`.
    FlairNeighbors,
    /// Keep available sequences; a missing pre-contrast channel takes
    /// `flair[z-1]`, a missing post-contrast channel `flair[z+1]`.
    SubstituteMissing,
}

impl std::str::FromStr for ChannelPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ChannelPolicy::Auto),
            "flair" | "flair_neighbors" | "flair-neighbors" => Ok(ChannelPolicy::FlairNeighbors),
            "substitute" | "substitute_missing" | "substitute-missing" => {
                Ok(ChannelPolicy::SubstituteMissing)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown channel policy `{other}`"
            ))),
        }
    }
}

/// Slices with at least one brain voxel, or with nonzero FLAIR intensity
/// when no brain mask is given.
pub fn nonempty_slices(flair: &VoxelVolume, brain: Option<&VoxelVolume>) -> Result<Vec<usize>> {
    let support = match brain {
        Some(b) => {
            if b.dims() != flair.dims() {
                return Err(Error::DimMismatch(flair.dims(), b.dims()));
            }
            b
        }
        None => flair,
    };
    Ok((0..support.dims()[0])
        .filter(|&z| support.slice_data(z).iter().any(|&v| v != 0.0))
        .collect())
}

pub fn filter_empty_slices(case: &CaseRecord) -> Result<Vec<usize>> {
    let flair = load_volume(
        case.flair()
            .ok_or_else(|| Error::MissingFlair(case.case_id.clone()))?,
    )?;
    let brain = case.brain_mask.as_ref().map(load_volume).transpose()?;
    nonempty_slices(&flair, brain.as_ref())
}

fn clamp_offset(z: usize, delta: i64, nz: usize) -> i64 {
    let t = (z as i64 + delta).clamp(0, nz as i64 - 1);
    t - z as i64
}

/// The three channels for slice `z` of a case with the given sequences.
pub fn assemble_channels(
    available: &BTreeSet<Sequence>,
    nz: usize,
    z: usize,
    policy: ChannelPolicy,
) -> [ChannelRef; 3] {
    let flair = |delta| ChannelRef {
        sequence: Sequence::Flair,
        offset: clamp_offset(z, delta, nz),
    };
    let same = |sequence| ChannelRef {
        sequence,
        offset: 0,
    };
    let full = Sequence::ALL.iter().all(|s| available.contains(s));
    match policy {
        ChannelPolicy::Auto if full => [
            same(Sequence::PreContrast),
            same(Sequence::Flair),
            same(Sequence::PostContrast),
        ],
        ChannelPolicy::Auto | ChannelPolicy::FlairNeighbors => [flair(-1), flair(0), flair(1)],
        ChannelPolicy::SubstituteMissing => [
            if available.contains(&Sequence::PreContrast) {
                same(Sequence::PreContrast)
            } else {
                flair(-1)
            },
            flair(0),
            if available.contains(&Sequence::PostContrast) {
                same(Sequence::PostContrast)
            } else {
                flair(1)
            },
        ],
    }
}

/// Slices where the tumor mask has any foreground.
pub fn tumor_slices(mask: &VoxelVolume) -> Vec<bool> {
    (0..mask.dims()[0])
        .map(|z| mask.slice_data(z).iter().any(|&v| v != 0.0))
        .collect()
}

fn draw_augmentations(seed: u64, case_id: &str, z: usize) -> (Transform, Transform) {
    let mut rng = seed::stream(
        seed,
        &[b"trainprep", case_id.as_bytes(), &(z as u64).to_le_bytes()],
    );
    let (lo, hi) = ROTATION_DEGREES;
    let magnitude = lo + (hi - lo) * seed::unit_f64(&mut rng);
    let degrees = if rng_bit(&mut rng) {
        magnitude
    } else {
        -magnitude
    };
    let (lo, hi) = SCALE_FRACTION;
    let grow = 1.0 + lo + (hi - lo) * seed::unit_f64(&mut rng);
    let factor = if rng_bit(&mut rng) { grow } else { 1.0 / grow };
    (Transform::Rotate { degrees }, Transform::Scale { factor })
}

fn rng_bit(rng: &mut impl rand::RngCore) -> bool {
    rng.next_u64() >> 63 == 1
}

/// Plan entries for one case from already-loaded data.
pub fn plan_case(
    case_id: &str,
    tumor: &VoxelVolume,
    kept: &[usize],
    available: &BTreeSet<Sequence>,
    policy: ChannelPolicy,
    seed: u64,
) -> Result<Vec<SlicePlanEntry>> {
    let nz = tumor.dims()[0];
    let has_tumor = tumor_slices(tumor);
    let mut entries = Vec::new();
    for &z in kept {
        if z >= nz {
            return Err(Error::InvalidArgument(format!(
                "slice {z} outside volume of {nz}"
            )));
        }
        let channels = assemble_channels(available, nz, z, policy);
        let entry = |transform| SlicePlanEntry {
            case_id: case_id.to_string(),
            z,
            transform,
            channels,
        };
        entries.push(entry(Transform::Identity));
        if has_tumor[z] {
            let (rot, scale) = draw_augmentations(seed, case_id, z);
            entries.push(entry(rot));
            entries.push(entry(scale));
        }
    }
    Ok(entries)
}

pub fn plan_oversampling(
    case: &CaseRecord,
    kept: &[usize],
    seed: u64,
    policy: ChannelPolicy,
) -> Result<AugmentationPlan> {
    let path = case
        .tumor_mask
        .as_ref()
        .ok_or_else(|| Error::MissingTumorMask(case.case_id.clone()))?;
    let tumor = load_volume(path)?;
    let available = case.sequences.keys().copied().collect();
    Ok(AugmentationPlan {
        seed,
        entries: plan_case(&case.case_id, &tumor, kept, &available, policy, seed)?,
    })
}

/// Plans every case of a manifest in manifest order. Cases that fail are
/// returned separately and left out of the plan.
pub fn plan_manifest(
    manifest: &CaseManifest,
    seed: u64,
    policy: ChannelPolicy,
) -> (AugmentationPlan, Vec<(String, Error)>) {
    let results: Vec<Result<AugmentationPlan>> = manifest
        .cases
        .par_iter()
        .map(|case| {
            let kept = filter_empty_slices(case)?;
            plan_oversampling(case, &kept, seed, policy)
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (case, r) in manifest.cases.iter().zip(results) {
        match r {
            Ok(p) => entries.extend(p.entries),
            Err(e) => failures.push((case.case_id.clone(), e)),
        }
    }
    (AugmentationPlan { seed, entries }, failures)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Applies a transform about the slice center by inverse mapping. Samples
/// falling outside the input are 0; output dims equal input dims.
pub fn apply_transform(slice: &Slice2D, t: &Transform, interp: Interpolation) -> Slice2D {
    let (ny, nx) = (slice.ny, slice.nx);
    let (cy, cx) = ((ny as f64 - 1.0) / 2.0, (nx as f64 - 1.0) / 2.0);
    // Output pixel offset from the center -> input offset.
    let inverse: Box<dyn Fn(f64, f64) -> (f64, f64)> = match *t {
        Transform::Identity => return slice.clone(),
        Transform::Rotate { degrees } => {
            let (s, c) = degrees.to_radians().sin_cos();
            Box::new(move |dy, dx| (c * dy - s * dx, s * dy + c * dx))
        }
        Transform::Scale { factor } => Box::new(move |dy, dx| (dy / factor, dx / factor)),
    };
    let mut out = Slice2D::filled(ny, nx, 0.0);
    for y in 0..ny {
        for x in 0..nx {
            let (dy, dx) = inverse(y as f64 - cy, x as f64 - cx);
            let (sy, sx) = (dy + cy, dx + cx);
            let v = match interp {
                Interpolation::Nearest => sample_nearest(slice, sy, sx),
                Interpolation::Bilinear => sample_bilinear(slice, sy, sx),
            };
            out.set(y, x, v);
        }
    }
    out
}

fn sample_nearest(s: &Slice2D, y: f64, x: f64) -> f32 {
    let (ry, rx) = (y.round(), x.round());
    if ry < 0.0 || rx < 0.0 || ry >= s.ny as f64 || rx >= s.nx as f64 {
        return 0.0;
    }
    s.get(ry as usize, rx as usize)
}

fn sample_bilinear(s: &Slice2D, y: f64, x: f64) -> f32 {
    const EPS: f64 = 1e-9;
    let (my, mx) = ((s.ny - 1) as f64, (s.nx - 1) as f64);
    if y < -EPS || x < -EPS || y > my + EPS || x > mx + EPS {
        return 0.0;
    }
    let (y, x) = (y.clamp(0.0, my), x.clamp(0.0, mx));
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(s.ny - 1), (x0 + 1).min(s.nx - 1));
    let (wy, wx) = (y - y0 as f64, x - x0 as f64);
    let (a, b) = (s.get(y0, x0) as f64, s.get(y0, x1) as f64);
    let (c, d) = (s.get(y1, x0) as f64, s.get(y1, x1) as f64);
    let top = a + (b - a) * wx;
    let bottom = c + (d - c) * wx;
    (top + (bottom - top) * wy) as f32
}
