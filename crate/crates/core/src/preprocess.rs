//! In-plane rescaling, histogram window/level normalization and dataset-wide
//! z-scoring.

use crate::error::{Error, Result};
use crate::quantile::quantile_sorted;
use crate::volume::{VolumeKind, VoxelVolume};

pub const DEFAULT_TARGET: (usize, usize) = (256, 256);
pub const DEFAULT_P_LOW: f64 = 0.01;
pub const DEFAULT_P_HIGH: f64 = 0.99;

/// Mean and population standard deviation over the brain voxels of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetStats {
    pub mean: f64,
    pub std: f64,
    pub count: u64,
}

impl DatasetStats {
    pub fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }
}

/// Resamples every slice in-plane to `target = (ny, nx)`. Intensity volumes
/// use bilinear interpolation, masks use nearest neighbour. The z axis is
/// left untouched and spacing is adjusted so the physical extent is kept.
pub fn rescale_to_reference(v: &VoxelVolume, target: (usize, usize)) -> Result<VoxelVolume> {
    let (ty, tx) = target;
    if ty == 0 || tx == 0 {
        return Err(Error::InvalidArgument(format!(
            "target dims must be positive, got {target:?}"
        )));
    }
    let [nz, ny, nx] = v.dims();
    let [sz, sy, sx] = v.spacing();
    let ry = ny as f64 / ty as f64;
    let rx = nx as f64 / tx as f64;
    let mut out = Vec::with_capacity(nz * ty * tx);

    match v.kind() {
        VolumeKind::Mask => {
            let ys: Vec<usize> = (0..ty).map(|d| nearest_src(d, ry, ny)).collect();
            let xs: Vec<usize> = (0..tx).map(|d| nearest_src(d, rx, nx)).collect();
            for z in 0..nz {
                for &y in &ys {
                    for &x in &xs {
                        out.push(v.get(z, y, x));
                    }
                }
            }
        }
        VolumeKind::Intensity => {
            let ys: Vec<(usize, usize, f64)> = (0..ty).map(|d| linear_src(d, ry, ny)).collect();
            let xs: Vec<(usize, usize, f64)> = (0..tx).map(|d| linear_src(d, rx, nx)).collect();
            for z in 0..nz {
                for &(y0, y1, wy) in &ys {
                    for &(x0, x1, wx) in &xs {
                        let a = v.get(z, y0, x0) as f64;
                        let b = v.get(z, y0, x1) as f64;
                        let c = v.get(z, y1, x0) as f64;
                        let d = v.get(z, y1, x1) as f64;
                        let top = a + (b - a) * wx;
                        let bottom = c + (d - c) * wx;
                        out.push((top + (bottom - top) * wy) as f32);
                    }
                }
            }
        }
    }
    VoxelVolume::new([nz, ty, tx], [sz, sy * ry, sx * rx], v.kind(), out)
}

fn nearest_src(dst: usize, ratio: f64, n: usize) -> usize {
    (((dst as f64 + 0.5) * ratio).floor() as usize).min(n - 1)
}

fn linear_src(dst: usize, ratio: f64, n: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, s - i0 as f64)
}

fn check_brain(v: &VoxelVolume, brain: Option<&VoxelVolume>) -> Result<()> {
    if let Some(b) = brain {
        if !b.is_mask() {
            return Err(Error::WrongKind { expected: "mask" });
        }
        if b.dims() != v.dims() {
            return Err(Error::DimMismatch(v.dims(), b.dims()));
        }
    }
    Ok(())
}

fn brain_values(v: &VoxelVolume, brain: Option<&VoxelVolume>) -> Vec<f64> {
    match brain {
        Some(b) => v
            .data()
            .iter()
            .zip(b.data())
            .filter(|(_, &m)| m != 0.0)
            .map(|(&x, _)| x as f64)
            .collect(),
        None => v.data().iter().map(|&x| x as f64).collect(),
    }
}

/// Clips intensities to the `[p_low, p_high]` quantiles of the brain-voxel
/// histogram (whole volume without a brain mask) and maps them affinely onto
/// `[0, 1]`.
pub fn window_level_normalize(
    v: &VoxelVolume,
    brain: Option<&VoxelVolume>,
    p_low: f64,
    p_high: f64,
) -> Result<VoxelVolume> {
    if v.kind() != VolumeKind::Intensity {
        return Err(Error::WrongKind {
            expected: "intensity",
        });
    }
    if !(0.0..1.0).contains(&p_low) || !(p_high > p_low && p_high <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_low < p_high <= 1, got ({p_low}, {p_high})"
        )));
    }
    check_brain(v, brain)?;
    let mut values = brain_values(v, brain);
    values.retain(|x| x.is_finite());
    if values.is_empty() {
        return Err(Error::Degenerate("no brain voxels".into()));
    }
    values.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&values, p_low);
    let hi = quantile_sorted(&values, p_high);
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "window quantiles coincide at {lo}"
        )));
    }
    let width = hi - lo;
    let data = v
        .data()
        .iter()
        .map(|&x| {
            let x = x as f64;
            if x.is_nan() {
                0.0
            } else {
                ((x.clamp(lo, hi) - lo) / width) as f32
            }
        })
        .collect();
    v.with_data(data)
}

/// Mean and population std over the union of brain voxels of all volumes.
///
/// Accumulation runs volume by volume in list order, voxels in z-major
/// order, with Welford's update, so the result does not depend on how the
/// volumes were loaded.
pub fn compute_dataset_stats(
    volumes: &[&VoxelVolume],
    brains: &[Option<&VoxelVolume>],
) -> Result<DatasetStats> {
    if volumes.is_empty() {
        return Err(Error::InvalidArgument("no volumes".into()));
    }
    if brains.len() != volumes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} volumes but {} brain entries",
            volumes.len(),
            brains.len()
        )));
    }
    let mut count = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for (v, b) in volumes.iter().zip(brains) {
        check_brain(v, *b)?;
        let voxels = v.data().iter().enumerate().filter(|(i, _)| match b {
            Some(b) => b.data()[*i] != 0.0,
            None => true,
        });
        for (_, &x) in voxels {
            let x = x as f64;
            count += 1;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("zero brain voxels in dataset".into()));
    }
    let std = (m2 / count as f64).max(0.0).sqrt();
    Ok(DatasetStats { mean, std, count })
}

pub fn zscore(v: &VoxelVolume, stats: &DatasetStats) -> Result<VoxelVolume> {
    if v.kind() != VolumeKind::Intensity {
        return Err(Error::WrongKind {
            expected: "intensity",
        });
    }
    if !(stats.std > 0.0) || !stats.std.is_finite() {
        return Err(Error::Degenerate(format!("std = {}", stats.std)));
    }
    let data = v
        .data()
        .iter()
        .map(|&x| ((x as f64 - stats.mean) / stats.std) as f32)
        .collect();
    v.with_data(data)
}
