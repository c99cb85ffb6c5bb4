//! Tumor shape features: angular standard deviation (ASD), bounding
//! ellipsoid volume ratio (BEVR) and margin fluctuation (MF).
//!
//! ASD and MF are per-slice features measured in pixel units on the traced
//! tumor boundary. BEVR is a 3D feature measured in millimeters.

pub mod contour;
pub mod ellipsoid;
pub mod radial;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::VoxelVolume;

pub use contour::{trace_boundary, BoundaryContour, SliceMask};
pub use ellipsoid::{min_bounding_ellipsoid, Ellipsoid, MveeFit, MveeOptions};
pub use radial::{
    angular_standard_deviation, margin_fluctuation, normalized_radial_distances, RadialProfile,
};

/// How ASD and MF are reduced to one value per case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicePolicy {
    /// The slice with the most tumor pixels (ties: smaller z).
    #[default]
    MaxArea,
    /// Mean over every slice whose boundary is long enough for both
    /// features.
    MeanOverSlices,
}

impl std::str::FromStr for SlicePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_area" | "max-area" => Ok(SlicePolicy::MaxArea),
            "mean" | "mean_over_slices" | "mean-over-slices" => Ok(SlicePolicy::MeanOverSlices),
            other => Err(Error::InvalidArgument(format!(
                "unknown slice policy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFeatureRecord {
    pub case_id: String,
    pub asd: f64,
    pub bevr: f64,
    pub mf: f64,
    pub slice_used: usize,
    pub tumor_voxels: usize,
}

pub fn asd_of_slice(slice: &SliceMask) -> Result<f64> {
    angular_standard_deviation(&trace_boundary(slice)?)
}

pub fn mf_of_slice(slice: &SliceMask) -> Result<f64> {
    margin_fluctuation(&trace_boundary(slice)?)
}

/// Keeps only the lattice points that are extreme (min or max) along every
/// axis-parallel line through them. Dropped points lie between two kept
/// ones, so the convex hull is unchanged.
fn prune_axis_interior(mut points: Vec<[i64; 3]>) -> Vec<[i64; 3]> {
    for axis in 0..3 {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut extent: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
        for p in &points {
            let e = extent.entry((p[a], p[b])).or_insert((p[axis], p[axis]));
            e.0 = e.0.min(p[axis]);
            e.1 = e.1.max(p[axis]);
        }
        points.retain(|p| {
            let (lo, hi) = extent[&(p[a], p[b])];
            p[axis] == lo || p[axis] == hi
        });
    }
    points.sort_unstable();
    points.dedup();
    points
}

/// Foreground voxel indices relative to the bounding-box corner, so that a
/// translated mask yields the same numbers.
fn local_foreground(mask: &VoxelVolume) -> Vec<[i64; 3]> {
    let [nz, ny, nx] = mask.dims();
    let mut pts = Vec::new();
    let mut lo = [i64::MAX; 3];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get(z, y, x) != 0.0 {
                    let p = [z as i64, y as i64, x as i64];
                    for k in 0..3 {
                        lo[k] = lo[k].min(p[k]);
                    }
                    pts.push(p);
                }
            }
        }
    }
    for p in &mut pts {
        for k in 0..3 {
            p[k] -= lo[k];
        }
    }
    pts
}

/// Fits the bounding ellipsoid of a mask in millimeters.
///
/// Voxel centers are used; when they are rank-deficient (a single slice,
/// row or column of voxels) the voxel corners are used instead, which
/// inflates the set by half a voxel in every direction.
pub fn mask_bounding_ellipsoid(mask: &VoxelVolume, opts: &MveeOptions) -> Result<MveeFit> {
    let voxels = local_foreground(mask);
    if voxels.is_empty() {
        return Err(Error::EmptyMask);
    }
    let spacing = mask.spacing();
    let hull = prune_axis_interior(voxels);
    let to_mm = |p: &[i64; 3], unit: f64| -> [f64; 3] {
        [
            p[0] as f64 * unit * spacing[0],
            p[1] as f64 * unit * spacing[1],
            p[2] as f64 * unit * spacing[2],
        ]
    };
    let centers: Vec<[f64; 3]> = hull.iter().map(|p| to_mm(p, 1.0)).collect();
    match min_bounding_ellipsoid(&centers, opts) {
        Err(Error::DegenerateGeometry) => {
            // Corners on a half-voxel lattice: 2·index ± 1.
            let mut corners = Vec::with_capacity(hull.len() * 8);
            for p in &hull {
                for dz in [-1, 1] {
                    for dy in [-1, 1] {
                        for dx in [-1, 1] {
                            corners.push([2 * p[0] + dz, 2 * p[1] + dy, 2 * p[2] + dx]);
                        }
                    }
                }
            }
            let corners: Vec<[f64; 3]> = prune_axis_interior(corners)
                .iter()
                .map(|p| to_mm(p, 0.5))
                .collect();
            min_bounding_ellipsoid(&corners, opts)
        }
        other => other,
    }
}

/// Tumor volume over the volume of its minimum bounding ellipsoid, clamped
/// to `(0, 1]`.
pub fn bounding_ellipsoid_volume_ratio(mask: &VoxelVolume) -> Result<f64> {
    bevr_with(mask, &MveeOptions::default())
}

fn bevr_with(mask: &VoxelVolume, opts: &MveeOptions) -> Result<f64> {
    if !mask.is_mask() {
        return Err(Error::WrongKind { expected: "mask" });
    }
    let count = mask.foreground_count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let fit = mask_bounding_ellipsoid(mask, opts)?;
    let tumor = count as f64 * mask.voxel_volume();
    Ok((tumor / fit.ellipsoid.volume).min(1.0))
}

/// Per-slice foreground counts.
pub fn slice_areas(mask: &VoxelVolume) -> Vec<usize> {
    (0..mask.dims()[0])
        .map(|z| mask.slice_data(z).iter().filter(|&&v| v != 0.0).count())
        .collect()
}

/// Slice with the largest tumor area; ties go to the smaller z.
pub fn representative_slice(mask: &VoxelVolume) -> Option<usize> {
    let areas = slice_areas(mask);
    let mut best: Option<(usize, usize)> = None;
    for (z, &a) in areas.iter().enumerate() {
        if a > 0 && best.map_or(true, |(_, ba)| a > ba) {
            best = Some((z, a));
        }
    }
    best.map(|(z, _)| z)
}

/// Computes ASD, BEVR and MF for a post-processed tumor mask.
pub fn extract_features(
    case_id: &str,
    mask: &VoxelVolume,
    policy: SlicePolicy,
) -> Result<ShapeFeatureRecord> {
    if !mask.is_mask() {
        return Err(Error::WrongKind { expected: "mask" });
    }
    let slice_used = representative_slice(mask).ok_or(Error::EmptyMask)?;
    let bevr = bounding_ellipsoid_volume_ratio(mask)?;
    let (asd, mf) = match policy {
        SlicePolicy::MaxArea => {
            let contour = trace_boundary(&SliceMask::from_volume(mask, slice_used))?;
            (
                angular_standard_deviation(&contour)?,
                margin_fluctuation(&contour)?,
            )
        }
        SlicePolicy::MeanOverSlices => {
            let mut values = Vec::new();
            for (z, a) in slice_areas(mask).into_iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let contour = trace_boundary(&SliceMask::from_volume(mask, z))?;
                if let (Ok(asd), Ok(mf)) = (
                    angular_standard_deviation(&contour),
                    margin_fluctuation(&contour),
                ) {
                    values.push((asd, mf));
                }
            }
            if values.is_empty() {
                // report the representative slice's error
                let contour = trace_boundary(&SliceMask::from_volume(mask, slice_used))?;
                angular_standard_deviation(&contour)?;
            }
            let n = values.len() as f64;
            (
                values.iter().map(|v| v.0).sum::<f64>() / n,
                values.iter().map(|v| v.1).sum::<f64>() / n,
            )
        }
    };
    Ok(ShapeFeatureRecord {
        case_id: case_id.to_string(),
        asd,
        bevr,
        mf,
        slice_used,
        tumor_voxels: mask.foreground_count(),
    })
}
