//! Binary slice masks, region selection and Moore-neighbour boundary tracing.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::VoxelVolume;

/// A 2D binary mask, row-major `(y, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMask {
    pub ny: usize,
    pub nx: usize,
    pub bits: Vec<bool>,
}

impl SliceMask {
    pub fn new(ny: usize, nx: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), ny * nx, "mask size");
        SliceMask { ny, nx, bits }
    }

    pub fn from_fn(ny: usize, nx: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            for x in 0..nx {
                bits.push(f(y, x));
            }
        }
        SliceMask { ny, nx, bits }
    }

    pub fn from_volume(mask: &VoxelVolume, z: usize) -> Self {
        let [_, ny, nx] = mask.dims();
        SliceMask {
            ny,
            nx,
            bits: mask.slice_data(z).iter().map(|&v| v != 0.0).collect(),
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.nx + x]
    }

    /// Out-of-bounds reads as background.
    #[inline]
    fn get_signed(&self, y: isize, x: isize) -> bool {
        y >= 0
            && x >= 0
            && (y as usize) < self.ny
            && (x as usize) < self.nx
            && self.get(y as usize, x as usize)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// The largest 4-connected foreground region; ties go to the region
    /// whose first pixel comes first in raster order.
    pub fn largest_region(&self) -> Option<SliceMask> {
        let mut region_of = vec![0u32; self.bits.len()];
        let mut best: Option<(u32, usize)> = None;
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || region_of[start] != 0 {
                continue;
            }
            next += 1;
            region_of[start] = next;
            queue.push_back(start);
            let mut size = 0usize;
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (y, x) = (i / self.nx, i % self.nx);
                let mut visit = |j: usize| {
                    if self.bits[j] && region_of[j] == 0 {
                        region_of[j] = next;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < self.nx {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - self.nx);
                }
                if y + 1 < self.ny {
                    visit(i + self.nx);
                }
            }
            if best.map_or(true, |(_, s)| size > s) {
                best = Some((next, size));
            }
        }
        best.map(|(id, _)| SliceMask {
            ny: self.ny,
            nx: self.nx,
            bits: region_of.iter().map(|&r| r == id).collect(),
        })
    }
}

/// An ordered closed boundary with the centroid of the region it encloses.
///
/// Points are `(y, x)`. For traced contours they are pixel coordinates
/// relative to `origin`, the top-left corner of the region's bounding box,
/// so that feature values do not depend on where the region sits in the
/// image.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryContour {
    pub points: Vec<[f64; 2]>,
    pub centroid: [f64; 2],
    pub origin: [usize; 2],
}

impl BoundaryContour {
    /// A contour built directly from real-valued geometry.
    pub fn from_points(points: Vec<[f64; 2]>, centroid: [f64; 2]) -> Self {
        BoundaryContour {
            points,
            centroid,
            origin: [0, 0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Twice the signed shoelace area in `(x, y)` coordinates. Positive for
    /// the traversal direction produced by [`trace_boundary`].
    pub fn signed_area2(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let [y0, x0] = self.points[i];
                let [y1, x1] = self.points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum()
    }
}

// Moore neighbourhood, clockwise on screen (y down) starting west.
const DIRS: [(isize, isize); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn dir_index(dy: isize, dx: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dy, dx))
        .expect("neighbour offset")
}

/// Traces the outer boundary of the largest 4-connected region of a slice.
///
/// Moore-neighbour tracing starts at the first region pixel in raster order
/// and stops when the first step out of the start pixel would repeat.
/// Pixels on one-pixel-wide parts are visited once per side. The centroid is
/// the mean of all region pixels, not only boundary pixels.
pub fn trace_boundary(slice: &SliceMask) -> Result<BoundaryContour> {
    let region = slice.largest_region().ok_or(Error::EmptySlice)?;

    let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
    let (mut sy, mut sx, mut n) = (0u64, 0u64, 0u64);
    for y in 0..region.ny {
        for x in 0..region.nx {
            if region.get(y, x) {
                y0 = y0.min(y);
                x0 = x0.min(x);
                y1 = y1.max(y);
                x1 = x1.max(x);
                n += 1;
            }
        }
    }
    // Sum in the local frame; integer sums keep the centroid exact up to the
    // final division.
    for y in y0..=y1 {
        for x in x0..=x1 {
            if region.get(y, x) {
                sy += (y - y0) as u64;
                sx += (x - x0) as u64;
            }
        }
    }
    let centroid = [sy as f64 / n as f64, sx as f64 / n as f64];

    let start_idx = region
        .bits
        .iter()
        .position(|&b| b)
        .expect("nonempty region");
    let start = (
        (start_idx / region.nx) as isize,
        (start_idx % region.nx) as isize,
    );
    let mut path = vec![start];
    let mut cur = start;
    let mut backtrack = 0usize;
    let mut first_step: Option<(isize, isize)> = None;
    let cap = 4 * n as usize + 16;

    loop {
        let mut found = None;
        for k in 1..=8 {
            let d = (backtrack + k) % 8;
            let p = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if region.get_signed(p.0, p.1) {
                found = Some((p, (backtrack + k - 1) % 8));
                break;
            }
        }
        let Some((next, prev_dir)) = found else {
            break; // isolated pixel
        };
        if cur == start {
            match first_step {
                None => first_step = Some(next),
                Some(f) if f == next => break,
                Some(_) => {}
            }
        }
        let bg = (cur.0 + DIRS[prev_dir].0, cur.1 + DIRS[prev_dir].1);
        backtrack = dir_index(bg.0 - next.0, bg.1 - next.1);
        cur = next;
        path.push(cur);
        if path.len() > cap {
            break;
        }
    }
    if path.len() > 1 && path.last() == Some(&start) {
        path.pop();
    }

    let points = path
        .into_iter()
        .map(|(y, x)| [(y as usize - y0) as f64, (x as usize - x0) as f64])
        .collect();
    Ok(BoundaryContour {
        points,
        centroid,
        origin: [y0, x0],
    })
}
