//! Volume container, the `GMVOL1` on-disk format and grayscale slice stacks.
//!
//! A volume file is three parts:
//!
//! ```text
//! GMVOL1\n
//! {"dims":[nz,ny,nx],"spacing":[sz,sy,sx],"kind":"mask","dtype":"uint8"}\n
//! <raw little-endian payload, z-major then y then x>
//! ```
//!
//! Intensity volumes carry `float32` payloads, masks carry `uint8` payloads
//! restricted to `{0, 1}`.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8] = b"GMVOL1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Intensity,
    Mask,
}

impl VolumeKind {
    fn dtype(self) -> ElementType {
        match self {
            VolumeKind::Intensity => ElementType::Float32,
            VolumeKind::Mask => ElementType::Uint8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementType {
    Float32,
    Uint8,
}

impl ElementType {
    fn size(self) -> usize {
        match self {
            ElementType::Float32 => 4,
            ElementType::Uint8 => 1,
        }
    }
}

/// The JSON header line of a volume file. Field order here is the canonical
/// serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub kind: VolumeKind,
    pub dtype: ElementType,
}

impl VolumeHeader {
    fn validate(&self, path: &Path) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidDims(self.dims));
        }
        check_spacing(self.spacing)?;
        if self.kind.dtype() != self.dtype {
            return Err(Error::Header {
                path: path.to_path_buf(),
                reason: format!(
                    "kind {:?} requires dtype {:?}",
                    self.kind,
                    self.kind.dtype()
                ),
            });
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.voxel_count() * self.dtype.size()
    }
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::NonPositiveSpacing(spacing));
    }
    Ok(())
}

/// A 3D scalar grid with physical spacing in millimeters.
///
/// `dims` and `spacing` are ordered `(z, y, x)`; `data` is z-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    kind: VolumeKind,
    data: Vec<f32>,
}

impl VoxelVolume {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        kind: VolumeKind,
        data: Vec<f32>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidDims(dims));
        }
        check_spacing(spacing)?;
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: data.len(),
            });
        }
        if kind == VolumeKind::Mask {
            if let Some((index, &value)) =
                data.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0)
            {
                return Err(Error::InvalidMask { index, value });
            }
        }
        Ok(VoxelVolume {
            dims,
            spacing,
            kind,
            data,
        })
    }

    pub fn intensity(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        Self::new(dims, spacing, VolumeKind::Intensity, data)
    }

    pub fn mask(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        Self::new(dims, spacing, VolumeKind::Mask, data)
    }

    /// An all-background mask.
    pub fn empty_mask(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::mask(dims, spacing, vec![0.0; dims.iter().product()])
    }

    /// Builds a mask from a boolean predicate over `(z, y, x)`.
    pub fn mask_from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    data.push(if f(z, y, x) { 1.0 } else { 0.0 });
                }
            }
        }
        Self::mask(dims, spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn is_mask(&self) -> bool {
        self.kind == VolumeKind::Mask
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice_len(&self) -> usize {
        self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(z, y, x)]
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn slice(&self, z: usize) -> Slice2D {
        let n = self.slice_len();
        Slice2D {
            ny: self.dims[1],
            nx: self.dims[2],
            data: self.data[z * n..(z + 1) * n].to_vec(),
        }
    }

    pub fn slice_data(&self, z: usize) -> &[f32] {
        let n = self.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    /// Reinterprets an intensity volume as a mask: nonzero voxels become 1.
    pub fn binarize(&self) -> VoxelVolume {
        VoxelVolume {
            dims: self.dims,
            spacing: self.spacing,
            kind: VolumeKind::Mask,
            data: self
                .data
                .iter()
                .map(|&v| if v != 0.0 { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Replaces the payload, keeping geometry and kind. Mask invariants are
    /// rechecked.
    pub fn with_data(&self, data: Vec<f32>) -> Result<VoxelVolume> {
        VoxelVolume::new(self.dims, self.spacing, self.kind, data)
    }

    pub fn same_geometry(&self, other: &VoxelVolume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn header(&self) -> VolumeHeader {
        VolumeHeader {
            dims: self.dims,
            spacing: self.spacing,
            kind: self.kind,
            dtype: self.kind.dtype(),
        }
    }

    /// Stacks 2D slices along z.
    pub fn from_slices(slices: &[Slice2D], spacing: [f64; 3], kind: VolumeKind) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no slices".into()))?;
        let (ny, nx) = (first.ny, first.nx);
        let mut data = Vec::with_capacity(slices.len() * ny * nx);
        for s in slices {
            if s.ny != ny || s.nx != nx {
                return Err(Error::DimMismatch([1, ny, nx], [1, s.ny, s.nx]));
            }
            data.extend_from_slice(&s.data);
        }
        Self::new([slices.len(), ny, nx], spacing, kind, data)
    }

    /// Serializes to the `GMVOL1` byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&self.header()).expect("header serializes");
        let mut out =
            Vec::with_capacity(MAGIC.len() + header.len() + 1 + self.header().payload_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(header.as_bytes());
        out.push(b'\n');
        match self.kind {
            VolumeKind::Intensity => {
                for v in &self.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            VolumeKind::Mask => out.extend(self.data.iter().map(|&v| v as u8)),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (header, payload) = split_header(bytes, path)?;
        let expected = header.payload_len();
        if payload.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: payload.len(),
            });
        }
        let data = match header.dtype {
            ElementType::Float32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            ElementType::Uint8 => payload.iter().map(|&b| b as f32).collect(),
        };
        VoxelVolume::new(header.dims, header.spacing, header.kind, data)
    }
}

fn split_header<'a>(bytes: &'a [u8], path: &Path) -> Result<(VolumeHeader, &'a [u8])> {
    let bad = |reason: &str| Error::Header {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad("missing GMVOL1 magic"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("unterminated header line"))?;
    let header = parse_header(&rest[..nl], path)?;
    Ok((header, &rest[nl + 1..]))
}

fn parse_header(line: &[u8], path: &Path) -> Result<VolumeHeader> {
    let header: VolumeHeader = serde_json::from_slice(line).map_err(|e| Error::Header {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    header.validate(path)?;
    Ok(header)
}

/// Loads and validates a `GMVOL1` volume file.
pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    VoxelVolume::from_bytes(&bytes, path)
}

/// Reads only the header, checking the file length against it.
pub fn read_volume_header(path: impl AsRef<Path>) -> Result<VolumeHeader> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let total = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 7];
    reader.read_exact(&mut magic).map_err(|_| Error::Header {
        path: path.to_path_buf(),
        reason: "missing GMVOL1 magic".into(),
    })?;
    if magic != MAGIC {
        return Err(Error::Header {
            path: path.to_path_buf(),
            reason: "missing GMVOL1 magic".into(),
        });
    }
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io(path, e))?;
    if line.pop() != Some(b'\n') {
        return Err(Error::Header {
            path: path.to_path_buf(),
            reason: "unterminated header line".into(),
        });
    }
    let header = parse_header(&line, path)?;
    let found = total - MAGIC.len() - line.len() - 1;
    if found != header.payload_len() {
        return Err(Error::SizeMismatch {
            expected: header.payload_len(),
            found,
        });
    }
    Ok(header)
}

pub fn write_volume(volume: &VoxelVolume, path: impl AsRef<Path>) -> Result<()> {
    fsutil::write_atomic(path.as_ref(), &volume.to_bytes())
}

/// One 2D scalar slice, row-major `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<f32>,
}

impl Slice2D {
    pub fn new(ny: usize, nx: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != ny * nx {
            return Err(Error::SizeMismatch {
                expected: ny * nx,
                found: data.len(),
            });
        }
        Ok(Slice2D { ny, nx, data })
    }

    pub fn filled(ny: usize, nx: usize, value: f32) -> Self {
        Slice2D {
            ny,
            nx,
            data: vec![value; ny * nx],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.nx + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.nx + x] = v;
    }
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "tif", "tiff"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Lists the image files of a slice directory in stacking order
/// (ascending lexicographic file name).
pub fn slice_stack_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(files)
}

fn read_gray(path: &Path) -> Result<Slice2D> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f32::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(f32::from).collect()
        }
        other => other
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(f32::from)
            .collect(),
    };
    Slice2D::new(h, w, data)
}

/// Stacks a directory of grayscale images into an intensity volume.
///
/// 8- and 16-bit grayscale pixels keep their integer values; color images
/// are converted to 8-bit luma first.
pub fn load_slice_stack(dir: impl AsRef<Path>, spacing: [f64; 3]) -> Result<VoxelVolume> {
    let dir = dir.as_ref();
    let files = slice_stack_files(dir)?;
    let mut slices = Vec::with_capacity(files.len());
    for f in &files {
        let s = read_gray(f)?;
        if let Some(first) = slices.first() {
            let first: &Slice2D = first;
            if (first.ny, first.nx) != (s.ny, s.nx) {
                return Err(Error::MixedImageDims {
                    first: (first.nx as u32, first.ny as u32),
                    other: (s.nx as u32, s.ny as u32),
                    path: f.clone(),
                });
            }
        }
        slices.push(s);
    }
    VoxelVolume::from_slices(&slices, spacing, VolumeKind::Intensity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(json: &str) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(json.as_bytes());
        b.push(b'\n');
        b
    }

    #[test]
    fn loads_eight_float_voxels() {
        let mut bytes = header_bytes(
            r#"{"dims":[2,2,2],"spacing":[1.0,1.0,1.0],"kind":"intensity","dtype":"float32"}"#,
        );
        for i in 0..8 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        let v = VoxelVolume::from_bytes(&bytes, Path::new("t")).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v.get(1, 1, 1), 7.0);
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let mut bytes = header_bytes(
            r#"{"dims":[2,2,2],"spacing":[1.0,1.0,1.0],"kind":"intensity","dtype":"float32"}"#,
        );
        for i in 0..7 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        let err = VoxelVolume::from_bytes(&bytes, Path::new("t")).unwrap_err();
        assert!(matches!(
            err,
            Error::SizeMismatch {
                expected: 32,
                found: 28
            }
        ));
    }

    #[test]
    fn mask_with_two_is_rejected() {
        let mut bytes = header_bytes(
            r#"{"dims":[1,1,3],"spacing":[1.0,1.0,1.0],"kind":"mask","dtype":"uint8"}"#,
        );
        bytes.extend_from_slice(&[0, 1, 2]);
        let err = VoxelVolume::from_bytes(&bytes, Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::InvalidMask { index: 2, .. }));
    }

    #[test]
    fn non_positive_spacing_is_rejected() {
        let mut bytes = header_bytes(
            r#"{"dims":[1,1,1],"spacing":[1.0,0.0,1.0],"kind":"mask","dtype":"uint8"}"#,
        );
        bytes.push(0);
        assert!(matches!(
            VoxelVolume::from_bytes(&bytes, Path::new("t")),
            Err(Error::NonPositiveSpacing(_))
        ));
    }

    #[test]
    fn kind_dtype_mismatch_is_rejected() {
        let mut bytes = header_bytes(
            r#"{"dims":[1,1,1],"spacing":[1.0,1.0,1.0],"kind":"mask","dtype":"float32"}"#,
        );
        bytes.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(
            VoxelVolume::from_bytes(&bytes, Path::new("t")),
            Err(Error::Header { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_volume("/nonexistent/x.gmv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn canonical_header_text() {
        let v = VoxelVolume::empty_mask([1, 2, 3], [2.5, 1.0, 1.0]).unwrap();
        let bytes = v.to_bytes();
        let text = std::str::from_utf8(&bytes[..bytes.len() - 6]).unwrap();
        assert_eq!(
            text,
            "GMVOL1\n{\"dims\":[1,2,3],\"spacing\":[2.5,1.0,1.0],\"kind\":\"mask\",\"dtype\":\"uint8\"}\n"
        );
    }
}
