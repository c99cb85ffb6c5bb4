//! Synthetic phantom datasets for tests and demos.
//!
//! `generate_phantoms` writes five cases with known shapes, noisy
//! intensities, brain masks, imperfect "predicted" tumor masks, clean
//! ground truth under `truth/`, random genomic labels and a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::fsutil::{create_dir_all, write_atomic};
use crate::manifest::{read_manifest, CaseManifest, CaseRecord, Sequence};
use crate::radiogenomics::Scheme;
use crate::seed;
use crate::volume::{write_volume, VoxelVolume};

pub const PHANTOM_DIMS: [usize; 3] = [40, 64, 64];
pub const PHANTOM_SPACING: [f64; 3] = [1.0, 1.0, 1.0];

/// Solid ball of radius `r` voxels centered in a cube of side `n`.
pub fn ball(n: usize, r: f64) -> VoxelVolume {
    let c = (n as f64 - 1.0) / 2.0;
    ellipsoid_mask([n; 3], [c; 3], [r; 3])
}

/// Axis-aligned solid ellipsoid, `center` and `semi` in (z, y, x) voxels.
pub fn ellipsoid_mask(dims: [usize; 3], center: [f64; 3], semi: [f64; 3]) -> VoxelVolume {
    VoxelVolume::mask_from_fn(dims, PHANTOM_SPACING, |z, y, x| {
        let p = [z as f64, y as f64, x as f64];
        (0..3)
            .map(|i| ((p[i] - center[i]) / semi[i]).powi(2))
            .sum::<f64>()
            <= 1.0
    })
    .expect("valid phantom geometry")
}

/// In-plane shape `r(θ)` extruded over slices `z0..z1`, centered at
/// `(cy, cx)`.
pub fn polar_prism(
    dims: [usize; 3],
    z: (usize, usize),
    center: (f64, f64),
    r: impl Fn(f64) -> f64,
) -> VoxelVolume {
    VoxelVolume::mask_from_fn(dims, PHANTOM_SPACING, |zz, y, x| {
        if zz < z.0 || zz >= z.1 {
            return false;
        }
        let (dy, dx) = (y as f64 - center.0, x as f64 - center.1);
        dy.hypot(dx) <= r(dy.atan2(dx))
    })
    .expect("valid phantom geometry")
}

/// Disk of radius `r0` with `spikes` narrow radial spikes of length `len`.
pub fn spiked_radius(r0: f64, spikes: u32, len: f64) -> impl Fn(f64) -> f64 {
    move |t| r0 + len * (spikes as f64 * t).cos().max(0.0).powi(2)
}

fn union(a: &VoxelVolume, b: &VoxelVolume) -> VoxelVolume {
    a.with_data(
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x.max(*y))
            .collect(),
    )
    .expect("same geometry")
}

fn shifted_x(a: &VoxelVolume, dx: usize) -> VoxelVolume {
    VoxelVolume::mask_from_fn(a.dims(), a.spacing(), |z, y, x| {
        x >= dx && a.get(z, y, x - dx) != 0.0
    })
    .expect("same geometry")
}

struct Phantom {
    id: &'static str,
    truth: VoxelVolume,
    pred: VoxelVolume,
    sequences: &'static [Sequence],
    missing_scheme: Option<Scheme>,
}

fn phantom_shapes(seed: u64) -> Vec<Phantom> {
    let d = PHANTOM_DIMS;
    let mid = [19.5, 31.5, 31.5];
    let all: &[Sequence] = &Sequence::ALL;
    let stray = |id: &str| {
        let mut rng = seed::stream(seed, &[b"phantom-stray", id.as_bytes()]);
        let pick = |rng: &mut _, n: usize| 1 + (seed::unit_f64(rng) * n as f64) as usize;
        let (z, y, x) = (pick(&mut rng, 3), pick(&mut rng, 5), pick(&mut rng, 5));
        VoxelVolume::mask_from_fn(d, PHANTOM_SPACING, |a, b, c| (a, b, c) == (z, y, x))
            .expect("valid")
    };
    let with_stray = |id: &'static str, truth: VoxelVolume, sequences, missing_scheme| Phantom {
        id,
        pred: union(&truth, &stray(id)),
        truth,
        sequences,
        missing_scheme,
    };

    let ellipsoid = ellipsoid_mask(d, mid, [8.0, 18.0, 11.0]);
    let main = ellipsoid_mask(d, [19.5, 30.0, 24.0], [8.0, 12.0, 13.0]);
    let satellite = ellipsoid_mask(d, [19.5, 30.0, 50.0], [4.0, 4.0, 4.0]);
    vec![
        with_stray("ph_ball", ellipsoid_mask(d, mid, [10.0; 3]), all, None),
        Phantom {
            id: "ph_ellipsoid",
            pred: shifted_x(&ellipsoid, 1),
            truth: ellipsoid,
            sequences: all,
            missing_scheme: None,
        },
        Phantom {
            id: "ph_multi",
            pred: union(&union(&main, &satellite), &stray("ph_multi")),
            truth: main,
            sequences: all,
            missing_scheme: None,
        },
        with_stray(
            "ph_spiked",
            polar_prism(d, (12, 28), (31.5, 31.5), spiked_radius(10.0, 8, 7.0)),
            &[Sequence::Flair],
            Some(Scheme::Idh1p19q),
        ),
        with_stray(
            "ph_star",
            polar_prism(d, (12, 28), (31.5, 31.5), |t| {
                12.0 * (1.0 + 0.3 * (5.0 * t).cos())
            }),
            &[Sequence::PreContrast, Sequence::Flair],
            None,
        ),
    ]
}

fn brain_mask() -> VoxelVolume {
    let d = PHANTOM_DIMS;
    VoxelVolume::mask_from_fn(d, PHANTOM_SPACING, |z, y, x| {
        let (dz, dy, dx) = (
            (z as f64 - 19.5) / 18.0,
            (y as f64 - 31.5) / 30.0,
            (x as f64 - 31.5) / 30.0,
        );
        (2..38).contains(&z) && dz * dz + dy * dy + dx * dx <= 1.0
    })
    .expect("valid")
}

fn intensity(
    seed: u64,
    id: &str,
    seq: Sequence,
    brain: &VoxelVolume,
    tumor: &VoxelVolume,
) -> VoxelVolume {
    let (tissue, lesion) = match seq {
        Sequence::PreContrast => (80.0, 95.0),
        Sequence::Flair => (100.0, 180.0),
        Sequence::PostContrast => (90.0, 140.0),
    };
    let mut rng = seed::stream(
        seed,
        &[b"phantom-intensity", id.as_bytes(), seq.as_str().as_bytes()],
    );
    let data = brain
        .data()
        .iter()
        .zip(tumor.data())
        .map(|(&b, &t)| {
            let noise = 20.0 * seed::unit_f64(&mut rng) - 10.0;
            if t != 0.0 {
                (lesion + noise) as f32
            } else if b != 0.0 {
                (tissue + noise) as f32
            } else {
                0.0
            }
        })
        .collect();
    VoxelVolume::intensity(brain.dims(), brain.spacing(), data).expect("valid")
}

fn labels_for(seed: u64, id: &str, missing: Option<Scheme>) -> BTreeMap<String, String> {
    let mut rng = seed::stream(seed, &[b"phantom-labels", id.as_bytes()]);
    let mut out = BTreeMap::new();
    for s in Scheme::ALL {
        let vocab = s.labels();
        let k = ((seed::unit_f64(&mut rng) * vocab.len() as f64) as usize).min(vocab.len() - 1);
        if Some(s) != missing {
            out.insert(s.name().to_string(), vocab[k].to_string());
        }
    }
    out
}

/// Paths of a generated dataset.
#[derive(Debug, Clone)]
pub struct PhantomSet {
    pub manifest_path: PathBuf,
    pub truth_dir: PathBuf,
    pub labels_path: PathBuf,
    pub manifest: CaseManifest,
}

pub fn generate_phantoms(out: &Path, seed: u64) -> Result<PhantomSet> {
    create_dir_all(out)?;
    let truth_dir = out.join("truth");
    create_dir_all(&truth_dir)?;
    let brain = brain_mask();
    let mut records = Vec::new();
    let mut all_labels = BTreeMap::new();
    for p in phantom_shapes(seed) {
        let dir = out.join(p.id);
        create_dir_all(&dir)?;
        let rel = |name: &str| PathBuf::from(p.id).join(name);
        let mut sequences = BTreeMap::new();
        for &s in p.sequences {
            let name = format!("{s}.gmv");
            write_volume(&intensity(seed, p.id, s, &brain, &p.truth), dir.join(&name))?;
            sequences.insert(s, rel(&name));
        }
        write_volume(&brain, dir.join("brain_mask.gmv"))?;
        write_volume(&p.pred, dir.join("tumor_mask.gmv"))?;
        write_volume(&p.truth, truth_dir.join(format!("{}.gmv", p.id)))?;
        let labels = labels_for(seed, p.id, p.missing_scheme);
        all_labels.insert(p.id.to_string(), labels.clone());
        records.push(CaseRecord {
            case_id: p.id.to_string(),
            sequences,
            brain_mask: Some(rel("brain_mask.gmv")),
            tumor_mask: Some(rel("tumor_mask.gmv")),
            genomic_labels: labels,
        });
    }
    let manifest_path = out.join("manifest.json");
    let mut text = CaseManifest::new(records).to_json();
    text.push('\n');
    write_atomic(&manifest_path, text.as_bytes())?;
    let labels_path = out.join("labels.json");
    let mut text = serde_json::to_string_pretty(&all_labels)?;
    text.push('\n');
    write_atomic(&labels_path, text.as_bytes())?;
    Ok(PhantomSet {
        manifest: read_manifest(&manifest_path)?,
        manifest_path,
        truth_dir,
        labels_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::{keep_largest_component, label_components_6};
    use std::f64::consts::PI;

    #[test]
    fn phantom_set_shape() {
        let shapes = phantom_shapes(5);
        assert_eq!(shapes.len(), 5);
        let ball = &shapes[0];
        assert_eq!(label_components_6(&ball.truth).unwrap().count(), 1);
        let multi = shapes.iter().find(|p| p.id == "ph_multi").unwrap();
        assert!(label_components_6(&multi.pred).unwrap().count() >= 2);
        let cleaned = keep_largest_component(&multi.pred).unwrap();
        assert_eq!(label_components_6(&cleaned).unwrap().count(), 1);
        assert_eq!(cleaned, multi.truth);
        for p in &shapes {
            assert!(p.truth.foreground_count() > 100, "{}", p.id);
            assert_eq!(label_components_6(&p.truth).unwrap().count(), 1, "{}", p.id);
        }
    }

    #[test]
    fn spikes_enlarge_the_disk() {
        let r = spiked_radius(10.0, 8, 7.0);
        assert_eq!(r(0.0), 17.0);
        assert!((r(PI / 8.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn labels_use_scheme_vocabularies() {
        let l = labels_for(1, "x", Some(Scheme::Cnc));
        assert_eq!(l.len(), 5);
        for (k, v) in &l {
            let s: Scheme = k.parse().unwrap();
            s.check_label(v).unwrap();
        }
    }
}
