use lggshape::preprocess::{
    compute_dataset_stats, rescale_to_reference, window_level_normalize, zscore,
};
use lggshape::seed;
use lggshape::VoxelVolume;
use proptest::prelude::*;

fn random_case(s: u64, dims: [usize; 3]) -> (VoxelVolume, VoxelVolume) {
    let mut rng = seed::stream(s, &[b"case"]);
    let n = dims.iter().product();
    let offset = 500.0 * seed::unit_f64(&mut rng);
    let data: Vec<f32> = (0..n)
        .map(|_| (offset + 300.0 * seed::unit_f64(&mut rng)) as f32)
        .collect();
    let mut brain: Vec<f32> = (0..n)
        .map(|_| (seed::unit_f64(&mut rng) < 0.7) as u8 as f32)
        .collect();
    brain[0] = 1.0;
    (
        VoxelVolume::intensity(dims, [1.0; 3], data).unwrap(),
        VoxelVolume::mask(dims, [1.0; 3], brain).unwrap(),
    )
}

fn brain_values(cases: &[(VoxelVolume, VoxelVolume)]) -> Vec<f64> {
    cases
        .iter()
        .flat_map(|(v, b)| {
            v.data()
                .iter()
                .zip(b.data())
                .filter(|(_, &m)| m != 0.0)
                .map(|(&x, _)| x as f64)
        })
        .collect()
}

#[test]
fn dataset_stats_match_two_pass_oracle() {
    let cases: Vec<_> = (0..10)
        .map(|i| random_case(i, [3 + i as usize % 3, 9, 7]))
        .collect();
    let vols: Vec<&VoxelVolume> = cases.iter().map(|c| &c.0).collect();
    let brains: Vec<Option<&VoxelVolume>> = cases.iter().map(|c| Some(&c.1)).collect();
    let stats = compute_dataset_stats(&vols, &brains).unwrap();

    let values = brain_values(&cases);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert_eq!(stats.count, values.len() as u64);
    assert!((stats.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
    assert!((stats.std - var.sqrt()).abs() <= 1e-9 * var.sqrt());
}

#[test]
fn zscored_brain_voxels_are_standardized() {
    let cases: Vec<_> = (0..4).map(|i| random_case(100 + i, [4, 8, 8])).collect();
    let vols: Vec<&VoxelVolume> = cases.iter().map(|c| &c.0).collect();
    let brains: Vec<Option<&VoxelVolume>> = cases.iter().map(|c| Some(&c.1)).collect();
    let stats = compute_dataset_stats(&vols, &brains).unwrap();
    let z: Vec<_> = cases
        .iter()
        .map(|(v, b)| (zscore(v, &stats).unwrap(), b.clone()))
        .collect();
    let values = brain_values(&z);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 1e-5, "{mean}");
    assert!((std - 1.0).abs() < 1e-5, "{std}");
}

#[test]
fn window_ignores_other_cases_and_non_brain_voxels() {
    let (v, b) = random_case(7, [3, 10, 10]);
    let a = window_level_normalize(&v, Some(&b), 0.01, 0.99).unwrap();
    // Changing voxels outside the brain leaves the window of brain voxels alone.
    let altered: Vec<f32> = v
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &m)| if m == 0.0 { x * 10.0 + 1e4 } else { x })
        .collect();
    let c = window_level_normalize(&v.with_data(altered).unwrap(), Some(&b), 0.01, 0.99).unwrap();
    for ((x, y), m) in a.data().iter().zip(c.data()).zip(b.data()) {
        if *m != 0.0 {
            assert_eq!(x, y);
        }
    }
    assert!(a.data().iter().all(|x| (0.0..=1.0).contains(x)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rescale_keeps_extent_and_binary_masks(
        s in any::<u64>(),
        (ny, nx) in (1usize..20, 1usize..20),
        (ty, tx) in (1usize..30, 1usize..30),
    ) {
        let (v, b) = random_case(s, [2, ny, nx]);
        for vol in [&v, &b] {
            let r = rescale_to_reference(vol, (ty, tx)).unwrap();
            prop_assert_eq!(r.dims(), [2, ty, tx]);
            let (a, e) = (r.spacing(), vol.spacing());
            prop_assert!((a[1] * ty as f64 - e[1] * ny as f64).abs() < 1e-9);
            prop_assert!((a[2] * tx as f64 - e[2] * nx as f64).abs() < 1e-9);
            prop_assert_eq!(r.kind(), vol.kind());
        }
        let r = rescale_to_reference(&v, (ty, tx)).unwrap();
        let (lo, hi) = v.data().iter().fold((f32::MAX, f32::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        prop_assert!(r.data().iter().all(|&x| x >= lo - 1e-3 && x <= hi + 1e-3));
    }

    #[test]
    fn rescale_to_own_size_is_identity(s in any::<u64>(), (ny, nx) in (1usize..16, 1usize..16)) {
        let (v, b) = random_case(s, [2, ny, nx]);
        prop_assert_eq!(rescale_to_reference(&v, (ny, nx)).unwrap(), v);
        prop_assert_eq!(rescale_to_reference(&b, (ny, nx)).unwrap(), b);
    }
}
