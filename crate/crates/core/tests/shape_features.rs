use std::f64::consts::PI;

use lggshape::phantoms::{ball, ellipsoid_mask, polar_prism, spiked_radius};
use lggshape::seed;
use lggshape::shape::{
    asd_of_slice, bounding_ellipsoid_volume_ratio, extract_features, mask_bounding_ellipsoid,
    MveeOptions, SliceMask, SlicePolicy,
};
use lggshape::VoxelVolume;
use proptest::prelude::*;

fn box_mask(size: [usize; 3]) -> VoxelVolume {
    let dims = [size[0] + 4, size[1] + 4, size[2] + 4];
    VoxelVolume::mask_from_fn(dims, [1.0; 3], |z, y, x| {
        (2..2 + size[0]).contains(&z)
            && (2..2 + size[1]).contains(&y)
            && (2..2 + size[2]).contains(&x)
    })
    .unwrap()
}

/// Volume of `{p : mahalanobis(p) ≤ 1}` by uniform sampling of its axis
/// bounding box, independent of the determinant formula.
fn monte_carlo_volume(mask: &VoxelVolume, samples: usize) -> (f64, f64) {
    let fit = mask_bounding_ellipsoid(mask, &MveeOptions::default()).unwrap();
    let e = &fit.ellipsoid;
    let inv = e.shape_matrix().try_inverse().unwrap();
    let half: Vec<f64> = (0..3).map(|i| inv[(i, i)].sqrt() * 1.001).collect();
    let mut rng = seed::stream(17, &[b"mc-volume"]);
    let mut hits = 0usize;
    for _ in 0..samples {
        let p: Vec<f64> = (0..3)
            .map(|i| e.center[i] + half[i] * (2.0 * seed::unit_f64(&mut rng) - 1.0))
            .collect();
        if e.mahalanobis([p[0], p[1], p[2]]) <= 1.0 {
            hits += 1;
        }
    }
    let boxv = 8.0 * half.iter().product::<f64>();
    (boxv * hits as f64 / samples as f64, e.volume)
}

#[test]
fn box_ratio_matches_closed_form() {
    for size in [[4usize, 16, 16], [10, 10, 10], [3, 20, 30], [5, 7, 9]] {
        let [a, b, c] = size.map(|v| v as f64);
        let expected = a * b * c / ((a - 1.0) * (b - 1.0) * (c - 1.0)) * 2.0 / (3f64.sqrt() * PI);
        let mask = box_mask(size);
        let got = bounding_ellipsoid_volume_ratio(&mask).unwrap();
        assert!(
            (got - expected.min(1.0)).abs() < 1e-5,
            "{size:?}: {got} vs {expected}"
        );
    }
}

#[test]
fn fitted_volume_agrees_with_sampling() {
    for mask in [
        box_mask([4, 16, 16]),
        box_mask([6, 6, 6]),
        ellipsoid_mask([24, 32, 32], [11.5, 15.5, 15.5], [9.0, 14.0, 6.0]),
    ] {
        let (mc, fitted) = monte_carlo_volume(&mask, 400_000);
        assert!((mc - fitted).abs() / fitted < 0.02, "{mc} vs {fitted}");
    }
}

#[test]
fn flat_plate_scores_below_cube() {
    let plate = bounding_ellipsoid_volume_ratio(&box_mask([2, 30, 30])).unwrap();
    let cube = bounding_ellipsoid_volume_ratio(&box_mask([12, 12, 12])).unwrap();
    assert!(plate < 1.0 && cube < 1.0);
    assert!(plate > 0.0);
}

#[test]
fn rasterized_ellipsoids_fill_their_mvee() {
    for semi in [[10.0, 10.0, 10.0], [6.0, 12.0, 9.0], [14.0, 7.0, 7.0]] {
        let mask = ellipsoid_mask([32, 32, 32], [15.5; 3], semi);
        let r = bounding_ellipsoid_volume_ratio(&mask).unwrap();
        assert!(r >= 0.95 && r <= 1.0, "{semi:?}: {r}");
    }
}

#[test]
fn star_is_rougher_than_disk_of_equal_area() {
    let n = 96;
    let star = SliceMask::from_fn(n, n, |y, x| {
        let (dy, dx) = (y as f64 - 47.5, x as f64 - 47.5);
        dy.hypot(dx) <= 22.0 * (1.0 + 0.45 * (10.0 * dy.atan2(dx)).cos())
    });
    let r = (star.count() as f64 / PI).sqrt();
    let disk = SliceMask::from_fn(n, n, |y, x| (y as f64 - 47.5).hypot(x as f64 - 47.5) <= r);
    let ratio = disk.count() as f64 / star.count() as f64;
    assert!((ratio - 1.0).abs() < 0.03, "areas differ: {ratio}");
    assert!(asd_of_slice(&star).unwrap() > asd_of_slice(&disk).unwrap());
}

#[test]
fn spikes_raise_margin_fluctuation() {
    let dims = [8, 64, 64];
    let plain = polar_prism(dims, (2, 6), (31.5, 31.5), |_| 14.0);
    let spiked = polar_prism(dims, (2, 6), (31.5, 31.5), spiked_radius(14.0, 8, 8.0));
    let a = extract_features("plain", &plain, SlicePolicy::MaxArea).unwrap();
    let b = extract_features("spiked", &spiked, SlicePolicy::MaxArea).unwrap();
    assert!(b.mf > a.mf);
    assert!(b.asd > a.asd);
}

#[test]
fn ball_features_are_near_ideal() {
    let f = extract_features("ball", &ball(48, 18.0), SlicePolicy::MaxArea).unwrap();
    assert!(f.asd < 0.05, "{}", f.asd);
    assert!(f.bevr > 0.95);
}

fn random_mask() -> impl Strategy<Value = VoxelVolume> {
    ((1usize..6, 1usize..8, 1usize..8), any::<u64>(), 0.1f64..0.9).prop_map(
        |((nz, ny, nx), s, density)| {
            let mut rng = seed::stream(s, &[b"mask"]);
            let mut data: Vec<f32> = (0..nz * ny * nx)
                .map(|_| {
                    if seed::unit_f64(&mut rng) < density {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            data[0] = 1.0;
            VoxelVolume::mask([nz, ny, nx], [1.0; 3], data).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bevr_lies_in_unit_interval(mask in random_mask()) {
        let r = bounding_ellipsoid_volume_ratio(&mask).unwrap();
        prop_assert!(r > 0.0 && r <= 1.0);
    }

    #[test]
    fn mvee_volume_scales_cubically(mask in random_mask(), k in 0.25f64..4.0) {
        let base = mask_bounding_ellipsoid(&mask, &MveeOptions::default()).unwrap();
        let scaled = VoxelVolume::mask(mask.dims(), [k; 3], mask.data().to_vec()).unwrap();
        let fit = mask_bounding_ellipsoid(&scaled, &MveeOptions::default()).unwrap();
        let expected = base.ellipsoid.volume * k.powi(3);
        prop_assert!((fit.ellipsoid.volume - expected).abs() <= 1e-6 * expected);
    }

    #[test]
    fn bevr_ignores_uniform_spacing(mask in random_mask(), k in 0.25f64..4.0) {
        let scaled = VoxelVolume::mask(mask.dims(), [k; 3], mask.data().to_vec()).unwrap();
        let a = bounding_ellipsoid_volume_ratio(&mask).unwrap();
        let b = bounding_ellipsoid_volume_ratio(&scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-6);
    }
}
