//! Radial-distance profile of a boundary and the two per-slice features
//! built on it: angular standard deviation and margin fluctuation.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

use super::contour::BoundaryContour;

/// Boundary pixels required by ASD and MF.
pub const MIN_BOUNDARY_POINTS: usize = 10;
pub const ANGULAR_BINS: usize = 10;
/// Smoothing window length as a fraction of the boundary length.
pub const SMOOTHING_FRACTION: f64 = 0.10;

/// Boundary distances to the centroid, normalized to mean one, in contour
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    /// Angle about the centroid in `[0, 2π)`, `atan2(dy, dx)`.
    pub angles: Vec<f64>,
    pub distances: Vec<f64>,
    /// Set when every boundary point coincides with the centroid; the
    /// distances are then all zero.
    pub degenerate: bool,
}

pub fn normalized_radial_distances(contour: &BoundaryContour) -> Result<RadialProfile> {
    if contour.is_empty() {
        return Err(Error::InsufficientBoundary {
            found: 0,
            required: 1,
        });
    }
    let [cy, cx] = contour.centroid;
    let mut angles = Vec::with_capacity(contour.len());
    let mut raw = Vec::with_capacity(contour.len());
    for &[y, x] in &contour.points {
        let (dy, dx) = (y - cy, x - cx);
        let mut a = dy.atan2(dx);
        if a < 0.0 {
            a += TAU;
        }
        if a >= TAU {
            a = 0.0;
        }
        angles.push(a);
        raw.push(dy.hypot(dx));
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    if mean == 0.0 {
        return Ok(RadialProfile {
            angles,
            distances: vec![0.0; raw.len()],
            degenerate: true,
        });
    }
    let distances = raw.into_iter().map(|d| d / mean).collect();
    Ok(RadialProfile {
        angles,
        distances,
        degenerate: false,
    })
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn require_boundary(contour: &BoundaryContour) -> Result<()> {
    if contour.len() < MIN_BOUNDARY_POINTS {
        return Err(Error::InsufficientBoundary {
            found: contour.len(),
            required: MIN_BOUNDARY_POINTS,
        });
    }
    Ok(())
}

/// Mean over the ten 36° angular bins of the per-bin population standard
/// deviation of normalized radial distances. Bin `k` covers
/// `[k·36°, (k+1)·36°)` from the positive x axis; empty bins are skipped.
pub fn angular_standard_deviation(contour: &BoundaryContour) -> Result<f64> {
    require_boundary(contour)?;
    let profile = normalized_radial_distances(contour)?;
    let width = TAU / ANGULAR_BINS as f64;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); ANGULAR_BINS];
    for (&a, &d) in profile.angles.iter().zip(&profile.distances) {
        let k = ((a / width).floor() as usize).min(ANGULAR_BINS - 1);
        bins[k].push(d);
    }
    let stds: Vec<f64> = bins
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| population_std(b))
        .collect();
    Ok(stds.iter().sum::<f64>() / stds.len() as f64)
}

/// Odd moving-average window for a boundary of `len` points:
/// `round(0.1·len)`, at least 1, bumped up to the next odd number.
pub fn smoothing_window(len: usize) -> usize {
    let w = ((SMOOTHING_FRACTION * len as f64).round() as usize).max(1);
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

/// Centered circular moving average of length `window` (odd).
pub fn circular_moving_average(signal: &[f64], window: usize) -> Vec<f64> {
    let n = signal.len();
    let half = (window / 2) as isize;
    let at = |i: isize| signal[i.rem_euclid(n as isize) as usize];
    let mut sum: f64 = (-half..=half).map(at).sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        out.push(sum / window as f64);
        sum += at(i + half + 1) - at(i - half);
    }
    out
}

/// Population standard deviation of the normalized radial signal minus its
/// circular moving average.
pub fn margin_fluctuation(contour: &BoundaryContour) -> Result<f64> {
    require_boundary(contour)?;
    let profile = normalized_radial_distances(contour)?;
    let w = smoothing_window(profile.distances.len());
    if w == 1 {
        return Ok(0.0);
    }
    let smooth = circular_moving_average(&profile.distances, w);
    let residual: Vec<f64> = profile
        .distances
        .iter()
        .zip(&smooth)
        .map(|(d, s)| d - s)
        .collect();
    Ok(population_std(&residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::contour::{trace_boundary, SliceMask};
    use proptest::prelude::*;

    fn polar_contour(n: usize, r: impl Fn(f64) -> f64) -> BoundaryContour {
        let points = (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                let rr = r(t);
                [rr * t.sin(), rr * t.cos()]
            })
            .collect();
        BoundaryContour::from_points(points, [0.0, 0.0])
    }

    #[test]
    fn circle_distances_are_one() {
        let c = polar_contour(360, |_| 5.0);
        let p = normalized_radial_distances(&c).unwrap();
        assert!(p.distances.iter().all(|d| (d - 1.0).abs() < 1e-12));
        assert!(angular_standard_deviation(&c).unwrap() < 1e-12);
        assert!(margin_fluctuation(&c).unwrap() < 1e-12);
    }

    #[test]
    fn single_point_profile_is_degenerate() {
        let c = BoundaryContour::from_points(vec![[0.0, 0.0]], [0.0, 0.0]);
        let p = normalized_radial_distances(&c).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.distances, vec![0.0]);
    }

    #[test]
    fn square_boundary_matches_geometry() {
        // Square of half-width k: corner distance k√2, edge midpoint k.
        // After normalization their ratio must stay √2.
        let k = 10i32;
        let mut pts = Vec::new();
        for t in -k..k {
            pts.push([-k as f64, t as f64]);
        }
        for t in -k..k {
            pts.push([t as f64, k as f64]);
        }
        for t in (-k + 1..=k).rev() {
            pts.push([k as f64, t as f64]);
        }
        for t in (-k + 1..=k).rev() {
            pts.push([t as f64, -k as f64]);
        }
        let c = BoundaryContour::from_points(pts.clone(), [0.0, 0.0]);
        let p = normalized_radial_distances(&c).unwrap();
        let raw: Vec<f64> = pts.iter().map(|[y, x]| (y * y + x * x).sqrt()).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        for (got, r) in p.distances.iter().zip(&raw) {
            assert!((got - r / mean).abs() < 1e-12);
        }
        let corner = p.distances[0];
        let mid = p.distances[k as usize];
        assert!((corner / mid - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn window_rounding() {
        assert_eq!(smoothing_window(10), 1);
        assert_eq!(smoothing_window(14), 1);
        assert_eq!(smoothing_window(15), 3);
        assert_eq!(smoothing_window(20), 3);
        assert_eq!(smoothing_window(30), 3);
        assert_eq!(smoothing_window(50), 5);
        assert_eq!(smoothing_window(1000), 101);
    }

    #[test]
    fn moving_average_wraps() {
        let s = [3.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = circular_moving_average(&s, 3);
        assert_eq!(m, vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn short_boundary_rejected() {
        let c = polar_contour(9, |_| 1.0);
        assert!(matches!(
            angular_standard_deviation(&c),
            Err(Error::InsufficientBoundary {
                found: 9,
                required: 10
            })
        ));
        assert!(margin_fluctuation(&c).is_err());
    }

    #[test]
    fn window_of_one_gives_zero_mf() {
        let c = polar_contour(12, |t| 1.0 + 0.3 * (3.0 * t).sin());
        assert_eq!(smoothing_window(12), 1);
        assert_eq!(margin_fluctuation(&c).unwrap(), 0.0);
    }

    #[test]
    fn sinusoidal_margin_matches_attenuation_oracle() {
        // r = 1 + 0.1 sin(20θ), sampled at n points. A centered moving average
        // of odd length w scales a sinusoid of angular frequency ω per sample
        // by sin(wω/2) / (w sin(ω/2)); the residual is (1 - gain) times the
        // original oscillation, whose population std is amplitude/√2.
        let n = 1000;
        let c = polar_contour(n, |t| 1.0 + 0.1 * (20.0 * t).sin());
        let w = smoothing_window(n) as f64;
        let omega = TAU * 20.0 / n as f64;
        let gain = (w * omega / 2.0).sin() / (w * (omega / 2.0).sin());
        let expected = (1.0 - gain).abs() * 0.1 / 2f64.sqrt();
        let mf = margin_fluctuation(&c).unwrap();
        assert!(
            (mf - expected).abs() <= 0.1 * expected,
            "mf {mf} vs {expected}"
        );
    }

    #[test]
    fn disk_trace_matches_border_oracle() {
        let r = 20.0;
        let n = 61;
        let m = SliceMask::from_fn(n, n, |y, x| {
            let (dy, dx) = (y as f64 - 30.0, x as f64 - 30.0);
            dy * dy + dx * dx <= r * r
        });
        let c = trace_boundary(&m).unwrap();
        let mut traced: Vec<(usize, usize)> = c
            .points
            .iter()
            .map(|p| (p[0] as usize + c.origin[0], p[1] as usize + c.origin[1]))
            .collect();
        traced.sort();
        traced.dedup();
        // Oracle: region pixels with a background 4-neighbour.
        let mut border = Vec::new();
        for y in 0..n {
            for x in 0..n {
                if !m.get(y, x) {
                    continue;
                }
                let nb = [
                    (y.wrapping_sub(1), x),
                    (y + 1, x),
                    (y, x.wrapping_sub(1)),
                    (y, x + 1),
                ];
                if nb.iter().any(|&(a, b)| a >= n || b >= n || !m.get(a, b)) {
                    border.push((y, x));
                }
            }
        }
        border.sort();
        assert_eq!(traced, border);
        assert_eq!(c.len(), border.len());
    }

    proptest! {
        #[test]
        fn normalized_mean_is_one(rs in proptest::collection::vec(0.1f64..10.0, 3..200)) {
            let n = rs.len();
            let c = polar_contour(n, |t| rs[((t / TAU) * n as f64).round() as usize % n]);
            let p = normalized_radial_distances(&c).unwrap();
            let mean = p.distances.iter().sum::<f64>() / n as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
        }

        #[test]
        fn asd_and_mf_are_scale_invariant(rs in proptest::collection::vec(0.5f64..2.0, 20..300), e in -8i32..8) {
            // Power-of-two factors scale exactly, so bin membership cannot flip.
            let k = 2f64.powi(e);
            let n = rs.len();
            let base = polar_contour(n, |t| rs[((t / TAU) * n as f64).round() as usize % n]);
            let scaled = BoundaryContour::from_points(
                base.points.iter().map(|[y, x]| [y * k, x * k]).collect(),
                [0.0, 0.0],
            );
            let (a0, a1) = (angular_standard_deviation(&base).unwrap(), angular_standard_deviation(&scaled).unwrap());
            let (m0, m1) = (margin_fluctuation(&base).unwrap(), margin_fluctuation(&scaled).unwrap());
            prop_assert!((a0 - a1).abs() <= 1e-12);
            prop_assert!((m0 - m1).abs() <= 1e-12);
        }
    }
}
