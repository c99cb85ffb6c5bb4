//! Minimum-volume enclosing ellipsoid by Khachiyan's first-order method.
//!
//! The solver works on the lifted points `q = (p, 1)` and weights `u` on the
//! simplex. Each step moves weight toward the point with the largest
//! `qᵀX(u)⁻¹q` (Khachiyan) or away from the support point with the smallest
//! one (Todd–Yıldırım away step), until both are within `tolerance` of
//! `d + 1`. Large inputs are solved on an active subset that grows with the
//! worst violators until the optimality condition holds for every point.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

const DIM: f64 = 3.0;
const ACTIVE_SET_THRESHOLD: usize = 64;
const VIOLATORS_PER_ROUND: usize = 32;

/// `{p : (p − c)ᵀ A (p − c) ≤ 1}` in millimeters, `(z, y, x)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub shape: [[f64; 3]; 3],
    pub volume: f64,
}

impl Ellipsoid {
    fn from_parts(center: Vector3<f64>, a: Matrix3<f64>) -> Self {
        let det = a.determinant();
        let mut shape = [[0.0; 3]; 3];
        for (i, row) in shape.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[(i, j)];
            }
        }
        Ellipsoid {
            center: [center[0], center[1], center[2]],
            shape,
            volume: 4.0 / 3.0 * PI / det.sqrt(),
        }
    }

    pub fn shape_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.shape[i][j])
    }

    /// `(p − c)ᵀ A (p − c)`; at most 1 inside the ellipsoid.
    pub fn mahalanobis(&self, p: [f64; 3]) -> f64 {
        let d = Vector3::new(
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        );
        (d.transpose() * self.shape_matrix() * d)[(0, 0)]
    }

    /// Semi-axis lengths, ascending.
    pub fn semi_axes(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.shape_matrix());
        let mut axes: Vec<f64> = eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
        axes.sort_by(f64::total_cmp);
        [axes[0], axes[1], axes[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MveeOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MveeOptions {
    fn default() -> Self {
        MveeOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MveeFit {
    pub ellipsoid: Ellipsoid,
    pub iterations: usize,
    pub converged: bool,
    /// Final `max_i qᵢᵀX⁻¹qᵢ / (d+1) − 1` over all points.
    pub gap: f64,
}

/// Rejects point sets whose spread is (numerically) confined to a plane or
/// a line.
fn check_full_rank(points: &[Vector3<f64>]) -> Result<()> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |a, p| {
        a + (p - mean) * (p - mean).transpose()
    });
    let eig = SymmetricEigen::new(scatter).eigenvalues;
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-12 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(())
}

struct Solver<'a> {
    lifted: &'a [Vector4<f64>],
    weights: Vec<f64>,
    iterations: usize,
}

impl Solver<'_> {
    fn moment(&self, active: &[usize]) -> Option<Matrix4<f64>> {
        let mut x = Matrix4::zeros();
        for &i in active {
            let q = &self.lifted[i];
            x += self.weights[i] * q * q.transpose();
        }
        x.try_inverse()
    }

    fn leverage(q: &Vector4<f64>, xinv: &Matrix4<f64>) -> f64 {
        (q.transpose() * xinv * q)[(0, 0)]
    }

    /// Runs Khachiyan / away steps on `active` until the duality gap on that
    /// subset is within tolerance. Returns whether it converged.
    fn solve_subset(&mut self, active: &[usize], opts: &MveeOptions) -> Result<bool> {
        let d1 = DIM + 1.0;
        while self.iterations < opts.max_iterations {
            let xinv = self.moment(active).ok_or(Error::DegenerateGeometry)?;
            let (mut jmax, mut mmax) = (active[0], f64::NEG_INFINITY);
            let (mut jmin, mut mmin) = (active[0], f64::INFINITY);
            for &i in active {
                let m = Self::leverage(&self.lifted[i], &xinv);
                if m > mmax {
                    mmax = m;
                    jmax = i;
                }
                if self.weights[i] > 0.0 && m < mmin {
                    mmin = m;
                    jmin = i;
                }
            }
            let up = mmax / d1 - 1.0;
            let down = 1.0 - mmin / d1;
            if up.max(down) <= opts.tolerance {
                return Ok(true);
            }
            self.iterations += 1;
            let (j, m) = if up >= down {
                (jmax, mmax)
            } else {
                (jmin, mmin)
            };
            let mut step = (m - d1) / (d1 * (m - 1.0));
            if step < 0.0 {
                // away step: never push a weight below zero
                let uj = self.weights[j];
                step = step.max(-uj / (1.0 - uj));
            }
            for &i in active {
                self.weights[i] *= 1.0 - step;
            }
            self.weights[j] += step;
            if self.weights[j] < 0.0 {
                self.weights[j] = 0.0;
            }
        }
        Ok(false)
    }
}

/// Minimum-volume ellipsoid enclosing `points` (`(z, y, x)`, mm).
///
/// The returned shape matrix is rescaled so that the farthest point lies
/// exactly on the boundary, hence every point satisfies
/// `(p − c)ᵀA(p − c) ≤ 1` up to rounding regardless of convergence.
pub fn min_bounding_ellipsoid(points: &[[f64; 3]], opts: &MveeOptions) -> Result<MveeFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateGeometry);
    }
    let n = points.len();
    // Work in coordinates centered on the mean for conditioning.
    let raw: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect();
    check_full_rank(&raw)?;
    let shift = raw.iter().fold(Vector3::zeros(), |a, p| a + p) / n as f64;
    let centered: Vec<Vector3<f64>> = raw.iter().map(|p| p - shift).collect();
    let lifted: Vec<Vector4<f64>> = centered
        .iter()
        .map(|p| Vector4::new(p[0], p[1], p[2], 1.0))
        .collect();

    let mut active: Vec<usize> = if n <= ACTIVE_SET_THRESHOLD {
        (0..n).collect()
    } else {
        initial_core_set(&centered)
    };
    let mut solver = Solver {
        lifted: &lifted,
        weights: vec![0.0; n],
        iterations: 0,
    };
    for &i in &active {
        solver.weights[i] = 1.0 / active.len() as f64;
    }

    let d1 = DIM + 1.0;
    let mut in_active = vec![false; n];
    for &i in &active {
        in_active[i] = true;
    }
    let (converged, gap) = loop {
        let sub_converged = solver.solve_subset(&active, opts)?;
        let xinv = solver.moment(&active).ok_or(Error::DegenerateGeometry)?;
        let mut violators: Vec<(f64, usize)> = (0..n)
            .filter(|&i| !in_active[i])
            .map(|i| (Solver::leverage(&lifted[i], &xinv), i))
            .filter(|&(m, _)| m / d1 - 1.0 > opts.tolerance)
            .collect();
        let gap = (0..n)
            .map(|i| Solver::leverage(&lifted[i], &xinv) / d1 - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        if violators.is_empty() || !sub_converged {
            break (sub_converged && violators.is_empty(), gap);
        }
        violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in violators.iter().take(VIOLATORS_PER_ROUND) {
            in_active[i] = true;
            active.push(i);
        }
    };

    let mut center = Vector3::zeros();
    for i in 0..n {
        center += solver.weights[i] * centered[i];
    }
    let mut spread = Matrix3::zeros();
    for i in 0..n {
        if solver.weights[i] > 0.0 {
            spread += solver.weights[i] * centered[i] * centered[i].transpose();
        }
    }
    spread -= center * center.transpose();
    let mut a = spread.try_inverse().ok_or(Error::DegenerateGeometry)? / DIM;
    a = (a + a.transpose()) * 0.5;
    let scale = centered
        .iter()
        .map(|p| {
            let d = p - center;
            (d.transpose() * a * d)[(0, 0)]
        })
        .fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateGeometry);
    }
    a /= scale;

    Ok(MveeFit {
        ellipsoid: Ellipsoid::from_parts(center + shift, a),
        iterations: solver.iterations,
        converged,
        gap,
    })
}

/// Extreme points along the coordinate axes and the 4 body diagonals, a
/// small set whose ellipsoid is a good first guess.
fn initial_core_set(points: &[Vector3<f64>]) -> Vec<usize> {
    let dirs = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(1.0, 1.0, 1.0),
        Vector3::new(1.0, 1.0, -1.0),
        Vector3::new(1.0, -1.0, 1.0),
        Vector3::new(-1.0, 1.0, 1.0),
    ];
    let mut set = Vec::new();
    for d in &dirs {
        let (mut lo, mut hi) = (0usize, 0usize);
        let (mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            let v = d.dot(p);
            if v < vlo {
                vlo = v;
                lo = i;
            }
            if v > vhi {
                vhi = v;
                hi = i;
            }
        }
        set.push(lo);
        set.push(hi);
    }
    set.sort_unstable();
    set.dedup();
    // The extremes can be coplanar for flat inputs; widen the subset until
    // it spans 3D.
    if check_full_rank(&set.iter().map(|&i| points[i]).collect::<Vec<_>>()).is_err() {
        let stride = (points.len() / 64).max(1);
        set.extend((0..points.len()).step_by(stride));
        set.sort_unstable();
        set.dedup();
        if check_full_rank(&set.iter().map(|&i| points[i]).collect::<Vec<_>>()).is_err() {
            set = (0..points.len()).collect();
        }
    }
    set
}
