//! Synthetic single-stroke digits.
//!
//! Each digit is a Catmull-Rom spline through hand-placed control points,
//! timed with a minimum-jerk profile so the pen starts and stops at rest.
//! Samples differ by a small random similarity transform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NdpError, Result};

pub const NUM_CLASSES: usize = 10;
pub const RASTER: usize = 8;
/// Half-width of the square the raster covers.
pub const RASTER_EXTENT: f64 = 0.6;

const ROTATION_SD: f64 = 0.08;
const SCALE_SD: f64 = 0.06;
const SHIFT_SD: f64 = 0.05;
const DENSE_PER_SEGMENT: usize = 64;

/// Control points per digit, drawn in roughly `[-0.4, 0.4]^2`. Start and end
/// differ by at least 0.25 in both coordinates.
pub const DIGITS: [&[[f64; 2]]; NUM_CLASSES] = [
    &[
        [0.25, 0.40],
        [-0.15, 0.40],
        [-0.35, 0.05],
        [-0.20, -0.35],
        [0.15, -0.35],
        [0.30, -0.05],
        [0.0, 0.05],
    ],
    &[[-0.25, 0.20], [0.0, 0.40], [0.02, 0.0], [0.04, -0.40]],
    &[
        [-0.30, 0.25],
        [-0.05, 0.42],
        [0.25, 0.30],
        [0.15, 0.0],
        [-0.15, -0.25],
        [-0.30, -0.40],
        [0.30, -0.40],
    ],
    &[
        [-0.35, 0.30],
        [0.10, 0.42],
        [0.25, 0.20],
        [-0.05, 0.02],
        [0.25, -0.15],
        [0.10, -0.40],
        [-0.10, -0.42],
    ],
    &[[-0.05, 0.40], [-0.30, -0.05], [0.30, -0.05], [0.18, 0.15], [0.22, -0.40]],
    &[
        [0.30, 0.40],
        [-0.20, 0.40],
        [-0.25, 0.05],
        [0.15, 0.08],
        [0.30, -0.20],
        [0.10, -0.40],
        [-0.30, -0.35],
    ],
    &[
        [0.25, 0.40],
        [-0.15, 0.20],
        [-0.30, -0.20],
        [-0.05, -0.40],
        [0.25, -0.25],
        [0.15, 0.0],
        [-0.20, -0.10],
    ],
    &[[-0.35, 0.38], [0.30, 0.38], [0.05, 0.0], [-0.10, -0.40]],
    &[
        [0.25, 0.35],
        [-0.10, 0.42],
        [-0.25, 0.20],
        [0.20, -0.15],
        [0.10, -0.40],
        [-0.25, -0.30],
        [-0.15, -0.05],
        [-0.05, 0.02],
    ],
    &[
        [0.25, 0.25],
        [0.0, 0.42],
        [-0.25, 0.25],
        [-0.10, 0.05],
        [0.22, 0.15],
        [0.20, -0.15],
        [0.0, -0.42],
    ],
];

/// Parameters of the stroke generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrokeSpec {
    /// Points per target trajectory, excluding the start point.
    pub t_points: usize,
    /// Multiplies every jitter standard deviation; 0 disables jitter.
    pub noise: f64,
    pub include_raster: bool,
    /// Digits `0..classes` are generated.
    pub classes: usize,
}

impl Default for StrokeSpec {
    fn default() -> Self {
        Self {
            t_points: 300,
            noise: 1.0,
            include_raster: true,
            classes: NUM_CLASSES,
        }
    }
}

impl StrokeSpec {
    pub fn condition_dim(&self) -> usize {
        NUM_CLASSES + 2 + if self.include_raster { RASTER * RASTER } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub digit: usize,
    /// One-hot class, start point, then the optional flattened raster.
    pub condition: Vec<f64>,
    pub start: [f64; 2],
    /// `t_points` positions after the start.
    pub target: Vec<[f64; 2]>,
}

fn catmull_rom(p: [[f64; 2]; 4], t: f64) -> [f64; 2] {
    let t2 = t * t;
    let t3 = t2 * t;
    let mut out = [0.0; 2];
    for d in 0..2 {
        out[d] = 0.5
            * (2.0 * p[1][d]
                + (-p[0][d] + p[2][d]) * t
                + (2.0 * p[0][d] - 5.0 * p[1][d] + 4.0 * p[2][d] - p[3][d]) * t2
                + (-p[0][d] + 3.0 * p[1][d] - 3.0 * p[2][d] + p[3][d]) * t3);
    }
    out
}

/// Dense polyline through the control points.
pub fn spline(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len();
    let at = |i: isize| points[i.clamp(0, n as isize - 1) as usize];
    let mut out = Vec::with_capacity((n - 1) * DENSE_PER_SEGMENT + 1);
    for s in 0..n - 1 {
        let s = s as isize;
        let ctrl = [at(s - 1), at(s), at(s + 1), at(s + 2)];
        for j in 0..DENSE_PER_SEGMENT {
            out.push(catmull_rom(ctrl, j as f64 / DENSE_PER_SEGMENT as f64));
        }
    }
    out.push(points[n - 1]);
    out
}

pub fn arc_length(path: &[[f64; 2]]) -> f64 {
    path.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
}

fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

/// `t_points + 1` samples along `path` (start included) at minimum-jerk timing.
pub fn resample(path: &[[f64; 2]], t_points: usize) -> Vec<[f64; 2]> {
    let mut cumulative = Vec::with_capacity(path.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in path.windows(2) {
        total += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cumulative.push(total);
    }
    let mut seg = 0;
    (0..=t_points)
        .map(|j| {
            let s = min_jerk(j as f64 / t_points as f64) * total;
            while seg + 1 < cumulative.len() - 1 && cumulative[seg + 1] < s {
                seg += 1;
            }
            let span = cumulative[seg + 1] - cumulative[seg];
            let u = if span > 0.0 { ((s - cumulative[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
            let (a, b) = (path[seg], path[seg + 1]);
            [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
        })
        .collect()
}

/// Occupancy of the stroke on a coarse grid, scaled to a maximum of 1.
pub fn rasterize(points: &[[f64; 2]]) -> Vec<f64> {
    let mut grid = vec![0.0; RASTER * RASTER];
    let cell = 2.0 * RASTER_EXTENT / RASTER as f64;
    for p in points {
        let col = ((p[0] + RASTER_EXTENT) / cell).floor();
        let row = ((RASTER_EXTENT - p[1]) / cell).floor();
        if (0.0..RASTER as f64).contains(&col) && (0.0..RASTER as f64).contains(&row) {
            grid[row as usize * RASTER + col as usize] += 1.0;
        }
    }
    let max = grid.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        grid.iter_mut().for_each(|g| *g /= max);
    }
    grid
}

/// The jitter-free stroke of a digit, start point included.
pub fn canonical_stroke(digit: usize, t_points: usize) -> Vec<[f64; 2]> {
    resample(&spline(DIGITS[digit]), t_points)
}

fn demonstration(digit: usize, spec: &StrokeSpec, rng: &mut ChaCha8Rng) -> Demonstration {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |sd: f64| unit.sample(rng) * sd * spec.noise;
    let theta = draw(ROTATION_SD);
    let scale = 1.0 + draw(SCALE_SD);
    let shift = [draw(SHIFT_SD), draw(SHIFT_SD)];
    let (sin, cos) = theta.sin_cos();
    let points: Vec<[f64; 2]> = canonical_stroke(digit, spec.t_points)
        .into_iter()
        .map(|[x, y]| [scale * (cos * x - sin * y) + shift[0], scale * (sin * x + cos * y) + shift[1]])
        .collect();
    let start = points[0];
    let mut condition = vec![0.0; NUM_CLASSES];
    condition[digit] = 1.0;
    condition.extend_from_slice(&start);
    if spec.include_raster {
        condition.extend(rasterize(&points));
    }
    Demonstration {
        digit,
        condition,
        start,
        target: points[1..].to_vec(),
    }
}

/// `num_per_class` jittered samples of every digit, class-major.
pub fn generate_digit_dataset(num_per_class: usize, spec: &StrokeSpec, seed: u64) -> Result<Vec<Demonstration>> {
    if spec.t_points < 2 {
        return Err(NdpError::Config(format!("stroke needs at least 2 points, got {}", spec.t_points)));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(NdpError::Config(format!("noise scale must be finite and non-negative, got {}", spec.noise)));
    }
    if spec.classes == 0 || spec.classes > NUM_CLASSES {
        return Err(NdpError::Config(format!("classes must be in 1..={NUM_CLASSES}, got {}", spec.classes)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.classes)
        .flat_map(|d| std::iter::repeat_n(d, num_per_class))
        .map(|d| demonstration(d, spec, &mut rng))
        .collect())
}

/// Seeded split keeping `train_fraction` of every class for training.
pub fn split(data: &[Demonstration], train_fraction: f64, seed: u64) -> (Vec<Demonstration>, Vec<Demonstration>) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for digit in 0..NUM_CLASSES {
        let mut class: Vec<&Demonstration> = data.iter().filter(|d| d.digit == digit).collect();
        class.shuffle(&mut rng);
        let cut = (class.len() as f64 * train_fraction).round() as usize;
        train.extend(class[..cut].iter().map(|d| (*d).clone()));
        test.extend(class[cut..].iter().map(|d| (*d).clone()));
    }
    (train, test)
}
