//! Random iterated function systems and chaos-game rendering of their
//! attractors into binary rasters.
//!
//! A system is a set of contractive affine maps with selection weights.
//! [`sample_ifs`] draws one from a seed; [`render_attractor`] plays the chaos
//! game and rasterises the visited points.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::MaskBuffer;
use crate::rng::{mix64, seeded, Rng};
use crate::scalar::Real;

/// Rejection-sampling budget of [`sample_ifs`].
pub const MAX_SAMPLING_ATTEMPTS: usize = 1000;

/// Attractors filling less than this fraction of the raster are flagged.
pub const DEGENERATE_OCCUPANCY: f64 = 0.005;

/// Length of the pilot run that fixes the raster's coordinate frame.
const PILOT_POINTS: usize = 32_768;
const PILOT_STREAM: u64 = 0x7069_6c6f_745f_6966;
/// Hull refinement stops after this many rounds or once a round would
/// exceed [`HULL_VERTEX_CAP`] candidate points.
const HULL_ROUNDS: usize = 24;
const HULL_VERTEX_CAP: usize = 8192;

/// `x -> linear * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap<T> {
    pub linear: [[T; 2]; 2],
    pub translation: [T; 2],
}

impl<T: Real> AffineMap<T> {
    pub fn new(linear: [[T; 2]; 2], translation: [T; 2]) -> Self {
        AffineMap { linear, translation }
    }

    /// Uniform scaling by `s` towards the point `target`.
    pub fn scale_towards(s: T, target: [T; 2]) -> Self {
        let k = T::one() - s;
        AffineMap::new([[s, T::zero()], [T::zero(), s]], [k * target[0], k * target[1]])
    }

    #[inline]
    pub fn apply(&self, p: [T; 2]) -> [T; 2] {
        let [[a, b], [c, d]] = self.linear;
        [a * p[0] + b * p[1] + self.translation[0], c * p[0] + d * p[1] + self.translation[1]]
    }

    pub fn determinant(&self) -> T {
        let [[a, b], [c, d]] = self.linear;
        a * d - b * c
    }

    /// Singular values of the linear part, largest first.
    pub fn singular_values(&self) -> (T, T) {
        let [[a, b], [c, d]] = self.linear;
        let two = T::lit(2.0);
        // Closed form for 2x2: sigma = (sqrt((a+d)^2+(c-b)^2) ± sqrt((a-d)^2+(b+c)^2)) / 2
        let p = ((a + d).powi(2) + (c - b).powi(2)).sqrt();
        let q = ((a - d).powi(2) + (b + c).powi(2)).sqrt();
        ((p + q) / two, ((p - q) / two).abs())
    }

    pub fn is_contractive(&self) -> bool {
        self.singular_values().0 < T::one()
    }
}

/// Contractive maps plus selection weights; `seed` drives the chaos game.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsSystem<T> {
    maps: Vec<AffineMap<T>>,
    weights: Vec<T>,
    seed: u64,
}

impl<T: Real> IfsSystem<T> {
    pub fn new(maps: Vec<AffineMap<T>>, weights: Vec<T>, seed: u64) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidArgument(format!("an IFS needs at least 2 maps, got {}", maps.len())));
        }
        if weights.len() != maps.len() {
            return Err(Error::DimensionMismatch(format!("{} maps but {} weights", maps.len(), weights.len())));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidArgument("IFS weights must be positive".into()));
        }
        let total: T = weights.iter().copied().sum();
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidArgument(format!("IFS weights sum to {total}, not 1")));
        }
        if let Some(i) = maps.iter().position(|m| !m.is_contractive()) {
            return Err(Error::InvalidArgument(format!("map {i} is not a contraction")));
        }
        Ok(IfsSystem { maps, weights, seed })
    }

    /// Uniform weights over the given maps.
    pub fn uniform(maps: Vec<AffineMap<T>>, seed: u64) -> Result<Self> {
        let n = T::from_usize(maps.len()).expect("map count fits");
        let weights = vec![T::one() / n; maps.len()];
        Self::new(maps, weights, seed)
    }

    pub fn maps(&self) -> &[AffineMap<T>] {
        &self.maps
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Radius of an origin-centred disc that every chaos-game point started
    /// at the origin stays inside: `max|t_i| / (1 - max sigma_i)`.
    pub fn attractor_radius(&self) -> T {
        let sigma = self.maps.iter().map(|m| m.singular_values().0).fold(T::zero(), T::max);
        let reach = self
            .maps
            .iter()
            .map(|m| m.translation[0].hypot(m.translation[1]))
            .fold(T::zero(), T::max);
        reach / (T::one() - sigma)
    }
}

/// The Sierpinski triangle on the unit square: three half-scale maps towards
/// `(0,0)`, `(1,0)` and `(0.5,1)`.
pub fn sierpinski_triangle<T: Real>(seed: u64) -> IfsSystem<T> {
    let half = T::lit(0.5);
    let maps = [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]
        .into_iter()
        .map(|[x, y]| AffineMap::scale_towards(half, [T::lit(x), T::lit(y)]))
        .collect();
    IfsSystem::uniform(maps, seed).expect("valid system")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfsSamplingConfig {
    /// Inclusive range for the number of maps; must lie within [2, 8].
    pub map_count_range: (usize, usize),
    /// Both singular values of each linear part are drawn from this range.
    pub singular_value_range: (f64, f64),
    /// Each translation coordinate is drawn from this range.
    pub translation_range: (f64, f64),
    /// Added to `|det|` before normalising selection weights.
    pub weight_floor: f64,
}

impl Default for IfsSamplingConfig {
    fn default() -> Self {
        IfsSamplingConfig {
            map_count_range: (2, 4),
            singular_value_range: (0.1, 0.85),
            translation_range: (-1.0, 1.0),
            weight_floor: 0.01,
        }
    }
}

impl IfsSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.map_count_range;
        if lo < 2 || hi > 8 || lo > hi {
            return Err(Error::Config(format!("map_count_range {lo}..={hi} must lie within 2..=8")));
        }
        let (slo, shi) = self.singular_value_range;
        if !(slo.is_finite() && shi.is_finite() && 0.0 <= slo && slo <= shi) {
            return Err(Error::Config(format!("singular_value_range ({slo}, {shi}) invalid")));
        }
        let (tlo, thi) = self.translation_range;
        if !(tlo.is_finite() && thi.is_finite() && tlo <= thi) {
            return Err(Error::Config(format!("translation_range ({tlo}, {thi}) invalid")));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor.is_finite()) {
            return Err(Error::Config(format!("weight_floor {} invalid", self.weight_floor)));
        }
        Ok(())
    }
}

fn rotation(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Draws a random system. Each linear part is `R(a) · diag(s1, ±s2) · R(b)`
/// with singular values from the configured range; a draw containing a
/// zero or non-contractive map is rejected and the whole set redrawn.
pub fn sample_ifs<T: Real>(seed: u64, config: &IfsSamplingConfig) -> Result<IfsSystem<T>> {
    config.validate()?;
    let mut rng = seeded(seed);
    let (slo, shi) = config.singular_value_range;
    let (tlo, thi) = config.translation_range;
    'attempt: for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let n = rng.random_range(config.map_count_range.0..=config.map_count_range.1);
        let mut maps = Vec::with_capacity(n);
        for _ in 0..n {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let b = rng.random_range(0.0..std::f64::consts::TAU);
            let s1 = rng.random_range(slo..=shi);
            let s2 = rng.random_range(slo..=shi);
            let sign = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
            let l = matmul(matmul(rotation(a), [[s1, 0.0], [0.0, sign * s2]]), rotation(b));
            let t = [rng.random_range(tlo..=thi), rng.random_range(tlo..=thi)];
            let map = AffineMap::new(
                [[T::lit(l[0][0]), T::lit(l[0][1])], [T::lit(l[1][0]), T::lit(l[1][1])]],
                [T::lit(t[0]), T::lit(t[1])],
            );
            let (smax, _) = map.singular_values();
            if !(smax > T::zero() && smax < T::one()) {
                continue 'attempt;
            }
            maps.push(map);
        }
        let floor = T::lit(config.weight_floor);
        let raw: Vec<T> = maps.iter().map(|m| m.determinant().abs() + floor).collect();
        let total: T = raw.iter().copied().sum();
        if !(total > T::zero()) {
            continue;
        }
        let mut weights: Vec<T> = raw.iter().map(|&w| w / total).collect();
        // Fold the rounding residue into the last weight.
        let head: T = weights[..n - 1].iter().copied().sum();
        weights[n - 1] = T::one() - head;
        if let Ok(system) = IfsSystem::new(maps, weights, seed) {
            return Ok(system);
        }
    }
    Err(Error::DegenerateConfig(format!(
        "no contractive non-zero map set drawn in {MAX_SAMPLING_ATTEMPTS} attempts from {config:?}"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub point_budget: usize,
    pub burn_in: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { point_budget: 100_000, burn_in: 20 }
    }
}

/// Binary attractor raster.
#[derive(Debug, Clone, PartialEq)]
pub struct FractalMask {
    pub pixels: MaskBuffer,
    /// Set-pixel fraction of the raster.
    pub occupancy: f64,
    /// True when the points collapsed to one location or the occupancy is
    /// below [`DEGENERATE_OCCUPANCY`].
    pub degenerate: bool,
}

struct ChaosGame<'a, T> {
    system: &'a IfsSystem<T>,
    cumulative: Vec<f64>,
    rng: Rng,
    point: [T; 2],
}

impl<'a, T: Real> ChaosGame<'a, T> {
    fn new(system: &'a IfsSystem<T>, stream_seed: u64, burn_in: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = system
            .weights
            .iter()
            .map(|w| {
                acc += w.to_f64_lossy();
                acc
            })
            .collect();
        let mut game = ChaosGame { system, cumulative, rng: seeded(stream_seed), point: [T::zero(); 2] };
        for _ in 0..burn_in {
            game.step();
        }
        game
    }

    #[inline]
    fn step(&mut self) -> [T; 2] {
        let u: f64 = self.rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1);
        self.point = self.system.maps[idx].apply(self.point);
        self.point
    }
}

/// Chaos-game points of the main rendering stream, after `burn_in`
/// discarded iterations, starting from the origin.
pub fn chaos_points<T: Real>(system: &IfsSystem<T>, count: usize, burn_in: usize) -> Vec<[T; 2]> {
    let mut game = ChaosGame::new(system, system.seed, burn_in);
    (0..count).map(|_| game.step()).collect()
}

/// Axis-aligned box `[min, max]` in attractor coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

/// Bounding box that defines the raster frame. It depends only on the
/// system, never on the point budget.
///
/// The convex hull of a pilot run is pushed through the maps repeatedly,
/// `H <- hull(f_1(H) U ... U f_m(H))`. Images of attractor points stay on
/// the attractor, and each round shrinks the distance to the attractor's
/// true hull by the contraction factor, so extreme corners the chaos game
/// rarely visits are recovered.
pub fn frame_bounds<T: Real>(system: &IfsSystem<T>, burn_in: usize) -> Bounds<T> {
    let mut game = ChaosGame::new(system, mix64(system.seed ^ PILOT_STREAM), burn_in);
    let pilot: Vec<[f64; 2]> =
        (0..PILOT_POINTS).map(|_| game.step()).map(|p| [p[0].to_f64_lossy(), p[1].to_f64_lossy()]).collect();
    let mut hull = convex_hull(pilot);
    let maps: Vec<AffineMap<f64>> = system
        .maps
        .iter()
        .map(|m| AffineMap {
            linear: m.linear.map(|row| row.map(|v| v.to_f64_lossy())),
            translation: m.translation.map(|v| v.to_f64_lossy()),
        })
        .collect();
    for _ in 0..HULL_ROUNDS {
        if hull.len() * maps.len() > HULL_VERTEX_CAP {
            break;
        }
        hull = convex_hull(maps.iter().flat_map(|m| hull.iter().map(|&p| m.apply(p))).collect());
    }
    let mut b = Bounds { min: [T::infinity(); 2], max: [T::neg_infinity(); 2] };
    for p in &hull {
        for k in 0..2 {
            b.min[k] = b.min[k].min(T::lit(p[k]));
            b.max[k] = b.max[k].max(T::lit(p[k]));
        }
    }
    b
}

/// Convex hull vertices in counter-clockwise order (monotone chain).
/// Collinear points are dropped; fewer than three distinct points are
/// returned as they are.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Renders the attractor into a `width × height` binary raster.
///
/// The frame is the pilot bounding box stretched to the raster with a
/// 1-pixel margin; a pixel is set when at least one of `point_budget`
/// chaos-game points lands in it.
pub fn render_attractor<T: Real>(
    system: &IfsSystem<T>,
    width: usize,
    height: usize,
    point_budget: usize,
    burn_in: usize,
) -> Result<FractalMask> {
    if width < 8 || height < 8 {
        return Err(Error::InvalidArgument(format!("raster {width}x{height} smaller than 8x8")));
    }
    if point_budget < 1000 {
        return Err(Error::InvalidArgument(format!("point budget {point_budget} below 1000")));
    }
    if burn_in < 1 {
        return Err(Error::InvalidArgument("burn-in must be at least 1".into()));
    }

    let bounds = frame_bounds(system, burn_in);
    let axis = |k: usize, n: usize| -> AxisMap<T> {
        let extent = bounds.max[k] - bounds.min[k];
        let scale = T::one() + bounds.max[k].abs().max(bounds.min[k].abs());
        AxisMap {
            min: bounds.min[k],
            extent,
            collapsed: !(extent > T::lit(1e-12) * scale),
            span: T::from_usize(n - 3).expect("raster size fits"),
            last: n - 2,
        }
    };
    let ax = axis(0, width);
    let ay = axis(1, height);

    let mut pixels = MaskBuffer::zeros(width, height);
    let degenerate_point = ax.collapsed && ay.collapsed;
    if degenerate_point {
        pixels.set(width / 2, height / 2, true);
    } else {
        let mut game = ChaosGame::new(system, system.seed, burn_in);
        for _ in 0..point_budget {
            let p = game.step();
            let x = ax.pixel(p[0], width);
            let y = ay.pixel(p[1], height);
            pixels.set(x, y, true);
        }
    }
    let occupancy = pixels.occupancy();
    Ok(FractalMask { pixels, occupancy, degenerate: degenerate_point || occupancy < DEGENERATE_OCCUPANCY })
}

struct AxisMap<T> {
    min: T,
    extent: T,
    collapsed: bool,
    /// Pixel distance between the first and last interior pixel.
    span: T,
    last: usize,
}

impl<T: Real> AxisMap<T> {
    #[inline]
    fn pixel(&self, v: T, n: usize) -> usize {
        if self.collapsed {
            return n / 2;
        }
        let frac = ((v - self.min) / self.extent).max(T::zero()).min(T::one());
        let px = (T::one() + frac * self.span).round().to_usize().unwrap_or(1);
        px.clamp(1, self.last)
    }
}
