//! Synthetic fiber collections with known parameter influence, plus the
//! analytic Gaussian testbed used to check the sensitivity estimator.
//!
//! Fibers are placed by random sequential adsorption (RSA): tubes are
//! proposed one at a time and accepted only if they stay inside the volume
//! and do not overlap an already accepted tube. Fiber length follows
//! `length_model(param1)` and diameter follows `diameter_model(param2)`.
//!
//! Every fiber slot `k` draws from its own ChaCha8 stream (`set_stream(k)`
//! on the configured seed): first its length jitter and bend shape, then
//! successive placement proposals. Slots therefore keep their shape and
//! proposal sequence across parameter values, so e.g. changing `param2`
//! never alters the length distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{orthonormal_frame, segment_segment_distance_sq, Aabb, Vec3};
use crate::model::{Fiber, FiberResult};

/// `a + b * tanh(c * (x + d))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanhModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TanhModel {
    /// Fiber length as a function of `param1`.
    pub const LENGTH: TanhModel = TanhModel {
        a: 215.0,
        b: 15.0,
        c: 5.0,
        d: -0.5,
    };

    /// Fiber diameter as a function of `param2`.
    pub const DIAMETER: TanhModel = TanhModel {
        a: 7.0,
        b: 0.5,
        c: 8.0,
        d: -0.3,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = TanhModel { a, b, c, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0.0 || self.c == 0.0 {
            return Err(Error::input("tanh model needs nonzero amplitude and steepness"));
        }
        if ![self.a, self.b, self.c, self.d].iter().all(|v| v.is_finite()) {
            return Err(Error::input("tanh model coefficients must be finite"));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a + self.b * (self.c * (x + self.d)).tanh()
    }
}

pub fn tanh_model(x: f64, m: &TanhModel) -> f64 {
    m.eval(x)
}

/// Normal density with mean `mu` and standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracle {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianOracle {
    pub const STANDARD: GaussianOracle = GaussianOracle { mu: 0.0, sigma: 1.0 };

    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::input("gaussian needs finite mu and positive sigma"));
        }
        Ok(GaussianOracle { mu, sigma })
    }
}

pub fn gaussian(x: f64, o: &GaussianOracle) -> f64 {
    let z = (x - o.mu) / o.sigma;
    (-0.5 * z * z).exp() / (o.sigma * (2.0 * PI).sqrt())
}

/// First derivative of [`gaussian`] with respect to `x`.
pub fn gaussian_derivative(x: f64, o: &GaussianOracle) -> f64 {
    -(x - o.mu) / (o.sigma * o.sigma) * gaussian(x, o)
}

/// `∫_{-t}^{t} (x - E)^2 f(x) dx` for the Gaussian `f`, where `E` is the
/// mean of `f` restricted to `[-t, t]`. Composite Simpson rule with
/// `n_quad` intervals (rounded up to even).
pub fn interval_variance(o: &GaussianOracle, t: f64, n_quad: usize) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::input("interval half-width must be positive"));
    }
    if n_quad < 16 {
        return Err(Error::input("at least 16 quadrature intervals are required"));
    }
    let n = n_quad + n_quad % 2;
    let h = 2.0 * t / n as f64;
    let simpson = |g: &dyn Fn(f64) -> f64| -> f64 {
        let mut acc = g(-t) + g(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(-t + i as f64 * h);
        }
        acc * h / 3.0
    };
    let mass = simpson(&|x| gaussian(x, o));
    let mean = simpson(&|x| x * gaussian(x, o)) / mass;
    Ok(simpson(&|x| (x - mean).powi(2) * gaussian(x, o)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Volume is the box `[0, extent]`.
    pub extent: [f64; 3],
    pub fiber_count: usize,
    pub seed: u64,
    pub length_model: TanhModel,
    pub diameter_model: TanhModel,
    /// Total proposal budget across all fibers.
    pub max_placement_attempts: usize,
    /// Relative half-width of the uniform per-fiber length jitter.
    pub length_jitter: f64,
    /// Largest angle between a fiber axis and +z, in degrees.
    pub max_tilt_deg: f64,
    /// Lateral displacement of interior vertices, relative to fiber length.
    pub bend: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            extent: [400.0, 400.0, 300.0],
            fiber_count: 80,
            seed: 1,
            length_model: TanhModel::LENGTH,
            diameter_model: TanhModel::DIAMETER,
            max_placement_attempts: 200_000,
            length_jitter: 0.05,
            max_tilt_deg: 10.0,
            bend: 0.015,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fiber_count == 0 {
            return Err(Error::input("fiber_count must be at least 1"));
        }
        if !self.extent.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(Error::input("extent must be positive along every axis"));
        }
        if !(0.0..1.0).contains(&self.length_jitter) {
            return Err(Error::input("length_jitter must lie in [0, 1)"));
        }
        if !(0.0..=90.0).contains(&self.max_tilt_deg) {
            return Err(Error::input("max_tilt_deg must lie in [0, 90]"));
        }
        if !(0.0..0.5).contains(&self.bend) {
            return Err(Error::input("bend must lie in [0, 0.5)"));
        }
        self.length_model.validate()?;
        self.diameter_model.validate()
    }

    pub fn volume(&self) -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::from(self.extent))
    }
}

/// Generated result plus placement statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub result: FiberResult,
    pub requested: usize,
    pub attempts: usize,
}

impl SynthOutcome {
    pub fn achieved(&self) -> usize {
        self.result.len()
    }

    /// False when the attempt budget ran out before every fiber was placed.
    pub fn is_complete(&self) -> bool {
        self.achieved() == self.requested
    }
}

struct SlotShape {
    length: f64,
    /// Lateral (e1, e2) offsets of the interior vertices, in world units.
    bends: Vec<(f64, f64)>,
}

struct Placed {
    fiber: Fiber,
    bounds: Aabb,
}

/// Generates one synthetic result for `param1`, `param2` in `[0, 1]`.
pub fn generate(param1: f64, param2: f64, cfg: &SynthConfig, result_id: u64) -> Result<SynthOutcome> {
    cfg.validate()?;
    for (name, p) in [("param1", param1), ("param2", param2)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: name.into(),
                reason: format!("{p} outside [0, 1]"),
            });
        }
    }
    let base_length = cfg.length_model.eval(param1);
    let radius = cfg.diameter_model.eval(param2) / 2.0;
    if !(base_length > 0.0 && radius > 0.0) {
        return Err(Error::input("models must yield positive length and diameter"));
    }

    let volume = cfg.volume();
    let cos_max_tilt = cfg.max_tilt_deg.to_radians().cos();
    let mut placed: Vec<Placed> = Vec::with_capacity(cfg.fiber_count);
    let mut attempts = 0;

    'slots: for slot in 0..cfg.fiber_count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(slot as u64);
        let shape = slot_shape(&mut rng, base_length, cfg);

        loop {
            if attempts >= cfg.max_placement_attempts {
                break 'slots;
            }
            attempts += 1;

            let center = Vec3::new(
                rng.random::<f64>() * cfg.extent[0],
                rng.random::<f64>() * cfg.extent[1],
                rng.random::<f64>() * cfg.extent[2],
            );
            // uniform direction on the spherical cap around +z
            let cos_tilt = 1.0 - rng.random::<f64>() * (1.0 - cos_max_tilt);
            let sin_tilt = (1.0 - cos_tilt * cos_tilt).max(0.0).sqrt();
            let azimuth = rng.random::<f64>() * 2.0 * PI;
            let axis = Vec3::new(sin_tilt * azimuth.cos(), sin_tilt * azimuth.sin(), cos_tilt);

            let vertices = slot_vertices(&center, &axis, &shape);
            let fiber = Fiber::new(slot as u64, vertices, radius)?;
            let bounds = fiber.bounding_box();
            if !volume.contains_box(&bounds) {
                continue;
            }
            if placed.iter().any(|p| p.bounds.overlaps(&bounds) && tubes_overlap(&p.fiber, &fiber)) {
                continue;
            }
            placed.push(Placed { fiber, bounds });
            continue 'slots;
        }
    }

    let fibers = placed.into_iter().map(|p| p.fiber).collect();
    Ok(SynthOutcome {
        result: FiberResult::new(result_id, fibers)?,
        requested: cfg.fiber_count,
        attempts,
    })
}

fn slot_shape(rng: &mut ChaCha8Rng, base_length: f64, cfg: &SynthConfig) -> SlotShape {
    let jitter = (2.0 * rng.random::<f64>() - 1.0) * cfg.length_jitter;
    let length = base_length * (1.0 + jitter);
    let vertex_count = 3 + (rng.random::<f64>() * 3.0) as usize % 3;
    let amplitude = cfg.bend * length;
    let bends = (0..vertex_count - 2)
        .map(|_| {
            (
                (2.0 * rng.random::<f64>() - 1.0) * amplitude,
                (2.0 * rng.random::<f64>() - 1.0) * amplitude,
            )
        })
        .collect();
    SlotShape { length, bends }
}

/// End points lie on the axis, so the end-to-end length equals the slot
/// length exactly; interior vertices are displaced sideways.
fn slot_vertices(center: &Vec3, axis: &Vec3, shape: &SlotShape) -> Vec<Vec3> {
    let (e1, e2) = orthonormal_frame(axis);
    let start = center - axis * (shape.length / 2.0);
    let segments = shape.bends.len() + 1;
    let mut vertices = Vec::with_capacity(segments + 1);
    vertices.push(start);
    for (i, (u, v)) in shape.bends.iter().enumerate() {
        let along = shape.length * (i + 1) as f64 / segments as f64;
        vertices.push(start + axis * along + e1 * *u + e2 * *v);
    }
    vertices.push(start + axis * shape.length);
    vertices
}

/// Tubes overlap when their center polylines come closer than the sum of
/// the radii.
pub fn tubes_overlap(a: &Fiber, b: &Fiber) -> bool {
    let limit = (a.radius() + b.radius()).powi(2);
    a.segments().any(|(p1, q1)| {
        b.segments()
            .any(|(p2, q2)| segment_segment_distance_sq(p1, q1, p2, q2) < limit)
    })
}
