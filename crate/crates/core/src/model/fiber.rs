use serde::Serialize;
use std::collections::HashSet;
use std::f64::consts::PI;

use super::{derive_characteristics, Characteristic, Characteristics};
use crate::error::{Error, Result};
use crate::geometry::{orthonormal_frame, point_segment_distance_sq, Aabb, Vec3};

/// Radial rings of the interior sampling pattern; ring `k` sits at
/// `sqrt((k + 0.5) / RINGS)` of the radius so rings cover equal areas.
const RINGS: usize = 4;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// A tube of constant radius around a polyline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fiber {
    id: u64,
    vertices: Vec<Vec3>,
    radius: f64,
    #[serde(skip)]
    bounds: Aabb,
}

impl Fiber {
    pub fn new(id: u64, vertices: Vec<Vec3>, radius: f64) -> Result<Self> {
        let bad = |reason: String| Error::InvalidFiber { id, reason };
        if vertices.len() < 2 {
            return Err(bad(format!("needs at least 2 vertices, got {}", vertices.len())));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(bad(format!("radius must be positive and finite, got {radius}")));
        }
        if vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(bad("non-finite vertex coordinate".into()));
        }
        if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(bad(format!("vertices {i} and {} coincide", i + 1)));
        }
        let bounds = Aabb::from_points(&vertices)
            .expect("non-empty vertex list")
            .inflate(radius);
        Ok(Fiber {
            id,
            vertices,
            radius,
            bounds,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn segments(&self) -> impl Iterator<Item = (&Vec3, &Vec3)> + '_ {
        self.vertices.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn curved_length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn straight_length(&self) -> f64 {
        (self.vertices[self.vertices.len() - 1] - self.vertices[0]).norm()
    }

    /// Tube volume `pi r^2 L` over the polyline arclength.
    pub fn volume(&self) -> f64 {
        PI * self.radius * self.radius * self.curved_length()
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bounds
    }

    pub fn characteristics(&self) -> Characteristics {
        derive_characteristics(self)
    }

    /// Squared distance from `p` to the fiber's center polyline.
    pub fn axis_distance_sq(&self, p: &Vec3) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance_sq(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` lies inside the tube: within `radius` of the polyline,
    /// with flat ends at the first and last vertex and rounded inner joints.
    pub fn contains_point(&self, p: &Vec3) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        let r_sq = self.radius * self.radius;
        let last = self.vertices.len() - 2;
        self.segments().enumerate().any(|(k, (a, b))| {
            let ab = b - a;
            let t = (p - a).dot(&ab) / ab.norm_squared();
            if (k == 0 && t < 0.0) || (k == last && t > 1.0) {
                return false;
            }
            point_segment_distance_sq(p, a, b) <= r_sq
        })
    }

    /// Deterministic interior sample of `n` points.
    ///
    /// Point `i` sits at arclength `(i + 0.5) / n` of the polyline (one point
    /// per axial stratum), on ring `i mod 4` of the fixed radial pattern, at
    /// angle `i` times the golden angle in the local segment frame. Every
    /// point lies strictly inside the tube.
    pub fn sample_points(&self, n: usize) -> Vec<Vec3> {
        let lengths: Vec<f64> = self.segments().map(|(a, b)| (b - a).norm()).collect();
        let total: f64 = lengths.iter().sum();
        let frames: Vec<(Vec3, Vec3, Vec3)> = self
            .segments()
            .map(|(a, b)| {
                let dir = (b - a).normalize();
                let (e1, e2) = orthonormal_frame(&dir);
                (dir, e1, e2)
            })
            .collect();

        let mut points = Vec::with_capacity(n);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64 * total;
            while seg + 1 < lengths.len() && t > seg_start + lengths[seg] {
                seg_start += lengths[seg];
                seg += 1;
            }
            let (dir, e1, e2) = &frames[seg];
            let along = (t - seg_start).clamp(0.0, lengths[seg]);
            let center = self.vertices[seg] + dir * along;
            let ring = (i % RINGS) as f64;
            let rho = ((ring + 0.5) / RINGS as f64).sqrt() * self.radius;
            let angle = i as f64 * GOLDEN_ANGLE;
            points.push(center + (e1 * angle.cos() + e2 * angle.sin()) * rho);
        }
        points
    }
}

/// Axis-aligned box of the vertex extents inflated by the radius.
pub fn bounding_box(fiber: &Fiber) -> Aabb {
    fiber.bounding_box()
}

/// All fibers produced by one run of the analyzed algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberResult {
    pub result_id: u64,
    fibers: Vec<Fiber>,
    characteristics: Vec<Characteristics>,
}

impl FiberResult {
    pub fn new(result_id: u64, fibers: Vec<Fiber>) -> Result<Self> {
        let mut ids = HashSet::new();
        for f in &fibers {
            if !ids.insert(f.id()) {
                return Err(Error::InvalidFiber {
                    id: f.id(),
                    reason: format!("duplicate fiber id in result {result_id}"),
                });
            }
        }
        let characteristics = fibers.iter().map(derive_characteristics).collect();
        Ok(FiberResult {
            result_id,
            fibers,
            characteristics,
        })
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    pub fn characteristics(&self) -> &[Characteristics] {
        &self.characteristics
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    pub fn fiber(&self, id: u64) -> Option<&Fiber> {
        self.fibers.iter().find(|f| f.id() == id)
    }

    /// Values of one characteristic across all fibers, in fiber order.
    pub fn values(&self, c: Characteristic) -> impl Iterator<Item = f64> + '_ {
        self.characteristics.iter().map(move |ch| ch[c])
    }

    /// Union of all fiber boxes; `None` for an empty result.
    pub fn bounds(&self) -> Option<Aabb> {
        self.fibers
            .iter()
            .map(Fiber::bounding_box)
            .reduce(|a, b| a.union(&b))
    }
}
