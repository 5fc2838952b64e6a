use serde::{Deserialize, Serialize};

use super::overlap::dissimilarity_from_points;
use crate::geometry::{Aabb, Vec3};
use crate::model::{Fiber, FiberResult};

/// Bounding boxes of a result's fibers sorted by `min.x`, answering
/// box-overlap queries with a binary search on the sweep axis.
#[derive(Debug, Clone)]
pub struct BboxIndex {
    entries: Vec<(Aabb, usize)>,
}

impl BboxIndex {
    pub fn new(result: &FiberResult) -> Self {
        let mut entries: Vec<(Aabb, usize)> = result
            .fibers()
            .iter()
            .enumerate()
            .map(|(i, f)| (f.bounding_box(), i))
            .collect();
        entries.sort_by(|a, b| a.0.min.x.total_cmp(&b.0.min.x).then(a.1.cmp(&b.1)));
        BboxIndex { entries }
    }

    /// Positions (within the indexed result) of fibers whose boxes overlap
    /// `query`, in no particular order.
    pub fn overlapping<'a>(&'a self, query: &'a Aabb) -> impl Iterator<Item = usize> + 'a {
        let end = self.entries.partition_point(|(b, _)| b.min.x <= query.max.x);
        self.entries[..end]
            .iter()
            .filter(move |(b, _)| b.overlaps(query))
            .map(|(_, i)| *i)
    }
}

/// Best match of one fiber within another result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub fiber_id: u64,
    pub match_id: Option<u64>,
    pub s: f64,
}

/// A result with per-fiber sample points and a box index, ready for
/// repeated matching.
#[derive(Debug, Clone)]
pub struct PreparedResult<'a> {
    pub result: &'a FiberResult,
    points: Vec<Vec<Vec3>>,
    volumes: Vec<f64>,
    boxes: Vec<Aabb>,
    index: BboxIndex,
}

impl<'a> PreparedResult<'a> {
    pub fn new(result: &'a FiberResult, n_points: usize) -> Self {
        assert!(n_points > 0, "n_points must be positive");
        let fibers = result.fibers();
        PreparedResult {
            result,
            points: fibers.iter().map(|f| f.sample_points(n_points)).collect(),
            volumes: fibers.iter().map(Fiber::volume).collect(),
            boxes: fibers.iter().map(Fiber::bounding_box).collect(),
            index: BboxIndex::new(result),
        }
    }

    pub fn index(&self) -> &BboxIndex {
        &self.index
    }

    fn best_match_at(&self, i: usize, target: &PreparedResult<'_>) -> BestMatch {
        let fiber = &self.result.fibers()[i];
        let mut best: Option<(f64, u64)> = None;
        let mut candidates: Vec<usize> = target.index.overlapping(&self.boxes[i]).collect();
        // Visit likely winners first so the early cutoff prunes more.
        candidates.sort_by(|&a, &b| {
            let ra = super::overlap::volume_ratio(self.volumes[i], target.volumes[a]);
            let rb = super::overlap::volume_ratio(self.volumes[i], target.volumes[b]);
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for j in candidates {
            let candidate = &target.result.fibers()[j];
            let cutoff = best.map_or(f64::INFINITY, |(s, _)| s);
            let s = dissimilarity_from_points(&self.points[i], self.volumes[i], candidate, cutoff);
            let better = match best {
                None => true,
                Some((bs, bid)) => s < bs || (s == bs && candidate.id() < bid),
            };
            if better {
                best = Some((s, candidate.id()));
            }
        }
        match best {
            Some((s, id)) if s < 1.0 => BestMatch {
                fiber_id: fiber.id(),
                match_id: Some(id),
                s,
            },
            _ => BestMatch {
                fiber_id: fiber.id(),
                match_id: None,
                s: 1.0,
            },
        }
    }

    /// Best matches of every fiber of `self` within `target`, in fiber order.
    pub fn best_matches(&self, target: &PreparedResult<'_>) -> Vec<BestMatch> {
        (0..self.result.len()).map(|i| self.best_match_at(i, target)).collect()
    }

    /// Mean best-match dissimilarity of `self` against `target`.
    pub fn dissimilarity_to(&self, target: &PreparedResult<'_>) -> f64 {
        mean_dissimilarity(self.result.len(), target.result.len(), || self.best_matches(target))
    }
}

fn mean_dissimilarity(a_len: usize, b_len: usize, matches: impl FnOnce() -> Vec<BestMatch>) -> f64 {
    match (a_len, b_len) {
        (0, 0) => 0.0,
        (0, _) | (_, 0) => 1.0,
        _ => {
            let m = matches();
            m.iter().map(|b| b.s).sum::<f64>() / m.len() as f64
        }
    }
}

/// Best match of `f` among the fibers of `target`, evaluating only fibers
/// whose boxes overlap `f`'s box. Ties go to the lowest fiber id; without
/// any candidate scoring below 1 the result is `(None, 1)`.
pub fn best_match(f: &Fiber, target: &FiberResult, index: &BboxIndex, n_points: usize) -> BestMatch {
    let points = f.sample_points(n_points);
    let own_box = f.bounding_box();
    let mut best: Option<(f64, u64)> = None;
    for j in index.overlapping(&own_box) {
        let candidate = &target.fibers()[j];
        let s = dissimilarity_from_points(&points, f.volume(), candidate, f64::INFINITY);
        if best.is_none_or(|(bs, bid)| s < bs || (s == bs && candidate.id() < bid)) {
            best = Some((s, candidate.id()));
        }
    }
    match best {
        Some((s, id)) if s < 1.0 => BestMatch {
            fiber_id: f.id(),
            match_id: Some(id),
            s,
        },
        _ => BestMatch {
            fiber_id: f.id(),
            match_id: None,
            s: 1.0,
        },
    }
}

/// Mean over the fibers of `a` of their best-match dissimilarity in `b`.
/// An empty `a` scores 1 unless `b` is empty as well.
pub fn result_dissimilarity(a: &FiberResult, b: &FiberResult, n_points: usize) -> f64 {
    let pa = PreparedResult::new(a, n_points);
    let pb = PreparedResult::new(b, n_points);
    pa.dissimilarity_to(&pb)
}
