use crate::geometry::Vec3;
use crate::model::Fiber;

/// Default number of interior points sampled per fiber.
pub const DEFAULT_POINTS: usize = 500;
/// Smallest point count accepted by study configurations.
pub const MIN_POINTS: usize = 100;

/// Overlap dissimilarity of `f_x` against `f_y`: one minus the fraction of
/// `f_x`'s sample points inside `f_y`, scaled by the volume ratio
/// `min(V_x, V_y) / max(V_x, V_y)`.
pub fn fiber_dissimilarity(f_x: &Fiber, f_y: &Fiber, n_points: usize) -> f64 {
    assert!(n_points > 0, "n_points must be positive");
    let points = f_x.sample_points(n_points);
    dissimilarity_from_points(&points, f_x.volume(), f_y, f64::INFINITY)
}

pub(crate) fn volume_ratio(vx: f64, vy: f64) -> f64 {
    vx.min(vy) / vx.max(vy)
}

/// Same as [`fiber_dissimilarity`] with `f_x` given by its sample points and
/// volume. Counting stops early once the result provably exceeds `cutoff`;
/// the returned value is then some number greater than `cutoff`.
pub(crate) fn dissimilarity_from_points(points: &[Vec3], vx: f64, f_y: &Fiber, cutoff: f64) -> f64 {
    let n = points.len();
    let ratio = volume_ratio(vx, f_y.volume());
    let mut contained = 0usize;
    for (i, p) in points.iter().enumerate() {
        if f_y.contains_point(p) {
            contained += 1;
        }
        let best_possible = 1.0 - ((contained + n - 1 - i) as f64 / n as f64) * ratio;
        if best_possible > cutoff {
            return best_possible;
        }
    }
    (1.0 - (contained as f64 / n as f64) * ratio).clamp(0.0, 1.0)
}

/// Sample points of `a` outside `b` and of `b` outside `a`.
pub fn coverage_difference(a: &Fiber, b: &Fiber, n_points: usize) -> (Vec<Vec3>, Vec<Vec3>) {
    let outside = |x: &Fiber, y: &Fiber| -> Vec<Vec3> {
        x.sample_points(n_points)
            .into_iter()
            .filter(|p| !y.contains_point(p))
            .collect()
    };
    (outside(a, b), outside(b, a))
}
