//! Voxel coverage counts and the occupation-ratio volume.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::model::FiberResult;

pub const DEFAULT_DIMS: [usize; 3] = [64, 64, 64];

/// Regular grid geometry; `origin` is the minimum corner of voxel (0,0,0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], origin: [f64; 3], spacing: [f64; 3]) -> Result<Self> {
        let g = GridSpec { dims, origin, spacing };
        g.validate()?;
        Ok(g)
    }

    /// `dims` voxels spanning `bounds` exactly.
    pub fn covering(bounds: &Aabb, dims: [usize; 3]) -> Result<Self> {
        let e = bounds.extent();
        GridSpec::new(
            dims,
            [bounds.min.x, bounds.min.y, bounds.min.z],
            [e.x / dims[0] as f64, e.y / dims[1] as f64, e.z / dims[2] as f64],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::input("grid dims must be at least 1"));
        }
        if !self.spacing.iter().all(|s| s.is_finite() && *s > 0.0) || !self.origin.iter().all(|o| o.is_finite()) {
            return Err(Error::input("grid spacing must be positive and origin finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + (i as f64 + 0.5) * self.spacing[0],
            self.origin[1] + (j as f64 + 0.5) * self.spacing[1],
            self.origin[2] + (k as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Inclusive index range of voxels whose centers may lie in `b`.
    fn index_range(&self, b: &Aabb, axis: usize) -> Option<(usize, usize)> {
        let lo = ((b.min[axis] - self.origin[axis]) / self.spacing[axis] - 0.5).ceil().max(0.0);
        let hi = ((b.max[axis] - self.origin[axis]) / self.spacing[axis] - 0.5).floor();
        let last = (self.dims[axis] - 1) as f64;
        (hi >= 0.0 && lo <= last && lo <= hi).then(|| (lo as usize, hi.min(last) as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        let values = vec![0.0; spec.len()];
        VoxelGrid { spec, values }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `<stem>.raw` (f32 little endian, x fastest) and the
    /// `<stem>.hdr` text header; returns both paths.
    pub fn write_raw(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let raw = stem.with_extension("raw");
        let hdr = stem.with_extension("hdr");
        let mut w = BufWriter::new(File::create(&raw)?);
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        w.flush()?;
        fs::write(&hdr, self.header())?;
        Ok((raw, hdr))
    }

    pub fn header(&self) -> String {
        let s = &self.spec;
        format!(
            "dims={} {} {}\norigin={} {} {}\nspacing={} {} {}\norder=x-fastest\ndtype=f32le\n",
            s.dims[0], s.dims[1], s.dims[2], s.origin[0], s.origin[1], s.origin[2], s.spacing[0], s.spacing[1], s.spacing[2]
        )
    }

    /// Reads a volume written by [`VoxelGrid::write_raw`].
    pub fn read_raw(stem: &Path) -> Result<Self> {
        let header = fs::read_to_string(stem.with_extension("hdr"))?;
        let bad = |line: usize, reason: &str| Error::Format {
            what: "volume header",
            line: line as u64,
            reason: reason.into(),
        };
        let mut dims = None;
        let mut origin = None;
        let mut spacing = None;
        for (n, line) in header.lines().enumerate() {
            let (key, value) = line.split_once('=').ok_or_else(|| bad(n + 1, "expected key=value"))?;
            let three = || -> Result<[f64; 3]> {
                let v: Vec<f64> = value.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(n + 1, "bad number"))?;
                v.try_into().map_err(|_| bad(n + 1, "expected three values"))
            };
            match key {
                "dims" => dims = Some(three()?.map(|d| d as usize)),
                "origin" => origin = Some(three()?),
                "spacing" => spacing = Some(three()?),
                "order" if value == "x-fastest" => {}
                "dtype" if value == "f32le" => {}
                _ => return Err(bad(n + 1, "unsupported header entry")),
            }
        }
        let spec = GridSpec::new(
            dims.ok_or_else(|| bad(0, "missing dims"))?,
            origin.ok_or_else(|| bad(0, "missing origin"))?,
            spacing.ok_or_else(|| bad(0, "missing spacing"))?,
        )?;
        let mut bytes = Vec::new();
        File::open(stem.with_extension("raw"))?.read_to_end(&mut bytes)?;
        if bytes.len() != spec.len() * 4 {
            return Err(Error::input("volume data size does not match its header"));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(VoxelGrid { spec, values })
    }
}

/// Per voxel, the number of fibers of `result` whose tube contains the
/// voxel center.
pub fn voxelize(result: &FiberResult, spec: &GridSpec) -> VoxelGrid {
    let mut grid = VoxelGrid::zeros(spec.clone());
    for fiber in result.fibers() {
        let b = fiber.bounding_box();
        let (Some((i0, i1)), Some((j0, j1)), Some((k0, k1))) =
            (spec.index_range(&b, 0), spec.index_range(&b, 1), spec.index_range(&b, 2))
        else {
            continue;
        };
        for k in k0..=k1 {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    if fiber.contains_point(&spec.center(i, j, k)) {
                        grid.values[spec.index(i, j, k)] += 1.0;
                    }
                }
            }
        }
    }
    grid
}

/// Sum of per-result coverage counts divided by the number of results.
pub fn occupation_ratio<'a>(results: impl IntoParallelIterator<Item = &'a FiberResult>, spec: &GridSpec) -> Result<VoxelGrid> {
    let (sum, count) = results
        .into_par_iter()
        .map(|r| (voxelize(r, spec).values, 1usize))
        .reduce(
            || (vec![0.0; spec.len()], 0),
            |(mut a, n), (b, m)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, n + m)
            },
        );
    if count == 0 {
        return Err(Error::input("occupation ratio needs at least one result"));
    }
    Ok(VoxelGrid {
        spec: spec.clone(),
        values: sum.into_iter().map(|v| v / count as f64).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fiber;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tube(id: u64, a: [f64; 3], b: [f64; 3], r: f64) -> Fiber {
        Fiber::new(id, vec![Vec3::from(a), Vec3::from(b)], r).unwrap()
    }

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new([n; 3], [0.0; 3], [1.0; 3]).unwrap()
    }

    /// Independent coverage test: distance to the axis segment with flat
    /// ends, checked for every voxel center.
    fn brute_force(result: &FiberResult, spec: &GridSpec) -> Vec<f64> {
        let mut out = vec![0.0; spec.len()];
        for k in 0..spec.dims[2] {
            for j in 0..spec.dims[1] {
                for i in 0..spec.dims[0] {
                    let c = spec.center(i, j, k);
                    for f in result.fibers() {
                        let v = f.vertices();
                        let covered = v.windows(2).enumerate().any(|(s, w)| {
                            let d = w[1] - w[0];
                            let t = (c - w[0]).dot(&d) / d.dot(&d);
                            if (s == 0 && t < 0.0) || (s == v.len() - 2 && t > 1.0) {
                                return false;
                            }
                            let foot = w[0] + d * t.clamp(0.0, 1.0);
                            (c - foot).norm() <= f.radius()
                        });
                        if covered {
                            out[spec.index(i, j, k)] += 1.0;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn axis_aligned_column() {
        let r = FiberResult::new(0, vec![tube(1, [3.5, 3.5, 0.0], [3.5, 3.5, 8.0], 1.0)]).unwrap();
        let g = voxelize(&r, &unit_grid(8));
        for k in 0..8 {
            for j in 0..8 {
                for i in 0..8 {
                    let expected = if (i == 3 && j == 3) || (i == 3 && j == 2) || (i == 2 && j == 3) || (i == 4 && j == 3) || (i == 3 && j == 4) { 1.0 } else { 0.0 };
                    assert_eq!(g.get(i, j, k), expected, "{i} {j} {k}");
                }
            }
        }
    }

    #[test]
    fn coincident_fibers_count_twice() {
        let f = tube(1, [0.0, 4.5, 4.5], [8.0, 4.5, 4.5], 1.2);
        let r = FiberResult::new(0, vec![f.clone(), tube(2, [0.0, 4.5, 4.5], [8.0, 4.5, 4.5], 1.2)]).unwrap();
        assert_eq!(voxelize(&r, &unit_grid(8)).max(), 2.0);
    }

    #[test]
    fn matches_brute_force_on_8_cubed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = GridSpec::new([8; 3], [-1.0, 0.5, 0.0], [1.25, 1.0, 1.1]).unwrap();
        for round in 0..5 {
            let fibers = (0..6)
                .map(|id| {
                    let mut p = || Vec3::new(rng.random_range(-1.0..9.0), rng.random_range(0.0..9.0), rng.random_range(0.0..9.0));
                    let verts = vec![p(), p(), p()];
                    Fiber::new(id, verts, rng.random_range(0.3..2.0)).unwrap()
                })
                .collect();
            let r = FiberResult::new(round, fibers).unwrap();
            assert_eq!(voxelize(&r, &spec).values, brute_force(&r, &spec));
        }
    }

    #[test]
    fn occupation_ratio_cases() {
        let spec = unit_grid(8);
        let a = FiberResult::new(0, vec![tube(1, [0.0, 3.5, 3.5], [8.0, 3.5, 3.5], 1.0)]).unwrap();
        let copy = a.clone();
        let same = occupation_ratio(vec![&a, &copy], &spec).unwrap();
        assert!(same.values.iter().all(|v| *v == 0.0 || *v == 1.0));
        assert_eq!(same.max(), 1.0);
        let empty = FiberResult::new(1, vec![]).unwrap();
        let half = occupation_ratio(vec![&a, &empty], &spec).unwrap();
        assert!(half.values.iter().all(|v| *v == 0.0 || *v == 0.5));
        assert_eq!(half.max(), 0.5);
        assert!(occupation_ratio(Vec::<&FiberResult>::new(), &spec).is_err());
    }

    #[test]
    fn crossing_fibers_exceed_one_on_coarse_grid() {
        let spec = GridSpec::new([4; 3], [0.0; 3], [2.0; 3]).unwrap();
        let r = |id| FiberResult::new(id, vec![tube(1, [0.0, 3.0, 3.0], [8.0, 3.0, 3.0], 0.6), tube(2, [3.0, 0.0, 3.0], [3.0, 8.0, 3.0], 0.6)]).unwrap();
        let g = occupation_ratio(vec![&r(0), &r(1)], &spec).unwrap();
        assert_eq!(g.max(), 2.0);
    }

    #[test]
    fn permutation_invariant() {
        let spec = unit_grid(8);
        let a = FiberResult::new(0, vec![tube(1, [0.0, 3.5, 3.5], [8.0, 3.5, 3.5], 1.0)]).unwrap();
        let b = FiberResult::new(1, vec![tube(1, [3.5, 0.0, 3.5], [3.5, 8.0, 3.5], 1.5)]).unwrap();
        let c = FiberResult::new(2, vec![]).unwrap();
        let x = occupation_ratio(vec![&a, &b, &c], &spec).unwrap();
        let y = occupation_ratio(vec![&c, &a, &b], &spec).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn refinement_keeps_interior_counts() {
        let fibers = vec![tube(1, [0.0, 4.0, 4.0], [8.0, 4.0, 4.0], 2.0), tube(2, [4.0, 0.0, 4.0], [4.0, 8.0, 4.0], 1.5)];
        let r = FiberResult::new(0, fibers.clone()).unwrap();
        for n in [8, 16] {
            let spec = GridSpec::covering(&Aabb::new(Vec3::zeros(), Vec3::new(8.0, 8.0, 8.0)), [n; 3]).unwrap();
            let g = voxelize(&r, &spec);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let c = spec.center(i, j, k);
                        // Only centers clear of every tube boundary by 1e-6.
                        let depth = |f: &Fiber| f.radius() - f.axis_distance_sq(&c).sqrt();
                        if fibers.iter().all(|f| depth(f).abs() > 1e-6) {
                            let analytic = fibers.iter().filter(|f| depth(f) > 0.0).count() as f64;
                            assert_eq!(g.get(i, j, k), analytic);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn raw_volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new([3, 2, 2], [1.0, 2.0, 3.0], [0.5, 0.5, 2.0]).unwrap();
        let mut g = VoxelGrid::zeros(spec.clone());
        g.values[spec.index(2, 1, 0)] = 1.5;
        let (raw, hdr) = g.write_raw(&dir.path().join("occupation")).unwrap();
        assert_eq!(fs::metadata(raw).unwrap().len(), 12 * 4);
        let text = fs::read_to_string(hdr).unwrap();
        assert!(text.contains("order=x-fastest") && text.contains("dtype=f32le"));
        assert_eq!(VoxelGrid::read_raw(&dir.path().join("occupation")).unwrap(), g);
    }
}
