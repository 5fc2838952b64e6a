//! Read-only queries over a preprocessed study. Transport-agnostic:
//! [`QueryService::handle`] maps a path and query string to a status code
//! and a JSON body.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::preprocess::Preprocessed;
use crate::dissimilarity::{coverage_difference, MeasureId, PreparedResult};
use crate::model::{Characteristic, FiberResult};
use crate::sensitivity::in_out_matrix;
use crate::spatial::{voxelize, VoxelGrid};

pub const SCHEMA_VERSION: u32 = 1;

const AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Value,
}

impl Response {
    fn ok(mut body: Value) -> Self {
        body["schema_version"] = json!(SCHEMA_VERSION);
        Response { status: 200, body }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Response {
            status,
            body: json!({ "schema_version": SCHEMA_VERSION, "error": { "status": status, "message": message.into() } }),
        }
    }
}

type Query = BTreeMap<String, String>;
type Handled = std::result::Result<Value, Response>;

fn bad_request(msg: impl Into<String>) -> Response {
    Response::error(400, msg)
}

fn not_found(msg: impl Into<String>) -> Response {
    Response::error(404, msg)
}

fn parse_ids(text: &str, what: &str) -> std::result::Result<Vec<u64>, Response> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad_request(format!("`{s}` is not a valid {what}"))))
        .collect()
}

fn parse_id(text: &str, what: &str) -> std::result::Result<u64, Response> {
    text.parse().map_err(|_| bad_request(format!("`{text}` is not a valid {what}")))
}

pub struct QueryService {
    pre: Preprocessed,
}

impl QueryService {
    pub fn new(pre: Preprocessed) -> Self {
        QueryService { pre }
    }

    pub fn preprocessed(&self) -> &Preprocessed {
        &self.pre
    }

    /// Answers `path` with the raw (percent-encoded) `query` string.
    pub fn handle(&self, path: &str, query: &str) -> Response {
        let q: Query = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        let out = match segments.as_slice() {
            ["study"] => self.study(),
            ["matrix"] => self.matrix(&q),
            ["influence"] => self.influence(&q),
            ["mds"] => self.mds(),
            ["stars"] => self.stars(&q),
            ["spatial"] => self.spatial(&q),
            ["spatial", "result", id] => parse_id(id, "result id").and_then(|id| self.spatial_result(id, &q)),
            ["fibers", id] => parse_id(id, "result id").and_then(|id| self.fibers(id)),
            ["diff"] => self.diff(&q),
            _ => Err(not_found(format!("no endpoint at `{path}`"))),
        };
        match out {
            Ok(body) => Response::ok(body),
            Err(r) => r,
        }
    }

    fn result(&self, id: u64) -> std::result::Result<&FiberResult, Response> {
        self.pre.results.get(&id).ok_or_else(|| not_found(format!("no result {id}")))
    }

    fn param_index(&self, name: &str) -> std::result::Result<usize, Response> {
        self.pre
            .collection
            .plan
            .param_index(name)
            .ok_or_else(|| not_found(format!("no parameter `{name}`")))
    }

    fn study(&self) -> Handled {
        let c = &self.pre.collection;
        let names: Vec<&str> = c.plan.descriptors.iter().map(|d| d.name.as_str()).collect();
        let samples: Vec<Value> = c
            .plan
            .samples
            .iter()
            .map(|s| {
                let rec = c.manifest.record(s.sample_id);
                json!({
                    "sample_id": s.sample_id,
                    "star_id": s.star_id,
                    "branch_param": s.branch.map(|p| names[p]),
                    "step_offset": s.step_offset,
                    "values": s.vector.values(),
                    "status": rec.map(|r| r.status),
                    "fibers": rec.and_then(|r| r.fibers),
                    "message": rec.and_then(|r| r.message.clone()),
                })
            })
            .collect();
        let a = &c.config.analysis;
        Ok(json!({
            "study_digest": c.manifest.study_digest,
            "parameters": c.plan.descriptors,
            "sampling": c.config.sampling,
            "characteristics": Characteristic::ALL.iter().map(|ch| json!({ "name": ch.name(), "units": ch.units() })).collect::<Vec<_>>(),
            "result_ids": self.pre.tables.result_ids,
            "failed": c.manifest.failed().map(|r| r.sample_id).collect::<Vec<_>>(),
            "settings": { "bins": a.bins, "measure": a.measure, "n_points": a.n_points, "regional_bins": a.regional_bins },
            "samples": samples,
        }))
    }

    fn matrix(&self, q: &Query) -> Handled {
        let kind = match q.get("measure") {
            Some(m) => m.parse().map_err(|e: crate::Error| bad_request(e.to_string()))?,
            None => self.pre.collection.config.analysis.measure,
        };
        let order = match q.get("order") {
            Some(o) => Some(o.split(',').map(|n| self.param_index(n)).collect::<std::result::Result<Vec<_>, _>>()?),
            None => None,
        };
        let m = in_out_matrix(&self.pre.field, kind, order).map_err(|e| bad_request(e.to_string()))?;
        let best: Vec<Option<f64>> = m.rows.iter().map(|&p| self.pre.field.global(p, MeasureId::BestMatch)).collect();
        Ok(json!({
            "measure": kind,
            "params": m.params,
            "characteristics": m.characteristics.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "normalized": m.normalized,
            "raw": m.raw,
            "best_match_global": best,
        }))
    }

    fn influence(&self, q: &Query) -> Handled {
        let name = q.get("param").ok_or_else(|| bad_request("missing `param`"))?;
        let param = self.param_index(name)?;
        let ch_name = q.get("char").ok_or_else(|| bad_request("missing `char`"))?;
        let ch: Characteristic = ch_name.parse().map_err(|_| not_found(format!("no characteristic `{ch_name}`")))?;
        let kind = match q.get("measure") {
            Some(m) => m.parse().map_err(|e: crate::Error| bad_request(e.to_string()))?,
            None => self.pre.collection.config.analysis.measure,
        };
        let selected = q.get("selected").map_or(Ok(vec![]), |s| parse_ids(s, "result id"))?;
        let t = &self.pre.tables;
        let plan = &self.pre.collection.plan;
        let measure = MeasureId::Distribution(ch, kind);
        let (lo, hi) = t.ranges[ch.index()];
        let width = (hi - lo) / t.bin_count as f64;

        let rows: Vec<&Vec<f64>> = t
            .per_bin_variation
            .iter()
            .filter(|v| v.param == param && v.characteristic == ch)
            .map(|v| &v.values)
            .collect();
        let per_bin: Vec<f64> = (0..t.bin_count)
            .map(|b| if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r[b]).sum::<f64>() / rows.len() as f64 })
            .collect();

        let mut markers = Vec::new();
        for id in selected {
            let sample = plan.sample(id).ok_or_else(|| not_found(format!("no result {id}")))?;
            self.result(id)?;
            markers.push(json!({
                "result_id": id,
                "star_id": sample.star_id,
                "param_value": sample.vector.get(param),
                "local": self.pre.field.local(sample.star_id, param, measure),
                "histogram": t.histogram(id, ch).map(|h| &h.frequencies),
            }));
        }
        Ok(json!({
            "param": name,
            "characteristic": ch.name(),
            "units": ch.units(),
            "measure": measure,
            "histogram": {
                "lo": lo,
                "hi": hi,
                "bin_centers": (0..t.bin_count).map(|b| lo + (b as f64 + 0.5) * width).collect::<Vec<_>>(),
                "average": t.average_histogram(ch),
            },
            "per_bin_variation": per_bin,
            "regional": self.pre.field.regional(param, measure),
            "global": self.pre.field.global(param, measure),
            "selected": markers,
        }))
    }

    fn mds(&self) -> Handled {
        let e = &self.pre.embedding;
        let plan = &self.pre.collection.plan;
        let points: Vec<Value> = e
            .result_ids
            .iter()
            .zip(&e.coordinates)
            .map(|(&id, c)| {
                let s = plan.sample(id);
                json!({
                    "result_id": id,
                    "u": c[0],
                    "v": c[1],
                    "star_id": s.map(|s| s.star_id),
                    "is_center": s.is_some_and(|s| s.is_center()),
                })
            })
            .collect();
        Ok(json!({ "stress": e.stress, "degenerate": e.degenerate, "points": points }))
    }

    fn stars(&self, q: &Query) -> Handled {
        let selected = q.get("selected").map_or(Ok(vec![]), |s| parse_ids(s, "result id"))?;
        let plan = &self.pre.collection.plan;
        let mut selected_stars = BTreeSet::new();
        for id in &selected {
            let s = plan.sample(*id).ok_or_else(|| not_found(format!("no result {id}")))?;
            selected_stars.insert(s.star_id);
        }
        let coord = |id: u64| self.pre.embedding.coordinate(id);
        let stars: BTreeSet<u64> = plan.samples.iter().map(|s| s.star_id).collect();
        let mut segments = Vec::new();
        for &star in &stars {
            for (p, d) in plan.descriptors.iter().enumerate() {
                for w in plan.branch(star, p).windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if b.step_offset != a.step_offset + 1 || !self.pre.results.contains_key(&a.sample_id) || !self.pre.results.contains_key(&b.sample_id) {
                        continue;
                    }
                    segments.push(json!({
                        "star_id": star,
                        "param": d.name,
                        "from": a.sample_id,
                        "to": b.sample_id,
                        "from_offset": a.step_offset,
                        "to_offset": b.step_offset,
                        "from_params": a.vector.values(),
                        "to_params": b.vector.values(),
                        "from_mds": coord(a.sample_id),
                        "to_mds": coord(b.sample_id),
                        "in_selected_star": selected_stars.contains(&star),
                    }));
                }
            }
        }
        let centers: Vec<Value> = stars
            .iter()
            .filter_map(|&s| plan.center(s))
            .map(|c| json!({ "star_id": c.star_id, "result_id": c.sample_id, "available": self.pre.results.contains_key(&c.sample_id) }))
            .collect();
        Ok(json!({ "selected": selected, "centers": centers, "segments": segments }))
    }

    fn grid_body(grid: &VoxelGrid, q: &Query) -> Handled {
        let s = &grid.spec;
        let Some(slice) = q.get("slice") else {
            let nonzero = grid.values.iter().filter(|v| **v > 0.0).count();
            return Ok(json!({ "dims": s.dims, "origin": s.origin, "spacing": s.spacing, "max": grid.max(), "nonzero": nonzero }));
        };
        let (axis, index) = slice.split_once(',').ok_or_else(|| bad_request("slice must be `axis,index`"))?;
        let axis = match axis {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => return Err(bad_request(format!("unknown slice axis `{axis}`"))),
        };
        let index: usize = index.parse().map_err(|_| bad_request(format!("`{index}` is not a valid slice index")))?;
        if index >= s.dims[axis] {
            return Err(bad_request(format!("slice index {index} outside 0..{}", s.dims[axis])));
        }
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut values = Vec::with_capacity(s.dims[u] * s.dims[v]);
        for b in 0..s.dims[v] {
            for a in 0..s.dims[u] {
                let mut ijk = [0; 3];
                ijk[axis] = index;
                ijk[u] = a;
                ijk[v] = b;
                values.push(grid.get(ijk[0], ijk[1], ijk[2]));
            }
        }
        Ok(json!({
            "axis": AXES[axis],
            "index": index,
            "width": s.dims[u],
            "height": s.dims[v],
            "max": grid.max(),
            "values": values,
        }))
    }

    fn spatial(&self, q: &Query) -> Handled {
        Self::grid_body(&self.pre.volume, q)
    }

    fn spatial_result(&self, id: u64, q: &Query) -> Handled {
        let r = self.result(id)?;
        let mut body = Self::grid_body(&voxelize(r, &self.pre.volume.spec), q)?;
        body["result_id"] = json!(id);
        Ok(body)
    }

    fn fibers(&self, id: u64) -> Handled {
        let r = self.result(id)?;
        let fibers: Vec<Value> = r
            .fibers()
            .iter()
            .zip(r.characteristics())
            .map(|(f, c)| {
                let chars: serde_json::Map<String, Value> = Characteristic::ALL.iter().map(|&ch| (ch.name().to_string(), json!(c.get(ch)))).collect();
                json!({
                    "id": f.id(),
                    "radius": f.radius(),
                    "vertices": f.vertices().iter().map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>(),
                    "characteristics": chars,
                })
            })
            .collect();
        Ok(json!({ "result_id": id, "fibers": fibers }))
    }

    fn diff(&self, q: &Query) -> Handled {
        let ref_id = parse_id(q.get("ref").ok_or_else(|| bad_request("missing `ref`"))?, "result id")?;
        let other_id = parse_id(q.get("other").ok_or_else(|| bad_request("missing `other`"))?, "result id")?;
        let wanted = q.get("fibers").map_or(Ok(vec![]), |s| parse_ids(s, "fiber id"))?;
        let (a, b) = (self.result(ref_id)?, self.result(other_id)?);
        let n = self.pre.collection.config.analysis.n_points;
        let matches = PreparedResult::new(a, n).best_matches(&PreparedResult::new(b, n));
        let mut differences = Vec::new();
        for fid in wanted {
            let f = a.fiber(fid).ok_or_else(|| not_found(format!("result {ref_id} has no fiber {fid}")))?;
            let m = matches.iter().find(|m| m.fiber_id == fid).expect("one match per fiber");
            let (only_ref, only_other) = match m.match_id.and_then(|id| b.fiber(id)) {
                Some(g) => coverage_difference(f, g, n),
                None => (f.sample_points(n), vec![]),
            };
            let pts = |p: Vec<crate::Vec3>| p.iter().map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>();
            differences.push(json!({
                "fiber_id": fid,
                "match_id": m.match_id,
                "s": m.s,
                "only_ref": pts(only_ref),
                "only_other": pts(only_other),
            }));
        }
        Ok(json!({
            "ref": ref_id,
            "other": other_id,
            "dissimilarity": self.pre.tables.result_dissimilarity(ref_id, other_id),
            "pairs": matches,
            "differences": differences,
        }))
    }
}
