//! Sample plans: Latin hypercube star centers, each extended by one branch
//! per parameter that steps that parameter through its whole range at a
//! fixed step width while all other parameters stay at the center value.
//!
//! Random draws come from `ChaCha8Rng::seed_from_u64(seed)`; each draw is a
//! 53-bit uniform `(next_u64() >> 11) * 2^-53`. Per dimension (in descriptor
//! order) the strata are permuted with a Fisher-Yates pass (`j = floor(u *
//! (i + 1))` for `i = n-1 .. 1`), followed by one jitter draw per sample.
//! This is recorded as generator `lhs-chacha8-v1` in the plan file.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{validate_descriptors, ParameterDescriptor, ParameterVector};

pub const GENERATOR: &str = "lhs-chacha8-v1";

/// Relative slack when deciding whether a branch step still lies in range.
const RANGE_SLACK: f64 = 1e-9;

fn uniform53(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Latin hypercube sample of `n` points: along every dimension each of the
/// `n` equal-width strata holds exactly one point.
pub fn latin_hypercube(descriptors: &[ParameterDescriptor], n: usize, seed: u64) -> Result<Vec<ParameterVector>> {
    validate_descriptors(descriptors)?;
    if n == 0 {
        return Err(Error::input("sample size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(descriptors.len());
    for d in descriptors {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = ((uniform53(&mut rng) * (i + 1) as f64) as usize).min(i);
            strata.swap(i, j);
        }
        let column: Vec<f64> = strata
            .into_iter()
            .map(|k| {
                let u = uniform53(&mut rng);
                (d.min + (k as f64 + u) / n as f64 * d.range()).min(d.max)
            })
            .collect();
        columns.push(column);
    }
    Ok((0..n)
        .map(|i| ParameterVector::from_raw(columns.iter().map(|c| c[i]).collect()))
        .collect())
}

/// One star-branch sample: `param` moved by `offset` steps from the center.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub param: usize,
    pub offset: i32,
    pub vector: ParameterVector,
}

/// Branch points around `center` for every parameter, at offsets `k * w *
/// range` for all nonzero `k` that stay inside the parameter's range
/// (optionally limited to `|k| <= max_steps`). Ordered by parameter, then
/// by ascending offset.
pub fn star_branches(
    center: &ParameterVector,
    descriptors: &[ParameterDescriptor],
    step_width: f64,
    max_steps: Option<u32>,
) -> Result<Vec<BranchPoint>> {
    check_step_width(step_width)?;
    let center = ParameterVector::new(center.values().to_vec(), descriptors)?;
    let mut out = Vec::new();
    for (p, d) in descriptors.iter().enumerate() {
        let step = step_width * d.range();
        let slack = RANGE_SLACK * d.range();
        let c = center.get(p);
        let limit = max_steps.map_or(i32::MAX, |m| m.min(i32::MAX as u32) as i32);
        let mut below = Vec::new();
        let mut k = 1;
        while k <= limit && c - k as f64 * step >= d.min - slack {
            below.push(-k);
            k += 1;
        }
        let mut above = Vec::new();
        let mut k = 1;
        while k <= limit && c + k as f64 * step <= d.max + slack {
            above.push(k);
            k += 1;
        }
        for offset in below.into_iter().rev().chain(above) {
            let value = (c + offset as f64 * step).clamp(d.min, d.max);
            out.push(BranchPoint {
                param: p,
                offset,
                vector: center.with_value(p, value),
            });
        }
    }
    Ok(out)
}

fn check_step_width(w: f64) -> Result<()> {
    if !(w > 0.0 && w <= 0.5) {
        return Err(Error::input(format!("step width must lie in (0, 0.5], got {w}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: u64,
    pub star_id: u64,
    /// Index of the varied parameter; `None` for the star center.
    pub branch: Option<usize>,
    pub step_offset: i32,
    pub vector: ParameterVector,
}

impl Sample {
    pub fn is_center(&self) -> bool {
        self.branch.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub descriptors: Vec<ParameterDescriptor>,
    pub star_count: usize,
    pub step_width: f64,
    /// `None` when centers were supplied explicitly.
    pub seed: Option<u64>,
    pub max_steps: Option<u32>,
    pub samples: Vec<Sample>,
}

/// Full plan: `n` LHS centers and all their star branches.
pub fn build_plan(
    descriptors: &[ParameterDescriptor],
    n: usize,
    step_width: f64,
    seed: u64,
    max_steps: Option<u32>,
) -> Result<SamplePlan> {
    check_step_width(step_width)?;
    let centers = latin_hypercube(descriptors, n, seed)?;
    let mut plan = SamplePlan::from_centers(descriptors, &centers, step_width, max_steps)?;
    plan.seed = Some(seed);
    Ok(plan)
}

impl SamplePlan {
    /// Plan around caller-chosen centers. Sample ids are dense, star by
    /// star: the center first, then its branch points.
    pub fn from_centers(
        descriptors: &[ParameterDescriptor],
        centers: &[ParameterVector],
        step_width: f64,
        max_steps: Option<u32>,
    ) -> Result<Self> {
        validate_descriptors(descriptors)?;
        check_step_width(step_width)?;
        if centers.is_empty() {
            return Err(Error::input("a plan needs at least one star"));
        }
        let mut samples = Vec::new();
        for (star, center) in centers.iter().enumerate() {
            let center = ParameterVector::new(center.values().to_vec(), descriptors)?;
            let branches = star_branches(&center, descriptors, step_width, max_steps)?;
            samples.push(Sample {
                sample_id: samples.len() as u64,
                star_id: star as u64,
                branch: None,
                step_offset: 0,
                vector: center,
            });
            for b in branches {
                samples.push(Sample {
                    sample_id: samples.len() as u64,
                    star_id: star as u64,
                    branch: Some(b.param),
                    step_offset: b.offset,
                    vector: b.vector,
                });
            }
        }
        Ok(SamplePlan {
            descriptors: descriptors.to_vec(),
            star_count: centers.len(),
            step_width,
            seed: None,
            max_steps,
            samples,
        })
    }

    pub fn sample(&self, sample_id: u64) -> Option<&Sample> {
        self.samples.get(sample_id as usize).filter(|s| s.sample_id == sample_id)
    }

    pub fn center(&self, star_id: u64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.star_id == star_id && s.is_center())
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }

    /// The center plus all branch samples of `param` for `star_id`, ordered
    /// by step offset.
    pub fn branch(&self, star_id: u64, param: usize) -> Vec<&Sample> {
        let mut members: Vec<&Sample> = self
            .samples
            .iter()
            .filter(|s| s.star_id == star_id && (s.branch.is_none() || s.branch == Some(param)))
            .collect();
        members.sort_by_key(|s| s.step_offset);
        members
    }

    /// Checks every structural invariant of the plan.
    pub fn validate(&self) -> Result<()> {
        validate_descriptors(&self.descriptors)?;
        check_step_width(self.step_width)?;
        let mut centers: BTreeMap<u64, &Sample> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            if s.sample_id != i as u64 {
                return Err(Error::input(format!("sample ids must be dense; found {} at {i}", s.sample_id)));
            }
            ParameterVector::new(s.vector.values().to_vec(), &self.descriptors)?;
            if s.is_center() && (s.step_offset != 0 || centers.insert(s.star_id, s).is_some()) {
                return Err(Error::input(format!("star {} has an invalid center", s.star_id)));
            }
        }
        if centers.len() != self.star_count {
            return Err(Error::input(format!(
                "expected {} star centers, found {}",
                self.star_count,
                centers.len()
            )));
        }
        for s in self.samples.iter().filter(|s| !s.is_center()) {
            let center = centers
                .get(&s.star_id)
                .ok_or_else(|| Error::input(format!("sample {} references unknown star {}", s.sample_id, s.star_id)))?;
            let p = s.branch.expect("branch sample");
            if p >= self.descriptors.len() || s.step_offset == 0 {
                return Err(Error::input(format!("sample {} has an invalid branch", s.sample_id)));
            }
            for (q, (a, b)) in s.vector.values().iter().zip(center.vector.values()).enumerate() {
                let d = &self.descriptors[q];
                let expected = if q == p {
                    (b + s.step_offset as f64 * self.step_width * d.range()).clamp(d.min, d.max)
                } else {
                    *b
                };
                if (a - expected).abs() > 1e-9 * d.range() {
                    return Err(Error::input(format!(
                        "sample {} deviates from its star center in parameter {}",
                        s.sample_id, d.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the plan file: `#` metadata lines (generator, settings and
    /// parameter ranges) followed by
    /// `sample_id,star_id,branch_param,step_offset,<param names...>`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::new();
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        let max_steps = self.max_steps.map_or("none".to_string(), |s| s.to_string());
        writeln!(
            out,
            "# paramsens-plan v1 generator={GENERATOR} seed={seed} stars={} step={} max_steps={max_steps}",
            self.star_count, self.step_width
        )
        .unwrap();
        for d in &self.descriptors {
            writeln!(out, "# param name={} min={} max={}", d.name, d.min, d.max).unwrap();
        }
        out.push_str("sample_id,star_id,branch_param,step_offset");
        for d in &self.descriptors {
            out.push(',');
            out.push_str(&d.name);
        }
        out.push('\n');
        for s in &self.samples {
            let branch = s.branch.map_or("", |p| self.descriptors[p].name.as_str());
            write!(out, "{},{},{},{}", s.sample_id, s.star_id, branch, s.step_offset).unwrap();
            for v in s.vector.values() {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let bad = |line: usize, reason: String| Error::Format {
            what: "plan file",
            line: line as u64,
            reason,
        };

        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut descriptors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else { continue };
            let mut fields = rest.split_whitespace();
            let kind = fields.next().unwrap_or_default();
            let kv: BTreeMap<&str, &str> = fields.filter_map(|f| f.split_once('=')).collect();
            match kind {
                "paramsens-plan" => meta.extend(kv.iter().map(|(k, v)| (k.to_string(), v.to_string()))),
                "param" => {
                    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(i + 1, format!("param line lacks `{k}`")));
                    let num = |k: &str| -> Result<f64> {
                        get(k)?.parse().map_err(|_| bad(i + 1, format!("bad `{k}` value")))
                    };
                    descriptors.push(ParameterDescriptor::new(get("name")?, num("min")?, num("max")?)?);
                }
                _ => {}
            }
        }
        let meta_num = |k: &str| -> Result<Option<String>> {
            match meta.get(k).map(String::as_str) {
                None => Err(bad(1, format!("plan metadata lacks `{k}`"))),
                Some("none") => Ok(None),
                Some(v) => Ok(Some(v.to_string())),
            }
        };
        let parse = |k: &str, v: Option<String>| -> Result<Option<f64>> {
            v.map(|v| v.parse::<f64>().map_err(|_| bad(1, format!("bad `{k}` value"))))
                .transpose()
        };
        let star_count = parse("stars", meta_num("stars")?)?.ok_or_else(|| bad(1, "stars is required".into()))? as usize;
        let step_width = parse("step", meta_num("step")?)?.ok_or_else(|| bad(1, "step is required".into()))?;
        let seed = meta_num("seed")?
            .map(|s| s.parse::<u64>().map_err(|_| bad(1, "bad seed".into())))
            .transpose()?;
        let max_steps = meta_num("max_steps")?
            .map(|s| s.parse::<u32>().map_err(|_| bad(1, "bad max_steps".into())))
            .transpose()?;

        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let expected: Vec<&str> = ["sample_id", "star_id", "branch_param", "step_offset"]
            .into_iter()
            .chain(descriptors.iter().map(|d| d.name.as_str()))
            .collect();
        if headers.iter().ne(expected.iter().copied()) {
            return Err(bad(0, format!("expected header `{}`", expected.join(","))));
        }
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| &record[i];
            let sample_id = field(0).parse().map_err(|_| bad(line, "bad sample_id".into()))?;
            let star_id = field(1).parse().map_err(|_| bad(line, "bad star_id".into()))?;
            let branch = match field(2) {
                "" => None,
                name => Some(
                    descriptors
                        .iter()
                        .position(|d| d.name == name)
                        .ok_or_else(|| bad(line, format!("unknown branch parameter `{name}`")))?,
                ),
            };
            let step_offset = field(3).parse().map_err(|_| bad(line, "bad step_offset".into()))?;
            let values = (4..record.len())
                .map(|i| field(i).parse::<f64>().map_err(|_| bad(line, format!("bad value `{}`", field(i)))))
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample {
                sample_id,
                star_id,
                branch,
                step_offset,
                vector: ParameterVector::new(values, &descriptors)?,
            });
        }
        let plan = SamplePlan {
            descriptors,
            star_count,
            step_width,
            seed,
            max_steps,
            samples,
        };
        plan.validate()?;
        Ok(plan)
    }
}
