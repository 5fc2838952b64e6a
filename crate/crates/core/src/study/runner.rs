use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{cache_key, sha256_hex, write_atomic};
use super::config::{resolve_threads, ExternalTarget, StudyConfig, Target, Template};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::model::fiber_io::{read_fiber_file, write_fiber_result};
use crate::model::FiberResult;
use crate::sampling::{build_plan, Sample, SamplePlan, GENERATOR};
use crate::synth::generate;

pub const CONFIG_FILE: &str = "study.toml";
pub const PLAN_FILE: &str = "plan.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_DIR: &str = "results";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u64,
    /// Digest of everything the sample's output depends on.
    pub key: String,
    pub status: SampleStatus,
    pub fibers: Option<usize>,
    /// Fibers asked of the synthetic generator, when it fell short.
    pub requested: Option<usize>,
    pub result_sha256: Option<String>,
    pub exit_status: Option<i32>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub study_digest: String,
    pub plan_sha256: String,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn ok_samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.status == SampleStatus::Ok)
    }

    pub fn failed(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.status == SampleStatus::Failed)
    }

    pub fn record(&self, sample_id: u64) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub collection: PathBuf,
    pub manifest: Manifest,
    pub executed: usize,
    pub reused: usize,
}

pub fn result_path(collection: &Path, sample_id: u64) -> PathBuf {
    collection.join(RESULTS_DIR).join(format!("{sample_id}.csv"))
}

/// Digest of the inputs that define a study's outputs (parameters,
/// sampling and target).
pub fn study_digest(cfg: &StudyConfig) -> Result<String> {
    cache_key("study", &(&cfg.parameters, &cfg.sampling, &cfg.target))
}

pub fn plan_for(cfg: &StudyConfig) -> Result<SamplePlan> {
    build_plan(
        &cfg.parameters,
        cfg.sampling.stars,
        cfg.sampling.step,
        cfg.sampling.seed,
        cfg.sampling.max_steps,
    )
}

fn sample_key(cfg: &StudyConfig, sample: &Sample) -> Result<String> {
    let values: Vec<String> = sample.vector.values().iter().map(|v| crate::numfmt::format_sig17(*v)).collect();
    cache_key("run", &(&cfg.target, &values, sample.sample_id))
}

struct Outcome {
    result: std::result::Result<(FiberResult, Option<usize>), Failure>,
}

struct Failure {
    exit_status: Option<i32>,
    message: String,
}

impl Failure {
    fn msg(message: impl Into<String>) -> Self {
        Failure {
            exit_status: None,
            message: message.into(),
        }
    }
}

fn run_synthetic(cfg: &StudyConfig, s: &super::config::SyntheticTarget, sample: &Sample) -> Outcome {
    let norm = |name: &str| {
        let i = cfg.parameters.iter().position(|p| p.name == name).expect("validated parameter name");
        cfg.parameters[i].normalize(sample.vector.get(i)).clamp(0.0, 1.0)
    };
    let result = generate(norm(&s.length_param), norm(&s.diameter_param), &s.model, sample.sample_id)
        .map_err(|e| Failure::msg(e.to_string()))
        .map(|o| {
            let short = (!o.is_complete()).then_some(o.requested);
            if let Some(req) = short {
                log::warn!("sample {}: placed {} of {req} fibers", sample.sample_id, o.achieved());
            }
            (o.result, short)
        });
    Outcome { result }
}

fn run_external(cfg: &StudyConfig, ext: &ExternalTarget, sample: &Sample, target_path: &Path) -> Outcome {
    let run = || -> std::result::Result<FiberResult, Failure> {
        let command = Template::parse(&ext.command, &cfg.parameters, true).map_err(|e| Failure::msg(e.to_string()))?;
        let words = command.render(sample.vector.values(), sample.sample_id, target_path);
        let workdir = ext.workdir.clone().unwrap_or_else(|| PathBuf::from("."));
        let produced = match &ext.output {
            Some(t) => {
                let t = Template::parse(t, &cfg.parameters, false).map_err(|e| Failure::msg(e.to_string()))?;
                workdir.join(t.render(sample.vector.values(), sample.sample_id, target_path).join(" "))
            }
            None => target_path.to_path_buf(),
        };
        let out = Command::new(&words[0])
            .args(&words[1..])
            .current_dir(&workdir)
            .output()
            .map_err(|e| Failure::msg(format!("cannot run `{}`: {e}", words[0])))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            let tail: String = stderr.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join("\n");
            return Err(Failure {
                exit_status: out.status.code(),
                message: format!("`{}` exited with {}: {tail}", words[0], out.status),
            });
        }
        let roi = ext.roi.map(|r| Aabb::new(Vec3::from(r.min), Vec3::from(r.max)));
        read_fiber_file(&produced, sample.sample_id, roi.as_ref()).map_err(|e| Failure::msg(format!("invalid output {}: {e}", produced.display())))
    };
    Outcome {
        result: run().map(|r| (r, None)),
    }
}

/// Runs the target for every sample of the study. Samples whose key and
/// result file are unchanged since the previous run are reused. Fails
/// with [`Error::StudyAborted`] when more than half of the samples fail;
/// the manifest is written either way.
pub fn run_study(cfg: &StudyConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.study.output.clone();
    fs::create_dir_all(dir.join(RESULTS_DIR))?;
    let plan = plan_for(cfg)?;
    let mut plan_bytes = Vec::new();
    plan.write_csv(&mut plan_bytes)?;
    write_if_changed(&dir.join(PLAN_FILE), &plan_bytes)?;
    let mut stored = cfg.clone();
    stored.study.output = PathBuf::from(".");
    write_if_changed(&dir.join(CONFIG_FILE), stored.to_toml()?.as_bytes())?;

    let previous: BTreeMap<u64, SampleRecord> = Manifest::load(&dir)
        .map(|m| m.samples.into_iter().map(|s| (s.sample_id, s)).collect())
        .unwrap_or_default();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(cfg.runner.concurrency))
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
    let records: Vec<(SampleRecord, bool)> = pool.install(|| {
        plan.samples
            .par_iter()
            .map(|sample| -> Result<(SampleRecord, bool)> {
                let key = sample_key(cfg, sample)?;
                let path = result_path(&dir, sample.sample_id);
                if let Some(prev) = previous.get(&sample.sample_id) {
                    let intact = prev.status == SampleStatus::Ok
                        && prev.key == key
                        && fs::read(&path).ok().map(|b| sha256_hex(&b)) == prev.result_sha256;
                    if intact {
                        return Ok((prev.clone(), false));
                    }
                }
                let outcome = match &cfg.target {
                    Target::Synthetic(s) => run_synthetic(cfg, s, sample),
                    Target::External(e) => run_external(cfg, e, sample, &path),
                };
                let record = match outcome.result {
                    Ok((result, requested)) => {
                        let mut bytes = Vec::new();
                        write_fiber_result(&mut bytes, &result)?;
                        write_atomic(&path, &bytes)?;
                        SampleRecord {
                            sample_id: sample.sample_id,
                            key,
                            status: SampleStatus::Ok,
                            fibers: Some(result.len()),
                            requested,
                            result_sha256: Some(sha256_hex(&bytes)),
                            exit_status: None,
                            message: None,
                        }
                    }
                    Err(f) => {
                        log::warn!("sample {} failed: {}", sample.sample_id, f.message);
                        let _ = fs::remove_file(&path);
                        SampleRecord {
                            sample_id: sample.sample_id,
                            key,
                            status: SampleStatus::Failed,
                            fibers: None,
                            requested: None,
                            result_sha256: None,
                            exit_status: f.exit_status,
                            message: Some(f.message),
                        }
                    }
                };
                Ok((record, true))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let executed = records.iter().filter(|(_, ran)| *ran).count();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        generator: GENERATOR.into(),
        study_digest: study_digest(cfg)?,
        plan_sha256: sha256_hex(&plan_bytes),
        samples: records.into_iter().map(|(r, _)| r).collect(),
    };
    write_if_changed(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;

    let failed = manifest.failed().count();
    let total = manifest.samples.len();
    if failed > 0 {
        log::warn!("{failed} of {total} samples failed and are excluded from analysis");
    }
    if failed * 2 > total {
        return Err(Error::StudyAborted { failed, total });
    }
    Ok(RunSummary {
        collection: dir,
        executed,
        reused: total - executed,
        manifest,
    })
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if fs::read(path).ok().as_deref() != Some(bytes) {
        write_atomic(path, bytes)?;
    }
    Ok(())
}
