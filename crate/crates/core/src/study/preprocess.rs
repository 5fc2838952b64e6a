use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{cache_key, sha256_hex, Cache, CacheStatus};
use super::config::{resolve_threads, StudyConfig, Target};
use super::runner::{result_path, Manifest, CONFIG_FILE, PLAN_FILE};
use crate::dissimilarity::{DissimilarityTables, DistributionMeasure, MeasureId};
use crate::embedding::{mds, Embedding2D};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::model::fiber_io::read_fiber_result;
use crate::model::FiberResult;
use crate::sampling::SamplePlan;
use crate::sensitivity::SensitivityField;
use crate::spatial::{occupation_ratio, GridSpec, VoxelGrid};

/// A finished study on disk: configuration, plan and manifest.
#[derive(Debug, Clone)]
pub struct Collection {
    pub dir: PathBuf,
    pub config: StudyConfig,
    pub plan: SamplePlan,
    pub manifest: Manifest,
}

impl Collection {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut config = StudyConfig::load(&dir.join(CONFIG_FILE))?;
        config.study.output = dir.to_path_buf();
        let plan = SamplePlan::read_csv(fs::File::open(dir.join(PLAN_FILE))?)?;
        let manifest = Manifest::load(dir)?;
        if manifest.samples.len() != plan.samples.len() {
            return Err(Error::input("manifest and plan disagree on the sample count"));
        }
        Ok(Collection {
            dir: dir.to_path_buf(),
            config,
            plan,
            manifest,
        })
    }

    /// Successful results, verified against the manifest digests.
    pub fn load_results(&self) -> Result<BTreeMap<u64, FiberResult>> {
        let records: Vec<_> = self.manifest.ok_samples().collect();
        records
            .par_iter()
            .map(|r| {
                let bytes = fs::read(result_path(&self.dir, r.sample_id))?;
                if Some(sha256_hex(&bytes)) != r.result_sha256 {
                    return Err(Error::input(format!("result {} changed since the study ran", r.sample_id)));
                }
                Ok((r.sample_id, read_fiber_result(bytes.as_slice(), r.sample_id, None)?))
            })
            .collect()
    }

    /// Digests identifying the collection's inputs to analysis.
    fn inputs_material(&self) -> (String, Vec<(u64, String)>) {
        (
            self.manifest.plan_sha256.clone(),
            self.manifest
                .ok_samples()
                .map(|r| (r.sample_id, r.result_sha256.clone().unwrap_or_default()))
                .collect(),
        )
    }

    pub fn cache(&self) -> Result<Cache> {
        Cache::open(&self.config.cache_dir())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactInfo {
    pub kind: String,
    pub key: String,
    pub status: CacheStatus,
    pub payload_sha256: String,
}

/// Everything derived from a collection.
#[derive(Debug)]
pub struct Preprocessed {
    pub collection: Collection,
    pub results: BTreeMap<u64, FiberResult>,
    pub tables: DissimilarityTables,
    pub field: SensitivityField,
    pub embedding: Embedding2D,
    pub volume: VoxelGrid,
    pub artifacts: Vec<ArtifactInfo>,
}

/// Measures kept in the sensitivity field: both distribution measures per
/// characteristic plus best match.
pub fn field_measures() -> Vec<MeasureId> {
    let mut m = MeasureId::all(DistributionMeasure::JensenShannon);
    m.extend(MeasureId::all(DistributionMeasure::Euclidean).into_iter().filter(|m| *m != MeasureId::BestMatch));
    m
}

/// Grid geometry: configured bounds, else the synthetic volume, else the
/// bounds of all fibers.
pub fn grid_for(config: &StudyConfig, results: &BTreeMap<u64, FiberResult>) -> Result<GridSpec> {
    let bounds = match (&config.grid.bounds, &config.target) {
        (Some(b), _) => Aabb::new(Vec3::from(b.min), Vec3::from(b.max)),
        (None, Target::Synthetic(s)) => s.model.volume(),
        (None, Target::External(_)) => results
            .values()
            .filter_map(FiberResult::bounds)
            .reduce(|a, b| a.union(&b))
            .unwrap_or_else(|| Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0))),
    };
    GridSpec::covering(&bounds, config.grid.dims)
}

/// Computes or loads every derived artifact on a pool of `threads`
/// workers (0 = all cores). Each artifact has its own cache key, so a
/// missing or corrupt entry only recomputes that artifact.
pub fn preprocess(collection: Collection, threads: usize) -> Result<Preprocessed> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(threads))
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| preprocess_inner(collection))
}

fn preprocess_inner(collection: Collection) -> Result<Preprocessed> {
    let cache = collection.cache()?;
    let results = collection.load_results()?;
    let failed: Vec<u64> = collection.manifest.failed().map(|r| r.sample_id).collect();
    if !failed.is_empty() {
        log::warn!("excluding failed samples {failed:?}");
    }
    let a = &collection.config.analysis;
    let inputs = collection.inputs_material();
    let mut artifacts = Vec::new();
    let mut track = |kind: &str, key: &str, status: CacheStatus| {
        let payload = fs::read(cache.payload_path(kind, key)).map(|b| sha256_hex(&b)).unwrap_or_default();
        log::info!("{kind}: {status:?}");
        artifacts.push(ArtifactInfo {
            kind: kind.into(),
            key: key.into(),
            status,
            payload_sha256: payload,
        });
    };

    let tables_key = cache_key("tables", &(&inputs, a.bins, a.n_points))?;
    let (mut tables, status) = cache.get_or_compute("tables", &tables_key, || {
        DissimilarityTables::compute(&collection.plan, &results, a.bins, a.n_points)
    })?;
    tables.reindex();
    track("tables", &tables_key, status);

    let measures = field_measures();
    let field_key = cache_key("sensitivity", &(&tables_key, &measures, a.regional_bins))?;
    let (field, status) = cache.get_or_compute("sensitivity", &field_key, || {
        SensitivityField::compute(&collection.plan, &tables, &measures, a.regional_bins)
    })?;
    track("sensitivity", &field_key, status);

    let embedding_key = cache_key("embedding", &tables_key)?;
    let (embedding, status) = cache.get_or_compute("embedding", &embedding_key, || {
        mds(&tables.symmetric_matrix(), &tables.result_ids)
    })?;
    track("embedding", &embedding_key, status);

    let grid = grid_for(&collection.config, &results)?;
    let volume_key = cache_key("occupation", &(&inputs, &grid))?;
    let (volume, status) = cache.get_or_compute("occupation", &volume_key, || {
        if results.is_empty() {
            Ok(VoxelGrid::zeros(grid.clone()))
        } else {
            occupation_ratio(results.values().collect::<Vec<_>>(), &grid)
        }
    })?;
    track("occupation", &volume_key, status);

    Ok(Preprocessed {
        collection,
        results,
        tables,
        field,
        embedding,
        volume,
        artifacts,
    })
}
