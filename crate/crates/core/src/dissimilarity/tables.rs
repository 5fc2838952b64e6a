use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{build_histogram, global_range, hist_euclidean, jensen_shannon, per_bin_variation, Histogram};
use super::matching::{BestMatch, PreparedResult};
use crate::error::{Error, Result};
use crate::model::{Characteristic, FiberResult};
use crate::sampling::SamplePlan;

type PerCharacteristic = [f64; Characteristic::COUNT];

/// Differences between two results adjacent on a star branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    /// Sample with the lower step offset.
    pub a: u64,
    pub b: u64,
    pub euclidean: PerCharacteristic,
    pub jensen_shannon: PerCharacteristic,
    /// Best matches of `a`'s fibers in `b`.
    pub matches_ab: Vec<BestMatch>,
    /// Best matches of `b`'s fibers in `a`.
    pub matches_ba: Vec<BestMatch>,
}

/// Per-bin variation of one characteristic between a star center and its
/// immediate neighbors on one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinVariation {
    pub star_id: u64,
    pub param: usize,
    pub characteristic: Characteristic,
    pub values: Vec<f64>,
}

/// All output differences of a study: histograms and histogram distances,
/// best matches along star branches, per-bin variations and the full
/// ordered result dissimilarity matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissimilarityTables {
    pub bin_count: usize,
    pub n_points: usize,
    /// Results that produced output, ascending. Rows and columns of
    /// `result_dissimilarity` follow this order.
    pub result_ids: Vec<u64>,
    /// Global histogram range per characteristic.
    pub ranges: Vec<(f64, f64)>,
    pub histograms: BTreeMap<u64, Vec<Histogram>>,
    pub pairs: Vec<PairRecord>,
    pub per_bin_variation: Vec<BinVariation>,
    /// `result_dissimilarity[i][j]`: mean best-match dissimilarity of result
    /// `result_ids[i]` against `result_ids[j]`.
    pub result_dissimilarity: Vec<Vec<f64>>,
    #[serde(skip)]
    pair_lookup: HashMap<(u64, u64), usize>,
    #[serde(skip)]
    position: HashMap<u64, usize>,
}

/// Pairs of samples adjacent on some star branch, both with a result,
/// ordered by step offset within the pair.
pub fn branch_pairs(plan: &SamplePlan, available: impl Fn(u64) -> bool) -> Vec<(u64, u64)> {
    let mut pairs = Vec::new();
    let stars: std::collections::BTreeSet<u64> = plan.samples.iter().map(|s| s.star_id).collect();
    for star in stars {
        for param in 0..plan.descriptors.len() {
            let branch = plan.branch(star, param);
            for w in branch.windows(2) {
                if w[1].step_offset == w[0].step_offset + 1 && available(w[0].sample_id) && available(w[1].sample_id) {
                    pairs.push((w[0].sample_id, w[1].sample_id));
                }
            }
        }
    }
    pairs
}

impl DissimilarityTables {
    /// Computes every table for the results of `plan` present in `results`
    /// (keyed by sample id). Runs on the current rayon pool.
    pub fn compute(
        plan: &SamplePlan,
        results: &BTreeMap<u64, FiberResult>,
        bin_count: usize,
        n_points: usize,
    ) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::input("n_points must be positive"));
        }
        for id in results.keys() {
            if plan.sample(*id).is_none() {
                return Err(Error::input(format!("result {id} has no sample in the plan")));
            }
        }
        let result_ids: Vec<u64> = results.keys().copied().collect();

        let ranges: Vec<(f64, f64)> = Characteristic::ALL
            .iter()
            .map(|&c| global_range(results.values().flat_map(|r| r.values(c))).unwrap_or((0.0, 1.0)))
            .collect();
        let histograms: BTreeMap<u64, Vec<Histogram>> = results
            .iter()
            .map(|(&id, r)| {
                let hs = Characteristic::ALL
                    .iter()
                    .map(|&c| build_histogram(&r.values(c).collect::<Vec<_>>(), bin_count, ranges[c.index()]))
                    .collect::<Result<Vec<_>>>()?;
                Ok((id, hs))
            })
            .collect::<Result<_>>()?;

        let prepared: Vec<PreparedResult<'_>> = results
            .values()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|r| PreparedResult::new(r, n_points))
            .collect();
        let result_dissimilarity: Vec<Vec<f64>> = (0..prepared.len())
            .into_par_iter()
            .map(|i| {
                (0..prepared.len())
                    .map(|j| if i == j { 0.0 } else { prepared[i].dissimilarity_to(&prepared[j]) })
                    .collect()
            })
            .collect();

        let position: HashMap<u64, usize> = result_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let pair_ids = branch_pairs(plan, |id| results.contains_key(&id));
        let pairs = pair_ids
            .par_iter()
            .map(|&(a, b)| {
                let (ha, hb) = (&histograms[&a], &histograms[&b]);
                let mut euclidean = [0.0; Characteristic::COUNT];
                let mut js = [0.0; Characteristic::COUNT];
                for c in 0..Characteristic::COUNT {
                    euclidean[c] = hist_euclidean(&ha[c], &hb[c])?;
                    js[c] = jensen_shannon(&ha[c], &hb[c])?;
                }
                let (pa, pb) = (&prepared[position[&a]], &prepared[position[&b]]);
                Ok(PairRecord {
                    a,
                    b,
                    euclidean,
                    jensen_shannon: js,
                    matches_ab: pa.best_matches(pb),
                    matches_ba: pb.best_matches(pa),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut per_bin = Vec::new();
        let centers = plan.samples.iter().filter(|s| s.is_center());
        for center in centers {
            let Some(ch) = histograms.get(&center.sample_id) else { continue };
            for param in 0..plan.descriptors.len() {
                let neighbors: Vec<u64> = plan
                    .branch(center.star_id, param)
                    .into_iter()
                    .filter(|s| s.step_offset.abs() == 1 && histograms.contains_key(&s.sample_id))
                    .map(|s| s.sample_id)
                    .collect();
                if neighbors.is_empty() {
                    continue;
                }
                for c in Characteristic::ALL {
                    let mut series = vec![ch[c.index()].clone()];
                    series.extend(neighbors.iter().map(|n| histograms[n][c.index()].clone()));
                    per_bin.push(BinVariation {
                        star_id: center.star_id,
                        param,
                        characteristic: c,
                        values: per_bin_variation(&series)?,
                    });
                }
            }
        }

        let mut tables = DissimilarityTables {
            bin_count,
            n_points,
            result_ids,
            ranges,
            histograms,
            pairs,
            per_bin_variation: per_bin,
            result_dissimilarity,
            pair_lookup: HashMap::new(),
            position: HashMap::new(),
        };
        tables.reindex();
        Ok(tables)
    }

    /// Rebuilds lookup indices; needed after deserialization.
    pub fn reindex(&mut self) {
        self.pair_lookup = self.pairs.iter().enumerate().map(|(i, p)| ((p.a, p.b), i)).collect();
        self.position = self.result_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    }

    pub fn pair(&self, a: u64, b: u64) -> Option<&PairRecord> {
        self.pair_lookup
            .get(&(a, b))
            .or_else(|| self.pair_lookup.get(&(b, a)))
            .map(|&i| &self.pairs[i])
    }

    /// Ordered mean best-match dissimilarity of `a` against `b`.
    pub fn result_dissimilarity(&self, a: u64, b: u64) -> Option<f64> {
        Some(self.result_dissimilarity[*self.position.get(&a)?][*self.position.get(&b)?])
    }

    /// `(d(a,b) + d(b,a)) / 2`.
    pub fn symmetric_dissimilarity(&self, a: u64, b: u64) -> Option<f64> {
        Some(0.5 * (self.result_dissimilarity(a, b)? + self.result_dissimilarity(b, a)?))
    }

    /// Symmetrized dissimilarity matrix over `result_ids`.
    pub fn symmetric_matrix(&self) -> Vec<Vec<f64>> {
        let d = &self.result_dissimilarity;
        (0..d.len())
            .map(|i| (0..d.len()).map(|j| 0.5 * (d[i][j] + d[j][i])).collect())
            .collect()
    }

    pub fn histogram(&self, result: u64, c: Characteristic) -> Option<&Histogram> {
        self.histograms.get(&result).map(|h| &h[c.index()])
    }

    /// Element-wise mean histogram of `c` over all non-empty results.
    pub fn average_histogram(&self, c: Characteristic) -> Vec<f64> {
        let mut acc = vec![0.0; self.bin_count];
        let mut n = 0usize;
        for hs in self.histograms.values().filter(|h| !h[c.index()].is_empty()) {
            for (a, f) in acc.iter_mut().zip(&hs[c.index()].frequencies) {
                *a += f;
            }
            n += 1;
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }

    /// Checks the table invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::input(format!("dissimilarity tables: {what}")));
        let n = self.result_ids.len();
        if self.result_dissimilarity.len() != n || self.result_dissimilarity.iter().any(|r| r.len() != n) {
            return bad("matrix shape does not match result count");
        }
        for (i, row) in self.result_dissimilarity.iter().enumerate() {
            if row[i] != 0.0 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad("result dissimilarity outside [0, 1] or nonzero diagonal");
            }
        }
        for p in &self.pairs {
            let finite = p.euclidean.iter().chain(&p.jensen_shannon).all(|v| v.is_finite());
            let s_ok = p.matches_ab.iter().chain(&p.matches_ba).all(|m| (0.0..=1.0).contains(&m.s));
            if !finite || !s_ok {
                return bad("pair values out of range");
            }
        }
        Ok(())
    }
}
