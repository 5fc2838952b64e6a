//! Local, regional and global sensitivities and the in-out matrix.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissimilarity::{DissimilarityTables, DistributionMeasure, MeasureId};
use crate::error::{Error, Result};
use crate::model::Characteristic;
use crate::numfmt::format_sig17;
use crate::sampling::SamplePlan;

/// Variation between the outputs of two samples under a measure; `None`
/// when either output is unavailable.
pub trait VariationSource {
    fn variation(&self, measure: MeasureId, a: u64, b: u64) -> Option<f64>;
}

impl VariationSource for DissimilarityTables {
    fn variation(&self, measure: MeasureId, a: u64, b: u64) -> Option<f64> {
        match measure {
            MeasureId::Distribution(c, kind) => {
                let p = self.pair(a, b)?;
                Some(match kind {
                    DistributionMeasure::Euclidean => p.euclidean[c.index()],
                    DistributionMeasure::JensenShannon => p.jensen_shannon[c.index()],
                })
            }
            MeasureId::BestMatch => self.symmetric_dissimilarity(a, b),
        }
    }
}

/// One-parameter scalar model `f` evaluated at each sample's value of
/// `param`; variation is `|f(x_a) - f(x_b)| / (w * range)`.
pub struct ScalarTestbed<'a, F> {
    pub plan: &'a SamplePlan,
    pub param: usize,
    pub f: F,
}

impl<F: Fn(f64) -> f64> VariationSource for ScalarTestbed<'_, F> {
    fn variation(&self, _measure: MeasureId, a: u64, b: u64) -> Option<f64> {
        let xa = self.plan.sample(a)?.vector.get(self.param);
        let xb = self.plan.sample(b)?.vector.get(self.param);
        let step = self.plan.step_width * self.plan.descriptors[self.param].range();
        Some(((self.f)(xa) - (self.f)(xb)).abs() / step)
    }
}

/// Mean variation between a star center and its branch neighbors at step
/// offsets ±1. `None` when no such neighbor has an output.
pub fn local_sensitivity(
    plan: &SamplePlan,
    star_id: u64,
    param: usize,
    measure: MeasureId,
    src: &impl VariationSource,
) -> Option<f64> {
    let branch = plan.branch(star_id, param);
    let center = branch.iter().find(|s| s.is_center())?;
    let values: Vec<f64> = branch
        .iter()
        .filter(|s| s.step_offset.abs() == 1)
        .filter_map(|s| src.variation(measure, center.sample_id, s.sample_id))
        .collect();
    mean(&values)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean of the defined local values.
pub fn global_sensitivity(locals: impl IntoIterator<Item = f64>) -> Option<f64> {
    mean(&locals.into_iter().collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalBin {
    pub center: f64,
    /// `None` when no adjacent pair falls into the bin.
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalCurve {
    pub param: usize,
    pub measure: MeasureId,
    pub bins: Vec<RegionalBin>,
}

impl RegionalCurve {
    /// Bin center of the curve maximum. When the maximum spans several
    /// consecutive bins (a plateau), the middle of the first such run is
    /// reported, rounding toward the lower bin.
    pub fn peak(&self) -> Option<f64> {
        let max = self.bins.iter().filter_map(|b| b.mean).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))?;
        let first = self.bins.iter().position(|b| b.mean == Some(max))?;
        let run = self.bins[first..].iter().take_while(|b| b.mean == Some(max)).count();
        Some(self.bins[first + (run - 1) / 2].center)
    }
}

/// Step-normalized variation of every adjacent pair on every star branch
/// of `param`, attributed to the pair's midpoint and averaged in `bins`
/// equal-width bins over the parameter range.
pub fn regional_curve(
    plan: &SamplePlan,
    param: usize,
    measure: MeasureId,
    bins: usize,
    src: &impl VariationSource,
) -> Result<RegionalCurve> {
    if bins == 0 {
        return Err(Error::input("regional curves need at least one bin"));
    }
    let d = plan
        .descriptors
        .get(param)
        .ok_or_else(|| Error::input(format!("no parameter with index {param}")))?;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for star in star_ids(plan) {
        let branch = plan.branch(star, param);
        for w in branch.windows(2) {
            if w[1].step_offset != w[0].step_offset + 1 {
                continue;
            }
            let Some(v) = src.variation(measure, w[0].sample_id, w[1].sample_id) else { continue };
            let mid = 0.5 * (w[0].vector.get(param) + w[1].vector.get(param));
            let pos = ((mid - d.min) / d.range() * bins as f64).floor();
            let bin = if pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
            sums[bin] += v / plan.step_width;
            counts[bin] += 1;
        }
    }
    let width = d.range() / bins as f64;
    Ok(RegionalCurve {
        param,
        measure,
        bins: (0..bins)
            .map(|i| RegionalBin {
                center: d.min + (i as f64 + 0.5) * width,
                mean: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
                count: counts[i],
            })
            .collect(),
    })
}

fn star_ids(plan: &SamplePlan) -> BTreeSet<u64> {
    plan.samples.iter().map(|s| s.star_id).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalValue {
    pub star_id: u64,
    pub param: usize,
    pub measure: MeasureId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalValue {
    pub param: usize,
    pub measure: MeasureId,
    /// `None` when no star has a defined local value.
    pub value: Option<f64>,
}

/// Every sensitivity of a study for a set of measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityField {
    pub params: Vec<String>,
    pub measures: Vec<MeasureId>,
    pub local: Vec<LocalValue>,
    pub regional: Vec<RegionalCurve>,
    pub global: Vec<GlobalValue>,
}

impl SensitivityField {
    pub fn compute(
        plan: &SamplePlan,
        src: &(impl VariationSource + Sync),
        measures: &[MeasureId],
        regional_bins: usize,
    ) -> Result<Self> {
        let stars = star_ids(plan);
        let combos: Vec<(usize, MeasureId)> = (0..plan.descriptors.len())
            .flat_map(|p| measures.iter().map(move |&m| (p, m)))
            .collect();
        let parts = combos
            .par_iter()
            .map(|&(param, measure)| {
                let local: Vec<LocalValue> = stars
                    .iter()
                    .filter_map(|&star_id| {
                        local_sensitivity(plan, star_id, param, measure, src).map(|value| LocalValue {
                            star_id,
                            param,
                            measure,
                            value,
                        })
                    })
                    .collect();
                let global = GlobalValue {
                    param,
                    measure,
                    value: global_sensitivity(local.iter().map(|l| l.value)),
                };
                let curve = regional_curve(plan, param, measure, regional_bins, src)?;
                Ok((local, curve, global))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut field = SensitivityField {
            params: plan.descriptors.iter().map(|d| d.name.clone()).collect(),
            measures: measures.to_vec(),
            local: Vec::new(),
            regional: Vec::new(),
            global: Vec::new(),
        };
        for (local, curve, global) in parts {
            field.local.extend(local);
            field.regional.push(curve);
            field.global.push(global);
        }
        Ok(field)
    }

    pub fn global(&self, param: usize, measure: MeasureId) -> Option<f64> {
        self.global
            .iter()
            .find(|g| g.param == param && g.measure == measure)
            .and_then(|g| g.value)
    }

    pub fn local(&self, star_id: u64, param: usize, measure: MeasureId) -> Option<f64> {
        self.local
            .iter()
            .find(|l| l.star_id == star_id && l.param == param && l.measure == measure)
            .map(|l| l.value)
    }

    pub fn regional(&self, param: usize, measure: MeasureId) -> Option<&RegionalCurve> {
        self.regional.iter().find(|c| c.param == param && c.measure == measure)
    }

    /// Parameter indices by descending global sensitivity of `measure`,
    /// ties by index.
    pub fn order_by(&self, measure: MeasureId) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.params.len()).collect();
        let key = |p: usize| self.global(p, measure).unwrap_or(0.0);
        order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        order
    }

    /// Checks that all values are finite and nonnegative and that every
    /// global value is the mean of its locals.
    pub fn validate(&self) -> Result<()> {
        let bad = |v: f64| !(v.is_finite() && v >= 0.0);
        if self.local.iter().any(|l| bad(l.value))
            || self.regional.iter().flat_map(|c| &c.bins).filter_map(|b| b.mean).any(bad)
        {
            return Err(Error::input("sensitivity values must be finite and nonnegative"));
        }
        for g in &self.global {
            let locals = self.local.iter().filter(|l| l.param == g.param && l.measure == g.measure).map(|l| l.value);
            if global_sensitivity(locals) != g.value {
                return Err(Error::input(format!("global value of {} / {} is not the mean of its locals", g.param, g.measure)));
            }
        }
        Ok(())
    }

    /// Long-format CSV: `parameter,measure,scope,value` where scope is
    /// `star:<id>`, `GLOBAL` or `bin:<center>`. Absent values are omitted.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["parameter", "measure", "scope", "value"])?;
        for l in &self.local {
            out.write_record([&self.params[l.param], &l.measure.to_string(), &format!("star:{}", l.star_id), &format_sig17(l.value)])?;
        }
        for g in &self.global {
            if let Some(v) = g.value {
                out.write_record([&self.params[g.param], &g.measure.to_string(), "GLOBAL", &format_sig17(v)])?;
            }
        }
        for c in &self.regional {
            for b in &c.bins {
                if let Some(v) = b.mean {
                    out.write_record([&self.params[c.param], &c.measure.to_string(), &format!("bin:{}", format_sig17(b.center)), &format_sig17(v)])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Parameters × characteristics grid of global sensitivities, each column
/// divided by its maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InOutMatrix {
    pub kind: DistributionMeasure,
    /// Parameter indices in row order.
    pub rows: Vec<usize>,
    pub params: Vec<String>,
    pub characteristics: Vec<Characteristic>,
    pub raw: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
}

impl InOutMatrix {
    pub fn cell(&self, param: usize, c: Characteristic) -> Option<(f64, f64)> {
        let row = self.rows.iter().position(|&p| p == param)?;
        Some((self.raw[row][c.index()], self.normalized[row][c.index()]))
    }
}

/// In-out matrix for the distribution measure `kind`. Rows follow `order`
/// or, by default, descending global sensitivity of the StraightLength
/// distribution. Undefined global values count as 0.
pub fn in_out_matrix(field: &SensitivityField, kind: DistributionMeasure, order: Option<Vec<usize>>) -> Result<InOutMatrix> {
    let n = field.params.len();
    let rows = order.unwrap_or_else(|| field.order_by(MeasureId::Distribution(Characteristic::StraightLength, kind)));
    let mut sorted = rows.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::input("row order must be a permutation of the parameters"));
    }
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|&p| {
            Characteristic::ALL
                .iter()
                .map(|&c| field.global(p, MeasureId::Distribution(c, kind)).unwrap_or(0.0))
                .collect()
        })
        .collect();
    let col_max: Vec<f64> = (0..Characteristic::COUNT)
        .map(|c| raw.iter().map(|r| r[c]).fold(0.0, f64::max))
        .collect();
    let normalized = raw
        .iter()
        .map(|r| r.iter().zip(&col_max).map(|(v, m)| if *m > 0.0 { v / m } else { 0.0 }).collect())
        .collect();
    Ok(InOutMatrix {
        kind,
        params: rows.iter().map(|&p| field.params[p].clone()).collect(),
        rows,
        characteristics: Characteristic::ALL.to_vec(),
        raw,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParameterDescriptor, ParameterVector};
    use crate::synth::{gaussian, gaussian_derivative, GaussianOracle};
    use std::collections::HashMap;

    struct Table(HashMap<(u64, u64), f64>);

    impl VariationSource for Table {
        fn variation(&self, _m: MeasureId, a: u64, b: u64) -> Option<f64> {
            self.0.get(&(a.min(b), a.max(b))).copied()
        }
    }

    struct Constant(f64);

    impl VariationSource for Constant {
        fn variation(&self, _m: MeasureId, _a: u64, _b: u64) -> Option<f64> {
            Some(self.0)
        }
    }

    fn one_param_plan(center: f64, lo: f64, hi: f64, w: f64, max_steps: Option<u32>) -> SamplePlan {
        let d = vec![ParameterDescriptor::new("x", lo, hi).unwrap()];
        let c = ParameterVector::new(vec![center], &d).unwrap();
        SamplePlan::from_centers(&d, &[c], w, max_steps).unwrap()
    }

    const M: MeasureId = MeasureId::BestMatch;

    #[test]
    fn local_is_mean_of_immediate_neighbors() {
        let plan = one_param_plan(0.5, 0.0, 1.0, 0.25, None);
        // ids: 0 center, 1 (-2), 2 (-1), 3 (+1), 4 (+2)
        let table = Table(HashMap::from([((0, 2), 0.2), ((0, 3), 0.4), ((1, 2), 9.0)]));
        assert!((local_sensitivity(&plan, 0, 0, M, &table).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(local_sensitivity(&plan, 0, 0, M, &Constant(0.0)), Some(0.0));
        assert_eq!(local_sensitivity(&plan, 0, 0, M, &Table(HashMap::new())), None);
    }

    #[test]
    fn gaussian_local_matches_derivative() {
        let o = GaussianOracle::STANDARD;
        let plan = one_param_plan(1.0, 0.5, 1.5, 0.01, Some(1));
        let bed = ScalarTestbed { plan: &plan, param: 0, f: |x| gaussian(x, &o) };
        let est = local_sensitivity(&plan, 0, 0, M, &bed).unwrap();
        let exact = gaussian_derivative(1.0, &o).abs();
        assert!((exact - 0.24197).abs() < 1e-5);
        assert!((est - exact).abs() <= 0.01 * exact, "{est} vs {exact}");
    }

    #[test]
    fn regional_curve_of_gaussian_peaks_at_one_sigma() {
        let o = GaussianOracle::STANDARD;
        let d = vec![ParameterDescriptor::new("x", -3.0, 3.0).unwrap()];
        let centers: Vec<_> = [-2.0, 0.5, 2.5].iter().map(|&c| ParameterVector::new(vec![c], &d).unwrap()).collect();
        let plan = SamplePlan::from_centers(&d, &centers, 0.01, None).unwrap();
        let bed = ScalarTestbed { plan: &plan, param: 0, f: |x| gaussian(x, &o) };
        let curve = regional_curve(&plan, 0, M, 12, &bed).unwrap();
        let width = 0.5;
        let (lo, hi): (Vec<_>, Vec<_>) = curve.bins.iter().partition(|b| b.center < 0.0);
        let argmax = |bins: &[&RegionalBin]| bins.iter().max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap()).unwrap().center;
        assert!((argmax(&lo) + 1.0).abs() <= width);
        assert!((argmax(&hi) - 1.0).abs() <= width);
    }

    #[test]
    fn constant_pipeline_gives_zero_curve_and_matrix() {
        let plan = one_param_plan(0.5, 0.0, 1.0, 0.1, None);
        let curve = regional_curve(&plan, 0, M, 10, &Constant(0.0)).unwrap();
        assert!(curve.bins.iter().all(|b| b.mean == Some(0.0)));
        let field = SensitivityField::compute(&plan, &Constant(0.0), &MeasureId::all(DistributionMeasure::JensenShannon), 10).unwrap();
        let m = in_out_matrix(&field, DistributionMeasure::JensenShannon, None).unwrap();
        assert!(m.normalized.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn single_parameter_row_normalizes_to_one() {
        let plan = one_param_plan(0.5, 0.0, 1.0, 0.1, None);
        let field = SensitivityField::compute(&plan, &Constant(0.3), &MeasureId::all(DistributionMeasure::Euclidean), 10).unwrap();
        field.validate().unwrap();
        let m = in_out_matrix(&field, DistributionMeasure::Euclidean, None).unwrap();
        assert!(m.normalized[0].iter().all(|v| *v == 1.0));
    }

    #[test]
    fn empty_bins_are_absent() {
        let plan = one_param_plan(0.05, 0.0, 1.0, 0.05, Some(1));
        let curve = regional_curve(&plan, 0, M, 10, &Constant(1.0)).unwrap();
        assert_eq!(curve.bins[0].count, 2);
        assert!(curve.bins[5].mean.is_none());
    }

    #[test]
    fn plateau_peak_uses_middle_of_run() {
        let bins = |vals: &[Option<f64>]| RegionalCurve {
            param: 0,
            measure: M,
            bins: vals.iter().enumerate().map(|(i, &mean)| RegionalBin { center: i as f64, mean, count: 1 }).collect(),
        };
        assert_eq!(bins(&[Some(1.0), Some(3.0), Some(2.0)]).peak(), Some(1.0));
        assert_eq!(bins(&[Some(1.0), Some(3.0), Some(3.0), Some(3.0), None]).peak(), Some(2.0));
        assert_eq!(bins(&[Some(3.0), Some(3.0)]).peak(), Some(0.0));
        assert_eq!(bins(&[None, None]).peak(), None);
    }

    #[test]
    fn sensitivity_csv_layout() {
        let plan = one_param_plan(0.5, 0.0, 1.0, 0.25, None);
        let field = SensitivityField::compute(&plan, &Constant(0.5), &[M], 2).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "parameter,measure,scope,value");
        assert!(lines.contains(&"x,best_match,star:0,0.5"));
        assert!(lines.contains(&"x,best_match,GLOBAL,0.5"));
        assert!(lines.contains(&"x,best_match,bin:0.25,2"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        struct Scaled<'a>(&'a Table, f64);

        impl VariationSource for Scaled<'_> {
            fn variation(&self, m: MeasureId, a: u64, b: u64) -> Option<f64> {
                self.0.variation(m, a, b).map(|v| v * self.1)
            }
        }

        proptest! {
            #[test]
            fn matrix_is_scale_invariant(values in prop::collection::vec(0.0..1.0f64, 64), scale in 0.01..100.0f64) {
                let d = vec![ParameterDescriptor::new("a", 0.0, 1.0).unwrap(), ParameterDescriptor::new("b", 0.0, 1.0).unwrap()];
                let plan = crate::sampling::build_plan(&d, 3, 0.25, 4, None).unwrap();
                let mut table = HashMap::new();
                let mut it = values.iter().cycle();
                for s in &plan.samples {
                    for t in &plan.samples {
                        if s.sample_id < t.sample_id {
                            table.insert((s.sample_id, t.sample_id), *it.next().unwrap());
                        }
                    }
                }
                let table = Table(table);
                let measures = MeasureId::all(DistributionMeasure::JensenShannon);
                let f1 = SensitivityField::compute(&plan, &table, &measures, 4).unwrap();
                let f2 = SensitivityField::compute(&plan, &Scaled(&table, scale), &measures, 4).unwrap();
                f1.validate().unwrap();
                let m1 = in_out_matrix(&f1, DistributionMeasure::JensenShannon, Some(vec![0, 1])).unwrap();
                let m2 = in_out_matrix(&f2, DistributionMeasure::JensenShannon, Some(vec![0, 1])).unwrap();
                for (r1, r2) in m1.normalized.iter().zip(&m2.normalized) {
                    for (a, b) in r1.iter().zip(r2) {
                        prop_assert!((a - b).abs() < 1e-9);
                    }
                }
                prop_assert_eq!(f1.order_by(M), f2.order_by(M));
            }
        }
    }
}
