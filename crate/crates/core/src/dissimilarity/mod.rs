//! Output differences: histogram distances per characteristic and
//! overlap-based best-match dissimilarity between fiber results.

mod histogram;
mod matching;
mod overlap;
mod tables;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use histogram::{build_histogram, global_range, hist_euclidean, jensen_shannon, per_bin_variation, Histogram};
pub use matching::{best_match, result_dissimilarity, BboxIndex, BestMatch, PreparedResult};
pub use overlap::{coverage_difference, fiber_dissimilarity, DEFAULT_POINTS, MIN_POINTS};
pub use tables::{branch_pairs, BinVariation, DissimilarityTables, PairRecord};

use crate::error::Error;
use crate::model::Characteristic;

/// Distance between two characteristic histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistributionMeasure {
    Euclidean,
    #[default]
    JensenShannon,
}

impl DistributionMeasure {
    pub fn name(self) -> &'static str {
        match self {
            DistributionMeasure::Euclidean => "euclidean",
            DistributionMeasure::JensenShannon => "jensen_shannon",
        }
    }
}

impl FromStr for DistributionMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "euclidean" => Ok(DistributionMeasure::Euclidean),
            "jensen_shannon" => Ok(DistributionMeasure::JensenShannon),
            _ => Err(Error::input(format!("unknown distribution measure `{s}`"))),
        }
    }
}

/// A variation measure between two results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeasureId {
    /// Distance between the histograms of one characteristic.
    Distribution(Characteristic, DistributionMeasure),
    /// Symmetrized mean best-match dissimilarity.
    BestMatch,
}

impl MeasureId {
    /// All distribution measures of one kind plus the best-match measure.
    pub fn all(kind: DistributionMeasure) -> Vec<MeasureId> {
        Characteristic::ALL
            .iter()
            .map(|&c| MeasureId::Distribution(c, kind))
            .chain([MeasureId::BestMatch])
            .collect()
    }

    pub fn characteristic(self) -> Option<Characteristic> {
        match self {
            MeasureId::Distribution(c, _) => Some(c),
            MeasureId::BestMatch => None,
        }
    }
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureId::Distribution(c, m) => write!(f, "{c}:{}", m.name()),
            MeasureId::BestMatch => f.write_str("best_match"),
        }
    }
}

impl FromStr for MeasureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "best_match" {
            return Ok(MeasureId::BestMatch);
        }
        let (c, m) = s.split_once(':').unwrap_or((s, "jensen_shannon"));
        Ok(MeasureId::Distribution(c.parse()?, m.parse()?))
    }
}

impl Serialize for MeasureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MeasureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
