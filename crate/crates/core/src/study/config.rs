//! Study configuration, read from TOML.
//!
//! ```toml
//! [study]
//! output = "study-out"          # collection directory, relative to the file
//!
//! [[parameter]]
//! name = "param1"
//! min = 0.0
//! max = 1.0
//!
//! [sampling]
//! stars = 10
//! step = 0.1
//! seed = 7
//!
//! [target]
//! kind = "synthetic"            # or "external"
//!
//! [analysis]
//! bins = 20
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dissimilarity::{DistributionMeasure, DEFAULT_POINTS, MIN_POINTS};
use crate::error::{Error, Result};
use crate::model::{validate_descriptors, ParameterDescriptor};
use crate::numfmt::format_sig17;
use crate::spatial::DEFAULT_DIMS;
use crate::synth::SynthConfig;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "PARAMSENS_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub study: StudySection,
    #[serde(rename = "parameter")]
    pub parameters: Vec<ParameterDescriptor>,
    pub sampling: SamplingSettings,
    pub target: Target,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub runner: RunnerSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub output: PathBuf,
    /// Defaults to `<output>/cache`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            output: PathBuf::from("study"),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSettings {
    pub stars: usize,
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
    pub max_steps: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Target {
    Synthetic(SyntheticTarget),
    External(ExternalTarget),
}

/// The built-in generator. Each named parameter is normalized to `[0, 1]`
/// over its declared range before driving the corresponding model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTarget {
    #[serde(default = "default_length_param")]
    pub length_param: String,
    #[serde(default = "default_diameter_param")]
    pub diameter_param: String,
    #[serde(default)]
    pub model: SynthConfig,
}

fn default_length_param() -> String {
    "param1".into()
}

fn default_diameter_param() -> String {
    "param2".into()
}

/// An external program run once per sample.
///
/// `command` is split on whitespace (no shell) and may use `{<param>}` for
/// every parameter exactly once, plus `{sample_id}` and `{output}`.
/// `output` names the file the program writes, relative to `workdir`, with
/// the same placeholders; by default the program writes `{output}`, the
/// result file inside the collection, directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalTarget {
    pub command: String,
    #[serde(default)]
    pub workdir: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<String>,
    /// Keep only fibers whose bounding box lies inside `[min, max]`.
    #[serde(default)]
    pub roi: Option<Roi>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub bins: usize,
    pub measure: DistributionMeasure,
    pub n_points: usize,
    pub regional_bins: usize,
    /// Worker threads for preprocessing; 0 uses all available cores.
    pub threads: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            bins: 20,
            measure: DistributionMeasure::JensenShannon,
            n_points: DEFAULT_POINTS,
            regional_bins: 10,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub dims: [usize; 3],
    /// Grid box; defaults to the bounds of all results (or the synthetic
    /// volume).
    pub bounds: Option<Roi>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            dims: DEFAULT_DIMS,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerSettings {
    /// Samples executed at once; 0 uses all available cores.
    pub concurrency: usize,
}

/// One piece of a parsed command template.
#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Param(usize),
    SampleId,
    Output,
}

/// A validated command or path template.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    words: Vec<Vec<Piece>>,
}

impl Template {
    /// Parses `text`; `require_all` demands every parameter exactly once.
    pub fn parse(text: &str, params: &[ParameterDescriptor], require_all: bool) -> Result<Self> {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut words = Vec::new();
        for word in text.split_whitespace() {
            let mut pieces = Vec::new();
            let mut rest = word;
            while let Some(open) = rest.find('{') {
                if open > 0 {
                    pieces.push(Piece::Text(rest[..open].into()));
                }
                let close = rest[open..]
                    .find('}')
                    .ok_or_else(|| Error::config(format!("unclosed `{{` in template `{text}`")))?;
                let name = &rest[open + 1..open + close];
                pieces.push(match name {
                    "sample_id" => Piece::SampleId,
                    "output" => Piece::Output,
                    _ => {
                        let i = params
                            .iter()
                            .position(|p| p.name == name)
                            .ok_or_else(|| Error::config(format!("unknown placeholder `{{{name}}}` in template `{text}`")))?;
                        *seen.entry(i).or_default() += 1;
                        Piece::Param(i)
                    }
                });
                rest = &rest[open + close + 1..];
            }
            if rest.contains('}') {
                return Err(Error::config(format!("stray `}}` in template `{text}`")));
            }
            if !rest.is_empty() {
                pieces.push(Piece::Text(rest.into()));
            }
            words.push(pieces);
        }
        if words.is_empty() {
            return Err(Error::config("empty template"));
        }
        for (i, p) in params.iter().enumerate() {
            match seen.get(&i).copied().unwrap_or(0) {
                0 if require_all => {
                    return Err(Error::config(format!("command template does not reference parameter `{}`", p.name)))
                }
                n if n > 1 => {
                    return Err(Error::config(format!("command template references parameter `{}` {n} times", p.name)))
                }
                _ => {}
            }
        }
        Ok(Template { words })
    }

    /// Renders the template into words; parameter values use 17
    /// significant digits.
    pub fn render(&self, values: &[f64], sample_id: u64, output: &Path) -> Vec<String> {
        self.words
            .iter()
            .map(|pieces| {
                pieces
                    .iter()
                    .map(|p| match p {
                        Piece::Text(t) => t.clone(),
                        Piece::Param(i) => format_sig17(values[*i]),
                        Piece::SampleId => sample_id.to_string(),
                        Piece::Output => output.display().to_string(),
                    })
                    .collect::<String>()
            })
            .collect()
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = StudyConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        self.study.output = resolve(&self.study.output);
        self.study.cache_dir = self.study.cache_dir.as_deref().map(resolve);
        if let Target::External(ext) = &mut self.target {
            ext.workdir = Some(resolve(ext.workdir.as_deref().unwrap_or(Path::new("."))));
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        validate_descriptors(&self.parameters)?;
        if self.sampling.stars == 0 {
            return Err(Error::config("sampling.stars must be at least 1"));
        }
        if !(self.sampling.step > 0.0 && self.sampling.step <= 0.5) {
            return Err(Error::config("sampling.step must lie in (0, 0.5]"));
        }
        let a = &self.analysis;
        if a.bins < 2 {
            return Err(Error::config("analysis.bins must be at least 2"));
        }
        if a.n_points < MIN_POINTS {
            return Err(Error::config(format!("analysis.n_points must be at least {MIN_POINTS}")));
        }
        if a.regional_bins == 0 {
            return Err(Error::config("analysis.regional_bins must be at least 1"));
        }
        if self.grid.dims.contains(&0) {
            return Err(Error::config("grid.dims must be at least 1 along every axis"));
        }
        for roi in self.grid.bounds.iter().chain(match &self.target {
            Target::External(e) => e.roi.as_ref(),
            Target::Synthetic(_) => None,
        }) {
            if (0..3).any(|i| roi.min[i].partial_cmp(&roi.max[i]) != Some(std::cmp::Ordering::Less)) {
                return Err(Error::config("box min must be below max on every axis"));
            }
        }
        match &self.target {
            Target::Synthetic(s) => {
                s.model.validate()?;
                let names: BTreeSet<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
                for n in [&s.length_param, &s.diameter_param] {
                    if !names.contains(n.as_str()) {
                        return Err(Error::config(format!("synthetic target refers to unknown parameter `{n}`")));
                    }
                }
                if s.length_param == s.diameter_param {
                    return Err(Error::config("length_param and diameter_param must differ"));
                }
            }
            Target::External(e) => {
                Template::parse(&e.command, &self.parameters, true)?;
                if let Some(out) = &e.output {
                    Template::parse(out, &self.parameters, false)?;
                }
            }
        }
        Ok(())
    }

    /// Cache directory: `PARAMSENS_CACHE`, then `study.cache_dir`, then
    /// `<output>/cache`.
    pub fn cache_dir(&self) -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.study.cache_dir.clone())
            .unwrap_or_else(|| self.study.output.join("cache"))
    }

    pub fn threads(&self) -> usize {
        resolve_threads(self.analysis.threads)
    }
}

pub(crate) fn resolve_threads(n: usize) -> usize {
    if n > 0 {
        n
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}
