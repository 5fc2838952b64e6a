use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::cache::write_atomic;
use super::preprocess::Preprocessed;
use crate::dissimilarity::MeasureId;
use crate::error::Result;
use crate::model::Characteristic;
use crate::numfmt::format_sig17;
use crate::sensitivity::in_out_matrix;

pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const VOLUME_STEM: &str = "occupation";

/// Writes `sensitivity.csv` and the occupation volume into the collection.
pub fn write_analysis(pre: &Preprocessed) -> Result<Vec<PathBuf>> {
    let dir = &pre.collection.dir;
    let mut csv = Vec::new();
    pre.field.write_csv(&mut csv)?;
    let sens = dir.join(SENSITIVITY_FILE);
    write_atomic(&sens, &csv)?;
    let (raw, hdr) = pre.volume.write_raw(&dir.join(VOLUME_STEM))?;
    Ok(vec![sens, raw, hdr])
}

/// Static summary: in-out matrix, regional curves and embedding as CSV
/// plus a short text overview.
pub fn write_report(pre: &Preprocessed, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let cfg = &pre.collection.config;
    let kind = cfg.analysis.measure;
    let matrix = in_out_matrix(&pre.field, kind, None)?;
    let mut written = Vec::new();

    let mut w = csv::Writer::from_path(out.join("matrix.csv"))?;
    w.write_record(["parameter", "characteristic", "raw", "normalized"])?;
    for (row, name) in matrix.params.iter().enumerate() {
        for (col, c) in matrix.characteristics.iter().enumerate() {
            w.write_record([name, c.name(), &format_sig17(matrix.raw[row][col]), &format_sig17(matrix.normalized[row][col])])?;
        }
    }
    w.flush()?;
    written.push(out.join("matrix.csv"));

    let mut w = csv::Writer::from_path(out.join("regional.csv"))?;
    w.write_record(["parameter", "measure", "bin_center", "mean", "count"])?;
    for curve in &pre.field.regional {
        for b in &curve.bins {
            let mean = b.mean.map(format_sig17).unwrap_or_default();
            w.write_record([&pre.field.params[curve.param], &curve.measure.to_string(), &format_sig17(b.center), &mean, &b.count.to_string()])?;
        }
    }
    w.flush()?;
    written.push(out.join("regional.csv"));

    let mut w = csv::Writer::from_path(out.join("embedding.csv"))?;
    w.write_record(["result_id", "u", "v"])?;
    for (id, c) in pre.embedding.result_ids.iter().zip(&pre.embedding.coordinates) {
        w.write_record([id.to_string(), format_sig17(c[0]), format_sig17(c[1])])?;
    }
    w.flush()?;
    written.push(out.join("embedding.csv"));

    let m = &pre.collection.manifest;
    let mut s = String::new();
    writeln!(s, "# Sensitivity study summary\n").ok();
    writeln!(s, "- study digest: `{}`", m.study_digest).ok();
    writeln!(s, "- samples: {} ({} failed)", m.samples.len(), m.failed().count()).ok();
    writeln!(s, "- distribution measure: {}", kind.name()).ok();
    writeln!(s, "- MDS stress: {:.4}\n", pre.embedding.stress).ok();
    writeln!(s, "## Most influential parameter per characteristic\n").ok();
    for c in Characteristic::ALL {
        let col = c.index();
        if let Some(row) = (0..matrix.rows.len()).max_by(|&a, &b| matrix.raw[a][col].total_cmp(&matrix.raw[b][col]).then(b.cmp(&a))) {
            writeln!(s, "- {}: {} (global {:.4})", c.name(), matrix.params[row], matrix.raw[row][col]).ok();
        }
    }
    writeln!(s, "\n## Regional peaks\n").ok();
    for curve in pre.field.regional.iter().filter(|c| matches!(c.measure, MeasureId::Distribution(_, k) if k == kind)) {
        if let Some(peak) = curve.peak() {
            writeln!(s, "- {} x {}: {}", pre.field.params[curve.param], curve.measure, format_sig17(peak)).ok();
        }
    }
    if m.failed().count() > 0 {
        writeln!(s, "\n## Failed samples\n").ok();
        for r in m.failed() {
            writeln!(s, "- {}: {}", r.sample_id, r.message.as_deref().unwrap_or("")).ok();
        }
    }
    fs::write(out.join("summary.md"), s)?;
    written.push(out.join("summary.md"));
    Ok(written)
}
