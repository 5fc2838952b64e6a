//! Long-format fiber files: one row per vertex,
//! `fiber_id,vertex_index,x,y,z,radius`.
//!
//! Vertices of a fiber are contiguous and ordered by `vertex_index`
//! (starting at 0); the radius is repeated on every row and must be constant
//! per fiber. Characteristics are always derived, never read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Fiber, FiberResult};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

pub const HEADER: [&str; 6] = ["fiber_id", "vertex_index", "x", "y", "z", "radius"];

struct Pending {
    id: u64,
    radius: f64,
    vertices: Vec<Vec3>,
}

fn format_err(line: u64, reason: impl Into<String>) -> Error {
    Error::Format {
        what: "fiber file",
        line,
        reason: reason.into(),
    }
}

/// Reads a fiber result; when `roi` is given, only fibers whose bounding
/// box lies fully inside it are kept.
pub fn read_fiber_result<R: Read>(reader: R, result_id: u64, roi: Option<&Aabb>) -> Result<FiberResult> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(format_err(1, format!("expected header `{}`", HEADER.join(","))));
    }

    let mut fibers: Vec<Fiber> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut pending: Option<Pending> = None;
    let finish = |p: Pending, fibers: &mut Vec<Fiber>| -> Result<()> {
        let fiber = Fiber::new(p.id, p.vertices, p.radius)?;
        if roi.is_none_or(|b| b.contains_box(&fiber.bounding_box())) {
            fibers.push(fiber);
        }
        Ok(())
    };

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != HEADER.len() {
            return Err(format_err(line, format!("expected 6 fields, got {}", record.len())));
        }
        let int = |i: usize| -> Result<u64> {
            record[i]
                .parse()
                .map_err(|_| format_err(line, format!("`{}` is not a valid {}", &record[i], HEADER[i])))
        };
        let real = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format_err(line, format!("`{}` is not a valid {}", &record[i], HEADER[i])))
        };
        let id = int(0)?;
        let index = int(1)?;
        let vertex = Vec3::new(real(2)?, real(3)?, real(4)?);
        let radius = real(5)?;

        match pending.as_mut() {
            Some(p) if p.id == id => {
                if index != p.vertices.len() as u64 {
                    return Err(format_err(
                        line,
                        format!("fiber {id}: expected vertex_index {}, got {index}", p.vertices.len()),
                    ));
                }
                if radius != p.radius {
                    return Err(format_err(line, format!("fiber {id}: radius changes along the fiber")));
                }
                p.vertices.push(vertex);
            }
            _ => {
                if let Some(done) = pending.take() {
                    finish(done, &mut fibers)?;
                }
                if !seen.insert(id) {
                    return Err(format_err(line, format!("rows of fiber {id} are not contiguous")));
                }
                if index != 0 {
                    return Err(format_err(line, format!("fiber {id} must start at vertex_index 0")));
                }
                pending = Some(Pending {
                    id,
                    radius,
                    vertices: vec![vertex],
                });
            }
        }
    }
    if let Some(done) = pending.take() {
        finish(done, &mut fibers)?;
    }
    FiberResult::new(result_id, fibers)
}

pub fn read_fiber_file(path: &Path, result_id: u64, roi: Option<&Aabb>) -> Result<FiberResult> {
    let file = File::open(path)?;
    read_fiber_result(BufReader::new(file), result_id, roi)
}

pub fn write_fiber_result<W: Write>(writer: W, result: &FiberResult) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{}", HEADER.join(","))?;
    for fiber in result.fibers() {
        for (i, v) in fiber.vertices().iter().enumerate() {
            writeln!(w, "{},{},{},{},{},{}", fiber.id(), i, v.x, v.y, v.z, fiber.radius())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fiber_file(path: &Path, result: &FiberResult) -> Result<()> {
    write_fiber_result(File::create(path)?, result)
}
