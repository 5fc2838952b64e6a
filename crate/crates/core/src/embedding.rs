//! Classical MDS of results into the plane.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub result_ids: Vec<u64>,
    /// `(u, v)` per result, aligned with `result_ids`.
    pub coordinates: Vec<[f64; 2]>,
    /// Kruskal stress-1 of the embedded distances against the input.
    pub stress: f64,
    /// Set for fewer than 3 results, where a fixed layout is used.
    pub degenerate: bool,
}

impl Embedding2D {
    pub fn coordinate(&self, result_id: u64) -> Option<[f64; 2]> {
        let i = self.result_ids.iter().position(|&r| r == result_id)?;
        Some(self.coordinates[i])
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coordinates[i], self.coordinates[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

fn check_matrix(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    let scale = d.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::input("distance matrix must be square"));
        }
        if row[i] != 0.0 {
            return Err(Error::input("distance matrix must have a zero diagonal"));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::input("distances must be finite and nonnegative"));
            }
            if (v - d[j][i]).abs() > 1e-12 * scale {
                return Err(Error::input("distance matrix must be symmetric"));
            }
        }
    }
    Ok(())
}

/// Kruskal stress-1 between input distances and embedded distances.
pub fn stress(d: &[Vec<f64>], coordinates: &[[f64; 2]]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            let (a, b) = (coordinates[i], coordinates[j]);
            let e = (a[0] - b[0]).hypot(a[1] - b[1]);
            num += (d[i][j] - e).powi(2);
            den += d[i][j].powi(2);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Classical MDS: double-centered squared distances, top two eigenpairs,
/// negative eigenvalues truncated to zero. Each axis is oriented so that
/// the first result with a non-negligible coordinate on it is positive.
/// With fewer than 3 results the layout is fixed: a single result at the
/// origin, two results at `(-0.5, 0)` and `(0.5, 0)`.
pub fn mds(distances: &[Vec<f64>], result_ids: &[u64]) -> Result<Embedding2D> {
    check_matrix(distances)?;
    let n = distances.len();
    if result_ids.len() != n {
        return Err(Error::input("one result id per matrix row is required"));
    }
    if n < 3 {
        let coordinates = match n {
            0 => vec![],
            1 => vec![[0.0, 0.0]],
            _ => vec![[-0.5, 0.0], [0.5, 0.0]],
        };
        return Ok(Embedding2D {
            result_ids: result_ids.to_vec(),
            stress: stress(distances, &coordinates),
            coordinates,
            degenerate: true,
        });
    }

    let sq = DMatrix::from_fn(n, n, |i, j| distances[i][j] * distances[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let total = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let top = eig.eigenvalues[order[0]].abs();
    let mut coordinates = vec![[0.0; 2]; n];
    let scale = distances.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    for (axis, &k) in order.iter().take(2).enumerate() {
        // Eigenvalues at rounding level of the largest one are treated as 0.
        let lambda = if eig.eigenvalues[k] > 1e-12 * top { eig.eigenvalues[k] } else { 0.0 };
        let column = eig.eigenvectors.column(k);
        let mut values: Vec<f64> = column.iter().map(|v| v * lambda.sqrt()).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        let tiny = 1e-9 * scale.max(f64::MIN_POSITIVE);
        let flip = values.iter().find(|v| v.abs() > tiny).is_some_and(|v| *v < 0.0);
        for (c, v) in coordinates.iter_mut().zip(values) {
            let v = if flip { -v } else { v };
            c[axis] = if v.abs() <= tiny { 0.0 } else { v };
        }
    }
    Ok(Embedding2D {
        result_ids: result_ids.to_vec(),
        stress: stress(distances, &coordinates),
        coordinates,
        degenerate: false,
    })
}
