//! Dense finite metrics: validation, restriction, scaling, shortest paths.

use crate::error::{Error, Result};
use crate::tol;

/// A finite metric on points `0..len()`, stored as a dense row-major matrix.
///
/// Construction enforces finite nonnegative entries, an exactly zero
/// diagonal, and exact symmetry. The triangle inequality is checked
/// separately by [`Metric::verify_triangle`] because it costs `O(N^3)`.
/// Zero distances between distinct points are allowed (colocated points).
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    n: usize,
    d: Vec<f64>,
}

impl Metric {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("metric matrix is not square"));
        }
        let mut d = Vec::with_capacity(n * n);
        for r in &rows {
            d.extend_from_slice(r);
        }
        let m = Metric { n, d };
        m.validate_basic()?;
        Ok(m)
    }

    pub fn from_flat(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::invalid(format!(
                "flat metric over {n} points needs {} entries, got {}",
                n * n,
                d.len()
            )));
        }
        let m = Metric { n, d };
        m.validate_basic()?;
        Ok(m)
    }

    fn validate_basic(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.d[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("metric diagonal entry {i} is nonzero")));
            }
            for j in 0..i {
                let dij = self.d[i * n + j];
                if !dij.is_finite() || dij < 0.0 {
                    return Err(Error::invalid(format!(
                        "metric entry ({i},{j}) = {dij} is not a finite nonnegative number"
                    )));
                }
                if dij != self.d[j * n + i] {
                    return Err(Error::invalid(format!(
                        "metric entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks `d(i,k) <= d(i,j) + d(j,k)` for all triples, with slack
    /// [`tol::EPS_TRIANGLE`]. `O(N^3)`.
    pub fn verify_triangle(&self) -> Result<()> {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                let dij = self.d[i * n + j];
                for k in 0..n {
                    if self.d[i * n + k] > dij + self.d[j * n + k] + tol::EPS_TRIANGLE {
                        return Err(Error::invalid(format!(
                            "triangle inequality fails on points ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.d[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    /// Metric induced on `ids[0], ids[1], ...` (ids need not be sorted; new
    /// point `k` is old point `ids[k]`).
    pub fn submetric(&self, ids: &[usize]) -> Metric {
        debug_assert!(ids.iter().all(|&i| i < self.n));
        let k = ids.len();
        let mut d = vec![0.0; k * k];
        for (a, &i) in ids.iter().enumerate() {
            for (b, &j) in ids.iter().enumerate() {
                d[a * k + b] = self.d[i * self.n + j];
            }
        }
        Metric { n: k, d }
    }

    /// All distances multiplied by `lambda > 0` (preserves metric axioms).
    pub fn scaled(&self, lambda: f64) -> Metric {
        Metric {
            n: self.n,
            d: self.d.iter().map(|&x| x * lambda).collect(),
        }
    }

    /// Smallest nonzero distance, or `None` if all pairs are colocated.
    pub fn min_positive_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.n {
            for j in 0..i {
                let dij = self.d[i * self.n + j];
                if dij > 0.0 && best.map_or(true, |b| dij < b) {
                    best = Some(dij);
                }
            }
        }
        best
    }

    pub fn max_distance(&self) -> f64 {
        self.d.iter().cloned().fold(0.0, f64::max)
    }
}

/// In-place all-pairs shortest paths on a flat `n x n` matrix; absent edges
/// are `f64::INFINITY`. Symmetric input yields symmetric output.
pub fn floyd_warshall(n: usize, d: &mut [f64]) {
    debug_assert_eq!(d.len(), n * n);
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
}
