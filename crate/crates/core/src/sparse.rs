//! Compressed sparse rows and an envelope (skyline) Cholesky factorization.
//!
//! Meshes are numbered ring by ring or row by row, so the envelope stays
//! narrow and no fill-reducing reordering is needed.

use crate::error::{LabError, Result};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds a matrix from triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|p| self.vals[p] * x[self.cols[p]])
                    .sum()
            })
            .collect()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Csr, b: f64) -> Csr {
        let mut trip = Vec::with_capacity(self.vals.len() + other.vals.len());
        for (m, s) in [(self, a), (other, b)] {
            for i in 0..m.n {
                for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                    trip.push((i, m.cols[p], s * m.vals[p]));
                }
            }
        }
        Csr::from_triplets(self.n, &trip)
    }

    pub fn dot_form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Lower-triangular Cholesky factor stored row-wise over the matrix envelope.
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &Csr) -> Result<EnvelopeCholesky> {
        let n = a.n;
        let mut first = Vec::with_capacity(n);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut f = i;
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                f = f.min(a.cols[p]);
            }
            first.push(f);
            let mut row = vec![0.0; i - f + 1];
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[p];
                if j <= i {
                    row[j - f] = a.vals[p];
                }
            }
            rows.push(row);
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let (done, rest) = rows.split_at_mut(i);
                let rj = &done[j];
                let ri = &mut rest[0];
                let mut s = ri[j - fi];
                for k in start..j {
                    s -= ri[k - fi] * rj[k - fj];
                }
                ri[j - fi] = s / rj[j - fj];
            }
            let ri = &mut rows[i];
            let mut d = ri[i - fi];
            for k in fi..i {
                d -= ri[k - fi] * ri[k - fi];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LabError::NotPositiveDefinite { row: i });
            }
            ri[i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { first, rows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let r = &self.rows[i];
            let mut s = y[i];
            for k in fi..i {
                s -= r[k - fi] * y[k];
            }
            y[i] = s / r[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let r = &self.rows[i];
            y[i] /= r[i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= r[k - fi] * yi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, &t);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(EnvelopeCholesky::factor(&a).is_err());
    }
}
