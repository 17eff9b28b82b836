use std::path::Path;

use crate::error::{Error, Result};
use crate::store::{self, Reader, Writer, KIND_MATRIX};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// New matrix holding the given rows in order.
    pub fn select_rows(&self, idx: &[u32]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i as usize));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn write_body(&self, w: &mut Writer) {
        w.u64(self.rows as u64);
        w.u64(self.cols as u64);
        w.f64s(&self.data);
    }

    pub(crate) fn read_body(r: &mut Reader<'_>) -> Result<Self> {
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Corrupt("matrix dims overflow".into()))?;
        let data = r.f64s(n)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KIND_MATRIX);
        self.write_body(&mut w);
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        store::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = store::read_file(path)?;
        let mut r = Reader::open(&bytes, KIND_MATRIX)?;
        let m = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(m)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn by_score_then_ordinal(a: &(u32, f64), b: &(u32, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Rows of `m` scored by dot product with row `anchor`, the anchor itself
/// excluded, best first; ties by ascending row. Only the first `k` entries
/// are returned (exact).
pub fn top_k_by_dot(m: &Matrix, anchor: usize, k: usize) -> Vec<(u32, f64)> {
    let q = m.row(anchor);
    let mut scored: Vec<(u32, f64)> = (0..m.rows())
        .filter(|&i| i != anchor)
        .map(|i| (i as u32, dot(q, m.row(i))))
        .collect();
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_score_then_ordinal);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_score_then_ordinal);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_matches_full_sort_and_ties() {
        let m = Matrix::from_rows(
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5], vec![2.0, 0.0], vec![-1.0, 0.0]],
            2,
        )
        .unwrap();
        let full = top_k_by_dot(&m, 0, 10);
        assert_eq!(full.iter().map(|x| x.0).collect::<Vec<_>>(), vec![3, 1, 2, 4]);
        assert_eq!(top_k_by_dot(&m, 0, 2), full[..2].to_vec());
        assert!(top_k_by_dot(&m, 0, 0).is_empty());
    }

    #[test]
    fn persist() {
        let m = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.5, 0.0, f64::MIN_POSITIVE, 7.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.save(&p).unwrap();
        assert_eq!(Matrix::load(&p).unwrap(), m);
        assert_eq!(m.select_rows(&[1]).row(0), m.row(1));
    }
}
