//! Dense row-major `f64` matrices and the handful of products the model
//! needs. Loops are ordered so the innermost dimension walks contiguous
//! memory.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn same_shape(&self, other: &Mat) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self + other`, element-wise.
    pub fn add(&self, other: &Mat) -> Mat {
        debug_assert!(self.same_shape(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Mat::from_vec(self.rows, self.cols, data)
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self * b` into a fresh matrix.
    pub fn matmul(&self, b: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, b.cols);
        out.add_matmul(self, b);
        out
    }

    /// `self += a * b`.
    pub fn add_matmul(&mut self, a: &Mat, b: &Mat) {
        debug_assert_eq!(a.cols, b.rows);
        debug_assert_eq!(self.rows, a.rows);
        debug_assert_eq!(self.cols, b.cols);
        let n = b.cols;
        for i in 0..a.rows {
            let arow = a.row(i);
            let crow = &mut self.data[i * n..(i + 1) * n];
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = b.row(k);
                for j in 0..n {
                    crow[j] += aik * brow[j];
                }
            }
        }
    }

    /// `self += aᵀ * b` where `a` is stored untransposed (k×m, b: k×n).
    pub fn add_matmul_tn(&mut self, a: &Mat, b: &Mat) {
        debug_assert_eq!(a.rows, b.rows);
        debug_assert_eq!(self.rows, a.cols);
        debug_assert_eq!(self.cols, b.cols);
        let n = b.cols;
        for k in 0..a.rows {
            let arow = a.row(k);
            let brow = b.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let crow = &mut self.data[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += aki * brow[j];
                }
            }
        }
    }

    /// `self += a * bᵀ` where `b` is stored untransposed (a: m×k, b: n×k).
    pub fn add_matmul_nt(&mut self, a: &Mat, b: &Mat) {
        debug_assert_eq!(a.cols, b.cols);
        debug_assert_eq!(self.rows, a.rows);
        debug_assert_eq!(self.cols, b.rows);
        for i in 0..a.rows {
            let arow = a.row(i);
            let crow = &mut self.data[i * b.rows..(i + 1) * b.rows];
            for (j, cij) in crow.iter_mut().enumerate() {
                let brow = b.row(j);
                let mut acc = 0.0;
                for (x, y) in arow.iter().zip(brow) {
                    acc += x * y;
                }
                *cij += acc;
            }
        }
    }

    /// Column-wise sums, as a 1×cols matrix.
    pub fn col_sums(&self) -> Mat {
        let mut out = Mat::zeros(1, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            let acc = out.row_mut(0);
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        out
    }
}
