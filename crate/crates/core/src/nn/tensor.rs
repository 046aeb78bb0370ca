//! Dense row-major matrices and the handful of kernels the models need.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "Mat::from_vec shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Mat::from_vec(1, 1, vec![v])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
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

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(1.0, self.view(), false, other.view(), false, 0.0, &mut out);
        out
    }

    pub fn view(&self) -> View<'_> {
        View {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            row_stride: self.cols,
            offset: 0,
        }
    }

    /// Mean over rows, as a 1×cols matrix.
    pub fn mean_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = self.rows.max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// A strided read-only window onto a row-major buffer.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub offset: usize,
}

impl<'a> View<'a> {
    /// Column block `[col, col + width)` over rows `[row, row + nrows)`.
    pub fn block(&self, row: usize, nrows: usize, col: usize, width: usize) -> View<'a> {
        debug_assert!(row + nrows <= self.rows && col + width <= self.cols);
        View {
            data: self.data,
            rows: nrows,
            cols: width,
            row_stride: self.row_stride,
            offset: self.offset + row * self.row_stride + col,
        }
    }
}

/// `out = alpha * op(a) * op(b) + beta * out`, where `op` optionally transposes.
pub fn gemm(alpha: f64, a: View<'_>, trans_a: bool, b: View<'_>, trans_b: bool, beta: f64, out: &mut Mat) {
    let out_rows = out.rows;
    let out_cols = out.cols;
    let out_stride = out.cols;
    gemm_into(
        alpha,
        a,
        trans_a,
        b,
        trans_b,
        beta,
        &mut out.data,
        0,
        out_rows,
        out_cols,
        out_stride,
    );
}

/// Same as [`gemm`] but writes into an arbitrary strided block of `out`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_into(
    alpha: f64,
    a: View<'_>,
    trans_a: bool,
    b: View<'_>,
    trans_b: bool,
    beta: f64,
    out: &mut [f64],
    out_offset: usize,
    out_rows: usize,
    out_cols: usize,
    out_stride: usize,
) {
    let (m, k, rsa, csa) = if trans_a {
        (a.cols, a.rows, 1isize, a.row_stride as isize)
    } else {
        (a.rows, a.cols, a.row_stride as isize, 1isize)
    };
    let (kb, n, rsb, csb) = if trans_b {
        (b.cols, b.rows, 1isize, b.row_stride as isize)
    } else {
        (b.rows, b.cols, b.row_stride as isize, 1isize)
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((m, n), (out_rows, out_cols), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for r in 0..m {
            for c in 0..n {
                out[out_offset + r * out_stride + c] *= beta;
            }
        }
        return;
    }
    assert!(a.offset + a.row_stride * a.rows.saturating_sub(1) + a.cols <= a.data.len());
    assert!(b.offset + b.row_stride * b.rows.saturating_sub(1) + b.cols <= b.data.len());
    assert!(out_offset + out_stride * (m - 1) + n <= out.len());
    // SAFETY: the assertions above bound every strided access inside the
    // backing slices, and `out` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            rsa,
            csa,
            b.data.as_ptr().add(b.offset),
            rsb,
            csb,
            beta,
            out.as_mut_ptr().add(out_offset),
            out_stride as isize,
            1,
        );
    }
}
