use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// Dense row-major `f64` tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!("shape {shape:?} needs {n} values, got {}", data.len()));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rows/cols of a 2-D tensor; a 1-D tensor is a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (1, self.data.len()),
        }
    }

    pub fn view(&self) -> MatRef<'_> {
        let (r, c) = self.dims2();
        MatRef::new(&self.data, r, c)
    }

    pub fn view_mut(&mut self) -> MatMut<'_> {
        let (r, c) = self.dims2();
        MatMut::new(&mut self.data, r, c)
    }
}

/// Borrowed strided matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    data: &'a [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> MatRef<'a> {
    /// Contiguous row-major `rows x cols` view.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "view exceeds buffer");
        MatRef { data, offset: 0, rows, cols, rs: cols as isize, cs: 1 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn t(self) -> Self {
        MatRef { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    /// Columns `start..start + len`.
    pub fn col_range(self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.cols, "column range out of bounds");
        MatRef { offset: self.offset + (start as isize * self.cs) as usize, cols: len, ..self }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(self.offset as isize + i as isize * self.rs + j as isize * self.cs) as usize]
    }
}

/// Mutable strided matrix view.
#[derive(Debug)]
pub struct MatMut<'a> {
    data: &'a mut [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> MatMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "view exceeds buffer");
        MatMut { data, offset: 0, rows, cols, rs: cols as isize, cs: 1 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col_range(self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.cols, "column range out of bounds");
        MatMut { offset: self.offset + (start as isize * self.cs) as usize, cols: len, ..self }
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: MatMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    assert_eq!(a.rows, c.rows, "gemm row mismatch");
    assert_eq!(b.cols, c.cols, "gemm col mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        // dgemm with k = 0 still scales c by beta
        for i in 0..m {
            for j in 0..n {
                let idx = (c.offset as isize + i as isize * c.rs + j as isize * c.cs) as usize;
                c.data[idx] *= beta;
            }
        }
        return;
    }
    check_bounds(a.data.len(), a.offset, m, k, a.rs, a.cs);
    check_bounds(b.data.len(), b.offset, k, n, b.rs, b.cs);
    check_bounds(c.data.len(), c.offset, m, n, c.rs, c.cs);
    // SAFETY: every index touched by dgemm lies inside the checked extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs,
            a.cs,
            b.data.as_ptr().add(b.offset),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs,
            c.cs,
        );
    }
}

fn check_bounds(len: usize, offset: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    assert!(rs >= 0 && cs >= 0, "negative strides unsupported");
    let last = offset + (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last < len, "matrix view out of bounds");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: MatRef<'_>, b: MatRef<'_>) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                out[i * b.cols() + j] = (0..a.cols()).map(|p| a.get(i, p) * b.get(p, j)).sum();
            }
        }
        out
    }

    #[test]
    fn gemm_matches_naive_with_transposes_and_slices() {
        let a: Vec<f64> = (0..12).map(|x| x as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..20).map(|x| (x as f64).sin()).collect();
        let av = MatRef::new(&a, 3, 4);
        let bv = MatRef::new(&b, 4, 5);
        let mut c = vec![0.0; 15];
        gemm(1.0, av, bv, 0.0, MatMut::new(&mut c, 3, 5));
        for (x, y) in c.iter().zip(&naive(av, bv)) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T (4x3) * slice of b^T
        let bt = MatRef::new(&b, 5, 4).t().col_range(1, 3); // 4x3
        let mut c2 = vec![0.0; 9];
        gemm(1.0, av.t().t(), bt, 0.0, MatMut::new(&mut c2, 3, 3));
        let expect = naive(av, bt);
        for (x, y) in c2.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_accumulates_into_column_slice() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0, 4.0];
        let mut c = vec![1.0; 6]; // 2x3
        let out = MatMut::new(&mut c, 2, 3).col_range(1, 1);
        gemm(1.0, MatRef::new(&a, 2, 1), MatRef::new(&b, 1, 1).col_range(0, 1), 1.0, out);
        assert_eq!(c, vec![1.0, 4.0, 1.0, 1.0, 7.0, 1.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }
}
