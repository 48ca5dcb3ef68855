//! Dense row-major f64 matrices with exactly the operations the network
//! needs. Plain loops, fixed iteration order: forward and backward passes
//! stay bit-reproducible across runs.

// Kernels mix indices across several buffers at once; indexed loops are the
// house style here.
#![allow(clippy::needless_range_loop)]

/// Row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn n_elements(&self) -> usize {
        self.data.len()
    }

    /// self (n x k) * other^T (other is m x k) -> n x m.
    ///
    /// This is the linear-layer form: rows of `other` are output neurons.
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dim");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let orow = out.row_mut(i);
            for (j, o) in orow.iter_mut().enumerate() {
                let b = other.row(j);
                let mut acc = 0.0;
                for k in 0..a.len() {
                    acc += a[k] * b[k];
                }
                *o = acc;
            }
        }
        out
    }

    /// self (n x k) * other (k x m) -> n x m.
    pub fn matmul_nn(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul_nn inner dim");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..self.cols {
                let aik = a[k];
                if aik == 0.0 {
                    continue;
                }
                let b = other.row(k);
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..b.len() {
                    orow[j] += aik * b[j];
                }
            }
        }
        out
    }

    /// self^T * other where self is k x n, other is k x m -> n x m.
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dim");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for i in 0..self.cols {
                let aki = a[i];
                if aki == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..b.len() {
                    orow[j] += aki * b[j];
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }
}

/// Numerically stable in-place softmax of a slice.
pub fn softmax_slice(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Log-softmax of a slice into a new vector.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    xs.iter().map(|x| x - log_sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree_on_hand_example() {
        // a = [[1,2],[3,4],[5,6]] (3x2), b = [[7,8],[9,10]] (2x2)
        let a = Mat::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]);
        let b = Mat::from_vec(2, 2, vec![7., 8., 9., 10.]);
        // a * b
        let nn = a.matmul_nn(&b);
        assert_eq!(nn.data, vec![25., 28., 57., 64., 89., 100.]);
        // a * b^T via matmul_nt against transposed operand
        let bt = Mat::from_vec(2, 2, vec![7., 9., 8., 10.]);
        let nt = a.matmul_nt(&bt);
        assert_eq!(nt.data, nn.data);
        // a^T * a : (2x3)^T... matmul_tn takes self as k x n
        let tn = a.matmul_tn(&a);
        assert_eq!(tn.data, vec![35., 44., 44., 56.]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut xs = vec![0.1, -2.0, 3.0, 0.0];
        softmax_slice(&mut xs);
        let sum: f64 = xs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(xs.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let xs = vec![0.5, 1.5, -0.25];
        let mut sm = xs.clone();
        softmax_slice(&mut sm);
        let lsm = log_softmax(&xs);
        for (a, b) in sm.iter().zip(&lsm) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }
}
