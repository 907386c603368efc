//! Dense row-major tensors and the matmul kernels everything else is built
//! on. Kernels accumulate into their output and keep a fixed per-element
//! reduction order, so results are bitwise reproducible at any thread count.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Work threshold below which the kernels stay single-threaded.
const PAR_FLOPS: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
    pub requires_grad: bool,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; shape.iter().product()],
            requires_grad: false,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        }
    }

    pub fn scalar(v: F) -> Self {
        Tensor::from_vec(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn item(&self) -> F {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Same data, new shape; element count must match.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "cannot reshape {:?} to {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }

    /// Leading dimensions collapsed: interpret as a [rows, last] matrix.
    pub fn rows_cols(&self) -> (usize, usize) {
        let cols = *self.shape.last().expect("non-scalar tensor");
        (self.data.len() / cols, cols)
    }

    pub fn map(&self, f: impl Fn(F) -> F + Sync) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    pub fn first_nonfinite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

/// c[m,n] += a[m,k] * b[k,n]
pub fn matmul_acc<F: Scalar>(c: &mut [F], a: &[F], b: &[F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |crow: &mut [F], arow: &[F]| {
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..kk * n + n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    };
    if m * k * n >= PAR_FLOPS && m > 1 {
        c.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(crow, arow)| row(crow, arow));
    } else {
        for (crow, arow) in c.chunks_mut(n).zip(a.chunks(k)) {
            row(crow, arow);
        }
    }
}

/// c[m,n] += a[m,k] * b[n,k]^T  (dot products of contiguous rows)
pub fn matmul_bt_acc<F: Scalar>(c: &mut [F], a: &[F], b: &[F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let row = |crow: &mut [F], arow: &[F]| {
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..j * k + k];
            let mut acc = F::ZERO;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv += acc;
        }
    };
    if m * k * n >= PAR_FLOPS && m > 1 {
        c.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(crow, arow)| row(crow, arow));
    } else {
        for (crow, arow) in c.chunks_mut(n).zip(a.chunks(k)) {
            row(crow, arow);
        }
    }
}

/// c[k,n] += a[m,k]^T * b[m,n]
pub fn matmul_at_acc<F: Scalar>(c: &mut [F], a: &[F], b: &[F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    // Parallel over blocks of output rows; each block walks the inputs once.
    let block = 32usize;
    let work = m * k * n;
    let body = |(blk_idx, cblk): (usize, &mut [F])| {
        let k0 = blk_idx * block;
        let rows = cblk.len() / n;
        for i in 0..m {
            let arow = &a[i * k..i * k + k];
            let brow = &b[i * n..i * n + n];
            for r in 0..rows {
                let aik = arow[k0 + r];
                let crow = &mut cblk[r * n..r * n + n];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += aik * bv;
                }
            }
        }
    };
    if work >= PAR_FLOPS && k > block {
        c.par_chunks_mut(block * n).enumerate().for_each(body);
    } else {
        c.chunks_mut(block * n).enumerate().for_each(body);
    }
}

/// Numerically stable in-place softmax over each row of length `n`.
pub fn softmax_rows<F: Scalar>(data: &mut [F], n: usize) {
    let row = |r: &mut [F]| {
        let mut max = F::MASK_NEG;
        for &v in r.iter() {
            max = max.maximum(v);
        }
        let mut sum = F::ZERO;
        for v in r.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in r.iter_mut() {
            *v /= sum;
        }
    };
    if data.len() >= PAR_FLOPS {
        data.par_chunks_mut(n).for_each(row);
    } else {
        data.chunks_mut(n).for_each(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    fn seq(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 37 + 11) % 17) as f64 * scale - 4.0).collect()
    }

    #[test]
    fn kernels_match_the_naive_product() {
        let (m, k, n) = (7, 5, 9);
        let a = seq(m * k, 0.5);
        let b = seq(k * n, 0.25);
        let expect = naive_matmul(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        matmul_acc(&mut c, &a, &b, m, k, n);
        assert_eq!(c, expect);

        // bt: b stored transposed.
        let mut bt = vec![0.0; k * n];
        for kk in 0..k {
            for j in 0..n {
                bt[j * k + kk] = b[kk * n + j];
            }
        }
        let mut c = vec![0.0; m * n];
        matmul_bt_acc(&mut c, &a, &bt, m, k, n);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // at: a stored transposed.
        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for kk in 0..k {
                at[i * k + kk] = a[i * k + kk];
            }
        }
        let mut c2 = vec![0.0; k * n];
        matmul_at_acc(&mut c2, &at, &seq(m * n, 0.125), m, k, n);
        let expect2 = {
            let mut e = vec![0.0; k * n];
            let bb = seq(m * n, 0.125);
            for kk in 0..k {
                for j in 0..n {
                    for i in 0..m {
                        e[kk * n + j] += a[i * k + kk] * bb[i * n + j];
                    }
                }
            }
            e
        };
        for (x, y) in c2.iter().zip(&expect2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        // Large enough to cross the parallel threshold.
        let (m, k, n) = (64, 48, 64);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.11).cos()).collect();
        let mut big = vec![0.0f32; m * n];
        matmul_acc(&mut big, &a, &b, m, k, n);
        // Row-by-row serial reference with the same inner order.
        let mut reference = vec![0.0f32; m * n];
        for i in 0..m {
            let crow = &mut reference[i * n..(i + 1) * n];
            for kk in 0..k {
                let aik = a[i * k + kk];
                for j in 0..n {
                    crow[j] += aik * b[kk * n + j];
                }
            }
        }
        assert_eq!(big, reference);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut data = vec![0.1f64, 2.0, -1.0, 3.0, 0.0, 1.0];
        softmax_rows(&mut data, 3);
        for row in data.chunks(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reshape_checks_element_count() {
        let t = Tensor::<f32>::zeros(&[2, 3]);
        let r = t.clone().reshaped(&[3, 2]);
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(t.rows_cols(), (2, 3));
    }
}
