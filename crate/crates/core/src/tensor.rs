//! Dense row-major tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense n-dimensional array stored row-major.
///
/// `shape.iter().product() == data.len()` holds for every constructed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) && !data.is_empty() {
            return Err(Error::arg(format!("shape {shape:?} has a zero dimension")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                expected: shape.to_vec(),
                actual: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// A 1-D tensor over `data`.
    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape {
                expected: shape.to_vec(),
                actual: self.shape,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of all elements, accumulated with running rescaling so
    /// that large or tiny entries neither overflow nor underflow.
    pub fn l2_norm(&self) -> T {
        l2_norm(&self.data)
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Tensor<T>) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.axpy(T::one(), other)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn check_matrix(&self) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::arg(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.check_matrix()?;
        let (k2, n) = rhs.check_matrix()?;
        if k != k2 {
            return Err(Error::Shape {
                expected: vec![k, n],
                actual: rhs.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::from_vec(&[m, n], out)
    }

    /// `selfᵀ · rhs`, without materialising the transpose.
    pub fn matmul_tn(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (k, m) = self.check_matrix()?;
        let (k2, n) = rhs.check_matrix()?;
        if k != k2 {
            return Err(Error::Shape {
                expected: vec![k, n],
                actual: rhs.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &rhs.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::from_vec(&[m, n], out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_nt(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.check_matrix()?;
        let (n, k2) = rhs.check_matrix()?;
        if k != k2 {
            return Err(Error::Shape {
                expected: vec![n, k],
                actual: rhs.shape.clone(),
            });
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                out.push(a_row.iter().zip(b_row).map(|(&a, &b)| a * b).sum());
            }
        }
        Tensor::from_vec(&[m, n], out)
    }

    /// Adds `bias` to every row of a matrix.
    pub fn add_row(&mut self, bias: &[T]) -> Result<()> {
        let (_, n) = self.check_matrix()?;
        if bias.len() != n {
            return Err(Error::Shape {
                expected: vec![n],
                actual: vec![bias.len()],
            });
        }
        for row in self.data.chunks_mut(n) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums of a matrix.
    pub fn sum_rows(&self) -> Result<Vec<T>> {
        let (_, n) = self.check_matrix()?;
        let mut out = vec![T::zero(); n];
        for row in self.data.chunks(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(out)
    }
}

/// Euclidean norm of a slice (scaled accumulation, as in reference BLAS `nrm2`).
pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    let mut scale = T::zero();
    let mut ssq = T::one();
    for &x in v {
        if x != T::zero() {
            let ax = x.abs();
            if scale < ax {
                let r = scale / ax;
                ssq = T::one() + ssq * r * r;
                scale = ax;
            } else {
                let r = ax / scale;
                ssq += r * r;
            }
        }
    }
    scale * ssq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_three_four_is_five() {
        let t = Tensor::vector(vec![3.0_f64, 4.0]);
        assert_eq!(t.l2_norm(), 5.0);
    }

    #[test]
    fn norm_of_zeros_is_zero() {
        let t = Tensor::<f64>::zeros(&[3, 7, 2]);
        assert_eq!(t.l2_norm(), 0.0);
        assert_eq!(Tensor::<f32>::zeros(&[5]).l2_norm(), 0.0);
    }

    #[test]
    fn norm_survives_extreme_magnitudes() {
        let big = Tensor::vector(vec![1e200_f64, 1e200]);
        assert!((big.l2_norm() / (2f64.sqrt() * 1e200) - 1.0).abs() < 1e-15);
        let tiny = Tensor::vector(vec![3e-200_f64, 4e-200]);
        assert!((tiny.l2_norm() / 5e-200 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0_f64; 5]).is_err());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0_f64; 6]).is_ok());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0_f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7.0_f64, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[58.0, 64.0, 139.0, 154.0]);

        let bt = Tensor::from_vec(&[2, 3], vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]).unwrap();
        assert_eq!(a.matmul_nt(&bt).unwrap(), ab);

        let at = Tensor::from_vec(&[3, 2], vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]).unwrap();
        assert_eq!(at.matmul_tn(&b).unwrap(), ab);
    }

    #[test]
    fn matmul_rejects_bad_inner_dim() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
    }
}
