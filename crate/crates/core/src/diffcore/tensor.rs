use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{dim_err, PaadError, Result};

/// Scalar type of every tensor. Implemented for `f32` (training and
/// inference) and `f64` (finite-difference shadow computations).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Default
    + Send
    + Sync
    + std::iter::Sum
    + 'static
{
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense row-major tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return dim_err(format!("shape {shape:?} has a zero dimension"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return dim_err(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return dim_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn expect_shape(&self, shape: &[usize], what: &str) -> Result<()> {
        if self.shape != shape {
            return dim_err(format!(
                "{what}: expected shape {shape:?}, got {:?}",
                self.shape
            ));
        }
        Ok(())
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) -> Result<()> {
        if self.shape != other.shape {
            return dim_err(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(PaadError::Numeric(format!("{what} contains non-finite values")))
        }
    }

    /// Lossless widening / narrowing between scalar types (through `f64`).
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::c(x.as_f64())).collect(),
        }
    }

    /// Row `i` of a tensor whose leading axis indexes rows.
    pub fn row(&self, i: usize) -> &[F] {
        let width = self.data.len() / self.shape[0];
        &self.data[i * width..(i + 1) * width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        let width = self.data.len() / self.shape[0];
        &mut self.data[i * width..(i + 1) * width]
    }

    /// Concatenate two `[B, *]` tensors along the feature axis into `[B, m + n]`.
    pub fn concat_features(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        let batch = a.shape[0];
        if b.shape[0] != batch {
            return dim_err(format!(
                "concat: batch {:?} vs {:?}",
                a.shape, b.shape
            ));
        }
        let (wa, wb) = (a.len() / batch, b.len() / batch);
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..batch {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Tensor::from_vec(&[batch, wa + wb], data)
    }

    /// Inverse of [`Tensor::concat_features`].
    pub fn split_features(&self, left: usize) -> Result<(Tensor<F>, Tensor<F>)> {
        let batch = self.shape[0];
        let width = self.len() / batch;
        if left == 0 || left >= width {
            return dim_err(format!("split at {left} of width {width}"));
        }
        let mut a = Vec::with_capacity(batch * left);
        let mut b = Vec::with_capacity(batch * (width - left));
        for i in 0..batch {
            let row = self.row(i);
            a.extend_from_slice(&row[..left]);
            b.extend_from_slice(&row[left..]);
        }
        Ok((
            Tensor::from_vec(&[batch, left], a)?,
            Tensor::from_vec(&[batch, width - left], b)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![5.0f32, 6.0]).unwrap();
        let c = Tensor::concat_features(&a, &b).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let (a2, b2) = c.split_features(2).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }
}
