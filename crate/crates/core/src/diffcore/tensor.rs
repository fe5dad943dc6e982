use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major array with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    pub grad: Option<Vec<S>>,
    pub requires_grad: bool,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} holds {n} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::ZERO)
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| S::from_f64(v)).collect())
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// `(rows, cols)` of a rank-2 tensor; a rank-1 tensor is a single column.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Ok((*n, 1)),
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(format!("expected rank 1 or 2, got shape {s:?}"))),
        }
    }

    pub fn row(&self, r: usize) -> &[S] {
        let cols = self.shape[1..].iter().product::<usize>();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::ZERO, |m, v| m.max(v.abs()))
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }
}
