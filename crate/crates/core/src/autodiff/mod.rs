//! Reverse-mode automatic differentiation over small dense tensors.

mod check;
mod optim;
mod tape;

pub use check::{grad_check, GRAD_CHECK_FLOOR};
pub use optim::{batch_gradients, Nag, NagConfig};
pub use tape::{Padding, Tape, Var};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} needs an even last dimension, got {dim}")]
    OddDim { op: &'static str, dim: usize },
    #[error("symmetric convolution needs an odd kernel width, got {0}")]
    EvenKernel(usize),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

/// Row-major dense tensor of 64-bit reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "tensor dimensions must be positive: {shape:?}");
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} does not match data length");
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::new(shape.to_vec(), vec![0.0; shape.iter().product()])
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor::new(shape.to_vec(), vec![value; shape.iter().product()])
    }

    pub fn scalar(x: f64) -> Self {
        Tensor::new(vec![1], vec![x])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    /// Product of all axes but the last.
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Index of the largest element of each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (i, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Handle to a registered parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) a parameter.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> ParamId {
        if let Some(&i) = self.index.get(name) {
            self.tensors[i] = tensor;
            return ParamId(i);
        }
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    /// Gaussian init with the given standard deviation.
    pub fn insert_normal<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut R) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data))
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn id(&self, name: &str) -> Result<ParamId, AutodiffError> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// `(name, tensor)` in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// One gradient tensor per parameter, aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Gradient map keyed by parameter name.
    pub fn named(&self, params: &ParamStore) -> BTreeMap<String, Tensor> {
        params.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.tensors.iter().map(Tensor::norm_sq).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
