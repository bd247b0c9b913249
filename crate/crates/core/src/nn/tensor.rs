use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::NnError;

/// Per-sample shape `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::DataLength { shape, found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    /// Builds an `(n, dims)` tensor from per-sample buffers.
    pub fn from_samples<I, S>(dims: Dims, samples: I) -> Result<Self, NnError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[f32]>,
    {
        let mut data = Vec::new();
        let mut n = 0;
        for s in samples {
            let s = s.as_ref();
            if s.len() != dims.len() {
                return Err(NnError::DataLength { shape: [n + 1, dims.c, dims.h, dims.w], found: data.len() + s.len() });
            }
            data.extend_from_slice(s);
            n += 1;
        }
        Ok(Self { shape: [n, dims.c, dims.h, dims.w], data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.dims().len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.dims().len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Copies the listed samples, in order, into a new tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor4 {
        let len = self.dims().len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor4 { shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]], data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
