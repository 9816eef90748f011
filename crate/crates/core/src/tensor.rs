use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense NCHW tensor. A single image is a tensor with `n == 1`; feature
/// vectors use `h == w == 1`.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}x{}x{}]", self.n, self.c, self.h, self.w)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "tensor {n}x{c}x{h}x{w} needs {} values, got {}",
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Feature matrix `n × features` stored as `n × features × 1 × 1`.
    pub fn rows(n: usize, features: usize, data: Vec<T>) -> Result<Self> {
        Self::from_vec(n, features, 1, 1, data)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of values per sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_slice(&self, i: usize) -> &[T] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn sample_slice_mut(&mut self, i: usize) -> &mut [T] {
        let s = self.sample_len();
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn sample(&self, i: usize) -> Self {
        Self {
            n: 1,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.sample_slice(i).to_vec(),
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Self> + '_ {
        (0..self.n).map(move |i| self.sample(i))
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut T {
        let idx = ((n * self.c + c) * self.h + y) * self.w + x;
        &mut self.data[idx]
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Tensor<T>>,
    {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let mut out = first.clone();
        for t in iter {
            if (t.c, t.h, t.w) != (out.c, out.h, out.w) {
                return Err(Error::Shape(format!("cannot stack {t:?} onto {out:?}")));
            }
            out.n += t.n;
            out.data.extend_from_slice(&t.data);
        }
        Ok(out)
    }

    pub fn reshape(mut self, c: usize, h: usize, w: usize) -> Result<Self> {
        if c * h * w != self.sample_len() {
            return Err(Error::Shape(format!("cannot reshape {self:?} to {c}x{h}x{w}")));
        }
        self.c = c;
        self.h = h;
        self.w = w;
        Ok(self)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(|v| U::lit(v.as_f64()))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}
