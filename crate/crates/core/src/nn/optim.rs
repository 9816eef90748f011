use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Adam with the moment buffers exposed so they can be checkpointed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::lit(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Stochastic gradient descent with classical momentum.
#[derive(Clone, Debug, PartialEq)]
pub struct Momentum<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<T>,
}

impl<T: Scalar> Momentum<T> {
    pub fn new(len: usize, lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![T::zero(); len],
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        let mu = T::lit(self.momentum);
        let lr = T::lit(self.lr);
        for ((p, &g), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *vel = mu * *vel - lr * g;
            *p += *vel;
        }
    }
}
