use crate::nn::ops;
use crate::nn::params::{Init, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        weight: usize,
        bias: usize,
        cin: usize,
        cout: usize,
        k: usize,
        scale: f64,
    },
    Dense {
        weight: usize,
        bias: usize,
        fin: usize,
        fout: usize,
        scale: f64,
    },
    LeakyRelu,
    PixelNorm,
    Upsample,
    Downsample,
    MinibatchStd,
    /// Reinterprets each sample as `c × h × w` (flatten or unflatten).
    Reshape {
        c: usize,
        h: usize,
        w: usize,
    },
    Tanh,
    Sigmoid,
}

/// Inputs recorded during a forward pass, one per layer.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    inputs: Vec<Tensor<T>>,
}

/// A chain of layers sharing one flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

impl Layer {
    fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Tensor<T> {
        match *self {
            Layer::Conv {
                weight,
                bias,
                cin,
                cout,
                k,
                scale,
            } => ops::conv2d_forward(
                x,
                &params[weight..weight + cout * cin * k * k],
                &params[bias..bias + cout],
                cout,
                k,
                T::lit(scale),
            ),
            Layer::Dense {
                weight,
                bias,
                fin,
                fout,
                scale,
            } => ops::dense_forward(
                x,
                &params[weight..weight + fout * fin],
                &params[bias..bias + fout],
                fout,
                T::lit(scale),
            ),
            Layer::LeakyRelu => ops::leaky_relu_forward(x, T::lit(LEAKY_SLOPE)),
            Layer::PixelNorm => ops::pixel_norm_forward(x),
            Layer::Upsample => ops::upsample_forward(x),
            Layer::Downsample => ops::downsample_forward(x),
            Layer::MinibatchStd => ops::minibatch_std_forward(x),
            Layer::Reshape { c, h, w } => x.clone().reshape(c, h, w).expect("reshape sized at construction"),
            Layer::Tanh => ops::tanh_forward(x),
            Layer::Sigmoid => ops::sigmoid_forward(x),
        }
    }

    fn backward<T: Scalar>(&self, params: &[T], x: &Tensor<T>, g: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        match *self {
            Layer::Conv {
                weight,
                bias,
                cin,
                cout,
                k,
                scale,
            } => {
                let wlen = cout * cin * k * k;
                let (gw, gb) = split_two(grads, weight, wlen, bias, cout);
                ops::conv2d_backward(x, &params[weight..weight + wlen], cout, k, T::lit(scale), g, gw, gb)
            }
            Layer::Dense {
                weight,
                bias,
                fin,
                fout,
                scale,
            } => {
                let wlen = fout * fin;
                let (gw, gb) = split_two(grads, weight, wlen, bias, fout);
                ops::dense_backward(x, &params[weight..weight + wlen], fout, T::lit(scale), g, gw, gb)
            }
            Layer::LeakyRelu => ops::leaky_relu_backward(x, T::lit(LEAKY_SLOPE), g),
            Layer::PixelNorm => ops::pixel_norm_backward(x, g),
            Layer::Upsample => ops::upsample_backward(g),
            Layer::Downsample => ops::downsample_backward(g),
            Layer::MinibatchStd => ops::minibatch_std_backward(x, g),
            Layer::Reshape { .. } => g.clone().reshape(x.c, x.h, x.w).expect("reshape sized at construction"),
            Layer::Tanh => ops::tanh_backward(x, g),
            Layer::Sigmoid => ops::sigmoid_backward(x, g),
        }
    }
}

/// Two disjoint mutable windows into the gradient vector.
fn split_two<T>(grads: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    if a < b {
        let (lo, hi) = grads.split_at_mut(b);
        (&mut lo[a..a + alen], &mut hi[..blen])
    } else {
        let (lo, hi) = grads.split_at_mut(a);
        (&mut hi[..alen], &mut lo[b..b + blen])
    }
}

impl Stack {
    pub fn infer<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Tensor<T> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(params, &cur);
        }
        cur
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> (Tensor<T>, Tape<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(params, &cur);
            inputs.push(cur);
            cur = next;
        }
        (cur, Tape { inputs })
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward<T: Scalar>(&self, params: &[T], tape: &Tape<T>, grad_out: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let mut g = grad_out.clone();
        for (layer, x) in self.layers.iter().zip(&tape.inputs).rev() {
            g = layer.backward(params, x, &g, grads);
        }
        g
    }
}

/// Appends layers to a stack while registering their parameters.
pub struct StackBuilder<'a> {
    layout: &'a mut ParamLayout,
    prefix: String,
    equalized_lr: bool,
    layers: Vec<Layer>,
}

impl<'a> StackBuilder<'a> {
    pub fn new(layout: &'a mut ParamLayout, prefix: impl Into<String>, equalized_lr: bool) -> Self {
        Self {
            layout,
            prefix: prefix.into(),
            equalized_lr,
            layers: Vec::new(),
        }
    }

    /// He-style init; with equalized learning rate the constant moves from
    /// the stored weights to a runtime multiplier.
    fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize, gain: f64) -> (usize, f64) {
        let he = gain / (fan_in as f64).sqrt();
        let (std, scale) = if self.equalized_lr { (1.0, he) } else { (he, 1.0) };
        let offset = self
            .layout
            .add(format!("{}.{name}.weight", self.prefix), shape, Init::Normal { std });
        (offset, scale)
    }

    pub fn conv(mut self, name: &str, cin: usize, cout: usize, k: usize, gain: f64) -> Self {
        let (weight, scale) = self.weight(name, &[cout, cin, k, k], cin * k * k, gain);
        let bias = self.layout.add(format!("{}.{name}.bias", self.prefix), &[cout], Init::Zeros);
        self.layers.push(Layer::Conv {
            weight,
            bias,
            cin,
            cout,
            k,
            scale,
        });
        self
    }

    pub fn dense(mut self, name: &str, fin: usize, fout: usize, gain: f64) -> Self {
        let (weight, scale) = self.weight(name, &[fout, fin], fin, gain);
        let bias = self.layout.add(format!("{}.{name}.bias", self.prefix), &[fout], Init::Zeros);
        self.layers.push(Layer::Dense {
            weight,
            bias,
            fin,
            fout,
            scale,
        });
        self
    }

    pub fn layer(mut self, layer: Layer) -> Self {
        self.layers.push(layer);
        self
    }

    pub fn layer_if(self, cond: bool, layer: Layer) -> Self {
        if cond {
            self.layer(layer)
        } else {
            self
        }
    }

    pub fn build(self) -> Stack {
        Stack { layers: self.layers }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stack_gradient_matches_finite_differences() {
        let mut layout = ParamLayout::new();
        let stack = StackBuilder::new(&mut layout, "t", true)
            .conv("c0", 2, 3, 3, 2f64.sqrt())
            .layer(Layer::LeakyRelu)
            .layer(Layer::PixelNorm)
            .layer(Layer::Downsample)
            .layer(Layer::MinibatchStd)
            .layer(Layer::Reshape { c: 16, h: 1, w: 1 })
            .dense("d0", 16, 2, 1.0)
            .layer(Layer::Tanh)
            .build();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params: Vec<f64> = layout.init(&mut rng);
        // Non-zero biases so every path is exercised.
        for (i, p) in params.iter_mut().enumerate() {
            if *p == 0.0 {
                *p = 0.01 * (i as f64 % 7.0 - 3.0);
            }
        }
        let x = Tensor::from_vec(3, 2, 4, 4, (0..96).map(|i| ((i * 37 % 19) as f64 / 9.0) - 1.0).collect()).unwrap();
        let loss = |p: &[f64]| -> f64 { stack.infer(p, &x).data.iter().enumerate().map(|(i, v)| v * (i as f64 + 1.0)).sum() };
        let (y, tape) = stack.forward(&params, &x);
        let g = Tensor::from_vec(y.n, y.c, 1, 1, (0..y.len()).map(|i| i as f64 + 1.0).collect()).unwrap();
        let mut grads = vec![0.0; params.len()];
        stack.backward(&params, &tape, &g, &mut grads);
        let h = 1e-6;
        for i in 0..params.len() {
            let mut pp = params.clone();
            pp[i] += h;
            let mut pm = params.clone();
            pm[i] -= h;
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
            assert!((fd - grads[i]).abs() < 1e-5 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grads[i]);
        }
    }
}
