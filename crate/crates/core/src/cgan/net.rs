use crate::cgan::GanConfig;
use crate::nn::{ops, Layer, ParamLayout, Stack, StackBuilder, Tape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

fn fading<T: Scalar>(stage: usize, alpha: T) -> bool {
    stage > 0 && alpha < T::one()
}

/// Progressive generator. Stage `s` outputs images at `ladder[s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub layout: ParamLayout,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub image_channels: usize,
    base: Stack,
    /// `blocks[0]` is empty; `blocks[s]` doubles the resolution.
    blocks: Vec<Stack>,
    to_rgb: Vec<Stack>,
}

pub struct GenTape<T> {
    stage: usize,
    alpha: T,
    base: Tape<T>,
    blocks: Vec<Tape<T>>,
    rgb_new: Tape<T>,
    rgb_old: Option<(Tape<T>, Tensor<T>)>,
    pre: Tensor<T>,
}

impl Generator {
    pub fn new(cfg: &GanConfig) -> Self {
        let mut layout = ParamLayout::new();
        let eq = cfg.equalized_lr;
        let pn = cfg.pixel_norm;
        let c0 = cfg.channels[0];
        let fin = cfg.latent_dim + cfg.cond_dim;
        let base = StackBuilder::new(&mut layout, "g.base", eq)
            .dense("dense", fin, c0 * 16, RELU_GAIN / 4.0)
            .layer(Layer::Reshape { c: c0, h: 4, w: 4 })
            .layer(Layer::LeakyRelu)
            .layer_if(pn, Layer::PixelNorm)
            .conv("conv", c0, c0, 3, RELU_GAIN)
            .layer(Layer::LeakyRelu)
            .layer_if(pn, Layer::PixelNorm)
            .build();
        let mut blocks = vec![Stack::default()];
        for s in 1..cfg.ladder.len() {
            blocks.push(
                StackBuilder::new(&mut layout, format!("g.block{s}"), eq)
                    .layer(Layer::Upsample)
                    .conv("conv", cfg.channels[s - 1], cfg.channels[s], 3, RELU_GAIN)
                    .layer(Layer::LeakyRelu)
                    .layer_if(pn, Layer::PixelNorm)
                    .build(),
            );
        }
        let to_rgb = (0..cfg.ladder.len())
            .map(|s| {
                StackBuilder::new(&mut layout, format!("g.to_rgb{s}"), eq)
                    .conv("conv", cfg.channels[s], cfg.image_channels, 1, 1.0)
                    .build()
            })
            .collect();
        Self {
            layout,
            latent_dim: cfg.latent_dim,
            cond_dim: cfg.cond_dim,
            image_channels: cfg.image_channels,
            base,
            blocks,
            to_rgb,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.cond_dim
    }

    /// `input` is `n × (d + K) × 1 × 1`; output is `tanh` of the (blended) RGB.
    pub fn forward<T: Scalar>(&self, params: &[T], input: &Tensor<T>, stage: usize, alpha: T) -> (Tensor<T>, GenTape<T>) {
        let (mut h, base) = self.base.forward(params, input);
        let mut tapes = Vec::with_capacity(stage);
        let mut prev = None;
        for s in 1..=stage {
            if s == stage {
                prev = Some(h.clone());
            }
            let (next, t) = self.blocks[s].forward(params, &h);
            tapes.push(t);
            h = next;
        }
        let (rgb, rgb_new) = self.to_rgb[stage].forward(params, &h);
        let (pre, rgb_old) = match prev {
            Some(hp) if fading(stage, alpha) => {
                let (old, t) = self.to_rgb[stage - 1].forward(params, &hp);
                let up = ops::upsample_forward(&old);
                (ops::lerp(&up, &rgb, alpha), Some((t, old)))
            }
            _ => (rgb, None),
        };
        let out = ops::tanh_forward(&pre);
        (
            out,
            GenTape {
                stage,
                alpha,
                base,
                blocks: tapes,
                rgb_new,
                rgb_old,
                pre,
            },
        )
    }

    pub fn infer<T: Scalar>(&self, params: &[T], input: &Tensor<T>, stage: usize, alpha: T) -> Tensor<T> {
        self.forward(params, input, stage, alpha).0
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward<T: Scalar>(&self, params: &[T], tape: &GenTape<T>, grad_out: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let stage = tape.stage;
        let g_pre = ops::tanh_backward(&tape.pre, grad_out);
        let mut old_grad = None;
        let g_rgb = if let Some((t_old, _)) = &tape.rgb_old {
            let g_old = ops::scaled(&ops::upsample_backward(&g_pre), T::one() - tape.alpha);
            old_grad = Some(self.to_rgb[stage - 1].backward(params, t_old, &g_old, grads));
            ops::scaled(&g_pre, tape.alpha)
        } else {
            g_pre
        };
        let mut g = self.to_rgb[stage].backward(params, &tape.rgb_new, &g_rgb, grads);
        for s in (1..=stage).rev() {
            g = self.blocks[s].backward(params, &tape.blocks[s - 1], &g, grads);
            if s == stage {
                if let Some(extra) = &old_grad {
                    ops::add_into(&mut g, extra);
                }
            }
        }
        self.base.backward(params, &tape.base, &g, grads)
    }
}

/// Progressive critic with two outputs per image: realness and predicted beauty.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub layout: ParamLayout,
    from_rgb: Vec<Stack>,
    /// `blocks[0]` is empty; `blocks[s]` halves the resolution.
    blocks: Vec<Stack>,
    head: Stack,
}

pub struct DiscTape<T> {
    stage: usize,
    alpha: T,
    from_new: Tape<T>,
    from_old: Option<Tape<T>>,
    blocks: Vec<Tape<T>>,
    head: Tape<T>,
}

impl Discriminator {
    pub fn new(cfg: &GanConfig) -> Self {
        let mut layout = ParamLayout::new();
        let eq = cfg.equalized_lr;
        let from_rgb = (0..cfg.ladder.len())
            .map(|s| {
                StackBuilder::new(&mut layout, format!("d.from_rgb{s}"), eq)
                    .conv("conv", cfg.image_channels, cfg.channels[s], 1, RELU_GAIN)
                    .layer(Layer::LeakyRelu)
                    .build()
            })
            .collect();
        let mut blocks = vec![Stack::default()];
        for s in 1..cfg.ladder.len() {
            blocks.push(
                StackBuilder::new(&mut layout, format!("d.block{s}"), eq)
                    .conv("conv", cfg.channels[s], cfg.channels[s - 1], 3, RELU_GAIN)
                    .layer(Layer::LeakyRelu)
                    .layer(Layer::Downsample)
                    .build(),
            );
        }
        let c0 = cfg.channels[0];
        let cin = c0 + usize::from(cfg.minibatch_std);
        let head = StackBuilder::new(&mut layout, "d.head", eq)
            .layer_if(cfg.minibatch_std, Layer::MinibatchStd)
            .conv("conv", cin, c0, 3, RELU_GAIN)
            .layer(Layer::LeakyRelu)
            .layer(Layer::Reshape { c: c0 * 16, h: 1, w: 1 })
            .dense("dense", c0 * 16, c0, RELU_GAIN)
            .layer(Layer::LeakyRelu)
            .dense("out", c0, 2, 1.0)
            .build();
        Self {
            layout,
            from_rgb,
            blocks,
            head,
        }
    }

    /// Output is `n × 2 × 1 × 1`: channel 0 realness, channel 1 β̂.
    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>, stage: usize, alpha: T) -> (Tensor<T>, DiscTape<T>) {
        let (mut h, from_new) = self.from_rgb[stage].forward(params, x);
        let mut tapes = Vec::with_capacity(stage);
        let mut from_old = None;
        for s in (1..=stage).rev() {
            let (next, t) = self.blocks[s].forward(params, &h);
            tapes.push(t);
            h = next;
            if s == stage && fading(stage, alpha) {
                let (old, t) = self.from_rgb[stage - 1].forward(params, &ops::downsample_forward(x));
                h = ops::lerp(&old, &h, alpha);
                from_old = Some(t);
            }
        }
        tapes.reverse();
        let (out, head) = self.head.forward(params, &h);
        (
            out,
            DiscTape {
                stage,
                alpha,
                from_new,
                from_old,
                blocks: tapes,
                head,
            },
        )
    }

    pub fn infer<T: Scalar>(&self, params: &[T], x: &Tensor<T>, stage: usize, alpha: T) -> Tensor<T> {
        self.forward(params, x, stage, alpha).0
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the images.
    pub fn backward<T: Scalar>(&self, params: &[T], tape: &DiscTape<T>, grad_out: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let stage = tape.stage;
        let mut g = self.head.backward(params, &tape.head, grad_out, grads);
        let mut old_grad = None;
        for s in 1..=stage {
            if s == stage {
                if let Some(t_old) = &tape.from_old {
                    let g_old = ops::scaled(&g, T::one() - tape.alpha);
                    let gx = self.from_rgb[stage - 1].backward(params, t_old, &g_old, grads);
                    old_grad = Some(ops::downsample_backward(&gx));
                    g = ops::scaled(&g, tape.alpha);
                }
            }
            g = self.blocks[s].backward(params, &tape.blocks[s - 1], &g, grads);
        }
        let mut gx = self.from_rgb[stage].backward(params, &tape.from_new, &g, grads);
        if let Some(extra) = &old_grad {
            ops::add_into(&mut gx, extra);
        }
        gx
    }
}
