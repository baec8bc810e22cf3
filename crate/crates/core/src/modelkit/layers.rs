//! Layer stack with explicit forward caches and reverse-mode gradients.
//!
//! Activations are `[batch, channels, height, width]` for spatial layers and
//! `[batch, features]` after [`Layer::Flatten`].

use super::tensor::Tensor;
use super::ModelError;

/// A named, optionally trainable tensor together with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = vec![0.0; value.len()];
        Self { name: name.into(), value, grad, trainable: true }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// 3×3 convolution, stride 1, zero padding 1. Weight `[out, in, 3, 3]`.
    Conv3x3 { weight: Param, bias: Param },
    Relu,
    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2,
    Flatten,
    /// Fully connected. Weight `[out, in]`.
    Dense { weight: Param, bias: Param },
}

#[derive(Debug)]
pub(crate) enum Cache {
    Input(Tensor),
    ReluMask(Vec<bool>),
    PoolArgmax { input_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
}

impl Layer {
    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv3x3 { weight, bias } | Layer::Dense { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv3x3 { weight, bias } | Layer::Dense { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Cache), ModelError> {
        match self {
            Layer::Conv3x3 { weight, bias } => Ok((conv3x3_forward(x, &weight.value, &bias.value)?, Cache::Input(x.clone()))),
            Layer::Relu => {
                let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
                let data = x.data().iter().map(|&v| v.max(0.0)).collect();
                Ok((Tensor::new(x.shape().to_vec(), data)?, Cache::ReluMask(mask)))
            }
            Layer::MaxPool2 => {
                let (out, argmax) = maxpool_forward(x)?;
                Ok((out, Cache::PoolArgmax { input_shape: x.shape().to_vec(), argmax }))
            }
            Layer::Flatten => {
                let b = x.batch();
                let features = if b == 0 { 0 } else { x.len() / b };
                Ok((x.clone().reshape(vec![b, features]), Cache::Shape(x.shape().to_vec())))
            }
            Layer::Dense { weight, bias } => Ok((dense_forward(x, &weight.value, &bias.value)?, Cache::Input(x.clone()))),
        }
    }

    /// Accumulates parameter gradients (when trainable) and returns the
    /// gradient with respect to the layer input when `want_input` is set.
    fn backward(&mut self, cache: &Cache, grad_out: &Tensor, want_input: bool) -> Option<Tensor> {
        match (self, cache) {
            (Layer::Conv3x3 { weight, bias }, Cache::Input(x)) => conv3x3_backward(x, weight, bias, grad_out, want_input),
            (Layer::Dense { weight, bias }, Cache::Input(x)) => dense_backward(x, weight, bias, grad_out, want_input),
            (Layer::Relu, Cache::ReluMask(mask)) => want_input.then(|| {
                let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
                Tensor::new(grad_out.shape().to_vec(), data).expect("mask matches")
            }),
            (Layer::MaxPool2, Cache::PoolArgmax { input_shape, argmax }) => want_input.then(|| {
                let mut g = Tensor::zeros(input_shape.clone());
                for (&src, &d) in argmax.iter().zip(grad_out.data()) {
                    g.data_mut()[src] += d;
                }
                g
            }),
            (Layer::Flatten, Cache::Shape(shape)) => want_input.then(|| grad_out.clone().reshape(shape.clone())),
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

fn dims4(x: &Tensor) -> Result<(usize, usize, usize, usize), ModelError> {
    match *x.shape() {
        [b, c, h, w] => Ok((b, c, h, w)),
        ref s => Err(ModelError::ShapeMismatch(format!("expected a 4-d activation, got {s:?}"))),
    }
}

fn conv3x3_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, ModelError> {
    let (b, c_in, h, w) = dims4(x)?;
    let c_out = weight.shape()[0];
    if weight.shape()[1] != c_in {
        return Err(ModelError::ShapeMismatch(format!("conv expects {} input channels, got {c_in}", weight.shape()[1])));
    }
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![0.0; b * c_out * h * w];
    for n in 0..b {
        for o in 0..c_out {
            let plane = &mut out[(n * c_out + o) * h * w..(n * c_out + o + 1) * h * w];
            plane.iter_mut().for_each(|v| *v = bias.data()[o]);
            for c in 0..c_in {
                let src = &xd[(n * c_in + c) * h * w..(n * c_in + c + 1) * h * w];
                let k = &wd[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = k[ky * 3 + kx];
                        // output rows/cols whose tap lands inside the input
                        let (y_lo, y_hi) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                        let (x_lo, x_hi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                        for y in y_lo..y_hi {
                            let sy = y + ky - 1;
                            let row_out = &mut plane[y * w..(y + 1) * w];
                            let row_in = &src[sy * w..(sy + 1) * w];
                            for xo in x_lo..x_hi {
                                row_out[xo] += wv * row_in[xo + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, c_out, h, w], out)
}

fn conv3x3_backward(x: &Tensor, weight: &mut Param, bias: &mut Param, g: &Tensor, want_input: bool) -> Option<Tensor> {
    let (b, c_in, h, w) = dims4(x).expect("cached input is 4-d");
    let c_out = weight.value.shape()[0];
    let (xd, gd) = (x.data(), g.data());
    if bias.trainable {
        for n in 0..b {
            for o in 0..c_out {
                bias.grad[o] += gd[(n * c_out + o) * h * w..(n * c_out + o + 1) * h * w].iter().sum::<f64>();
            }
        }
    }
    let mut gin = want_input.then(|| vec![0.0; xd.len()]);
    if !weight.trainable && gin.is_none() {
        return None;
    }
    let wd = weight.value.data().to_vec();
    for n in 0..b {
        for o in 0..c_out {
            let gplane = &gd[(n * c_out + o) * h * w..(n * c_out + o + 1) * h * w];
            for c in 0..c_in {
                let base_in = (n * c_in + c) * h * w;
                let src = &xd[base_in..base_in + h * w];
                let kidx = (o * c_in + c) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (y_lo, y_hi) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                        let (x_lo, x_hi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                        let wv = wd[kidx + ky * 3 + kx];
                        let mut acc = 0.0;
                        for y in y_lo..y_hi {
                            let sy = y + ky - 1;
                            for xo in x_lo..x_hi {
                                let gv = gplane[y * w + xo];
                                acc += gv * src[sy * w + xo + kx - 1];
                                if let Some(gi) = gin.as_mut() {
                                    gi[base_in + sy * w + xo + kx - 1] += wv * gv;
                                }
                            }
                        }
                        if weight.trainable {
                            weight.grad[kidx + ky * 3 + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    gin.map(|d| Tensor::new(x.shape().to_vec(), d).expect("shape preserved"))
}

fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>), ModelError> {
    let (b, c, h, w) = dims4(x)?;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let xd = x.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * xo + dx;
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, argmax))
}

fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, ModelError> {
    let (out_f, in_f) = (weight.shape()[0], weight.shape()[1]);
    let [b, f] = *x.shape() else {
        return Err(ModelError::ShapeMismatch(format!("dense expects [batch, features], got {:?}", x.shape())));
    };
    if f != in_f {
        return Err(ModelError::ShapeMismatch(format!("dense expects {in_f} features, got {f}")));
    }
    let mut out = Vec::with_capacity(b * out_f);
    for row in x.data().chunks_exact(in_f) {
        for (o, wrow) in weight.data().chunks_exact(in_f).enumerate() {
            out.push(bias.data()[o] + wrow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    Tensor::new(vec![b, out_f], out)
}

fn dense_backward(x: &Tensor, weight: &mut Param, bias: &mut Param, g: &Tensor, want_input: bool) -> Option<Tensor> {
    let (out_f, in_f) = (weight.value.shape()[0], weight.value.shape()[1]);
    for (row, grow) in x.data().chunks_exact(in_f).zip(g.data().chunks_exact(out_f)) {
        if bias.trainable {
            bias.grad.iter_mut().zip(grow).for_each(|(bg, &gv)| *bg += gv);
        }
        if weight.trainable {
            for (o, &gv) in grow.iter().enumerate() {
                if gv != 0.0 {
                    let wg = &mut weight.grad[o * in_f..(o + 1) * in_f];
                    wg.iter_mut().zip(row).for_each(|(wgv, &xv)| *wgv += gv * xv);
                }
            }
        }
    }
    want_input.then(|| {
        let mut gin = Vec::with_capacity(x.len());
        for grow in g.data().chunks_exact(out_f) {
            let mut acc = vec![0.0; in_f];
            for (wrow, &gv) in weight.value.data().chunks_exact(in_f).zip(grow) {
                if gv != 0.0 {
                    acc.iter_mut().zip(wrow).for_each(|(a, &wv)| *a += gv * wv);
                }
            }
            gin.extend(acc);
        }
        Tensor::new(x.shape().to_vec(), gin).expect("shape preserved")
    })
}

/// An ordered stack of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().flat_map(Layer::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut)
    }

    pub fn any_trainable(&self) -> bool {
        self.params().any(|p| p.trainable)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?.0;
        }
        Ok(cur)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Vec<Cache>), ModelError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, cache) = layer.forward(&cur)?;
            caches.push(cache);
            cur = next;
        }
        Ok((cur, caches))
    }

    /// Backpropagates through the stack. Returns the input gradient when
    /// `want_input` is set.
    pub(crate) fn backward(&mut self, caches: &[Cache], grad_out: Tensor, want_input: bool) -> Option<Tensor> {
        // the first trainable layer bounds how far back gradients must flow
        let first_trainable = self.layers.iter().position(|l| l.params().iter().any(|p| p.trainable));
        let stop = if want_input { 0 } else { first_trainable.unwrap_or(self.layers.len()) };
        let mut grad = grad_out;
        for i in (stop..self.layers.len()).rev() {
            let need_input = i > stop || want_input;
            match self.layers[i].backward(&caches[i], &grad, need_input) {
                Some(g) => grad = g,
                None => return None,
            }
        }
        want_input.then_some(grad)
    }
}
