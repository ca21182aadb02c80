//! Layer kinds of the engine. Spatial tensors are `H x W x C`, vectors are rank 1.

use rand::{Rng, RngCore};

use super::tensor::expect_same_shape;
use super::{NnError, Scalar, Tensor};

/// Forward-pass mode. Only dropout consumes the RNG.
pub enum Mode<'a> {
    Inference,
    Training(&'a mut dyn RngCore),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Training(_))
    }
}

/// Per-layer data saved by the forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Aux<S> {
    None,
    /// Dropout multipliers (0 or `1/(1-rate)`).
    Mask(Vec<S>),
    /// Flat input index of each pooled output.
    Argmax(Vec<usize>),
}

pub trait Layer<S: Scalar>: Send + Sync + std::fmt::Debug {
    fn kind(&self) -> &'static str;

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError>;

    fn forward(&self, input: &Tensor<S>, mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError>;

    /// Returns the input gradient when `need_input_grad` is set, and adds
    /// parameter gradients into `param_grads` (same order as [`Layer::params`]).
    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        aux: &Aux<S>,
        param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError>;

    fn params(&self) -> &[Tensor<S>] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut []
    }

    /// Names of the entries of [`Layer::params`].
    fn param_names(&self) -> &'static [&'static str] {
        &[]
    }

    /// Re-draws trainable parameters. Parameter-free layers ignore this.
    fn init(&mut self, _rng: &mut dyn RngCore) {}
}

fn spatial(shape: &[usize]) -> Result<(usize, usize, usize), NnError> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(NnError::ShapeMismatch(format!("expected H x W x C, got {shape:?}"))),
    }
}

/// He-uniform initialisation limit for a ReLU-fed layer.
pub(crate) fn he_uniform<S: Scalar>(rng: &mut dyn RngCore, fan_in: usize, len: usize) -> Vec<S> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| S::from_f64(rng.gen_range(-limit..limit))).collect()
}

/// Output positions processed per im2col block.
const CONV_BLOCK: usize = 2048;

/// Zero same-padded, stride-1 2-D convolution with an odd square kernel.
///
/// `weight` has shape `[k, k, in, out]` and is used as a `(k*k*in) x out`
/// matrix against im2col blocks of the input.
#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    params: [Tensor<S>; 2],
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self, NnError> {
        if in_channels == 0 || out_channels == 0 || kernel % 2 == 0 {
            return Err(NnError::InvalidLayer(format!(
                "conv {in_channels}->{out_channels} with kernel {kernel}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            params: [
                Tensor::zeros(vec![kernel, kernel, in_channels, out_channels]),
                Tensor::zeros(vec![out_channels]),
            ],
        })
    }

    pub fn with_params(weight: Tensor<S>, bias: Tensor<S>) -> Result<Self, NnError> {
        let (k, k2, cin, cout) = match *weight.shape() {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(NnError::ShapeMismatch(format!("conv weight {:?}", weight.shape()))),
        };
        if k != k2 {
            return Err(NnError::ShapeMismatch("non-square kernel".into()));
        }
        let mut conv = Self::new(cin, cout, k)?;
        expect_same_shape(bias.shape(), &[cout])?;
        conv.params = [weight, bias];
        Ok(conv)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    /// Fills `cols` with the im2col rows for output positions `p0..p0+rows`.
    fn im2col(&self, input: &[S], h: usize, w: usize, p0: usize, rows: usize, cols: &mut [S]) {
        let (k, cin) = (self.kernel, self.in_channels);
        let pad = (k / 2) as isize;
        let patch = self.patch_len();
        for r in 0..rows {
            let p = p0 + r;
            let (i, j) = ((p / w) as isize, (p % w) as isize);
            let row = &mut cols[r * patch..(r + 1) * patch];
            for di in 0..k {
                let y = i + di as isize - pad;
                for dj in 0..k {
                    let x = j + dj as isize - pad;
                    let dst = &mut row[(di * k + dj) * cin..(di * k + dj + 1) * cin];
                    if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                        dst.fill(S::zero());
                    } else {
                        let src = (y as usize * w + x as usize) * cin;
                        dst.copy_from_slice(&input[src..src + cin]);
                    }
                }
            }
        }
    }

    fn col2im_add(&self, grad_cols: &[S], h: usize, w: usize, p0: usize, rows: usize, grad_in: &mut [S]) {
        let (k, cin) = (self.kernel, self.in_channels);
        let pad = (k / 2) as isize;
        let patch = self.patch_len();
        for r in 0..rows {
            let p = p0 + r;
            let (i, j) = ((p / w) as isize, (p % w) as isize);
            let row = &grad_cols[r * patch..(r + 1) * patch];
            for di in 0..k {
                let y = i + di as isize - pad;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for dj in 0..k {
                    let x = j + dj as isize - pad;
                    if x < 0 || x >= w as isize {
                        continue;
                    }
                    let src = &row[(di * k + dj) * cin..(di * k + dj + 1) * cin];
                    let dst = (y as usize * w + x as usize) * cin;
                    for (g, &s) in grad_in[dst..dst + cin].iter_mut().zip(src) {
                        *g += s;
                    }
                }
            }
        }
    }
}

impl<S: Scalar> Layer<S> for Conv2d<S> {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let (h, w, c) = spatial(input)?;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        Ok(vec![h, w, self.out_channels])
    }

    fn forward(&self, input: &Tensor<S>, _mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError> {
        let out_shape = self.output_shape(input.shape())?;
        let (h, w) = (out_shape[0], out_shape[1]);
        let cout = self.out_channels;
        let patch = self.patch_len();
        let positions = h * w;
        let bias = self.params[1].data();
        let mut out = Vec::with_capacity(positions * cout);
        for _ in 0..positions {
            out.extend_from_slice(bias);
        }
        let mut cols = vec![S::zero(); CONV_BLOCK.min(positions) * patch];
        let weight = self.params[0].data();
        let mut p0 = 0;
        while p0 < positions {
            let rows = CONV_BLOCK.min(positions - p0);
            self.im2col(input.data(), h, w, p0, rows, &mut cols);
            S::gemm(
                rows,
                patch,
                cout,
                S::one(),
                &cols[..rows * patch],
                (patch as isize, 1),
                weight,
                (cout as isize, 1),
                S::one(),
                &mut out[p0 * cout..(p0 + rows) * cout],
                (cout as isize, 1),
            );
            p0 += rows;
        }
        Ok((Tensor::new(out_shape, out)?, Aux::None))
    }

    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        _aux: &Aux<S>,
        param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        let out_shape = self.output_shape(input.shape())?;
        expect_same_shape(grad_out.shape(), &out_shape)?;
        if param_grads.len() != 2 {
            return Err(NnError::ShapeMismatch("conv expects two gradient slots".into()));
        }
        let (h, w) = (out_shape[0], out_shape[1]);
        let cout = self.out_channels;
        let patch = self.patch_len();
        let positions = h * w;
        let go = grad_out.data();

        let (gw, gb) = param_grads.split_at_mut(1);
        let gb = gb[0].data_mut();
        for row in go.chunks_exact(cout) {
            for (b, &g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }

        let mut grad_in = need_input_grad.then(|| vec![S::zero(); input.len()]);
        let block = CONV_BLOCK.min(positions);
        let mut cols = vec![S::zero(); block * patch];
        let mut grad_cols = if need_input_grad {
            vec![S::zero(); block * patch]
        } else {
            Vec::new()
        };
        let weight = self.params[0].data();
        let mut p0 = 0;
        while p0 < positions {
            let rows = block.min(positions - p0);
            let go_block = &go[p0 * cout..(p0 + rows) * cout];
            self.im2col(input.data(), h, w, p0, rows, &mut cols);
            // dW += cols^T * dOut
            S::gemm(
                patch,
                rows,
                cout,
                S::one(),
                &cols[..rows * patch],
                (1, patch as isize),
                go_block,
                (cout as isize, 1),
                S::one(),
                gw[0].data_mut(),
                (cout as isize, 1),
            );
            if let Some(gi) = grad_in.as_mut() {
                // dCols = dOut * W^T
                S::gemm(
                    rows,
                    cout,
                    patch,
                    S::one(),
                    go_block,
                    (cout as isize, 1),
                    weight,
                    (1, cout as isize),
                    S::zero(),
                    &mut grad_cols[..rows * patch],
                    (patch as isize, 1),
                );
                self.col2im_add(&grad_cols, h, w, p0, rows, gi);
            }
            p0 += rows;
        }
        grad_in
            .map(|g| Tensor::new(input.shape().to_vec(), g))
            .transpose()
    }

    fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["weight", "bias"]
    }
    /// He-uniform weights, zero bias.
    fn init(&mut self, rng: &mut dyn RngCore) {
        let fan_in = self.kernel * self.kernel * self.in_channels;
        let vals = he_uniform::<S>(rng, fan_in, self.params[0].len());
        self.params[0].data_mut().copy_from_slice(&vals);
        self.params[1].fill(S::zero());
    }
}

/// Fully connected layer `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense<S> {
    in_dim: usize,
    out_dim: usize,
    params: [Tensor<S>; 2],
}

impl<S: Scalar> Dense<S> {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<Self, NnError> {
        if in_dim == 0 || out_dim == 0 {
            return Err(NnError::InvalidLayer(format!("dense {in_dim}->{out_dim}")));
        }
        Ok(Self {
            in_dim,
            out_dim,
            params: [Tensor::zeros(vec![out_dim, in_dim]), Tensor::zeros(vec![out_dim])],
        })
    }

    pub fn with_params(weight: Tensor<S>, bias: Tensor<S>) -> Result<Self, NnError> {
        let (out_dim, in_dim) = match *weight.shape() {
            [o, i] => (o, i),
            _ => return Err(NnError::ShapeMismatch(format!("dense weight {:?}", weight.shape()))),
        };
        expect_same_shape(bias.shape(), &[out_dim])?;
        Ok(Self {
            in_dim,
            out_dim,
            params: [weight, bias],
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
}

impl<S: Scalar> Layer<S> for Dense<S> {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        if input != [self.in_dim] {
            return Err(NnError::ShapeMismatch(format!(
                "dense expects [{}], got {input:?}",
                self.in_dim
            )));
        }
        Ok(vec![self.out_dim])
    }

    fn forward(&self, input: &Tensor<S>, _mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError> {
        self.output_shape(input.shape())?;
        let x = input.data();
        let w = self.params[0].data();
        let out = self.params[1]
            .data()
            .iter()
            .zip(w.chunks_exact(self.in_dim))
            .map(|(&b, row)| {
                let acc: f64 = row.iter().zip(x).map(|(&a, &v)| a.as_f64() * v.as_f64()).sum();
                S::from_f64(acc + b.as_f64())
            })
            .collect();
        Ok((Tensor::new(vec![self.out_dim], out)?, Aux::None))
    }

    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        _aux: &Aux<S>,
        param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        self.output_shape(input.shape())?;
        expect_same_shape(grad_out.shape(), &[self.out_dim])?;
        if param_grads.len() != 2 {
            return Err(NnError::ShapeMismatch("dense expects two gradient slots".into()));
        }
        let x = input.data();
        let go = grad_out.data();
        let (gw, gb) = param_grads.split_at_mut(1);
        for ((row, b), &g) in gw[0]
            .data_mut()
            .chunks_exact_mut(self.in_dim)
            .zip(gb[0].data_mut())
            .zip(go)
        {
            *b += g;
            for (wv, &xv) in row.iter_mut().zip(x) {
                *wv += g * xv;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let w = self.params[0].data();
        let mut gi = vec![0.0f64; self.in_dim];
        for (row, &g) in w.chunks_exact(self.in_dim).zip(go) {
            for (acc, &wv) in gi.iter_mut().zip(row) {
                *acc += wv.as_f64() * g.as_f64();
            }
        }
        Ok(Some(Tensor::new(
            vec![self.in_dim],
            gi.into_iter().map(S::from_f64).collect(),
        )?))
    }

    fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["weight", "bias"]
    }
    /// He-uniform weights, zero bias.
    fn init(&mut self, rng: &mut dyn RngCore) {
        let vals = he_uniform::<S>(rng, self.in_dim, self.params[0].len());
        self.params[0].data_mut().copy_from_slice(&vals);
        self.params[1].fill(S::zero());
    }
}

/// `max(0, x)`; the subgradient at 0 is 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct Relu;

impl<S: Scalar> Layer<S> for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        Ok(input.to_vec())
    }

    fn forward(&self, input: &Tensor<S>, _mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError> {
        let out = input.data().iter().map(|&v| v.max(S::zero())).collect();
        Ok((Tensor::new(input.shape().to_vec(), out)?, Aux::None))
    }

    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        _aux: &Aux<S>,
        _param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        expect_same_shape(grad_out.shape(), input.shape())?;
        if !need_input_grad {
            return Ok(None);
        }
        let gi = input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > S::zero() { g } else { S::zero() })
            .collect();
        Ok(Some(Tensor::new(input.shape().to_vec(), gi)?))
    }
}

/// 2x2, stride-2 max pooling; odd trailing rows/columns are dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPool2d;

impl<S: Scalar> Layer<S> for MaxPool2d {
    fn kind(&self) -> &'static str {
        "maxpool2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let (h, w, c) = spatial(input)?;
        if h < 2 || w < 2 {
            return Err(NnError::ShapeMismatch(format!("cannot 2x2-pool {input:?}")));
        }
        Ok(vec![h / 2, w / 2, c])
    }

    fn forward(&self, input: &Tensor<S>, _mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError> {
        let out_shape = <Self as Layer<S>>::output_shape(self, input.shape())?;
        let (_, w, c) = spatial(input.shape())?;
        let (oh, ow) = (out_shape[0], out_shape[1]);
        let x = input.data();
        let mut out = Vec::with_capacity(oh * ow * c);
        let mut idx = Vec::with_capacity(oh * ow * c);
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best = (2 * i * w + 2 * j) * c + ch;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let cand = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                        if x[cand] > x[best] {
                            best = cand;
                        }
                    }
                    out.push(x[best]);
                    idx.push(best);
                }
            }
        }
        Ok((Tensor::new(out_shape, out)?, Aux::Argmax(idx)))
    }

    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        aux: &Aux<S>,
        _param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        expect_same_shape(grad_out.shape(), &<Self as Layer<S>>::output_shape(self, input.shape())?)?;
        route_to_argmax(grad_out, input, aux, need_input_grad)
    }
}

fn route_to_argmax<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    aux: &Aux<S>,
    need_input_grad: bool,
) -> Result<Option<Tensor<S>>, NnError> {
    let Aux::Argmax(idx) = aux else {
        return Err(NnError::ShapeMismatch("pool backward without argmax cache".into()));
    };
    if idx.len() != grad_out.len() {
        return Err(NnError::ShapeMismatch("argmax cache length".into()));
    }
    if !need_input_grad {
        return Ok(None);
    }
    let mut gi = vec![S::zero(); input.len()];
    for (&i, &g) in idx.iter().zip(grad_out.data()) {
        gi[i] += g;
    }
    Ok(Some(Tensor::new(input.shape().to_vec(), gi)?))
}

/// Reduces `H x W x C` to `[C]` by taking each channel's maximum.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalMaxPool;

impl<S: Scalar> Layer<S> for GlobalMaxPool {
    fn kind(&self) -> &'static str {
        "global_maxpool"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let (_, _, c) = spatial(input)?;
        Ok(vec![c])
    }

    fn forward(&self, input: &Tensor<S>, _mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError> {
        let (_, _, c) = spatial(input.shape())?;
        let x = input.data();
        let mut idx: Vec<usize> = (0..c).collect();
        for (p, row) in x.chunks_exact(c).enumerate().skip(1) {
            for (ch, &v) in row.iter().enumerate() {
                if v > x[idx[ch]] {
                    idx[ch] = p * c + ch;
                }
            }
        }
        let out = idx.iter().map(|&i| x[i]).collect();
        Ok((Tensor::new(vec![c], out)?, Aux::Argmax(idx)))
    }

    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        aux: &Aux<S>,
        _param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        expect_same_shape(grad_out.shape(), &<Self as Layer<S>>::output_shape(self, input.shape())?)?;
        route_to_argmax(grad_out, input, aux, need_input_grad)
    }
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)` during training,
/// identity at inference.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidLayer(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<S: Scalar> Layer<S> for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        Ok(input.to_vec())
    }

    fn forward(&self, input: &Tensor<S>, mode: &mut Mode<'_>) -> Result<(Tensor<S>, Aux<S>), NnError> {
        let rng = match mode {
            Mode::Training(rng) if self.rate > 0.0 => rng,
            _ => return Ok((input.clone(), Aux::None)),
        };
        let keep = S::from_f64(1.0 / (1.0 - self.rate));
        let mask: Vec<S> = (0..input.len())
            .map(|_| if rng.gen::<f64>() < self.rate { S::zero() } else { keep })
            .collect();
        let out = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok((Tensor::new(input.shape().to_vec(), out)?, Aux::Mask(mask)))
    }

    fn backward(
        &self,
        grad_out: &Tensor<S>,
        input: &Tensor<S>,
        aux: &Aux<S>,
        _param_grads: &mut [Tensor<S>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<S>>, NnError> {
        expect_same_shape(grad_out.shape(), input.shape())?;
        if !need_input_grad {
            return Ok(None);
        }
        match aux {
            Aux::Mask(mask) => {
                let gi = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Ok(Some(Tensor::new(input.shape().to_vec(), gi)?))
            }
            _ => Ok(Some(grad_out.clone())),
        }
    }
}
