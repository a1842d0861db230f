//! Fully-convolutional mask estimator with hand-written reverse mode.
//!
//! Every block pads the frequency axis by reflection and the time axis by
//! zeros, applies a `kernel_time x kernel_freq` convolution, an activation,
//! and a per-channel affine. Hidden blocks use ReLU and normalize across
//! channels at each (frame, bin) before their affine; the output block uses
//! tanh. A global scale and offset follow. No operation reads the absolute
//! bin index, so one parameter set serves any number of bins.
//!
//! Convolutions run as strided GEMMs over the padded map: with rows laid out
//! frame-major over the padded bin axis, the `kernel_freq` taps of one row
//! are contiguous, so each time tap is one product of an overlapping-row
//! view with a `(kernel_freq * in) x out` weight slab.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, shape, Error, Result};
use crate::features::{FeatureTensor, MaskTensor};
use crate::kernels::{row_conv, row_conv_weight_grad, Tap};
use crate::real::Real;
use crate::tensor::Tensor3;

pub const NORM_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoreConfig {
    pub num_hidden_blocks: usize,
    pub hidden_filters: usize,
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub in_channels: usize,
    pub mask_channels: usize,
}

impl CoreConfig {
    /// 24 hidden blocks of 32 filters with 3x5 kernels.
    pub fn paper(audio_channels: usize) -> Self {
        Self::with_size(audio_channels, 24, 32)
    }

    pub fn with_size(audio_channels: usize, num_hidden_blocks: usize, hidden_filters: usize) -> Self {
        Self {
            num_hidden_blocks,
            hidden_filters,
            kernel_time: 3,
            kernel_freq: 5,
            in_channels: 2 * audio_channels,
            mask_channels: 2 * audio_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_hidden_blocks == 0
            || self.hidden_filters == 0
            || self.in_channels == 0
            || self.mask_channels == 0
        {
            return Err(invalid("network block and channel counts must be positive"));
        }
        if self.kernel_time % 2 == 0 || self.kernel_freq % 2 == 0 {
            return Err(invalid("kernel sizes must be odd"));
        }
        Ok(())
    }

    /// `(in, out)` channels of every block, output block last.
    pub fn block_channels(&self) -> Vec<(usize, usize)> {
        let h = self.hidden_filters;
        let mut out = Vec::with_capacity(self.num_hidden_blocks + 1);
        out.push((self.in_channels, h));
        out.extend((1..self.num_hidden_blocks).map(|_| (h, h)));
        out.push((h, self.mask_channels));
        out
    }

    pub fn num_blocks(&self) -> usize {
        self.num_hidden_blocks + 1
    }

    /// Bins on either side that can influence one output bin.
    pub fn receptive_half_width(&self) -> usize {
        self.num_blocks() * (self.kernel_freq / 2)
    }
}

/// Trainable scalar count. Note that it takes no sampling frequency.
pub fn param_count(config: &CoreConfig) -> usize {
    let taps = config.kernel_time * config.kernel_freq;
    config
        .block_channels()
        .iter()
        .map(|&(cin, cout)| taps * cin * cout + cout + 2 * cout)
        .sum::<usize>()
        + 2
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[kernel_time][kernel_freq][in][out]`
    pub weight: Range<usize>,
    pub bias: Range<usize>,
    pub norm_gain: Range<usize>,
    pub norm_bias: Range<usize>,
}

fn layouts(config: &CoreConfig) -> Vec<BlockLayout> {
    let taps = config.kernel_time * config.kernel_freq;
    let mut at = 0;
    let mut take = |n: usize| {
        at += n;
        at - n..at
    };
    config
        .block_channels()
        .into_iter()
        .map(|(cin, cout)| BlockLayout {
            in_channels: cin,
            out_channels: cout,
            weight: take(taps * cin * cout),
            bias: take(cout),
            norm_gain: take(cout),
            norm_bias: take(cout),
        })
        .collect()
}

/// Flat parameter vector: blocks in order (weight, bias, norm gain, norm
/// bias), then mask scale and mask offset. Also used for gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreParameters<T> {
    config: CoreConfig,
    layouts: Vec<BlockLayout>,
    data: Vec<T>,
}

/// Which post-convolution path a block takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// ReLU, then cross-channel normalization with per-channel affine.
    Hidden,
    /// tanh, then per-channel affine.
    Output,
}

/// Borrowed parameters of one block.
#[derive(Clone, Copy, Debug)]
pub struct BlockParams<'a, T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub weight: &'a [T],
    pub bias: &'a [T],
    pub norm_gain: &'a [T],
    pub norm_bias: &'a [T],
}

/// Mutable gradient slots of one block.
#[derive(Debug)]
pub struct BlockGrads<'a, T> {
    pub weight: &'a mut [T],
    pub bias: &'a mut [T],
    pub norm_gain: &'a mut [T],
    pub norm_bias: &'a mut [T],
}

impl<T: Real> CoreParameters<T> {
    pub fn zeros(config: CoreConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { layouts: layouts(&config), data: vec![T::zero(); param_count(&config)], config })
    }

    /// Uniform fan-in scaled conv weights, zero biases, unit norm gains,
    /// unit mask scale and zero mask offset.
    pub fn init(config: CoreConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = config.kernel_time * config.kernel_freq;
        for layout in params.layouts.clone() {
            let bound = (6.0 / (taps * layout.in_channels) as f64).sqrt();
            for w in &mut params.data[layout.weight] {
                *w = T::of(rng.random_range(-bound..bound));
            }
            params.data[layout.norm_gain].iter_mut().for_each(|g| *g = T::one());
        }
        params.set_mask_scaling(T::one(), T::zero());
        Ok(params)
    }

    pub fn from_vec(config: CoreConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        if data.len() != param_count(&config) {
            return Err(shape(format!(
                "{} parameters given, configuration needs {}",
                data.len(),
                param_count(&config)
            )));
        }
        Ok(Self { layouts: layouts(&config), data, config })
    }

    pub fn zeros_like(&self) -> Self {
        Self { config: self.config, layouts: self.layouts.clone(), data: vec![T::zero(); self.data.len()] }
    }

    pub fn config(&self) -> &CoreConfig {
        &self.config
    }

    pub fn layouts(&self) -> &[BlockLayout] {
        &self.layouts
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn block(&self, index: usize) -> BlockParams<'_, T> {
        let l = &self.layouts[index];
        BlockParams {
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            kernel_time: self.config.kernel_time,
            kernel_freq: self.config.kernel_freq,
            weight: &self.data[l.weight.clone()],
            bias: &self.data[l.bias.clone()],
            norm_gain: &self.data[l.norm_gain.clone()],
            norm_bias: &self.data[l.norm_bias.clone()],
        }
    }

    pub fn block_grads(&mut self, index: usize) -> BlockGrads<'_, T> {
        let l = &self.layouts[index];
        let block = &mut self.data[l.weight.start..l.norm_bias.end];
        let (weight, rest) = block.split_at_mut(l.weight.len());
        let (bias, rest) = rest.split_at_mut(l.bias.len());
        let (norm_gain, norm_bias) = rest.split_at_mut(l.norm_gain.len());
        BlockGrads { weight, bias, norm_gain, norm_bias }
    }

    pub fn mask_scale(&self) -> T {
        self.data[self.data.len() - 2]
    }

    pub fn mask_offset(&self) -> T {
        self.data[self.data.len() - 1]
    }

    pub fn set_mask_scaling(&mut self, scale: T, offset: T) {
        let n = self.data.len();
        self.data[n - 2] = scale;
        self.data[n - 1] = offset;
    }

    /// Same parameters in another precision.
    pub fn cast<U: Real>(&self) -> CoreParameters<U> {
        CoreParameters {
            config: self.config,
            layouts: self.layouts.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `offset + scale * y` elementwise.
pub fn scale_masks<T: Real>(y: &MaskTensor<T>, scale: T, offset: T) -> MaskTensor<T> {
    y.map(|v| offset + scale * v)
}

fn reflect(index: isize, len: usize) -> usize {
    let len = len as isize;
    let r = if index < 0 {
        -index
    } else if index >= len {
        2 * (len - 1) - index
    } else {
        index
    };
    r as usize
}

struct Dims {
    frames: usize,
    bins: usize,
    cin: usize,
    cout: usize,
    kt: usize,
    kf: usize,
}

impl Dims {
    fn padded_bins(&self) -> usize {
        self.bins + 2 * (self.kf / 2)
    }

    fn padded_frames(&self) -> usize {
        self.frames + 2 * (self.kt / 2)
    }

    fn rows(&self) -> usize {
        self.frames * self.padded_bins()
    }
}

fn check_block<T: Real>(x: &Tensor3<T>, block: &BlockParams<'_, T>) -> Result<Dims> {
    if x.channels() != block.in_channels {
        return Err(shape(format!(
            "block expects {} input channels, got {}",
            block.in_channels,
            x.channels()
        )));
    }
    let pf = block.kernel_freq / 2;
    if x.bins() <= pf || x.bins() < 3 {
        return Err(invalid(format!("{} bins are too few for reflection padding", x.bins())));
    }
    if x.frames() == 0 {
        return Err(invalid("empty feature map"));
    }
    Ok(Dims {
        frames: x.frames(),
        bins: x.bins(),
        cin: block.in_channels,
        cout: block.out_channels,
        kt: block.kernel_time,
        kf: block.kernel_freq,
    })
}

/// Time-zero / frequency-reflection padded copy with `kf` spare positions at
/// the end so the last overlapping GEMM row stays in bounds.
fn pad_input<T: Real>(x: &Tensor3<T>, d: &Dims) -> Vec<T> {
    let (fp, pf, pt) = (d.padded_bins(), d.kf / 2, d.kt / 2);
    let mut padded = vec![T::zero(); (d.padded_frames() * fp + d.kf) * d.cin];
    for t in 0..d.frames {
        let src = &x.data()[t * d.bins * d.cin..(t + 1) * d.bins * d.cin];
        let dst = &mut padded[(t + pt) * fp * d.cin..(t + pt + 1) * fp * d.cin];
        for (p, cell) in dst.chunks_exact_mut(d.cin).enumerate() {
            let f = reflect(p as isize - pf as isize, d.bins);
            cell.copy_from_slice(&src[f * d.cin..(f + 1) * d.cin]);
        }
    }
    padded
}

/// Convolution output for every padded row; rows whose bin index falls in
/// the padding are junk and ignored by callers.
fn conv_rows<T: Real>(padded: &[T], block: &BlockParams<'_, T>, d: &Dims) -> Vec<T> {
    let (fp, rows) = (d.padded_bins(), d.rows());
    let mut z = vec![T::zero(); rows * d.cout];
    for row in z.chunks_exact_mut(d.cout) {
        row.copy_from_slice(block.bias);
    }
    let slab = d.kf * d.cin * d.cout;
    let taps: Vec<Tap<'_, T>> = (0..d.kt)
        .map(|dt| Tap { offset: dt * fp * d.cin, weight: &block.weight[dt * slab..(dt + 1) * slab] })
        .collect();
    row_conv(padded, d.cin, rows, d.kf * d.cin, d.cout, &taps, &mut z);
    z
}

struct BlockTrace<T> {
    padded: Vec<T>,
    /// activation output, `[frame][bin][out]`
    act: Vec<T>,
    /// normalized activation (hidden blocks only)
    normed: Vec<T>,
    inv_std: Vec<T>,
    floored: Vec<bool>,
}

fn block_forward<T: Real>(
    x: &Tensor3<T>,
    block: &BlockParams<'_, T>,
    kind: BlockKind,
    record: bool,
) -> Result<(Tensor3<T>, Option<BlockTrace<T>>)> {
    let d = check_block(x, block)?;
    let padded = pad_input(x, &d);
    let z = conv_rows(&padded, block, &d);
    let (fp, cout) = (d.padded_bins(), d.cout);
    let positions = d.frames * d.bins;
    let mut out = Tensor3::zeros(d.frames, d.bins, cout);
    let mut act = if record { vec![T::zero(); positions * cout] } else { Vec::new() };
    let mut normed = if record && kind == BlockKind::Hidden { vec![T::zero(); positions * cout] } else { Vec::new() };
    let mut inv_std = if record && kind == BlockKind::Hidden { vec![T::zero(); positions] } else { Vec::new() };
    let mut floored = if record && kind == BlockKind::Hidden { vec![false; positions] } else { Vec::new() };
    let floor = T::of(NORM_VARIANCE_FLOOR);
    let n = T::of(cout as f64);
    let mut a = vec![T::zero(); cout];
    for t in 0..d.frames {
        for f in 0..d.bins {
            let pos = t * d.bins + f;
            let zr = &z[(t * fp + f) * cout..(t * fp + f + 1) * cout];
            let y = &mut out.data_mut()[pos * cout..(pos + 1) * cout];
            match kind {
                BlockKind::Hidden => {
                    for (ai, &zi) in a.iter_mut().zip(zr) {
                        *ai = zi.max(T::zero());
                    }
                    let mean = a.iter().copied().sum::<T>() / n;
                    let var = a.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                    let is_floored = var <= floor;
                    let inv = T::one() / var.max(floor).sqrt();
                    for c in 0..cout {
                        let nh = (a[c] - mean) * inv;
                        y[c] = block.norm_gain[c] * nh + block.norm_bias[c];
                        if record {
                            normed[pos * cout + c] = nh;
                        }
                    }
                    if record {
                        inv_std[pos] = inv;
                        floored[pos] = is_floored;
                    }
                }
                BlockKind::Output => {
                    for c in 0..cout {
                        a[c] = zr[c].tanh();
                        y[c] = block.norm_gain[c] * a[c] + block.norm_bias[c];
                    }
                }
            }
            if record {
                act[pos * cout..(pos + 1) * cout].copy_from_slice(&a);
            }
        }
    }
    let trace = record.then_some(BlockTrace { padded, act, normed, inv_std, floored });
    Ok((out, trace))
}

/// One convolutional block, inference only.
pub fn conv_block_forward<T: Real>(x: &Tensor3<T>, block: &BlockParams<'_, T>, kind: BlockKind) -> Result<Tensor3<T>> {
    block_forward(x, block, kind, false).map(|(y, _)| y)
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the block input when `want_input` is set.
fn block_backward<T: Real>(
    trace: &BlockTrace<T>,
    block: &BlockParams<'_, T>,
    kind: BlockKind,
    d: &Dims,
    grad_out: &[T],
    grads: BlockGrads<'_, T>,
    want_input: bool,
) -> Option<Tensor3<T>> {
    let (fp, cout, cin) = (d.padded_bins(), d.cout, d.cin);
    let rows = d.rows();
    let n = T::of(cout as f64);
    // gradient wrt convolution output, junk rows left at zero
    let mut dz = vec![T::zero(); rows * cout];
    let mut g = vec![T::zero(); cout];
    for t in 0..d.frames {
        for f in 0..d.bins {
            let pos = t * d.bins + f;
            let dy = &grad_out[pos * cout..(pos + 1) * cout];
            let a = &trace.act[pos * cout..(pos + 1) * cout];
            let dzr = &mut dz[(t * fp + f) * cout..(t * fp + f + 1) * cout];
            match kind {
                BlockKind::Hidden => {
                    let nh = &trace.normed[pos * cout..(pos + 1) * cout];
                    for c in 0..cout {
                        grads.norm_gain[c] += dy[c] * nh[c];
                        grads.norm_bias[c] += dy[c];
                        g[c] = dy[c] * block.norm_gain[c];
                    }
                    let mean_g = g.iter().copied().sum::<T>() / n;
                    let inv = trace.inv_std[pos];
                    let mean_gn = if trace.floored[pos] {
                        T::zero()
                    } else {
                        g.iter().zip(nh).map(|(&gi, &ni)| gi * ni).sum::<T>() / n
                    };
                    for c in 0..cout {
                        let da = inv * (g[c] - mean_g - nh[c] * mean_gn);
                        dzr[c] = if a[c] > T::zero() { da } else { T::zero() };
                    }
                }
                BlockKind::Output => {
                    for c in 0..cout {
                        grads.norm_gain[c] += dy[c] * a[c];
                        grads.norm_bias[c] += dy[c];
                        dzr[c] = dy[c] * block.norm_gain[c] * (T::one() - a[c] * a[c]);
                    }
                }
            }
            for c in 0..cout {
                grads.bias[c] += dzr[c];
            }
        }
    }
    let slab = d.kf * cin * cout;
    for dt in 0..d.kt {
        row_conv_weight_grad(
            &trace.padded,
            dt * fp * cin,
            cin,
            rows,
            d.kf * cin,
            cout,
            &dz,
            &mut grads.weight[dt * slab..(dt + 1) * slab],
        );
    }
    if !want_input {
        return None;
    }
    // input gradient = correlation of the zero-extended dz with the
    // flipped, transposed kernel, then fold the padding back
    let (kt, kf) = (d.kt, d.kf);
    let lead = (kt - 1) * fp + (kf - 1);
    let prows = d.padded_frames() * fp;
    let mut dz_ext = vec![T::zero(); (prows + (kt - 1) * fp + kf) * cout];
    dz_ext[lead * cout..lead * cout + dz.len()].copy_from_slice(&dz);
    let mut flipped = vec![T::zero(); kt * kf * cout * cin];
    for dt in 0..kt {
        for j in 0..kf {
            let src = ((kt - 1 - dt) * kf + (kf - 1 - j)) * cin * cout;
            let dst = (dt * kf + j) * cout * cin;
            for ci in 0..cin {
                for co in 0..cout {
                    flipped[dst + co * cin + ci] = block.weight[src + ci * cout + co];
                }
            }
        }
    }
    let mut dpad = vec![T::zero(); prows * cin];
    let fslab = kf * cout * cin;
    let taps: Vec<Tap<'_, T>> = (0..kt)
        .map(|dt| Tap { offset: dt * fp * cout, weight: &flipped[dt * fslab..(dt + 1) * fslab] })
        .collect();
    row_conv(&dz_ext, cout, prows, kf * cout, cin, &taps, &mut dpad);
    let (pt, pf) = (kt / 2, kf / 2);
    let mut dx = Tensor3::zeros(d.frames, d.bins, cin);
    for t in 0..d.frames {
        let src = &dpad[(t + pt) * fp * cin..(t + pt + 1) * fp * cin];
        let dst = &mut dx.data_mut()[t * d.bins * cin..(t + 1) * d.bins * cin];
        for (p, cell) in src.chunks_exact(cin).enumerate() {
            let f = reflect(p as isize - pf as isize, d.bins);
            for (o, &v) in dst[f * cin..(f + 1) * cin].iter_mut().zip(cell) {
                *o += v;
            }
        }
    }
    Some(dx)
}

fn kind_of(index: usize, config: &CoreConfig) -> BlockKind {
    if index < config.num_hidden_blocks {
        BlockKind::Hidden
    } else {
        BlockKind::Output
    }
}

fn check_features<T: Real>(features: &FeatureTensor<T>, params: &CoreParameters<T>) -> Result<()> {
    if features.channels() != params.config.in_channels {
        return Err(shape(format!(
            "network expects {} feature channels, got {}",
            params.config.in_channels,
            features.channels()
        )));
    }
    Ok(())
}

/// Masks for `features`: hidden blocks, output block, then global scaling.
pub fn core_forward<T: Real>(features: &FeatureTensor<T>, params: &CoreParameters<T>) -> Result<MaskTensor<T>> {
    check_features(features, params)?;
    let mut x = features.clone();
    for i in 0..params.config.num_blocks() {
        x = conv_block_forward(&x, &params.block(i), kind_of(i, &params.config))?;
    }
    Ok(scale_masks(&x, params.mask_scale(), params.mask_offset()))
}

struct NetworkTrace<T> {
    blocks: Vec<(BlockTrace<T>, Dims)>,
    /// output block result before global scaling
    unscaled: Tensor3<T>,
}

/// Records one forward pass so that [`GradientTape::backward`] can return
/// gradients for every parameter.
pub struct GradientTape<T> {
    trace: Option<NetworkTrace<T>>,
}

impl<T: Real> Default for GradientTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> GradientTape<T> {
    pub fn new() -> Self {
        Self { trace: None }
    }

    pub fn forward(&mut self, features: &FeatureTensor<T>, params: &CoreParameters<T>) -> Result<MaskTensor<T>> {
        self.trace = None;
        check_features(features, params)?;
        let mut blocks = Vec::with_capacity(params.config.num_blocks());
        let mut x = features.clone();
        for i in 0..params.config.num_blocks() {
            let block = params.block(i);
            let d = check_block(&x, &block)?;
            let (y, trace) = block_forward(&x, &block, kind_of(i, &params.config), true)?;
            blocks.push((trace.expect("recorded"), d));
            x = y;
        }
        let masks = scale_masks(&x, params.mask_scale(), params.mask_offset());
        self.trace = Some(NetworkTrace { blocks, unscaled: x });
        Ok(masks)
    }

    /// Consumes the recorded pass.
    pub fn backward(&mut self, params: &CoreParameters<T>, grad_masks: &MaskTensor<T>) -> Result<CoreParameters<T>> {
        let trace = self.trace.take().ok_or(Error::State)?;
        if grad_masks.dims() != trace.unscaled.dims() {
            return Err(shape("mask gradient does not match the recorded forward pass"));
        }
        let mut grads = params.zeros_like();
        let scale = params.mask_scale();
        let (mut d_scale, mut d_offset) = (T::zero(), T::zero());
        for (&g, &y) in grad_masks.data().iter().zip(trace.unscaled.data()) {
            d_scale += g * y;
            d_offset += g;
        }
        grads.set_mask_scaling(d_scale, d_offset);
        let mut grad: Vec<T> = grad_masks.data().iter().map(|&g| g * scale).collect();
        for (i, (block_trace, d)) in trace.blocks.iter().enumerate().rev() {
            let block = params.block(i);
            let kind = kind_of(i, &params.config);
            let dx = block_backward(block_trace, &block, kind, d, &grad, grads.block_grads(i), i > 0);
            if let Some(dx) = dx {
                grad = dx.into_data();
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(frames: usize, bins: usize, channels: usize, seed: u64) -> Tensor3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = frames * bins * channels;
        Tensor3::from_vec(frames, bins, channels, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn published_parameter_counts() {
        assert_eq!(param_count(&CoreConfig::paper(2)), 359_438);
        assert_eq!(param_count(&CoreConfig::paper(1)), 357_512);
        assert_eq!(param_count(&CoreConfig::with_size(1, 2, 32)), 17_480);
    }

    #[test]
    fn layout_covers_every_parameter_once() {
        let p = CoreParameters::<f32>::zeros(CoreConfig::with_size(2, 3, 8)).unwrap();
        let mut next = 0;
        for l in p.layouts() {
            for r in [&l.weight, &l.bias, &l.norm_gain, &l.norm_bias] {
                assert_eq!(r.start, next);
                next = r.end;
            }
        }
        assert_eq!(next + 2, p.len());
    }

    #[test]
    fn reflection_mirrors_without_edge() {
        assert_eq!(reflect(-1, 8), 1);
        assert_eq!(reflect(-2, 8), 2);
        assert_eq!(reflect(8, 8), 6);
        assert_eq!(reflect(9, 8), 5);
        assert_eq!(reflect(3, 8), 3);
    }

    #[test]
    fn block_preserves_frames_and_bins() {
        let p = CoreParameters::<f64>::init(CoreConfig::with_size(1, 1, 6), 1).unwrap();
        for bins in [3, 4, 9] {
            let x = random_tensor(5, bins, 2, bins as u64);
            let y = conv_block_forward(&x, &p.block(0), BlockKind::Hidden).unwrap();
            assert_eq!(y.dims(), (5, bins, 6));
        }
        let x = random_tensor(5, 2, 2, 0);
        assert!(matches!(conv_block_forward(&x, &p.block(0), BlockKind::Hidden), Err(Error::InvalidArgument(_))));
        let x = random_tensor(5, 8, 3, 0);
        assert!(matches!(conv_block_forward(&x, &p.block(0), BlockKind::Hidden), Err(Error::Shape(_))));
    }

    /// Direct evaluation of one block without any GEMM tricks.
    fn naive_block(x: &Tensor3<f64>, b: &BlockParams<'_, f64>, kind: BlockKind) -> Tensor3<f64> {
        let (frames, bins, cin) = x.dims();
        let cout = b.out_channels;
        let (pt, pf) = (b.kernel_time as isize / 2, b.kernel_freq as isize / 2);
        let mut y = Tensor3::zeros(frames, bins, cout);
        for t in 0..frames {
            for f in 0..bins {
                let mut a = vec![0.0; cout];
                for co in 0..cout {
                    let mut z = b.bias[co];
                    for dt in 0..b.kernel_time {
                        let tt = t as isize + dt as isize - pt;
                        if tt < 0 || tt >= frames as isize {
                            continue;
                        }
                        for j in 0..b.kernel_freq {
                            let ff = reflect(f as isize + j as isize - pf, bins);
                            for ci in 0..cin {
                                let w = b.weight[((dt * b.kernel_freq + j) * cin + ci) * cout + co];
                                z += w * x.get(tt as usize, ff, ci);
                            }
                        }
                    }
                    a[co] = match kind {
                        BlockKind::Hidden => z.max(0.0),
                        BlockKind::Output => z.tanh(),
                    };
                }
                for co in 0..cout {
                    let v = match kind {
                        BlockKind::Hidden => {
                            let m = a.iter().sum::<f64>() / cout as f64;
                            let var = a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / cout as f64;
                            (a[co] - m) / var.max(NORM_VARIANCE_FLOOR).sqrt()
                        }
                        BlockKind::Output => a[co],
                    };
                    y.set(t, f, co, b.norm_gain[co] * v + b.norm_bias[co]);
                }
            }
        }
        y
    }

    #[test]
    fn gemm_convolution_matches_direct_sum() {
        let mut p = CoreParameters::<f64>::init(CoreConfig::with_size(1, 1, 5), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        p.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        let x = random_tensor(4, 7, 2, 3);
        let got = conv_block_forward(&x, &p.block(0), BlockKind::Hidden).unwrap();
        let want = naive_block(&x, &p.block(0), BlockKind::Hidden);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = random_tensor(4, 7, 5, 4);
        let got = conv_block_forward(&h, &p.block(1), BlockKind::Output).unwrap();
        let want = naive_block(&h, &p.block(1), BlockKind::Output);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_gives_zero_masks_at_init() {
        let p = CoreParameters::<f64>::init(CoreConfig::with_size(2, 3, 8), 5).unwrap();
        let m = core_forward(&Tensor3::zeros(4, 9, 4), &p).unwrap();
        assert_eq!(m.dims(), (4, 9, 4));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masks_stay_in_scaled_tanh_range() {
        let mut p = CoreParameters::<f64>::init(CoreConfig::with_size(1, 2, 8), 2).unwrap();
        p.set_mask_scaling(2.0, 0.5);
        let m = core_forward(&random_tensor(6, 12, 2, 1), &p).unwrap();
        assert!(m.data().iter().all(|&v| (-1.5..=2.5).contains(&v)));
    }

    #[test]
    fn scaling_op() {
        let y = Tensor3::from_vec(1, 1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(scale_masks(&y, 1.0, 0.0), y);
        assert_eq!(scale_masks(&y, 2.0, 0.5).data(), &[-1.5, 0.5, 2.5]);
        assert_eq!(scale_masks(&y, 0.0, 0.3).data(), &[0.3, 0.3, 0.3]);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let p = CoreParameters::<f64>::init(CoreConfig::with_size(1, 1, 4), 1).unwrap();
        let mut tape = GradientTape::new();
        assert_eq!(tape.backward(&p, &Tensor3::zeros(2, 4, 2)).unwrap_err(), Error::State);
    }

    #[test]
    fn same_parameters_serve_any_bin_count() {
        let p = CoreParameters::<f64>::init(CoreConfig::with_size(1, 2, 4), 3).unwrap();
        for bins in [5, 17, 40] {
            let m = core_forward(&random_tensor(3, bins, 2, 2), &p).unwrap();
            assert_eq!(m.dims(), (3, bins, 2));
        }
    }
}
