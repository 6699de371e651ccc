//! Sinogram-to-image network: a convolutional encoder down to a small
//! bottleneck, followed by a transposed-convolution decoder. The output is
//! in the canonical frame (window start at 0°).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conv::Padding;
use crate::error::{Error, Result};
use crate::float::Float;
use crate::graph::{BatchNormStats, Graph, Var};
use crate::params::Params;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Padded sinogram rows (181 for a 90° window at 0.5° steps).
    pub input_rows: usize,
    /// Detector columns.
    pub input_cols: usize,
    /// Adds a second input channel marking valid rows.
    pub use_mask_channel: bool,
    /// Multiplies the sinogram channel before the stem.
    pub input_scale: f64,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub block_kernel: usize,
    /// Channels of each encoder stage; the last is the bottleneck width.
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    pub bottleneck_spatial: [usize; 2],
    pub inverted_bottleneck_ratio: usize,
    /// Channels after each 2x transposed-convolution upsampling.
    pub decoder_stages: Vec<usize>,
    pub decoder_blocks: usize,
    pub output_size: usize,
    /// Scale of the Kaiming init for the projection conv closing each
    /// residual block.
    pub residual_init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// 181x560 sinograms to 512x512 images through an 8x8x512 bottleneck.
    pub fn full() -> Self {
        Self {
            input_rows: 181,
            input_cols: 560,
            use_mask_channel: true,
            input_scale: 0.02,
            stem_kernel: 4,
            stem_stride: 4,
            block_kernel: 5,
            stage_channels: vec![64, 128, 256, 512],
            blocks_per_stage: vec![1, 2, 2, 2],
            bottleneck_spatial: [8, 8],
            inverted_bottleneck_ratio: 4,
            decoder_stages: vec![256, 128, 64, 32, 16, 8],
            decoder_blocks: 1,
            output_size: 512,
            residual_init_scale: 0.1,
        }
    }

    /// 181x140 sinograms to 128x128 images.
    pub fn desk() -> Self {
        Self {
            input_cols: 140,
            stage_channels: vec![32, 64, 128, 256],
            bottleneck_spatial: [4, 4],
            decoder_stages: vec![128, 64, 32, 16, 8],
            output_size: 128,
            ..Self::full()
        }
    }

    /// Small model for 64x64 images from 70-detector sinograms, sized for
    /// CPU training runs.
    pub fn desk64() -> Self {
        Self {
            input_cols: 70,
            stage_channels: vec![8, 16, 32, 64],
            blocks_per_stage: vec![1, 1, 1, 1],
            bottleneck_spatial: [4, 4],
            decoder_stages: vec![32, 16, 8, 4],
            output_size: 64,
            ..Self::full()
        }
    }

    pub fn input_channels(&self) -> usize {
        if self.use_mask_channel { 2 } else { 1 }
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.stage_channels.last().copied().unwrap_or(0)
    }

    /// Spatial size at each encoder stage.
    pub fn stage_sizes(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        Ok(self.stage_sizes_unchecked())
    }

    fn stage_sizes_unchecked(&self) -> Vec<(usize, usize)> {
        let stem = |n: usize| (n.next_multiple_of(self.stem_stride) - self.stem_kernel) / self.stem_stride + 1;
        let mut sizes = vec![(stem(self.input_rows), stem(self.input_cols))];
        let stages = self.stage_channels.len();
        for i in 1..stages {
            let (h, w) = sizes[i - 1];
            sizes.push(if i + 1 == stages {
                (self.bottleneck_spatial[0], self.bottleneck_spatial[1])
            } else {
                (h.div_ceil(2), w.div_ceil(2))
            });
        }
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_rows == 0 || self.input_cols == 0 {
            return bad("input size must be positive".into());
        }
        if self.stem_stride == 0 || self.stem_kernel < self.stem_stride {
            return bad("stem kernel must be at least the (positive) stem stride".into());
        }
        if self.input_rows.next_multiple_of(self.stem_stride) < self.stem_kernel
            || self.input_cols.next_multiple_of(self.stem_stride) < self.stem_kernel
        {
            return bad("input smaller than the stem kernel".into());
        }
        if self.block_kernel % 2 == 0 {
            return bad(format!("block kernel must be odd, got {}", self.block_kernel));
        }
        if self.stage_channels.len() < 2 {
            return bad("need at least two encoder stages".into());
        }
        if self.blocks_per_stage.len() != self.stage_channels.len() {
            return bad(format!(
                "{} block counts for {} stages",
                self.blocks_per_stage.len(),
                self.stage_channels.len()
            ));
        }
        if self.stage_channels.contains(&0) || self.decoder_stages.contains(&0) {
            return bad("channel counts must be positive".into());
        }
        if self.inverted_bottleneck_ratio == 0 {
            return bad("inverted bottleneck ratio must be positive".into());
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return bad("input scale must be positive".into());
        }
        let [bh, bw] = self.bottleneck_spatial;
        if bh == 0 || bh != bw {
            return bad(format!("bottleneck must be square and non-empty, got {bh}x{bw}"));
        }
        let sizes = self.stage_sizes_unchecked();
        let (ph, pw) = sizes[sizes.len() - 2];
        if bh > ph || bw > pw {
            return bad(format!("cannot reduce {ph}x{pw} to the {bh}x{bw} bottleneck"));
        }
        let up = bh.checked_shl(self.decoder_stages.len() as u32).unwrap_or(0);
        if up != self.output_size {
            return bad(format!(
                "{} decoder stages take {bh}x{bh} to {up}x{up}, not {}",
                self.decoder_stages.len(),
                self.output_size
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Conv {
    w: usize,
    b: usize,
    stride: usize,
    pad: Pad,
}

#[derive(Debug, Clone, Copy)]
enum Pad {
    Same(usize),
    /// Bottom/right zeros up to a multiple of the stride.
    ToStride,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Debug, Clone)]
struct Block {
    a: Conv,
    b: Conv,
}

#[derive(Debug, Clone)]
enum Down {
    Strided(Conv, Norm),
    Pool(Conv, Norm),
}

#[derive(Debug, Clone)]
struct Up {
    w: usize,
    b: usize,
    blocks: Vec<Block>,
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Graph leaves of the parameters, in [`Params`] order.
    pub params: Vec<Var>,
    pub bottleneck: Var,
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: Params<T>,
    bn_names: Vec<String>,
    bn_stats: Vec<BatchNormStats<T>>,
    stem: (Conv, Norm),
    stages: Vec<(Option<Down>, Vec<Block>)>,
    decoder: Vec<Up>,
    head: Conv,
}

struct Builder<'a, T> {
    params: Params<T>,
    bn_names: Vec<String>,
    bn_stats: Vec<BatchNormStats<T>>,
    rng: ChaCha8Rng,
    config: &'a ModelConfig,
}

impl<T: Float> Builder<'_, T> {
    fn normal(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let dist = Normal::new(0.0, std).expect("finite std");
        let rng = &mut self.rng;
        Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: Pad, gain: f64) -> Conv {
        let fan_in = (cin * k * k) as f64;
        let w = self.normal(&[cout, cin, k, k], gain * (2.0 / fan_in).sqrt());
        let w = self.params.add(format!("{name}.weight"), w);
        let b = self.params.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv { w, b, stride, pad }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        let gamma = self.params.add(format!("{name}.gamma"), Tensor::full(&[c], T::one()));
        let beta = self.params.add(format!("{name}.beta"), Tensor::zeros(&[c]));
        self.bn_names.push(name.to_string());
        self.bn_stats.push(BatchNormStats::new(c));
        Norm { gamma, beta, stats: self.bn_stats.len() - 1 }
    }

    fn block(&mut self, name: &str, c: usize) -> Block {
        let k = self.config.block_kernel;
        let hidden = c * self.config.inverted_bottleneck_ratio;
        let a = self.conv(&format!("{name}.a"), c, hidden, k, 1, Pad::Same(k / 2), 1.0);
        let b = self.conv(&format!("{name}.b"), hidden, c, 1, 1, Pad::Same(0), self.config.residual_init_scale);
        Block { a, b }
    }
}

impl<T: Float> Model<T> {
    /// Builds a model with Kaiming-normal weights, zero biases and unit
    /// batch-norm scales.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut bld = Builder {
            params: Params::new(),
            bn_names: Vec::new(),
            bn_stats: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            config: &config,
        };
        let ch = &config.stage_channels;
        let stem_conv = bld.conv("stem", config.input_channels(), ch[0], config.stem_kernel, config.stem_stride, Pad::ToStride, 1.0);
        let stem = (stem_conv, bld.norm("stem.norm", ch[0]));
        let mut stages = Vec::new();
        for (i, (&c, &nb)) in ch.iter().zip(&config.blocks_per_stage).enumerate() {
            let down = match i {
                0 => None,
                _ if i + 1 == ch.len() => {
                    let conv = bld.conv(&format!("down{i}"), ch[i - 1], c, 1, 1, Pad::Same(0), 1.0);
                    Some(Down::Pool(conv, bld.norm(&format!("down{i}.norm"), c)))
                }
                _ => {
                    let conv = bld.conv(&format!("down{i}"), ch[i - 1], c, 2, 2, Pad::ToStride, 1.0);
                    Some(Down::Strided(conv, bld.norm(&format!("down{i}.norm"), c)))
                }
            };
            let blocks = (0..nb).map(|j| bld.block(&format!("enc{i}.{j}"), c)).collect();
            stages.push((down, blocks));
        }
        let mut decoder = Vec::new();
        let mut cin = config.bottleneck_channels();
        for (i, &c) in config.decoder_stages.iter().enumerate() {
            // Each output pixel of a 2x2/stride-2 transposed conv sees `cin` taps.
            let w = bld.normal(&[cin, c, 2, 2], (2.0 / cin as f64).sqrt());
            let w = bld.params.add(format!("up{i}.weight"), w);
            let b = bld.params.add(format!("up{i}.bias"), Tensor::zeros(&[c]));
            let blocks = (0..config.decoder_blocks).map(|j| bld.block(&format!("dec{i}.{j}"), c)).collect();
            decoder.push(Up { w, b, blocks });
            cin = c;
        }
        let head = bld.conv("head", cin, 1, 1, 1, Pad::Same(0), std::f64::consts::FRAC_1_SQRT_2);
        let Builder { params, bn_names, bn_stats, .. } = bld;
        Ok(Self { config, params, bn_names, bn_stats, stem, stages, decoder, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    /// Batch-norm running statistics with their layer names.
    pub fn bn_stats(&self) -> impl Iterator<Item = (&str, &BatchNormStats<T>)> {
        self.bn_names.iter().map(String::as_str).zip(&self.bn_stats)
    }

    pub fn bn_stats_mut(&mut self) -> impl Iterator<Item = (&str, &mut BatchNormStats<T>)> {
        self.bn_names.iter().map(String::as_str).zip(&mut self.bn_stats)
    }

    /// Casts parameters and statistics to another precision.
    pub fn cast<U: Float>(&self) -> Model<U> {
        let mut params = Params::new();
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            params.add(name.clone(), t.cast());
        }
        let cast_vec = |v: &[T]| v.iter().map(|&x| U::of(x.f64())).collect();
        Model {
            config: self.config.clone(),
            params,
            bn_names: self.bn_names.clone(),
            bn_stats: self.bn_stats.iter().map(|s| BatchNormStats { mean: cast_vec(&s.mean), var: cast_vec(&s.var) }).collect(),
            stem: self.stem.clone(),
            stages: self.stages.clone(),
            decoder: self.decoder.clone(),
            head: self.head.clone(),
        }
    }

    fn conv(&self, g: &mut Graph<T>, p: &[Var], c: &Conv, x: Var) -> Result<Var> {
        let pad = match c.pad {
            Pad::Same(k) => Padding::same(k),
            Pad::ToStride => {
                let s = g.value(x).shape();
                Padding::to_multiple(s[2], s[3], c.stride)
            }
        };
        g.conv2d(x, p[c.w], Some(p[c.b]), c.stride, pad)
    }

    fn norm(&mut self, g: &mut Graph<T>, p: &[Var], n: &Norm, x: Var, train: bool) -> Result<Var> {
        g.batch_norm(x, p[n.gamma], p[n.beta], &mut self.bn_stats[n.stats], train)
    }

    fn block(&self, g: &mut Graph<T>, p: &[Var], b: &Block, x: Var) -> Result<Var> {
        let h = self.conv(g, p, &b.a, x)?;
        let h = g.gelu(h)?;
        let h = self.conv(g, p, &b.b, h)?;
        g.add(x, h)
    }

    /// Runs the network on an `(N, C, input_rows, input_cols)` batch.
    /// Training mode uses batch statistics, updates the running ones and
    /// marks parameters as requiring gradients.
    pub fn forward(&mut self, g: &mut Graph<T>, input: Tensor<T>, train: bool) -> Result<Forward> {
        let cfg = &self.config;
        let expected = [cfg.input_channels(), cfg.input_rows, cfg.input_cols];
        let (_, c, h, w) = input.dims4()?;
        if [c, h, w] != expected {
            return Err(Error::Shape(format!("model input is {c}x{h}x{w}, expected {expected:?}")));
        }
        let scale = T::of(cfg.input_scale);
        let mut input = input;
        let plane = h * w;
        for sample in input.data_mut().chunks_mut(c * plane) {
            sample[..plane].iter_mut().for_each(|v| *v = *v * scale);
        }
        let p = self.params.bind(g, train);
        let x = g.leaf(input, false);

        // Layer descriptors are cloned so `self` can be borrowed mutably for
        // the running statistics.
        let (stem, norm) = self.stem.clone();
        let mut x = self.conv(g, &p, &stem, x)?;
        x = self.norm(g, &p, &norm, x, train)?;
        for (down, blocks) in self.stages.clone() {
            match down {
                Some(Down::Strided(conv, norm)) => {
                    x = self.conv(g, &p, &conv, x)?;
                    x = self.norm(g, &p, &norm, x, train)?;
                }
                Some(Down::Pool(conv, norm)) => {
                    let [bh, bw] = self.config.bottleneck_spatial;
                    x = g.adaptive_avg_pool2d(x, bh, bw)?;
                    x = self.conv(g, &p, &conv, x)?;
                    x = self.norm(g, &p, &norm, x, train)?;
                }
                None => {}
            }
            for b in &blocks {
                x = self.block(g, &p, b, x)?;
            }
        }
        let bottleneck = x;
        for up in &self.decoder {
            x = g.conv_transpose2d(x, p[up.w], Some(p[up.b]), 2, Padding::default())?;
            for b in &up.blocks {
                x = self.block(g, &p, b, x)?;
            }
        }
        let output = self.conv(g, &p, &self.head, x)?;
        Ok(Forward { params: p, bottleneck, output })
    }

    /// Eval-mode prediction without gradient bookkeeping.
    pub fn predict(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, input, false)?;
        Ok(g.value(f.output).clone())
    }
}
