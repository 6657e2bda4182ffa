//! FlowNetSimple and FlowNetCorr graphs with the expanding refinement stack.
//!
//! Both variants contract the input with nine convolutions (six of them
//! stride 2) down to 1/64 resolution. A flow head on the bottleneck predicts
//! the coarsest flow; each refinement step upconvolves the previous
//! features, concatenates the encoder features of matching scale and the
//! bilinearly doubled previous flow, and predicts flow again. With the
//! default four steps the finest prediction is at 1/4 of the input.

use std::fmt;
use std::str::FromStr;

use flownet_tensornet::{CorrParams, Graph, ParamSet, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::list::List;
use crate::{Result, TrainError};

/// Encoder widths of the reference-size network, conv1 through conv6.
pub const REFERENCE_ENCODER_WIDTHS: [usize; 9] = [64, 128, 256, 256, 512, 512, 512, 512, 1024];
/// Upconvolution widths of the reference-size network, coarse to fine.
pub const REFERENCE_DECODER_WIDTHS: [usize; 5] = [512, 256, 128, 64, 32];
/// Total downsampling of the encoder.
pub const BOTTLENECK_FACTOR: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Simple,
    Corr,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Simple => "FlowNetS",
            Variant::Corr => "FlowNetC",
        }
    }

    /// Default test-time input upscaling.
    pub fn default_test_scale(self) -> f64 {
        match self {
            Variant::Simple => 1.0,
            Variant::Corr => 1.25,
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" | "s" => Ok(Variant::Simple),
            "corr" | "c" => Ok(Variant::Corr),
            _ => Err(format!("unknown variant {s:?} (expected simple or corr)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Simple => "simple",
            Variant::Corr => "corr",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Divisor applied to every reference channel width.
    pub channel_scale: usize,
    /// Nominal training resolution; both must be multiples of 64.
    pub input_height: usize,
    pub input_width: usize,
    pub corr: CorrParams,
    pub refinement_levels: usize,
    /// 0 gives plain ReLU.
    pub leaky_slope: f64,
    /// Reference width of the 1x1 path from stream-1 features that is
    /// concatenated with the correlation output.
    pub redirect_width: usize,
    pub encoder_widths: List<usize>,
    pub decoder_widths: List<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Simple,
            channel_scale: 1,
            input_height: 384,
            input_width: 512,
            corr: CorrParams {
                normalize: true,
                ..CorrParams::default()
            },
            refinement_levels: 4,
            leaky_slope: 0.0,
            redirect_width: 32,
            encoder_widths: List(REFERENCE_ENCODER_WIDTHS.to_vec()),
            decoder_widths: List(REFERENCE_DECODER_WIDTHS.to_vec()),
        }
    }
}

flownet_core::kv_fields!(ModelConfig {
    "variant" => variant,
    "channel_scale" => channel_scale,
    "input_height" => input_height,
    "input_width" => input_width,
    "corr.kernel_radius" => corr.kernel_radius,
    "corr.max_displacement" => corr.max_displacement,
    "corr.stride1" => corr.stride1,
    "corr.stride2" => corr.stride2,
    "corr.normalize" => corr.normalize,
    "refinement_levels" => refinement_levels,
    "leaky_slope" => leaky_slope,
    "redirect_width" => redirect_width,
    "encoder_widths" => encoder_widths,
    "decoder_widths" => decoder_widths,
});

impl ModelConfig {
    pub fn desk(variant: Variant, channel_scale: usize, input_height: usize, input_width: usize) -> Self {
        Self {
            variant,
            channel_scale,
            input_height,
            input_width,
            ..Self::default()
        }
    }

    fn scaled(&self, w: usize) -> usize {
        (w / self.channel_scale).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.channel_scale == 0 {
            return fail("channel_scale must be >= 1".into());
        }
        if self.input_height == 0
            || self.input_width == 0
            || self.input_height % BOTTLENECK_FACTOR != 0
            || self.input_width % BOTTLENECK_FACTOR != 0
        {
            return fail(format!(
                "input {}x{} is not a positive multiple of {BOTTLENECK_FACTOR}",
                self.input_width, self.input_height
            ));
        }
        if !(1..=5).contains(&self.refinement_levels) {
            return fail(format!("refinement_levels {} outside 1..=5", self.refinement_levels));
        }
        if self.encoder_widths.0.len() != 9 || self.encoder_widths.0.contains(&0) {
            return fail("encoder_widths needs 9 positive entries".into());
        }
        if self.decoder_widths.0.len() < self.refinement_levels || self.decoder_widths.0.contains(&0) {
            return fail(format!("decoder_widths needs {} positive entries", self.refinement_levels));
        }
        if !(self.leaky_slope.is_finite() && (0.0..1.0).contains(&self.leaky_slope)) {
            return fail(format!("leaky_slope {} outside [0, 1)", self.leaky_slope));
        }
        self.corr.validate()?;
        Ok(())
    }

    /// Downsampling factors of the flow heads, coarse to fine.
    pub fn head_factors(&self) -> Vec<usize> {
        (0..=self.refinement_levels).map(|l| BOTTLENECK_FACTOR >> l).collect()
    }

    /// Downsampling factor of the finest flow head.
    pub fn finest_factor(&self) -> usize {
        BOTTLENECK_FACTOR >> self.refinement_levels
    }
}

/// One convolution (or upconvolution) with its parameters `name.w` and
/// `name.b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Stride-2 transposed convolution that doubles the resolution.
    pub upconv: bool,
    /// Followed by the (leaky) ReLU.
    pub activation: bool,
}

impl LayerSpec {
    fn conv(name: &str, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            c_in,
            c_out,
            kernel,
            stride,
            upconv: false,
            activation: true,
        }
    }

    fn head(name: &str, c_in: usize) -> Self {
        Self {
            activation: false,
            ..Self::conv(name, c_in, 2, 3, 1)
        }
    }

    fn upconv(name: &str, c_in: usize, c_out: usize) -> Self {
        Self {
            upconv: true,
            ..Self::conv(name, c_in, c_out, 4, 2)
        }
    }

    pub fn num_params(&self) -> usize {
        self.c_in * self.c_out * self.kernel * self.kernel + self.c_out
    }
}

/// Graph nodes produced by [`Model::forward`].
#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// Trainable leaves, in parameter-set order.
    pub params: Vec<Var>,
    /// Flow predictions, coarse to fine, in level pixels.
    pub flows: Vec<Var>,
    /// Downsampling factor of each entry of `flows`.
    pub factors: Vec<usize>,
    /// FlowNetC only: conv3 features of the two streams.
    pub streams: Option<(Var, Var)>,
    /// FlowNetC only: correlation output.
    pub correlation: Option<Var>,
}

impl ModelOutput {
    pub fn finest(&self) -> Var {
        *self.flows.last().expect("at least one head")
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<LayerSpec>,
}

fn log2(f: usize) -> u32 {
    f.trailing_zeros()
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let e: Vec<usize> = config.encoder_widths.0.iter().map(|&w| config.scaled(w)).collect();
        let d: Vec<usize> = config.decoder_widths.0.iter().map(|&w| config.scaled(w)).collect();
        let mut layers = Vec::new();
        let conv3_1_in = match config.variant {
            Variant::Simple => {
                layers.push(LayerSpec::conv("conv1", 6, e[0], 7, 2));
                layers.push(LayerSpec::conv("conv2", e[0], e[1], 5, 2));
                layers.push(LayerSpec::conv("conv3", e[1], e[2], 5, 2));
                e[2]
            }
            Variant::Corr => {
                let r = config.scaled(config.redirect_width);
                layers.push(LayerSpec::conv("conv1", 3, e[0], 7, 2));
                layers.push(LayerSpec::conv("conv2", e[0], e[1], 5, 2));
                layers.push(LayerSpec::conv("conv3", e[1], e[2], 5, 2));
                layers.push(LayerSpec::conv("redirect", e[2], r, 1, 1));
                config.corr.output_channels() + r
            }
        };
        layers.push(LayerSpec::conv("conv3_1", conv3_1_in, e[3], 3, 1));
        layers.push(LayerSpec::conv("conv4", e[3], e[4], 3, 2));
        layers.push(LayerSpec::conv("conv4_1", e[4], e[5], 3, 1));
        layers.push(LayerSpec::conv("conv5", e[5], e[6], 3, 2));
        layers.push(LayerSpec::conv("conv5_1", e[6], e[7], 3, 1));
        layers.push(LayerSpec::conv("conv6", e[7], e[8], 3, 2));
        layers.push(LayerSpec::head("flow6", e[8]));
        let mut feat = e[8];
        for (l, &f) in config.head_factors()[1..].iter().enumerate() {
            let k = log2(f);
            layers.push(LayerSpec::upconv(&format!("deconv{k}"), feat, d[l]));
            let cat = d[l] + Self::skip_channels(&e, f) + 2;
            layers.push(LayerSpec::head(&format!("flow{k}"), cat));
            feat = cat;
        }
        Ok(Self { config, layers })
    }

    /// Channels of the encoder feature map at downsampling factor `f`.
    fn skip_channels(e: &[usize], f: usize) -> usize {
        match f {
            2 => e[0],
            4 => e[1],
            8 => e[3],
            16 => e[5],
            32 => e[7],
            _ => unreachable!("no encoder features at 1/{f}"),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn name(&self) -> &'static str {
        self.config.variant.name()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::num_params).sum()
    }

    fn layer(&self, name: &str) -> &LayerSpec {
        self.layers.iter().find(|l| l.name == name).expect("layer exists")
    }

    /// He-normal weights (gain for the configured slope) and zero biases.
    pub fn init_params(&self, seed: u64) -> ParamSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = 2.0 / (1.0 + self.config.leaky_slope * self.config.leaky_slope);
        let mut params = ParamSet::new();
        for l in &self.layers {
            let (shape, fan_in) = if l.upconv {
                // Each output pixel of a stride-2 upconvolution sees a quarter
                // of the kernel taps.
                ([l.c_in, l.c_out, l.kernel, l.kernel], l.c_in * l.kernel * l.kernel / 4)
            } else {
                ([l.c_out, l.c_in, l.kernel, l.kernel], l.c_in * l.kernel * l.kernel)
            };
            let g = if l.activation { gain } else { 1.0 };
            params.insert(format!("{}.w", l.name), Tensor::randn(shape, (g / fan_in as f64).sqrt(), &mut rng));
            params.insert(format!("{}.b", l.name), Tensor::zeros([1, l.c_out, 1, 1]));
        }
        params
    }

    /// Checks that `params` has exactly this model's names and shapes.
    pub fn check_params<T: Scalar>(&self, params: &ParamSet<T>) -> Result<()> {
        self.init_params(0)
            .check_compatible(params)
            .map_err(|e| TrainError::Architecture(e.to_string()))
    }

    /// Records the forward pass for image batches `img1`, `img2` of shape
    /// `(n, 3, h, w)`, with `h` and `w` multiples of 64.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamSet<T>, img1: Var, img2: Var) -> Result<ModelOutput> {
        self.check_params(params)?;
        let [_, c, h, w] = g.value(img1).shape();
        if c != 3 || g.value(img2).shape() != g.value(img1).shape() {
            return Err(TrainError::Architecture(format!(
                "image batches must be (n,3,h,w) and equal, got {:?} and {:?}",
                g.value(img1).shape(),
                g.value(img2).shape()
            )));
        }
        if h % BOTTLENECK_FACTOR != 0 || w % BOTTLENECK_FACTOR != 0 {
            return Err(TrainError::Architecture(format!("input {w}x{h} is not a multiple of {BOTTLENECK_FACTOR}")));
        }
        let vars: Vec<Var> = params.tensors().iter().map(|t| g.param(t.clone())).collect();
        let slope = T::from_f64_lossy(self.config.leaky_slope);
        let apply = |g: &mut Graph<T>, name: &str, x: Var| -> Result<Var> {
            let l = self.layer(name);
            let wv = vars[params.position(&format!("{name}.w")).expect("weight")];
            let bv = vars[params.position(&format!("{name}.b")).expect("bias")];
            let y = if l.upconv {
                g.upconv2d(x, wv, Some(bv))?
            } else {
                g.conv2d(x, wv, Some(bv), l.stride, l.kernel / 2)?
            };
            Ok(if l.activation { g.leaky_relu(y, slope)? } else { y })
        };

        let mut skips: Vec<(usize, Var)> = Vec::new();
        let (mut streams, mut correlation) = (None, None);
        let conv3 = match self.config.variant {
            Variant::Simple => {
                let x = g.concat(&[img1, img2])?;
                let c1 = apply(g, "conv1", x)?;
                let c2 = apply(g, "conv2", c1)?;
                skips.push((2, c1));
                skips.push((4, c2));
                apply(g, "conv3", c2)?
            }
            Variant::Corr => {
                let stream = |g: &mut Graph<T>, x: Var| -> Result<[Var; 3]> {
                    let c1 = apply(g, "conv1", x)?;
                    let c2 = apply(g, "conv2", c1)?;
                    let c3 = apply(g, "conv3", c2)?;
                    Ok([c1, c2, c3])
                };
                let [a1, a2, a3] = stream(g, img1)?;
                let [_, _, b3] = stream(g, img2)?;
                skips.push((2, a1));
                skips.push((4, a2));
                let corr = g.correlation(a3, b3, self.config.corr)?;
                let redirect = apply(g, "redirect", a3)?;
                streams = Some((a3, b3));
                correlation = Some(corr);
                g.concat(&[corr, redirect])?
            }
        };
        let c3_1 = apply(g, "conv3_1", conv3)?;
        let c4 = apply(g, "conv4", c3_1)?;
        let c4_1 = apply(g, "conv4_1", c4)?;
        let c5 = apply(g, "conv5", c4_1)?;
        let c5_1 = apply(g, "conv5_1", c5)?;
        let c6 = apply(g, "conv6", c5_1)?;
        skips.extend([(8, c3_1), (16, c4_1), (32, c5_1)]);

        let mut flow = apply(g, "flow6", c6)?;
        let mut flows = vec![flow];
        let mut feat = c6;
        let factors = self.config.head_factors();
        for &f in &factors[1..] {
            let k = log2(f);
            let up = apply(g, &format!("deconv{k}"), feat)?;
            let skip = skips.iter().find(|(s, _)| *s == f).expect("skip at scale").1;
            // Flow vectors are in level pixels, so doubling the resolution
            // doubles them.
            let flow_up = g.upsample(flow, 2)?;
            let flow_up = g.scale(flow_up, T::from_f64_lossy(2.0))?;
            feat = g.concat(&[up, skip, flow_up])?;
            flow = apply(g, &format!("flow{k}"), feat)?;
            flows.push(flow);
        }
        Ok(ModelOutput {
            params: vars,
            flows,
            factors,
            streams,
            correlation,
        })
    }
}
