//! The K(x)-estimation network: five same-size convolutions with three
//! skip concatenations feeding an attention-gated fusion, plus weight
//! serialization and the parameter budget accounting.
//!
//! Layer graph (full variant, width `c`, input RGB):
//!
//! ```text
//! x -> conv1 -> conv2 ; cat1=[conv1,conv2] -> conv3 ; cat2=[conv2,conv3]
//!   -> conv4 ; cat3=[conv1,conv2,conv3,conv4] -> MIA -> conv5 -> K
//! ```
//!
//! ReLU follows conv1..conv4; conv5 is linear so K can leave [0,1].
//! Dehazing applies the affine restoration `J = K*I - K + b` to the
//! estimated field.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::attention::{
    self, ChannelAttention, LocalAttention, Mia, SpatialCross,
};
use crate::physics::{Image, KMap};
use crate::rng::SplitMix64;
use crate::tape::{Tape, Var};
use crate::tensor::{ParamRegistry, Result, Tensor, TensorError};

/// Smallest spatial extent the network accepts (the MIA pooling window).
pub const MIN_EXTENT: usize = 8;

const MAGIC: &[u8; 4] = b"PRNW";
const FORMAT_VERSION: u32 = 1;

/// Architecture variants used by the ablation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Uniform kernels with the full attention block.
    #[default]
    Full,
    /// Extraction path only, no attention.
    NoMia,
    /// Channel gate only, no spatial branches.
    ChannelAttentionOnly,
    /// 3x3 kernels and no attention.
    Kernel3Only,
    /// Full attention over a 1/3/5/7/3 kernel pyramid.
    MultiKernel,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoMia,
        Variant::ChannelAttentionOnly,
        Variant::Kernel3Only,
        Variant::MultiKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMia => "no_mia",
            Variant::ChannelAttentionOnly => "channel_attention_only",
            Variant::Kernel3Only => "kernel3_only",
            Variant::MultiKernel => "multi_kernel",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }

    fn tag(self) -> u32 {
        match self {
            Variant::Full => 0,
            Variant::NoMia => 1,
            Variant::ChannelAttentionOnly => 2,
            Variant::Kernel3Only => 3,
            Variant::MultiKernel => 4,
        }
    }

    fn from_tag(tag: u32) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.tag() == tag)
    }

    fn has_mia(self) -> bool {
        matches!(self, Variant::Full | Variant::MultiKernel)
    }

    fn has_channel_attention(self) -> bool {
        self.has_mia() || self == Variant::ChannelAttentionOnly
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorNetConfig {
    /// Odd kernel edge for the uniform-kernel variants.
    pub kernel_size: usize,
    /// Feature width `c` of conv1..conv4 outputs.
    pub channels_per_conv: usize,
    /// Channel-attention reduction ratio `r`.
    pub mia_reduction: usize,
    /// Bias `b` of the affine restoration.
    pub bias_b: f32,
    pub variant: Variant,
}

impl Default for PriorNetConfig {
    fn default() -> Self {
        Self {
            kernel_size: 5,
            channels_per_conv: 3,
            mia_reduction: 4,
            bias_b: 1.0,
            variant: Variant::Full,
        }
    }
}

impl PriorNetConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size.is_multiple_of(2) || self.kernel_size == 0 {
            return Err(TensorError::InvalidConfig {
                detail: format!("kernel size {} must be odd", self.kernel_size),
            });
        }
        if self.channels_per_conv == 0 {
            return Err(TensorError::InvalidConfig {
                detail: "channels_per_conv must be positive".into(),
            });
        }
        if !self.bias_b.is_finite() {
            return Err(TensorError::InvalidConfig {
                detail: "bias_b must be finite".into(),
            });
        }
        if self.variant.has_channel_attention() {
            let c = self.fused_channels();
            if self.mia_reduction == 0 || !c.is_multiple_of(self.mia_reduction) {
                return Err(TensorError::InvalidConfig {
                    detail: format!(
                        "reduction {} must divide the fused width {c}",
                        self.mia_reduction
                    ),
                });
            }
        }
        Ok(())
    }

    /// Channel count at the attention insertion point (after concat3).
    pub fn fused_channels(&self) -> usize {
        4 * self.channels_per_conv
    }

    fn kernel_sizes(&self) -> [usize; 5] {
        match self.variant {
            Variant::Kernel3Only => [3; 5],
            Variant::MultiKernel => [1, 3, 5, 7, 3],
            _ => [self.kernel_size; 5],
        }
    }

    /// (in, out, kernel) for conv1..conv5.
    fn conv_plan(&self) -> [(usize, usize, usize); 5] {
        let c = self.channels_per_conv;
        let k = self.kernel_sizes();
        [
            (3, c, k[0]),
            (c, c, k[1]),
            (2 * c, c, k[2]),
            (2 * c, c, k[3]),
            (4 * c, 3, k[4]),
        ]
    }
}

/// Weight-file decode errors; each corruption mode is distinct.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFormatError {
    BadMagic,
    UnsupportedVersion(u32),
    /// The buffer ended before the promised payload.
    Truncated,
    /// A parameter name is not valid UTF-8.
    BadName,
    /// The config block fails validation.
    InvalidConfig(String),
    /// A record's name does not match the layout the config dictates.
    NameMismatch { expected: String, found: String },
    /// A record's shape does not match the layout the config dictates.
    ShapeMismatch { name: String },
    /// Bytes remain after the last record.
    TrailingBytes,
}

impl fmt::Display for WeightFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFormatError::BadMagic => write!(f, "bad magic: not a PRNW weight file"),
            WeightFormatError::UnsupportedVersion(v) => {
                write!(f, "unsupported weight format version {v}")
            }
            WeightFormatError::Truncated => write!(f, "truncated payload"),
            WeightFormatError::BadName => write!(f, "parameter name is not UTF-8"),
            WeightFormatError::InvalidConfig(msg) => write!(f, "invalid config block: {msg}"),
            WeightFormatError::NameMismatch { expected, found } => {
                write!(f, "parameter `{found}` where `{expected}` was expected")
            }
            WeightFormatError::ShapeMismatch { name } => {
                write!(f, "parameter `{name}` has a shape inconsistent with the config")
            }
            WeightFormatError::TrailingBytes => write!(f, "trailing bytes after the last record"),
        }
    }
}

/// All learnable state plus the config that shaped it.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    config: PriorNetConfig,
    params: ParamRegistry,
}

impl ModelWeights {
    /// Deterministic seeded build; weights and biases are uniform in
    /// `[-sqrt(1/fan_in), sqrt(1/fan_in))` per layer, drawn in
    /// registration order.
    pub fn build(config: PriorNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut params = ParamRegistry::new();
        for (i, (cin, cout, k)) in config.conv_plan().into_iter().enumerate() {
            let fan_in = cin * k * k;
            let bound = crate::fmath::sqrt(1.0 / fan_in as f32);
            let wdata = (0..cout * cin * k * k)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            let bdata = (0..cout).map(|_| rng.uniform(-bound, bound)).collect();
            params.register(
                &format!("conv{}.weight", i + 1),
                Tensor::new(vec![cout, cin, k, k], wdata),
            )?;
            params.register(&format!("conv{}.bias", i + 1), Tensor::new(vec![cout], bdata))?;
        }
        let fused = config.fused_channels();
        if config.variant.has_channel_attention() {
            let (w0, w1) =
                attention::init_channel_attention(fused, config.mia_reduction, &mut rng)?;
            params.register("mia.channel.w0", w0)?;
            params.register("mia.channel.w1", w1)?;
        }
        if config.variant.has_mia() {
            let (lw, lb) = attention::init_local_attention(fused, &mut rng);
            params.register("mia.local.weight", lw)?;
            params.register("mia.local.bias", lb)?;
            let (wq, wv) = attention::init_cross_attention(fused, &mut rng);
            params.register("mia.cross.wq", wq)?;
            params.register("mia.cross.wv", wv)?;
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &PriorNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamRegistry {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamRegistry {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Stage every parameter as a tape leaf, in registry order.
    pub fn stage(&self, tape: &mut Tape) -> StagedPriorNet {
        let vars = self.params.iter().map(|(_, t)| tape.leaf(t)).collect();
        StagedPriorNet {
            config: self.config.clone(),
            vars,
        }
    }

    /// Run the extraction path on one image; K is the raw (unclamped)
    /// conv5 output.
    pub fn estimate_k(&self, image: &Image) -> Result<KMap> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape);
        let input = tape.leaf(&image.to_tensor());
        let k = staged.estimate_k(&mut tape, input)?;
        Ok(KMap::new(
            image.height(),
            image.width(),
            tape.data(k).to_vec(),
            self.config.bias_b,
        ))
    }

    /// Estimate K and restore: `J = clamp(K*I - K + b, 0, 1)`.
    pub fn dehaze(&self, image: &Image) -> Result<Image> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape);
        let input = tape.leaf(&image.to_tensor());
        let out = staged.dehaze(&mut tape, input)?;
        Image::from_tensor(&tape.value(out))
    }

    /// Bit-exact little-endian serialization: magic, version, config
    /// block, then one record per parameter in registry order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, FORMAT_VERSION);
        push_u32(&mut out, self.config.kernel_size as u32);
        push_u32(&mut out, self.config.channels_per_conv as u32);
        push_u32(&mut out, self.config.mia_reduction as u32);
        out.extend_from_slice(&self.config.bias_b.to_le_bytes());
        push_u32(&mut out, self.config.variant.tag());
        push_u32(&mut out, self.params.len() as u32);
        for (name, tensor) in self.params.iter() {
            push_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            push_u32(&mut out, tensor.shape().len() as u32);
            for extent in tensor.shape() {
                push_u32(&mut out, *extent as u32);
            }
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> core::result::Result<Self, WeightFormatError> {
        let mut cursor = Cursor { bytes, at: 0 };
        if cursor.take(4)? != MAGIC {
            return Err(WeightFormatError::BadMagic);
        }
        let version = cursor.u32()?;
        if version != FORMAT_VERSION {
            return Err(WeightFormatError::UnsupportedVersion(version));
        }
        let kernel_size = cursor.u32()? as usize;
        let channels_per_conv = cursor.u32()? as usize;
        let mia_reduction = cursor.u32()? as usize;
        let bias_b = f32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
        let variant_tag = cursor.u32()?;
        let variant = Variant::from_tag(variant_tag)
            .ok_or_else(|| WeightFormatError::InvalidConfig(format!("variant tag {variant_tag}")))?;
        let config = PriorNetConfig {
            kernel_size,
            channels_per_conv,
            mia_reduction,
            bias_b,
            variant,
        };
        config
            .validate()
            .map_err(|e| WeightFormatError::InvalidConfig(format!("{e}")))?;

        // the config dictates the exact record layout; rebuild it and
        // overwrite the payloads
        let mut model =
            ModelWeights::build(config, 0).map_err(|e| WeightFormatError::InvalidConfig(format!("{e}")))?;
        let count = cursor.u32()? as usize;
        if count != model.params.len() {
            return Err(WeightFormatError::InvalidConfig(format!(
                "{count} records for a layout with {}",
                model.params.len()
            )));
        }
        for (expected_name, tensor) in model.params.iter_mut() {
            let name_len = cursor.u32()? as usize;
            let name = core::str::from_utf8(cursor.take(name_len)?)
                .map_err(|_| WeightFormatError::BadName)?;
            if name != expected_name {
                return Err(WeightFormatError::NameMismatch {
                    expected: String::from(expected_name),
                    found: String::from(name),
                });
            }
            let rank = cursor.u32()? as usize;
            let mut extents = Vec::with_capacity(rank);
            for _ in 0..rank {
                extents.push(cursor.u32()? as usize);
            }
            if extents != tensor.shape() {
                return Err(WeightFormatError::ShapeMismatch {
                    name: String::from(name),
                });
            }
            let payload = cursor.take(4 * tensor.numel())?;
            for (dst, chunk) in tensor.data_mut().iter_mut().zip(payload.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        if cursor.at != bytes.len() {
            return Err(WeightFormatError::TrailingBytes);
        }
        Ok(model)
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> core::result::Result<&'a [u8], WeightFormatError> {
        if self.at + n > self.bytes.len() {
            return Err(WeightFormatError::Truncated);
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> core::result::Result<u32, WeightFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parameter leaves staged on a tape, ready to run the layer graph.
/// Training reads gradients back out of the same leaves after a
/// backward pass.
pub struct StagedPriorNet {
    config: PriorNetConfig,
    vars: Vec<Var>,
}

impl StagedPriorNet {
    pub fn param_vars(&self) -> &[Var] {
        &self.vars
    }

    fn conv(&self, i: usize) -> (Var, Var) {
        (self.vars[2 * i], self.vars[2 * i + 1])
    }

    fn mia(&self) -> Mia {
        let base = 10;
        Mia {
            channel: ChannelAttention {
                w0: self.vars[base],
                w1: self.vars[base + 1],
            },
            local: LocalAttention {
                weight: self.vars[base + 2],
                bias: self.vars[base + 3],
            },
            cross: SpatialCross {
                wq: self.vars[base + 4],
                wv: self.vars[base + 5],
            },
        }
    }

    pub fn estimate_k(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let (c, h, w) = match tape.shape(input)[..] {
            [c, h, w] => (c, h, w),
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "estimate_k",
                    detail: format!("expected [3,h,w], got {s:?}"),
                })
            }
        };
        if c != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "estimate_k",
                detail: format!("expected 3 input channels, got {c}"),
            });
        }
        if h < MIN_EXTENT || w < MIN_EXTENT {
            return Err(TensorError::InputTooSmall {
                op: "estimate_k",
                height: h,
                width: w,
                min: MIN_EXTENT,
            });
        }

        let (w1, b1) = self.conv(0);
        let (w2, b2) = self.conv(1);
        let (w3, b3) = self.conv(2);
        let (w4, b4) = self.conv(3);
        let (w5, b5) = self.conv(4);

        let c1 = tape.conv2d(input, w1, b1)?;
        let c1 = tape.relu(c1);
        let c2 = tape.conv2d(c1, w2, b2)?;
        let c2 = tape.relu(c2);
        let cat1 = tape.concat_channels(&[c1, c2])?;
        let c3 = tape.conv2d(cat1, w3, b3)?;
        let c3 = tape.relu(c3);
        let cat2 = tape.concat_channels(&[c2, c3])?;
        let c4 = tape.conv2d(cat2, w4, b4)?;
        let c4 = tape.relu(c4);
        let cat3 = tape.concat_channels(&[c1, c2, c3, c4])?;

        let gated = match self.config.variant {
            Variant::Full | Variant::MultiKernel => {
                attention::mia_forward(tape, cat3, &self.mia())?
            }
            Variant::ChannelAttentionOnly => {
                let gate = attention::channel_attention(
                    tape,
                    cat3,
                    &ChannelAttention {
                        w0: self.vars[10],
                        w1: self.vars[11],
                    },
                )?;
                let stack = tape.broadcast_channels(gate, h, w)?;
                tape.mul(cat3, stack)?
            }
            Variant::NoMia | Variant::Kernel3Only => cat3,
        };
        tape.conv2d(gated, w5, b5)
    }

    /// `clamp(K*I - K + b, 0, 1)` on the tape, for training end to end;
    /// evaluated as `K*(I - 1) + b` like [`crate::physics::restore`].
    pub fn dehaze(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let k = self.estimate_k(tape, input)?;
        let shifted = tape.add_scalar(input, -1.0);
        let scaled = tape.mul(k, shifted)?;
        let biased = tape.add_scalar(scaled, self.config.bias_b);
        Ok(tape.clamp01(biased))
    }

    /// Per-parameter gradients in registry order; parameters a variant
    /// does not touch read back as zeros.
    pub fn read_grads(&self, tape: &Tape) -> Vec<Vec<f32>> {
        self.vars
            .iter()
            .map(|v| {
                tape.grad(*v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; tape.data(*v).len()])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_audit() {
        // five conv layers: 228 + 228 + 453 + 453 + 903 = 2265, MIA 516
        let model = ModelWeights::build(PriorNetConfig::default(), 1).unwrap();
        let conv_expected = [228, 228, 453, 453, 903];
        for (i, want) in conv_expected.iter().enumerate() {
            let w = model.params().get(&format!("conv{}.weight", i + 1)).unwrap();
            let b = model.params().get(&format!("conv{}.bias", i + 1)).unwrap();
            assert_eq!(w.numel() + b.numel(), *want, "conv{}", i + 1);
        }
        assert_eq!(attention::mia_param_count(12, 4), 516);
        assert_eq!(model.param_count(), 2781);
    }

    #[test]
    fn variant_parameter_audit() {
        let count = |v: Variant| {
            ModelWeights::build(PriorNetConfig::with_variant(v), 1)
                .unwrap()
                .param_count()
        };
        assert_eq!(count(Variant::NoMia), 2265);
        assert_eq!(count(Variant::ChannelAttentionOnly), 2265 + 72);
        assert_eq!(count(Variant::Kernel3Only), 825);
        assert_eq!(count(Variant::MultiKernel), 2277);
    }

    #[test]
    fn build_is_deterministic() {
        let a = ModelWeights::build(PriorNetConfig::default(), 99).unwrap();
        let b = ModelWeights::build(PriorNetConfig::default(), 99).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = ModelWeights::build(PriorNetConfig::default(), 100).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn serialized_size_sits_in_the_budget_band() {
        let model = ModelWeights::build(PriorNetConfig::default(), 1).unwrap();
        let bytes = model.to_bytes();
        assert!(bytes.len() >= 9_216 && bytes.len() <= 36_864, "{}", bytes.len());
        assert!(bytes.len() < 16 * 1024);
        // payload accounts for exactly 4 bytes per parameter
        assert!(bytes.len() > 4 * model.param_count());
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let model = ModelWeights::build(PriorNetConfig::default(), 7).unwrap();
        let bytes = model.to_bytes();
        let loaded = ModelWeights::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let model = ModelWeights::build(PriorNetConfig::default(), 7).unwrap();
        let good = model.to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert_eq!(
            ModelWeights::from_bytes(&bad_magic).unwrap_err(),
            WeightFormatError::BadMagic
        );

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert_eq!(
            ModelWeights::from_bytes(&bad_version).unwrap_err(),
            WeightFormatError::UnsupportedVersion(9)
        );

        let truncated = &good[..good.len() - 3];
        assert_eq!(
            ModelWeights::from_bytes(truncated).unwrap_err(),
            WeightFormatError::Truncated
        );

        let mut trailing = good.clone();
        trailing.push(0);
        assert_eq!(
            ModelWeights::from_bytes(&trailing).unwrap_err(),
            WeightFormatError::TrailingBytes
        );
    }

    #[test]
    fn zero_weights_give_zero_k_and_flat_dehaze() {
        let mut model = ModelWeights::build(PriorNetConfig::default(), 3).unwrap();
        for (_, t) in model.params_mut().iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let img = Image::from_fn(8, 8, |c, y, x| ((c + y + x) % 5) as f32 * 0.2);
        let k = model.estimate_k(&img).unwrap();
        assert!(k.data().iter().all(|v| *v == 0.0));
        // J = clamp(0*I - 0 + 1) = 1 everywhere
        let out = model.dehaze(&img).unwrap();
        assert!(out.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn unit_k_with_unit_bias_is_identity() {
        let mut model = ModelWeights::build(PriorNetConfig::default(), 3).unwrap();
        for (name, t) in model.params_mut().iter_mut() {
            let fill = if name == "conv5.bias" { 1.0 } else { 0.0 };
            t.data_mut().iter_mut().for_each(|v| *v = fill);
        }
        let img = Image::from_fn(9, 9, |c, y, x| ((c * 31 + y * 7 + x) % 10) as f32 * 0.1);
        let out = model.dehaze(&img).unwrap();
        // K*I - K + b is evaluated literally, so expect one rounding step
        for (o, i) in out.data().iter().zip(img.data()) {
            assert!((o - i).abs() < 1e-6);
        }
    }

    #[test]
    fn output_extent_follows_input() {
        for variant in Variant::ALL {
            let model = ModelWeights::build(PriorNetConfig::with_variant(variant), 5).unwrap();
            for (h, w) in [(8, 8), (9, 16), (16, 9), (33, 12)] {
                let img = Image::filled(h, w, 0.5);
                let k = model.estimate_k(&img).unwrap();
                assert_eq!((k.height(), k.width()), (h, w), "{variant:?}");
                let out = model.dehaze(&img).unwrap();
                assert_eq!((out.height(), out.width()), (h, w));
                assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn undersized_input_is_rejected() {
        let model = ModelWeights::build(PriorNetConfig::default(), 5).unwrap();
        let img = Image::filled(7, 16, 0.5);
        assert!(matches!(
            model.estimate_k(&img),
            Err(TensorError::InputTooSmall { min: 8, .. })
        ));
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let even_kernel = PriorNetConfig {
            kernel_size: 4,
            ..PriorNetConfig::default()
        };
        assert!(ModelWeights::build(even_kernel, 1).is_err());
        let bad_reduction = PriorNetConfig {
            mia_reduction: 5,
            ..PriorNetConfig::default()
        };
        assert!(ModelWeights::build(bad_reduction, 1).is_err());
        // but reduction is irrelevant without attention
        let no_mia = PriorNetConfig {
            mia_reduction: 5,
            variant: Variant::NoMia,
            ..PriorNetConfig::default()
        };
        assert!(ModelWeights::build(no_mia, 1).is_ok());
    }
}
