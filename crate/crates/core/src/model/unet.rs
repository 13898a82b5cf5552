use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Average,
    Max,
}

impl PoolKind {
    pub fn label(self) -> &'static str {
        match self {
            PoolKind::Average => "average",
            PoolKind::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(PoolKind::Average),
            "max" => Ok(PoolKind::Max),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

/// U-Net hyper-parameters.
///
/// `depth` is the number of 2x downsamplings. Each encoder level and the
/// bottleneck hold two 3x3 conv + ReLU layers; level `l` has
/// `base_features * 2^l` channels. The decoder mirrors the encoder with
/// nearest upsampling and skip concatenation, and a 1x1 head maps back to
/// `in_channels`. The network is residual: `f(x) = x + head(...)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnetConfig {
    pub depth: usize,
    pub base_features: usize,
    pub in_channels: usize,
    pub pool: PoolKind,
}

impl UnetConfig {
    pub fn new(depth: usize, base_features: usize, in_channels: usize) -> Self {
        Self {
            depth,
            base_features,
            in_channels,
            pool: PoolKind::Average,
        }
    }

    /// Depth 3, 16 base features.
    pub fn desk(in_channels: usize) -> Self {
        Self::new(3, 16, in_channels)
    }

    /// Depth 4 with 32 (CT, one channel) or 64 (MR, two channels) base features.
    pub fn paper_scale(in_channels: usize) -> Self {
        let base = if in_channels == 2 { 64 } else { 32 };
        Self::new(4, base, in_channels)
    }

    pub fn spatial_multiple(&self) -> usize {
        1 << self.depth
    }

    fn features(&self, level: usize) -> usize {
        self.base_features << level
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub cout: usize,
    pub cin: usize,
    pub kernel: usize,
    pub offset: usize,
}

impl LayerSpec {
    pub fn fan_in(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.fan_in()
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.cout
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weight_len()
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.weight_len();
        start..start + self.cout
    }
}

/// Flat parameter vector plus the table that maps it onto layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: UnetConfig,
    pub theta: Vec<f64>,
    pub layout: Vec<LayerSpec>,
}

/// Tape handles for one attached copy of the parameters, in layout order.
#[derive(Debug, Clone)]
pub struct AttachedParams {
    pub layers: Vec<(Var, Var)>,
}

/// Builds the layer table for `config` with all parameters zero.
pub fn build_unet(config: UnetConfig) -> Result<ModelParams> {
    if config.depth < 1 {
        return Err(Error::InvalidArgument("U-Net depth must be >= 1".into()));
    }
    if config.base_features == 0 || config.in_channels == 0 {
        return Err(Error::InvalidArgument(
            "U-Net needs at least one feature and one channel".into(),
        ));
    }
    let mut layout = Vec::new();
    let mut offset = 0;
    let mut add = |name: String, cin: usize, cout: usize, kernel: usize| {
        let spec = LayerSpec {
            name,
            cout,
            cin,
            kernel,
            offset,
        };
        offset += spec.len();
        layout.push(spec);
    };
    let mut cin = config.in_channels;
    for level in 0..config.depth {
        let f = config.features(level);
        add(format!("enc{level}.conv1"), cin, f, 3);
        add(format!("enc{level}.conv2"), f, f, 3);
        cin = f;
    }
    let fb = config.features(config.depth);
    add("bottleneck.conv1".into(), cin, fb, 3);
    add("bottleneck.conv2".into(), fb, fb, 3);
    let mut below = fb;
    for level in (0..config.depth).rev() {
        let f = config.features(level);
        add(format!("dec{level}.conv1"), below + f, f, 3);
        add(format!("dec{level}.conv2"), f, f, 3);
        below = f;
    }
    add("head".into(), below, config.in_channels, 1);
    Ok(ModelParams {
        config,
        theta: vec![0.0; offset],
        layout,
    })
}

/// He-normal weights (`N(0, 2 / fan_in)`), zero biases.
pub fn init_he(params: &mut ModelParams, rng: &mut Rng) {
    for layer in &params.layout {
        let std = (2.0 / layer.fan_in() as f64).sqrt();
        for v in &mut params.theta[layer.weight_range()] {
            *v = std * rng.standard_normal();
        }
        params.theta[layer.bias_range()].fill(0.0);
    }
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Layer containing flat index `i`.
    pub fn layer_of(&self, i: usize) -> Option<&LayerSpec> {
        self.layout.iter().find(|l| l.offset <= i && i < l.offset + l.len())
    }

    fn attach_with(&self, tape: &mut Tape, trainable: bool) -> AttachedParams {
        let layers = self
            .layout
            .iter()
            .map(|l| {
                let w = Tensor::new(
                    vec![l.cout, l.cin, l.kernel, l.kernel],
                    self.theta[l.weight_range()].to_vec(),
                )
                .expect("layout sizes are consistent");
                let b = Tensor::new(vec![l.cout], self.theta[l.bias_range()].to_vec())
                    .expect("layout sizes are consistent");
                if trainable {
                    (tape.param(w), tape.param(b))
                } else {
                    (tape.constant(w), tape.constant(b))
                }
            })
            .collect();
        AttachedParams { layers }
    }

    /// Places the parameters on `tape` as trainable leaves.
    pub fn attach(&self, tape: &mut Tape) -> AttachedParams {
        self.attach_with(tape, true)
    }

    /// Places the parameters on `tape` as constants (frozen network).
    pub fn attach_frozen(&self, tape: &mut Tape) -> AttachedParams {
        self.attach_with(tape, false)
    }

    /// Collects the accumulated gradients of an attached copy into a flat
    /// vector in layout order.
    pub fn gather_grads(&self, tape: &Tape, attached: &AttachedParams) -> Vec<f64> {
        let mut out = vec![0.0; self.theta.len()];
        for (l, &(w, b)) in self.layout.iter().zip(&attached.layers) {
            if let Some(g) = tape.grad(w) {
                out[l.weight_range()].copy_from_slice(g);
            }
            if let Some(g) = tape.grad(b) {
                out[l.bias_range()].copy_from_slice(g);
            }
        }
        out
    }

    pub fn check_input(&self, dims: &[usize]) -> Result<()> {
        let [_, c, h, w] = dims else {
            return Err(Error::Shape(format!("network input must be NCHW, got {dims:?}")));
        };
        if *c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        let m = self.config.spatial_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} is not divisible by 2^depth = {m}"
            )));
        }
        Ok(())
    }

    /// Records `f(x) = x + net(x)` on `tape`.
    pub fn forward(&self, tape: &mut Tape, attached: &AttachedParams, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).dims())?;
        let depth = self.config.depth;
        let mut layers = attached.layers.iter();
        let mut conv_relu = |tape: &mut Tape, h: Var| -> Result<Var> {
            let &(w, b) = layers.next().expect("layout matches architecture");
            let y = tape.conv2d(h, w, b)?;
            Ok(tape.relu(y))
        };
        let mut skips = Vec::with_capacity(depth);
        let mut h = x;
        for _ in 0..depth {
            h = conv_relu(tape, h)?;
            h = conv_relu(tape, h)?;
            skips.push(h);
            h = match self.config.pool {
                PoolKind::Average => tape.downsample2(h)?,
                PoolKind::Max => tape.maxpool2(h)?,
            };
        }
        h = conv_relu(tape, h)?;
        h = conv_relu(tape, h)?;
        for skip in skips.into_iter().rev() {
            let up = tape.upsample2(h)?;
            h = tape.concat_channels(up, skip)?;
            h = conv_relu(tape, h)?;
            h = conv_relu(tape, h)?;
        }
        let &(w, b) = attached.layers.last().expect("head layer");
        let correction = tape.conv2d(h, w, b)?;
        tape.add(x, correction)
    }

    /// Inference without gradients.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let attached = self.attach_frozen(&mut tape);
        let x = tape.constant(input.clone());
        let y = self.forward(&mut tape, &attached, x)?;
        let out = tape.value(y).clone();
        if let Some(i) = out.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("network output element {i}")));
        }
        Ok(out)
    }
}
