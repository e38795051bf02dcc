//! Minimal feedforward networks with exact reverse-mode gradients.
//!
//! Supports dense and small valid-padding convolutional layers, an optional
//! scalar baseline head attached to the designated feature layer, inverted
//! dropout on dense hidden layers, and losses that inject cotangents at the
//! output, the feature layer, and the baseline head simultaneously. That last
//! part is what lets a single backward pass differentiate an RL loss plus a
//! feature-invariance penalty.

mod build;
mod checkpoint;
mod optim;
mod softmax;

pub use build::{conv_net, mlp, ConvLayerSpec, MlpOptions};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SeedProvenance, CHECKPOINT_VERSION};
pub use optim::{adam_step, sgd_step, AdamParams, AdamState};
pub use softmax::softmax_logprob;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Geometry of a valid-padding convolution. Inputs and outputs are stored
/// as channel-major planes: `[c][y][x]` flattened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.in_h - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.kernel) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.filters * self.out_h() * self.out_w()
    }

    /// Length of one im2col patch row: `in_c * kernel * kernel`.
    fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    fn validate(&self, layer: usize) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.filters == 0 || self.in_c == 0 {
            return Err(Error::shape(layer, "conv dimensions must be nonzero"));
        }
        if self.kernel > self.in_h || self.kernel > self.in_w {
            return Err(Error::shape(
                layer,
                format!(
                    "kernel {} exceeds input {}x{}",
                    self.kernel, self.in_h, self.in_w
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerKind {
    Dense { in_dim: usize, out_dim: usize },
    Conv(ConvShape),
}

impl LayerKind {
    pub fn in_dim(&self) -> usize {
        match self {
            LayerKind::Dense { in_dim, .. } => *in_dim,
            LayerKind::Conv(c) => c.in_len(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LayerKind::Dense { out_dim, .. } => *out_dim,
            LayerKind::Conv(c) => c.out_len(),
        }
    }

    fn weight_len(&self) -> usize {
        match self {
            LayerKind::Dense { in_dim, out_dim } => in_dim * out_dim,
            LayerKind::Conv(c) => c.filters * c.patch_len(),
        }
    }

    fn bias_len(&self) -> usize {
        match self {
            LayerKind::Dense { out_dim, .. } => *out_dim,
            LayerKind::Conv(c) => c.filters,
        }
    }
}

/// One layer: affine map weights plus activation.
///
/// Dense weights are `[out][in]` row-major. Conv weights are
/// `[filter][in_c][ky][kx]` flattened, which matches the im2col patch layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.kind.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.kind.out_dim()
    }

    fn validate(&self, layer: usize) -> Result<()> {
        if let LayerKind::Conv(c) = &self.kind {
            c.validate(layer)?;
        }
        if self.weights.len() != self.kind.weight_len() {
            return Err(Error::shape(
                layer,
                format!(
                    "weight storage {} does not match shape {}",
                    self.weights.len(),
                    self.kind.weight_len()
                ),
            ));
        }
        if self.bias.len() != self.kind.bias_len() {
            return Err(Error::shape(
                layer,
                format!(
                    "bias storage {} does not match shape {}",
                    self.bias.len(),
                    self.kind.bias_len()
                ),
            ));
        }
        Ok(())
    }
}

/// Network parameters: a chain of layers (last layer is the output head),
/// the index of the hidden layer whose activation is the feature extractor,
/// and an optional scalar baseline head read from the feature layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
    pub feature_layer_index: usize,
    #[serde(default)]
    pub baseline_head: Option<Layer>,
}

/// Per-parameter values with the same shape as a [`NetworkParams`].
/// Used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGrad>,
    pub baseline: Option<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradient {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    w: vec![0.0; l.weights.len()],
                    b: vec![0.0; l.bias.len()],
                })
                .collect(),
            baseline: params.baseline_head.as_ref().map(|l| LayerGrad {
                w: vec![0.0; l.weights.len()],
                b: vec![0.0; l.bias.len()],
            }),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
        if let (Some(a), Some(b)) = (self.baseline.as_mut(), other.baseline.as_ref()) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in &mut l.w {
                *x *= s;
            }
            for x in &mut l.b {
                *x *= s;
            }
        }
        if let Some(l) = &mut self.baseline {
            for x in &mut l.w {
                *x *= s;
            }
            for x in &mut l.b {
                *x *= s;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += l.w.len() + l.b.len();
        }
        if let Some(l) = &self.baseline {
            n += l.w.len() + l.b.len();
        }
        n
    }

    /// Flattened copy in a fixed structural order (weights then bias, layer
    /// by layer, baseline head last).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        if let Some(l) = &self.baseline {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }
}

/// Everything a backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activations per layer.
    pub pre: Vec<Vec<f64>>,
    /// Layer outputs per layer: post-activation, post-dropout. `act[i]` is
    /// the exact input consumed by layer `i + 1`.
    pub act: Vec<Vec<f64>>,
    /// Inverted-dropout scale per unit (0 or 1/(1-p)); `None` when the layer
    /// ran without dropout.
    pub masks: Vec<Option<Vec<f64>>>,
    /// (pre, out) of the baseline head, present when the network has one.
    pub baseline: Option<(f64, f64)>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.act.last().expect("trace has at least one layer")
    }

    pub fn baseline_out(&self) -> Option<f64> {
        self.baseline.map(|(_, out)| out)
    }
}

impl NetworkParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Mutable access to the parameter at flat index `idx`, in the same
    /// structural order as [`Gradient::flatten`]. Test plumbing for the
    /// finite-difference oracles.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        let head = self.baseline_head.as_mut().expect("index within params");
        if idx < head.weights.len() {
            return &mut head.weights[idx];
        }
        idx -= head.weights.len();
        &mut head.bias[idx]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.feature_layer_index].out_dim()
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += l.weights.len() + l.bias.len();
        }
        if let Some(l) = &self.baseline_head {
            n += l.weights.len() + l.bias.len();
        }
        n
    }

    /// Checks that layer shapes compose and that the feature layer addresses
    /// a hidden layer.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::validation("network has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i)?;
            if i + 1 < self.layers.len() {
                let next = &self.layers[i + 1];
                if l.out_dim() != next.in_dim() {
                    return Err(Error::shape(
                        i + 1,
                        format!(
                            "layer {} outputs {} but layer {} expects {}",
                            i,
                            l.out_dim(),
                            i + 1,
                            next.in_dim()
                        ),
                    ));
                }
            }
        }
        if self.feature_layer_index + 1 >= self.layers.len() {
            return Err(Error::validation(format!(
                "feature_layer_index {} must address a hidden layer (network has {} layers)",
                self.feature_layer_index,
                self.layers.len()
            )));
        }
        if let Some(head) = &self.baseline_head {
            head.validate(self.layers.len())?;
            if head.in_dim() != self.feature_dim() {
                return Err(Error::shape(
                    self.layers.len(),
                    format!(
                        "baseline head expects {} inputs but feature layer has {}",
                        head.in_dim(),
                        self.feature_dim()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Deterministic forward pass (no dropout).
    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.forward_impl(input, 0.0, None::<&mut rand_chacha::ChaCha8Rng>)
    }

    /// Forward pass with inverted dropout on dense hidden layers. With
    /// `dropout_rate == 0` this is exactly [`NetworkParams::forward`] and the
    /// RNG is never touched.
    pub fn forward_train<R: rand::Rng>(
        &self,
        input: &[f64],
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<ForwardTrace> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::validation(format!(
                "dropout_rate {dropout_rate} outside [0,1)"
            )));
        }
        self.forward_impl(input, dropout_rate, Some(rng))
    }

    fn forward_impl<R: rand::Rng>(
        &self,
        input: &[f64],
        dropout_rate: f64,
        mut rng: Option<&mut R>,
    ) -> Result<ForwardTrace> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(
                0,
                format!("input length {} != expected {}", input.len(), self.input_dim()),
            ));
        }
        let n = self.layers.len();
        let mut pre = Vec::with_capacity(n);
        let mut act = Vec::with_capacity(n);
        let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);

        let mut cur: &[f64] = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim()];
            match &layer.kind {
                LayerKind::Dense { in_dim, .. } => {
                    dense_forward(&layer.weights, &layer.bias, cur, *in_dim, &mut z);
                }
                LayerKind::Conv(shape) => {
                    conv_forward(shape, &layer.weights, &layer.bias, cur, &mut z);
                }
            }
            let mut a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();

            let is_hidden_dense =
                matches!(layer.kind, LayerKind::Dense { .. }) && i + 1 < self.layers.len();
            let mask = if dropout_rate > 0.0 && is_hidden_dense {
                let rng = rng.as_mut().expect("dropout requires an rng");
                let keep = 1.0 - dropout_rate;
                let m: Vec<f64> = a
                    .iter()
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                for (v, s) in a.iter_mut().zip(&m) {
                    *v *= s;
                }
                Some(m)
            } else {
                None
            };

            pre.push(z);
            act.push(a);
            masks.push(mask);
            cur = act.last().unwrap();
        }

        let baseline = match &self.baseline_head {
            Some(head) => {
                let feat = &act[self.feature_layer_index];
                let mut z = vec![0.0; 1];
                dense_forward(&head.weights, &head.bias, feat, head.in_dim(), &mut z);
                let out = head.activation.apply(z[0]);
                Some((z[0], out))
            }
            None => None,
        };

        Ok(ForwardTrace {
            input: input.to_vec(),
            pre,
            act,
            masks,
            baseline,
        })
    }

    /// The feature extractor output: the activation at `feature_layer_index`.
    pub fn feature<'t>(&self, trace: &'t ForwardTrace) -> &'t [f64] {
        &trace.act[self.feature_layer_index]
    }

    /// Reverse-mode gradient of
    /// `<output_cot, output> + <feature_cot, feature> + baseline_cot * baseline`
    /// with respect to every parameter. Any cotangent may be omitted.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_cot: &[f64],
        feature_cot: Option<&[f64]>,
        baseline_cot: Option<f64>,
    ) -> Result<Gradient> {
        let n = self.layers.len();
        if output_cot.len() != self.output_dim() {
            return Err(Error::shape(
                n - 1,
                format!(
                    "output cotangent length {} != output dim {}",
                    output_cot.len(),
                    self.output_dim()
                ),
            ));
        }
        if let Some(fc) = feature_cot {
            if fc.len() != self.feature_dim() {
                return Err(Error::shape(
                    self.feature_layer_index,
                    format!(
                        "feature cotangent length {} != feature dim {}",
                        fc.len(),
                        self.feature_dim()
                    ),
                ));
            }
        }
        if baseline_cot.is_some() && self.baseline_head.is_none() {
            return Err(Error::validation(
                "baseline cotangent supplied but network has no baseline head",
            ));
        }

        let mut grad = Gradient::zeros_like(self);

        // d_out[i] = dL/d(act[i]) for the layer currently being processed.
        let mut d_out = output_cot.to_vec();

        for i in (0..n).rev() {
            let layer = &self.layers[i];

            // Inject feature and baseline-head contributions where the
            // feature layer's output fans out.
            if i == self.feature_layer_index {
                if let Some(fc) = feature_cot {
                    for (d, &c) in d_out.iter_mut().zip(fc) {
                        *d += c;
                    }
                }
                if let Some(bc) = baseline_cot {
                    let head = self.baseline_head.as_ref().unwrap();
                    let hg = grad.baseline.as_mut().unwrap();
                    let d_pre_head = bc * head.activation.grad(trace.baseline.unwrap().0);
                    let feat = &trace.act[i];
                    for (w, &x) in hg.w.iter_mut().zip(feat) {
                        *w += d_pre_head * x;
                    }
                    hg.b[0] += d_pre_head;
                    for (j, d) in d_out.iter_mut().enumerate() {
                        *d += head.weights[j] * d_pre_head;
                    }
                }
            }

            // Undo dropout scaling, then the activation.
            if let Some(mask) = &trace.masks[i] {
                for (d, &m) in d_out.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            let mut d_pre = d_out;
            for (d, &z) in d_pre.iter_mut().zip(&trace.pre[i]) {
                *d *= layer.activation.grad(z);
            }

            let input: &[f64] = if i == 0 { &trace.input } else { &trace.act[i - 1] };
            let lg = &mut grad.layers[i];
            let mut d_in = vec![0.0; layer.in_dim()];
            match &layer.kind {
                LayerKind::Dense { in_dim, .. } => {
                    dense_backward(&layer.weights, input, *in_dim, &d_pre, &mut lg.w, &mut lg.b, &mut d_in);
                }
                LayerKind::Conv(shape) => {
                    conv_backward(shape, &layer.weights, input, &d_pre, &mut lg.w, &mut lg.b, &mut d_in);
                }
            }
            d_out = d_in;
        }

        Ok(grad)
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 = a[j].mul_add(b[j], s0);
        s1 = a[j + 1].mul_add(b[j + 1], s1);
        s2 = a[j + 2].mul_add(b[j + 2], s2);
        s3 = a[j + 3].mul_add(b[j + 3], s3);
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail = a[j].mul_add(b[j], tail);
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// y += s * x
#[inline]
fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = s.mul_add(xi, *yi);
    }
}

fn dense_forward(weights: &[f64], bias: &[f64], input: &[f64], in_dim: usize, out: &mut [f64]) {
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &weights[o * in_dim..(o + 1) * in_dim];
        *out_v = bias[o] + dot(row, input);
    }
}

fn dense_backward(
    weights: &[f64],
    input: &[f64],
    in_dim: usize,
    d_pre: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    d_in: &mut [f64],
) {
    for (o, &dp) in d_pre.iter().enumerate() {
        grad_b[o] += dp;
        let row = o * in_dim;
        axpy(&mut grad_w[row..row + in_dim], dp, input);
        axpy(d_in, dp, &weights[row..row + in_dim]);
    }
}

/// Gathers im2col patches: one row per output position, `in_c * k * k` wide.
fn im2col(shape: &ConvShape, input: &[f64], patches: &mut [f64]) {
    let (k, s) = (shape.kernel, shape.stride);
    let (out_h, out_w) = (shape.out_h(), shape.out_w());
    let plane = shape.in_h * shape.in_w;
    let patch_len = shape.patch_len();
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row = (oy * out_w + ox) * patch_len;
            let mut col = 0;
            for c in 0..shape.in_c {
                let base = c * plane;
                for ky in 0..k {
                    let src = base + (oy * s + ky) * shape.in_w + ox * s;
                    patches[row + col..row + col + k].copy_from_slice(&input[src..src + k]);
                    col += k;
                }
            }
        }
    }
}

fn conv_forward(shape: &ConvShape, weights: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let patch_len = shape.patch_len();
    let positions = shape.out_h() * shape.out_w();
    let mut patches = vec![0.0; positions * patch_len];
    im2col(shape, input, &mut patches);
    for f in 0..shape.filters {
        let w = &weights[f * patch_len..(f + 1) * patch_len];
        let out_f = &mut out[f * positions..(f + 1) * positions];
        for (p, out_v) in out_f.iter_mut().enumerate() {
            let row = &patches[p * patch_len..(p + 1) * patch_len];
            *out_v = bias[f] + dot(row, w);
        }
    }
}

fn conv_backward(
    shape: &ConvShape,
    weights: &[f64],
    input: &[f64],
    d_pre: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    d_in: &mut [f64],
) {
    let patch_len = shape.patch_len();
    let positions = shape.out_h() * shape.out_w();
    let mut patches = vec![0.0; positions * patch_len];
    im2col(shape, input, &mut patches);

    let mut d_patches = vec![0.0; positions * patch_len];
    for f in 0..shape.filters {
        let w = &weights[f * patch_len..(f + 1) * patch_len];
        let gw = &mut grad_w[f * patch_len..(f + 1) * patch_len];
        let d_f = &d_pre[f * positions..(f + 1) * positions];
        let mut db = 0.0;
        for (p, &dp) in d_f.iter().enumerate() {
            db += dp;
            let row = p * patch_len;
            axpy(gw, dp, &patches[row..row + patch_len]);
            axpy(&mut d_patches[row..row + patch_len], dp, w);
        }
        grad_b[f] += db;
    }

    // col2im: scatter patch gradients back onto the input grid.
    let (k, s) = (shape.kernel, shape.stride);
    let plane = shape.in_h * shape.in_w;
    for oy in 0..shape.out_h() {
        for ox in 0..shape.out_w() {
            let row = (oy * shape.out_w() + ox) * patch_len;
            let mut col = 0;
            for c in 0..shape.in_c {
                let base = c * plane;
                for ky in 0..k {
                    let dst = base + (oy * s + ky) * shape.in_w + ox * s;
                    axpy(&mut d_in[dst..dst + k], 1.0, &d_patches[row + col..row + col + k]);
                    col += k;
                }
            }
        }
    }
}
