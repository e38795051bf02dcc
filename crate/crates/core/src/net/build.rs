//! Network constructors with standard weight initialization.

use rand::Rng;

use super::{Activation, ConvShape, Layer, LayerKind, NetworkParams};
use crate::error::{Error, Result};

/// Uniform init on [-limit, limit]. Xavier for tanh/identity, He for relu.
fn init_limit(activation: Activation, fan_in: usize, fan_out: usize) -> f64 {
    match activation {
        Activation::Relu => (6.0 / fan_in as f64).sqrt(),
        Activation::Tanh | Activation::Identity => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

fn init_vec<R: Rng>(len: usize, limit: f64, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

fn dense_layer<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Layer {
    let limit = init_limit(activation, in_dim, out_dim);
    Layer {
        kind: LayerKind::Dense { in_dim, out_dim },
        weights: init_vec(in_dim * out_dim, limit, rng),
        bias: vec![0.0; out_dim],
        activation,
    }
}

/// Options for [`mlp`].
#[derive(Debug, Clone, Default)]
pub struct MlpOptions {
    /// Attach a scalar baseline head to the feature layer.
    pub baseline_head: bool,
    /// Zero out these input columns in the first layer's weights. Useful for
    /// constructing networks that provably ignore selected input slots.
    pub zero_input_cols: Vec<usize>,
}

/// Fully-connected network: `input_dim -> hidden[..] -> output_dim`. Hidden
/// layers use `hidden_act`, the output layer is linear, and the feature layer
/// is the last hidden layer.
pub fn mlp<R: Rng>(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    hidden_act: Activation,
    opts: &MlpOptions,
    rng: &mut R,
) -> Result<NetworkParams> {
    if hidden.is_empty() {
        return Err(Error::validation("mlp needs at least one hidden layer"));
    }
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &h in hidden {
        layers.push(dense_layer(prev, h, hidden_act, rng));
        prev = h;
    }
    layers.push(dense_layer(prev, output_dim, Activation::Identity, rng));

    for &col in &opts.zero_input_cols {
        if col >= input_dim {
            return Err(Error::validation(format!(
                "zeroed input column {col} out of range for input_dim {input_dim}"
            )));
        }
        let first = &mut layers[0];
        for o in 0..hidden[0] {
            first.weights[o * input_dim + col] = 0.0;
        }
    }

    let feature_layer_index = hidden.len() - 1;
    let feature_dim = hidden[hidden.len() - 1];
    let baseline_head = opts
        .baseline_head
        .then(|| dense_layer(feature_dim, 1, Activation::Identity, rng));

    let net = NetworkParams {
        layers,
        feature_layer_index,
        baseline_head,
    };
    net.validate()?;
    Ok(net)
}

/// One conv stage of [`conv_net`].
#[derive(Debug, Clone, Copy)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Convolutional network over `[c][h][w]` inputs: conv stages (relu), one
/// dense feature layer (relu), then a linear output head. The feature layer
/// is the dense hidden layer.
pub fn conv_net<R: Rng>(
    in_h: usize,
    in_w: usize,
    in_c: usize,
    convs: &[ConvLayerSpec],
    feature_dim: usize,
    output_dim: usize,
    baseline_head: bool,
    rng: &mut R,
) -> Result<NetworkParams> {
    if convs.is_empty() {
        return Err(Error::validation("conv_net needs at least one conv stage"));
    }
    let mut layers = Vec::with_capacity(convs.len() + 2);
    let (mut h, mut w, mut c) = (in_h, in_w, in_c);
    for spec in convs {
        let shape = ConvShape {
            in_h: h,
            in_w: w,
            in_c: c,
            filters: spec.filters,
            kernel: spec.kernel,
            stride: spec.stride,
        };
        shape.validate(layers.len())?;
        let patch = shape.in_c * spec.kernel * spec.kernel;
        let limit = init_limit(Activation::Relu, patch, spec.filters);
        layers.push(Layer {
            kind: LayerKind::Conv(shape),
            weights: init_vec(spec.filters * patch, limit, rng),
            bias: vec![0.0; spec.filters],
            activation: Activation::Relu,
        });
        h = shape.out_h();
        w = shape.out_w();
        c = spec.filters;
    }
    let flat = c * h * w;
    layers.push(dense_layer(flat, feature_dim, Activation::Relu, rng));
    layers.push(dense_layer(feature_dim, output_dim, Activation::Identity, rng));

    let feature_layer_index = layers.len() - 2;
    let baseline_head = baseline_head.then(|| dense_layer(feature_dim, 1, Activation::Identity, rng));

    let net = NetworkParams {
        layers,
        feature_layer_index,
        baseline_head,
    };
    net.validate()?;
    Ok(net)
}
