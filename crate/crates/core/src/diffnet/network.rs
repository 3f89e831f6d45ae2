//! Layer-list networks: the generator, the patch discriminator and the nonlinear pre-map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::Padding;
use super::params::ModelParams;
use super::tape::{Activation, Tape, Var};
use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Anything that maps a batch node to another batch node on a tape.
pub trait ImageMap<T: Scalar> {
    fn apply(&self, tape: &mut Tape<T>, x: Var) -> Result<Var>;
}

impl<T: Scalar, F> ImageMap<T> for F
where
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    fn apply(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        self(tape, x)
    }
}

/// The identity map.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl<T: Scalar> ImageMap<T> for Identity {
    fn apply(&self, _tape: &mut Tape<T>, x: Var) -> Result<Var> {
        Ok(x)
    }
}

/// One entry of a [`NetworkSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    InstanceNorm {
        channels: usize,
    },
    Act(Activation),
    /// `relu(x + norm(conv(norm(conv(x)))))` with 3x3 reflection-padded convolutions.
    Residual {
        channels: usize,
    },
    /// Average over the spatial axes.
    SpatialMean,
}

/// Layer list plus the seed that fixes its initial parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub layers: Vec<Layer>,
    pub seed: u64,
    pub init_std: f64,
}

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;

impl NetworkSpec {
    pub fn new(in_channels: usize, layers: Vec<Layer>, seed: u64) -> Self {
        Self {
            in_channels,
            layers,
            seed,
            init_std: INIT_STD,
        }
    }

    /// Checks channel chaining and returns the output channel count.
    pub fn validate(&self) -> Result<usize> {
        if self.in_channels == 0 {
            return Err(invalid("network input needs at least one channel"));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(invalid(format!("bad initialization std {}", self.init_std)));
        }
        let mut c = self.in_channels;
        for (i, layer) in self.layers.iter().enumerate() {
            let expect = |want: usize| -> Result<()> {
                if want != c {
                    return Err(invalid(format!(
                        "layer {i} expects {want} input channels but receives {c}"
                    )));
                }
                Ok(())
            };
            match *layer {
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    ..
                } => {
                    expect(in_channels)?;
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(invalid(format!("layer {i} has a zero-sized convolution")));
                    }
                    c = out_channels;
                }
                Layer::ConvTranspose {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    output_padding,
                    ..
                } => {
                    expect(in_channels)?;
                    if out_channels == 0 || kernel == 0 || stride == 0 || output_padding >= stride {
                        return Err(invalid(format!("layer {i} has an invalid transposed convolution")));
                    }
                    c = out_channels;
                }
                Layer::InstanceNorm { channels } | Layer::Residual { channels } => expect(channels)?,
                Layer::Act(_) | Layer::SpatialMean => {}
            }
        }
        Ok(c)
    }
}

fn conv_params<T: Scalar>(
    params: &mut ModelParams<T>,
    prefix: &str,
    shape: [usize; 4],
    bias_len: usize,
    dist: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n: usize = shape.iter().product();
    let w = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    params.push(format!("{prefix}.weight"), Tensor::new(shape.to_vec(), w)?)?;
    params.push(format!("{prefix}.bias"), Tensor::zeros(vec![bias_len]))?;
    Ok(())
}

fn norm_params<T: Scalar>(params: &mut ModelParams<T>, prefix: &str, channels: usize) -> Result<()> {
    params.push(format!("{prefix}.gain"), Tensor::filled(vec![channels], T::one()))?;
    params.push(format!("{prefix}.shift"), Tensor::zeros(vec![channels]))?;
    Ok(())
}

/// A network spec with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: ModelParams<T>,
}

impl<T: Scalar> Network<T> {
    /// Validates the spec and draws the initial parameters from its seed:
    /// `N(0, init_std)` kernels, zero biases, unit gains and zero shifts.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let dist = Normal::new(0.0, spec.init_std).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = ModelParams::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            match *layer {
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => conv_params(
                    &mut params,
                    &format!("{i}.conv"),
                    [out_channels, in_channels, kernel, kernel],
                    out_channels,
                    &dist,
                    &mut rng,
                )?,
                Layer::ConvTranspose {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => conv_params(
                    &mut params,
                    &format!("{i}.convt"),
                    [in_channels, out_channels, kernel, kernel],
                    out_channels,
                    &dist,
                    &mut rng,
                )?,
                Layer::InstanceNorm { channels } => norm_params(&mut params, &format!("{i}.norm"), channels)?,
                Layer::Residual { channels } => {
                    for half in ["a", "b"] {
                        conv_params(
                            &mut params,
                            &format!("{i}.res.{half}.conv"),
                            [channels, channels, 3, 3],
                            channels,
                            &dist,
                            &mut rng,
                        )?;
                        norm_params(&mut params, &format!("{i}.res.{half}.norm"), channels)?;
                    }
                }
                Layer::Act(_) | Layer::SpatialMean => {}
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    /// Replaces the parameters, e.g. with a loaded checkpoint of the same layout.
    pub fn set_params(&mut self, params: ModelParams<T>) -> Result<()> {
        let same_layout = params.len() == self.params.len()
            && params
                .iter()
                .zip(self.params.iter())
                .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape());
        if !same_layout {
            return Err(invalid("parameter layout does not match the network"));
        }
        self.params = params;
        Ok(())
    }

    /// Records the parameters on `tape`; `trainable = false` freezes them.
    pub fn bind<'n>(&'n self, tape: &mut Tape<T>, trainable: bool) -> BoundNetwork<'n, T> {
        BoundNetwork {
            net: self,
            vars: self.params.bind(tape, trainable),
        }
    }

    /// Uses existing tape nodes as the parameters, e.g. leaves holding perturbed copies.
    pub fn bind_vars<'n>(&'n self, tape: &Tape<T>, vars: Vec<Var>) -> Result<BoundNetwork<'n, T>> {
        if vars.len() != self.params.len()
            || vars
                .iter()
                .zip(self.params.iter())
                .any(|(&v, (_, t))| tape.shape(v) != t.shape())
        {
            return Err(invalid("bound variables do not match the parameter layout"));
        }
        Ok(BoundNetwork { net: self, vars })
    }

    /// Forward pass on a fresh tape with frozen parameters.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let y = bound.apply(&mut tape, x)?;
        Ok(tape.tensor(y))
    }
}

/// A [`Network`] whose parameters live on a tape.
pub struct BoundNetwork<'n, T> {
    net: &'n Network<T>,
    vars: Vec<Var>,
}

impl<T: Scalar> BoundNetwork<'_, T> {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn grads(&self, tape: &Tape<T>) -> Vec<Vec<T>> {
        self.net.params.collect_grads(tape, &self.vars)
    }
}

impl<T: Scalar> ImageMap<T> for BoundNetwork<'_, T> {
    fn apply(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut p = self.vars.iter().copied();
        let mut next = || p.next().expect("parameters follow the layer list");
        let mut h = x;
        for layer in &self.net.spec.layers {
            h = match *layer {
                Layer::Conv { stride, padding, .. } => {
                    let (w, b) = (next(), next());
                    tape.conv2d(h, w, b, stride, padding)?
                }
                Layer::ConvTranspose {
                    stride,
                    padding,
                    output_padding,
                    ..
                } => {
                    let (w, b) = (next(), next());
                    tape.conv_transpose2d(h, w, b, stride, padding, output_padding)?
                }
                Layer::InstanceNorm { .. } => {
                    let (g, s) = (next(), next());
                    tape.instance_norm(h, g, s, INSTANCE_NORM_EPS)?
                }
                Layer::Act(kind) => tape.activation(h, kind),
                Layer::Residual { .. } => {
                    let mut y = h;
                    for _ in 0..2 {
                        let (w, b, g, s) = (next(), next(), next(), next());
                        y = tape.conv2d(y, w, b, 1, Padding::Reflection(1))?;
                        y = tape.instance_norm(y, g, s, INSTANCE_NORM_EPS)?;
                    }
                    let sum = tape.add(h, y)?;
                    tape.activation(sum, Activation::Relu)
                }
                Layer::SpatialMean => tape.spatial_mean(h)?,
            };
        }
        Ok(h)
    }
}

/// Generator layout knobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorShape {
    pub channels: usize,
    pub base_filters: usize,
    pub downsamples: usize,
    pub residual_blocks: usize,
}

impl Default for GeneratorShape {
    fn default() -> Self {
        Self {
            channels: 1,
            base_filters: 8,
            downsamples: 2,
            residual_blocks: 2,
        }
    }
}

/// Encoder / residual middle / decoder generator ending in `tanh`.
///
/// Every downsampling conv halves the spatial size and doubles the channels; the
/// decoder mirrors it with stride-2 transposed convolutions, so inputs whose sides
/// are divisible by `2^downsamples` keep their shape.
pub fn generator_spec(shape: GeneratorShape, seed: u64) -> NetworkSpec {
    let c = shape.channels;
    let f = shape.base_filters;
    let mut layers = vec![
        Layer::Conv {
            in_channels: c,
            out_channels: f,
            kernel: 3,
            stride: 1,
            padding: Padding::Reflection(1),
        },
        Layer::InstanceNorm { channels: f },
        Layer::Act(Activation::Relu),
    ];
    let mut ch = f;
    for _ in 0..shape.downsamples {
        layers.push(Layer::Conv {
            in_channels: ch,
            out_channels: 2 * ch,
            kernel: 3,
            stride: 2,
            padding: Padding::Zero(1),
        });
        ch *= 2;
        layers.push(Layer::InstanceNorm { channels: ch });
        layers.push(Layer::Act(Activation::Relu));
    }
    for _ in 0..shape.residual_blocks {
        layers.push(Layer::Residual { channels: ch });
    }
    for _ in 0..shape.downsamples {
        layers.push(Layer::ConvTranspose {
            in_channels: ch,
            out_channels: ch / 2,
            kernel: 3,
            stride: 2,
            padding: 1,
            output_padding: 1,
        });
        ch /= 2;
        layers.push(Layer::InstanceNorm { channels: ch });
        layers.push(Layer::Act(Activation::Relu));
    }
    layers.push(Layer::Conv {
        in_channels: ch,
        out_channels: c,
        kernel: 3,
        stride: 1,
        padding: Padding::Reflection(1),
    });
    layers.push(Layer::Act(Activation::Tanh));
    NetworkSpec::new(c, layers, seed)
}

pub fn build_generator<T: Scalar>(shape: GeneratorShape, seed: u64) -> Result<Network<T>> {
    if shape.base_filters == 0 {
        return Err(invalid("generator needs at least one base filter"));
    }
    Network::new(generator_spec(shape, seed))
}

/// Patch discriminator: 4x4 stride-2 convs with the listed filter counts
/// (first without normalization), a 4x4 conv to one channel, spatial averaging and a
/// sigmoid. Output shape is `N x 1 x 1 x 1`.
pub fn discriminator_spec(channels: usize, filters: &[usize], seed: u64) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut ch = channels;
    for (i, &f) in filters.iter().enumerate() {
        layers.push(Layer::Conv {
            in_channels: ch,
            out_channels: f,
            kernel: 4,
            stride: 2,
            padding: Padding::Zero(1),
        });
        if i > 0 {
            layers.push(Layer::InstanceNorm { channels: f });
        }
        layers.push(Layer::Act(Activation::LeakyRelu(LEAKY_SLOPE)));
        ch = f;
    }
    layers.push(Layer::Conv {
        in_channels: ch,
        out_channels: 1,
        kernel: 4,
        stride: 1,
        padding: Padding::Zero(1),
    });
    layers.push(Layer::SpatialMean);
    layers.push(Layer::Act(Activation::Sigmoid));
    NetworkSpec::new(channels, layers, seed)
}

pub const DEFAULT_DISCRIMINATOR_FILTERS: [usize; 3] = [8, 16, 32];

pub fn build_discriminator<T: Scalar>(channels: usize, filters: &[usize], seed: u64) -> Result<Network<T>> {
    if filters.is_empty() {
        return Err(invalid("discriminator needs at least one conv layer"));
    }
    Network::new(discriminator_spec(channels, filters, seed))
}

/// `depth` repetitions of reflection-pad / 3x3 conv to `2C` / instance norm /
/// leaky ReLU, then a 1x1 conv back to `C` channels and a sigmoid. Depth 0 is the
/// identity map.
pub fn nonlinear_block_spec(depth: usize, channels: usize, seed: u64) -> NetworkSpec {
    let mut layers = Vec::new();
    if depth > 0 {
        let wide = 2 * channels;
        let mut ch = channels;
        for _ in 0..depth {
            layers.push(Layer::Conv {
                in_channels: ch,
                out_channels: wide,
                kernel: 3,
                stride: 1,
                padding: Padding::Reflection(1),
            });
            layers.push(Layer::InstanceNorm { channels: wide });
            layers.push(Layer::Act(Activation::LeakyRelu(LEAKY_SLOPE)));
            ch = wide;
        }
        layers.push(Layer::Conv {
            in_channels: wide,
            out_channels: channels,
            kernel: 1,
            stride: 1,
            padding: Padding::None,
        });
        layers.push(Layer::Act(Activation::Sigmoid));
    }
    NetworkSpec::new(channels, layers, seed)
}

pub fn build_nonlinear_block<T: Scalar>(depth: usize, channels: usize, seed: u64) -> Result<Network<T>> {
    Network::new(nonlinear_block_spec(depth, channels, seed))
}
