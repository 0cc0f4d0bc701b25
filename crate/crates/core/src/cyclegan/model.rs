use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ArchConfig;
use super::EngineError;
use crate::nn::{ConvSpec, LayerSpec, Network, Shape, Tensor};

/// The four networks of the cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NetworkRole {
    /// Generator translating raw eyes (A) into green-marker eyes (B).
    #[serde(rename = "G")]
    G,
    /// Generator translating green-marker eyes back into raw eyes.
    #[serde(rename = "F")]
    F,
    /// Discriminator judging domain A images.
    #[serde(rename = "D_X")]
    DX,
    /// Discriminator judging domain B images.
    #[serde(rename = "D_Y")]
    DY,
}

impl NetworkRole {
    pub const ALL: [NetworkRole; 4] = [NetworkRole::G, NetworkRole::F, NetworkRole::DX, NetworkRole::DY];

    pub fn as_str(&self) -> &'static str {
        match self {
            NetworkRole::G => "G",
            NetworkRole::F => "F",
            NetworkRole::DX => "D_X",
            NetworkRole::DY => "D_Y",
        }
    }

    fn stream(&self) -> u64 {
        match self {
            NetworkRole::G => 1,
            NetworkRole::F => 2,
            NetworkRole::DX => 3,
            NetworkRole::DY => 4,
        }
    }

    pub fn is_generator(&self) -> bool {
        matches!(self, NetworkRole::G | NetworkRole::F)
    }
}

/// Weight-initialisation RNG for one network of a seeded run.
pub(crate) fn init_rng(seed: u64, role: NetworkRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role.stream());
    rng
}

fn conv(name: impl Into<String>, i: usize, o: usize, kernel: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv {
        name: name.into(),
        conv: ConvSpec { in_channels: i, out_channels: o, kernel, stride, pad },
    }
}

/// Layer list of a generator: stem, strided encoder, residual blocks,
/// transposed decoder, tanh head. With `input_skip` everything before the
/// tanh is wrapped in an unnamed skip connection.
pub fn generator_layers(arch: &ArchConfig) -> Vec<LayerSpec> {
    let act = || LayerSpec::LeakyRelu { slope: arch.leaky_slope };
    let half = arch.stem_kernel / 2;
    let mut ch = arch.gen_channels;
    let mut layers = vec![conv("stem", 3, ch, arch.stem_kernel, 1, half), LayerSpec::InstanceNorm, act()];
    for i in 1..=arch.gen_downsamplings {
        layers.extend([conv(format!("down{i}"), ch, ch * 2, 4, 2, 1), LayerSpec::InstanceNorm, act()]);
        ch *= 2;
    }
    for i in 1..=arch.res_blocks {
        layers.push(LayerSpec::Residual {
            name: format!("res{i}"),
            body: vec![
                conv("conv1", ch, ch, 3, 1, 1),
                LayerSpec::InstanceNorm,
                act(),
                conv("conv2", ch, ch, 3, 1, 1),
                LayerSpec::InstanceNorm,
            ],
        });
    }
    for i in 1..=arch.gen_downsamplings {
        layers.extend([
            LayerSpec::ConvTranspose {
                name: format!("up{i}"),
                conv: ConvSpec { in_channels: ch, out_channels: ch / 2, kernel: 4, stride: 2, pad: 1 },
            },
            LayerSpec::InstanceNorm,
            act(),
        ]);
        ch /= 2;
    }
    layers.push(conv("head", ch, 3, arch.stem_kernel, 1, half));
    if arch.input_skip {
        layers = vec![LayerSpec::Skip { body: layers }];
    }
    layers.push(LayerSpec::Tanh);
    layers
}

/// Layer list of a patch discriminator: strided 4×4 convolutions with
/// LeakyReLU, one stride-1 widening convolution and a one-channel score head.
pub fn discriminator_layers(arch: &ArchConfig) -> Vec<LayerSpec> {
    let act = || LayerSpec::LeakyRelu { slope: arch.leaky_slope };
    let mut ch = arch.disc_channels;
    let mut layers = vec![conv("d1", 3, ch, 4, 2, 1), act()];
    for i in 2..=arch.disc_downsamplings {
        layers.extend([conv(format!("d{i}"), ch, ch * 2, 4, 2, 1), LayerSpec::InstanceNorm, act()]);
        ch *= 2;
    }
    let last = arch.disc_downsamplings + 1;
    layers.extend([
        conv(format!("d{last}"), ch, ch * 2, 4, 1, 1),
        LayerSpec::InstanceNorm,
        act(),
        conv("score", ch * 2, 1, 4, 1, 1),
    ]);
    layers
}

/// A translation network mapping 3-channel images in [-1, 1] to the same shape.
#[derive(Clone, Debug)]
pub struct Generator {
    pub role: NetworkRole,
    pub net: Network,
}

/// A patch discriminator emitting a one-channel score map.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub role: NetworkRole,
    pub net: Network,
}

pub fn build_generator(arch: &ArchConfig, role: NetworkRole, seed: u64) -> Result<Generator, EngineError> {
    arch.validate()?;
    if !role.is_generator() {
        return Err(EngineError::InvalidConfig(format!("{} is not a generator", role.as_str())));
    }
    let net = Network::new(generator_layers(arch), arch.init_std, &mut init_rng(seed, role));
    Ok(Generator { role, net })
}

pub fn build_discriminator(arch: &ArchConfig, role: NetworkRole, seed: u64) -> Result<Discriminator, EngineError> {
    arch.validate()?;
    if role.is_generator() {
        return Err(EngineError::InvalidConfig(format!("{} is not a discriminator", role.as_str())));
    }
    let net = Network::new(discriminator_layers(arch), arch.init_std, &mut init_rng(seed, role));
    Ok(Discriminator { role, net })
}

impl Generator {
    /// A parameter-free generator returning its input unchanged.
    pub fn identity(role: NetworkRole) -> Self {
        let mut rng = init_rng(0, role);
        Self { role, net: Network::new(Vec::new(), 0.0, &mut rng) }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, EngineError> {
        check_shape(&self.net, x.shape(), true)?;
        Ok(self.net.forward(x))
    }
}

impl Discriminator {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, EngineError> {
        check_shape(&self.net, x.shape(), false)?;
        Ok(self.net.forward(x))
    }
}

pub(crate) fn check_shape(net: &Network, input: Shape, same: bool) -> Result<Shape, EngineError> {
    match net.output_shape(input) {
        Some(out) if !same || out == input => Ok(out),
        _ => Err(EngineError::ShapeMismatch(format!("network cannot map input {input}"))),
    }
}
