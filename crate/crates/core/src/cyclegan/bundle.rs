use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::config::{ArchConfig, TrainingConfig};
use super::model::{build_discriminator, build_generator, Discriminator, Generator, NetworkRole};
use super::EngineError;
use crate::nn::{AdamState, Network, Shape, Tensor};
use crate::types::{EyeImage, Provenance, EYE_HEIGHT, EYE_WIDTH};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Translation direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Raw eye to green-marker eye (generator G).
    AtoB,
    /// Green-marker eye to raw eye (generator F).
    BtoA,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AtoB" | "a2b" | "A2B" => Ok(Direction::AtoB),
            "BtoA" | "b2a" | "B2A" => Ok(Direction::BtoA),
            other => Err(format!("unknown direction {other:?}, expected AtoB or BtoA")),
        }
    }
}

/// Both generators, both discriminators and their optimizer state.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: TrainingConfig,
    pub g: Generator,
    pub f: Generator,
    pub d_x: Discriminator,
    pub d_y: Discriminator,
    pub optim: BTreeMap<NetworkRole, AdamState>,
    pub step: u64,
    pub epoch: u64,
}

impl ModelBundle {
    /// Fresh networks initialised from `config.seed`.
    pub fn new(config: TrainingConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let arch = &config.arch;
        let g = build_generator(arch, NetworkRole::G, config.seed)?;
        let f = build_generator(arch, NetworkRole::F, config.seed)?;
        let d_x = build_discriminator(arch, NetworkRole::DX, config.seed)?;
        let d_y = build_discriminator(arch, NetworkRole::DY, config.seed)?;
        let optim = [
            (NetworkRole::G, AdamState::new(&g.net)),
            (NetworkRole::F, AdamState::new(&f.net)),
            (NetworkRole::DX, AdamState::new(&d_x.net)),
            (NetworkRole::DY, AdamState::new(&d_y.net)),
        ]
        .into_iter()
        .collect();
        Ok(Self {
            config,
            g,
            f,
            d_x,
            d_y,
            optim,
            step: 0,
            epoch: 0,
        })
    }

    pub fn network(&self, role: NetworkRole) -> &Network {
        match role {
            NetworkRole::G => &self.g.net,
            NetworkRole::F => &self.f.net,
            NetworkRole::DX => &self.d_x.net,
            NetworkRole::DY => &self.d_y.net,
        }
    }

    pub fn network_mut(&mut self, role: NetworkRole) -> &mut Network {
        match role {
            NetworkRole::G => &mut self.g.net,
            NetworkRole::F => &mut self.f.net,
            NetworkRole::DX => &mut self.d_x.net,
            NetworkRole::DY => &mut self.d_y.net,
        }
    }

    pub fn generator(&self, direction: Direction) -> &Generator {
        match direction {
            Direction::AtoB => &self.g,
            Direction::BtoA => &self.f,
        }
    }

    /// Runs one generator over a 400×300 eye image.
    pub fn translate(&self, image: &EyeImage, direction: Direction) -> Result<EyeImage, EngineError> {
        self.translate_pixels(image.pixels(), direction)
    }

    /// As [`Self::translate`] but accepts any raster, rejecting wrong sizes.
    pub fn translate_pixels(&self, pixels: &RgbImage, direction: Direction) -> Result<EyeImage, EngineError> {
        if pixels.dimensions() != (EYE_WIDTH, EYE_HEIGHT) {
            return Err(EngineError::ShapeMismatch(format!(
                "expected a {EYE_WIDTH}x{EYE_HEIGHT} image, got {}x{}",
                pixels.width(),
                pixels.height()
            )));
        }
        let out = self.generator(direction).forward(&image_to_tensor(pixels))?;
        let img = tensor_to_image(&out, 0);
        Ok(EyeImage::new(img, Provenance::Translated).expect("generator preserves shape"))
    }

    pub fn save(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir)?;
        let mut tensors = Vec::new();
        let mut optimizer_steps = BTreeMap::new();
        for role in NetworkRole::ALL {
            let net = self.network(role);
            let state = &self.optim[&role];
            optimizer_steps.insert(role, state.step);
            for (i, p) in net.params().iter().enumerate() {
                for (kind, data) in [
                    (TensorKind::Value, &p.value),
                    (TensorKind::AdamM, &state.m[i]),
                    (TensorKind::AdamV, &state.v[i]),
                ] {
                    let file = kind.file_name(role, &p.name);
                    fs::write(dir.join(&file), encode_f32(data))?;
                    tensors.push(TensorEntry {
                        network: role,
                        param: p.name.clone(),
                        kind,
                        file,
                        shape: p.shape.clone(),
                    });
                }
            }
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            step: self.step,
            epoch: self.epoch,
            arch: self.config.arch.clone(),
            config: self.config.clone(),
            optimizer_steps,
            tensors,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EngineError> {
        let bytes = fs::read(dir.join(MANIFEST_FILE)).map_err(|e| {
            EngineError::Checkpoint(format!("{}: {e}", dir.join(MANIFEST_FILE).display()))
        })?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(EngineError::Checkpoint(format!(
                "unsupported checkpoint format {}",
                manifest.format_version
            )));
        }
        let mut config = manifest.config.clone();
        config.arch = manifest.arch.clone();
        let mut bundle = ModelBundle::new(config)?;
        bundle.step = manifest.step;
        bundle.epoch = manifest.epoch;
        let lookup: BTreeMap<(NetworkRole, &str, TensorKind), &TensorEntry> = manifest
            .tensors
            .iter()
            .map(|t| ((t.network, t.param.as_str(), t.kind), t))
            .collect();
        for role in NetworkRole::ALL {
            let names: Vec<(String, Vec<usize>)> = bundle
                .network(role)
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.shape.clone()))
                .collect();
            let mut state = AdamState::new(bundle.network(role));
            state.step = manifest.optimizer_steps.get(&role).copied().unwrap_or(0);
            for (i, (name, shape)) in names.iter().enumerate() {
                for kind in [TensorKind::Value, TensorKind::AdamM, TensorKind::AdamV] {
                    let entry = lookup.get(&(role, name.as_str(), kind)).ok_or_else(|| {
                        EngineError::Checkpoint(format!("missing {kind:?} for {}.{name}", role.as_str()))
                    })?;
                    if &entry.shape != shape {
                        return Err(EngineError::Checkpoint(format!(
                            "{}.{name}: shape {:?} does not match architecture {:?}",
                            role.as_str(),
                            entry.shape,
                            shape
                        )));
                    }
                    let data = decode_f32(&fs::read(dir.join(&entry.file))?, shape.iter().product())
                        .map_err(|e| EngineError::Checkpoint(format!("{}: {e}", entry.file)))?;
                    match kind {
                        TensorKind::Value => bundle.network_mut(role).params_mut()[i].value = data,
                        TensorKind::AdamM => state.m[i] = data,
                        TensorKind::AdamV => state.v[i] = data,
                    }
                }
            }
            bundle.optim.insert(role, state);
        }
        Ok(bundle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Value,
    AdamM,
    AdamV,
}

impl TensorKind {
    fn file_name(&self, role: NetworkRole, param: &str) -> String {
        match self {
            TensorKind::Value => format!("{}.{param}.bin", role.as_str()),
            TensorKind::AdamM => format!("{}.{param}.adam_m.bin", role.as_str()),
            TensorKind::AdamV => format!("{}.{param}.adam_v.bin", role.as_str()),
        }
    }
}

/// Index of one little-endian f32 blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub network: NetworkRole,
    pub param: String,
    pub kind: TensorKind,
    pub file: String,
    pub shape: Vec<usize>,
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub step: u64,
    pub epoch: u64,
    pub arch: ArchConfig,
    pub config: TrainingConfig,
    pub optimizer_steps: BTreeMap<NetworkRole, u64>,
    pub tensors: Vec<TensorEntry>,
}

fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode_f32(bytes: &[u8], expected: usize) -> Result<Vec<f32>, String> {
    if bytes.len() != expected * 4 {
        return Err(format!("expected {} bytes, found {}", expected * 4, bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// 8-bit RGB to a `[1, 3, h, w]` tensor in [-1, 1].
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = p.0[c] as f32 / 127.5 - 1.0;
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data)
}

/// Inverse of [`image_to_tensor`] for batch item `n`; −1 maps to 0 and +1 to 255.
pub fn tensor_to_image(t: &Tensor, n: usize) -> RgbImage {
    let s = t.shape();
    let plane = s.plane();
    let item = t.item(n);
    let mut img = RgbImage::new(s.w as u32, s.h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let mut v = [0u8; 3];
        for c in 0..3 {
            v[c] = denormalize(item[c * plane + i]);
        }
        *px = Rgb(v);
    }
    img
}

pub fn denormalize(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}
