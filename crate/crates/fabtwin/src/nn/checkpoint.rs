//! Model serialization: a small binary container with a JSON architecture
//! header and a little-endian f32 tensor payload. Parameters are stored in
//! f32 exactly as held in memory, so a save/load roundtrip reproduces forward
//! outputs bit for bit.

use super::discriminator::{build_discriminator, Discriminator, DiscriminatorConfig};
use super::generator::{build_generator, Generator, GeneratorConfig};
use super::unet::{build_unet, UNet};
use super::NnError;
use crate::rng::RngSeed;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"GFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] NnError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Header {
    Generator { config: GeneratorConfig },
    Unet { config: GeneratorConfig, dropout_p: f64 },
    Discriminator { config: DiscriminatorConfig },
}

#[derive(Debug)]
pub enum LoadedModel {
    Generator(Generator),
    UNet(UNet),
    Discriminator(Discriminator),
}

impl LoadedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Generator(_) => "generator",
            LoadedModel::UNet(_) => "unet",
            LoadedModel::Discriminator(_) => "discriminator",
        }
    }
}

#[derive(Clone, Copy)]
enum ModelRef<'a> {
    Generator(&'a Generator),
    UNet(&'a UNet),
    Discriminator(&'a Discriminator),
}

fn conv_specs(prefix: &str, idx: usize, shape_w: [usize; 4], co: usize) -> [(String, Vec<u64>); 2] {
    [
        (format!("{prefix}{idx}.w"), shape_w.iter().map(|&v| v as u64).collect()),
        (format!("{prefix}{idx}.b"), vec![co as u64]),
    ]
}

/// Canonical (name, shape) list in `param_tensors` order.
fn tensor_specs(model: ModelRef<'_>) -> Vec<(String, Vec<u64>)> {
    let mut specs = Vec::new();
    match model {
        ModelRef::Generator(Generator { core, .. }) | ModelRef::UNet(UNet { core, .. }) => {
            for (i, l) in core.enc.iter().enumerate() {
                specs.extend(conv_specs("enc", i, [l.co, l.ci, l.k, l.k], l.co));
            }
            for (j, l) in core.dec.iter().enumerate() {
                specs.extend(conv_specs("dec", j, [l.ci, l.co, l.k, l.k], l.co));
            }
        }
        ModelRef::Discriminator(d) => {
            for (i, l) in d.convs.iter().enumerate() {
                specs.extend(conv_specs("conv", i, [l.co, l.ci, l.k, l.k], l.co));
            }
        }
    }
    specs
}

fn param_tensors<'a>(model: ModelRef<'a>) -> Vec<&'a Vec<f32>> {
    match model {
        ModelRef::Generator(g) => g.core.param_tensors(),
        ModelRef::UNet(u) => u.core.param_tensors(),
        ModelRef::Discriminator(d) => d.param_tensors(),
    }
}

fn encode(header: &Header, model: ModelRef<'_>) -> Result<Vec<u8>, CheckpointError> {
    let header_json = serde_json::to_vec(header)?;
    let specs = tensor_specs(model);
    let tensors = param_tensors(model);
    debug_assert_eq!(specs.len(), tensors.len());

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(specs.len() as u64).to_le_bytes());
    let mut offset = 0u64;
    for ((name, shape), t) in specs.iter().zip(&tensors) {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u64).to_le_bytes());
        for d in shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        offset += t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for t in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Format("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn sized(&mut self) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CheckpointError::Format("length overflows usize".into()))
    }
}

fn decode(buf: &[u8]) -> Result<LoadedModel, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported format version {version}")));
    }
    let header_len = r.sized()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;
    let n_tensors = r.sized()?;
    let mut directory = HashMap::new();
    for _ in 0..n_tensors {
        let name_len = r.sized()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Format("tensor name is not utf-8".into()))?
            .to_string();
        let rank = r.sized()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()?);
        }
        let offset = r.sized()?;
        let len = r.sized()?;
        if directory.insert(name.clone(), (shape, offset, len)).is_some() {
            return Err(CheckpointError::Format(format!("duplicate tensor {name}")));
        }
    }
    let payload_len = r.sized()?;
    let payload_bytes = r.take(
        payload_len
            .checked_mul(4)
            .ok_or_else(|| CheckpointError::Format("payload length overflow".into()))?,
    )?;
    if r.pos != buf.len() {
        return Err(CheckpointError::Format("trailing bytes after payload".into()));
    }

    let mut model = match header {
        Header::Generator { config } => LoadedModel::Generator(build_generator(config, RngSeed(0))?),
        Header::Unet { config, dropout_p } => {
            LoadedModel::UNet(build_unet(config, dropout_p, RngSeed(0))?)
        }
        Header::Discriminator { config } => {
            LoadedModel::Discriminator(build_discriminator(config, RngSeed(0))?)
        }
    };

    let specs = match &model {
        LoadedModel::Generator(g) => tensor_specs(ModelRef::Generator(g)),
        LoadedModel::UNet(u) => tensor_specs(ModelRef::UNet(u)),
        LoadedModel::Discriminator(d) => tensor_specs(ModelRef::Discriminator(d)),
    };
    let mut tensors = match &mut model {
        LoadedModel::Generator(g) => g.core.param_tensors_mut(),
        LoadedModel::UNet(u) => u.core.param_tensors_mut(),
        LoadedModel::Discriminator(d) => d.param_tensors_mut(),
    };
    for ((name, shape), t) in specs.iter().zip(tensors.iter_mut()) {
        let (dshape, offset, len) = directory
            .get(name)
            .ok_or_else(|| CheckpointError::Format(format!("missing tensor {name}")))?;
        let expect: u64 = shape.iter().product();
        if dshape.iter().product::<u64>() != expect || *len != t.len() {
            return Err(CheckpointError::Format(format!("tensor {name} has mismatched shape")));
        }
        if offset + len > payload_len {
            return Err(CheckpointError::Format(format!("tensor {name} overruns payload")));
        }
        for (i, v) in t.iter_mut().enumerate() {
            let at = (offset + i) * 4;
            *v = f32::from_le_bytes(payload_bytes[at..at + 4].try_into().unwrap());
        }
    }
    Ok(model)
}

pub fn save_generator(g: &Generator, path: &Path) -> Result<(), CheckpointError> {
    let header = Header::Generator { config: g.cfg.clone() };
    std::fs::write(path, encode(&header, ModelRef::Generator(g))?)?;
    Ok(())
}

pub fn save_unet(u: &UNet, path: &Path) -> Result<(), CheckpointError> {
    let header = Header::Unet { config: u.cfg.clone(), dropout_p: u.dropout_p };
    std::fs::write(path, encode(&header, ModelRef::UNet(u))?)?;
    Ok(())
}

pub fn save_discriminator(d: &Discriminator, path: &Path) -> Result<(), CheckpointError> {
    let header = Header::Discriminator { config: d.cfg.clone() };
    std::fs::write(path, encode(&header, ModelRef::Discriminator(d))?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LoadedModel, CheckpointError> {
    decode(&std::fs::read(path)?)
}

pub fn load_generator(path: &Path) -> Result<Generator, CheckpointError> {
    match load_model(path)? {
        LoadedModel::Generator(g) => Ok(g),
        other => Err(CheckpointError::Format(format!(
            "expected a generator checkpoint, found {}",
            other.kind()
        ))),
    }
}

pub fn load_unet(path: &Path) -> Result<UNet, CheckpointError> {
    match load_model(path)? {
        LoadedModel::UNet(u) => Ok(u),
        other => Err(CheckpointError::Format(format!(
            "expected a unet checkpoint, found {}",
            other.kind()
        ))),
    }
}

pub fn load_discriminator(path: &Path) -> Result<Discriminator, CheckpointError> {
    match load_model(path)? {
        LoadedModel::Discriminator(d) => Ok(d),
        other => Err(CheckpointError::Format(format!(
            "expected a discriminator checkpoint, found {}",
            other.kind()
        ))),
    }
}
