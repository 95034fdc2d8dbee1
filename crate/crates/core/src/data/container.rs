//! Binary containers for datasets (`DSDS`) and model checkpoints (`DSDF`).
//!
//! All integers and floats are little-endian. Both formats end with a CRC32
//! of every preceding byte. On load the magic is checked first, then the
//! version, then the checksum.
//!
//! Dataset:
//!
//! ```text
//! "DSDS" | u32 version | u64 n | u64 L | u64 F | u8 normalized
//!        | [F x f64 min | F x f64 max]   (only when normalized = 1)
//!        | n*L*F x f64, window-major, then row-major within a window
//!        | u32 crc
//! ```
//!
//! Checkpoint:
//!
//! ```text
//! "DSDF" | u32 version | u32 config length | config block
//!        | u64 parameter count | count x f64 weights | u32 crc
//! ```
//!
//! The config block starts with a u32 model kind (1 backbone, 2 trend
//! guidance, 3 seasonal guidance). A backbone block continues with u64
//! base channels, u64 multiplier count, that many u64 multipliers, u64 input
//! channels, u64 height, u64 width and f64 sigma_data. A guidance block
//! continues with u64 features, seq_len, layers, model_dim, heads and ff_dim.

use std::path::Path;

use super::normalize::NormalizationState;
use crate::backbone::{Denoiser, DenoiserConfig};
use crate::guidance::{GuidanceConfig, GuidanceNet, Part};
use crate::series::SeriesWindow;
use crate::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"DSDS";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DSDF";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub windows: Vec<SeriesWindow>,
    /// Present when the windows are normalized and can be mapped back.
    pub normalization: Option<NormalizationState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Backbone,
    GuidanceTrend,
    GuidanceSeasonal,
}

impl ModelKind {
    pub fn tag(self) -> u32 {
        match self {
            ModelKind::Backbone => 1,
            ModelKind::GuidanceTrend => 2,
            ModelKind::GuidanceSeasonal => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::Backbone),
            2 => Ok(ModelKind::GuidanceTrend),
            3 => Ok(ModelKind::GuidanceSeasonal),
            _ => Err(Error::Format(format!("unknown model kind {tag}"))),
        }
    }

    pub fn guidance(part: Part) -> Self {
        match part {
            Part::Trend => ModelKind::GuidanceTrend,
            Part::Seasonal => ModelKind::GuidanceSeasonal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Backbone(DenoiserConfig),
    Guidance(GuidanceConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub weights: Vec<f64>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.u32(crc);
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| Error::Format("payload size overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Magic, version and CRC checks in that order. Returns a reader positioned
/// after the version, limited to the checksummed body.
fn open<'a>(bytes: &'a [u8], magic: [u8; 4], supported: u32) -> Result<Reader<'a>> {
    if bytes.len() < 4 || bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    if bytes.len() < 12 {
        return Err(Error::Format("file too short".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version == 0 || version > supported {
        return Err(Error::UnsupportedVersion { found: version, supported });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Format(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    Ok(Reader { buf: body, pos: 8 })
}

fn ensure_consumed(r: &Reader) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::Format(format!("{} trailing bytes before checksum", r.buf.len() - r.pos)));
    }
    Ok(())
}

pub fn encode_dataset(file: &DatasetFile) -> Result<Vec<u8>> {
    let first = file
        .windows
        .first()
        .ok_or_else(|| Error::Validation("cannot store an empty dataset".into()))?;
    let (l, f) = (first.len(), first.features());
    if file.windows.iter().any(|w| (w.len(), w.features()) != (l, f)) {
        return Err(Error::Validation("all windows must have the same shape".into()));
    }
    if let Some(n) = &file.normalization {
        if n.features() != f {
            return Err(Error::Validation("normalization width differs from feature count".into()));
        }
    }
    let mut w = Writer(Vec::with_capacity(45 + 8 * file.windows.len() * l * f));
    w.0.extend_from_slice(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.usize(file.windows.len());
    w.usize(l);
    w.usize(f);
    match &file.normalization {
        Some(n) => {
            w.u8(1);
            n.min.iter().chain(&n.max).for_each(|&v| w.f64(v));
        }
        None => w.u8(0),
    }
    for win in &file.windows {
        win.values().iter().for_each(|&v| w.f64(v));
    }
    Ok(w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetFile> {
    let mut r = open(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let (n, l, f) = (r.usize()?, r.usize()?, r.usize()?);
    if n == 0 || l == 0 || f == 0 {
        return Err(Error::Format(format!("degenerate shape {n} x {l} x {f}")));
    }
    let normalization = match r.u8()? {
        0 => None,
        1 => {
            let min = r.f64s(f)?;
            let max = r.f64s(f)?;
            Some(NormalizationState::new(min, max).map_err(|e| Error::Format(e.to_string()))?)
        }
        other => return Err(Error::Format(format!("bad normalization flag {other}"))),
    };
    let per = l
        .checked_mul(f)
        .filter(|p| p.checked_mul(n).and_then(|t| t.checked_mul(8)) == Some(r.buf.len() - r.pos))
        .ok_or_else(|| Error::Format(format!("declared shape {n} x {l} x {f} does not match payload size")))?;
    let windows = (0..n)
        .map(|_| SeriesWindow::from_rows(l, f, r.f64s(per)?).map_err(|e| Error::Format(e.to_string())))
        .collect::<Result<_>>()?;
    ensure_consumed(&r)?;
    Ok(DatasetFile { windows, normalization })
}

pub fn save_dataset(path: &Path, file: &DatasetFile) -> Result<()> {
    std::fs::write(path, encode_dataset(file)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    decode_dataset(&std::fs::read(path)?)
}

fn encode_config(kind: ModelKind, config: &ModelConfig) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.u32(kind.tag());
    match (kind, config) {
        (ModelKind::Backbone, ModelConfig::Backbone(c)) => {
            w.usize(c.base_channels);
            w.usize(c.channel_multipliers.len());
            c.channel_multipliers.iter().for_each(|&m| w.usize(m));
            w.usize(c.in_channels);
            w.usize(c.image_height);
            w.usize(c.image_width);
            w.f64(c.sigma_data);
        }
        (ModelKind::GuidanceTrend | ModelKind::GuidanceSeasonal, ModelConfig::Guidance(c)) => {
            for v in [c.features, c.seq_len, c.layers, c.model_dim, c.heads, c.ff_dim] {
                w.usize(v);
            }
        }
        _ => return Err(Error::Validation(format!("{kind:?} does not match the config variant"))),
    }
    Ok(w.0)
}

fn decode_config(block: &[u8]) -> Result<(ModelKind, ModelConfig)> {
    let mut r = Reader { buf: block, pos: 0 };
    let kind = ModelKind::from_tag(r.u32()?)?;
    let config = match kind {
        ModelKind::Backbone => {
            let base_channels = r.usize()?;
            let count = r.usize()?;
            if count > (block.len() - r.pos) / 8 {
                return Err(Error::Format("multiplier count exceeds config block".into()));
            }
            let channel_multipliers = (0..count).map(|_| r.usize()).collect::<Result<_>>()?;
            ModelConfig::Backbone(DenoiserConfig {
                base_channels,
                channel_multipliers,
                in_channels: r.usize()?,
                image_height: r.usize()?,
                image_width: r.usize()?,
                sigma_data: r.f64()?,
            })
        }
        ModelKind::GuidanceTrend | ModelKind::GuidanceSeasonal => ModelConfig::Guidance(GuidanceConfig {
            features: r.usize()?,
            seq_len: r.usize()?,
            layers: r.usize()?,
            model_dim: r.usize()?,
            heads: r.usize()?,
            ff_dim: r.usize()?,
        }),
    };
    ensure_consumed(&r)?;
    Ok((kind, config))
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let block = encode_config(ck.kind, &ck.config)?;
    let mut w = Writer(Vec::with_capacity(32 + block.len() + 8 * ck.weights.len()));
    w.0.extend_from_slice(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(u32::try_from(block.len()).map_err(|_| Error::Validation("config block too large".into()))?);
    w.0.extend_from_slice(&block);
    w.usize(ck.weights.len());
    ck.weights.iter().for_each(|&v| w.f64(v));
    Ok(w.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let len = r.u32()? as usize;
    let (kind, config) = decode_config(r.take(len)?)?;
    let count = r.usize()?;
    if count.checked_mul(8) != Some(r.buf.len() - r.pos) {
        return Err(Error::Format(format!("declared {count} parameters do not match payload size")));
    }
    let weights = r.f64s(count)?;
    ensure_consumed(&r)?;
    Ok(Checkpoint { kind, config, weights })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

impl Checkpoint {
    pub fn backbone(den: &Denoiser) -> Self {
        Self {
            kind: ModelKind::Backbone,
            config: ModelConfig::Backbone(den.config().clone()),
            weights: den.weights().to_vec(),
        }
    }

    pub fn guidance(net: &GuidanceNet, part: Part) -> Self {
        Self {
            kind: ModelKind::guidance(part),
            config: ModelConfig::Guidance(net.config().clone()),
            weights: net.weights().to_vec(),
        }
    }

    pub fn into_backbone(self) -> Result<Denoiser> {
        match self.config {
            ModelConfig::Backbone(c) => Denoiser::from_weights(c, self.weights),
            _ => Err(Error::Validation(format!("expected a backbone checkpoint, found {:?}", self.kind))),
        }
    }

    pub fn into_guidance(self, part: Part) -> Result<GuidanceNet> {
        match self.config {
            ModelConfig::Guidance(c) if self.kind == ModelKind::guidance(part) => GuidanceNet::from_weights(c, self.weights),
            _ => Err(Error::Validation(format!(
                "expected a {:?} checkpoint, found {:?}",
                ModelKind::guidance(part),
                self.kind
            ))),
        }
    }
}
