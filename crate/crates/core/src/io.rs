//! Binary file format for volumes, spectra, field stacks and interferogram stacks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset 0   8 bytes   magic "DFODTBIN"
//! offset 8   u64       header length H in bytes
//! offset 16  H bytes   UTF-8 JSON header
//! offset 16+H          payload: raw little-endian floats (f32 by default, f64 on request)
//! ```
//!
//! Payload order is C order with the last listed dimension fastest. Complex
//! samples are interleaved `re, im`. A spectrum payload is its complex values
//! followed by its weights. A stack payload is its frames concatenated. See
//! `docs/FORMAT.md` for the header keys.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holography::Interferogram;
use crate::optics::{ComplexField2D, GridSpec, OpticalConfig, Spectrum3D, Volume3D, VolumeKind};

pub const MAGIC: &[u8; 8] = b"DFODTBIN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Volume,
    Spectrum,
    FieldStack,
    InterferogramStack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    pub k_illum: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_tilt: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub endianness: String,
    pub dtype: Precision,
    pub content: Content,
    /// `[nx, ny, nz]` for volumes/spectra, `[nx, ny, frames]` for stacks.
    pub dims: [usize; 3],
    pub pitch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<VolumeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<OpticalConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<FrameMeta>,
}

/// Options shared by all writers.
#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    pub precision: Precision,
    pub config: Option<OpticalConfig>,
}

impl WriteOptions {
    pub fn f64() -> Self {
        WriteOptions { precision: Precision::F64, config: None }
    }

    pub fn with_config(mut self, config: OpticalConfig) -> Self {
        self.config = Some(config);
        self
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn encode(header: &Header, payload: impl Iterator<Item = f64>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    match header.dtype {
        Precision::F32 => payload.for_each(|v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Precision::F64 => payload.for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

fn decode(bytes: &[u8], expect: Content) -> Result<(Header, Vec<f64>)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::MalformedHeader("missing magic bytes".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(hlen))
        .ok_or_else(|| Error::MalformedHeader("header length exceeds file size".into()))?;
    let raw: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedHeader("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::UnsupportedVersion(version as u32));
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.endianness != "little" {
        return Err(Error::MalformedHeader(format!("unsupported endianness {:?}", header.endianness)));
    }
    if header.content != expect {
        return Err(Error::MalformedHeader(format!("expected {expect:?} content, found {:?}", header.content)));
    }
    let [a, b, c] = header.dims;
    let per_sample = match header.content {
        Content::Volume | Content::InterferogramStack => 1,
        Content::FieldStack => 2,
        Content::Spectrum => 3,
    };
    let count = a * b * c * per_sample;
    let payload = &bytes[16 + hlen..];
    let expected = count * header.dtype.bytes();
    if payload.len() != expected {
        return Err(Error::PayloadLength { expected, actual: payload.len() });
    }
    let values = match header.dtype {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((header, values))
}

fn header(content: Content, dims: [usize; 3], pitch: f64, opts: &WriteOptions) -> Header {
    Header {
        format_version: FORMAT_VERSION,
        endianness: "little".into(),
        dtype: opts.precision,
        content,
        dims,
        pitch,
        kind: None,
        config: opts.config,
        frames: Vec::new(),
    }
}

fn grid_from_header(h: &Header) -> Result<GridSpec> {
    GridSpec::new(h.dims[0], h.dims[1], h.dims[2], h.pitch).map_err(|e| Error::InvariantViolation(e.to_string()))
}

pub fn encode_volume(vol: &Volume3D, opts: &WriteOptions) -> Result<Vec<u8>> {
    let mut h = header(Content::Volume, vol.grid.dims(), vol.grid.pitch, opts);
    h.kind = Some(vol.kind);
    encode(&h, vol.values.iter().copied())
}

pub fn write_volume(path: impl AsRef<Path>, vol: &Volume3D) -> Result<()> {
    write_volume_with(path, vol, &WriteOptions::default())
}

pub fn write_volume_with(path: impl AsRef<Path>, vol: &Volume3D, opts: &WriteOptions) -> Result<()> {
    atomic_write(path.as_ref(), &encode_volume(vol, opts)?)
}

pub fn decode_volume(bytes: &[u8]) -> Result<(Volume3D, Header)> {
    let (h, values) = decode(bytes, Content::Volume)?;
    let grid = grid_from_header(&h)?;
    let kind = h.kind.ok_or_else(|| Error::MalformedHeader("volume header lacks kind".into()))?;
    let values = Array3::from_shape_vec(grid.shape(), values).map_err(|e| Error::InvariantViolation(e.to_string()))?;
    let vol = Volume3D::new(grid, values, kind).map_err(|e| match e {
        Error::InvariantViolation(m) => Error::InvariantViolation(m),
        other => Error::InvariantViolation(other.to_string()),
    })?;
    Ok((vol, h))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    Ok(read_volume_with_header(path)?.0)
}

pub fn read_volume_with_header(path: impl AsRef<Path>) -> Result<(Volume3D, Header)> {
    decode_volume(&read_file(path.as_ref())?)
}

pub fn write_spectrum(path: impl AsRef<Path>, spec: &Spectrum3D, opts: &WriteOptions) -> Result<()> {
    let h = header(Content::Spectrum, spec.grid.dims(), spec.grid.pitch, opts);
    let payload = spec
        .values
        .iter()
        .flat_map(|c| [c.re, c.im])
        .chain(spec.weights.iter().copied());
    atomic_write(path.as_ref(), &encode(&h, payload)?)
}

pub fn read_spectrum(path: impl AsRef<Path>) -> Result<Spectrum3D> {
    let (h, values) = decode(&read_file(path.as_ref())?, Content::Spectrum)?;
    let grid = grid_from_header(&h)?;
    let n = grid.len();
    let complex: Vec<Complex64> = values[..2 * n].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let spec = Spectrum3D {
        grid,
        values: Array3::from_shape_vec(grid.shape(), complex).unwrap(),
        weights: Array3::from_shape_vec(grid.shape(), values[2 * n..].to_vec()).unwrap(),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn write_field_stack(path: impl AsRef<Path>, frames: &[ComplexField2D], opts: &WriteOptions) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::EmptyInput("field stack has no frames".into()))?;
    if frames.iter().any(|f| f.values.dim() != first.values.dim() || f.pitch != first.pitch) {
        return Err(Error::GridMismatch("field stack frames differ in shape or pitch".into()));
    }
    let mut h = header(Content::FieldStack, [first.nx, first.ny, frames.len()], first.pitch, opts);
    h.frames = frames.iter().map(|f| FrameMeta { k_illum: f.k_illum, reference_tilt: None }).collect();
    let payload = frames.iter().flat_map(|f| f.values.iter().flat_map(|c| [c.re, c.im]));
    atomic_write(path.as_ref(), &encode(&h, payload)?)
}

pub fn read_field_stack(path: impl AsRef<Path>) -> Result<(Vec<ComplexField2D>, Header)> {
    let (h, values) = decode(&read_file(path.as_ref())?, Content::FieldStack)?;
    let [nx, ny, count] = h.dims;
    if h.frames.len() != count {
        return Err(Error::MalformedHeader(format!("{} frame entries for {count} frames", h.frames.len())));
    }
    let frame_len = 2 * nx * ny;
    let frames = h
        .frames
        .iter()
        .enumerate()
        .map(|(f, meta)| {
            let chunk = &values[f * frame_len..(f + 1) * frame_len];
            let vals: Vec<Complex64> = chunk.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
            ComplexField2D::new(h.pitch, Array2::from_shape_vec((nx, ny), vals).unwrap(), meta.k_illum)
        })
        .collect::<Vec<_>>();
    if let Some(cfg) = &h.config {
        for f in &frames {
            f.validate(cfg).map_err(|e| Error::InvariantViolation(e.to_string()))?;
        }
    }
    Ok((frames, h))
}

pub fn write_interferogram_stack(path: impl AsRef<Path>, frames: &[Interferogram], opts: &WriteOptions) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::EmptyInput("interferogram stack has no frames".into()))?;
    if frames.iter().any(|f| f.intensity.dim() != first.intensity.dim() || f.pitch != first.pitch) {
        return Err(Error::GridMismatch("interferogram frames differ in shape or pitch".into()));
    }
    let mut h = header(Content::InterferogramStack, [first.nx, first.ny, frames.len()], first.pitch, opts);
    h.frames = frames
        .iter()
        .map(|f| FrameMeta { k_illum: f.k_illum, reference_tilt: Some(f.reference_tilt) })
        .collect();
    let payload = frames.iter().flat_map(|f| f.intensity.iter().copied());
    atomic_write(path.as_ref(), &encode(&h, payload)?)
}

pub fn read_interferogram_stack(path: impl AsRef<Path>) -> Result<(Vec<Interferogram>, Header)> {
    let (h, values) = decode(&read_file(path.as_ref())?, Content::InterferogramStack)?;
    let [nx, ny, count] = h.dims;
    if h.frames.len() != count {
        return Err(Error::MalformedHeader(format!("{} frame entries for {count} frames", h.frames.len())));
    }
    let frame_len = nx * ny;
    let mut frames = Vec::with_capacity(count);
    for (f, meta) in h.frames.iter().enumerate() {
        let tilt = meta
            .reference_tilt
            .ok_or_else(|| Error::MalformedHeader("interferogram frame lacks reference_tilt".into()))?;
        let intensity = Array2::from_shape_vec((nx, ny), values[f * frame_len..(f + 1) * frame_len].to_vec()).unwrap();
        if intensity.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvariantViolation("negative or non-finite intensity".into()));
        }
        frames.push(Interferogram { nx, ny, pitch: h.pitch, intensity, reference_tilt: tilt, k_illum: meta.k_illum });
    }
    Ok((frames, h))
}
