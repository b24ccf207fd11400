//! Binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"MPOA"
//! u32     format version (currently 1)
//! u64     N, p, b, S
//! u8      embedding kind (0 = trigonometric, 1 = fourier)
//! u64     embedding physical dimension
//! per site, in order:
//!   u64     site index
//!   u64 x4  axis sizes (left, right, input, output; output 0 when absent)
//!   f64 xK  entries, row-major, little-endian
//! ```
//!
//! Entries round-trip bit-exactly: floats are written and read as raw
//! `f64::to_le_bytes` payloads.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::embedding::{EmbeddingKind, EmbeddingSpec};
use crate::mpo::{MpoModel, MpoShape};
use crate::tensor::DenseTensor;

const MAGIC: &[u8; 4] = b"MPOA";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a model file: bad magic {found:02x?} at offset 0")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("unknown embedding kind tag {0}")]
    UnknownEmbeddingKind(u8),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

/// Parsed header of a model file, sufficient for `inspect` and for
/// compatibility checks before loading the cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHeader {
    pub version: u32,
    pub num_sites: usize,
    pub physical_dim: usize,
    pub bond_dim: usize,
    pub spacing: usize,
    pub embedding_kind: EmbeddingKind,
    pub embedding_dim: usize,
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &MpoModel,
    embedding: &EmbeddingSpec,
) -> Result<(), ModelIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let shape = model.shape();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_u64(&mut w, shape.num_sites() as u64)?;
    write_u64(&mut w, shape.physical_dim() as u64)?;
    write_u64(&mut w, shape.bond_dim() as u64)?;
    write_u64(&mut w, shape.spacing() as u64)?;
    let kind_tag = match embedding.kind() {
        EmbeddingKind::Trigonometric => 0u8,
        EmbeddingKind::Fourier => 1u8,
    };
    w.write_all(&[kind_tag])?;
    write_u64(&mut w, embedding.physical_dim() as u64)?;

    for (site, core) in model.cores().iter().enumerate() {
        write_u64(&mut w, site as u64)?;
        let s = core.shape();
        write_u64(&mut w, s[0] as u64)?;
        write_u64(&mut w, s[1] as u64)?;
        write_u64(&mut w, s[2] as u64)?;
        write_u64(&mut w, if s.len() == 4 { s[3] as u64 } else { 0 })?;
        for &v in core.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_header_from(r: &mut impl Read) -> Result<ModelHeader, ModelIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelIoError::BadMagic { found: magic });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let num_sites = read_u64(r)? as usize;
    let physical_dim = read_u64(r)? as usize;
    let bond_dim = read_u64(r)? as usize;
    let spacing = read_u64(r)? as usize;
    let mut kind_tag = [0u8; 1];
    r.read_exact(&mut kind_tag)?;
    let embedding_kind = match kind_tag[0] {
        0 => EmbeddingKind::Trigonometric,
        1 => EmbeddingKind::Fourier,
        other => return Err(ModelIoError::UnknownEmbeddingKind(other)),
    };
    let embedding_dim = read_u64(r)? as usize;
    Ok(ModelHeader {
        version,
        num_sites,
        physical_dim,
        bond_dim,
        spacing,
        embedding_kind,
        embedding_dim,
    })
}

/// Read only the header of a model file.
pub fn read_model_header(path: impl AsRef<Path>) -> Result<ModelHeader, ModelIoError> {
    let mut r = BufReader::new(File::open(path)?);
    read_header_from(&mut r)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MpoModel, EmbeddingSpec), ModelIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header_from(&mut r)?;

    let shape = MpoShape::new(
        header.num_sites,
        header.physical_dim,
        header.bond_dim,
        header.spacing,
    )
    .map_err(|e| ModelIoError::Corrupt(e.to_string()))?;
    let embedding = EmbeddingSpec::new(header.embedding_kind, header.embedding_dim)
        .map_err(|e| ModelIoError::Corrupt(e.to_string()))?;

    let mut cores = Vec::with_capacity(header.num_sites);
    for site in 0..header.num_sites {
        let stored_site = read_u64(&mut r)? as usize;
        if stored_site != site {
            return Err(ModelIoError::Corrupt(format!(
                "core record {site} is labeled {stored_site}"
            )));
        }
        let left = read_u64(&mut r)? as usize;
        let right = read_u64(&mut r)? as usize;
        let input = read_u64(&mut r)? as usize;
        let output = read_u64(&mut r)? as usize;
        let mut dims = vec![left, right, input];
        if output != 0 {
            dims.push(output);
        }
        let expected = shape.core_shape(site);
        if dims != expected {
            return Err(ModelIoError::Corrupt(format!(
                "core {site} has axis sizes {dims:?}, expected {expected:?}"
            )));
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        cores.push(
            DenseTensor::new(dims, data).map_err(|e| ModelIoError::Corrupt(e.to_string()))?,
        );
    }

    let model =
        MpoModel::from_cores(shape, cores).map_err(|e| ModelIoError::Corrupt(e.to_string()))?;
    Ok((model, embedding))
}
