//! Bit-exact binary containers: `TNSR` tensor files and `FDIT` checkpoints.
//!
//! ```text
//! TNSR: "TNSR" | u8 version=1 | u8 ndim | ndim × u64 LE dims | f32 LE payload (row-major)
//! FDIT: "FDIT" | u32 LE version=1 | u64 LE count |
//!       count × (u16 LE name_len | name | u8 ndim | ndim × u64 LE dims | f32 LE payload)
//! ```
//!
//! Checkpoint parameters are written sorted by name.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

const TNSR_MAGIC: &[u8; 4] = b"TNSR";
const TNSR_VERSION: u8 = 1;
const FDIT_MAGIC: &[u8; 4] = b"FDIT";
const FDIT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated or malformed data: {0}")]
    Malformed(String),
}

impl From<std::io::Error> for FormatError {
    fn from(source: std::io::Error) -> Self {
        FormatError::Io {
            path: "<stream>".into(),
            source,
        }
    }
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], FormatError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| FormatError::Malformed(format!("unexpected end of data: {e}")))?;
    Ok(buf)
}

fn write_shape_and_payload(w: &mut impl Write, t: &ArrayD<f32>) -> Result<(), FormatError> {
    let ndim =
        u8::try_from(t.ndim()).map_err(|_| FormatError::Malformed("more than 255 dims".into()))?;
    w.write_all(&[ndim])?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut payload = Vec::with_capacity(t.len() * 4);
    for v in t.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

fn read_shape_and_payload(r: &mut impl Read) -> Result<ArrayD<f32>, FormatError> {
    let [ndim] = read_exact::<1>(r)?;
    let mut shape = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let d = u64::from_le_bytes(read_exact::<8>(r)?);
        shape.push(
            usize::try_from(d)
                .map_err(|_| FormatError::Malformed(format!("dimension {d} too large")))?,
        );
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::Malformed("element count overflows".into()))?;
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| FormatError::Malformed(format!("payload shorter than {count} floats")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| FormatError::Malformed(e.to_string()))
}

pub fn write_tensor(w: &mut impl Write, t: &ArrayD<f32>) -> Result<(), FormatError> {
    w.write_all(TNSR_MAGIC)?;
    w.write_all(&[TNSR_VERSION])?;
    write_shape_and_payload(w, t)
}

pub fn read_tensor(r: &mut impl Read) -> Result<ArrayD<f32>, FormatError> {
    if &read_exact::<4>(r)? != TNSR_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "TNSR".into(),
        });
    }
    let [version] = read_exact::<1>(r)?;
    if version != TNSR_VERSION {
        return Err(FormatError::Version(version as u32));
    }
    let t = read_shape_and_payload(r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(FormatError::Malformed(
            "trailing bytes after tensor payload".into(),
        ));
    }
    Ok(t)
}

pub fn tensor_to_bytes(t: &ArrayD<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * t.ndim() + 4 * t.len());
    write_tensor(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

pub fn save_tensor(path: &Path, t: &ArrayD<f32>) -> Result<(), FormatError> {
    std::fs::write(path, tensor_to_bytes(t)).map_err(with_path(path))
}

pub fn load_tensor(path: &Path) -> Result<ArrayD<f32>, FormatError> {
    let bytes = std::fs::read(path).map_err(with_path(path))?;
    read_tensor(&mut bytes.as_slice())
}

/// Named parameters as stored in a checkpoint; the map keeps them sorted.
pub type NamedTensors = BTreeMap<String, ArrayD<f32>>;

pub fn write_checkpoint(w: &mut impl Write, params: &NamedTensors) -> Result<(), FormatError> {
    w.write_all(FDIT_MAGIC)?;
    w.write_all(&FDIT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params {
        let len = u16::try_from(name.len())
            .map_err(|_| FormatError::Malformed(format!("parameter name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_shape_and_payload(w, t)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<NamedTensors, FormatError> {
    if &read_exact::<4>(r)? != FDIT_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "FDIT".into(),
        });
    }
    let version = u32::from_le_bytes(read_exact::<4>(r)?);
    if version != FDIT_VERSION {
        return Err(FormatError::Version(version));
    }
    let count = u64::from_le_bytes(read_exact::<8>(r)?);
    let mut out = NamedTensors::new();
    let mut previous: Option<String> = None;
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact::<2>(r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|_| FormatError::Malformed("truncated parameter name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| FormatError::Malformed("parameter name is not UTF-8".into()))?;
        if previous.as_deref().is_some_and(|p| p >= name.as_str()) {
            return Err(FormatError::Malformed(format!(
                "parameter {name} out of order or duplicated"
            )));
        }
        let t = read_shape_and_payload(r)?;
        previous = Some(name.clone());
        out.insert(name, t);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(FormatError::Malformed(
            "trailing bytes after checkpoint".into(),
        ));
    }
    Ok(out)
}

pub fn checkpoint_to_bytes(params: &NamedTensors) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, params).expect("writing to a Vec cannot fail");
    out
}

pub fn save_checkpoint(path: &Path, params: &NamedTensors) -> Result<(), FormatError> {
    let bytes = checkpoint_to_bytes(params);
    std::fs::write(path, bytes).map_err(with_path(path))
}

pub fn load_checkpoint(path: &Path) -> Result<NamedTensors, FormatError> {
    let bytes = std::fs::read(path).map_err(with_path(path))?;
    read_checkpoint(&mut bytes.as_slice())
}
