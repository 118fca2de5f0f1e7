//! Binary feature files.
//!
//! Layout: `b"SPKF"`, then version, rows and columns as little-endian `u32`,
//! then `rows × cols` little-endian `f32` values in row-major order. A JSON
//! sidecar `<file>.json` carries whatever metadata the caller supplies.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};

use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SPKF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Path of the JSON sidecar for `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Serializes `x` (rounded to `f32`) into the binary layout.
pub fn encode(x: MatRef<'_, f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(x.nrows())
        .map_err(|_| Error::InvalidArgument(format!("{} rows overflow u32", x.nrows())))?;
    let cols = u32::try_from(x.ncols())
        .map_err(|_| Error::InvalidArgument(format!("{} columns overflow u32", x.ncols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * x.nrows() * x.ncols());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out.extend_from_slice(&(x[(i, j)] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Mat<f64>> {
    let err = |message: String| Error::FeatureFile {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(err(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(err(format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let (version, rows, cols) = (word(1), word(2) as usize, word(3) as usize);
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let expected = HEADER_LEN + 4 * rows * cols;
    if bytes.len() != expected {
        return Err(err(format!(
            "{rows}x{cols} payload needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = &bytes[HEADER_LEN..];
    Ok(Mat::from_fn(rows, cols, |i, j| {
        let at = 4 * (i * cols + j);
        f64::from(f32::from_le_bytes(data[at..at + 4].try_into().unwrap()))
    }))
}

/// Writes the feature file and its sidecar.
pub fn write(path: &Path, x: MatRef<'_, f64>, metadata: &serde_json::Value) -> Result<()> {
    let bytes = encode(x)?;
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(metadata).map_err(|e| Error::Serialize {
        path: side.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

/// Reads a feature file (the sidecar is not required).
pub fn read(path: &Path) -> Result<Mat<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn read_sidecar(path: &Path) -> Result<serde_json::Value> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialize {
        path: side,
        message: e.to_string(),
    })
}
