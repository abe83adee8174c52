use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Field2D, FieldError, Grid2D};

const MAGIC: &[u8; 8] = b"PFNOSNAP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;

/// Writes channels sharing one grid to `path` in the snapshot format.
pub fn snapshot_write(channels: &[Field2D], path: impl AsRef<Path>) -> Result<(), FieldError> {
    let first = channels
        .first()
        .ok_or_else(|| FieldError::Format("snapshot needs at least one channel".into()))?;
    for ch in channels {
        first.same_grid(ch)?;
    }
    let n = first.n();
    let mut buf = Vec::with_capacity(HEADER_LEN + channels.len() * n * n * 8);
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, channels.len() as u32, n as u32, n as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for ch in channels {
        for v in ch.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Reads a snapshot. The grid length comes from the `length` key of the
/// sidecar when present, otherwise the unit square is assumed.
pub fn snapshot_read(path: impl AsRef<Path>) -> Result<Vec<Field2D>, FieldError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(FieldError::Format(format!("file has {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[0..8] != MAGIC {
        return Err(FieldError::Format("bad magic".into()));
    }
    let version = read_u32(&bytes, 8);
    if version != VERSION {
        return Err(FieldError::Format(format!("unsupported version {version}")));
    }
    let channels = read_u32(&bytes, 12) as usize;
    let rows = read_u32(&bytes, 16) as usize;
    let cols = read_u32(&bytes, 20) as usize;
    if channels == 0 || rows != cols {
        return Err(FieldError::Format(format!("unsupported dims {channels}x{rows}x{cols}")));
    }
    let expected = channels
        .checked_mul(rows * cols)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| FieldError::Format("dims overflow".into()))?;
    if bytes.len() != expected {
        return Err(FieldError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let length = match read_meta(path) {
        Ok(meta) => match meta.get("length") {
            Some(s) => s.parse::<f64>().map_err(|_| FieldError::Format(format!("bad length '{s}' in sidecar")))?,
            None => 1.0,
        },
        Err(FieldError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => 1.0,
        Err(e) => return Err(e),
    };
    let grid = Grid2D::new(rows, length).map_err(|e| FieldError::Format(e.to_string()))?;
    let per = rows * cols;
    let mut out = Vec::with_capacity(channels);
    for ch in 0..channels {
        let start = HEADER_LEN + ch * per * 8;
        let values = bytes[start..start + per * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Field2D::from_values(grid, values)?);
    }
    Ok(out)
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the `<path>.meta` sidecar as `key=value` lines.
pub fn write_meta(path: impl AsRef<Path>, entries: &[(&str, String)]) -> Result<(), FieldError> {
    let mut text = String::new();
    for (k, v) in entries {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(FieldError::Format(format!("unrepresentable metadata entry '{k}'")));
        }
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    fs::write(meta_path(path.as_ref()), text)?;
    Ok(())
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, FieldError> {
    let text = fs::read_to_string(meta_path(path.as_ref()))?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FieldError::Format(format!("sidecar line without '=': {line}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}
