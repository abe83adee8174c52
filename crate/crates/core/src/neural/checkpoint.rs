use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ArchitectureSpec, ModelWeights, NeuralError, ParamTensor};

const MAGIC: &[u8; 8] = b"PFNOWTS1";
const VERSION: u32 = 1;

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Binary weights file plus a `<path>.meta` sidecar holding `arch=<spec text>`.
pub fn write_checkpoint(path: impl AsRef<Path>, w: &ModelWeights) -> Result<(), NeuralError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
    for (name, t) in w.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend_from_slice(&Sha256::digest(w.spec_text().as_bytes()));
    fs::File::create(path)?.write_all(&buf)?;
    fs::write(meta_path(path), format!("arch={}\n", w.spec_text()))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NeuralError::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Reads a checkpoint and its sidecar, verifying the digest and the tensor shapes.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelWeights, NeuralError> {
    let path = path.as_ref();
    let meta = fs::read_to_string(meta_path(path))?;
    let spec_text = meta
        .lines()
        .find_map(|l| l.strip_prefix("arch="))
        .ok_or_else(|| NeuralError::Format("sidecar has no arch entry".into()))?
        .trim()
        .to_string();
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(NeuralError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NeuralError::Format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NeuralError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let size = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let size = size.ok_or_else(|| NeuralError::Format(format!("{name}: shape overflows")))?;
        let bytes = r.take(size.checked_mul(8).ok_or_else(|| NeuralError::Format("size overflow".into()))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if tensors.insert(name.clone(), ParamTensor { shape, data }).is_some() {
            return Err(NeuralError::Format(format!("duplicate tensor {name}")));
        }
    }
    let digest = r.take(32)?;
    if r.pos != buf.len() {
        return Err(NeuralError::Format("trailing bytes after digest".into()));
    }
    if digest != Sha256::digest(spec_text.as_bytes()).as_slice() {
        return Err(NeuralError::Format("architecture digest does not match the sidecar".into()));
    }
    let spec = ArchitectureSpec::parse(&spec_text)?;
    if spec.to_text() != spec_text {
        return Err(NeuralError::Format("architecture text is not canonical".into()));
    }
    let w = ModelWeights::from_parts(spec_text, tensors);
    w.check(&spec)?;
    Ok(w)
}
