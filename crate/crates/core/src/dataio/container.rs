//! Binary container for named `f32` tensors.
//!
//! ```text
//! "FTB1\n"                      magic, 5 bytes
//! u32 LE                        record count
//! per record:
//!   u16 LE name length, name bytes (ASCII)
//!   u8 ndim, ndim x u32 LE extents
//!   product(extents) x f32 LE, row-major
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

pub const MAGIC: &[u8; 5] = b"FTB1\n";

pub type NamedTensors = Vec<(String, FeatureTensor)>;

pub fn encode_feature_file(tensors: &[(String, FeatureTensor)]) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    let payload: usize = tensors
        .iter()
        .map(|(n, t)| 2 + n.len() + 1 + 4 * t.ndim() + 4 * t.len())
        .sum();
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + payload);
    out.extend_from_slice(MAGIC);
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Data("too many records".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors {
        if !name.is_ascii() || name.is_empty() {
            return Err(Error::Data(format!(
                "tensor name {name:?} must be non-empty ASCII"
            )));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Data(format!("duplicate tensor name {name:?}")));
        }
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Data(format!("tensor name too long: {name}")))?;
        let ndim = u8::try_from(t.ndim())
            .map_err(|_| Error::Data(format!("{name}: too many dimensions")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(ndim);
        for &e in t.shape() {
            let e = u32::try_from(e)
                .map_err(|_| Error::Data(format!("{name}: extent {e} too large")))?;
            out.extend_from_slice(&e.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            context: self.context.to_string(),
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(self.pos, format!("truncated payload reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_feature_file(bytes: &[u8], context: &str) -> Result<NamedTensors> {
    let mut r = Reader {
        bytes,
        pos: 0,
        context,
    };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(r.err(0, "bad magic"));
    }
    r.pos = MAGIC.len();
    let count = r.u32("record count")?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let start = r.pos;
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name_bytes = r.take(len, "name")?;
        let name = std::str::from_utf8(name_bytes)
            .ok()
            .filter(|s| s.is_ascii())
            .ok_or_else(|| r.err(start + 2, "tensor name is not ASCII"))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(r.err(start, format!("duplicate tensor name {name:?}")));
        }
        let ndim = r.take(1, "ndim")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("extent")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(4).map(|_| n))
            .ok_or_else(|| r.err(start, format!("{name}: extents overflow")))?;
        let raw = r.take(n * 4, &format!("data of {name}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, FeatureTensor::from_vec(&shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, "trailing bytes after last record"));
    }
    Ok(out)
}

pub fn write_feature_file(path: &Path, tensors: &[(String, FeatureTensor)]) -> Result<()> {
    let bytes = encode_feature_file(tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<NamedTensors> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes, &path.display().to_string())
}

pub fn find<'a>(tensors: &'a [(String, FeatureTensor)], name: &str) -> Option<&'a FeatureTensor> {
    tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
}
