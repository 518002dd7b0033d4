//! Binary parameter files: `STYLEMUX` magic, u32 version, a UTF-8
//! `key=value` config block, then named little-endian f32 tensors.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"STYLEMUX";
pub const VERSION: u32 = 1;

pub type ConfigLines = Vec<(String, String)>;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(config: &[(String, String)], params: &ParamSet<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let text: String = config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    put_str(&mut out, &text);
    put_u32(&mut out, params.len() as u32);
    for p in params.iter() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.value.shape().len() as u32);
        for &d in p.value.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ConfigLines, ParamSet<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a stylemux checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut config = Vec::new();
    for line in r.string()?.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
        config.push((k.to_string(), v.to_string()));
    }
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        params.add(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok((config, params))
}

pub fn write_checkpoint(path: &Path, config: &[(String, String)], params: &ParamSet<f32>) -> Result<()> {
    fs::write(path, encode_checkpoint(config, params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(ConfigLines, ParamSet<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Looks up a required key.
pub fn config_value<'a>(config: &'a [(String, String)], key: &str) -> Result<&'a str> {
    config
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Format(format!("checkpoint config lacks {key}")))
}

pub fn config_parse<T: std::str::FromStr>(config: &[(String, String)], key: &str) -> Result<T> {
    let v = config_value(config, key)?;
    v.parse().map_err(|_| Error::Format(format!("checkpoint config {key}={v} is malformed")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let mut p = ParamSet::new();
        p.add("a", Tensor::new(vec![2, 2], vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25]).unwrap()).unwrap();
        p.add("b.bias", Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        let cfg = vec![("kind".to_string(), "test".to_string())];
        let bytes = encode_checkpoint(&cfg, &p);
        let (cfg2, p2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(encode_checkpoint(&cfg2, &p2), bytes);
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_checkpoint(b"NOTMAGIC\x01\0\0\0"), Err(Error::Format(_))));
    }
}
