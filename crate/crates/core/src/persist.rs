//! Binary mask (`LIPM`) and weight checkpoint (`LIPW`) files.
//!
//! Both share a header of magic, version (u32 LE) and layer count (u32 LE).
//! Each layer record is `name_len: u16 LE`, UTF-8 name, `rank: u8`, `rank`
//! dims as u32 LE, then the body: a row-major MSB-first bitmap zero-padded to
//! a byte for masks, or f32 LE values for checkpoints. The file ends with a
//! CRC32 of every preceding byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::priors::ParamSet;
use crate::pruning::{LayerMask, Mask};

pub const MASK_MAGIC: &[u8; 4] = b"LIPM";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"LIPW";
pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn header(out: &mut Vec<u8>, magic: &[u8; 4], layers: usize) -> Result<()> {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(layers).map_err(|_| Error::InvalidArgument("too many layers".into()))?.to_le_bytes());
    Ok(())
}

fn layer_head(out: &mut Vec<u8>, name: &str, shape: &[usize]) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::InvalidArgument(format!("layer name too long: {name}")))?;
    let rank = u8::try_from(shape.len()).map_err(|_| Error::InvalidArgument(format!("rank too large for {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(rank);
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension too large in {name}")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

fn seal(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Bounds-checked little-endian reader over a verified payload.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Malformed(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn layer_head(&mut self) -> Result<(String, Vec<usize>)> {
        let len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(len)?).map_err(|_| Error::Malformed("layer name is not UTF-8".into()))?;
        let rank = self.u8()? as usize;
        let shape = (0..rank).map(|_| Ok(self.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        Ok((name.to_string(), shape))
    }
}

/// Verifies the trailing CRC, magic and version; returns a reader positioned
/// after the header and the layer count.
fn open<'a>(bytes: &'a [u8], magic: &'static [u8; 4]) -> Result<(Reader<'a>, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Checksum { stored: 0, computed: crc32fast::hash(bytes) });
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: payload, pos: 0 };
    let expected = std::str::from_utf8(magic).expect("ASCII magic");
    if r.take(4).map_err(|_| Error::BadMagic { expected })? != magic {
        return Err(Error::BadMagic { expected });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let layers = r.u32()? as usize;
    Ok((r, layers))
}

fn finish(r: &Reader<'_>) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::Malformed(format!("{} trailing bytes", r.buf.len() - r.pos)));
    }
    Ok(())
}

fn numel(shape: &[usize]) -> Result<usize> {
    shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Malformed("shape overflows".into()))
}

pub fn encode_mask(mask: &Mask) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    header(&mut out, MASK_MAGIC, mask.layers().len())?;
    for l in mask.layers() {
        layer_head(&mut out, &l.name, &l.shape)?;
        for chunk in l.keep().chunks(8) {
            out.push(chunk.iter().enumerate().fold(0u8, |b, (i, &k)| b | (u8::from(k) << (7 - i))));
        }
    }
    Ok(seal(out))
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let (mut r, count) = open(bytes, MASK_MAGIC)?;
    let mut layers = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (name, shape) = r.layer_head()?;
        let n = numel(&shape)?;
        let bits = r.take(n.div_ceil(8))?;
        let keep = (0..n).map(|i| bits[i / 8] >> (7 - i % 8) & 1 == 1).collect();
        layers.push(LayerMask::new(name, shape, keep)?);
    }
    finish(&r)?;
    Ok(Mask::from_layers(layers))
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_mask(mask)?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    decode_mask(&fs::read(path)?)
}

/// Named tensors as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub layers: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params(params: &ParamSet) -> Self {
        Self { layers: params.iter().map(|p| (p.name.clone(), p.tensor.clone())).collect() }
    }

    /// Values for every parameter of `template`, matched by name and shape.
    pub fn into_params(self, template: &ParamSet) -> Result<ParamSet> {
        if self.layers.len() != template.len() {
            return Err(Error::SpecMismatch(format!(
                "checkpoint has {} tensors, network has {}",
                self.layers.len(),
                template.len()
            )));
        }
        let mut out = ParamSet::new();
        for ((name, tensor), p) in self.layers.into_iter().zip(template.iter()) {
            if name != p.name || tensor.shape() != p.tensor.shape() {
                return Err(Error::SpecMismatch(format!("checkpoint tensor {name} does not match parameter {}", p.name)));
            }
            out.push(name, tensor, p.prunable)?;
        }
        Ok(out)
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    header(&mut out, WEIGHTS_MAGIC, ckpt.layers.len())?;
    for (name, t) in &ckpt.layers {
        layer_head(&mut out, name, t.shape())?;
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(seal(out))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (mut r, count) = open(bytes, WEIGHTS_MAGIC)?;
    let mut layers = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (name, shape) = r.layer_head()?;
        let n = numel(&shape)?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Malformed("layer too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        layers.push((name, Tensor::new(shape, data)?));
    }
    finish(&r)?;
    Ok(Checkpoint { layers })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
