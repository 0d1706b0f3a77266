//! Binary checkpoint: magic `CCR1`, then little-endian `u32` version and
//! array count; each array is a length-prefixed UTF-8 name, `u32` rank,
//! `u32` dims and `f32` data, in parameter visiting order.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nnengine::{Parameterized, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CCR1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    module: &mut impl Parameterized<T>,
    mut w: W,
) -> std::io::Result<()> {
    let mut arrays = Vec::new();
    module.visit_params("", &mut |slot| {
        arrays.push(StoredArray {
            name: slot.name,
            shape: slot.shape,
            data: slot.value.iter().map(|v| v.f64() as f32).collect(),
        });
    });
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(arrays.len() as u32)?;
    for a in &arrays {
        w.write_u32::<LittleEndian>(a.name.len() as u32)?;
        w.write_all(a.name.as_bytes())?;
        w.write_u32::<LittleEndian>(a.shape.len() as u32)?;
        for &d in &a.shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in &a.data {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()
}

pub fn save_checkpoint<T: Scalar>(path: &Path, module: &mut impl Parameterized<T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(module, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Tracks the byte offset so parse errors can point at the damage.
struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

fn parse_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        what: "checkpoint",
        offset,
        message: message.into(),
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Vec<StoredArray>> {
    let mut r = Counting {
        inner: r,
        offset: 0,
    };
    let trunc = |off: u64| parse_err(off, "truncated checkpoint");
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| trunc(0))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(parse_err(0, "bad magic, not a checkpoint"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| trunc(r.offset))?;
    if version != VERSION {
        return Err(parse_err(4, format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(|_| trunc(r.offset))?;
    let mut out = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let start = r.offset;
        let len = r.read_u32::<LittleEndian>().map_err(|_| trunc(r.offset))? as usize;
        if len > 1 << 16 {
            return Err(parse_err(start, format!("implausible name length {len}")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| trunc(r.offset))?;
        let name =
            String::from_utf8(name).map_err(|_| parse_err(start + 4, "name is not UTF-8"))?;
        let rank = r.read_u32::<LittleEndian>().map_err(|_| trunc(r.offset))? as usize;
        if rank > 8 {
            return Err(parse_err(r.offset - 4, format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>().map_err(|_| trunc(r.offset))? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(parse_err(start, format!("array '{name}' too large")));
        }
        let mut data = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut data)
            .map_err(|_| trunc(r.offset))?;
        out.push(StoredArray { name, shape, data });
    }
    Ok(out)
}

/// Copies stored arrays into `module`; names and shapes must match exactly.
pub fn apply_checkpoint<T: Scalar>(
    module: &mut impl Parameterized<T>,
    arrays: &[StoredArray],
) -> Result<()> {
    let mut idx = 0;
    let mut err: Option<Error> = None;
    module.visit_params("", &mut |slot| {
        if err.is_some() {
            return;
        }
        match arrays.get(idx) {
            Some(a) if a.name == slot.name && a.shape == slot.shape => {
                for (v, &s) in slot.value.iter_mut().zip(&a.data) {
                    *v = T::of(f64::from(s));
                }
            }
            Some(a) => {
                err = Some(Error::Config(format!(
                    "checkpoint array {idx} is '{}' {:?}, model expects '{}' {:?}",
                    a.name, a.shape, slot.name, slot.shape
                )))
            }
            None => err = Some(Error::Config(format!("checkpoint lacks '{}'", slot.name))),
        }
        idx += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    if idx != arrays.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} arrays, model has {idx}",
            arrays.len()
        )));
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path, module: &mut impl Parameterized<T>) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let arrays = read_checkpoint(std::io::BufReader::new(file))?;
    apply_checkpoint(module, &arrays)
}
