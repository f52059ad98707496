//! Binary tensor dump: magic `T3`, little-endian `u32` dims `w, h, n`,
//! then `w·h·n` little-endian `f64` entries in storage order.

use std::io::{Read, Write};

use super::Tensor3;
use crate::error::{Error, Result};

const MAGIC: &[u8; 2] = b"T3";

pub fn write_tensor<W: Write>(mut out: W, t: &Tensor3) -> std::io::Result<()> {
    let (w, h, n) = t.dims();
    out.write_all(MAGIC)?;
    for d in [w, h, n] {
        let d = u32::try_from(d).map_err(|_| std::io::Error::other("tensor dimension exceeds u32"))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in t.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_tensor<R: Read>(mut input: R) -> Result<Tensor3> {
    let io = |e: std::io::Error| Error::Argument(format!("malformed tensor dump: {e}"));
    let mut magic = [0u8; 2];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::arg("malformed tensor dump: bad magic"));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        input.read_exact(&mut b).map_err(io)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let len = dims[0] * dims[1] * dims[2];
    let mut data = Vec::with_capacity(len);
    let mut b = [0u8; 8];
    for _ in 0..len {
        input.read_exact(&mut b).map_err(io)?;
        data.push(f64::from_le_bytes(b));
    }
    Tensor3::from_vec((dims[0], dims[1], dims[2]), data)
}
