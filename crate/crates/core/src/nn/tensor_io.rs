//! Binary layout of a named-tensor block (all integers little-endian):
//!
//! ```text
//! u32 format version
//! u32 tensor count
//! per tensor:
//!   u32 name length, name bytes (UTF-8)
//!   u32 rank, rank x u64 dimensions
//!   product(dimensions) x f64
//! ```

use std::io::{Read, Write};

use crate::error::CheckpointError;

pub const TENSOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_tensors<W: Write>(w: &mut W, tensors: &[NamedTensor]) -> std::io::Result<()> {
    w.write_all(&TENSOR_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in &t.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

const MAX_ELEMENTS: u64 = 1 << 28;

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<NamedTensor>, CheckpointError> {
    let version = read_u32(r)?;
    if version != TENSOR_FORMAT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported tensor format version {version}")));
    }
    let count = read_u32(r)?;
    let mut out = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        if len > 4096 {
            return Err(CheckpointError::Format(format!("tensor name length {len} too large")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(r)?;
        if rank > 8 {
            return Err(CheckpointError::Format(format!("tensor `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut elements: u64 = 1;
        for _ in 0..rank {
            let d = read_u64(r)?;
            elements = elements.saturating_mul(d);
            shape.push(d as usize);
        }
        if elements > MAX_ELEMENTS {
            return Err(CheckpointError::Format(format!("tensor `{name}` is implausibly large")));
        }
        let mut data = Vec::with_capacity(elements as usize);
        for _ in 0..elements {
            data.push(f64::from_bits(read_u64(r)?));
        }
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(data in proptest::collection::vec(proptest::num::f64::ANY, 0..12), rows in 1usize..4) {
            let cols = data.len() / rows;
            let t = NamedTensor { name: "w".into(), shape: vec![rows, cols], data: data[..rows * cols].to_vec() };
            let mut buf = Vec::new();
            write_tensors(&mut buf, std::slice::from_ref(&t)).unwrap();
            let back = read_tensors(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0].shape, &t.shape);
            let bits: Vec<u64> = back[0].data.iter().map(|x| x.to_bits()).collect();
            let want: Vec<u64> = t.data.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(bits, want);
        }
    }

    #[test]
    fn rejects_wrong_version_and_truncation() {
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[NamedTensor { name: "b".into(), shape: vec![2], data: vec![1.0, 2.0] }]).unwrap();
        let mut bad = buf.clone();
        bad[0] = 9;
        assert!(matches!(read_tensors(&mut bad.as_slice()), Err(CheckpointError::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_tensors(&mut &short[..]), Err(CheckpointError::Io(_))));
    }
}
