//! Little-endian byte-packed encoding helpers shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn write_magic(w: &mut impl Write, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4], what: &str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(format!("{what}: truncated header")))?;
    if &buf != magic {
        return Err(Error::format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

/// Magic followed by a u16 format version.
pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 4], version: u16) -> Result<()> {
    write_magic(w, magic)?;
    write_u16(w, version)
}

pub(crate) fn expect_header(r: &mut impl Read, magic: &[u8; 4], version: u16, what: &str) -> Result<()> {
    expect_magic(r, magic, what)?;
    let got = read_u16(r)?;
    if got != version {
        return Err(Error::format(format!("{what}: unsupported version {got}, expected {version}")));
    }
    Ok(())
}

macro_rules! le_io {
    ($write:ident, $read:ident, $ty:ty) => {
        pub(crate) fn $write(w: &mut impl Write, v: $ty) -> Result<()> {
            w.write_all(&v.to_le_bytes())?;
            Ok(())
        }

        pub(crate) fn $read(r: &mut impl Read) -> Result<$ty> {
            let mut buf = [0u8; std::mem::size_of::<$ty>()];
            r.read_exact(&mut buf)
                .map_err(|e| Error::format(format!("truncated input: {e}")))?;
            Ok(<$ty>::from_le_bytes(buf))
        }
    };
}

le_io!(write_u8, read_u8, u8);
le_io!(write_u16, read_u16, u16);
le_io!(write_u32, read_u32, u32);
le_io!(write_u64, read_u64, u64);
le_io!(write_f32, read_f32, f32);
le_io!(write_f64, read_f64, f64);

pub(crate) fn write_f32s(w: &mut impl Write, vs: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let bytes = read_bytes(r, n * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn write_u16s(w: &mut impl Write, vs: &[u16]) -> Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 2);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_u16s(r: &mut impl Read, n: usize) -> Result<Vec<u16>> {
    let bytes = read_bytes(r, n * 2)?;
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub(crate) fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Error::format(format!(
            "truncated input: wanted {n} bytes, got {}",
            buf.len()
        )));
    }
    Ok(buf)
}

/// Length-prefixed (u16) UTF-8 string.
pub(crate) fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::InvalidInput(format!("string too long to encode: {} bytes", s.len())))?;
    write_u16(w, len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u16(r)? as usize;
    let bytes = read_bytes(r, len)?;
    String::from_utf8(bytes).map_err(|e| Error::format(format!("invalid UTF-8 string: {e}")))
}

pub(crate) fn write_strs(w: &mut impl Write, items: &[String]) -> Result<()> {
    write_u32(w, items.len() as u32)?;
    for s in items {
        write_str(w, s)?;
    }
    Ok(())
}

pub(crate) fn read_strs(r: &mut impl Read) -> Result<Vec<String>> {
    let n = read_u32(r)? as usize;
    (0..n).map(|_| read_str(r)).collect()
}

pub(crate) fn write_u32s(w: &mut impl Write, vs: &[u32]) -> Result<()> {
    let buf: Vec<u8> = vs.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_u32s(r: &mut impl Read, n: usize) -> Result<Vec<u32>> {
    let bytes = read_bytes(r, n * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn write_u64s(w: &mut impl Write, vs: &[u64]) -> Result<()> {
    let buf: Vec<u8> = vs.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_u64s(r: &mut impl Read, n: usize) -> Result<Vec<u64>> {
    let bytes = read_bytes(r, n * 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
