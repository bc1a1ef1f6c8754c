//! Little-endian binary helpers shared by the weight, checkpoint and buffer
//! file formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) struct Encoder<W: Write> {
    inner: W,
}

impl<W: Write> Encoder<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_u8(v)?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_u32::<LittleEndian>(v)?;
        Ok(())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_u64::<LittleEndian>(v)?;
        Ok(())
    }

    pub fn u128(&mut self, v: u128) -> Result<()> {
        self.inner.write_u128::<LittleEndian>(v)?;
        Ok(())
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_f64::<LittleEndian>(v)?;
        Ok(())
    }

    pub fn f64s(&mut self, values: &[f64]) -> Result<()> {
        self.usize(values.len())?;
        for &v in values {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn f32s(&mut self, values: &[f32]) -> Result<()> {
        self.usize(values.len())?;
        for &v in values {
            self.inner.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub(crate) struct Decoder<R: Read> {
    inner: R,
}

/// Upper bound on any length prefix; guards against allocating from a
/// corrupt header.
const MAX_LEN: u64 = 1 << 32;

impl<R: Read> Decoder<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.inner.read_u8()?)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(self.inner.read_u32::<LittleEndian>()?)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(self.inner.read_u64::<LittleEndian>()?)
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(self.inner.read_u128::<LittleEndian>()?)
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(self.inner.read_f64::<LittleEndian>()?)
    }

    fn len(&mut self) -> Result<usize> {
        let len = self.u64()?;
        if len > MAX_LEN {
            return Err(Error::config(format!("length prefix {len} exceeds limit")));
        }
        Ok(len as usize)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let len = self.len()?;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    pub fn f32s(&mut self) -> Result<Vec<f32>> {
        let len = self.len()?;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.inner.read_f32::<LittleEndian>()?);
        }
        Ok(out)
    }

    /// Succeeds only if the underlying reader is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::config("trailing bytes after payload")),
        }
    }
}
