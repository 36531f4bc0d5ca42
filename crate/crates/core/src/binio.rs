//! Little-endian primitives for the versioned model files.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

pub(crate) struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b).map_err(fmt_err)
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_u8(v).map_err(fmt_err)
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_u32::<LittleEndian>(v).map_err(fmt_err)
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_u64::<LittleEndian>(v).map_err(fmt_err)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_f64::<LittleEndian>(v).map_err(fmt_err)
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    pub fn vec(&mut self, v: &Array1<f64>) -> Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|&x| self.f64(x))
    }

    pub fn mat(&mut self, m: &Array2<f64>) -> Result<()> {
        self.u64(m.nrows() as u64)?;
        self.u64(m.ncols() as u64)?;
        m.iter().try_for_each(|&x| self.f64(x))
    }
}

pub(crate) struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn expect_magic(&mut self, magic: &[u8], version: u32) -> Result<()> {
        let mut got = vec![0u8; magic.len()];
        self.inner.read_exact(&mut got).map_err(fmt_err)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::Format(format!("unsupported version {v}, expected {version}")));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        self.inner.read_u8().map_err(fmt_err)
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.inner.read_u32::<LittleEndian>().map_err(fmt_err)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.inner.read_u64::<LittleEndian>().map_err(fmt_err)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.inner.read_f64::<LittleEndian>().map_err(fmt_err)
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        if n > (1 << 40) {
            return Err(Error::Format(format!("implausible {what} length {n}")));
        }
        Ok(n as usize)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let mut b = vec![0u8; n];
        self.inner.read_exact(&mut b).map_err(fmt_err)?;
        String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len("vector")?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn vec(&mut self) -> Result<Array1<f64>> {
        Ok(Array1::from(self.f64s()?))
    }

    pub fn mat(&mut self) -> Result<Array2<f64>> {
        let r = self.len("matrix")?;
        let c = self.len("matrix")?;
        let data: Vec<f64> = (0..r * c).map(|_| self.f64()).collect::<Result<_>>()?;
        Array2::from_shape_vec((r, c), data).map_err(|e| Error::Format(e.to_string()))
    }
}
