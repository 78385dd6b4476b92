//! Little-endian helpers shared by the feature store and checkpoint formats.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// `(u16 name length, name, u32 rows, u32 cols, rows*cols f64)`.
    pub fn named_matrix(&mut self, name: &str, m: &Matrix) -> Result<()> {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("matrix name too long: {} bytes", name.len())))?;
        let dim = |d: usize| {
            u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))
        };
        self.u16(name_len);
        self.bytes(name.as_bytes());
        self.u32(dim(m.rows())?);
        self.u32(dim(m.cols())?);
        for v in m.data() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn named_matrix(&mut self) -> Result<(String, Matrix)> {
        let name_len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|e| Error::Format(format!("matrix name is not UTF-8: {e}")))?
            .to_owned();
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| {
                Error::Format(format!("matrix {name}: dimensions {rows}x{cols} overflow"))
            })?;
        let raw = self.take(bytes)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = Matrix::new(rows, cols, data)
            .map_err(|e| Error::Format(format!("matrix {name}: {e}")))?;
        Ok((name, m))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last entry",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}
