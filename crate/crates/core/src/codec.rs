//! Little-endian helpers shared by the model file formats.

pub(crate) fn put_u16(buf: &mut Vec<u8>, x: u16) {
    buf.extend_from_slice(&x.to_le_bytes());
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, x: usize) -> Result<(), String> {
    let x = u32::try_from(x).map_err(|_| format!("value {x} exceeds u32"))?;
    buf.extend_from_slice(&x.to_le_bytes());
    Ok(())
}

pub(crate) fn put_f64s<'a>(buf: &mut Vec<u8>, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Cursor over an in-memory file; every read reports truncation as a
/// message naming the field.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated at {what}: need {n} bytes at offset {}, file has {}", self.pos, self.bytes.len())
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), String> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(format!("bad magic {got:?}, expected {:?}", std::str::from_utf8(expected).unwrap_or("?")));
        }
        Ok(())
    }

    pub fn u16(&mut self, what: &str) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| format!("{what}: length overflow"))?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn finish(&self) -> Result<(), String> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.bytes.len() - self.pos))
        }
    }
}
