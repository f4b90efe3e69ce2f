//! `ARBM1` model files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "ARBM"
//!      4     2  version (u16 = 1)
//!      6     2  reserved (0)
//!      8     4  m, visible count (u32)
//!     12     4  n, hidden count (u32)
//!     16    12  dims x, y, z (3 x u32), product equals m
//!     28     -  W row-major (m x n f64), then b (m f64), then c (n f64)
//! ```
//!
//! Little-endian throughout.

use super::{RbmError, RbmModel, Result};
use crate::codec::{put_f64s, put_u16, put_u32, Cursor};
use ndarray::{Array1, Array2};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"ARBM";
const VERSION: u16 = 1;

pub fn write_model(model: &RbmModel, mut out: impl Write) -> Result<()> {
    let (m, n) = (model.n_visible(), model.n_hidden());
    let mut buf = Vec::with_capacity(28 + 8 * (m * n + m + n));
    buf.extend_from_slice(&MAGIC);
    put_u16(&mut buf, VERSION);
    put_u16(&mut buf, 0);
    for x in [m, n].into_iter().chain(model.dims()) {
        put_u32(&mut buf, x).map_err(RbmError::Format)?;
    }
    put_f64s(&mut buf, model.weights.iter());
    put_f64s(&mut buf, &model.visible_bias);
    put_f64s(&mut buf, &model.hidden_bias);
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_model(mut input: impl Read) -> Result<RbmModel> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse(&bytes).map_err(RbmError::Format)?
}

fn parse(bytes: &[u8]) -> std::result::Result<Result<RbmModel>, String> {
    let mut c = Cursor::new(bytes);
    c.magic(&MAGIC)?;
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    c.u16("reserved")?;
    let m = c.u32("m")?;
    let n = c.u32("n")?;
    let dims = [c.u32("dims")?, c.u32("dims")?, c.u32("dims")?];
    if dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)) != Some(m) {
        return Err(format!("dims {dims:?} do not multiply to m = {m}"));
    }
    let w = c.f64s(m.checked_mul(n).ok_or("m x n overflows")?, "weights")?;
    let b = c.f64s(m, "visible bias")?;
    let cb = c.f64s(n, "hidden bias")?;
    c.finish()?;
    let w = Array2::from_shape_vec((m, n), w).map_err(|e| e.to_string())?;
    Ok(RbmModel::from_parts(dims, w, Array1::from(b), Array1::from(cb)))
}

pub fn save_model(model: &RbmModel, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_model(model, std::io::BufWriter::new(file))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RbmModel> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
