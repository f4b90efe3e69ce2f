//! `AVAE1` model files.
//!
//! ```text
//! field                       type
//! magic "AVAE"                4 bytes
//! version (= 1)               u16
//! reserved (0)                u16
//! m, input length             u32
//! d, latent length            u32
//! hidden layer count h        u32
//! hidden widths               h x u32
//! dims x, y, z                3 x u32, product equals m
//! parameters                  f64 per layer: W row-major (out x in), then bias
//! ```
//!
//! Layers appear in model order: encoder hidden layers, mean head,
//! log-variance head, decoder hidden layers, output layer. Little-endian
//! throughout.

use super::{Dense, Result, VaeError, VaeModel};
use crate::codec::{put_f64s, put_u16, put_u32, Cursor};
use ndarray::{Array1, Array2};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"AVAE";
const VERSION: u16 = 1;

pub fn write_model(model: &VaeModel, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * model.param_count());
    buf.extend_from_slice(&MAGIC);
    put_u16(&mut buf, VERSION);
    put_u16(&mut buf, 0);
    let header = [model.input_len(), model.latent_dim(), model.hidden().len()];
    for x in header.iter().chain(model.hidden()).chain(&model.dims()) {
        put_u32(&mut buf, *x).map_err(VaeError::Format)?;
    }
    for l in model.layers() {
        put_f64s(&mut buf, l.w.iter());
        put_f64s(&mut buf, &l.b);
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_model(mut input: impl Read) -> Result<VaeModel> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse(&bytes).map_err(VaeError::Format)?
}

fn parse(bytes: &[u8]) -> std::result::Result<Result<VaeModel>, String> {
    let mut c = Cursor::new(bytes);
    c.magic(&MAGIC)?;
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    c.u16("reserved")?;
    let m = c.u32("m")?;
    let d = c.u32("d")?;
    let h = c.u32("hidden count")?;
    if h > 64 {
        return Err(format!("implausible hidden layer count {h}"));
    }
    let hidden = (0..h).map(|_| c.u32("hidden width")).collect::<std::result::Result<Vec<_>, _>>()?;
    let dims = [c.u32("dims")?, c.u32("dims")?, c.u32("dims")?];
    if dims.iter().try_fold(1usize, |a, &x| a.checked_mul(x)) != Some(m) {
        return Err(format!("dims {dims:?} do not multiply to m = {m}"));
    }
    let template = match VaeModel::zeros(dims, &hidden, d) {
        Ok(t) => t,
        Err(e) => return Ok(Err(e)),
    };
    let mut layers = Vec::with_capacity(template.layers().len());
    for (i, t) in template.layers().iter().enumerate() {
        let (rows, cols) = t.w.dim();
        let w = c.f64s(rows * cols, &format!("layer {i} weights"))?;
        let b = c.f64s(rows, &format!("layer {i} bias"))?;
        layers.push(Dense { w: Array2::from_shape_vec((rows, cols), w).map_err(|e| e.to_string())?, b: Array1::from(b) });
    }
    c.finish()?;
    Ok(VaeModel::from_layers(dims, &hidden, d, layers))
}

pub fn save_model(model: &VaeModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<VaeModel> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
