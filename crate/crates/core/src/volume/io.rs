//! `AVX1` volume files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "AVX1"
//!      4     2  version (u16 = 1)
//!      6     2  flags (u16; bit 0 set for binary grids)
//!      8    12  dims x, y, z (3 x u32)
//!     20    12  spacing x, y, z in mm (3 x f32)
//!     32     -  payload, x-fastest: one byte per voxel for binary grids,
//!               one f32 per voxel otherwise
//! ```
//!
//! All integers and floats are little-endian.

use super::{Result, VolumeError, VoxelGrid};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"AVX1";
pub const HEADER_LEN: usize = 32;
const VERSION: u16 = 1;
const FLAG_BINARY: u16 = 1;

pub fn write_volume(grid: &VoxelGrid, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + grid.len() * 4);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if grid.is_binary() { FLAG_BINARY } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for d in grid.dims() {
        let d = u32::try_from(d).map_err(|_| VolumeError::InvalidInput(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for s in grid.spacing() {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    if grid.is_binary() {
        buf.extend(grid.values().iter().map(|&v| v as u8));
    } else {
        for v in grid.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_volume(mut input: impl Read) -> Result<VoxelGrid> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::TruncatedHeader(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(VolumeError::BadMagic(magic));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(VolumeError::UnsupportedVersion(version));
    }
    let binary = u16_at(6) & FLAG_BINARY != 0;
    let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    let spacing = [20, 24, 28].map(|o| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()));

    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| VolumeError::InvalidInput(format!("dims {dims:?} overflow")))?;
    let width = if binary { 1 } else { 4 };
    let expected = count * width;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(VolumeError::TruncatedPayload { expected, actual: payload.len() });
    }
    if payload.len() > expected {
        return Err(VolumeError::PayloadLengthMismatch { expected, actual: payload.len() });
    }
    if binary {
        let values = payload
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(0.0),
                1 => Ok(1.0),
                _ => Err(VolumeError::InvalidInput(format!("binary payload byte {b} at voxel {i}"))),
            })
            .collect::<Result<Vec<f32>>>()?;
        VoxelGrid::binary(dims, spacing, values)
    } else {
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        VoxelGrid::probability(dims, spacing, values)
    }
}

pub fn save_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_volume(grid, std::io::BufWriter::new(file))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let file = std::fs::File::open(path)?;
    read_volume(std::io::BufReader::new(file))
}
