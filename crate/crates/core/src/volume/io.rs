//! `.btv` volume files.
//!
//! Little-endian layout: magic `BTV1`, u32 version (1), u32 D, H, W, f64 sz,
//! sy, sx, u8 dtype (0 = bool as u8, 1 = f32), then D·H·W elements x-fastest.

use std::path::Path;

use super::{voxel_count, FloatVolume, Volume3D};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

const MAGIC: &[u8; 4] = b"BTV1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 24 + 1;

const DTYPE_BOOL: u8 = 0;
const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum BtvData {
    Binary(Volume3D),
    Float(FloatVolume),
}

fn encode_header(dims: [usize; 3], spacing: [f64; 3], dtype: u8, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in spacing {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.push(dtype);
}

pub fn encode_volume(vol: &Volume3D) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + vol.len());
    encode_header(vol.dims(), vol.spacing(), DTYPE_BOOL, &mut out);
    out.extend(vol.data().iter().map(|&b| b as u8));
    out
}

pub fn encode_field(field: &FloatVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + field.data.len() * 4);
    encode_header(field.dims, field.spacing, DTYPE_F32, &mut out);
    for v in &field.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<BtvData> {
    if bytes.len() < 8 {
        return Err(Error::MalformedHeader(format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader("truncated header".into()));
    }
    let dims = [
        u32_at(bytes, 8) as usize,
        u32_at(bytes, 12) as usize,
        u32_at(bytes, 16) as usize,
    ];
    let spacing = [f64_at(bytes, 20), f64_at(bytes, 28), f64_at(bytes, 36)];
    let dtype = bytes[44];
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::MalformedHeader(format!("zero dimension in {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::MalformedHeader(format!("invalid spacing {spacing:?}")));
    }
    let payload = &bytes[HEADER_LEN..];
    let n = voxel_count(dims);
    match dtype {
        DTYPE_BOOL => {
            if payload.len() != n {
                return Err(Error::PayloadSizeMismatch {
                    expected: n,
                    found: payload.len(),
                });
            }
            let mut data = Vec::with_capacity(n);
            for (offset, &byte) in payload.iter().enumerate() {
                match byte {
                    0 => data.push(false),
                    1 => data.push(true),
                    _ => return Err(Error::InvalidBoolByte { byte, offset }),
                }
            }
            Ok(BtvData::Binary(Volume3D::from_data(dims, spacing, data)?))
        }
        DTYPE_F32 => {
            if payload.len() != n * 4 {
                return Err(Error::PayloadSizeMismatch {
                    expected: n * 4,
                    found: payload.len(),
                });
            }
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(BtvData::Float(FloatVolume { dims, spacing, data }))
        }
        other => Err(Error::UnsupportedDtype(other)),
    }
}

pub fn read_btv(path: impl AsRef<Path>) -> Result<BtvData> {
    decode(&std::fs::read(path)?)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    match read_btv(path)? {
        BtvData::Binary(v) => Ok(v),
        BtvData::Float(_) => Err(Error::UnsupportedDtype(DTYPE_F32)),
    }
}

pub fn read_field(path: impl AsRef<Path>) -> Result<FloatVolume> {
    match read_btv(path)? {
        BtvData::Float(f) => Ok(f),
        BtvData::Binary(_) => Err(Error::UnsupportedDtype(DTYPE_BOOL)),
    }
}

pub fn write_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &encode_volume(vol))
}

pub fn write_field(field: &FloatVolume, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &encode_field(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelCoord;

    #[test]
    fn hand_built_fixture() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"BTV1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        for d in [2u32, 2, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for s in [1.0f64, 1.0, 1.0] {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        bytes.push(0);
        bytes.extend_from_slice(&[1, 0, 0, 0, 0, 0, 0, 1]);
        let BtvData::Binary(v) = decode(&bytes).unwrap() else {
            panic!("expected binary volume");
        };
        assert_eq!(v.dims(), [2, 2, 2]);
        assert_eq!(v.data(), &[true, false, false, false, false, false, false, true]);
        assert!(v.get(VoxelCoord::new(1, 1, 1)));
        assert_eq!(encode_volume(&v), bytes);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let v = Volume3D::from_fn([3, 2, 4], |c| c.x == 1);
        let good = encode_volume(&v);

        let truncated = &good[..good.len() - 1];
        assert!(matches!(decode(truncated), Err(Error::PayloadSizeMismatch { expected: 24, found: 23 })));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::MalformedHeader(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(decode(&bad_version), Err(Error::UnsupportedVersion(2))));

        let mut bad_byte = good.clone();
        bad_byte[HEADER_LEN + 3] = 7;
        assert!(matches!(decode(&bad_byte), Err(Error::InvalidBoolByte { byte: 7, offset: 3 })));

        let mut bad_dtype = good;
        bad_dtype[44] = 9;
        assert!(matches!(decode(&bad_dtype), Err(Error::UnsupportedDtype(9))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::from_fn([5, 6, 7], |c| (c.z ^ c.y ^ c.x) & 1 == 1)
            .with_spacing([0.5, 0.7, 1.5])
            .unwrap();
        let p = dir.path().join("v.btv");
        write_volume(&v, &p).unwrap();
        assert_eq!(read_volume(&p).unwrap(), v);

        let f = FloatVolume {
            dims: [2, 3, 1],
            spacing: [1.0; 3],
            data: vec![0.0, -1.5, 3.25, f32::MAX, 1e-30, 7.0],
        };
        let p = dir.path().join("f.btv");
        write_field(&f, &p).unwrap();
        assert_eq!(read_field(&p).unwrap(), f);
        assert!(matches!(read_volume(&p), Err(Error::UnsupportedDtype(1))));
    }
}
