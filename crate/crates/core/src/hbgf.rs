//! HBGF binary grid format.
//!
//! Layout: the magic bytes `HBGF`, then little-endian `u32` rows, `u32` cols,
//! `u32` channels (1 = real, 2 = complex interleaved re/im) and `u32` dtype
//! (0 = f32, 1 = f64), followed by the row-major payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::HbgfError;

pub const MAGIC: [u8; 4] = *b"HBGF";
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_tag(tag: u32) -> Result<Self, HbgfError> {
        match tag {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            value => Err(HbgfError::Unsupported {
                field: "dtype",
                value,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl Grid {
    pub fn channels(&self) -> u32 {
        match self {
            Grid::Real(_) => 1,
            Grid::Complex(_) => 2,
        }
    }

    pub fn into_real(self) -> Result<Array2<f64>, HbgfError> {
        match self {
            Grid::Real(g) => Ok(g),
            Grid::Complex(_) => Err(HbgfError::ChannelMismatch {
                expected: 1,
                found: 2,
            }),
        }
    }

    pub fn into_complex(self) -> Result<Array2<Complex64>, HbgfError> {
        match self {
            Grid::Complex(g) => Ok(g),
            Grid::Real(_) => Err(HbgfError::ChannelMismatch {
                expected: 2,
                found: 1,
            }),
        }
    }
}

fn push_value(out: &mut Vec<u8>, v: f64, dtype: Dtype) {
    match dtype {
        Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
    }
}

pub fn encode(grid: &Grid, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = match grid {
        Grid::Real(g) => g.dim(),
        Grid::Complex(g) => g.dim(),
    };
    let channels = grid.channels() as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * channels * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&grid.channels().to_le_bytes());
    out.extend_from_slice(&(dtype as u32).to_le_bytes());
    match grid {
        // `iter()` on an ndarray walks in logical row-major order.
        Grid::Real(g) => g.iter().for_each(|&v| push_value(&mut out, v, dtype)),
        Grid::Complex(g) => g.iter().for_each(|c| {
            push_value(&mut out, c.re, dtype);
            push_value(&mut out, c.im, dtype);
        }),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Grid, HbgfError> {
    if bytes.len() < HEADER_LEN {
        return Err(HbgfError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(HbgfError::BadMagic(magic));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (rows, cols, channels) = (word(0) as usize, word(1) as usize, word(2));
    let dtype = Dtype::from_tag(word(3))?;
    if channels != 1 && channels != 2 {
        return Err(HbgfError::Unsupported {
            field: "channels",
            value: channels,
        });
    }
    let count = rows * cols * channels as usize;
    let expected = HEADER_LEN + count * dtype.size();
    if bytes.len() != expected {
        return Err(HbgfError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    };
    let grid = if channels == 1 {
        Grid::Real(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
    } else {
        let data = values
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Grid::Complex(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    };
    Ok(grid)
}

pub fn write<W: Write>(mut w: W, grid: &Grid, dtype: Dtype) -> Result<(), HbgfError> {
    w.write_all(&encode(grid, dtype))?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<Grid, HbgfError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_file(path: &Path, grid: &Grid, dtype: Dtype) -> Result<(), HbgfError> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w, grid, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Grid, HbgfError> {
    read(BufReader::new(File::open(path)?))
}
