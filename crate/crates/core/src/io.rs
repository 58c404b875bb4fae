//! Binary file formats, all little-endian.
//!
//! - `CT3`: magic `CT3\0`, dims `I, J, K` as `u64`, then `I·J·K` complex
//!   entries as interleaved `f64` pairs `(re, im)` in storage order.
//! - `CM3`: same header with magic `CM3\0`, then one byte per entry, 0 or 1.
//! - `BTD1`: magic `BTD1`, `I, J, K, R` as `u64`, then `R` block lengths as
//!   `u64`, then `A` (I×F), `B` (J×F), `C` (K×R) column-major in the `CT3`
//!   entry encoding.
//!
//! Readers reject bad magic, truncated or trailing data, and invalid values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::btd::{BlockStructure, BtdFactors};
use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor3, Dims, ObservationMask};

pub const CT3_MAGIC: [u8; 4] = *b"CT3\0";
pub const CM3_MAGIC: [u8; 4] = *b"CM3\0";
pub const BTD1_MAGIC: [u8; 4] = *b"BTD1";

fn format_err(what: &str, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{what}: {msg}"))
}

fn read_all<R: Read>(mut r: R) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Cursor over an in-memory file with format-specific error messages.
struct Bytes<'a> {
    what: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Bytes<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(format_err(self.what, format!("truncated at byte {}", self.data.len())));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(format_err(self.what, format!("bad magic {got:?}")));
        }
        Ok(())
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| format_err(self.what, format!("size {v} does not fit in memory")))
    }

    fn dims(&mut self) -> Result<Dims> {
        let dims = (self.usize()?, self.usize()?, self.usize()?);
        entry_count(self.what, dims)?;
        Ok(dims)
    }

    fn complex(&mut self, n: usize) -> Result<Vec<Complex64>> {
        let bytes = n.checked_mul(16).ok_or_else(|| format_err(self.what, "entry count overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(format_err(self.what, format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

fn entry_count(what: &str, (i, j, k): Dims) -> Result<usize> {
    i.checked_mul(j)
        .and_then(|n| n.checked_mul(k))
        .filter(|&n| n > 0)
        .ok_or_else(|| format_err(what, format!("invalid dims ({i}, {j}, {k})")))
}

fn write_dims<W: Write>(w: &mut W, (i, j, k): Dims) -> Result<()> {
    for d in [i, j, k] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_complex<'a, W: Write>(w: &mut W, values: impl IntoIterator<Item = &'a Complex64>) -> Result<()> {
    for z in values {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensor<W: Write>(mut w: W, t: &ComplexTensor3) -> Result<()> {
    w.write_all(&CT3_MAGIC)?;
    write_dims(&mut w, t.dims())?;
    write_complex(&mut w, t.as_slice())?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(r: R) -> Result<ComplexTensor3> {
    let data = read_all(r)?;
    let mut b = Bytes { what: "CT3", data: &data, pos: 0 };
    b.magic(CT3_MAGIC)?;
    let dims = b.dims()?;
    let values = b.complex(entry_count("CT3", dims)?)?;
    b.finish()?;
    ComplexTensor3::from_vec(dims, values)
}

pub fn write_mask<W: Write>(mut w: W, m: &ObservationMask) -> Result<()> {
    w.write_all(&CM3_MAGIC)?;
    write_dims(&mut w, m.dims())?;
    let bytes: Vec<u8> = m.as_slice().iter().map(|&x| x as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_mask<R: Read>(r: R) -> Result<ObservationMask> {
    let data = read_all(r)?;
    let mut b = Bytes { what: "CM3", data: &data, pos: 0 };
    b.magic(CM3_MAGIC)?;
    let dims = b.dims()?;
    let raw = b.take(entry_count("CM3", dims)?)?;
    b.finish()?;
    let values = raw
        .iter()
        .enumerate()
        .map(|(n, &x)| match x {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format_err("CM3", format!("entry {n} has value {other}, expected 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationMask::from_vec(dims, values)
}

pub fn write_factors<W: Write>(mut w: W, f: &BtdFactors) -> Result<()> {
    w.write_all(&BTD1_MAGIC)?;
    let s = f.structure();
    let (ni, nj, nk) = f.dims();
    for d in [ni, nj, nk, s.blocks()] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &l in s.lengths() {
        w.write_all(&(l as u64).to_le_bytes())?;
    }
    for m in [f.a(), f.b(), f.c()] {
        write_complex(&mut w, m.as_slice())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_factors<R: Read>(r: R) -> Result<BtdFactors> {
    let data = read_all(r)?;
    let mut b = Bytes { what: "BTD1", data: &data, pos: 0 };
    b.magic(BTD1_MAGIC)?;
    let (ni, nj, nk) = b.dims()?;
    let blocks = b.usize()?;
    if blocks == 0 || blocks > (data.len() - b.pos) / 8 {
        return Err(format_err("BTD1", format!("invalid block count {blocks}")));
    }
    let lengths = (0..blocks).map(|_| b.usize()).collect::<Result<Vec<_>>>()?;
    let structure = BlockStructure::new(lengths).map_err(|e| format_err("BTD1", e))?;
    let f = structure.total_columns();
    let mut matrix = |rows: usize, cols: usize| -> Result<DMatrix<Complex64>> {
        let n = rows.checked_mul(cols).ok_or_else(|| format_err("BTD1", "matrix size overflows"))?;
        Ok(DMatrix::from_vec(rows, cols, b.complex(n)?))
    };
    let a = matrix(ni, f)?;
    let bm = matrix(nj, f)?;
    let c = matrix(nk, blocks)?;
    b.finish()?;
    BtdFactors::new(a, bm, c, structure)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &ComplexTensor3) -> Result<()> {
    write_tensor(create(path.as_ref())?, t)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<ComplexTensor3> {
    read_tensor(open(path.as_ref())?)
}

pub fn save_mask(path: impl AsRef<Path>, m: &ObservationMask) -> Result<()> {
    write_mask(create(path.as_ref())?, m)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    read_mask(open(path.as_ref())?)
}

pub fn save_factors(path: impl AsRef<Path>, f: &BtdFactors) -> Result<()> {
    write_factors(create(path.as_ref())?, f)
}

pub fn load_factors(path: impl AsRef<Path>) -> Result<BtdFactors> {
    read_factors(open(path.as_ref())?)
}
