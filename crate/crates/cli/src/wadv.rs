//! `WADV` binary container: the magic bytes `WADV`, a little-endian `u32`
//! dimension count, that many `u32` dimensions, then the `f64` payload in
//! row-major order, also little-endian.

use std::io::{Read, Write};

use anyhow::{bail, ensure, Context, Result};

pub const MAGIC: &[u8; 4] = b"WADV";

/// Dimensions larger than this are refused when reading, so a corrupt
/// header cannot trigger a huge allocation.
const MAX_ELEMENTS: usize = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dims: Vec<u32>, data: Vec<f64>) -> Result<Self> {
        let len = element_count(&dims)?;
        ensure!(
            len == data.len(),
            "dimensions {dims:?} describe {len} values but {} were given",
            data.len()
        );
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize)
            .filter(|&n| n <= MAX_ELEMENTS)
            .context("array is too large")
    })
}

pub fn write<W: Write>(mut out: W, array: &Array) -> Result<()> {
    out.write_all(MAGIC)?;
    let ndims = u32::try_from(array.dims.len()).context("too many dimensions")?;
    out.write_all(&ndims.to_le_bytes())?;
    for d in &array.dims {
        out.write_all(&d.to_le_bytes())?;
    }
    for v in &array.data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).context("truncated header")?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read<R: Read>(mut input: R) -> Result<Array> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .context("file too short for a WADV header")?;
    if &magic != MAGIC {
        bail!("not a WADV file (magic bytes {magic:?})");
    }
    let ndims = read_u32(&mut input)?;
    ensure!(ndims <= 16, "implausible dimension count {ndims}");
    let dims = (0..ndims)
        .map(|_| read_u32(&mut input))
        .collect::<Result<Vec<_>>>()?;
    let len = element_count(&dims)?;
    let mut bytes = vec![0u8; len * 8];
    input
        .read_exact(&mut bytes)
        .with_context(|| format!("payload shorter than the {len} values announced"))?;
    let mut rest = [0u8; 1];
    ensure!(
        input.read(&mut rest)? == 0,
        "trailing bytes after the WADV payload"
    );
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Array { dims, data })
}
