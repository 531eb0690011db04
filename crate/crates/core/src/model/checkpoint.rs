//! Flat binary parameter format.
//!
//! ```text
//! b"CAUDANET"                       magic, 8 bytes
//! u32                               layer count L (extractor layers + classifier)
//! L × { u32 rows, u32 cols,         weight shape
//!       rows*cols f64,              weight, row-major
//!       cols f64 }                  bias
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Dense, NetworkParams};
use crate::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 8] = b"CAUDANET";

pub fn write_params(out: &mut impl Write, params: &NetworkParams) -> Result<()> {
    out.write_all(PARAMS_MAGIC)?;
    let n_layers = params.extractor.len() + 1;
    write_u32(out, n_layers)?;
    for layer in params.layers() {
        write_u32(out, layer.fan_in())?;
        write_u32(out, layer.fan_out())?;
        write_f64s(out, layer.weight.iter())?;
        write_f64s(out, layer.bias.iter())?;
    }
    Ok(())
}

pub fn read_params(input: &mut impl Read) -> Result<NetworkParams> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let n_layers = read_u32(input)? as usize;
    if n_layers < 2 {
        return Err(Error::Checkpoint(format!("{n_layers} layers, need at least 2")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = read_u32(input)? as usize;
        let cols = read_u32(input)? as usize;
        let weight = Array2::from_shape_vec((rows, cols), read_f64s(input, rows * cols)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let bias = Array1::from(read_f64s(input, cols)?);
        layers.push(Dense { weight, bias });
    }
    let classifier = layers.pop().expect("n_layers >= 2");
    NetworkParams::from_layers(layers, classifier)
        .map_err(|e| Error::Checkpoint(format!("inconsistent layers: {e}")))
}

pub fn params_to_bytes(params: &NetworkParams) -> Vec<u8> {
    let mut buf = Vec::new();
    write_params(&mut buf, params).expect("writing to a Vec cannot fail");
    buf
}

pub(crate) fn write_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_f64s<'a>(out: &mut impl Write, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    // guards against absurd headers allocating gigabytes before failing
    const MAX: usize = 1 << 28;
    if n > MAX {
        return Err(Error::Checkpoint(format!("payload of {n} values is too large")));
    }
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        input.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn round_trip() {
        let mut rng = rng_from_seed(9);
        let p = NetworkParams::init(3, &[7, 5], 4, &mut rng).unwrap();
        let bytes = params_to_bytes(&p);
        assert_eq!(&bytes[..8], PARAMS_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        let q = read_params(&mut bytes.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_file_fails() {
        let mut rng = rng_from_seed(9);
        let p = NetworkParams::init(3, &[7], 4, &mut rng).unwrap();
        let bytes = params_to_bytes(&p);
        assert!(read_params(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
    }
}
