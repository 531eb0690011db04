//! `checkpoint.bin`: network parameters optionally followed by the cached
//! target centroids.
//!
//! ```text
//! <network parameter block>         see model::checkpoint
//! b"CENTROID"                       present only when centroids are saved
//! u32 K, u32 h
//! K*h f64                           centroids, row-major
//! K u32                             counts
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::clustering::CentroidSet;
use crate::model::{read_f64s, read_params, read_u32, write_f64s, write_params, write_u32, NetworkParams};
use crate::{Error, Result};

pub const CENTROID_MAGIC: &[u8; 8] = b"CENTROID";

pub fn checkpoint_to_bytes(params: &NetworkParams, centroids: Option<&CentroidSet>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_params(&mut buf, params)?;
    if let Some(c) = centroids {
        buf.write_all(CENTROID_MAGIC)?;
        write_u32(&mut buf, c.k())?;
        write_u32(&mut buf, c.dim())?;
        write_f64s(&mut buf, c.centroids.iter())?;
        for &n in &c.counts {
            write_u32(&mut buf, n)?;
        }
    }
    Ok(buf)
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams, centroids: Option<&CentroidSet>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&checkpoint_to_bytes(params, centroids)?)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<(NetworkParams, Option<CentroidSet>)> {
    let params = read_params(input)?;
    let mut magic = [0u8; 8];
    match input.read(&mut magic[..1])? {
        0 => return Ok((params, None)),
        _ => input.read_exact(&mut magic[1..])?,
    }
    if &magic != CENTROID_MAGIC {
        return Err(Error::Checkpoint("unexpected trailing data".into()));
    }
    let k = read_u32(input)? as usize;
    let h = read_u32(input)? as usize;
    if h != params.feature_dim() {
        return Err(Error::Checkpoint(format!(
            "centroid dim {h} does not match feature dim {}",
            params.feature_dim()
        )));
    }
    let values = read_f64s(input, k * h)?;
    let centroids = Array2::from_shape_vec((k, h), values).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut set = CentroidSet::new(centroids)?;
    for c in set.counts.iter_mut() {
        *c = read_u32(input)? as usize;
    }
    Ok((params, Some(set)))
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkParams, Option<CentroidSet>)> {
    if !path.exists() {
        return Err(Error::config(format!("checkpoint {} does not exist", path.display())));
    }
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
