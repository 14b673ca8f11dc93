//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                              |
//! |--------------|------------------------------------------------------|
//! | 8            | magic `DPKITCKP`                                     |
//! | 4 (`u32`)    | format version, currently 1                          |
//! | 4 (`u32`)    | header length `h`                                    |
//! | `h`          | UTF-8 JSON of the [`ModelSpec`]                      |
//! | 4 (`u32`)    | number of parameter groups                           |
//! | per group    | `u64` value count, then that many `f64` LE values    |
//!
//! Groups appear in declaration order; within a group values are ordered
//! weight, recurrent weight (if any), bias. Values are always stored as `f64`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Model, ModelSpec, ParamGroup};

const MAGIC: &[u8; 8] = b"DPKITCKP";
const VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(model: &Model<T>, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(model.spec())?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(model.groups().len() as u32).to_le_bytes())?;
    for g in model.groups() {
        let values = g.flatten();
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Model<T>> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let spec: ModelSpec = serde_json::from_slice(&header)?;

    // Shapes come from the spec; the stored counts are checked against them.
    let mut model: Model<T> = Model::zeros(&spec)?;
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if count != model.num_groups() {
        return Err(Error::Checkpoint(format!(
            "expected {} groups, found {count}",
            model.num_groups()
        )));
    }
    let mut groups: Vec<ParamGroup<T>> = model.groups().to_vec();
    for g in &mut groups {
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        if n != g.len() {
            return Err(Error::Checkpoint(format!(
                "group holds {n} values, spec needs {}",
                g.len()
            )));
        }
        let values = (0..n)
            .map(|_| Ok(T::from_f64_lossy(f64::from_le_bytes(read_array(&mut r)?))))
            .collect::<Result<Vec<T>>>()?;
        g.assign_from(&values);
    }
    model = Model::from_groups(spec, groups)?;
    Ok(model)
}
