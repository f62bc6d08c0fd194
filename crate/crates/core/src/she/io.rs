//! Snapshot serialization.
//!
//! Binary layout (little endian): magic `b"KPZSNAP1"`, `u64` cell count `n`,
//! `u64` snapshot count, `f64` length `L`, then per snapshot `f64` time followed
//! by `n` `f64` values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::LatticeField;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KPZSNAP1";

pub fn write_csv<W: Write>(snapshots: &[LatticeField], mut out: W) -> Result<()> {
    writeln!(out, "t,x,value")?;
    for f in snapshots {
        for (i, v) in f.values.iter().enumerate() {
            writeln!(out, "{},{},{:e}", f.t, f.x(i), v)?;
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(snapshots: &[LatticeField], mut out: W) -> Result<()> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::MissingRecord("no snapshots".into()))?;
    if snapshots.iter().any(|f| !f.same_grid(first)) {
        return Err(Error::GridMismatch("snapshots on different grids".into()));
    }
    out.write_all(SNAPSHOT_MAGIC)?;
    out.write_all(&(first.n() as u64).to_le_bytes())?;
    out.write_all(&(snapshots.len() as u64).to_le_bytes())?;
    out.write_all(&first.length.to_le_bytes())?;
    for f in snapshots {
        out.write_all(&f.t.to_le_bytes())?;
        for v in &f.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<LatticeField>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Domain("not a snapshot file".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut input)?) as usize;
    let count = u64::from_le_bytes(next(&mut input)?) as usize;
    let length = f64::from_le_bytes(next(&mut input)?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = f64::from_le_bytes(next(&mut input)?);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(next(&mut input)?));
        }
        out.push(LatticeField { length, t, values });
    }
    Ok(out)
}
