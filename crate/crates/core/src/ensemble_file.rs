//! Binary persistence for channel ensembles.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SECENS01"
//! 8       4     K (u32)
//! 12      4     N (u32)
//! 16      8     count (u64)
//! 24      8     rho (f64)
//! 32      8     seed (u64)
//! 40      ...   count * K * N f64 values; realization-major, then user, then subcarrier
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is lossless.

use std::io::{Read, Write};
use std::path::Path;

use crate::channel::{ChannelEnsemble, ChannelRealization};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SECENS01";
pub const HEADER_LEN: usize = 40;

pub fn write_ensemble<W: Write>(ens: &ChannelEnsemble, mut w: W) -> Result<()> {
    let (k, n) = ens.dims().unwrap_or((0, 0));
    w.write_all(MAGIC)?;
    w.write_all(&(k as u32).to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(ens.len() as u64).to_le_bytes())?;
    w.write_all(&ens.rho().to_le_bytes())?;
    w.write_all(&ens.seed().to_le_bytes())?;
    let mut buf = Vec::with_capacity(k * n * 8);
    for r in ens.realizations() {
        buf.clear();
        for a in r.values() {
            buf.extend_from_slice(&a.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ensemble<R: Read>(mut r: R) -> Result<ChannelEnsemble> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("short header: {e}")))?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let k = u32_at(8);
    let n = u32_at(12);
    let count = u64_at(16) as usize;
    let rho = f64::from_bits(u64_at(24));
    let seed = u64_at(32);

    let mut realizations = Vec::with_capacity(count);
    let mut buf = vec![0u8; k * n * 8];
    for i in 0..count {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated at realization {i}: {e}")))?;
        let alpha = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        realizations.push(ChannelRealization::new(k, n, alpha)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(
            "trailing bytes after last realization".into(),
        ));
    }
    ChannelEnsemble::from_realizations(realizations, seed, rho)
}

pub fn save(ens: &ChannelEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_ensemble(ens, std::io::BufWriter::new(f))
}

pub fn load(path: impl AsRef<Path>) -> Result<ChannelEnsemble> {
    let f = std::fs::File::open(path)?;
    read_ensemble(std::io::BufReader::new(f))
}
