//! Binary snapshots of an ensemble and its generator.
//!
//! Layout, all little endian: magic `GBDS`, `u32` version, `u64` particle
//! count, `f64` time, `u64` user seed, 32-byte ChaCha key, `u64` stream,
//! `u128` word position, then `3N` `f64` velocity components.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Ensemble;
use crate::error::{Error, Result};
use crate::Vec3;

const MAGIC: &[u8; 4] = b"GBDS";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, ens: &Ensemble, rng: &ChaCha8Rng) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(ens.velocities.len() as u64).to_le_bytes())?;
    w.write_all(&ens.t.to_le_bytes())?;
    w.write_all(&ens.seed.to_le_bytes())?;
    w.write_all(&rng.get_seed())?;
    w.write_all(&rng.get_stream().to_le_bytes())?;
    w.write_all(&rng.get_word_pos().to_le_bytes())?;
    for v in &ens.velocities {
        for c in v.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Ensemble, ChaCha8Rng)> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let t = f64::from_le_bytes(read_array(&mut r)?);
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let key: [u8; 32] = read_array(&mut r)?;
    let stream = u64::from_le_bytes(read_array(&mut r)?);
    let word_pos = u128::from_le_bytes(read_array(&mut r)?);
    let mut velocities = Vec::with_capacity(n);
    for _ in 0..n {
        let x = f64::from_le_bytes(read_array(&mut r)?);
        let y = f64::from_le_bytes(read_array(&mut r)?);
        let z = f64::from_le_bytes(read_array(&mut r)?);
        velocities.push(Vec3::new(x, y, z));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after velocities".into()));
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let ens = Ensemble::new(velocities, t, seed)?;
    Ok((ens, rng))
}

pub fn save_checkpoint(path: &Path, ens: &Ensemble, rng: &ChaCha8Rng) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), ens, rng)
}

pub fn load_checkpoint(path: &Path) -> Result<(Ensemble, ChaCha8Rng)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn round_trip_restores_state_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vs: Vec<Vec3> = (0..17).map(|_| Vec3::new(rng.random(), rng.random(), -rng.random::<f64>())).collect();
        let ens = Ensemble::new(vs, 1.25, 9).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ens, &rng).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 8 + 32 + 8 + 16 + 17 * 24);
        let (back, mut rng2) = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, ens);
        assert_eq!(rng.random::<u64>(), rng2.random::<u64>());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let ens = Ensemble::new(vec![Vec3::zeros(), Vec3::x()], 0.0, 1).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(1);
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ens, &rng).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Checkpoint(_))));
        assert!(matches!(read_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        bytes.push(0);
        assert!(matches!(read_checkpoint(bytes.as_slice()), Err(Error::Checkpoint(_))));
    }
}
