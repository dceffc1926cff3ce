//! Parameter checkpoints: 8-byte magic `CSGDW001`, the element count as a
//! little-endian `u64`, then the values as little-endian `f64`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"CSGDW001";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated: header declares {declared} values, payload holds {available}")]
    Truncated { declared: u64, available: usize },
}

pub fn encode(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>, CheckpointError> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let declared = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let payload = &bytes[HEADER_LEN..];
    if (payload.len() as u64) < declared.saturating_mul(8) {
        return Err(CheckpointError::Truncated {
            declared,
            available: payload.len() / 8,
        });
    }
    Ok(payload
        .chunks_exact(8)
        .take(declared as usize)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_checkpoint(path: &Path, values: &[f64]) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<f64>, CheckpointError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode(&[1.5, -2.0]);
        assert_eq!(&bytes[..8], b"CSGDW001");
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs() {
        assert!(matches!(decode(b"CSGDW002\0\0\0\0\0\0\0\0"), Err(CheckpointError::BadMagic)));
        let mut bytes = encode(&[1.0, 2.0, 3.0]);
        bytes.truncate(30);
        assert!(matches!(decode(&bytes), Err(CheckpointError::Truncated { declared: 3, .. })));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        write_checkpoint(&path, &[0.25, f64::MIN_POSITIVE, -7.0]).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), vec![0.25, f64::MIN_POSITIVE, -7.0]);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(values in prop::collection::vec(any::<f64>(), 0..64)) {
            let back = decode(&encode(&values)).unwrap();
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
