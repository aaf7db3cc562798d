//! Binary checkpoint format for named tensors.
//!
//! Layout (all integers little-endian u32):
//!
//! ```text
//! magic "AVSEPCKPT" | version | [v2 only: meta_len | meta bytes] | count
//! then per entry: name_len | name UTF-8 | rank | dims... | f32 LE data
//! ```
//!
//! Version 1 files carry parameters only. Version 2 inserts a metadata
//! blob (model config JSON) between the version and the entry count.
//! Round trips are bit-exact in both directions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"AVSEPCKPT";

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| TensorError::Format("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn write_entries(w: &mut impl Write, entries: &[(String, Tensor)]) -> Result<()> {
    write_u32(w, entries.len() as u32)?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        write_u32(w, name_bytes.len() as u32)?;
        w.write_all(name_bytes)?;
        write_u32(w, tensor.rank() as u32)?;
        for &d in tensor.shape() {
            write_u32(w, d as u32)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_entries(r: &mut impl Read) -> Result<Vec<(String, Tensor)>> {
    let count = read_u32(r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)
            .map_err(|_| TensorError::Format("truncated checkpoint entry name".into()))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| TensorError::Format("checkpoint entry name is not UTF-8".into()))?;
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| TensorError::Format(format!("truncated data for entry {name:?}")))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| TensorError::Format(format!("bad entry {name:?}: {e}")))?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

/// Save a version-1 checkpoint (parameters only).
pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(&mut w, 1)?;
    write_entries(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

/// Save a version-2 checkpoint with a metadata blob in the header.
pub fn save_with_meta(path: &Path, meta: &[u8], entries: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(&mut w, 2)?;
    write_u32(&mut w, meta.len() as u32)?;
    w.write_all(meta)?;
    write_entries(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

/// A loaded checkpoint: optional metadata blob plus all entries in file order.
pub struct Checkpoint {
    pub meta: Option<Vec<u8>>,
    pub entries: Vec<(String, Tensor)>,
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)
        .map_err(|_| TensorError::Format("file too short for checkpoint magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Format(format!(
            "bad checkpoint magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(&mut r)?;
    let meta = match version {
        1 => None,
        2 => {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)
                .map_err(|_| TensorError::Format("truncated checkpoint metadata".into()))?;
            Some(buf)
        }
        v => {
            return Err(TensorError::Format(format!(
                "unsupported checkpoint version {v}"
            )))
        }
    };
    let entries = read_entries(&mut r)?;
    Ok(Checkpoint { meta, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v1_round_trip_bit_exact() {
        let dir = std::env::temp_dir().join("avsep_ckpt_test_v1");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.ckpt");
        let entries = vec![
            (
                "layer.weight".to_string(),
                Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0])
                    .unwrap(),
            ),
            ("layer.bias".to_string(), Tensor::scalar(-0.125)),
        ];
        save(&path, &entries).unwrap();
        let loaded = load(&path).unwrap();
        assert!(loaded.meta.is_none());
        assert_eq!(loaded.entries.len(), 2);
        for ((n0, t0), (n1, t1)) in entries.iter().zip(&loaded.entries) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            // Bit-exact, including signed zero and subnormals.
            for (a, b) in t0.data().iter().zip(t1.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn v2_carries_metadata() {
        let dir = std::env::temp_dir().join("avsep_ckpt_test_v2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("b.ckpt");
        let meta = br#"{"kind":"test"}"#.to_vec();
        save_with_meta(&path, &meta, &[("p".into(), Tensor::scalar(1.0))]).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.meta.as_deref(), Some(meta.as_slice()));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = std::env::temp_dir().join("avsep_ckpt_test_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.ckpt");
        std::fs::write(&path, b"NOTACKPT!xxxx").unwrap();
        assert!(matches!(load(&path), Err(TensorError::Format(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = std::env::temp_dir().join("avsep_ckpt_test_trunc");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.ckpt");
        let entries = vec![("w".to_string(), Tensor::full(&[64], 1.5))];
        save(&path, &entries).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load(&path), Err(TensorError::Format(_))));
    }
}
