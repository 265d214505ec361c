//! Checkpoint container: named f32 tensors in a flat binary file.
//!
//! Layout (all integers little-endian):
//!   magic "PXWC" | u32 version=1 | u32 count |
//!   count x { u16 name_len | name UTF-8 | u8 rank | u32 dims[rank] | f32 data }

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PXWC";
const VERSION: u32 = 1;

pub fn save<P: AsRef<Path>>(path: P, params: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(TensorError::Format(format!("parameter name too long: {name}")));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        let shape = tensor.shape();
        if shape.len() > u8::MAX as usize {
            return Err(TensorError::Format(format!("rank too large for {name}")));
        }
        w.write_all(&[shape.len() as u8])?;
        for &d in &shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A parameter as stored on disk.
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<Vec<Entry>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Format(format!(
            "bad checkpoint magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| TensorError::Format("parameter name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0f32; numel];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        entries.push(Entry { name, shape, data });
    }
    Ok(entries)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pxwc");
        let params = vec![
            (
                "layer.weight".to_string(),
                Tensor::from_vec(&[2, 3], vec![0.1, -0.2, 0.3, 1.5e-7, -4.0, 5.25]).unwrap(),
            ),
            ("layer.bias".to_string(), Tensor::from_vec(&[3], vec![0.0, -0.0, 2.0]).unwrap()),
        ];
        save(&path, &params).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for ((name, tensor), entry) in params.iter().zip(&loaded) {
            assert_eq!(name, &entry.name);
            assert_eq!(tensor.shape(), entry.shape);
            let orig = tensor.to_vec();
            assert_eq!(orig.len(), entry.data.len());
            assert!(orig
                .iter()
                .zip(&entry.data)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.pxwc");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(load(&path), Err(TensorError::Format(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.pxwc");
        let params = vec![(
            "w".to_string(),
            Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )];
        save(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load(&path).is_err());
    }
}
