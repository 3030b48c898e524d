//! Binary checkpoint: `PAAD` magic, u16 version, length-prefixed TOML config,
//! then `(name, shape, f32 LE data)` for every parameter tensor.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::PaadConfig;
use super::network::Paad;
use crate::diffcore::Tensor;
use crate::error::{PaadError, Result};

const MAGIC: &[u8; 4] = b"PAAD";
pub const CHECKPOINT_VERSION: u16 = 1;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(PaadError::Format(msg.into()))
}

pub fn write_checkpoint<W: Write>(model: &Paad<f32>, mut w: W) -> Result<()> {
    let config = toml::to_string(model.config())
        .map_err(|e| PaadError::Config(format!("cannot serialize model config: {e}")))?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(config.as_bytes())?;
    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for p in model.params.iter() {
        w.write_all(&(p.name.len() as u16).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        let shape = p.value.shape();
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.0
            .read_exact(&mut buf)
            .map_err(|_| PaadError::Format(format!("checkpoint truncated while reading {what}")))?;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let v = self.bytes(N, what)?;
        Ok(v.try_into().expect("exact length"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
}

/// Reads a checkpoint; the model comes back in inference mode.
pub fn read_checkpoint<R: Read>(r: R) -> Result<Paad<f32>> {
    let mut r = Reader(r);
    if &r.array::<4>("magic")? != MAGIC {
        return format_err("not a checkpoint (bad magic)");
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return format_err(format!("unsupported checkpoint version {version}"));
    }
    let len = r.u32("config length")? as usize;
    let text = String::from_utf8(r.bytes(len, "config")?)
        .map_err(|_| PaadError::Format("config block is not UTF-8".into()))?;
    let config: PaadConfig = toml::from_str(&text)
        .map_err(|e| PaadError::Config(format!("checkpoint config: {e}")))?;
    let mut model = Paad::<f32>::new(config)?;
    let count = r.u32("tensor count")? as usize;
    if count != model.params.len() {
        return Err(PaadError::Config(format!(
            "checkpoint has {count} tensors, config implies {}",
            model.params.len()
        )));
    }
    let mut seen = HashSet::new();
    for _ in 0..count {
        let n = r.u16("name length")? as usize;
        let name = String::from_utf8(r.bytes(n, "tensor name")?)
            .map_err(|_| PaadError::Format("tensor name is not UTF-8".into()))?;
        let rank = r.array::<1>("rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let expected = model
            .params
            .get(&name)
            .ok_or_else(|| PaadError::Config(format!("unknown tensor {name}")))?
            .value
            .shape()
            .to_vec();
        if shape != expected {
            return Err(PaadError::Config(format!(
                "tensor {name} has shape {shape:?}, config implies {expected:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        let raw = r.bytes(4 * numel, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        model.params.set_value(&name, Tensor::from_vec(&shape, data)?)?;
        if !seen.insert(name.clone()) {
            return format_err(format!("tensor {name} appears twice"));
        }
    }
    let mut trailing = [0u8; 1];
    if r.0.read(&mut trailing)? != 0 {
        return format_err("trailing bytes after the last tensor");
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Paad<f32>, path: &Path) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<Paad<f32>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let model = Paad::<f32>::new(PaadConfig::default()).unwrap();
        let mut a = Vec::new();
        write_checkpoint(&model, &mut a).unwrap();
        let back = read_checkpoint(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_checkpoint(&back, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.config(), model.config());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let model = Paad::<f32>::new(PaadConfig::default()).unwrap();
        let mut a = Vec::new();
        write_checkpoint(&model, &mut a).unwrap();
        assert!(matches!(read_checkpoint(&a[..a.len() - 3]), Err(PaadError::Format(_))));
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(PaadError::Format(_))));
        a.push(0);
        assert!(matches!(read_checkpoint(a.as_slice()), Err(PaadError::Format(_))));
    }
}
