//! Binary checkpoint format, version 1:
//!
//! ```text
//! magic   4 bytes  "SXCK"
//! version u8       1
//! config  11 x u32 LE: EL, DL, DM, FF, NH, KV, vocab, max_len,
//!                      tie_embeddings(0|1), rel_buckets, rel_max_distance
//! step    u64 LE
//! rng     u64 LE   (seed fingerprint recorded at init)
//! count   u32 LE   number of parameter blocks
//! blocks  name_len u16 LE + UTF-8 name + ndim u8 + dims u32 LE each
//!         + values f32 LE
//! ```
//!
//! Blocks appear in canonical parameter order; reload reproduces forward
//! outputs bit for bit.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::config::ArchConfig;
use crate::model::Model;
use crate::tensor::Tensor;
use crate::ModelError;

const MAGIC: &[u8; 4] = b"SXCK";
const VERSION: u8 = 1;

pub fn save(model: &Model<f32>, path: &Path) -> Result<(), ModelError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let c = &model.config;
    for v in [
        c.encoder_layers,
        c.decoder_layers,
        c.d_model,
        c.d_ff,
        c.n_heads,
        c.d_kv,
        c.vocab,
        c.max_len,
        c.tie_embeddings as usize,
        c.rel_buckets,
        c.rel_max_distance,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&model.step.to_le_bytes())?;
    w.write_all(&model.rng_fingerprint.to_le_bytes())?;
    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for (name, tensor) in &model.params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], ModelError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

pub fn load(path: &Path) -> Result<Model<f32>, ModelError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    if &read_exact::<4>(&mut r)? != MAGIC {
        return Err(ModelError::BadCheckpoint(format!("{}: bad magic", path.display())));
    }
    let [version] = read_exact::<1>(&mut r)?;
    if version != VERSION {
        return Err(ModelError::BadCheckpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let mut fields = [0usize; 11];
    for f in fields.iter_mut() {
        *f = read_u32(&mut r)? as usize;
    }
    let config = ArchConfig {
        encoder_layers: fields[0],
        decoder_layers: fields[1],
        d_model: fields[2],
        d_ff: fields[3],
        n_heads: fields[4],
        d_kv: fields[5],
        vocab: fields[6],
        max_len: fields[7],
        tie_embeddings: fields[8] != 0,
        rel_buckets: fields[9],
        rel_max_distance: fields[10],
    };
    config.validate()?;
    let step = u64::from_le_bytes(read_exact::<8>(&mut r)?);
    let rng_fingerprint = u64::from_le_bytes(read_exact::<8>(&mut r)?);
    let count = read_u32(&mut r)? as usize;

    let expected = config.param_shapes();
    if expected.len() != count {
        return Err(ModelError::BadCheckpoint(format!(
            "{}: {count} blocks but the config implies {}",
            path.display(),
            expected.len()
        )));
    }
    let mut params = IndexMap::new();
    for (want_name, want_shape) in expected {
        let name_len = u16::from_le_bytes(read_exact::<2>(&mut r)?) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| ModelError::BadCheckpoint("non-UTF-8 parameter name".into()))?;
        if name != want_name {
            return Err(ModelError::BadCheckpoint(format!(
                "parameter order mismatch: got '{name}', expected '{want_name}'"
            )));
        }
        let [ndim] = read_exact::<1>(&mut r)?;
        let mut shape = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        if shape != want_shape {
            return Err(ModelError::BadCheckpoint(format!(
                "'{name}' has shape {shape:?}, expected {want_shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f32::from_le_bytes(read_exact::<4>(&mut r)?));
        }
        params.insert(name, Tensor::from_vec(&shape, data));
    }
    Ok(Model {
        config,
        params,
        step,
        rng_fingerprint,
        dropout: 0.0,
    })
}

/// A run directory full of `step_{N}.ckpt` files.
#[derive(Debug, Clone)]
pub struct CheckpointSeries {
    pub dir: PathBuf,
    pub steps: Vec<u64>,
}

impl CheckpointSeries {
    pub fn path_for(dir: &Path, step: u64) -> PathBuf {
        dir.join(format!("step_{step}.ckpt"))
    }

    /// Discovers checkpoints already on disk, sorted by step.
    pub fn discover(dir: &Path) -> Result<Self, ModelError> {
        let mut steps = Vec::new();
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(step) = name
                .strip_prefix("step_")
                .and_then(|s| s.strip_suffix(".ckpt"))
                .and_then(|s| s.parse::<u64>().ok())
            {
                steps.push(step);
            }
        }
        steps.sort_unstable();
        Ok(CheckpointSeries {
            dir: dir.to_path_buf(),
            steps,
        })
    }

    pub fn load_step(&self, step: u64) -> Result<Model<f32>, ModelError> {
        load(&Self::path_for(&self.dir, step))
    }

    pub fn last(&self) -> Option<u64> {
        self.steps.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Batch;

    fn small_model() -> Model<f32> {
        let cfg = ArchConfig::new(2, 16, 32, 2, 8, 24).with_max_len(16);
        let mut m = Model::init(&cfg, 31).unwrap();
        m.step = 420;
        m
    }

    #[test]
    fn reload_reproduces_forward_bitwise() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&model, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.step, 420);
        assert_eq!(back.rng_fingerprint, model.rng_fingerprint);
        assert_eq!(back.config, model.config);

        let batch = Batch::from_pairs(&[(vec![5, 9, 3, 1], vec![7, 4, 1])]);
        let a = model.forward(&batch.src, &batch.tgt_in).unwrap();
        let b = back.forward(&batch.src, &batch.tgt_in).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn save_is_byte_stable() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save(&model, &p1).unwrap();
        save(&model, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_corrupted_files() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(&path), Err(ModelError::BadCheckpoint(_))));
        // Truncation is an io error.
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'S';
        bytes.truncate(bytes.len() / 2);
        fs::write(&path, &bytes).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn series_discovery_sorts_steps() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        for step in [500u64, 100, 1500] {
            let mut m = model.clone();
            m.step = step;
            save(&m, &CheckpointSeries::path_for(dir.path(), step)).unwrap();
        }
        let series = CheckpointSeries::discover(dir.path()).unwrap();
        assert_eq!(series.steps, vec![100, 500, 1500]);
        assert_eq!(series.load_step(500).unwrap().step, 500);
    }
}
