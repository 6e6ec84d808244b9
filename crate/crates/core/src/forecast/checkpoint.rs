//! Model checkpoints: a versioned flat binary layout.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "XCFM" | u32 version | u32 config_len | config (TOML, UTF-8)
//! | u32 n_tensors | per tensor: u32 name_len, name, u32 ndim, u64 dims...,
//!   f64 row-major payload
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::HarnessConfig;
use super::model::{ForecastModel, ParamSet};

const MAGIC: &[u8; 4] = b"XCFM";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &ForecastModel, config: &HarnessConfig) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config_text = config.to_toml_string();
    w.write_all(&(config_text.len() as u32).to_le_bytes())?;
    w.write_all(config_text.as_bytes())?;
    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for (name, tensor) in model.params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild a model from a checkpoint; the stored config determines the
/// topology and every stored tensor must match its expected shape.
pub fn load_checkpoint(path: &Path) -> Result<(ForecastModel, HarnessConfig)> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let config_text = String::from_utf8(config_bytes)
        .map_err(|e| Error::Config(format!("checkpoint config is not UTF-8: {e}")))?;
    let config = HarnessConfig::from_toml_str(&config_text)?;
    let model_cfg = config.model_config()?;

    let n_tensors = read_u32(&mut r)? as usize;
    let mut params = ParamSet::default();
    for _ in 0..n_tensors {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Config(format!("bad tensor name: {e}")))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            shape.push(u64::from_le_bytes(buf) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0f64; numel];
        for value in data.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *value = f64::from_le_bytes(buf);
        }
        params.push(name, Tensor::from_vec(shape, data)?);
    }

    // Validate against the expected topology.
    let reference = ForecastModel::init(model_cfg.clone(), 0);
    if reference.params.len() != params.len() {
        return Err(Error::Config(format!(
            "checkpoint holds {} tensors, config implies {}",
            params.len(),
            reference.params.len()
        )));
    }
    for ((expect_name, expect), (got_name, got)) in reference.params.iter().zip(params.iter()) {
        if expect_name != got_name || expect.shape() != got.shape() {
            return Err(Error::Config(format!(
                "checkpoint tensor {got_name} {:?} does not match expected {expect_name} {:?}",
                got.shape(),
                expect.shape()
            )));
        }
    }
    Ok((
        ForecastModel {
            cfg: model_cfg,
            params,
        },
        config,
    ))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
