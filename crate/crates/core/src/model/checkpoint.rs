//! Versioned binary checkpoints.
//!
//! Layout: magic `LFCK`, u32 version, u32-length-prefixed UTF-8 JSON
//! metadata (config, step, per-group Adam counters, optional RNG position),
//! u32 tensor count, then named LFT1 tensor sections (u32 name length, name
//! bytes, LFT1 blob). Parameter groups are stored as flat 1-D tensors in
//! their canonical iteration order; shapes are rebuilt from the config, so a
//! load reproduces bitwise-identical inference.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LofiConfig, LofiModel, Precision};
use crate::lft;
use crate::nn::Params;
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct Meta {
    config: LofiConfig,
    step: u64,
    adam_t: BTreeMap<String, u64>,
    rng_seed: Option<u64>,
    rng_word_pos: Option<String>,
}

fn write_section<T: Real, W: Write>(w: &mut W, name: &str, data: &[T]) -> Result<()> {
    let bytes = name.as_bytes();
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)?;
    lft::write_tensor(w, &[data.len() as u32], data)
}

fn read_section<T: Real, R: Read>(r: &mut R) -> Result<(String, Vec<T>)> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::Corrupt("truncated section name length".into()))?;
    let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut name)
        .map_err(|_| Error::Corrupt("truncated section name".into()))?;
    let name = String::from_utf8(name).map_err(|_| Error::Corrupt("section name not UTF-8".into()))?;
    let t = lft::read_tensor::<T, _>(r)?;
    Ok((name, t.data))
}

/// Serialize the model and, when provided, the training RNG position so a
/// resumed run continues the exact stream.
pub fn save_checkpoint<T: Real>(
    model: &LofiModel<T>,
    rng: Option<&SeedRng>,
    path: &Path,
) -> Result<()> {
    let expected = match model.config.precision {
        Precision::F32 => 0,
        Precision::F64 => 1,
    };
    if expected != T::DTYPE {
        return Err(Error::Config(
            "model precision does not match its configured precision".into(),
        ));
    }
    let mut adam_t = BTreeMap::new();
    adam_t.insert("core".to_string(), model.opt_core.t);
    adam_t.insert("offsets".to_string(), model.opt_offsets.t);
    if let Some(o) = &model.opt_ccpg {
        adam_t.insert("ccpg".to_string(), o.t);
    }
    if let Some(o) = &model.opt_filter {
        adam_t.insert("filter".to_string(), o.t);
    }
    if let Some(o) = &model.opt_inr {
        adam_t.insert("inr".to_string(), o.t);
    }
    let meta = Meta {
        config: model.config.clone(),
        step: model.step,
        adam_t,
        rng_seed: rng.map(|r| r.seed()),
        rng_word_pos: rng.map(|r| r.word_pos().to_string()),
    };
    let json = serde_json::to_vec(&meta)?;

    let mut sections: Vec<(String, Vec<T>)> = Vec::new();
    sections.push(("core".into(), model.core.flat()));
    sections.push(("core.m".into(), model.opt_core.m.clone()));
    sections.push(("core.v".into(), model.opt_core.v.clone()));
    sections.push(("offsets".into(), model.offsets.flat()));
    sections.push(("offsets.m".into(), model.opt_offsets.m.clone()));
    sections.push(("offsets.v".into(), model.opt_offsets.v.clone()));
    if let Some(c) = &model.ccpg {
        sections.push(("ccpg".into(), c.flat()));
        let o = model.opt_ccpg.as_ref().expect("ccpg optimizer");
        sections.push(("ccpg.m".into(), o.m.clone()));
        sections.push(("ccpg.v".into(), o.v.clone()));
    }
    if let Some(f) = &model.filter {
        sections.push(("filter".into(), f.flat()));
        let o = model.opt_filter.as_ref().expect("filter optimizer");
        sections.push(("filter.m".into(), o.m.clone()));
        sections.push(("filter.v".into(), o.v.clone()));
    }
    if let Some(s) = &model.spatial {
        sections.push(("spatial".into(), s.flat()));
    }
    if let Some(i) = &model.inr {
        sections.push(("inr".into(), i.flat()));
        let o = model.opt_inr.as_ref().expect("inr optimizer");
        sections.push(("inr.m".into(), o.m.clone()));
        sections.push(("inr.v".into(), o.v.clone()));
    }

    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(sections.len() as u32).to_le_bytes())?;
    for (name, data) in &sections {
        write_section(&mut w, name, data)?;
    }
    w.flush()?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<Meta> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Corrupt("truncated checkpoint header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Corrupt("bad checkpoint magic".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)
        .map_err(|_| Error::Corrupt("truncated checkpoint version".into()))?;
    let version = u32::from_le_bytes(v);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut jl = [0u8; 4];
    r.read_exact(&mut jl)
        .map_err(|_| Error::Corrupt("truncated metadata length".into()))?;
    let mut json = vec![0u8; u32::from_le_bytes(jl) as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Corrupt("truncated metadata".into()))?;
    Ok(serde_json::from_slice(&json)?)
}

/// Read just the configuration and step counter (to choose the precision
/// before a full load).
pub fn peek_config(path: &Path) -> Result<(LofiConfig, u64)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let meta = read_header(&mut r)?;
    Ok((meta.config, meta.step))
}

/// Load a model; also returns the stored RNG position when present.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(LofiModel<T>, Option<SeedRng>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let meta = read_header(&mut r)?;
    let expected = match meta.config.precision {
        Precision::F32 => 0u8,
        Precision::F64 => 1,
    };
    if expected != T::DTYPE {
        return Err(Error::Corrupt(format!(
            "checkpoint precision {:?} does not match the requested load type",
            meta.config.precision
        )));
    }
    let mut count = [0u8; 4];
    r.read_exact(&mut count)
        .map_err(|_| Error::Corrupt("truncated tensor count".into()))?;
    let count = u32::from_le_bytes(count) as usize;
    let mut sections: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for _ in 0..count {
        let (name, data) = read_section::<T, _>(&mut r)?;
        sections.insert(name, data);
    }

    // Rebuild shapes from the config; every weight is overwritten below.
    let mut model = LofiModel::<T>::new(meta.config.clone(), &mut SeedRng::new(0))?;
    model.step = meta.step;
    let mut take = |name: &str| -> Result<Vec<T>> {
        sections
            .remove(name)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint missing tensor '{name}'")))
    };
    model.core.load_flat(&take("core")?)?;
    model.opt_core.m = take("core.m")?;
    model.opt_core.v = take("core.v")?;
    model.offsets.load_flat(&take("offsets")?)?;
    model.opt_offsets.m = take("offsets.m")?;
    model.opt_offsets.v = take("offsets.v")?;
    if let Some(c) = model.ccpg.as_mut() {
        c.load_flat(&take("ccpg")?)?;
        let o = model.opt_ccpg.as_mut().expect("ccpg optimizer");
        o.m = take("ccpg.m")?;
        o.v = take("ccpg.v")?;
    }
    if let Some(f) = model.filter.as_mut() {
        f.load_flat(&take("filter")?)?;
        let o = model.opt_filter.as_mut().expect("filter optimizer");
        o.m = take("filter.m")?;
        o.v = take("filter.v")?;
    }
    if let Some(s) = model.spatial.as_mut() {
        s.load_flat(&take("spatial")?)?;
    }
    if let Some(i) = model.inr.as_mut() {
        i.load_flat(&take("inr")?)?;
        let o = model.opt_inr.as_mut().expect("inr optimizer");
        o.m = take("inr.m")?;
        o.v = take("inr.v")?;
    }
    for (name, t) in &meta.adam_t {
        match name.as_str() {
            "core" => model.opt_core.t = *t,
            "offsets" => model.opt_offsets.t = *t,
            "ccpg" => {
                if let Some(o) = model.opt_ccpg.as_mut() {
                    o.t = *t;
                }
            }
            "filter" => {
                if let Some(o) = model.opt_filter.as_mut() {
                    o.t = *t;
                }
            }
            "inr" => {
                if let Some(o) = model.opt_inr.as_mut() {
                    o.t = *t;
                }
            }
            _ => {}
        }
    }
    let rng = match (meta.rng_seed, meta.rng_word_pos) {
        (Some(seed), Some(pos)) => {
            let pos: u128 = pos
                .parse()
                .map_err(|_| Error::Corrupt("bad rng position".into()))?;
            Some(SeedRng::restore(seed, pos))
        }
        _ => None,
    };
    Ok((model, rng))
}
