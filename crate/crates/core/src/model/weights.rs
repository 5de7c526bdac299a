//! `VITW` weight container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "VITW" 0x01
//! repeated: u32 name_len, name (UTF-8), u8 dtype (0 = f32), u8 rank,
//!           rank × u32 dims, payload (product(dims) × f32)
//! u32 0
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ViTConfig;
use super::params::{Param, ParamData, ParamStore, Precision};
use super::vit::{is_head_param, ViTModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VITW";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0;

/// One named tensor in a container.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn write_container<W: Write>(mut w: W, records: &[WeightRecord]) -> Result<()> {
    let io = |e| Error::io("<weights>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&[VERSION]).map_err(io)?;
    let mut seen = HashSet::new();
    for r in records {
        if r.name.is_empty() {
            return Err(Error::Format("tensor names must be non-empty".into()));
        }
        if !seen.insert(r.name.as_str()) {
            return Err(Error::Format(format!("duplicate tensor name '{}'", r.name)));
        }
        if r.shape.len() > u8::MAX as usize || r.shape.iter().product::<usize>() != r.data.len() {
            return Err(Error::Format(format!(
                "tensor '{}' has inconsistent shape",
                r.name
            )));
        }
        w.write_all(&(r.name.len() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(r.name.as_bytes()).map_err(io)?;
        w.write_all(&[DTYPE_F32, r.shape.len() as u8]).map_err(io)?;
        for &d in &r.shape {
            let d = u32::try_from(d)
                .map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
            w.write_all(&d.to_le_bytes()).map_err(io)?;
        }
        let mut payload = Vec::with_capacity(r.data.len() * 4);
        for v in &r.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload).map_err(io)?;
    }
    w.write_all(&0u32.to_le_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Format(format!("truncated file while reading {what}"))
        }
        _ => Error::io("<weights>", e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_container<R: Read>(mut r: R) -> Result<Vec<WeightRecord>> {
    let mut header = [0u8; 5];
    read_exact(&mut r, &mut header, "header")?;
    if &header[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"VITW\"",
            &header[..4]
        )));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    loop {
        let name_len = read_u32(&mut r, "name length")? as usize;
        if name_len == 0 {
            break;
        }
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name, "tensor name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("duplicate tensor name '{name}'")));
        }
        let mut tr = [0u8; 2];
        read_exact(&mut r, &mut tr, "dtype and rank")?;
        if tr[0] != DTYPE_F32 {
            return Err(Error::Format(format!(
                "tensor '{name}' has unknown dtype code {}",
                tr[0]
            )));
        }
        let mut shape = Vec::with_capacity(tr[1] as usize);
        for _ in 0..tr[1] {
            shape.push(read_u32(&mut r, "dimensions")? as usize);
        }
        let n: usize = shape.iter().product();
        let mut payload = vec![0u8; n * 4];
        read_exact(&mut r, &mut payload, &format!("payload of '{name}'"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(WeightRecord { name, shape, data });
    }
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => Ok(records),
        Ok(_) => Err(Error::Format("trailing bytes after terminator".into())),
        Err(e) => Err(Error::io("<weights>", e)),
    }
}

/// Writes every parameter and running statistic in 32-bit form.
pub fn save_weights(model: &ViTModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<WeightRecord> = model
        .params()
        .iter()
        .map(|(name, p)| WeightRecord {
            name: name.to_string(),
            shape: p.shape.clone(),
            data: p.data.to_f32(),
        })
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_container(BufWriter::new(file), &records).map_err(|e| with_path(e, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Load only the backbone; the head is freshly initialized from
    /// `head_seed` and any `head.*` tensors in the file are ignored.
    pub backbone_only: bool,
    pub head_seed: u64,
}

pub fn load_weights(
    path: impl AsRef<Path>,
    config: &ViTConfig,
    opts: LoadOptions,
) -> Result<ViTModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_container(BufReader::new(file)).map_err(|e| with_path(e, path))?;
    model_from_records(records, config, opts)
}

pub fn model_from_records(
    records: Vec<WeightRecord>,
    config: &ViTConfig,
    opts: LoadOptions,
) -> Result<ViTModel> {
    config.validate()?;
    let specs = ViTModel::param_specs(config);
    let mut by_name: indexmap::IndexMap<String, WeightRecord> =
        records.into_iter().map(|r| (r.name.clone(), r)).collect();

    let mut store = ParamStore::new(Precision::F32);
    let mut missing = Vec::new();
    for spec in &specs {
        let from_file = by_name.shift_remove(&spec.name);
        if opts.backbone_only && is_head_param(&spec.name) {
            let (_, values) =
                ViTModel::fresh_values(config, opts.head_seed, &spec.name).expect("spec exists");
            store.insert(&spec.name, spec.shape.clone(), values, spec.trainable)?;
            continue;
        }
        let Some(rec) = from_file else {
            missing.push(spec.name.clone());
            continue;
        };
        if rec.shape != spec.shape {
            return Err(Error::Format(format!(
                "tensor '{}' has shape {:?}, expected {:?}",
                spec.name, rec.shape, spec.shape
            )));
        }
        store.insert_raw(
            &spec.name,
            Param {
                shape: rec.shape,
                data: ParamData::F32(rec.data),
                trainable: spec.trainable,
            },
        );
    }
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "missing tensors: {}",
            missing.join(", ")
        )));
    }
    let extra: Vec<&str> = by_name
        .keys()
        .map(String::as_str)
        .filter(|n| !(opts.backbone_only && is_head_param(n)))
        .collect();
    if !extra.is_empty() {
        return Err(Error::Format(format!(
            "unexpected tensors: {}",
            extra.join(", ")
        )));
    }
    ViTModel::from_params(config.clone(), store)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, shape: Vec<usize>) -> WeightRecord {
        let n = shape.iter().product();
        WeightRecord {
            name: name.into(),
            shape,
            data: (0..n).map(|i| i as f32 * 0.5).collect(),
        }
    }

    fn bytes(records: &[WeightRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_container(&mut buf, records).unwrap();
        buf
    }

    #[test]
    fn exact_byte_layout() {
        let buf = bytes(&[WeightRecord {
            name: "ab".into(),
            shape: vec![2],
            data: vec![1.0, -2.0],
        }]);
        let mut want = b"VITW\x01".to_vec();
        want.extend(2u32.to_le_bytes());
        want.extend(b"ab");
        want.extend([0u8, 1u8]);
        want.extend(2u32.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        want.extend(0u32.to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn round_trip_records() {
        let recs = vec![rec("a", vec![2, 3]), rec("b.c", vec![4])];
        assert_eq!(read_container(&bytes(&recs)[..]).unwrap(), recs);
    }

    #[test]
    fn bad_magic_truncation_duplicates() {
        let mut buf = bytes(&[rec("a", vec![3])]);
        let good = buf.clone();
        buf[0] = b'X';
        assert!(read_container(&buf[..])
            .unwrap_err()
            .to_string()
            .contains("magic"));

        let cut = &good[..good.len() - 6];
        assert!(read_container(cut)
            .unwrap_err()
            .to_string()
            .contains("truncated"));

        let mut dup = b"VITW\x01".to_vec();
        for _ in 0..2 {
            dup.extend(1u32.to_le_bytes());
            dup.extend(b"a");
            dup.extend([0u8, 1u8]);
            dup.extend(1u32.to_le_bytes());
            dup.extend(0f32.to_le_bytes());
        }
        dup.extend(0u32.to_le_bytes());
        assert!(read_container(&dup[..])
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        assert!(write_container(Vec::new(), &[rec("a", vec![1]), rec("a", vec![1])]).is_err());
    }

    #[test]
    fn shape_mismatch_names_the_tensor() {
        let model = ViTModel::init(ViTConfig::tiny(), 0).unwrap();
        let mut recs: Vec<WeightRecord> = model
            .params()
            .iter()
            .map(|(n, p)| WeightRecord {
                name: n.into(),
                shape: p.shape.clone(),
                data: p.data.to_f32(),
            })
            .collect();
        let i = recs.iter().position(|r| r.name == "head.dense1.w").unwrap();
        recs[i] = rec("head.dense1.w", vec![8, 28]);
        let err = model_from_records(recs, &ViTConfig::tiny(), LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("head.dense1.w") && msg.contains("[8, 28]") && msg.contains("[40, 28]"),
            "{msg}"
        );
    }
}
