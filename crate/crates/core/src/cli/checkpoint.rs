//! Single-file checkpoints.
//!
//! Layout, all integers little-endian:
//! `MAPCKPT\0`, `u32` version, `u64` epochs done, config TOML (`u64` length
//! + UTF-8), parameters, Adam step (`u64`), first moments, second moments.
//! Each tensor map is a `u64` count followed by entries of name (`u64`
//! length + UTF-8), `u64` rows, `u64` cols and `rows·cols` `f64` values,
//! in name order.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::RunConfig;
use super::train::TrainState;
use super::CliError;
use crate::numerics::{AdamState, ParamStore, Tensor};
use crate::planner::Model;

pub const MAGIC: &[u8; 8] = b"MAPCKPT\0";
pub const VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

fn put_tensors<'a>(out: &mut Vec<u8>, entries: impl Iterator<Item = (&'a str, &'a Tensor)>) {
    let entries: Vec<_> = entries.collect();
    put_u64(out, entries.len() as u64);
    for (name, t) in entries {
        put_str(out, name);
        put_u64(out, t.rows() as u64);
        put_u64(out, t.cols() as u64);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, state.epochs_done as u64);
    put_str(&mut out, &state.config.to_toml());
    put_tensors(&mut out, state.model.params.iter());
    put_u64(&mut out, state.adam.step);
    for moments in [&state.adam.first, &state.adam.second] {
        put_tensors(&mut out, moments.iter().map(|(k, v)| (k.as_str(), v)));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, String> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| format!("implausible length {v} at byte {}", self.pos - 8))
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }

    fn tensors(&mut self) -> Result<BTreeMap<String, Tensor>, String> {
        let n = self.len()?;
        let mut map = BTreeMap::new();
        for _ in 0..n {
            let name = self.string()?;
            let rows = self.len()?;
            let cols = self.len()?;
            let count = rows.checked_mul(cols).ok_or("tensor size overflows")?;
            let raw = self.take(count.checked_mul(8).ok_or("tensor size overflows")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(rows, cols, data).map_err(|e| format!("{name}: {e}"))?;
            map.insert(name, t);
        }
        Ok(map)
    }
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<TrainState, CliError> {
    let bad = |message: String| CliError::Checkpoint {
        path: origin.to_path_buf(),
        message,
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(&bad)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4).map_err(&bad)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let epochs_done = r.len().map_err(&bad)?;
    let config_text = r.string().map_err(&bad)?;
    let config = RunConfig::from_toml(&config_text, origin)?;
    let mut params = ParamStore::new();
    for (k, v) in r.tensors().map_err(&bad)? {
        params.insert(k, v);
    }
    let step = r.u64().map_err(&bad)?;
    let first = r.tensors().map_err(&bad)?;
    let second = r.tensors().map_err(&bad)?;
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let reference = Model::init(config.model, config.seed)?;
    for (name, t) in reference.params.iter() {
        match params.get(name) {
            Some(p) if p.shape() == t.shape() => {}
            Some(p) => return Err(bad(format!("{name}: shape {:?}, config wants {:?}", p.shape(), t.shape()))),
            None => return Err(bad(format!("missing parameter {name}"))),
        }
    }
    if params.len() != reference.params.len() {
        return Err(bad("parameters not described by the stored config".into()));
    }
    Ok(TrainState {
        model: Model {
            config: config.model,
            params,
        },
        config,
        adam: AdamState { step, first, second },
        epochs_done,
    })
}

pub fn save(state: &TrainState, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, encode(state)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainState, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}
