//! Little-endian binary checkpoints.
//!
//! Layout: magic `COSTEREO`, u32 version, u8 kind (0 = parameters only,
//! 1 = full train state), the five u32 architecture fields, a kind-specific
//! meta block, then a u32 tensor count followed by per-tensor records of
//! `(u32 name length, name bytes, u32 rank, u64 dims..., f32 values...)`.
//!
//! Train states store both networks (`a.*`, `b.*`) plus Adam moments
//! (`opt.{a,b}.{m,v}.*`) using the same record format.

use std::collections::HashMap;
use std::path::Path;

use costereo_autograd::Tensor;

use crate::config::ArchConfig;
use crate::error::{Error, Result};
use crate::net::{layer_shapes, NetworkParams};
use crate::trainer::{AdamState, TrainState};

const MAGIC: &[u8; 8] = b"COSTEREO";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn arch(&mut self, a: &ArchConfig) {
        for v in [a.in_channels, a.feat_channels, a.agg_channels, a.refine_channels, a.d_max_coarse] {
            self.u32(v as u32);
        }
    }

    fn tensor(&mut self, name: &str, shape: &[usize], values: &[f32]) {
        self.u32(name.len() as u32);
        self.buf.extend_from_slice(name.as_bytes());
        self.u32(shape.len() as u32);
        for &d in shape {
            self.u64(d as u64);
        }
        for &v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "unexpected end of file at offset {} (wanted {} more bytes)",
                self.pos, n
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn arch(&mut self) -> Result<ArchConfig> {
        Ok(ArchConfig {
            in_channels: self.u32()? as usize,
            feat_channels: self.u32()? as usize,
            agg_channels: self.u32()? as usize,
            refine_channels: self.u32()? as usize,
            d_max_coarse: self.u32()? as usize,
        })
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>)> {
        let name_len = self.u32()? as usize;
        if name_len > 4096 {
            return Err(Error::Checkpoint(format!("implausible name length {name_len}")));
        }
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("non-UTF8 tensor name".into()))?;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel > 64 << 20 {
            return Err(Error::Checkpoint(format!("implausible tensor size {numel}")));
        }
        let raw = self.take(numel * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, shape, values))
    }
}

fn write_header(w: &mut Writer, kind: u8, arch: &ArchConfig) {
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(kind);
    w.arch(arch);
}

fn read_header(r: &mut Reader) -> Result<(u8, ArchConfig)> {
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let arch = r.arch()?;
    Ok((kind, arch))
}

fn read_tensor_blocks(r: &mut Reader) -> Result<HashMap<String, (Vec<usize>, Vec<f32>)>> {
    let count = r.u32()? as usize;
    let mut map = HashMap::with_capacity(count);
    for _ in 0..count {
        let (name, shape, values) = r.tensor()?;
        map.insert(name, (shape, values));
    }
    Ok(map)
}

fn assemble_params(
    arch: &ArchConfig,
    seed: u64,
    prefix: &str,
    blocks: &HashMap<String, (Vec<usize>, Vec<f32>)>,
) -> Result<NetworkParams<f32>> {
    let tensors = layer_shapes(arch)
        .into_iter()
        .map(|(name, expected_shape)| {
            let key = format!("{prefix}{name}");
            let (shape, values) = blocks
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if *shape != expected_shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {key} has shape {shape:?}, expected {expected_shape:?}"
                )));
            }
            Ok((name, Tensor::param(shape, values.clone())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkParams::from_parts(*arch, seed, tensors))
}

fn assemble_moments(
    params: &NetworkParams<f32>,
    prefix: &str,
    blocks: &HashMap<String, (Vec<usize>, Vec<f32>)>,
    step: u64,
) -> Result<AdamState> {
    let grab = |which: &str, name: &str, numel: usize| -> Result<Vec<f32>> {
        let key = format!("{prefix}{which}.{name}");
        let (_, values) = blocks
            .get(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing moment {key}")))?;
        if values.len() != numel {
            return Err(Error::Checkpoint(format!("moment {key} has wrong size")));
        }
        Ok(values.clone())
    };
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, t) in params.tensors() {
        m.push(grab("m", name, t.numel())?);
        v.push(grab("v", name, t.numel())?);
    }
    Ok(AdamState { m, v, step })
}

/// Parameters-only checkpoint.
pub fn save_params(path: &Path, params: &NetworkParams<f32>) -> Result<()> {
    let mut w = Writer::new();
    write_header(&mut w, 0, &params.arch);
    w.u64(params.init_seed);
    w.u32(params.tensors().len() as u32);
    for (name, t) in params.tensors() {
        w.tensor(name, t.shape(), t.values());
    }
    std::fs::write(path, w.buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<NetworkParams<f32>> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    let (kind, arch) = read_header(&mut r)?;
    if kind != 0 {
        return Err(Error::Checkpoint(format!("expected parameter file (kind 0), got kind {kind}")));
    }
    let seed = r.u64()?;
    let blocks = read_tensor_blocks(&mut r)?;
    assemble_params(&arch, seed, "", &blocks)
}

/// Full train state: both networks plus optimizer moments and schedule
/// position.
pub fn save_train_state(path: &Path, state: &TrainState) -> Result<()> {
    let mut w = Writer::new();
    write_header(&mut w, 1, &state.params_a.arch);
    w.u32(state.epoch as u32);
    w.f64(state.r);
    w.u64(state.params_a.init_seed);
    w.u64(state.params_b.init_seed);
    w.u64(state.adam_a.step);
    w.u64(state.adam_b.step);
    let count = 2 * state.params_a.tensors().len()
        + 2 * state.adam_a.m.len()
        + 2 * state.adam_b.m.len();
    w.u32(count as u32);
    for (prefix, params, adam) in [
        ("a", &state.params_a, &state.adam_a),
        ("b", &state.params_b, &state.adam_b),
    ] {
        for (i, (name, t)) in params.tensors().iter().enumerate() {
            w.tensor(&format!("{prefix}.{name}"), t.shape(), t.values());
            w.tensor(&format!("opt.{prefix}.m.{name}"), t.shape(), &adam.m[i]);
            w.tensor(&format!("opt.{prefix}.v.{name}"), t.shape(), &adam.v[i]);
        }
    }
    std::fs::write(path, w.buf)?;
    Ok(())
}

pub fn load_train_state(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    let (kind, arch) = read_header(&mut r)?;
    if kind != 1 {
        return Err(Error::Checkpoint(format!("expected train state (kind 1), got kind {kind}")));
    }
    let epoch = r.u32()? as usize;
    let r_val = r.f64()?;
    let seed_a = r.u64()?;
    let seed_b = r.u64()?;
    let step_a = r.u64()?;
    let step_b = r.u64()?;
    let blocks = read_tensor_blocks(&mut r)?;
    let params_a = assemble_params(&arch, seed_a, "a.", &blocks)?;
    let params_b = assemble_params(&arch, seed_b, "b.", &blocks)?;
    let adam_a = assemble_moments(&params_a, "opt.a.", &blocks, step_a)?;
    let adam_b = assemble_moments(&params_b, "opt.b.", &blocks, step_b)?;
    Ok(TrainState { params_a, params_b, adam_a, adam_b, epoch, r: r_val })
}

/// Network A from either checkpoint kind, for evaluation.
pub fn load_eval_params(path: &Path) -> Result<NetworkParams<f32>> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    let (kind, _) = read_header(&mut r)?;
    drop(r);
    match kind {
        0 => load_params(path),
        1 => Ok(load_train_state(path)?.params_a),
        k => Err(Error::Checkpoint(format!("unknown checkpoint kind {k}"))),
    }
}
