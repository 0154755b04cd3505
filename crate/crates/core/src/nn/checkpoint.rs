//! Binary checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "BAPSRLCK" | version u32 | config sha256 [32]
//! epoch u64 | env steps u64 | K u32
//! input u32 | hidden u32 | num_costs u32
//! n u64 | params f64×n
//! adam step u64 | m f64×n | v f64×n
//! lambda f64×K | rho f64×K | limits f64×K
//! value norm: count f64 | mean f64 | var f64
//! config toml: len u64 | utf-8 bytes
//! sha256 of everything above [32]
//! ```
//!
//! Floats are stored by bit pattern so a save → load → save cycle is
//! byte-identical.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::value_norm::ValueNorm;
use super::{ActorCritic, NetShape};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::types::{LagrangeState, NUM_CONSTRAINTS};

const MAGIC: &[u8; 8] = b"BAPSRLCK";
const VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u64,
    pub env_steps: u64,
    pub config: Config,
    pub net: ActorCritic,
    pub optimizer: Adam,
    pub lagrange: LagrangeState,
    pub value_norm: ValueNorm,
}

/// Per-coordinate learning rates: the critic rate on value rows, the policy
/// rate everywhere else.
pub fn learning_rates(net: &ActorCritic, config: &Config) -> Vec<f64> {
    let mut lr = vec![config.train.policy_lr; net.params().len()];
    for r in net.value_param_ranges() {
        for v in &mut lr[r] {
            *v = config.train.critic_lr;
        }
    }
    lr
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.net.shape();
        let mut b = Vec::with_capacity(64 + 24 * self.net.params().len());
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        b.extend_from_slice(&self.config.hash_bytes());
        put_u64(&mut b, self.epoch);
        put_u64(&mut b, self.env_steps);
        put_u32(&mut b, NUM_CONSTRAINTS as u32);
        put_u32(&mut b, shape.input as u32);
        put_u32(&mut b, shape.hidden as u32);
        put_u32(&mut b, shape.num_costs as u32);
        put_u64(&mut b, self.net.params().len() as u64);
        put_f64s(&mut b, self.net.params());
        put_u64(&mut b, self.optimizer.step);
        put_f64s(&mut b, &self.optimizer.m);
        put_f64s(&mut b, &self.optimizer.v);
        put_f64s(&mut b, &self.lagrange.lambda);
        put_f64s(&mut b, &self.lagrange.rho);
        put_f64s(&mut b, &self.lagrange.limits);
        put_f64s(&mut b, &[self.value_norm.count, self.value_norm.mean, self.value_norm.var]);
        let toml = self.config.to_toml();
        put_u64(&mut b, toml.len() as u64);
        b.extend_from_slice(toml.as_bytes());
        let digest: [u8; 32] = Sha256::digest(&b).into();
        b.extend_from_slice(&digest);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err("file too short".into());
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        let digest: [u8; 32] = Sha256::digest(body).into();
        if digest.as_slice() != trailer {
            return Err("checksum mismatch (file corrupted or truncated)".into());
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let stored_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let epoch = r.u64()?;
        let env_steps = r.u64()?;
        let k = r.u32()? as usize;
        if k != NUM_CONSTRAINTS {
            return Err(format!("checkpoint has {k} constraints, expected {NUM_CONSTRAINTS}"));
        }
        let shape = NetShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n = r.u64()? as usize;
        if n != shape.num_params() {
            return Err(format!("parameter count {n} does not match layer shapes {shape:?}"));
        }
        let params = r.f64s(n)?;
        let step = r.u64()?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        let lambda = r.f64s(k)?.try_into().unwrap();
        let rho = r.f64s(k)?.try_into().unwrap();
        let limits = r.f64s(k)?.try_into().unwrap();
        let vn = r.f64s(3)?;
        let value_norm = ValueNorm {
            count: vn[0],
            mean: vn[1],
            var: vn[2],
        };
        let len = r.u64()? as usize;
        let toml = std::str::from_utf8(r.take(len)?).map_err(|e| format!("config text: {e}"))?;
        if r.pos != body.len() {
            return Err("trailing bytes after config".into());
        }
        let config = Config::from_toml_str(toml, &[]).map_err(|e| format!("embedded config: {e}"))?;
        if config.hash_bytes() != stored_hash {
            return Err("embedded config does not match its recorded hash".into());
        }
        let net = ActorCritic::from_flat(shape, params).map_err(|e| e.to_string())?;
        let mut optimizer = Adam::new(learning_rates(&net, &config));
        optimizer.step = step;
        optimizer.m = m;
        optimizer.v = v;
        Ok(Self {
            epoch,
            env_steps,
            config,
            net,
            optimizer,
            lagrange: LagrangeState { lambda, rho, limits },
            value_norm,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        })
    }
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(b: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        b.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or("unexpected end of file")?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}
