//! Binary checkpoint container. The byte layout is described in
//! `docs/checkpoint-format.md`.

use std::io::{Read, Write};
use std::path::Path;

use super::{NetConfig, Network, Role};
use crate::error::{Error, Result};
use crate::routing::ProblemKind;

pub const MAGIC: &[u8; 8] = b"RIMPCKPT";
pub const VERSION: u32 = 1;

/// An actor, optionally its critic, and the epoch they were saved after.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ProblemKind,
    pub epoch: u32,
    pub actor: Network,
    pub critic: Option<Network>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.kind {
            ProblemKind::Tsp => 0,
            ProblemKind::Cvrp => 1,
        });
        out.extend_from_slice(&self.epoch.to_le_bytes());
        let cfg = self.actor.config();
        for v in [cfg.d_model, cfg.n_blocks, cfg.ff_hidden, cfg.head_hidden, cfg.feature_dim] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [cfg.clip, cfg.compat_scale, cfg.bn_eps, cfg.bn_momentum] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let nets: Vec<&Network> = std::iter::once(&self.actor).chain(self.critic.as_ref()).collect();
        out.push(nets.len() as u8);
        for net in nets {
            out.push(match net.role() {
                Role::Actor => 0,
                Role::Critic => 1,
            });
            let specs = net.tensors().iter().map(|t| (t, net.weights()));
            let running = net.running_tensors().iter().map(|t| (t, net.running_stats()));
            let all: Vec<_> = specs.chain(running).collect();
            out.extend_from_slice(&(all.len() as u32).to_le_bytes());
            for (spec, buf) in all {
                out.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
                out.extend_from_slice(spec.name.as_bytes());
                out.extend_from_slice(&(spec.rows as u32).to_le_bytes());
                out.extend_from_slice(&(spec.cols as u32).to_le_bytes());
                for v in &buf[spec.offset..spec.offset + spec.rows * spec.cols] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = match r.u8()? {
            0 => ProblemKind::Tsp,
            1 => ProblemKind::Cvrp,
            k => return Err(Error::Checkpoint(format!("unknown problem kind {k}"))),
        };
        let epoch = r.u32()?;
        let config = NetConfig {
            d_model: r.u32()? as usize,
            n_blocks: r.u32()? as usize,
            ff_hidden: r.u32()? as usize,
            head_hidden: r.u32()? as usize,
            feature_dim: r.u32()? as usize,
            clip: r.f64()?,
            compat_scale: r.f64()?,
            bn_eps: r.f64()?,
            bn_momentum: r.f64()?,
        };
        config
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let count = r.u8()?;
        let mut nets = Vec::new();
        for _ in 0..count {
            let role = match r.u8()? {
                0 => Role::Actor,
                1 => Role::Critic,
                k => return Err(Error::Checkpoint(format!("unknown role {k}"))),
            };
            let mut net = Network::zeros(config, role)?;
            let mut weights = net.weights().to_vec();
            let mut running = net.running_stats().to_vec();
            let expected: Vec<_> = net
                .tensors()
                .iter()
                .map(|t| (t.clone(), false))
                .chain(net.running_tensors().iter().map(|t| (t.clone(), true)))
                .collect();
            let n = r.u32()? as usize;
            if n != expected.len() {
                return Err(Error::Checkpoint(format!(
                    "{role:?} has {n} tensors, expected {}",
                    expected.len()
                )));
            }
            for (spec, is_running) in expected {
                let name_len = r.u16()? as usize;
                let name = String::from_utf8(r.take(name_len)?.to_vec())
                    .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
                let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
                if name != spec.name || rows != spec.rows || cols != spec.cols {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name} ({rows}x{cols}) does not match {} ({}x{})",
                        spec.name, spec.rows, spec.cols
                    )));
                }
                let buf = if is_running { &mut running } else { &mut weights };
                for v in &mut buf[spec.offset..spec.offset + rows * cols] {
                    *v = r.f64()?;
                }
            }
            net.replace_buffers(weights, running)?;
            if !net.is_finite() {
                return Err(Error::Checkpoint(format!("{role:?} holds non-finite values")));
            }
            nets.push(net);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let mut it = nets.into_iter();
        let actor = it
            .next()
            .filter(|n| n.role() == Role::Actor)
            .ok_or_else(|| Error::Checkpoint("missing actor".into()))?;
        let critic = it.next();
        if critic.as_ref().is_some_and(|c| c.role() != Role::Critic) || it.next().is_some() {
            return Err(Error::Checkpoint("unexpected network list".into()));
        }
        Ok(Checkpoint {
            kind,
            epoch,
            actor,
            critic,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
