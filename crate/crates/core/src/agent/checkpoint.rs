//! Binary checkpoint container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic          8 bytes   "RLACKPT\0"
//! format         u32       FORMAT_VERSION
//! layout         u32       signal-layout version the weights were trained against
//! seed           u64       training seed
//! config_len     u32       byte length of the JSON agent configuration
//! config         bytes     UTF-8 JSON
//! n_tensors      u32
//! per tensor:
//!   name_len     u32
//!   name         bytes     UTF-8
//!   ndim         u32
//!   dims         u64 x ndim
//!   data         f64 x prod(dims)
//! ```
//!
//! Tensors appear in the order the network creates them, which is fixed by
//! the configuration.

use std::io::Write;
use std::path::Path;

use super::model::{Agent, AgentConfig};
use super::params::ParamStore;
use crate::kinematics::Skeleton;
use crate::signals::SIGNAL_LAYOUT_VERSION;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RLACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: AgentConfig,
    pub layout_version: u32,
    pub train_seed: u64,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn of(agent: &Agent, train_seed: u64) -> Self {
        Checkpoint {
            config: agent.config().clone(),
            layout_version: SIGNAL_LAYOUT_VERSION,
            train_seed,
            params: agent.params().clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.layout_version.to_le_bytes());
        out.extend_from_slice(&self.train_seed.to_le_bytes());
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&(self.params.tensors().len() as u32).to_le_bytes());
        for t in self.params.tensors() {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a container, rejecting a signal layout other than the runtime's.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Validation("not a checkpoint file (bad magic)".into()));
        }
        let format = r.u32()?;
        if format != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint format {format}, expected {FORMAT_VERSION}"
            )));
        }
        let layout_version = r.u32()?;
        if layout_version != SIGNAL_LAYOUT_VERSION {
            return Err(Error::VersionMismatch {
                expected: SIGNAL_LAYOUT_VERSION,
                found: layout_version,
            });
        }
        let train_seed = r.u64()?;
        let n = r.u32()? as usize;
        let config: AgentConfig = serde_json::from_slice(r.take(n)?)?;
        let count = r.u32()?;
        let mut params = ParamStore::default();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Validation("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            if len > (bytes.len() - r.pos) / 8 {
                return Err(Error::Validation(format!("tensor '{name}' runs past end of file")));
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            if params.find(&name).is_some() {
                return Err(Error::Validation(format!("duplicate tensor '{name}'")));
            }
            params.add(name, &shape, data);
        }
        if r.pos != bytes.len() {
            return Err(Error::Validation(format!("{} trailing bytes after tensors", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            layout_version,
            train_seed,
            params,
        })
    }

    /// Rebuilds the agent, checking every tensor against the configuration.
    pub fn into_agent(self, skeleton: &Skeleton) -> Result<Agent> {
        let mut agent = Agent::new(self.config, skeleton)?;
        agent.load_params(self.params)?;
        Ok(agent)
    }

    /// Writes atomically: a sibling temporary file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()
    };
    write().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Validation("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentVariant;

    #[test]
    fn roundtrip_preserves_everything() {
        let s = Skeleton::canonical();
        for variant in [AgentVariant::Full, AgentVariant::SingleDynamicsSpace] {
            let a = Agent::new(AgentConfig { variant, seed: 11, ..AgentConfig::tiny() }, &s).unwrap();
            let c = Checkpoint::of(&a, 42);
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(back, c);
            let b = back.into_agent(&s).unwrap();
            assert_eq!(b.params(), a.params());
        }
    }

    #[test]
    fn layout_mismatch_names_both_versions() {
        let s = Skeleton::canonical();
        let a = Agent::new(AgentConfig::tiny(), &s).unwrap();
        let mut bytes = Checkpoint::of(&a, 0).to_bytes();
        bytes[12..16].copy_from_slice(&7u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { expected: 1, found: 7 }));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let s = Skeleton::canonical();
        let a = Agent::new(AgentConfig::tiny(), &s).unwrap();
        let bytes = Checkpoint::of(&a, 0).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());

        // A checkpoint for a different width fails the shape check on load.
        let mut c = Checkpoint::of(&a, 0);
        c.config.h_dim = 9;
        assert!(matches!(c.into_agent(&s), Err(Error::Validation(_))));
    }
}
