//! JSON checkpoints of agent networks.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{Agent, AgentKind, Mlp};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedNet {
    pub name: String,
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: AgentKind,
    /// Hex SHA-256 of the configuration the agent was trained with.
    pub config_hash: String,
    pub updates: u64,
    pub nets: Vec<NamedNet>,
}

/// Hex SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn capture(agent: &dyn Agent, config_hash: String) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: agent.kind(),
            config_hash,
            updates: agent.updates(),
            nets: agent
                .nets()
                .into_iter()
                .map(|(name, m)| NamedNet { name, sizes: m.sizes().to_vec(), params: m.params().to_vec() })
                .collect(),
        }
    }

    /// Loads the networks into `agent` after checking kind and shapes.
    pub fn restore(&self, agent: &mut dyn Agent) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.kind != agent.kind() {
            return Err(Error::Config(format!("checkpoint holds {} but agent is {}", self.kind.name(), agent.kind().name())));
        }
        let mut nets = Vec::with_capacity(self.nets.len());
        for n in &self.nets {
            nets.push((n.name.clone(), Mlp::from_parts(n.sizes.clone(), n.params.clone())?));
        }
        agent.load_nets(&nets)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_hex() {
        let h = config_hash("abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
