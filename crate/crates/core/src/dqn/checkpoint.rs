//! Binary checkpoint of a [`DqnAgent`].
//!
//! Layout, all integers and reals little-endian:
//!
//! | bytes          | content                                              |
//! |----------------|------------------------------------------------------|
//! | 8              | magic `NOMADQN\0`                                    |
//! | 4              | `u32` header length `H`                              |
//! | H              | UTF-8 JSON [`CheckpointHeader`]                      |
//! | 8 x param_count x 4 | `f64` sections in order: eval, target, adam m, adam v |
//!
//! Each section walks the layers in order, writing the `out x in` weight
//! matrix row-major followed by the bias vector.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{AgentConfig, DqnAgent};
use super::network::NetworkParameters;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NOMADQN\0";
pub const FORMAT_VERSION: u32 = 1;
pub const SECTIONS: [&str; 4] = ["eval", "target", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub param_count: usize,
    pub sections: Vec<String>,
    pub agent: AgentConfig,
    pub optimizer_step: u64,
    pub gradient_steps: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub epsilon: f64,
    /// Free-form caller data, e.g. the environment configuration.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(agent: &DqnAgent, metadata: serde_json::Value, mut out: W) -> Result<()> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        layer_sizes: agent.eval.layer_sizes(),
        param_count: agent.eval.param_count(),
        sections: SECTIONS.iter().map(|s| s.to_string()).collect(),
        agent: agent.cfg.clone(),
        optimizer_step: agent.opt.step,
        gradient_steps: agent.gradient_steps,
        env_steps: agent.env_steps,
        episodes: agent.episodes,
        epsilon: agent.epsilon,
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(8 * 4 * header.param_count);
    for net in [&agent.eval, &agent.target, &agent.opt.m, &agent.opt.v] {
        for x in net.values() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(DqnAgent, CheckpointHeader)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", header.format_version)));
    }
    header.agent.validate()?;
    let template = NetworkParameters::zeros(&header.layer_sizes)?;
    if template.param_count() != header.param_count {
        return Err(Error::Checkpoint("parameter count does not match layer sizes".into()));
    }
    let mut nets = Vec::with_capacity(SECTIONS.len());
    let mut raw = vec![0u8; 8 * header.param_count];
    for name in SECTIONS {
        input
            .read_exact(&mut raw)
            .map_err(|e| Error::Checkpoint(format!("section {name}: {e}")))?;
        let flat: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut net = template.clone();
        net.set_flat(&flat)?;
        nets.push(net);
    }
    let v = nets.pop().expect("four sections");
    let m = nets.pop().expect("four sections");
    let target = nets.pop().expect("four sections");
    let eval = nets.pop().expect("four sections");
    if !eval.all_finite() {
        return Err(Error::Checkpoint("non-finite evaluation weights".into()));
    }
    let mut agent = DqnAgent::from_parts(header.agent.clone(), eval, target, ChaCha8Rng::seed_from_u64(0));
    agent.opt.m = m;
    agent.opt.v = v;
    agent.opt.step = header.optimizer_step;
    agent.gradient_steps = header.gradient_steps;
    agent.env_steps = header.env_steps;
    agent.episodes = header.episodes;
    agent.epsilon = header.epsilon;
    Ok((agent, header))
}

pub fn save(agent: &DqnAgent, metadata: serde_json::Value, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(agent, metadata, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(DqnAgent, CheckpointHeader)> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
