//! Checkpoint directory: one parameter file per network plus `manifest.txt`.

use std::path::Path;

use crate::agent::{AgentConfig, AgentError, AgentNets, NetShape};
use crate::config::RunConfig;
use crate::net::{deserialize_params, serialize_params, NetworkParams};

use super::TrainError;

const PARTS: [&str; 3] = ["policy", "critic_trunk", "critic_head"];

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

/// Writes the networks that exist and a manifest recording config hash and steps.
pub fn save_checkpoint(dir: &Path, config: &RunConfig, imitation: Option<&AgentNets>, task: Option<&AgentNets>) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut manifest = format!(
        "config_hash = {}\nmode = {}\nnetwork = {}\ninstance_norm = {}\nresidual = {}\ngrid = {}\nv_bins = {}\n",
        config.hash(),
        config.mode.name(),
        config.agent.network.name(),
        config.agent.instance_norm,
        config.agent.residual,
        config.env.grid,
        config.agent.v_bins
    );
    for (prefix, nets) in [("imitation", imitation), ("task", task)] {
        let Some(nets) = nets else { continue };
        for (part, params) in PARTS.iter().zip([&nets.policy, &nets.trunk, &nets.head]) {
            let path = dir.join(format!("{prefix}_{part}.mmnp"));
            std::fs::write(&path, serialize_params(params)).map_err(io(&path))?;
        }
        manifest.push_str(&format!("{prefix}_step = {}\n", nets.steps));
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(io(&path))
}

/// Key/value pairs of a checkpoint manifest.
pub fn read_manifest(dir: &Path) -> Result<Vec<(String, String)>, TrainError> {
    let path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&path).map_err(io(&path))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// Loads one network set, checking every parameter shape against `agent`.
pub fn load_nets(dir: &Path, prefix: &str, agent: &AgentConfig, shape: NetShape) -> Result<Option<AgentNets>, TrainError> {
    let first = dir.join(format!("{prefix}_policy.mmnp"));
    if !first.exists() {
        return Ok(None);
    }
    let mut parts: Vec<NetworkParams> = Vec::new();
    for part in PARTS {
        let path = dir.join(format!("{prefix}_{part}.mmnp"));
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        parts.push(deserialize_params(&bytes).map_err(AgentError::from)?);
    }
    let support = if shape.goal_conditioned { agent.imitation_support()? } else { agent.task_support()? };
    let [policy, trunk, head]: [NetworkParams; 3] = parts.try_into().expect("three parts");
    let nets = AgentNets::from_params(shape, support, agent.settings(), policy, trunk, head)
        .map_err(|e| AgentError::DimMismatch(format!("checkpoint {prefix} networks do not fit the configured variant: {e}")))?;
    Ok(Some(nets))
}
