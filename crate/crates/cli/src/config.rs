//! Run configuration: built-in presets, then a TOML file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use minimap_oracle::dataset::SplitSpec;
use minimap_oracle::model::ModelConfig;
use minimap_oracle::synth::SimConfig;
use minimap_oracle::train::TrainConfig;
use minimap_oracle::vision::VisionConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Everything a run used, written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: Option<u64>,
    pub preset: String,
    pub threads: Option<usize>,
    pub sim: SimConfig,
    pub split: SplitSpec,
    pub vision: VisionConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Inputs and outputs by role.
    pub paths: BTreeMap<String, PathBuf>,
    /// Command-specific settings (round counts, sample sizes, ...).
    pub args: BTreeMap<String, serde_json::Value>,
}

/// Top-level keys a config file may set.
const SECTIONS: [&str; 5] = ["sim", "split", "vision", "model", "train"];
const SCALARS: [&str; 2] = ["seed", "preset"];

fn merge(base: &mut toml::Value, overlay: &toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// `base` with the keys of `overlay` (if any) laid over it.
fn layered<T: Serialize + DeserializeOwned>(base: T, overlay: Option<&toml::Value>, section: &str) -> Result<T> {
    let Some(overlay) = overlay else { return Ok(base) };
    let mut v = toml::Value::try_from(&base).with_context(|| format!("serializing default [{section}]"))?;
    merge(&mut v, overlay);
    v.try_into().with_context(|| format!("invalid [{section}] section"))
}

pub struct Layers {
    file: toml::Table,
}

impl Layers {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", p.display()))?;
                for k in table.keys() {
                    if !SECTIONS.contains(&k.as_str()) && !SCALARS.contains(&k.as_str()) {
                        bail!("unknown key '{k}' in config {} (expected one of {SCALARS:?} or sections {SECTIONS:?})", p.display());
                    }
                }
                table
            }
        };
        Ok(Self { file })
    }

    /// Resolve presets and file values; flags are applied afterwards by the caller.
    pub fn resolve(&self, command: &str, seed: Option<u64>, preset: Option<&str>, threads: Option<usize>) -> Result<RunConfig> {
        let file_seed = match self.file.get("seed") {
            None => None,
            Some(v) => Some(v.as_integer().filter(|&s| s >= 0).context("'seed' must be a non-negative integer")? as u64),
        };
        let file_preset = self.file.get("preset").map(|v| v.as_str().context("'preset' must be a string")).transpose()?;
        let preset = preset.or(file_preset).unwrap_or("desk").to_string();
        let section = |name: &str| self.file.get(name);
        let mut rc = RunConfig {
            command: command.to_string(),
            seed: seed.or(file_seed),
            threads,
            sim: layered(SimConfig::default(), section("sim"), "sim")?,
            split: layered(SplitSpec::default(), section("split"), "split")?,
            vision: layered(VisionConfig::default(), section("vision"), "vision")?,
            model: layered(ModelConfig::preset(&preset)?, section("model"), "model")?,
            train: layered(TrainConfig::default(), section("train"), "train")?,
            preset,
            paths: BTreeMap::new(),
            args: BTreeMap::new(),
        };
        if let Some(s) = rc.seed {
            rc.sim.seed = s;
            rc.train.seed = s;
        }
        Ok(rc)
    }
}

impl RunConfig {
    pub fn path(&mut self, role: &str, p: &Path) {
        self.paths.insert(role.to_string(), p.to_path_buf());
    }

    pub fn arg(&mut self, key: &str, v: impl Serialize) {
        self.args.insert(key.to_string(), serde_json::to_value(v).expect("plain value"));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
