//! Pipeline configuration: TOML file, environment overrides, resolved echo.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sphrtf::neural::{MagnitudeArch, OnsetArch, TrainConfig};
use sphrtf::pipeline::PrepareConfig;

/// Prefix of environment overrides. A leaf `a.b.c` of the resolved config
/// is overridden by `SPHRTF_A_B_C`, e.g. `SPHRTF_TRAIN_MAGNITUDE_EPOCHS=200`.
pub const ENV_PREFIX: &str = "SPHRTF";

pub const ECHO_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub root: PathBuf,
    /// Subject whose equivalent head radius defines factor 1; empty means
    /// the first manifest entry.
    pub reference_subject: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            reference_subject: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects: usize,
    pub seed: u64,
    pub radius_min_m: f64,
    pub radius_max_m: f64,
    pub sample_rate_hz: f64,
    pub direction_count: usize,
    pub ring_step_deg: f64,
    pub ir_length: usize,
    pub fft_length: usize,
    pub mesh_subdivisions: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 8,
            seed: 1,
            radius_min_m: 0.080,
            radius_max_m: 0.095,
            sample_rate_hz: 44_100.0,
            direction_count: 440,
            ring_step_deg: 10.0,
            ir_length: 256,
            fft_length: 1024,
            mesh_subdivisions: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub magnitude: TrainConfig,
    pub onset: TrainConfig,
    /// Train on targets minus the training-fold mean.
    pub center_targets: bool,
    /// Start both networks' final layers at zero.
    pub zero_output_init: bool,
    /// Validation subject for `train`; empty means the last manifest entry.
    pub validation_subject: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            magnitude: TrainConfig::default(),
            onset: TrainConfig { seed: 1, ..TrainConfig::default() },
            center_targets: true,
            zero_output_init: true,
            validation_subject: String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub magnitude: MagnitudeArch,
    pub onset: OnsetArch,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub synth: SynthConfig,
    pub prepare: PrepareConfig,
    pub train: TrainSection,
    pub network: NetworkSection,
}

impl PipelineConfig {
    /// Defaults, then the file (if any), then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut value = toml::Value::try_from(Self::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let file: toml::Value = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            merge(&mut value, file);
        }
        let env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(&format!("{ENV_PREFIX}_"))).collect();
        let mut used = vec![false; env.len()];
        apply_env(&mut value, ENV_PREFIX, &env, &mut used)?;
        if let Some((k, _)) = env.iter().zip(&used).find(|(_, &u)| !u).map(|(e, _)| e) {
            bail!("environment variable {k} does not name a configuration key");
        }
        let cfg: Self = value.try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare.validate()?;
        self.train.magnitude.validate()?;
        self.train.onset.validate()?;
        self.network.magnitude.validate()?;
        self.network.onset.validate()?;
        let s = &self.synth;
        if s.subjects == 0 || !(s.radius_min_m > 0.0 && s.radius_max_m >= s.radius_min_m) || !(s.sample_rate_hz > 0.0) {
            bail!("synth section needs at least one subject, positive radii and sample rate");
        }
        let m = &self.network.magnitude;
        if m.anthro_dim != self.prepare.anthro_columns.len() || self.network.onset.anthro_dim != m.anthro_dim {
            bail!(
                "network anthro_dim must equal the {} configured anthropometric columns",
                self.prepare.anthro_columns.len()
            );
        }
        if m.freq_dim != self.prepare.freq_count {
            bail!("network freq_dim {} differs from prepare.freq_count {}", m.freq_dim, self.prepare.freq_count);
        }
        let cap = (self.prepare.cap_max_index + 1).pow(2);
        if m.input_len != cap {
            bail!("network input_len {} differs from the {cap} cap coefficients", m.input_len);
        }
        if m.output_len() != (self.prepare.magnitude_order + 1).pow(2) {
            bail!("magnitude network output does not match the SH order");
        }
        if self.network.onset.output_len != (self.prepare.onset_order + 1).pow(2) {
            bail!("onset network output does not match the SH order");
        }
        Ok(())
    }

    /// Applies `--seed`: synthesis and both training seeds derive from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.train.magnitude.seed = seed;
        self.train.onset.seed = seed.wrapping_add(1);
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved configuration next to a run's outputs.
    pub fn echo(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let p = out_dir.join(ECHO_FILE);
        std::fs::write(&p, self.to_toml()?).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_env(value: &mut toml::Value, name: &str, env: &[(String, String)], used: &mut [bool]) -> Result<()> {
    if let toml::Value::Table(t) = value {
        for (k, v) in t.iter_mut() {
            apply_env(v, &format!("{name}_{}", k.to_uppercase()), env, used)?;
        }
        return Ok(());
    }
    let Some(i) = env.iter().position(|(k, _)| k == name) else {
        return Ok(());
    };
    used[i] = true;
    let raw = env[i].1.trim();
    let parsed = match value {
        toml::Value::String(_) => toml::Value::String(raw.to_string()),
        toml::Value::Float(_) => toml::Value::Float(raw.parse().with_context(|| format!("{name}: expected a number"))?),
        _ => {
            let doc: toml::Table = toml::from_str(&format!("v = {raw}")).with_context(|| format!("{name}: cannot parse '{raw}'"))?;
            doc["v"].clone()
        }
    };
    if std::mem::discriminant(&parsed) != std::mem::discriminant(value) {
        bail!("{name}: '{raw}' has the wrong type");
    }
    *value = parsed;
    Ok(())
}
