//! Declarative run configuration: one JSON document drives every command.
//! Unknown keys are rejected; scalar CLI flags override file values; the
//! resolved document is echoed beside every run's outputs.

use movload::data::GenerationConfig;
use movload::error::{Error, Result};
use movload::fem::{
    beam_truss_params, MassModel, RayleighCoefficients, TrussParams,
};
use movload::mionet::{Activation, ArchConfig};
use movload::training::{SweepAxis, TrainingConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    /// "beam56" or "custom"
    pub preset: String,
    pub custom: Option<TrussParams>,
    pub mass_model: MassModel,
    pub rayleigh: RayleighCoefficients,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            preset: "beam56".to_string(),
            custom: None,
            mass_model: MassModel::Consistent,
            rayleigh: RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
        }
    }
}

impl StructureConfig {
    pub fn truss_params(&self) -> Result<TrussParams> {
        match self.preset.as_str() {
            "beam56" => Ok(beam_truss_params()),
            "custom" => self
                .custom
                .ok_or_else(|| Error::config("structure preset `custom` needs `custom` params")),
            other => Err(Error::config(format!("unknown structure preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSpec {
    pub neurons: usize,
    pub layers: usize,
    pub activation: String,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec { neurons: 200, layers: 6, activation: "relu".to_string() }
    }
}

impl ArchSpec {
    pub fn activation(&self) -> Result<Activation> {
        self.activation.parse()
    }

    pub fn arch(&self, n_branch: usize, spatial_dim: usize, n_out: usize) -> Result<ArchConfig> {
        if self.neurons == 0 || self.layers == 0 {
            return Err(Error::config("arch needs positive neurons and layers"));
        }
        Ok(ArchConfig::rectangular(
            n_branch,
            spatial_dim,
            self.neurons,
            self.layers,
            n_out,
            self.activation()?,
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSpec {
    /// times (s) for field snapshot exports
    pub snapshot_times: Vec<f64>,
    pub grid_factor: usize,
    /// "test" or "train"
    pub split: String,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            snapshot_times: vec![0.57, 1.52],
            grid_factor: 1,
            split: "test".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub epochs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            axes: vec![SweepAxis {
                name: "neurons".to_string(),
                values: vec![25.0, 50.0, 100.0, 200.0],
            }],
            epochs: 150,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub deterministic: bool,
    /// worker threads; 0 lets the runtime decide
    pub threads: usize,
    pub structure: StructureConfig,
    pub generation: GenerationConfig,
    pub arch: ArchSpec,
    pub training: TrainingConfig,
    pub evaluation: EvaluationSpec,
    pub sweep: SweepSpec,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read config {p:?}: {e}")))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::config(format!("config schema error: {e}")))
            }
        }
    }

    /// flag > file > default precedence for the scalar overrides
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        deterministic: bool,
        threads: Option<usize>,
        strategy: Option<&str>,
    ) -> Result<()> {
        if let Some(s) = seed {
            self.seed = Some(s);
        }
        if deterministic {
            self.deterministic = true;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(s) = strategy {
            self.training.strategy = s.parse()?;
        }
        // one seed drives generation, splits and training unless the
        // sections pin their own
        if let Some(s) = self.seed {
            self.generation.seed = s;
            self.training.seed = s;
        }
        Ok(())
    }

    pub fn echo(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::artifact(format!("config echo failed: {e}")))?;
        std::fs::write(out_dir.join("config.resolved.json"), json)?;
        Ok(())
    }
}
