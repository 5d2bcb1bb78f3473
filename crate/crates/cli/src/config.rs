//! JSON run configuration. Precedence: built-in defaults, then the file
//! given with `--config`, then individual command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specconsist::{LossKind, SolverOptions, StftConfig, WindowKind};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gla,
    Gd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub window_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
}

impl Default for StftSection {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 128,
            window_kind: WindowKind::Hann,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Largest delay, in samples, tried by the aligned SNR.
    pub search_radius: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { search_radius: 512 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub inputs: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub downmix: bool,
    /// Phase compared against by every loss except `ec`.
    pub target_phase: Option<PathBuf>,
    /// Starting phase for the `noisy` and `provided` inits.
    pub init_phase: Option<PathBuf>,
    /// Sample rate assigned to audio reconstructed from a matrix file.
    pub matrix_sample_rate: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stft: StftSection,
    pub method: Method,
    pub loss: LossKind,
    pub solver: SolverOptions,
    pub metrics: MetricsSection,
    pub io: IoSection,
    /// Overrides `solver.seed` when set.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stft: StftSection::default(),
            method: Method::Gd,
            loss: LossKind::Ec,
            solver: SolverOptions::default(),
            metrics: MetricsSection::default(),
            io: IoSection {
                matrix_sample_rate: 16_000,
                ..Default::default()
            },
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    /// Folds `seed` into the solver options and checks every section, so a
    /// bad value fails before any audio is touched.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(seed) = self.seed {
            self.solver.seed = seed;
        }
        self.seed = Some(self.solver.seed);
        self.stft_config()?;
        self.solver.validate()?;
        if self.io.matrix_sample_rate == 0 {
            return Err(CliError::Usage(
                "io.matrix_sample_rate must be positive".into(),
            ));
        }
        if self.method == Method::Gd && self.loss == LossKind::Ec && self.io.target_phase.is_some()
        {
            return Err(CliError::Usage(
                "the ec loss does not take a target phase".into(),
            ));
        }
        Ok(self)
    }

    pub fn stft_config(&self) -> Result<StftConfig, CliError> {
        Ok(StftConfig::new(
            self.stft.window_len,
            self.stft.hop,
            self.stft.window_kind,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use specconsist::InitKind;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default().resolve().unwrap();
        assert_eq!(cfg.stft.window_len, 512);
        assert_eq!(cfg.stft.hop, 128);
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"stft": {"hop": 64}, "solver": {"max_iters": 7, "init": "zeros"}, "seed": 3}"#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(cfg.stft.window_len, 512);
        assert_eq!(cfg.stft.hop, 64);
        assert_eq!(cfg.solver.max_iters, 7);
        assert_eq!(cfg.solver.init, InitKind::Zeros);
        assert_eq!(cfg.solver.seed, 3);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"stft": {"hops": 64}}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"stft": {"hop": 100}}"#).unwrap();
        assert!(matches!(cfg.resolve(), Err(CliError::Core(_))));
        let cfg = RunConfig::from_json(r#"{"io": {"target_phase": "p.scmx"}}"#).unwrap();
        assert!(matches!(cfg.resolve(), Err(CliError::Usage(_))));
    }
}
