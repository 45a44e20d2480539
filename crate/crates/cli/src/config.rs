use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use multiband::estimation::{ComponentCount, DEFAULT_THRESHOLD};
use multiband::experiment::sources_for_ratio;
use multiband::spectral::RandomPsdParams;
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub t: usize,
    pub n: usize,
    /// Source count; when unset, derived from `ratios`.
    pub m: Option<usize>,
    pub ratios: Vec<f64>,
    pub seed: u64,
    pub trials: usize,
    pub max_blocks: usize,
    pub level_range: (f64, f64),
    pub width_range: (usize, usize),
    /// PSD support threshold as a fraction of the peak.
    pub threshold: f64,
    /// Real data: fixed component count.
    pub components: Option<usize>,
    /// Real data: variance fraction used when `components` is unset.
    pub variance_fraction: f64,
    pub out: PathBuf,
    pub workers: usize,
    pub ablate_drop_subband: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub observed: Option<PathBuf>,
    pub mixing: Option<PathBuf>,
    pub psd: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let psd = RandomPsdParams::default();
        ExperimentConfig {
            t: 512,
            n: 8,
            m: None,
            ratios: vec![0.25, 0.5, 0.75, 1.0],
            seed: 0,
            trials: 50,
            max_blocks: psd.max_blocks,
            level_range: psd.level_range,
            width_range: psd.width_range,
            threshold: DEFAULT_THRESHOLD,
            components: None,
            variance_fraction: 0.99,
            out: PathBuf::from("out"),
            workers: 0,
            ablate_drop_subband: None,
            corpus: None,
            observed: None,
            mixing: None,
            psd: None,
            samples: None,
            reference: None,
            estimate: None,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if self.t < 2 || !self.t.is_multiple_of(2) {
            return fail(format!("T must be even and at least 2, got {}", self.t));
        }
        if self.n == 0 {
            return fail("N must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if let Some(m) = self.m {
            if m == 0 || m > self.n {
                return fail(format!("M must lie in 1..={}, got {m}", self.n));
            }
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return fail(format!("ratio values must lie in (0, 1], got {r}"));
        }
        if self.ratios.is_empty() {
            return fail("ratios must not be empty".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            return fail(format!(
                "variance_fraction must lie in (0, 1], got {}",
                self.variance_fraction
            ));
        }
        Ok(())
    }

    pub fn psd_params(&self) -> RandomPsdParams {
        RandomPsdParams {
            max_blocks: self.max_blocks,
            level_range: self.level_range,
            width_range: self.width_range,
        }
    }

    /// `m` if set, otherwise derived from the first ratio.
    pub fn sources(&self) -> Result<usize, ConfigError> {
        match self.m {
            Some(m) => Ok(m),
            None => {
                sources_for_ratio(self.n, self.ratios[0]).map_err(|e| ConfigError(e.to_string()))
            }
        }
    }

    pub fn component_count(&self) -> ComponentCount {
        match self.components {
            Some(m) => ComponentCount::Fixed(m),
            None => ComponentCount::VarianceFraction(self.variance_fraction),
        }
    }

    pub fn require<'a>(
        &self,
        value: &'a Option<PathBuf>,
        key: &str,
    ) -> Result<&'a Path, ConfigError> {
        value.as_deref().ok_or_else(|| {
            ConfigError(format!("missing `{key}` path (flag --{key} or config key)"))
        })
    }
}
