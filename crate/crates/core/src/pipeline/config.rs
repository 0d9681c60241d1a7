use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::box_aug::{ExchangeConfig, ExchangeMode};
use crate::error::{Error, Result};
use crate::image_aug::ImageAugConfig;
use crate::selection::{kept_count, FilterConfig, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    #[default]
    Mmd,
    Cosine,
}

impl From<MetricName> for Metric {
    fn from(m: MetricName) -> Self {
        match m {
            MetricName::Mmd => Metric::Mmd,
            MetricName::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoxExchange {
    #[default]
    Off,
    Direct,
    Mixture,
    Gaussian,
}

/// When box exchange runs: on the finished composite, or on the raw input
/// images before they are mosaicked or blended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeStage {
    #[default]
    Composite,
    Inputs,
}

/// Domain whose boxes are pasted into the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DonorDomain {
    #[default]
    Target,
    Source,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Builtin,
    /// Path template; `{epoch}` is replaced by the 1-based epoch index.
    File(String),
}

impl std::str::FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "builtin" {
            return Ok(ProviderSpec::Builtin);
        }
        match s.strip_prefix("file:") {
            Some(t) if !t.is_empty() => Ok(ProviderSpec::File(t.to_string())),
            _ => Err(Error::Config(format!(
                "provider must be 'builtin' or 'file:<path template>', got '{s}'"
            ))),
        }
    }
}

/// Every knob of the epoch loop. Loaded from a TOML key-value file; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub epochs: u32,
    pub candidates_per_epoch: usize,
    pub k: f64,
    pub metric: MetricName,
    pub mix_splice: f64,
    pub mix_reallocation: f64,
    pub mix_splice_reallocation: f64,
    pub box_exchange: BoxExchange,
    pub exchange_probability: f64,
    pub exchange_stage: ExchangeStage,
    pub exchange_donor: DonorDomain,
    pub alpha: f64,
    pub alpha_m: f64,
    pub canvas_side: u32,
    pub min_area_ratio: f64,
    pub seed: Option<u64>,
    pub provider: String,
    pub provider_timeout_secs: f64,
    pub poll_interval_ms: u64,
    pub frozen_pool: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            candidates_per_epoch: 100,
            k: 0.8,
            metric: MetricName::Mmd,
            mix_splice: 1.0,
            mix_reallocation: 1.0,
            mix_splice_reallocation: 1.0,
            box_exchange: BoxExchange::Off,
            exchange_probability: 0.5,
            exchange_stage: ExchangeStage::Composite,
            exchange_donor: DonorDomain::Target,
            alpha: 1.0,
            alpha_m: 1.0,
            canvas_side: 640,
            min_area_ratio: 0.2,
            seed: None,
            provider: "builtin".into(),
            provider_timeout_secs: 600.0,
            poll_interval_ms: 1000,
            frozen_pool: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Overrides one key. `value` is read as a TOML value, falling back to a
    /// plain string (so `metric=cosine` and `provider=file:/x` both work).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {}", e.message())))?;
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{pair}' is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.candidates_per_epoch < 1 {
            return fail("candidates_per_epoch must be >= 1".into());
        }
        self.filter().validate()?;
        if kept_count(self.candidates_per_epoch, self.k) < 1 {
            return fail(format!(
                "shrinkage ratio eliminates all candidates (floor({} * {}) = 0)",
                self.candidates_per_epoch, self.k
            ));
        }
        let mix = self.mix_weights();
        if mix.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || mix.iter().sum::<f64>() <= 0.0 {
            return fail(format!("mix weights must be non-negative with a positive sum, got {mix:?}"));
        }
        self.image_aug().validate()?;
        if !(self.alpha_m > 0.0 && self.alpha_m.is_finite()) {
            return fail(format!("alpha_m must be positive, got {}", self.alpha_m));
        }
        if !(0.0..=1.0).contains(&self.exchange_probability) {
            return fail(format!("exchange_probability must be in [0, 1], got {}", self.exchange_probability));
        }
        if !(self.provider_timeout_secs >= 0.0 && self.provider_timeout_secs.is_finite()) {
            return fail("provider_timeout_secs must be a non-negative number".into());
        }
        self.provider_spec()?;
        Ok(())
    }

    pub fn mix_weights(&self) -> [f64; 3] {
        [self.mix_splice, self.mix_reallocation, self.mix_splice_reallocation]
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            k: self.k,
            metric: self.metric.into(),
        }
    }

    pub fn image_aug(&self) -> ImageAugConfig {
        ImageAugConfig {
            canvas_side: self.canvas_side,
            min_area_ratio: self.min_area_ratio,
            alpha: self.alpha,
        }
    }

    pub fn exchange(&self) -> Option<ExchangeConfig> {
        let mode = match self.box_exchange {
            BoxExchange::Off => return None,
            BoxExchange::Direct => ExchangeMode::Direct,
            BoxExchange::Mixture => ExchangeMode::Mixture { alpha_m: self.alpha_m },
            BoxExchange::Gaussian => ExchangeMode::Gaussian,
        };
        Some(ExchangeConfig {
            mode,
            p_exchange: self.exchange_probability,
        })
    }

    pub fn provider_spec(&self) -> Result<ProviderSpec> {
        self.provider.parse()
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (--seed or 'seed' in the config file)".into()))
    }
}
