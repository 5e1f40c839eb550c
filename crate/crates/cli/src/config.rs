use std::path::Path;

use affordkit::annotation::{MatcherConfig, PipelineConfig, SkinConfig};
use affordkit::geometry::RansacParams;
use affordkit::losses::LossConfig;
use affordkit::metrics::EvaluationConfig;
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

/// Annotation settings other than RANSAC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub skin: SkinConfig,
    pub matcher: MatcherConfig,
    pub mask_dilation: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::with_seed(0);
        Self {
            skin: p.skin,
            matcher: p.matcher,
            mask_dilation: p.mask_dilation,
        }
    }
}

/// The `--config` file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub evaluation: EvaluationConfig,
    pub loss: LossConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ransac: Option<RansacParams>,
    pub pipeline: PipelineSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Applies `--seed`, which overrides the config's RANSAC seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.ransac = Some(match self.ransac {
                Some(r) => RansacParams { rng_seed: seed, ..r },
                None => RansacParams::with_seed(seed),
            });
        }
        self
    }

    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let Some(ransac) = self.ransac else {
            bail!("annotation needs a RANSAC seed: pass --seed or set ransac.rng_seed in the config");
        };
        ransac.validate()?;
        Ok(PipelineConfig {
            skin: self.pipeline.skin,
            matcher: self.pipeline.matcher,
            ransac,
            mask_dilation: self.pipeline.mask_dilation,
        })
    }
}
