use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classifier::RuleKind;
use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ResidualMode};

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    #[default]
    Gray,
    Rgb,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Gray => 1,
            ChannelMode::Rgb => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Gray => "gray",
            ChannelMode::Rgb => "rgb",
        }
    }
}

/// Preprocessing and decision rule for `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub kind: RuleKind,
    /// Class label; defaults to the model's last class.
    pub positive_class: Option<String>,
    pub threshold: f64,
    pub patch_size: usize,
    pub channels: ChannelMode,
    /// `[width, height]` to box-downsample every image to.
    pub downsample: Option<[usize; 2]>,
    /// Must match the setting the model was trained with.
    pub subtract_patch_mean: bool,
    pub residual_mode: ResidualMode,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            kind: RuleKind::Ratio,
            positive_class: None,
            threshold: 0.5,
            patch_size: 20,
            channels: ChannelMode::Gray,
            downsample: None,
            subtract_patch_mean: false,
            residual_mode: ResidualMode::SharedSubtracted,
        }
    }
}

/// Image layout of a synthetic dataset written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthLayout {
    /// Training mosaics per class; the class's training patches are split
    /// evenly across them.
    pub train_images_per_class: usize,
    pub test_images_per_class: usize,
    /// Test mosaics are `test_tiles x test_tiles` patches.
    pub test_tiles: usize,
    /// Pixel value is `0.5 + intensity_scale * sample`, clamped to `[0, 1]`.
    pub intensity_scale: f64,
}

impl Default for SynthLayout {
    fn default() -> Self {
        SynthLayout {
            train_images_per_class: 4,
            test_images_per_class: 4,
            test_tiles: 5,
            intensity_scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub spec: SynthSpec,
    pub layout: SynthLayout,
    /// Written next to the manifest as the suggested training config.
    pub hyperparams: Option<Hyperparams>,
}

/// Hyperparameter grid for `cv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub grid: Vec<Hyperparams>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 3,
            seed: 0,
            grid: vec![Hyperparams::default()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparams_from_partial_toml() {
        let hp: Hyperparams = toml::from_str("eta = 2.5\nk_shared = 3\n").unwrap();
        assert_eq!(hp.eta, 2.5);
        assert_eq!(hp.k_shared, 3);
        assert_eq!(hp.tau, Hyperparams::default().tau);
        assert!(toml::from_str::<Hyperparams>("etaa = 1.0").is_err());
    }

    #[test]
    fn rule_config_parses() {
        let r: RuleConfig =
            toml::from_str("kind = \"region\"\nthreshold = 3.0\ndownsample = [272, 205]\n")
                .unwrap();
        assert_eq!(r.kind, RuleKind::Region);
        assert_eq!(r.downsample, Some([272, 205]));
    }

    #[test]
    fn cv_grid_parses() {
        let c: CvConfig =
            toml::from_str("folds = 4\n[[grid]]\neta = 1.0\n[[grid]]\neta = 2.0\n").unwrap();
        assert_eq!(c.grid.len(), 2);
        assert_eq!(c.grid[1].eta, 2.0);
    }
}
