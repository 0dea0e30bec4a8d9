use std::path::Path;

use qspeckle_core::{EnsembleSpec, Grid1D, PropagationMethod, SourceParams, WidthOptions};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    AngularSpectrum,
    Fresnel,
}

impl MethodName {
    pub fn method(self) -> PropagationMethod {
        match self {
            MethodName::AngularSpectrum => PropagationMethod::AngularSpectrum {
                zero_evanescent: true,
            },
            MethodName::Fresnel => PropagationMethod::Fresnel,
        }
    }
}

/// Parameters of the synthetic camera experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesConfig {
    pub z_cm: f64,
    pub n_frames: usize,
    pub pairs_per_frame: f64,
    #[serde(default)]
    pub dark_rate: f64,
    #[serde(default)]
    pub background_rate: f64,
    /// Square binning applied to the simulated map before sampling frames.
    #[serde(default = "default_bin")]
    pub bin: usize,
    #[serde(default = "default_blur_px")]
    pub blur_px: f64,
    #[serde(default = "default_exclusion")]
    pub exclusion_half_width: usize,
}

fn default_bin() -> usize {
    1
}

fn default_blur_px() -> f64 {
    1.0
}

fn default_exclusion() -> usize {
    15
}

fn default_gain() -> f64 {
    1.0
}

/// JSON run configuration. Units are part of every key name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lambda_nm: f64,
    pub sigma0_um: f64,
    pub sigma_minus_mm: f64,
    pub sigma_plus_mm: f64,
    pub grid_n: usize,
    pub pitch_um: f64,
    pub z_list_cm: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub method: MethodName,
    pub blur_um: f64,
    pub threshold: f64,
    #[serde(default = "default_gain")]
    pub phase_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FramesConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Desk-check preset: 512 samples of 20 µm and 50 realizations.
    pub fn small(mut self) -> Self {
        self.grid_n = 512;
        self.pitch_um = 20.0;
        self.realizations = 50;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.z_list_cm.is_empty() {
            return bad("z_list_cm must not be empty".into());
        }
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        if !(self.blur_um > 0.0) {
            return bad(format!("blur_um must be positive, got {}", self.blur_um));
        }
        let grid = self.grid()?;
        if self.sigma0_um < 3.0 * grid.pitch_um() {
            return bad(format!(
                "sigma0_um {} is below three pixels ({} um)",
                self.sigma0_um,
                3.0 * grid.pitch_um()
            ));
        }
        self.ensemble_spec()?
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(f) = &self.frames {
            if f.n_frames < 2 || f.bin == 0 || self.grid_n % f.bin != 0 {
                return bad("frames: need n_frames >= 2 and a bin factor dividing grid_n".into());
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid_n, self.pitch_um).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn source(&self) -> Result<SourceParams> {
        SourceParams::new(self.lambda_nm, self.sigma_minus_mm, self.sigma_plus_mm)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec {
            realizations: self.realizations,
            master_seed: self.seed,
            z_list_cm: self.z_list_cm.clone(),
            source: self.source()?,
            sigma0_um: self.sigma0_um,
            grid: self.grid()?,
            method: self.method.method(),
            phase_gain: self.phase_gain,
        })
    }

    pub fn width_options(&self) -> WidthOptions {
        WidthOptions {
            blur_um: self.blur_um,
            threshold: self.threshold,
            ..Default::default()
        }
    }

    /// Fail with an aliasing error if any distance exceeds `pitch * span / lambda`.
    pub fn check_aliasing(&self) -> Result<()> {
        let z_max = self.grid()?.aliasing_distance_cm(self.lambda_nm);
        match self.z_list_cm.iter().find(|&&z| z > z_max) {
            Some(z) => Err(CliError::Aliasing(format!(
                "z = {z} cm exceeds the aliasing bound {z_max:.2} cm for this grid"
            ))),
            None => Ok(()),
        }
    }
}
