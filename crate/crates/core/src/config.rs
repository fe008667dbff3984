//! Run configuration, read from TOML. Every field has a default so an empty
//! file describes the TM01 nulling run on the straight antenna.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AntennaGeometry, AuxiliarySurfaces, ControlRegion, FrequencyInterpretation, WaveParameters};
use crate::kernels::{KernelParams, Normalization};
use crate::modes::ModeSpec;
use crate::solver::AlphaStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub wave: WaveConfig,
    pub waveguide: WaveguideConfig,
    pub antenna: AntennaConfig,
    pub surfaces: SurfaceConfig,
    pub control: Vec<ControlConfig>,
    pub modes: Vec<ModeConfig>,
    pub mesh: MeshConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            wave: WaveConfig::default(),
            waveguide: WaveguideConfig::default(),
            antenna: AntennaConfig::default(),
            surfaces: SurfaceConfig::default(),
            control: vec![ControlConfig::default()],
            modes: vec![ModeConfig::default()],
            mesh: MeshConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveConfig {
    /// Rad/s or Hz depending on `frequency_interpretation`.
    pub frequency: f64,
    pub frequency_interpretation: FrequencyInterpretation,
    pub c: f64,
    pub normalization: Normalization,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            frequency: 3.0e8,
            frequency_interpretation: FrequencyInterpretation::Angular,
            c: 299_792_458.0,
            normalization: Normalization::Standard4Pi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveguideConfig {
    pub radius: f64,
}

impl Default for WaveguideConfig {
    fn default() -> Self {
        Self { radius: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaConfig {
    pub half_length: f64,
    pub delta: f64,
    /// Zero selects the straight cylinder.
    pub taper_length: f64,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        Self {
            half_length: 0.3,
            delta: 0.05,
            taper_length: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    /// Defaults to `0.4 * delta`.
    pub source_standoff: Option<f64>,
    pub control_clearance: f64,
    pub truncation_half_length: f64,
    /// Row gain of the quiet wall block.
    pub quiet_weight: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            source_standoff: None,
            control_clearance: 0.02,
            truncation_half_length: 20.0,
            quiet_weight: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub x_center: f64,
    pub x_half: f64,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            x_center: 0.0,
            x_half: 0.1,
            r_inner: 0.13,
            r_outer: 0.16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    pub m: u32,
    pub n: u32,
    /// `[re, im]` in V/m.
    pub amplitude: [f64; 2],
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            m: 0,
            n: 1,
            amplitude: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Azimuthal points on every surface of revolution.
    pub azimuthal: usize,
    pub source_straight: usize,
    pub source_cap: usize,
    pub control_straight: usize,
    pub control_cap: usize,
    pub truncation_straight: usize,
    pub truncation_cap: usize,
    pub antenna_axial: usize,
    pub control_r: usize,
    pub control_x: usize,
    pub control_theta: usize,
    pub wall_axial: usize,
    pub wall_azimuthal: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            azimuthal: 24,
            source_straight: 64,
            source_cap: 10,
            control_straight: 32,
            control_cap: 6,
            truncation_straight: 80,
            truncation_cap: 12,
            antenna_axial: 60,
            control_r: 6,
            control_x: 8,
            control_theta: 24,
            wall_axial: 81,
            wall_azimuthal: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    MinControlError,
    Fixed,
    Discrepancy,
    LCorner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub strategy: StrategyName,
    /// Used by `fixed`.
    pub alpha: Option<f64>,
    /// Used by `discrepancy`.
    pub tau: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub alpha_count: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyName::MinControlError,
            alpha: None,
            tau: 1e-3,
            alpha_max: 1e-9,
            alpha_min: 1e-20,
            alpha_count: 12,
        }
    }
}

impl SolverConfig {
    pub fn strategy(&self) -> Result<AlphaStrategy> {
        Ok(match self.strategy {
            StrategyName::MinControlError => AlphaStrategy::MinControlError,
            StrategyName::Discrepancy => AlphaStrategy::Discrepancy { tau: self.tau },
            StrategyName::LCorner => AlphaStrategy::LCorner,
            StrategyName::Fixed => AlphaStrategy::Fixed {
                alpha: self
                    .alpha
                    .ok_or_else(|| Error::invalid("solver.alpha", "required by the fixed strategy"))?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Axial stations of the cross-section grids.
    pub slices: Vec<f64>,
    pub grid_radial: usize,
    pub grid_azimuthal: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            slices: vec![-0.028, 0.002, 0.023],
            grid_radial: 16,
            grid_azimuthal: 64,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn wave_parameters(&self) -> Result<WaveParameters> {
        WaveParameters::from_frequency(self.wave.frequency, self.wave.frequency_interpretation, self.wave.c)
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        KernelParams::with_normalization(self.wave_parameters()?.k(), self.wave.normalization)
    }

    pub fn antenna_geometry(&self) -> AntennaGeometry {
        AntennaGeometry::tapered(self.antenna.delta, self.antenna.half_length, self.antenna.taper_length)
    }

    pub fn control_regions(&self) -> Result<Vec<ControlRegion>> {
        self.control
            .iter()
            .map(|c| ControlRegion::new(c.x_center, c.x_half, c.r_inner, c.r_outer))
            .collect()
    }

    pub fn auxiliary_surfaces(&self) -> Result<AuxiliarySurfaces> {
        Ok(AuxiliarySurfaces {
            antenna: self.antenna_geometry(),
            source_standoff: self.surfaces.source_standoff.unwrap_or(0.4 * self.antenna.delta),
            control_regions: self.control_regions()?,
            control_clearance: self.surfaces.control_clearance,
            truncation_half_length: self.surfaces.truncation_half_length,
            waveguide_radius: self.waveguide.radius,
        })
    }

    pub fn mode_specs(&self) -> Result<Vec<ModeSpec>> {
        let wave = self.wave_parameters()?;
        self.modes
            .iter()
            .map(|m| ModeSpec::new(m.m, m.n, c64::new(m.amplitude[0], m.amplitude[1]), self.waveguide.radius, &wave))
            .collect()
    }

    /// Checks wave parameters, modes, nesting, and solver settings.
    pub fn validate(&self) -> Result<()> {
        self.wave_parameters()?;
        self.kernel_params()?;
        if self.modes.is_empty() {
            return Err(Error::Empty("mode list"));
        }
        self.mode_specs()?;
        self.auxiliary_surfaces()?.validate()?;
        if !(self.surfaces.quiet_weight > 0.0) {
            return Err(Error::invalid("surfaces.quiet_weight", "must be positive"));
        }
        let s = &self.solver;
        if !(s.alpha_max > s.alpha_min && s.alpha_min > 0.0) || s.alpha_count < 2 {
            return Err(Error::invalid(
                "solver alpha range",
                "need alpha_max > alpha_min > 0 and alpha_count >= 2",
            ));
        }
        s.strategy()?;
        if let Some(a) = s.alpha {
            if !(a > 0.0) {
                return Err(Error::invalid("solver.alpha", "must be positive"));
            }
        }
        if self.output.grid_radial < 2 || self.output.grid_azimuthal < 4 {
            return Err(Error::invalid("output grid", "need at least 2 radial and 4 azimuthal points"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_run() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let k = cfg.wave_parameters().unwrap().k();
        assert!((k - 3.0e8 / 299_792_458.0).abs() < 1e-15);
        assert_eq!(cfg.auxiliary_surfaces().unwrap().source_standoff, 0.4 * 0.05);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.control.push(ControlConfig {
            x_center: 1.0,
            ..ControlConfig::default()
        });
        cfg.solver.strategy = StrategyName::Fixed;
        cfg.solver.alpha = Some(1e-12);
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn cyclic_interpretation() {
        let cfg = RunConfig::from_toml_str("[wave]\nfrequency = 3.0e8\nfrequency_interpretation = \"cyclic\"\n").unwrap();
        let k = cfg.wave_parameters().unwrap().k();
        assert!((k - 2.0 * std::f64::consts::PI * 3.0e8 / 299_792_458.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_toml_str("[wave]\nbogus = 1\n"), Err(Error::Parse(_))));
        assert!(matches!(
            RunConfig::from_toml_str("[surfaces]\ncontrol_clearance = 0.09\n"),
            Err(Error::Nesting { .. })
        ));
        assert!(RunConfig::from_toml_str("[solver]\nstrategy = \"fixed\"\n").is_err());
        assert!(RunConfig::from_toml_str("[[modes]]\nm = 60\nn = 1\n").is_err());
    }
}
