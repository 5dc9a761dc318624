//! Run configuration. A TOML file names the command and supplies the
//! physical model sections; every section is optional and falls back to
//! the module defaults, so `command = "spectrum"` alone is a valid file.

use crate::dynamics::{PhononModel, PumpConfig, RelaxationParams};
use crate::error::{Error, Result};
use crate::levels::{
    build_level_scheme, parse_m_label, LevelScheme, PopulationState, SchemeConfig,
    StrengthModel, LEVELS,
};
use crate::spectrum::{
    AbsorptionModel, FrequencyGrid, IsotopeComposition, Lineshape, Spectrum,
    DEFAULT_PEAK_CALIBRATION,
};
use crate::{dynamics, levels};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Pump,
    Relax,
    Holeburn,
    Lifetime,
    Echo,
    Fit,
}

pub const COMMAND_NAMES: [&str; 7] =
    ["spectrum", "pump", "relax", "holeburn", "lifetime", "echo", "fit"];

impl Command {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "spectrum" => Ok(Command::Spectrum),
            "pump" => Ok(Command::Pump),
            "relax" => Ok(Command::Relax),
            "holeburn" => Ok(Command::Holeburn),
            "lifetime" => Ok(Command::Lifetime),
            "echo" => Ok(Command::Echo),
            "fit" => Ok(Command::Fit),
            other => Err(Error::InvalidConfig(format!(
                "unknown command '{other}' (expected one of {})",
                COMMAND_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Pump => "pump",
            Command::Relax => "relax",
            Command::Holeburn => "holeburn",
            Command::Lifetime => "lifetime",
            Command::Echo => "echo",
            Command::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub ground_spacings_hz: Option<Vec<f64>>,
    pub excited_spacings_hz: Option<Vec<f64>>,
    pub optical_origin_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StrengthsSection {
    pub delta_zero: Option<f64>,
    pub minus_one: Option<[f64; 2]>,
    pub plus_one: Option<[f64; 2]>,
    pub geometric_extension: Option<bool>,
}

/// Either the two Voigt components or a total width split into equal
/// parts; giving both is an error.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LineshapeSection {
    pub gaussian_fwhm_hz: Option<f64>,
    pub lorentzian_fwhm_hz: Option<f64>,
    pub total_fwhm_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub peak_calibration: Option<f64>,
    pub target_fraction: Option<f64>,
    pub impurity_offset_hz: Option<f64>,
    pub impurity_strength: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub start_hz: Option<f64>,
    pub stop_hz: Option<f64>,
    pub points: Option<usize>,
}

/// Initial population state. `kind` selects the constructor; the other
/// fields apply to the matching kind only.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationsSection {
    pub kind: Option<String>,
    pub temperature_k: Option<f64>,
    pub level: Option<String>,
    pub fraction: Option<f64>,
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub temperature_k: Option<f64>,
    /// Fixed relaxation rate; when absent the Eq.-1 law at the dynamics
    /// temperature supplies it.
    pub gamma_per_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxationSection {
    pub gamma_d: Option<f64>,
    pub gamma_r: Option<f64>,
    pub gamma_or: Option<f64>,
    pub splitting_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSection {
    pub band: Option<i32>,
    /// Raw per-unit-strength excitation rate; exclusive with
    /// `rate_over_gamma`.
    pub rate_per_s: Option<f64>,
    /// Drive on the weakest transition of the pumped band as a multiple of
    /// the relaxation rate (default 100, which polarizes to ~0.99).
    pub rate_over_gamma: Option<f64>,
    pub duration_s: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxSection {
    pub t_start_k: Option<f64>,
    pub t_stop_k: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HoleburnSection {
    /// "point" (default) or "trench".
    pub burn: Option<String>,
    /// Point burn frequency; defaults to the |+7/2> -> |+7/2> line.
    pub frequency_hz: Option<f64>,
    pub window_hz: Option<f64>,
    pub start_hz: Option<f64>,
    pub stop_hz: Option<f64>,
    pub decay: Option<HoleDecaySection>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HoleDecaySection {
    pub gamma_per_s: Option<f64>,
    pub duration_s: Option<f64>,
    pub samples: Option<usize>,
    /// |delta m| class -> cross-relaxation rate, keys "1", "2", "3".
    pub cross_relax: Option<std::collections::BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeSection {
    pub field_start_t: Option<f64>,
    pub field_stop_t: Option<f64>,
    pub points: Option<usize>,
    pub temperature_k: Option<f64>,
    pub plateau_s: Option<f64>,
    pub peak_field_t: Option<f64>,
    pub zeeman_slope_hz_per_t: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EchoSection {
    pub t2_s: Option<f64>,
    pub mims_x: Option<f64>,
    pub tau_start_s: Option<f64>,
    pub tau_stop_s: Option<f64>,
    pub tau_points: Option<usize>,
    /// Multiplicative noise sigma applied to the decay curve (seeded).
    pub noise: Option<f64>,
    pub linewidth_hz: Option<f64>,
    pub separation_s: Option<f64>,
    pub packets: Option<usize>,
    /// "gauss-hermite" (default) or "monte-carlo".
    pub sampler: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// "absorption" (default), "am" or "pm".
    pub response: Option<String>,
    pub carrier_hz: Option<f64>,
    pub modulation_start_hz: Option<f64>,
    pub modulation_stop_hz: Option<f64>,
    pub modulation_points: Option<usize>,
    pub path_cm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesEntry {
    pub time_s: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// "echo-decay", "eq1", "populations" or "timeseries".
    pub driver: Option<String>,
    pub input: Option<PathBuf>,
    pub series: Vec<SeriesEntry>,
    pub mask_t_min_k: Option<f64>,
    pub mask_t_max_k: Option<f64>,
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub scheme: SchemeSection,
    pub strengths: StrengthsSection,
    pub lineshape: LineshapeSection,
    pub model: ModelSection,
    pub grid: GridSection,
    pub populations: PopulationsSection,
    pub dynamics: DynamicsSection,
    pub relaxation: RelaxationSection,
    pub pump: PumpSection,
    pub relax: RelaxSection,
    pub holeburn: HoleburnSection,
    pub lifetime: LifetimeSection,
    pub echo: EchoSection,
    pub spectrum: SpectrumSection,
    pub fit: FitSection,
}

fn spacing_array(values: &[f64], which: &str) -> Result<[f64; LEVELS - 1]> {
    if values.len() != LEVELS - 1 {
        return Err(Error::InvalidConfig(format!(
            "{which} needs {} entries, got {}",
            LEVELS - 1,
            values.len()
        )));
    }
    let mut a = [0.0; LEVELS - 1];
    a.copy_from_slice(values);
    Ok(a)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn level_scheme(&self) -> Result<LevelScheme> {
        let defaults = SchemeConfig::default();
        let cfg = SchemeConfig {
            ground_spacings: match &self.scheme.ground_spacings_hz {
                Some(v) => spacing_array(v, "scheme.ground_spacings_hz")?,
                None => defaults.ground_spacings,
            },
            excited_spacings: match &self.scheme.excited_spacings_hz {
                Some(v) => spacing_array(v, "scheme.excited_spacings_hz")?,
                None => defaults.excited_spacings,
            },
            optical_origin: self.scheme.optical_origin_hz.unwrap_or(defaults.optical_origin),
        };
        build_level_scheme(&cfg)
    }

    pub fn strength_model(&self) -> StrengthModel {
        let d = StrengthModel::default();
        StrengthModel {
            delta_zero: self.strengths.delta_zero.unwrap_or(d.delta_zero),
            minus_one: self.strengths.minus_one.map(|[a, b]| (a, b)).unwrap_or(d.minus_one),
            plus_one: self.strengths.plus_one.map(|[a, b]| (a, b)).unwrap_or(d.plus_one),
            geometric_extension: self
                .strengths
                .geometric_extension
                .unwrap_or(d.geometric_extension),
        }
    }

    pub fn lineshape(&self) -> Result<Lineshape> {
        let s = &self.lineshape;
        match (s.total_fwhm_hz, s.gaussian_fwhm_hz.or(s.lorentzian_fwhm_hz)) {
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "lineshape: give either total_fwhm_hz or the two components, not both".into(),
            )),
            (Some(total), None) => Lineshape::from_total_fwhm_equal_parts(total),
            (None, Some(_)) => Lineshape::new(
                s.gaussian_fwhm_hz.unwrap_or(0.0),
                s.lorentzian_fwhm_hz.unwrap_or(0.0),
            ),
            (None, None) => Ok(Lineshape::default()),
        }
    }

    pub fn absorption_model(&self) -> Result<AbsorptionModel> {
        let scheme = self.level_scheme()?;
        let strengths = self.strength_model();
        let table = levels::transition_table(&scheme, &strengths)?;
        let iso_default = IsotopeComposition::default();
        let isotope = IsotopeComposition {
            target_fraction: self.model.target_fraction.unwrap_or(iso_default.target_fraction),
            impurity_offset: self
                .model
                .impurity_offset_hz
                .unwrap_or(iso_default.impurity_offset),
            impurity_strength: self
                .model
                .impurity_strength
                .unwrap_or(iso_default.impurity_strength),
        };
        AbsorptionModel::new(
            scheme,
            table,
            self.lineshape()?,
            self.model.peak_calibration.unwrap_or(DEFAULT_PEAK_CALIBRATION),
            isotope,
        )
    }

    /// Frequency grid; the default covers all three bands plus the
    /// impurity line with margin.
    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(
            self.grid.start_hz.unwrap_or(-1.6e9),
            self.grid.stop_hz.unwrap_or(1.6e9),
            self.grid.points.unwrap_or(1601),
        )
    }

    pub fn temperature(&self) -> f64 {
        self.dynamics.temperature_k.unwrap_or(1.4)
    }

    pub fn initial_populations(&self, scheme: &LevelScheme) -> Result<PopulationState> {
        let p = &self.populations;
        let kind = p.kind.as_deref().unwrap_or("thermal");
        match kind {
            "thermal" => dynamics::thermal_equilibrium(
                scheme,
                p.temperature_k.unwrap_or_else(|| self.temperature()),
            ),
            "uniform" => Ok(PopulationState::uniform()),
            "polarized" => {
                let level = p.level.as_deref().unwrap_or("+7/2");
                PopulationState::polarized(parse_m_label(level)?, p.fraction.unwrap_or(0.95))
            }
            "explicit" => {
                let v = p.fractions.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("populations: explicit kind needs fractions".into())
                })?;
                if v.len() != LEVELS {
                    return Err(Error::InvalidConfig(format!(
                        "populations.fractions needs {LEVELS} entries, got {}",
                        v.len()
                    )));
                }
                let mut a = [0.0; LEVELS];
                a.copy_from_slice(v);
                PopulationState::new(a)
            }
            other => Err(Error::InvalidConfig(format!(
                "populations.kind '{other}' (expected thermal, uniform, polarized or explicit)"
            ))),
        }
    }

    pub fn relaxation_params(&self) -> RelaxationParams {
        let d = RelaxationParams::default();
        RelaxationParams {
            gamma_d: self.relaxation.gamma_d.unwrap_or(d.gamma_d),
            gamma_r: self.relaxation.gamma_r.unwrap_or(d.gamma_r),
            gamma_or: self.relaxation.gamma_or.unwrap_or(d.gamma_or),
            splitting_hz: self.relaxation.splitting_hz.unwrap_or(d.splitting_hz),
        }
    }

    /// Relaxation rate: explicit override, else the Eq.-1 law at the
    /// dynamics temperature.
    pub fn gamma(&self) -> Result<f64> {
        match self.dynamics.gamma_per_s {
            Some(g) if g.is_finite() && g >= 0.0 => Ok(g),
            Some(g) => Err(Error::InvalidConfig(format!(
                "dynamics.gamma_per_s must be finite and >= 0, got {g}"
            ))),
            None => self.relaxation_params().gamma(self.temperature()),
        }
    }

    pub fn pump_config(&self) -> Result<PumpConfig> {
        if self.pump.rate_per_s.is_some() && self.pump.rate_over_gamma.is_some() {
            return Err(Error::InvalidConfig(
                "pump: give rate_per_s or rate_over_gamma, not both".into(),
            ));
        }
        let band = self.pump.band.unwrap_or(1);
        let strengths = self.strength_model();
        let rate = match self.pump.rate_per_s {
            Some(r) => r,
            None => {
                // rate_over_gamma sets the drive on the weakest transition
                // of the band, so every pumped line runs at >= that multiple
                let mut min_s = f64::INFINITY;
                for g in 0..LEVELS {
                    if !(0..LEVELS as i32).contains(&(g as i32 + band)) {
                        continue;
                    }
                    if let Ok(s) = strengths.strength(band, g) {
                        if s > 0.0 {
                            min_s = min_s.min(s);
                        }
                    }
                }
                if !min_s.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "pump: band {band} has no driven transitions"
                    )));
                }
                self.pump.rate_over_gamma.unwrap_or(100.0) * self.gamma()? / min_s
            }
        };
        let mut cfg = PumpConfig::new(band, rate)?;
        cfg.strengths = strengths.clone();
        cfg.branching = crate::dynamics::BranchingModel::FromStrengths(strengths);
        Ok(cfg)
    }

    pub fn phonon_model(&self) -> PhononModel {
        let d = PhononModel::default();
        PhononModel {
            zeeman_slope_hz_per_t: self
                .lifetime
                .zeeman_slope_hz_per_t
                .unwrap_or(d.zeeman_slope_hz_per_t),
            temperature_k: self.lifetime.temperature_k.unwrap_or(d.temperature_k),
            cross_relax_plateau_s: self.lifetime.plateau_s.unwrap_or(d.cross_relax_plateau_s),
            low_field_peak_t: self.lifetime.peak_field_t.unwrap_or(d.low_field_peak_t),
        }
    }
}

/// Spectra synthesized through a config, for tests and the CLI.
pub fn synthesize_configured_spectrum(config: &RunConfig) -> Result<Spectrum> {
    let model = config.absorption_model()?;
    let populations = config.initial_populations(&model.scheme)?;
    let grid = config.frequency_grid()?;
    crate::spectrum::synthesize_absorption(&model, &populations, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_supplies_defaults_everywhere() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert!(cfg.command.is_none());
        assert_eq!(cfg.seed(), 0);
        let scheme = cfg.level_scheme().unwrap();
        assert_eq!(scheme.ground_gap(0), 994.7e6);
        let shape = cfg.lineshape().unwrap();
        assert!((shape.total_fwhm() - 150.0e6).abs() < 1.0);
        assert_eq!(cfg.temperature(), 1.4);
        let gamma = cfg.gamma().unwrap();
        assert!((gamma - 1.26e-3).abs() < 1e-12);
    }

    #[test]
    fn command_and_sections_parse() {
        let text = r#"
command = "spectrum"
seed = 42

[scheme]
optical_origin_hz = 1.0e9

[lineshape]
total_fwhm_hz = 100e6

[populations]
kind = "polarized"
level = "+7/2"
fraction = 0.95

[grid]
start_hz = -2e9
stop_hz = 2e9
points = 801
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.command, Some(Command::Spectrum));
        assert_eq!(cfg.seed(), 42);
        let scheme = cfg.level_scheme().unwrap();
        assert_eq!(scheme.optical_origin(), 1.0e9);
        let pops = cfg.initial_populations(&scheme).unwrap();
        assert!((pops.fraction(7) - 0.95).abs() < 1e-12);
        let grid = cfg.frequency_grid().unwrap();
        assert_eq!(grid.points, 801);
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        assert!(matches!(
            RunConfig::from_toml_str("commandd = \"spectrum\""),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[lineshape]\nwidth = 1.0"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn conflicting_lineshape_fields_rejected() {
        let cfg = RunConfig::from_toml_str(
            "[lineshape]\ntotal_fwhm_hz = 1e6\ngaussian_fwhm_hz = 1e6",
        )
        .unwrap();
        assert!(matches!(cfg.lineshape(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn conflicting_pump_rates_rejected() {
        let cfg = RunConfig::from_toml_str(
            "[pump]\nrate_per_s = 1.0\nrate_over_gamma = 100.0",
        )
        .unwrap();
        assert!(matches!(cfg.pump_config(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn pump_rate_defaults_to_hundred_gamma_on_weakest_line() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        let pump = cfg.pump_config().unwrap();
        let gamma = cfg.gamma().unwrap();
        // weakest line of the default +1 band has relative strength 0.031
        assert!((pump.rate - 100.0 * gamma / 0.031).abs() < 1e-9 * pump.rate);
        assert_eq!(pump.band, 1);
        let raw = RunConfig::from_toml_str("[pump]\nrate_per_s = 7.5").unwrap();
        assert!((raw.pump_config().unwrap().rate - 7.5).abs() < 1e-15);
    }

    #[test]
    fn explicit_populations_validate_length_and_sum() {
        let cfg = RunConfig::from_toml_str(
            "[populations]\nkind = \"explicit\"\nfractions = [1.0, 0.0]",
        )
        .unwrap();
        let scheme = cfg.level_scheme().unwrap();
        assert!(matches!(
            cfg.initial_populations(&scheme),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn configured_spectrum_matches_direct_synthesis() {
        let cfg = RunConfig::from_toml_str(
            "[populations]\nkind = \"uniform\"\n\n[grid]\npoints = 257",
        )
        .unwrap();
        let spec = synthesize_configured_spectrum(&cfg).unwrap();
        assert_eq!(spec.len(), 257);
        let model = cfg.absorption_model().unwrap();
        let direct = crate::spectrum::synthesize_absorption(
            &model,
            &PopulationState::uniform(),
            &cfg.frequency_grid().unwrap(),
        )
        .unwrap();
        assert_eq!(spec.values, direct.values);
    }
}
