//! Run configuration and reproducible random substreams.
//!
//! A [`RunConfig`] is the single source of truth for a run: the RNG seed,
//! the output directory, and one section per study. Configs load from a
//! strict TOML file — unknown keys are rejected so a typo cannot silently
//! fall back to a default — and every stochastic component derives its
//! randomness from [`rng_substream`], so two runs with an identical config
//! produce identical results.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::channel::LinkBudgetParams;
use crate::corridor::{CorridorError, CorridorModel};
use crate::localization::{AntennaMode, SweepConfig, UavRadioParams, DEFAULT_SLICE_SPACING_M};
use crate::mobility::{HandoverParams, TrajectoryConfig};
use crate::optimizer::GaConfig;
use crate::scenario::LayoutParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
}

/// FNV-1a 64-bit hash; maps a substream label to a ChaCha stream id.
fn fnv1a64(text: &str) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x1_0000_0001_b3;
    text.bytes().fold(OFFSET_BASIS, |hash, byte| {
        (hash ^ u64::from(byte)).wrapping_mul(PRIME)
    })
}

/// Named, independent random substream for `(seed, label)`.
///
/// Every call with the same arguments returns a generator in the same
/// state; different labels select different ChaCha streams of the same
/// seed, so studies can consume randomness independently without
/// coordinating draw counts.
///
/// # Panics
/// Panics if `label` is empty — substreams must be named.
pub fn rng_substream(seed: u64, label: &str) -> ChaCha8Rng {
    assert!(!label.is_empty(), "rng substream label must be nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(label));
    rng
}

/// Hexagonal layout parameters shared by the coverage, optimizer, and
/// handover studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub isd_m: f64,
    pub tiers: u32,
    pub carrier_hz: f64,
    pub bs_power_dbm: f64,
    pub bs_height_m: f64,
    pub downtilt_deg: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let p = LayoutParams::new(1000.0, 2);
        Self {
            isd_m: p.isd_m,
            tiers: p.tiers,
            carrier_hz: p.carrier_hz,
            bs_power_dbm: p.bs_power_dbm,
            bs_height_m: p.bs_height_m,
            downtilt_deg: p.downtilt_deg,
        }
    }
}

impl ScenarioSection {
    pub fn layout_params(&self) -> LayoutParams {
        LayoutParams {
            isd_m: self.isd_m,
            tiers: self.tiers,
            carrier_hz: self.carrier_hz,
            bs_power_dbm: self.bs_power_dbm,
            bs_height_m: self.bs_height_m,
            downtilt_deg: self.downtilt_deg,
        }
    }
}

/// Coverage-map study: grid slice and link budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageSection {
    pub height_m: f64,
    /// Grid pitch; `None` selects the layout-scaled default (isd/40).
    pub spacing_m: Option<f64>,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub ground_reflection_enabled: bool,
    pub reflection_coefficient: f64,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            height_m: 100.0,
            spacing_m: None,
            noise_figure_db: 7.0,
            bandwidth_hz: 10.0e6,
            ground_reflection_enabled: true,
            reflection_coefficient: -1.0,
        }
    }
}

impl CoverageSection {
    /// Link budget for the downlink studies under the given layout.
    pub fn link_budget(&self, scenario: &ScenarioSection) -> LinkBudgetParams {
        let mut params = LinkBudgetParams::new(scenario.carrier_hz, scenario.bs_power_dbm);
        params.noise_figure_db = self.noise_figure_db;
        params.bandwidth_hz = self.bandwidth_hz;
        params.ground_reflection_enabled = self.ground_reflection_enabled;
        params.reflection_coefficient = Complex64::new(self.reflection_coefficient, 0.0);
        params
    }
}

/// Uptilt optimization: GA hyperparameters plus how much coarser the
/// fitness grid is than the reporting grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub ga: GaConfig,
    /// Fitness evaluates on a grid this many times coarser than the final
    /// reporting grid (1.0 = same grid).
    pub fitness_spacing_factor: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            fitness_spacing_factor: 2.0,
        }
    }
}

/// Handover study: flight kinematics, A3 rule, and shadow fading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilitySection {
    pub height_m: f64,
    pub speed_kmph: f64,
    pub step_s: f64,
    pub window_s: f64,
    pub n_windows: usize,
    pub ttt_s: f64,
    pub hom_db: f64,
    pub sf_sigma_db: f64,
    pub sf_ar_coefficient: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        Self {
            height_m: 100.0,
            speed_kmph: 60.0,
            step_s: 0.02,
            window_s: 180.0,
            n_windows: 2000,
            ttt_s: 0.040,
            hom_db: 2.0,
            sf_sigma_db: 4.0,
            sf_ar_coefficient: 0.82,
        }
    }
}

impl MobilitySection {
    pub fn trajectory(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            height_m: self.height_m,
            speed_kmph: self.speed_kmph,
            step_s: self.step_s,
            window_s: self.window_s,
            n_windows: self.n_windows,
        }
    }

    pub fn handover(&self) -> HandoverParams {
        HandoverParams {
            ttt_s: self.ttt_s,
            hom_db: self.hom_db,
        }
    }
}

/// Localization study: sensor rectangle, corridor slices, radio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationSection {
    pub dx_m: f64,
    pub dy_m: f64,
    pub heights_m: Vec<f64>,
    pub mode: AntennaMode,
    pub spacing_m: f64,
    pub radio: UavRadioParams,
}

impl Default for LocalizationSection {
    fn default() -> Self {
        Self {
            dx_m: 500.0,
            dy_m: 1000.0,
            heights_m: vec![100.0, 200.0, 300.0, 400.0, 500.0],
            mode: AntennaMode::Mimo,
            spacing_m: DEFAULT_SLICE_SPACING_M,
            radio: UavRadioParams::default(),
        }
    }
}

impl LocalizationSection {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            dx_m: self.dx_m,
            dy_m: self.dy_m,
            heights_m: self.heights_m.clone(),
            mode: self.mode,
            spacing_m: self.spacing_m,
            params: self.radio.clone(),
        }
    }
}

/// Corridor rule checking: prism lattice geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorridorSection {
    pub ni: i32,
    pub nj: i32,
    pub prism_size_m: [f64; 3],
    pub min_safety_distance_m: f64,
    /// Cells `[i, j]` where the middle (hover) layer exists.
    pub intersections: Vec<[i32; 2]>,
}

impl Default for CorridorSection {
    fn default() -> Self {
        Self {
            ni: 5,
            nj: 5,
            prism_size_m: [30.0, 30.0, 30.0],
            min_safety_distance_m: 45.0,
            intersections: Vec::new(),
        }
    }
}

impl CorridorSection {
    pub fn model(&self) -> Result<CorridorModel, CorridorError> {
        CorridorModel::new(
            self.ni,
            self.nj,
            self.prism_size_m,
            self.min_safety_distance_m,
            self.intersections.iter().map(|&[i, j]| (i, j)),
        )
    }
}

/// Antenna pattern dump: tilt and angular resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternSection {
    pub tilt_deg: f64,
    pub step_deg: f64,
}

impl Default for PatternSection {
    fn default() -> Self {
        Self {
            tilt_deg: 6.0,
            step_deg: 0.25,
        }
    }
}

/// Complete run configuration. The seed is the only required field; every
/// section falls back to the study defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub coverage: CoverageSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub mobility: MobilitySection,
    #[serde(default)]
    pub localization: LocalizationSection,
    #[serde(default)]
    pub corridor: CorridorSection,
    #[serde(default)]
    pub pattern: PatternSection,
}

impl RunConfig {
    /// Defaults for every section with the given seed.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            output_dir: None,
            scenario: ScenarioSection::default(),
            coverage: CoverageSection::default(),
            optimizer: OptimizerSection::default(),
            mobility: MobilitySection::default(),
            localization: LocalizationSection::default(),
            corridor: CorridorSection::default(),
            pattern: PatternSection::default(),
        }
    }
}

/// Parses a strict TOML configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, Box<toml::de::Error>> {
    toml::from_str(text).map_err(Box::new)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}
