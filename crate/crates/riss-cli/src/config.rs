//! Experiment configuration: structured text (TOML) with blocks mirroring the
//! library modules. Defaults encode the measurement-campaign settings so a
//! bare config with just `[run]` reproduces the reference scenarios.

use serde::{Deserialize, Serialize};

use riss::geometry::{Scenario, tx_position_from_azimuth};
use riss::link::FrameConfig;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunBlock,
    #[serde(default)]
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub design: DesignBlock,
    #[serde(default)]
    pub sensing: SensingBlock,
    #[serde(default)]
    pub link: LinkBlock,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub experiment: String,
    /// Master seed; labeled sub-seeds are derived from it.
    pub seed: Option<u64>,
    /// Output directory; overrides the RISS_OUTPUT_ROOT-based default.
    pub output: Option<String>,
}

fn d_frequency() -> f64 {
    3.5e9
}
fn d_center_distance() -> f64 {
    3.5
}
fn d_grid() -> usize {
    10
}
fn d_na() -> usize {
    4
}
fn d_target_deg() -> f64 {
    10.0
}
fn d_interferer_deg() -> f64 {
    -20.0
}
fn d_tx_power() -> f64 {
    1.0
}
fn d_tx_antennas() -> usize {
    1
}
fn d_spacing_ratio() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    #[serde(default = "d_frequency")]
    pub frequency: f64,
    #[serde(default = "d_center_distance")]
    pub center_distance: f64,
    #[serde(default = "d_grid")]
    pub nx: usize,
    #[serde(default = "d_grid")]
    pub ny: usize,
    #[serde(default = "d_na")]
    pub na: usize,
    #[serde(default = "d_target_deg")]
    pub target_deg: f64,
    #[serde(default = "d_interferer_deg")]
    pub interferer_deg: f64,
    #[serde(default = "d_tx_power")]
    pub tx_power: f64,
    #[serde(default = "d_tx_antennas")]
    pub tx_antennas: usize,
    /// Passive element pitch over wavelength.
    #[serde(default = "d_spacing_ratio")]
    pub spacing_over_wavelength: f64,
}

impl Default for ScenarioBlock {
    fn default() -> ScenarioBlock {
        toml::from_str("").expect("empty scenario block fills from defaults")
    }
}

impl ScenarioBlock {
    /// Index of the interferer in `Scenario::tx`.
    pub const INTERFERER: usize = 0;
    /// Index of the target in `Scenario::tx`.
    pub const TARGET: usize = 1;

    pub fn build(&self) -> Scenario {
        let mut sc = Scenario::reference(self.frequency, self.center_distance);
        sc.nx = self.nx;
        sc.ny = self.ny;
        sc.na = self.na;
        sc.spacing = sc.wavelength() * self.spacing_over_wavelength;
        sc.tx[Self::INTERFERER].position =
            tx_position_from_azimuth(self.interferer_deg.to_radians(), self.center_distance);
        sc.tx[Self::TARGET].position =
            tx_position_from_azimuth(self.target_deg.to_radians(), self.center_distance);
        for tx in sc.tx.iter_mut() {
            tx.power = self.tx_power;
            tx.antennas = self.tx_antennas;
        }
        sc
    }
}

fn d_tau() -> f64 {
    0.1
}
fn d_eta() -> f64 {
    1.0
}
fn d_one() -> usize {
    1
}
fn d_levels() -> u32 {
    256
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    /// Far-field interference bound.
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// Near-field interference weight.
    #[serde(default = "d_eta")]
    pub eta: f64,
    /// Robustness half-width, degrees.
    #[serde(default)]
    pub delta_deg: f64,
    /// Robust hypothesis count L.
    #[serde(default = "d_one")]
    pub grid_points: usize,
    /// 0 = continuous phases; b > 0 = 2^b-level quantization.
    #[serde(default)]
    pub bits: u8,
    /// Near-field coordinate lattice size.
    #[serde(default = "d_levels")]
    pub levels: u32,
}

impl Default for DesignBlock {
    fn default() -> DesignBlock {
        toml::from_str("").expect("empty design block fills from defaults")
    }
}

fn d_snr_db() -> f64 {
    10.0
}
fn d_snapshots() -> usize {
    5000
}
fn d_grid_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SensingBlock {
    #[serde(default = "d_snr_db")]
    pub snr_db: f64,
    #[serde(default = "d_snapshots")]
    pub snapshots: usize,
    #[serde(default = "d_grid_step")]
    pub grid_step_deg: f64,
}

impl Default for SensingBlock {
    fn default() -> SensingBlock {
        toml::from_str("").expect("empty sensing block fills from defaults")
    }
}

fn d_frames() -> usize {
    20
}
fn d_data_bits() -> usize {
    5000
}
fn d_head_bits() -> usize {
    500
}
fn d_symbol_rate() -> f64 {
    100e3
}
fn d_sps() -> usize {
    16
}
fn d_span() -> usize {
    16
}
fn d_rolloff() -> f64 {
    0.15
}
fn d_es_n0_db() -> f64 {
    15.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBlock {
    #[serde(default = "d_frames")]
    pub frames: usize,
    #[serde(default = "d_data_bits")]
    pub data_bits: usize,
    #[serde(default = "d_head_bits")]
    pub head_bits: usize,
    #[serde(default = "d_symbol_rate")]
    pub symbol_rate: f64,
    #[serde(default = "d_sps")]
    pub sps: usize,
    #[serde(default = "d_span")]
    pub span: usize,
    #[serde(default = "d_rolloff")]
    pub rolloff: f64,
    /// Symbol SNR budget of the interference-free target link.
    #[serde(default = "d_es_n0_db")]
    pub es_n0_db: f64,
}

impl Default for LinkBlock {
    fn default() -> LinkBlock {
        toml::from_str("").expect("empty link block fills from defaults")
    }
}

impl LinkBlock {
    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            data_bits: self.data_bits,
            head_bits: self.head_bits,
            symbol_rate: self.symbol_rate,
            sample_rate: self.symbol_rate * self.sps as f64,
            sps: self.sps,
            span: self.span,
            rolloff: self.rolloff,
        }
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.errors {
            out.push_str(&format!("error: {e}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        if self.errors.is_empty() && self.warnings.is_empty() {
            out.push_str("ok\n");
        }
        out
    }
}

/// Schema and physics checks. Errors reference config field paths.
pub fn validate_config(config: &ExperimentConfig, known_experiments: &[&str]) -> Report {
    let mut report = Report::default();
    if !known_experiments.contains(&config.run.experiment.as_str()) {
        report.errors.push(format!(
            "run.experiment: unknown experiment `{}` (see list-experiments)",
            config.run.experiment
        ));
    }
    if config.run.seed.is_none() {
        report.errors.push("run.seed: required for stochastic runs".into());
    }
    let sb = &config.scenario;
    if sb.nx == 0 || sb.ny == 0 {
        report.errors.push("scenario.nx/ny: surface needs elements".into());
    }
    if sb.na <= 2 {
        report
            .errors
            .push("scenario.na: need more sensors than the two sources (na > 2)".into());
    }
    if sb.frequency <= 0.0 || sb.center_distance <= 0.0 {
        report
            .errors
            .push("scenario.frequency/center_distance: must be positive".into());
    }
    if config.design.tau <= 0.0 {
        report.errors.push("design.tau: must be positive".into());
    }
    if config.design.bits > 8 {
        report.errors.push("design.bits: at most 8".into());
    }
    if config.design.levels < 2 {
        report.errors.push("design.levels: at least 2".into());
    }
    if let Err(e) = config.link.frame_config().validate() {
        report.errors.push(format!("link: {e}"));
    }
    if config.sensing.grid_step_deg <= 0.0 {
        report.errors.push("sensing.grid_step_deg: must be positive".into());
    }

    if report.errors.is_empty() {
        let sc = sb.build();
        if !sc.far_field_valid(sb.center_distance) {
            report.warnings.push(format!(
                "planar-wavefront model invalid at {} m (Rayleigh distance {:.1} m); \
                 spherical model applies",
                sb.center_distance,
                sc.rayleigh_distance()
            ));
        }
        if sb.spacing_over_wavelength > 1.0 {
            report.warnings.push(format!(
                "scenario.spacing_over_wavelength = {} exceeds one wavelength: grating lobes",
                sb.spacing_over_wavelength
            ));
        }
    }
    report
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, toml::de::Error> {
    toml::from_str(text)
}
