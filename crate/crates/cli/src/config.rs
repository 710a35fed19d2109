//! Scenario configuration and its validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use sonoloc::edm::PointConfig;
use sonoloc::fusion::{FusionParams, FusionStrategy};
use sonoloc::mds::SolverSettings;
use sonoloc::pulse::{PulseParams, CARRIER_BAND_HZ};
use sonoloc::ranging::DEFAULT_MAX_RANGE_M;
use sonoloc::schedule::{make_schedule, validate_schedule, Schedule, ScheduleConstraints, DEFAULT_D_DELAY_MS};
use sonoloc::sim::ChannelModel;
use sonoloc::{detect::DEFAULT_MIN_SCORE_RATIO, DEFAULT_SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Centre phone plus four at 1 m along the axes.
    Cross5,
    /// Two rows of three on a 1 m grid.
    Grid33,
}

impl Preset {
    pub fn points(self) -> Vec<Vec<f64>> {
        let pts: &[[f64; 2]] = match self {
            Preset::Cross5 => &[[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            Preset::Grid33 => &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]],
        };
        pts.iter().map(|p| p.to_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Geometry {
    Preset(Preset),
    Points { points: Vec<Vec<f64>> },
}

impl Geometry {
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            Geometry::Preset(p) => p.points(),
            Geometry::Points { points } => points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub d_delay_ms: f64,
    pub t2_ms: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            d_delay_ms: DEFAULT_D_DELAY_MS,
            t2_ms: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub min_score_ratio: f64,
    /// Distances beyond this are discarded as outliers.
    pub max_range_m: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            min_score_ratio: DEFAULT_MIN_SCORE_RATIO,
            max_range_m: DEFAULT_MAX_RANGE_M,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for result files; overridden by `--out`.
    pub dir: Option<String>,
    /// Also write `distances.csv`.
    pub csv: bool,
    /// Also write raw recordings as f32 little-endian PCM.
    pub pcm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    pub sample_rate_hz: f64,
    pub pulse: PulseParams,
    pub schedule: ScheduleConfig,
    /// `channel.seed` is a sub-seed mixed with `master_seed`.
    pub channel: ChannelModel,
    pub detection: DetectionConfig,
    pub repetitions: usize,
    pub fusion: FusionParams,
    pub solver: SolverSettings,
    pub master_seed: u64,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::Preset(Preset::Cross5),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            pulse: PulseParams::default(),
            schedule: ScheduleConfig::default(),
            channel: ChannelModel::default(),
            detection: DetectionConfig::default(),
            repetitions: 5,
            fusion: FusionParams::default(),
            solver: SolverSettings::default(),
            master_seed: 0,
            output: OutputConfig::default(),
        }
    }
}

/// One validation failure, addressed by its JSON field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<FieldError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

struct Collector(Vec<FieldError>);

impl Collector {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("{v} must be positive and finite"));
        }
    }

    fn non_negative(&mut self, path: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(path, format!("{v} must be non-negative and finite"));
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn positions(&self) -> Result<PointConfig, ValidationErrors> {
        let pts = self.geometry.points();
        let dim = pts.first().map_or(0, Vec::len);
        PointConfig::new(pts, dim).map_err(|e| {
            ValidationErrors(vec![FieldError {
                path: "geometry".into(),
                message: e.to_string(),
            }])
        })
    }

    pub fn n_phones(&self) -> usize {
        self.geometry.points().len()
    }

    pub fn dim(&self) -> usize {
        self.geometry.points().first().map_or(0, Vec::len)
    }

    /// The emission schedule, or `None` if its parameters are invalid.
    pub fn build_schedule(&self) -> Option<Schedule> {
        make_schedule(self.n_phones(), self.schedule.d_delay_ms, self.schedule.t2_ms).ok()
    }

    /// Longest propagation time between any two phones, ms.
    fn max_propagation_ms(&self, positions: &PointConfig) -> f64 {
        let n = positions.len();
        let far = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| positions.dist(i, j))
            .fold(0.0, f64::max);
        far / self.channel.speed_mps * 1000.0
    }

    /// Every problem with the configuration; empty when it is runnable.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut c = Collector(Vec::new());
        let positions = match self.positions() {
            Ok(p) => Some(p),
            Err(e) => {
                c.0.extend(e.0);
                None
            }
        };
        let n = self.n_phones();
        if let Some(p) = &positions {
            if n < 2 {
                c.push("geometry", "need at least 2 phones");
            }
            if !(2..=3).contains(&p.dim) {
                c.push("geometry", format!("points must be 2-D or 3-D, got {}-D", p.dim));
            }
        }

        c.positive("sample_rate_hz", self.sample_rate_hz);
        if self.pulse.length == 0 {
            c.push("pulse.length", "must be at least 1");
        }
        if self.pulse.upsample == 0 {
            c.push("pulse.upsample", "must be at least 1");
        }
        let (lo, hi) = CARRIER_BAND_HZ;
        if !(lo..=hi).contains(&self.pulse.carrier_hz) {
            c.push("pulse.carrier_hz", format!("{} Hz outside {lo}..{hi} Hz", self.pulse.carrier_hz));
        } else if !(self.pulse.carrier_hz < self.sample_rate_hz / 2.0) {
            c.push("pulse.carrier_hz", "must lie below the Nyquist frequency");
        }

        c.non_negative("schedule.d_delay_ms", self.schedule.d_delay_ms);
        if !(self.schedule.t2_ms > 2.0 * self.schedule.d_delay_ms) {
            c.push(
                "schedule.t2_ms",
                format!(
                    "{} ms must exceed 2 * d_delay_ms = {} ms",
                    self.schedule.t2_ms,
                    2.0 * self.schedule.d_delay_ms
                ),
            );
        }

        let ch = &self.channel;
        c.positive("channel.speed_mps", ch.speed_mps);
        c.non_negative("channel.noise_std", ch.noise_std);
        c.non_negative("channel.attenuation_exponent", ch.attenuation_exponent);
        c.non_negative("channel.os_jitter_ms_max", ch.os_jitter_ms_max);
        c.non_negative("channel.range_noise_std_m", ch.range_noise_std_m);
        if !(0.0..=1.0).contains(&ch.drop_prob) {
            c.push("channel.drop_prob", format!("{} must lie in [0, 1]", ch.drop_prob));
        }
        for (k, l) in ch.link_noise.iter().enumerate() {
            if l.i >= n || l.j >= n || l.i == l.j {
                c.push(&format!("channel.link_noise[{k}]"), format!("({}, {}) is not a pair of phones", l.i, l.j));
            }
            c.non_negative(&format!("channel.link_noise[{k}].std_m"), l.std_m);
        }
        for (k, d) in ch.phone_drop.iter().enumerate() {
            if d.phone >= n {
                c.push(&format!("channel.phone_drop[{k}].phone"), format!("no phone {}", d.phone));
            }
            if !(0.0..=1.0).contains(&d.prob) {
                c.push(&format!("channel.phone_drop[{k}].prob"), format!("{} must lie in [0, 1]", d.prob));
            }
        }
        if let Some(e) = ch.echo {
            if !e.gain.is_finite() {
                c.push("channel.echo.gain", "must be finite");
            }
        }

        if !(self.detection.min_score_ratio > 0.0 && self.detection.min_score_ratio < 1.0) {
            c.push("detection.min_score_ratio", "must lie in (0, 1)");
        }
        c.positive("detection.max_range_m", self.detection.max_range_m);

        if self.repetitions == 0 {
            c.push("repetitions", "must be at least 1");
        }
        c.positive("fusion.variance_floor", self.fusion.variance_floor);
        if self.fusion.strategy == FusionStrategy::Optimal && self.repetitions < 2 {
            c.push("fusion.strategy", "optimal weighting needs repetitions >= 2");
        }
        if self.solver.max_iters == 0 {
            c.push("solver.max_iters", "must be at least 1");
        }
        c.positive("solver.rel_tol", self.solver.rel_tol);

        // pulses must fit between emissions and before the stop despite OS delay
        let clean = c.0.is_empty();
        if let (true, Some(p), Some(s)) = (clean, &positions, self.build_schedule()) {
            let pulse_ms = self.pulse.samples() as f64 / self.sample_rate_hz * 1000.0;
            let guard = ch.os_jitter_ms_max + pulse_ms + self.max_propagation_ms(p);
            let constraints = ScheduleConstraints {
                delay_os_ms: guard,
                delta_ms: guard,
            };
            for v in validate_schedule(&s, &constraints) {
                c.push(
                    "schedule",
                    format!(
                        "condition {} fails with {guard:.1} ms of jitter, pulse and propagation: {v:?}",
                        v.condition()
                    ),
                );
            }
        }

        if c.0.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(c.0))
        }
    }
}
