//! On-disk configuration: one TOML document for service/CLI settings and
//! one for a patrol scenario. Every field has a default, so an empty file
//! is a working config.
//!
//! Neither document may carry credential material. Secrets are referenced
//! by environment-variable *name* (`api_key_env`, `token_env`) and the
//! values are read at call time; validation rejects anything in those
//! fields that does not look like a variable name.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::detection::{DetectorKind, ExternalDetector, HeuristicParams};
use crate::lmm::{LmmClient, LmmConfig};
use crate::notify::WebhookConfig;
use crate::ocr::ExternalOcr;
use crate::patrol::SweepPlan;
use crate::recognizer::{BuildContext, OcrKind, PipelineConfig};
use crate::scalar::Scalar;
use crate::synth::{DegradeSpec, GlyphAtlas};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Detector selection and tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    pub kind: DetectorKind,
    pub heuristic: HeuristicParams,
    /// HTTP endpoint, required when kind = external.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            kind: DetectorKind::default(),
            heuristic: HeuristicParams::default(),
            endpoint: None,
            timeout_ms: 10_000,
        }
    }
}

/// OCR engine selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrSettings {
    pub kind: OcrKind,
    /// Subprocess transport: program plus fixed arguments.
    pub program: Option<String>,
    pub args: Vec<String>,
    /// HTTP transport; `program` wins when both are set.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for OcrSettings {
    fn default() -> Self {
        Self {
            kind: OcrKind::default(),
            program: None,
            args: Vec::new(),
            endpoint: None,
            timeout_ms: 10_000,
        }
    }
}

/// Where state lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathSettings {
    pub events: PathBuf,
    pub registry: Option<PathBuf>,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            events: PathBuf::from("events.jsonl"),
            registry: None,
        }
    }
}

/// Synthetic rendering knobs shared by the synth command and captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub cell_size: u32,
    pub margin: u32,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            cell_size: 4,
            margin: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSettings {
    /// Bind address; port 0 picks an ephemeral port.
    pub addr: String,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub repeats: u32,
    pub parallel: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            repeats: 1,
            parallel: false,
        }
    }
}

/// Root settings document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub lmm: LmmConfig,
    pub notify: Option<WebhookConfig>,
    pub detector: DetectorSettings,
    pub ocr: OcrSettings,
    pub paths: PathSettings,
    pub synth: SynthSettings,
    pub service: ServiceSettings,
    pub bench: BenchSettings,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    toml::from_str(&raw).map_err(|source| ConfigError::Parse {
        path: path.to_owned(),
        source: Box::new(source),
    })
}

/// True when `name` is a plausible environment-variable name. Anything
/// else in a credential field is treated as a pasted secret and refused.
fn is_env_var_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl AppConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let cfg: Self = read_toml(path.as_ref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !is_env_var_name(&self.lmm.api_key_env) {
            return Err(ConfigError::Invalid(format!(
                "lmm.api_key_env {:?} is not an environment variable name; \
                 config files must never contain the key itself",
                self.lmm.api_key_env
            )));
        }
        self.lmm
            .retry
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("lmm.retry: {e}")))?;
        if let Some(notify) = &self.notify {
            if !is_env_var_name(&notify.token_env) {
                return Err(ConfigError::Invalid(format!(
                    "notify.token_env {:?} is not an environment variable name; \
                     config files must never contain the token itself",
                    notify.token_env
                )));
            }
            notify
                .retry
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("notify.retry: {e}")))?;
            if notify.url.is_empty() {
                return Err(ConfigError::Invalid("notify.url is empty".into()));
            }
        }
        if self.detector.kind == DetectorKind::External && self.detector.endpoint.is_none() {
            return Err(ConfigError::Invalid(
                "detector.kind = external needs detector.endpoint".into(),
            ));
        }
        self.detector
            .heuristic
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("detector.heuristic: {e}")))?;
        if self.ocr.kind == OcrKind::External
            && self.ocr.program.is_none()
            && self.ocr.endpoint.is_none()
        {
            return Err(ConfigError::Invalid(
                "ocr.kind = external needs ocr.program or ocr.endpoint".into(),
            ));
        }
        if self.synth.cell_size == 0 {
            return Err(ConfigError::Invalid("synth.cell_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Assembles the recognizer collaborators this config describes.
    /// The model client is always constructed (it is cheap and holds no
    /// credentials); the key is only read when a call happens.
    pub fn build_context(&self) -> Result<BuildContext, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let atlas = GlyphAtlas::built_in_with_cell_size(self.synth.cell_size)
            .map_err(|e| invalid(&e))?;
        let external_detector = match &self.detector.endpoint {
            Some(url) => Some(
                ExternalDetector::new(url, Duration::from_millis(self.detector.timeout_ms))
                    .map_err(|e| invalid(&e))?,
            ),
            None => None,
        };
        let external_ocr = match (&self.ocr.program, &self.ocr.endpoint) {
            (Some(program), _) => Some(ExternalOcr::command(program, self.ocr.args.clone())),
            (None, Some(url)) => Some(
                ExternalOcr::http(url, Duration::from_millis(self.ocr.timeout_ms))
                    .map_err(|e| invalid(&e))?,
            ),
            (None, None) => None,
        };
        let lmm = Some(LmmClient::new(self.lmm.clone()).map_err(|e| invalid(&e))?);
        Ok(BuildContext {
            atlas,
            heuristic: self.detector.heuristic,
            external_detector,
            external_ocr,
            lmm,
        })
    }
}

fn default_clock_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 8, 16, 8, 0, 0)
        .single()
        .expect("fixed instant exists")
}

fn default_pipeline() -> PipelineConfig {
    PipelineConfig::dual(
        DetectorKind::Heuristic,
        OcrKind::Baseline,
        crate::recognizer::RoiVariant::Binary,
    )
}

/// One patrol run, fully described: lot shape, route, clock, recognizer,
/// and where the registry and event log live. Human-edited TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    pub n_slots: usize,
    pub n_occupied: usize,
    pub n_illegal: usize,
    /// Camera pan angles tried at each stop, in order.
    pub angles: Vec<Scalar>,
    /// Simulated clock at the first waypoint.
    pub clock_start: DateTime<Utc>,
    /// Simulated seconds between waypoints.
    pub step_secs: u64,
    pub pipeline: PipelineConfig,
    /// Whitelist CSV; absent means every car is a violator, which only a
    /// fully-illegal lot satisfies.
    pub registry: Option<PathBuf>,
    pub events: PathBuf,
    pub notify: Option<WebhookConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 42,
            n_slots: 12,
            n_occupied: 10,
            n_illegal: 3,
            angles: SweepPlan::default_angles(),
            clock_start: default_clock_start(),
            step_secs: 30,
            pipeline: default_pipeline(),
            registry: None,
            events: PathBuf::from("events.jsonl"),
            notify: None,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_occupied > self.n_slots {
            return Err(ConfigError::Invalid(format!(
                "n_occupied {} exceeds n_slots {}",
                self.n_occupied, self.n_slots
            )));
        }
        if self.n_illegal > self.n_occupied {
            return Err(ConfigError::Invalid(format!(
                "n_illegal {} exceeds n_occupied {}",
                self.n_illegal, self.n_occupied
            )));
        }
        if self.angles.is_empty() {
            return Err(ConfigError::Invalid("angles must not be empty".into()));
        }
        let worst = crate::patrol::ANGLE_ATTENUATION
            * self
                .angles
                .iter()
                .fold(0.0_f64, |acc, a| acc.max(a.abs()));
        if worst > DegradeSpec::MAX_ROTATION_DEG {
            return Err(ConfigError::Invalid(format!(
                "pan angles skew the plate {worst} degrees; the degrader tops out at {}",
                DegradeSpec::MAX_ROTATION_DEG
            )));
        }
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("pipeline: {e}")))?;
        if let Some(notify) = &self.notify {
            if !is_env_var_name(&notify.token_env) {
                return Err(ConfigError::Invalid(format!(
                    "notify.token_env {:?} is not an environment variable name",
                    notify.token_env
                )));
            }
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let scenario: Scenario = read_toml(path.as_ref())?;
    scenario.validate()?;
    Ok(scenario)
}
