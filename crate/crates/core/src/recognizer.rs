//! Backend abstraction: the normalized plate identity, pipeline
//! configuration, and the two recognition backends (detector + OCR pipeline,
//! remote multimodal model) behind one interface.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detection::{self, DetectionBox, DetectorKind, ExternalDetector, HeuristicParams};
use crate::imaging::{self, Image, Rect};
use crate::lmm::{LmmClient, LmmRequest};
use crate::ocr::{self, ExternalOcr};
use crate::synth::GlyphAtlas;

/// Normalized plate identity: 6 or 7 uppercase alphanumerics.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlateString(String);

impl PlateString {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: 6..=7 chars
    }
}

impl fmt::Display for PlateString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for PlateString {
    type Err = NormalizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_plate(s)
    }
}

impl TryFrom<&str> for PlateString {
    type Error = NormalizeError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        normalize_plate(s)
    }
}

impl Serialize for PlateString {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for PlateString {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(de)?;
        normalize_plate(&raw).map_err(serde::de::Error::custom)
    }
}

/// The cleaned text did not land on 6-7 uppercase alphanumerics.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("plate format: {raw:?} cleans to {cleaned:?}, want 6-7 chars of A-Z0-9")]
pub struct NormalizeError {
    pub raw: String,
    pub cleaned: String,
}

/// Normalizes raw recognizer output into a [`PlateString`]: trims
/// surrounding whitespace and quotes, uppercases, strips all whitespace and
/// hyphens, then requires `^[A-Z0-9]{6,7}$`. Both backends route their raw
/// text through this single implementation.
pub fn normalize_plate(raw: &str) -> Result<PlateString, NormalizeError> {
    let trimmed = raw.trim().trim_matches(['"', '\'']);
    let cleaned: String = trimmed
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '-')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    let ok = (6..=7).contains(&cleaned.chars().count())
        && cleaned.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
    if ok {
        Ok(PlateString(cleaned))
    } else {
        Err(NormalizeError {
            raw: raw.to_owned(),
            cleaned,
        })
    }
}

/// Which recognition backend drives the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    DualPipeline,
    Lmm,
}

/// Which OCR engine fills the text-recognition slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcrKind {
    Baseline,
    External,
}

/// Preprocessing applied to the detector crop before OCR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiVariant {
    Original,
    Gray,
    Binary,
}

impl RoiVariant {
    pub fn label(&self) -> &'static str {
        match self {
            RoiVariant::Original => "original",
            RoiVariant::Gray => "gray",
            RoiVariant::Binary => "binary",
        }
    }
}

/// Full backend selection for one pipeline instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub backend: Backend,
    #[serde(default)]
    pub detector: DetectorKind,
    #[serde(default)]
    pub ocr: OcrKind,
    /// Present iff backend = dual_pipeline; the model path consumes the
    /// original full image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<RoiVariant>,
}

impl Default for OcrKind {
    fn default() -> Self {
        OcrKind::Baseline
    }
}

impl PipelineConfig {
    pub fn dual(detector: DetectorKind, ocr: OcrKind, variant: RoiVariant) -> Self {
        Self {
            backend: Backend::DualPipeline,
            detector,
            ocr,
            variant: Some(variant),
        }
    }

    pub fn lmm() -> Self {
        Self {
            backend: Backend::Lmm,
            detector: DetectorKind::default(),
            ocr: OcrKind::default(),
            variant: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigShapeError> {
        match (self.backend, self.variant.is_some()) {
            (Backend::DualPipeline, true) | (Backend::Lmm, false) => Ok(()),
            (Backend::DualPipeline, false) => Err(ConfigShapeError::MissingVariant),
            (Backend::Lmm, true) => Err(ConfigShapeError::VariantOnLmm),
        }
    }

    /// Short row label used by reports and result summaries.
    pub fn label(&self) -> String {
        match self.backend {
            Backend::Lmm => "lmm".to_owned(),
            Backend::DualPipeline => {
                let det = match self.detector {
                    DetectorKind::Oracle => "oracle",
                    DetectorKind::Heuristic => "heuristic",
                    DetectorKind::External => "external",
                };
                let ocr = match self.ocr {
                    OcrKind::Baseline => "baseline",
                    OcrKind::External => "external",
                };
                let variant = self.variant.map(|v| v.label()).unwrap_or("-");
                format!("dual/{det}/{ocr}/{variant}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigShapeError {
    #[error("dual_pipeline backend requires a roi variant")]
    MissingVariant,
    #[error("lmm backend takes no roi variant (it consumes the full image)")]
    VariantOnLmm,
}

/// Stage of the pipeline where a recognition attempt failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decode,
    Detect,
    Crop,
    Ocr,
    Lmm,
    Format,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Decode => "decode",
            Stage::Detect => "detect",
            Stage::Crop => "crop",
            Stage::Ocr => "ocr",
            Stage::Lmm => "lmm",
            Stage::Format => "format",
        }
    }
}

/// Stage-tagged failure reason carried by a [`RecognitionResult`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{stage:?}: {reason}")]
pub struct RecognitionFailure {
    pub stage: Stage,
    pub reason: String,
}

impl RecognitionFailure {
    pub fn new(stage: Stage, reason: impl fmt::Display) -> Self {
        Self {
            stage,
            reason: reason.to_string(),
        }
    }
}

/// Outcome of one recognition attempt on one image.
#[derive(Debug, Clone)]
pub struct RecognitionResult {
    /// Normalized plate, or the stage-tagged failure reason.
    pub plate: Result<PlateString, RecognitionFailure>,
    /// Raw text as produced by the backend before normalization.
    pub raw_text: String,
    /// Backend summary label.
    pub backend: String,
    /// Wall clock for the whole per-image path, image load included.
    pub elapsed: std::time::Duration,
    /// Upstream call attempts (1 for the local pipeline).
    pub attempts: u32,
}

/// Input handed to a recognizer. The path form measures decode inside the
/// timed window (image load is part of the reported latency); the memory
/// form serves callers that already hold a raster.
pub enum ImageSource<'a> {
    Path(&'a Path),
    Memory {
        image: &'a Image,
        /// Ground-truth plate box, consumed by the oracle detector.
        truth_box: Option<Rect>,
    },
}

impl<'a> ImageSource<'a> {
    pub fn path(p: &'a Path) -> Self {
        ImageSource::Path(p)
    }

    pub fn memory(image: &'a Image) -> Self {
        ImageSource::Memory {
            image,
            truth_box: None,
        }
    }

    pub fn memory_with_truth(image: &'a Image, truth_box: Rect) -> Self {
        ImageSource::Memory {
            image,
            truth_box: Some(truth_box),
        }
    }
}

/// A recognition backend. Failures are data, not errors: every call
/// produces a [`RecognitionResult`] so downstream consumers (bench, patrol,
/// service) stay backend-agnostic.
pub trait PlateRecognizer: Send + Sync {
    fn recognize(&self, src: &ImageSource<'_>) -> RecognitionResult;
    fn label(&self) -> String;
}

/// Collaborators needed to build a recognizer out of a [`PipelineConfig`].
pub struct BuildContext {
    pub atlas: GlyphAtlas,
    pub heuristic: HeuristicParams,
    pub external_detector: Option<ExternalDetector>,
    pub external_ocr: Option<ExternalOcr>,
    pub lmm: Option<LmmClient>,
}

impl BuildContext {
    /// Local-only context: built-in atlas, default heuristic, no external
    /// collaborators.
    pub fn local() -> Self {
        Self {
            atlas: GlyphAtlas::built_in(),
            heuristic: HeuristicParams::default(),
            external_detector: None,
            external_ocr: None,
            lmm: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("{0}")]
    Shape(#[from] ConfigShapeError),
    #[error("config selects the external detector but none is configured")]
    MissingExternalDetector,
    #[error("config selects the external ocr engine but none is configured")]
    MissingExternalOcr,
    #[error("config selects the lmm backend but no client is configured")]
    MissingLmm,
}

/// Builds the recognizer selected by `cfg` from the context's collaborators.
pub fn build_recognizer(
    cfg: &PipelineConfig,
    ctx: &BuildContext,
) -> Result<Box<dyn PlateRecognizer>, BuildError> {
    cfg.validate()?;
    match cfg.backend {
        Backend::DualPipeline => {
            let detector = match cfg.detector {
                DetectorKind::Oracle => DetectorImpl::Oracle,
                DetectorKind::Heuristic => DetectorImpl::Heuristic(ctx.heuristic),
                DetectorKind::External => DetectorImpl::External(
                    ctx.external_detector
                        .clone()
                        .ok_or(BuildError::MissingExternalDetector)?,
                ),
            };
            let engine = match cfg.ocr {
                OcrKind::Baseline => OcrImpl::Baseline(ctx.atlas.clone()),
                OcrKind::External => OcrImpl::External(
                    ctx.external_ocr
                        .clone()
                        .ok_or(BuildError::MissingExternalOcr)?,
                ),
            };
            Ok(Box::new(DualPipelineRecognizer {
                detector,
                engine,
                variant: cfg.variant.expect("validated"),
                label: cfg.label(),
            }))
        }
        Backend::Lmm => {
            let client = ctx.lmm.clone().ok_or(BuildError::MissingLmm)?;
            Ok(Box::new(LmmRecognizer { client }))
        }
    }
}

enum DetectorImpl {
    Oracle,
    Heuristic(HeuristicParams),
    External(ExternalDetector),
}

enum OcrImpl {
    Baseline(GlyphAtlas),
    External(ExternalOcr),
}

/// Detector + OCR pipeline over a chosen ROI variant.
pub struct DualPipelineRecognizer {
    detector: DetectorImpl,
    engine: OcrImpl,
    variant: RoiVariant,
    label: String,
}

impl DualPipelineRecognizer {
    fn run(&self, src: &ImageSource<'_>) -> Result<(PlateString, String), RecognitionFailure> {
        // image load is inside the timed window
        let (image, truth_box) = match src {
            ImageSource::Path(p) => {
                let img = imaging::load_image(p)
                    .map_err(|e| RecognitionFailure::new(Stage::Decode, e))?;
                let sidecar = detection::read_sidecar(p).ok();
                (img, sidecar)
            }
            ImageSource::Memory { image, truth_box } => ((*image).clone(), *truth_box),
        };

        // detection runs exactly once; every variant consumes the same box
        let found: DetectionBox = match &self.detector {
            DetectorImpl::Oracle => {
                let rect = truth_box.ok_or_else(|| {
                    RecognitionFailure::new(Stage::Detect, "oracle detector needs an annotation")
                })?;
                detection::detect_oracle(&image, &rect)
                    .map_err(|e| RecognitionFailure::new(Stage::Detect, e))?
            }
            DetectorImpl::Heuristic(params) => detection::detect_heuristic(&image, params)
                .map_err(|e| RecognitionFailure::new(Stage::Detect, e))?,
            DetectorImpl::External(ext) => ext
                .detect(&image)
                .map_err(|e| RecognitionFailure::new(Stage::Detect, e))?,
        };

        let roi = imaging::crop(&image, found.rect())
            .map_err(|e| RecognitionFailure::new(Stage::Crop, e))?;
        let roi = match self.variant {
            RoiVariant::Original => roi,
            RoiVariant::Gray => imaging::ensure_gray(&roi)
                .map_err(|e| RecognitionFailure::new(Stage::Crop, e))?,
            RoiVariant::Binary => {
                let gray = imaging::ensure_gray(&roi)
                    .map_err(|e| RecognitionFailure::new(Stage::Crop, e))?;
                let hist = imaging::Histogram256::from_gray(&gray)
                    .map_err(|e| RecognitionFailure::new(Stage::Crop, e))?;
                let t = imaging::otsu_threshold(&hist)
                    .map_err(|e| RecognitionFailure::new(Stage::Crop, e))?;
                imaging::binarize(&gray, t).map_err(|e| RecognitionFailure::new(Stage::Crop, e))?
            }
        };

        let reading = match &self.engine {
            OcrImpl::Baseline(atlas) => ocr::recognize_text(&roi, atlas)
                .map_err(|e| RecognitionFailure::new(Stage::Ocr, e))?,
            OcrImpl::External(ext) => ext
                .recognize(&roi)
                .map_err(|e| RecognitionFailure::new(Stage::Ocr, e))?,
        };

        let plate = normalize_plate(&reading.text)
            .map_err(|e| RecognitionFailure::new(Stage::Format, e))?;
        Ok((plate, reading.text))
    }
}

impl PlateRecognizer for DualPipelineRecognizer {
    fn recognize(&self, src: &ImageSource<'_>) -> RecognitionResult {
        let start = Instant::now();
        let outcome = self.run(src);
        let elapsed = start.elapsed();
        let (plate, raw_text) = match outcome {
            Ok((plate, raw)) => (Ok(plate), raw),
            Err(fail) => (Err(fail), String::new()),
        };
        RecognitionResult {
            plate,
            raw_text,
            backend: self.label.clone(),
            elapsed,
            attempts: 1,
        }
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Single-call multimodal-model backend: full image in, plate text out.
pub struct LmmRecognizer {
    client: LmmClient,
}

impl LmmRecognizer {
    pub fn new(client: LmmClient) -> Self {
        Self { client }
    }
}

impl PlateRecognizer for LmmRecognizer {
    fn recognize(&self, src: &ImageSource<'_>) -> RecognitionResult {
        let start = Instant::now();
        let loaded = match src {
            ImageSource::Path(p) => {
                imaging::load_image(p).map_err(|e| RecognitionFailure::new(Stage::Decode, e))
            }
            ImageSource::Memory { image, .. } => Ok((*image).clone()),
        };
        let outcome = loaded.and_then(|image| {
            let png = imaging::encode_png(&image)
                .map_err(|e| RecognitionFailure::new(Stage::Decode, e))?;
            let req = LmmRequest::new(png, self.client.config());
            let resp = self
                .client
                .recognize_with_retry(&req)
                .map_err(|e| RecognitionFailure::new(Stage::Lmm, e))?;
            Ok((resp.raw_text.clone(), resp.normalized, resp.attempts))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok((raw_text, normalized, attempts)) => RecognitionResult {
                plate: normalized.map_err(|e| RecognitionFailure::new(Stage::Format, e)),
                raw_text,
                backend: self.label(),
                elapsed,
                attempts,
            },
            Err(fail) => RecognitionResult {
                plate: Err(fail),
                raw_text: String::new(),
                backend: self.label(),
                elapsed,
                attempts: 1,
            },
        }
    }

    fn label(&self) -> String {
        "lmm".to_owned()
    }
}

/// One-shot pipeline run over an in-memory image, for callers that do not
/// hold a long-lived recognizer.
pub fn run_pipeline(
    img: &Image,
    cfg: &PipelineConfig,
    ctx: &BuildContext,
) -> Result<RecognitionResult, BuildError> {
    let rec = build_recognizer(cfg, ctx)?;
    Ok(rec.recognize(&ImageSource::memory(img)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_messy_transcripts() {
        assert_eq!(normalize_plate(" hpj-149 ").unwrap().as_str(), "HPJ149");
        assert_eq!(normalize_plate("hpj 149").unwrap().as_str(), "HPJ149");
        assert_eq!(normalize_plate("ABC1234").unwrap().as_str(), "ABC1234");
        assert_eq!(normalize_plate("A-B-C-1-2-3-4").unwrap().as_str(), "ABC1234");
        assert_eq!(normalize_plate("\"HPJ149\"").unwrap().as_str(), "HPJ149");
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(normalize_plate("AB12").is_err());
        assert!(normalize_plate("The plate is ABC1234").is_err());
        assert!(normalize_plate("").is_err());
        assert!(normalize_plate("ABC12345").is_err());
        assert!(normalize_plate("ABÇ1234").is_err());
        let err = normalize_plate("AB12").unwrap_err();
        assert_eq!(err.raw, "AB12");
        assert_eq!(err.cleaned, "AB12");
    }

    #[test]
    fn config_shape_invariant() {
        assert!(PipelineConfig::dual(DetectorKind::Heuristic, OcrKind::Baseline, RoiVariant::Binary)
            .validate()
            .is_ok());
        assert!(PipelineConfig::lmm().validate().is_ok());
        let mut bad = PipelineConfig::lmm();
        bad.variant = Some(RoiVariant::Gray);
        assert_eq!(bad.validate(), Err(ConfigShapeError::VariantOnLmm));
        let mut bad = PipelineConfig::dual(DetectorKind::Oracle, OcrKind::Baseline, RoiVariant::Gray);
        bad.variant = None;
        assert_eq!(bad.validate(), Err(ConfigShapeError::MissingVariant));
    }

    #[test]
    fn labels_are_stable() {
        assert_eq!(
            PipelineConfig::dual(DetectorKind::Heuristic, OcrKind::Baseline, RoiVariant::Binary)
                .label(),
            "dual/heuristic/baseline/binary"
        );
        assert_eq!(PipelineConfig::lmm().label(), "lmm");
    }

    #[test]
    fn plate_string_serde_roundtrip() {
        let p = normalize_plate("HPJ149").unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"HPJ149\"");
        let back: PlateString = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<PlateString>("\"x\"").is_err());
    }

    proptest! {
        #[test]
        fn normalize_agrees_with_reference_regex(raw in ".{0,24}") {
            let re = regex::Regex::new("^[A-Z0-9]{6,7}$").unwrap();
            let trimmed = raw.trim().trim_matches(['"', '\'']);
            let cleaned: String = trimmed
                .chars()
                .filter(|c| !c.is_whitespace() && *c != '-')
                .map(|c| c.to_ascii_uppercase())
                .collect();
            let want = re.is_match(&cleaned);
            prop_assert_eq!(normalize_plate(&raw).is_ok(), want);
        }

        #[test]
        fn normalize_is_idempotent(raw in ".{0,24}") {
            if let Ok(once) = normalize_plate(&raw) {
                let twice = normalize_plate(once.as_str()).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
