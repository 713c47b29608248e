//! Plate localization: where in the frame the plate sits.
//!
//! Three interchangeable strategies. The oracle replays ground truth from a
//! sidecar file and exists so downstream stages can be measured in isolation.
//! The heuristic projects dark mass onto the axes and boxes the span, which
//! is enough for flat, plate-dominant frames. The external detector defers
//! to an HTTP service for anything smarter.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::imaging::{binarize, encode_png, ensure_gray, otsu_threshold, Histogram256, Image,
                     ImagingError, Rect};
use crate::scalar::{Real, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum DetectionError {
    #[error("no plate-like region found (image has no dark mass)")]
    NoPlate,
    #[error("invalid detection box: {0}")]
    InvalidBox(String),
    #[error("invalid heuristic parameters: {0}")]
    BadParams(String),
    #[error("sidecar {path}: {source}")]
    SidecarIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sidecar {path}: expected one line `x y w h`, got {got:?}")]
    SidecarParse { path: PathBuf, got: String },
    #[error("external detector: {0}")]
    Http(#[from] reqwest::Error),
    #[error("external detector returned status {0}")]
    BadStatus(u16),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Axis-aligned detection with a confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub confidence: Scalar,
}

impl DetectionBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32, confidence: Scalar) -> Result<Self, DetectionError> {
        if w == 0 || h == 0 {
            return Err(DetectionError::InvalidBox(format!(
                "zero-area box {w}x{h}"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DetectionError::InvalidBox(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            x,
            y,
            w,
            h,
            confidence,
        })
    }

    pub fn rect(&self) -> Rect {
        Rect {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}

/// Which localization strategy a pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Ground truth from the image's sidecar file.
    Oracle,
    /// Projection-profile boxing, no learned model.
    #[default]
    Heuristic,
    /// Remote HTTP detector.
    External,
}

impl DetectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Oracle => "oracle",
            DetectorKind::Heuristic => "heuristic",
            DetectorKind::External => "external",
        }
    }
}

/// Intersection-over-union of two rectangles, exact integer areas divided
/// in the caller's float type. Degenerate zero-area inputs give 0.
pub fn iou_with<R: Real>(a: &Rect, b: &Rect) -> R {
    let ix0 = a.x.max(b.x) as u64;
    let iy0 = a.y.max(b.y) as u64;
    let ix1 = ((a.x + a.w) as u64).min((b.x + b.w) as u64);
    let iy1 = ((a.y + a.h) as u64).min((b.y + b.h) as u64);
    let inter = if ix1 > ix0 && iy1 > iy0 {
        (ix1 - ix0) * (iy1 - iy0)
    } else {
        0
    };
    let union = a.w as u64 * a.h as u64 + b.w as u64 * b.h as u64 - inter;
    if union == 0 {
        return R::zero();
    }
    R::from_u64(inter).expect("u64 fits") / R::from_u64(union).expect("u64 fits")
}

pub fn iou(a: &Rect, b: &Rect) -> Scalar {
    iou_with(a, b)
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// Sidecar path for an image: same stem, `.box` extension.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("box")
}

/// Writes a ground-truth sidecar (`x y w h`, one line).
pub fn write_sidecar(image_path: &Path, rect: &Rect) -> Result<(), DetectionError> {
    let path = sidecar_path(image_path);
    let body = format!("{} {} {} {}\n", rect.x, rect.y, rect.w, rect.h);
    let mut f = fs::File::create(&path).map_err(|source| DetectionError::SidecarIo {
        path: path.clone(),
        source,
    })?;
    f.write_all(body.as_bytes())
        .map_err(|source| DetectionError::SidecarIo { path, source })
}

/// Reads the ground-truth box for an image from its sidecar.
pub fn read_sidecar(image_path: &Path) -> Result<Rect, DetectionError> {
    let path = sidecar_path(image_path);
    let text = fs::read_to_string(&path).map_err(|source| DetectionError::SidecarIo {
        path: path.clone(),
        source,
    })?;
    parse_sidecar(&text).ok_or_else(|| DetectionError::SidecarParse {
        path,
        got: text.trim().to_string(),
    })
}

fn parse_sidecar(text: &str) -> Option<Rect> {
    let mut fields = text.split_whitespace();
    let mut next = || fields.next()?.parse::<u32>().ok();
    let (x, y, w, h) = (next()?, next()?, next()?, next()?);
    if fields.next().is_some() || w == 0 || h == 0 {
        return None;
    }
    Some(Rect { x, y, w, h })
}

/// Replays a known truth box, clamped to the frame, at full confidence.
pub fn detect_oracle(img: &Image, truth: &Rect) -> Result<DetectionBox, DetectionError> {
    let clamped = truth.clamp_to(img.width(), img.height());
    if clamped.area() == 0 {
        return Err(DetectionError::InvalidBox("truth box outside image".into()));
    }
    DetectionBox::new(clamped.x, clamped.y, clamped.w, clamped.h, 1.0)
}

// ---------------------------------------------------------------------------
// Heuristic
// ---------------------------------------------------------------------------

/// Tuning for the projection-profile detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicParams {
    /// A row/column survives if its dark count exceeds this fraction of the
    /// peak count on that axis.
    pub cutoff_frac: Scalar,
    /// Pixels of padding added on each side of the surviving span.
    pub pad: u32,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            cutoff_frac: 0.05,
            pad: 2,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(0.0..1.0).contains(&self.cutoff_frac) {
            return Err(DetectionError::BadParams(format!(
                "cutoff_frac {} outside [0, 1)",
                self.cutoff_frac
            )));
        }
        Ok(())
    }
}

/// Binarizes the frame, projects dark mass onto both axes, and boxes the
/// span of rows and columns that clear `cutoff_frac` of the axis peak,
/// padded by `pad` and clamped to the frame. Confidence is the fraction of
/// all dark mass that falls inside the box.
pub fn detect_heuristic(
    img: &Image,
    params: &HeuristicParams,
) -> Result<DetectionBox, DetectionError> {
    params.validate()?;
    let gray = ensure_gray(img)?;
    let hist = Histogram256::from_gray(&gray)?;
    // A zero-contrast frame has nothing to localize; without this guard Otsu
    // degenerates to the single populated bin and binarize calls it all ink.
    if hist.counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(DetectionError::NoPlate);
    }
    let t = otsu_threshold(&hist)?;
    let bin = binarize(&gray, t)?;
    let (w, h) = (bin.width() as usize, bin.height() as usize);
    let data = bin.data();

    let mut col_counts = vec![0u32; w];
    let mut row_counts = vec![0u32; h];
    for y in 0..h {
        for x in 0..w {
            if data[y * w + x] == 0 {
                col_counts[x] += 1;
                row_counts[y] += 1;
            }
        }
    }
    let total_dark: u64 = col_counts.iter().map(|&c| c as u64).sum();
    if total_dark == 0 {
        return Err(DetectionError::NoPlate);
    }

    let span = |counts: &[u32]| -> (usize, usize) {
        let peak = *counts.iter().max().expect("non-empty") as Scalar;
        let keep: Vec<usize> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c as Scalar > params.cutoff_frac * peak)
            .map(|(i, _)| i)
            .collect();
        (keep[0], *keep.last().expect("peak itself always survives"))
    };
    let (x_first, x_last) = span(&col_counts);
    let (y_first, y_last) = span(&row_counts);

    let x0 = x_first.saturating_sub(params.pad as usize);
    let y0 = y_first.saturating_sub(params.pad as usize);
    let x1 = (x_last + params.pad as usize).min(w - 1);
    let y1 = (y_last + params.pad as usize).min(h - 1);

    let mut inside: u64 = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if data[y * w + x] == 0 {
                inside += 1;
            }
        }
    }
    let confidence = inside as Scalar / total_dark as Scalar;
    DetectionBox::new(
        x0 as u32,
        y0 as u32,
        (x1 - x0 + 1) as u32,
        (y1 - y0 + 1) as u32,
        confidence,
    )
}

// ---------------------------------------------------------------------------
// External
// ---------------------------------------------------------------------------

/// HTTP detector: POSTs the frame as a PNG, expects a JSON detection box.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl ExternalDetector {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, DetectionError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn detect(&self, img: &Image) -> Result<DetectionBox, DetectionError> {
        let png = encode_png(img)?;
        let resp = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/octet-stream")
            .body(png)
            .send()?;
        if !resp.status().is_success() {
            return Err(DetectionError::BadStatus(resp.status().as_u16()));
        }
        let raw: DetectionBox = resp.json()?;
        let clamped = raw.rect().clamp_to(img.width(), img.height());
        if clamped.area() == 0 {
            return Err(DetectionError::InvalidBox(
                "detector box outside image".into(),
            ));
        }
        DetectionBox::new(clamped.x, clamped.y, clamped.w, clamped.h, raw.confidence)
    }
}
