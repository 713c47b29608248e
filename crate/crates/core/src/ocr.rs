//! Baseline character reader: segmentation plus template matching against
//! the built-in glyph atlas. No learned models; every decision is a count
//! over binary cells, so results are exactly reproducible.
//!
//! An external engine (subprocess or HTTP) can stand in for the baseline
//! when a real OCR stack is available.

use std::io::Write as _;
use std::process::{Command, Stdio};
use std::time::Duration;

use crate::imaging::{binarize, encode_png, ensure_gray, otsu_threshold, Histogram256, Image,
                     ImagingError};
use crate::scalar::Scalar;
use crate::synth::{GlyphAtlas, GlyphBitmap, GLYPH_GRID_COLS, GLYPH_GRID_ROWS};

#[derive(Debug, thiserror::Error)]
pub enum OcrError {
    #[error("no characters found in region")]
    NoCharacters,
    #[error("glyph atlas is empty")]
    EmptyAtlas,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("external ocr command {program:?}: {detail}")]
    Command { program: String, detail: String },
    #[error("external ocr http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("external ocr returned status {0}")]
    BadStatus(u16),
    #[error("external ocr returned no text")]
    EmptyText,
}

/// One segmented character: its column span in the source region and its
/// bitmap resampled onto the atlas grid.
#[derive(Debug, Clone)]
pub struct Segment {
    pub col_start: u32,
    pub col_end: u32,
    pub bitmap: GlyphBitmap,
}

/// Text read from a region, with one match score per character.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrReading {
    pub text: String,
    /// Fraction of grid cells agreeing with the best template, per char.
    pub per_char_confidence: Vec<Scalar>,
}

/// Splits a binarized region into per-character bitmaps.
///
/// Steps: flip polarity if dark pixels dominate (plates are read as dark
/// ink on light ground), split on all-light column runs, drop slivers
/// narrower than 10% of the median segment width, crop each segment to its
/// ink rows, and resample to the atlas grid by nearest neighbor.
pub fn segment_characters(bin: &Image) -> Result<Vec<Segment>, OcrError> {
    let (w, h) = (bin.width() as usize, bin.height() as usize);
    let data = bin.data();
    let dark_count = data.iter().filter(|&&v| v == 0).count();
    // invert white-on-dark regions; binary pixels flip exactly
    let flipped;
    let data: &[u8] = if dark_count * 2 > data.len() {
        flipped = data.iter().map(|&v| 255 - v).collect::<Vec<u8>>();
        &flipped
    } else {
        data
    };

    let col_has_ink: Vec<bool> = (0..w)
        .map(|x| (0..h).any(|y| data[y * w + x] == 0))
        .collect();

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut run_start: Option<usize> = None;
    for x in 0..=w {
        match (x < w && col_has_ink[x], run_start) {
            (true, None) => run_start = Some(x),
            (false, Some(s)) => {
                spans.push((s, x - 1));
                run_start = None;
            }
            _ => {}
        }
    }
    if spans.is_empty() {
        return Err(OcrError::NoCharacters);
    }

    // discard slivers: anything narrower than 10% of the median width
    let mut widths: Vec<usize> = spans.iter().map(|(s, e)| e - s + 1).collect();
    widths.sort_unstable();
    let median = if widths.len() % 2 == 1 {
        widths[widths.len() / 2] as Scalar
    } else {
        (widths[widths.len() / 2 - 1] + widths[widths.len() / 2]) as Scalar / 2.0
    };
    spans.retain(|(s, e)| (e - s + 1) as Scalar >= 0.1 * median);
    if spans.is_empty() {
        return Err(OcrError::NoCharacters);
    }

    let mut segments = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        let rows_with_ink: Vec<usize> = (0..h)
            .filter(|&y| (s..=e).any(|x| data[y * w + x] == 0))
            .collect();
        let (top, bottom) = (rows_with_ink[0], *rows_with_ink.last().expect("non-empty"));
        let src_w = e - s + 1;
        let src_h = bottom - top + 1;
        let mut cells = vec![false; GLYPH_GRID_COLS * GLYPH_GRID_ROWS];
        for gr in 0..GLYPH_GRID_ROWS {
            // midpoint nearest neighbor: src = floor((2i+1)*src/(2*dst))
            let sy = top + (2 * gr + 1) * src_h / (2 * GLYPH_GRID_ROWS);
            for gc in 0..GLYPH_GRID_COLS {
                let sx = s + (2 * gc + 1) * src_w / (2 * GLYPH_GRID_COLS);
                cells[gr * GLYPH_GRID_COLS + gc] = data[sy * w + sx] == 0;
            }
        }
        segments.push(Segment {
            col_start: s as u32,
            col_end: e as u32,
            bitmap: GlyphBitmap::from_cells(cells).expect("grid-sized"),
        });
    }
    Ok(segments)
}

/// Deskew search space: half-degree steps out to three degrees either way.
/// Capture tilt beyond that is outside what the template matcher can
/// absorb anyway.
const DESKEW_MAX_STEPS: i32 = 6;
const DESKEW_STEP_DEG: Scalar = 0.5;

/// Whichever binary value is in the minority counts as ink; segmentation
/// applies the same polarity rule before splitting.
fn ink_value(data: &[u8]) -> u8 {
    let dark = data.iter().filter(|&&v| v == 0).count();
    if dark * 2 > data.len() {
        255
    } else {
        0
    }
}

/// Nearest-neighbor rotation about the image center. Out-of-frame pixels
/// take the background (majority) value, so rotation never fabricates
/// ink. Inputs are binary and nearest neighbor keeps them binary.
fn rotate_binary(bin: &Image, deg: Scalar) -> Image {
    let (w, h) = (bin.width(), bin.height());
    let (cx, cy) = ((w as Scalar - 1.0) / 2.0, (h as Scalar - 1.0) / 2.0);
    let (sin, cos) = deg.to_radians().sin_cos();
    let src = bin.data();
    let background = 255 - ink_value(src);
    let mut out = vec![background; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            // inverse map: where did this output pixel come from?
            let (dx, dy) = (x as Scalar - cx, y as Scalar - cy);
            let sx = (cos * dx + sin * dy + cx).round();
            let sy = (-sin * dx + cos * dy + cy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as u32) < w && (sy as u32) < h {
                out[(y * w + x) as usize] = src[(sy as u32 * w + sx as u32) as usize];
            }
        }
    }
    Image::from_raw(w, h, 1, out).expect("same dimensions")
}

/// A straight read at or above this mean confidence is accepted without
/// trying any counter-rotation. Clean upright glyphs match their
/// templates exactly, so they never pay for the search.
const DESKEW_TRIGGER: Scalar = 0.97;

fn mean_confidence(reading: &OcrReading) -> Scalar {
    if reading.per_char_confidence.is_empty() {
        return 0.0;
    }
    let sum: Scalar = reading.per_char_confidence.iter().sum();
    sum / reading.per_char_confidence.len() as Scalar
}

/// Segments one binarized image and matches every segment.
fn read_binary(bin: &Image, atlas: &GlyphAtlas) -> Result<OcrReading, OcrError> {
    let segments = segment_characters(bin)?;
    let mut text = String::with_capacity(segments.len());
    let mut per_char_confidence = Vec::with_capacity(segments.len());
    for seg in &segments {
        let (ch, score) = match_glyph(&seg.bitmap, atlas)?;
        text.push(ch);
        per_char_confidence.push(score);
    }
    Ok(OcrReading {
        text,
        per_char_confidence,
    })
}

/// Best template for a bitmap: the glyph with the most agreeing cells.
/// Score is agreement over total cells. Ties go to the lowest character
/// code, so results never depend on map iteration luck.
pub fn match_glyph(bitmap: &GlyphBitmap, atlas: &GlyphAtlas) -> Result<(char, Scalar), OcrError> {
    let total = (GLYPH_GRID_COLS * GLYPH_GRID_ROWS) as Scalar;
    let mut best: Option<(char, Scalar)> = None;
    for (ch, glyph) in atlas.iter() {
        let agree = total - glyph.hamming(bitmap) as Scalar;
        let score = agree / total;
        if best.is_none() || score > best.expect("some").1 {
            best = Some((ch, score));
        }
    }
    best.ok_or(OcrError::EmptyAtlas)
}

/// Reads a plate region: grayscale, Otsu binarize, segment, match each
/// segment against the atlas.
///
/// A poor straight read (tilt smears glyph edges into the separator gaps
/// and segmentation merges characters) falls back to a deskew search:
/// the region is re-read at half-degree counter-rotations and the reading
/// that agrees best with the atlas wins. The straight read competes and
/// wins ties, so it only ever loses to a strictly better reading.
pub fn recognize_text(region: &Image, atlas: &GlyphAtlas) -> Result<OcrReading, OcrError> {
    if atlas.is_empty() {
        return Err(OcrError::EmptyAtlas);
    }
    let gray = ensure_gray(region)?;
    let t = otsu_threshold(&Histogram256::from_gray(&gray)?)?;
    let bin = binarize(&gray, t)?;

    let mut best: Option<(Scalar, OcrReading)> = None;
    let straight_err = match read_binary(&bin, atlas) {
        Ok(reading) => {
            let mean = mean_confidence(&reading);
            if mean >= DESKEW_TRIGGER {
                return Ok(reading);
            }
            best = Some((mean, reading));
            None
        }
        Err(e) => Some(e),
    };

    for step in 1..=DESKEW_MAX_STEPS {
        for sign in [-1.0, 1.0] {
            let deg = sign * step as Scalar * DESKEW_STEP_DEG;
            if let Ok(reading) = read_binary(&rotate_binary(&bin, deg), atlas) {
                let mean = mean_confidence(&reading);
                if best.as_ref().map_or(true, |(b, _)| mean > *b) {
                    best = Some((mean, reading));
                }
            }
        }
    }
    match best {
        Some((_, reading)) => Ok(reading),
        None => Err(straight_err.expect("no reading at any angle implies a straight failure")),
    }
}

// ---------------------------------------------------------------------------
// External engines
// ---------------------------------------------------------------------------

/// A drop-in replacement for the baseline reader backed by a subprocess
/// (PNG on stdin, text on stdout) or an HTTP endpoint (PNG body in, JSON
/// `{"text": ...}` out). External engines report no per-character scores,
/// so confidence is fixed at 1.0.
#[derive(Debug, Clone)]
pub struct ExternalOcr {
    transport: Transport,
}

#[derive(Debug, Clone)]
enum Transport {
    Command { program: String, args: Vec<String> },
    Http { endpoint: String, client: reqwest::blocking::Client },
}

#[derive(Debug, serde::Deserialize)]
struct HttpOcrResponse {
    text: String,
}

impl ExternalOcr {
    pub fn command(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            transport: Transport::Command {
                program: program.into(),
                args,
            },
        }
    }

    pub fn http(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, OcrError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(Self {
            transport: Transport::Http {
                endpoint: endpoint.into(),
                client,
            },
        })
    }

    pub fn recognize(&self, region: &Image) -> Result<OcrReading, OcrError> {
        let png = encode_png(region)?;
        let text = match &self.transport {
            Transport::Command { program, args } => run_command(program, args, &png)?,
            Transport::Http { endpoint, client } => {
                let resp = client
                    .post(endpoint)
                    .header(reqwest::header::CONTENT_TYPE, "application/octet-stream")
                    .body(png)
                    .send()?;
                if !resp.status().is_success() {
                    return Err(OcrError::BadStatus(resp.status().as_u16()));
                }
                resp.json::<HttpOcrResponse>()?.text
            }
        };
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(OcrError::EmptyText);
        }
        let n = text.chars().count();
        Ok(OcrReading {
            per_char_confidence: vec![1.0; n],
            text,
        })
    }
}

fn run_command(program: &str, args: &[String], png: &[u8]) -> Result<String, OcrError> {
    let fail = |detail: String| OcrError::Command {
        program: program.to_string(),
        detail,
    };
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| fail(e.to_string()))?;
    // engines that decide without draining stdin (or crash) close the
    // pipe early; that is their exit status's story to tell, not a write
    // error here
    match child.stdin.take().expect("piped").write_all(png) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        Err(e) => return Err(fail(format!("writing stdin: {e}"))),
    }
    let out = child
        .wait_with_output()
        .map_err(|e| fail(e.to_string()))?;
    if !out.status.success() {
        return Err(fail(format!("exit status {}", out.status)));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| fail(format!("non-utf8 output: {e}")))?;
    Ok(text.lines().next().unwrap_or("").to_string())
}
