//! Deterministic synthetic plate renderer and degrader.
//!
//! A built-in bitmap font is embedded in source so rendering needs no font
//! files, and the same atlas drives both rendering and template matching:
//! clean round trips through the baseline OCR are exact by construction.
//! Degradation applies rotation, box blur and seeded Gaussian noise in that
//! fixed order (pose, optics, sensor).

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detection::DetectionBox;
use crate::imaging::{Image, CHANNELS_RGB};
use crate::recognizer::PlateString;
use crate::scalar::Scalar;

/// Glyph grid width in cells.
pub const GLYPH_GRID_COLS: usize = 16;
/// Glyph grid height in cells.
pub const GLYPH_GRID_ROWS: usize = 24;

/// Default pixels per glyph cell used by the built-in atlas.
pub const DEFAULT_CELL_SIZE: u32 = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("glyph {0:?} is not in the atlas")]
    UnknownGlyph(char),
    #[error("noise sigma must be >= 0 (got {0})")]
    BadSigma(Scalar),
    #[error("rotation must satisfy |deg| <= {max} (got {0})", max = DegradeSpec::MAX_ROTATION_DEG)]
    BadRotation(Scalar),
    #[error("cell size must be >= 1")]
    BadCellSize,
    #[error("glyph bitmap must hold exactly {want} cells (got {got})", want = GLYPH_GRID_COLS * GLYPH_GRID_ROWS)]
    BadBitmapSize { got: usize },
}

/// Binary glyph bitmap on the 16x24 cell grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphBitmap {
    cells: Vec<bool>,
}

impl GlyphBitmap {
    pub fn from_cells(cells: Vec<bool>) -> Result<Self, SynthError> {
        if cells.len() != GLYPH_GRID_COLS * GLYPH_GRID_ROWS {
            return Err(SynthError::BadBitmapSize { got: cells.len() });
        }
        Ok(Self { cells })
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.cells[row * GLYPH_GRID_COLS + col]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Number of differing cells between two bitmaps.
    pub fn hamming(&self, other: &GlyphBitmap) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn ink_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// The 36-glyph template set shared by the renderer and the matcher.
#[derive(Debug, Clone)]
pub struct GlyphAtlas {
    glyphs: BTreeMap<char, GlyphBitmap>,
    cell_size: u32,
}

impl GlyphAtlas {
    /// Built-in A-Z/0-9 atlas at the default cell size.
    pub fn built_in() -> Self {
        Self::built_in_with_cell_size(DEFAULT_CELL_SIZE).expect("default cell size is valid")
    }

    /// Built-in atlas with a custom pixels-per-cell factor.
    pub fn built_in_with_cell_size(cell_size: u32) -> Result<Self, SynthError> {
        if cell_size == 0 {
            return Err(SynthError::BadCellSize);
        }
        Ok(Self {
            glyphs: base_glyphs().clone(),
            cell_size,
        })
    }

    pub fn glyph(&self, c: char) -> Option<&GlyphBitmap> {
        self.glyphs.get(&c)
    }

    /// Glyphs in ascending character-code order.
    pub fn iter(&self) -> impl Iterator<Item = (char, &GlyphBitmap)> {
        self.glyphs.iter().map(|(&c, b)| (c, b))
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn cell_size(&self) -> u32 {
        self.cell_size
    }

    /// Rendered pixel footprint of one glyph.
    pub fn glyph_extent(&self) -> (u32, u32) {
        (
            GLYPH_GRID_COLS as u32 * self.cell_size,
            GLYPH_GRID_ROWS as u32 * self.cell_size,
        )
    }
}

/// Renders a plate: black glyphs on white, laid out left-to-right with a
/// one-cell inter-glyph gap, surrounded by `margin` pixels. Returns the
/// image and the exact plate bounding box (detector ground truth).
pub fn render_plate(
    text: &PlateString,
    atlas: &GlyphAtlas,
    margin: u32,
) -> Result<(Image, DetectionBox), SynthError> {
    let cs = atlas.cell_size();
    let (glyph_w, glyph_h) = atlas.glyph_extent();
    let n = text.as_str().chars().count() as u32;
    let plate_w = n * glyph_w + (n - 1) * cs;
    let plate_h = glyph_h;
    let mut img = Image::new_fill(plate_w + 2 * margin, plate_h + 2 * margin, CHANNELS_RGB, 255)
        .expect("positive dimensions");

    for (i, ch) in text.as_str().chars().enumerate() {
        let bmp = atlas.glyph(ch).ok_or(SynthError::UnknownGlyph(ch))?;
        let x0 = margin + i as u32 * (glyph_w + cs);
        for row in 0..GLYPH_GRID_ROWS {
            for col in 0..GLYPH_GRID_COLS {
                if !bmp.get(col, row) {
                    continue;
                }
                for py in 0..cs {
                    for px in 0..cs {
                        img.set_pixel(
                            x0 + col as u32 * cs + px,
                            margin + row as u32 * cs + py,
                            &[0, 0, 0],
                        );
                    }
                }
            }
        }
    }

    let bbox =
        DetectionBox::new(margin, margin, plate_w, plate_h, 1.0).expect("plate box is valid");
    Ok((img, bbox))
}

/// Degradation parameters; all constructors enforce the stated ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeSpec {
    noise_sigma: Scalar,
    rotation_deg: Scalar,
    blur_radius: u32,
    seed: u64,
}

impl DegradeSpec {
    pub const MAX_ROTATION_DEG: Scalar = 10.0;

    pub fn new(
        noise_sigma: Scalar,
        rotation_deg: Scalar,
        blur_radius: u32,
        seed: u64,
    ) -> Result<Self, SynthError> {
        if !(noise_sigma >= 0.0) {
            return Err(SynthError::BadSigma(noise_sigma));
        }
        if !(rotation_deg.abs() <= Self::MAX_ROTATION_DEG) {
            return Err(SynthError::BadRotation(rotation_deg));
        }
        Ok(Self {
            noise_sigma,
            rotation_deg,
            blur_radius,
            seed,
        })
    }

    /// The all-zero spec: degrade() returns the input byte-for-byte.
    pub fn identity(seed: u64) -> Self {
        Self {
            noise_sigma: 0.0,
            rotation_deg: 0.0,
            blur_radius: 0,
            seed,
        }
    }

    pub fn noise_sigma(&self) -> Scalar {
        self.noise_sigma
    }

    pub fn rotation_deg(&self) -> Scalar {
        self.rotation_deg
    }

    pub fn blur_radius(&self) -> u32 {
        self.blur_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Applies rotation about the center (bilinear, white fill), box blur, and
/// additive Gaussian noise, in that order. Zero-valued stages are skipped,
/// so the all-zero spec is the byte-exact identity. Deterministic for a
/// fixed seed: the noise stream comes from ChaCha8 through a Box-Muller
/// transform, both pinned algorithms with stable cross-platform output.
pub fn degrade(img: &Image, spec: &DegradeSpec) -> Image {
    let mut out = img.clone();
    if spec.rotation_deg != 0.0 {
        out = rotate_about_center(&out, spec.rotation_deg);
    }
    if spec.blur_radius > 0 {
        out = box_blur(&out, spec.blur_radius);
    }
    if spec.noise_sigma > 0.0 {
        add_gaussian_noise(&mut out, spec.noise_sigma, spec.seed);
    }
    out
}

fn rotate_about_center(img: &Image, degrees: Scalar) -> Image {
    let (w, h) = (img.width(), img.height());
    let c = img.channels() as usize;
    let theta = degrees.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let cx = (w as Scalar - 1.0) / 2.0;
    let cy = (h as Scalar - 1.0) / 2.0;
    let mut data = vec![0u8; w as usize * h as usize * c];
    let mut i = 0;
    for y in 0..h {
        for x in 0..w {
            let dx = x as Scalar - cx;
            let dy = y as Scalar - cy;
            let sx = cx + dx * cos_t + dy * sin_t;
            let sy = cy - dx * sin_t + dy * cos_t;
            for ch in 0..c {
                data[i + ch] = bilinear_sample(img, sx, sy, ch);
            }
            i += c;
        }
    }
    Image::from_raw(w, h, img.channels(), data).expect("same shape as input")
}

/// Bilinear read with white (255) fill outside the frame.
fn bilinear_sample(img: &Image, sx: Scalar, sy: Scalar, ch: usize) -> u8 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let read = |xi: i64, yi: i64| -> Scalar {
        if xi < 0 || yi < 0 || xi >= img.width() as i64 || yi >= img.height() as i64 {
            255.0
        } else {
            img.pixel(xi as u32, yi as u32)[ch] as Scalar
        }
    };
    let x0 = x0 as i64;
    let y0 = y0 as i64;
    let top = read(x0, y0) * (1.0 - fx) + read(x0 + 1, y0) * fx;
    let bot = read(x0, y0 + 1) * (1.0 - fx) + read(x0 + 1, y0 + 1) * fx;
    let v = top * (1.0 - fy) + bot * fy;
    v.round().clamp(0.0, 255.0) as u8
}

/// Separable box blur with edge-clamped windows and rounded division.
fn box_blur(img: &Image, radius: u32) -> Image {
    let horizontal = blur_pass(img, radius, true);
    blur_pass(&horizontal, radius, false)
}

fn blur_pass(img: &Image, radius: u32, horizontal: bool) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let c = img.channels() as usize;
    let r = radius as usize;
    let (lanes, lane_len) = if horizontal { (h, w) } else { (w, h) };
    let src = img.data();
    let mut data = vec![0u8; src.len()];
    let idx = |lane: usize, pos: usize, ch: usize| {
        if horizontal {
            (lane * w + pos) * c + ch
        } else {
            (pos * w + lane) * c + ch
        }
    };
    let mut prefix = vec![0u32; lane_len + 1];
    for lane in 0..lanes {
        for ch in 0..c {
            for pos in 0..lane_len {
                prefix[pos + 1] = prefix[pos] + src[idx(lane, pos, ch)] as u32;
            }
            for pos in 0..lane_len {
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(lane_len - 1);
                let sum = prefix[hi + 1] - prefix[lo];
                let cnt = (hi - lo + 1) as u32;
                data[idx(lane, pos, ch)] = ((sum + cnt / 2) / cnt) as u8;
            }
        }
    }
    Image::from_raw(img.width(), img.height(), img.channels(), data).expect("same shape")
}

/// Standard-normal stream: Box-Muller over ChaCha8 64-bit draws. Both
/// algorithms are pinned so seeded outputs are portable.
struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<Scalar>,
}

impl GaussianSource {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn unit(&mut self) -> (Scalar, Scalar) {
        // u1 in (0,1], u2 in [0,1): 53-bit mantissas from two draws
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) as Scalar + 1.0) * (1.0 / (1u64 << 53) as Scalar);
        let u2 = (b >> 11) as Scalar * (1.0 / (1u64 << 53) as Scalar);
        (u1, u2)
    }

    fn next(&mut self) -> Scalar {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (u1, u2) = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}

fn add_gaussian_noise(img: &mut Image, sigma: Scalar, seed: u64) {
    let mut gauss = GaussianSource::new(seed);
    for v in img.data_mut() {
        let noisy = *v as Scalar + sigma * gauss.next();
        *v = noisy.round().clamp(0.0, 255.0) as u8;
    }
}

// ---------------------------------------------------------------------------
// Built-in font
// ---------------------------------------------------------------------------

const FONT_COLS: usize = 8;
const FONT_ROWS: usize = 12;

fn base_glyphs() -> &'static BTreeMap<char, GlyphBitmap> {
    static GLYPHS: OnceLock<BTreeMap<char, GlyphBitmap>> = OnceLock::new();
    GLYPHS.get_or_init(|| {
        let mut map = BTreeMap::new();
        for (ch, rows) in FONT {
            map.insert(ch, upscale_glyph(rows));
        }
        map
    })
}

/// Expands an 8x12 source glyph to the 16x24 cell grid (x2 in both axes).
fn upscale_glyph(rows: [&str; FONT_ROWS]) -> GlyphBitmap {
    let mut cells = vec![false; GLYPH_GRID_COLS * GLYPH_GRID_ROWS];
    for (r, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), FONT_COLS, "font row width");
        for (c, ch) in row.bytes().enumerate() {
            if ch == b'#' {
                for dr in 0..2 {
                    for dc in 0..2 {
                        cells[(r * 2 + dr) * GLYPH_GRID_COLS + c * 2 + dc] = true;
                    }
                }
            }
        }
    }
    GlyphBitmap::from_cells(cells).expect("grid-sized")
}

/// 8x12 source bitmaps, one-cell stroke width. Three properties are load
/// bearing and test enforced. Every glyph touches all four edges of its box,
/// so tight crops recover whole cells and the heuristic detector's span is
/// exact. Every glyph is a single 4-connected component, so a rendered
/// plate has exactly one dark blob per character. Every pair differs in at
/// least 4 cells, with lookalikes (0/O, 8/B, 5/S, 2/Z, 1/I, 6/G, D/O, Q/O)
/// separated by deliberate marks such as the slashed zero, the cut corners
/// of B and D, and the tail of Q. Strokes stay thin so that no valid plate
/// is majority-dark, which would flip the OCR's polarity detection.
#[rustfmt::skip]
const FONT: [(char, [&str; FONT_ROWS]); 36] = [
    ('0', [
        "########",
        "#......#",
        "#.....##",
        "#....###",
        "#...##.#",
        "#..##..#",
        "#..#...#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
    ]),
    ('1', [
        "...##...",
        "..###...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "########",
    ]),
    ('2', [
        "########",
        ".......#",
        ".......#",
        "......##",
        ".....##.",
        "....##..",
        "...##...",
        "..##....",
        ".##.....",
        "##......",
        "#.......",
        "########",
    ]),
    ('3', [
        "########",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        "..######",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        "########",
    ]),
    ('4', [
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
    ]),
    ('5', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#######.",
        "......##",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        "########",
    ]),
    ('6', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
    ]),
    ('7', [
        "########",
        ".......#",
        ".......#",
        "......##",
        ".....##.",
        "....##..",
        "...##...",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
    ]),
    ('8', [
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
    ]),
    ('9', [
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        ".......#",
        "########",
    ]),
    ('A', [
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
    ]),
    ('B', [
        "######..",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "######..",
    ]),
    ('C', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "########",
    ]),
    ('D', [
        "#######.",
        "#.....##",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#.....##",
        "#######.",
    ]),
    ('E', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "######..",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "########",
    ]),
    ('F', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "######..",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
    ]),
    ('G', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#...####",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
    ]),
    ('H', [
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
    ]),
    ('I', [
        "########",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "########",
    ]),
    ('J', [
        "########",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "#...#...",
        "#####...",
    ]),
    ('K', [
        "#......#",
        "#.....##",
        "#....##.",
        "#...##..",
        "#..##...",
        "####....",
        "####....",
        "#..##...",
        "#...##..",
        "#....##.",
        "#.....##",
        "#......#",
    ]),
    ('L', [
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "########",
    ]),
    ('M', [
        "########",
        "#..##..#",
        "#..##..#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
    ]),
    ('N', [
        "#......#",
        "##.....#",
        "###....#",
        "#.##...#",
        "#..##..#",
        "#...##.#",
        "#....###",
        "#.....##",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
    ]),
    ('O', [
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
    ]),
    ('P', [
        "#######.",
        "#.....##",
        "#......#",
        "#......#",
        "#.....##",
        "#######.",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
    ]),
    ('Q', [
        "########",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#...#..#",
        "#...##.#",
        "#....###",
        "########",
    ]),
    ('R', [
        "#######.",
        "#.....##",
        "#......#",
        "#......#",
        "#.....##",
        "#######.",
        "#..#....",
        "#..##...",
        "#...##..",
        "#....##.",
        "#.....##",
        "#......#",
    ]),
    ('S', [
        "########",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#######.",
        "......##",
        ".......#",
        ".......#",
        ".......#",
        "########",
    ]),
    ('T', [
        "########",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
    ]),
    ('U', [
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "########",
    ]),
    ('V', [
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "##....##",
        ".#....#.",
        ".#....#.",
        ".##..##.",
        "..#..#..",
        "..#..#..",
        "..####..",
        "...##...",
    ]),
    ('W', [
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#......#",
        "#..##..#",
        "#..##..#",
        "#..##..#",
        "########",
    ]),
    ('X', [
        "#......#",
        "##....##",
        ".##..##.",
        "..####..",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "..####..",
        ".##..##.",
        "##....##",
        "#......#",
    ]),
    ('Y', [
        "#......#",
        "##....##",
        ".##..##.",
        "..####..",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
    ]),
    ('Z', [
        "########",
        "......#.",
        ".....##.",
        "....##..",
        "...##...",
        "..##....",
        ".##.....",
        "##......",
        "#.......",
        "#.......",
        "#.......",
        "########",
    ]),
];
