//! Raster type and the preprocessing chain: grayscale conversion, Otsu
//! thresholding, binarization and ROI cropping, plus PNG/JPEG codecs at the
//! module boundary.

use std::path::Path;

use image::ImageEncoder;

use crate::scalar::{Real, Scalar};

/// Channel count of a grayscale [`Image`].
pub const CHANNELS_GRAY: u8 = 1;
/// Channel count of an RGB [`Image`].
pub const CHANNELS_RGB: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("image dimensions must be positive (got {width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("channel count {0} unsupported (expected 1 or 3)")]
    BadChannels(u8),
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BadBuffer {
        got: usize,
        width: u32,
        height: u32,
        channels: u8,
    },
    #[error("expected a 3-channel image")]
    NotRgb,
    #[error("expected a 1-channel image")]
    NotGray,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("crop box has zero area after clamping to {width}x{height}")]
    EmptyCrop { width: u32, height: u32 },
    #[error("blit source ({src_w}x{src_h} at {x},{y}) exceeds destination {dst_w}x{dst_h}")]
    BlitOutOfBounds {
        src_w: u32,
        src_h: u32,
        x: u32,
        y: u32,
        dst_w: u32,
        dst_h: u32,
    },
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(u8, u8),
    #[error("codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Owned 8-bit raster, row-major, interleaved samples; 1 (gray) or 3 (RGB)
/// channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    /// Creates an image filled with a constant sample value.
    pub fn new_fill(width: u32, height: u32, channels: u8, fill: u8) -> Result<Self, ImagingError> {
        check_shape(width, height, channels)?;
        let len = width as usize * height as usize * channels as usize;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![fill; len],
        })
    }

    /// Wraps an existing sample buffer; the length must match exactly.
    pub fn from_raw(
        width: u32,
        height: u32,
        channels: u8,
        data: Vec<u8>,
    ) -> Result<Self, ImagingError> {
        check_shape(width, height, channels)?;
        let want = width as usize * height as usize * channels as usize;
        if data.len() != want {
            return Err(ImagingError::BadBuffer {
                got: data.len(),
                width,
                height,
                channels,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn is_gray(&self) -> bool {
        self.channels == CHANNELS_GRAY
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Samples of the pixel at (x, y); panics out of bounds.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, samples: &[u8]) {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        assert_eq!(samples.len(), self.channels as usize, "sample arity");
        let o = self.offset(x, y);
        self.data[o..o + samples.len()].copy_from_slice(samples);
    }

    /// Gray value at (x, y); panics if the image is not 1-channel.
    pub fn gray(&self, x: u32, y: u32) -> u8 {
        assert!(self.is_gray(), "gray() on multi-channel image");
        self.data[y as usize * self.width as usize + x as usize]
    }
}

fn check_shape(width: u32, height: u32, channels: u8) -> Result<(), ImagingError> {
    if width == 0 || height == 0 {
        return Err(ImagingError::ZeroDimension { width, height });
    }
    if channels != CHANNELS_GRAY && channels != CHANNELS_RGB {
        return Err(ImagingError::BadChannels(channels));
    }
    Ok(())
}

/// Axis-aligned pixel rectangle (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// Clamps the rectangle to an image extent; the result may be empty.
    pub fn clamp_to(&self, width: u32, height: u32) -> Rect {
        let x = self.x.min(width);
        let y = self.y.min(height);
        Rect {
            x,
            y,
            w: self.w.min(width - x),
            h: self.h.min(height - y),
        }
    }
}

/// RGB → gray with the common broadcast luma weights 0.299/0.587/0.114,
/// rounded to nearest and clamped.
pub fn to_grayscale(img: &Image) -> Result<Image, ImagingError> {
    if img.channels() != CHANNELS_RGB {
        return Err(ImagingError::NotRgb);
    }
    let mut out = Vec::with_capacity(img.width as usize * img.height as usize);
    for px in img.data.chunks_exact(3) {
        out.push(luma(px[0], px[1], px[2]));
    }
    Image::from_raw(img.width, img.height, CHANNELS_GRAY, out)
}

fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

/// Grayscale view of any supported image: converts RGB, copies gray as-is
/// (the identity path that makes repeated conversion a no-op).
pub fn ensure_gray(img: &Image) -> Result<Image, ImagingError> {
    if img.is_gray() {
        Ok(img.clone())
    } else {
        to_grayscale(img)
    }
}

/// 256-bin intensity histogram of a grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; 256],
}

impl Histogram256 {
    pub fn from_gray(img: &Image) -> Result<Self, ImagingError> {
        if !img.is_gray() {
            return Err(ImagingError::NotGray);
        }
        let mut counts = [0u64; 256];
        for &v in &img.data {
            counts[v as usize] += 1;
        }
        Ok(Self { counts })
    }

    pub fn from_counts(counts: [u64; 256]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    /// Sum of all bins; kept consistent by construction.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Otsu's threshold at a chosen float precision: the split t maximizing the
/// between-class variance ω₀·ω₁·(μ₀−μ₁)². Ties break toward the smallest t;
/// a histogram with a single populated bin yields that bin.
pub fn otsu_threshold_with<R: Real>(h: &Histogram256) -> Result<u8, ImagingError> {
    let total = h.total();
    if total == 0 {
        return Err(ImagingError::EmptyHistogram);
    }
    let counts = h.counts();
    let first = counts.iter().position(|&c| c > 0).expect("total > 0");
    let last = counts.iter().rposition(|&c| c > 0).expect("total > 0");
    if first == last {
        // Degenerate single class: every split has zero variance, so the
        // sole populated bin is returned by convention.
        return Ok(first as u8);
    }

    let n = R::from_u64(total).expect("count fits float");
    let mut mean_total = R::zero();
    let mut probs = [R::zero(); 256];
    for (i, &c) in counts.iter().enumerate() {
        let p = R::from_u64(c).expect("count fits float") / n;
        probs[i] = p;
        mean_total += R::from_usize_lossy(i) * p;
    }

    let mut best_t = first as u8;
    let mut best_var = R::neg_infinity();
    let mut w0 = R::zero();
    let mut sum0 = R::zero();
    for (t, &p) in probs.iter().enumerate() {
        w0 += p;
        sum0 += R::from_usize_lossy(t) * p;
        let w1 = R::one() - w0;
        if w0 <= R::zero() || w1 <= R::zero() {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (mean_total - sum0) / w1;
        let d = mu0 - mu1;
        let var = w0 * w1 * d * d;
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

/// [`otsu_threshold_with`] at the crate's default precision.
pub fn otsu_threshold(h: &Histogram256) -> Result<u8, ImagingError> {
    otsu_threshold_with::<Scalar>(h)
}

/// Global threshold: strictly greater than `t` maps to 255, else 0.
pub fn binarize(img: &Image, t: u8) -> Result<Image, ImagingError> {
    if !img.is_gray() {
        return Err(ImagingError::NotGray);
    }
    let data = img.data.iter().map(|&v| if v > t { 255 } else { 0 }).collect();
    Image::from_raw(img.width, img.height, CHANNELS_GRAY, data)
}

/// Sub-raster copy. Out-of-bounds boxes are clamped (detector jitter near
/// edges is expected); a box that clamps to zero area is an error.
pub fn crop(img: &Image, rect: Rect) -> Result<Image, ImagingError> {
    let r = rect.clamp_to(img.width, img.height);
    if r.w == 0 || r.h == 0 {
        return Err(ImagingError::EmptyCrop {
            width: img.width,
            height: img.height,
        });
    }
    let c = img.channels as usize;
    let row_bytes = r.w as usize * c;
    let mut data = Vec::with_capacity(row_bytes * r.h as usize);
    for row in r.y..r.y + r.h {
        let start = (row as usize * img.width as usize + r.x as usize) * c;
        data.extend_from_slice(&img.data[start..start + row_bytes]);
    }
    Image::from_raw(r.w, r.h, img.channels, data)
}

/// Copies `src` into `dst` with its top-left corner at (x, y).
pub fn blit(dst: &mut Image, src: &Image, x: u32, y: u32) -> Result<(), ImagingError> {
    if dst.channels != src.channels {
        return Err(ImagingError::ChannelMismatch(dst.channels, src.channels));
    }
    if x.checked_add(src.width).is_none_or(|r| r > dst.width)
        || y.checked_add(src.height).is_none_or(|b| b > dst.height)
    {
        return Err(ImagingError::BlitOutOfBounds {
            src_w: src.width,
            src_h: src.height,
            x,
            y,
            dst_w: dst.width,
            dst_h: dst.height,
        });
    }
    let c = dst.channels as usize;
    let row_bytes = src.width as usize * c;
    for row in 0..src.height {
        let s = row as usize * row_bytes;
        let d = ((y + row) as usize * dst.width as usize + x as usize) * c;
        dst.data[d..d + row_bytes].copy_from_slice(&src.data[s..s + row_bytes]);
    }
    Ok(())
}

/// Decodes PNG or JPEG bytes; gray sources stay 1-channel, everything else
/// lands as RGB.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImagingError> {
    let dynimg = image::load_from_memory(bytes)?;
    let gray_source = matches!(
        dynimg.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    if gray_source {
        let buf = dynimg.to_luma8();
        Image::from_raw(buf.width(), buf.height(), CHANNELS_GRAY, buf.into_raw())
    } else {
        let buf = dynimg.to_rgb8();
        Image::from_raw(buf.width(), buf.height(), CHANNELS_RGB, buf.into_raw())
    }
}

fn color_type(img: &Image) -> image::ExtendedColorType {
    if img.is_gray() {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    }
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        &img.data,
        img.width,
        img.height,
        color_type(img),
    )?;
    Ok(out)
}

pub fn encode_jpeg(img: &Image, quality: u8) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality).write_image(
        &img.data,
        img.width,
        img.height,
        color_type(img),
    )?;
    Ok(out)
}

pub fn load_image(path: &Path) -> Result<Image, ImagingError> {
    let bytes = std::fs::read(path)?;
    decode_image(&bytes)
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), ImagingError> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rgb1(r: u8, g: u8, b: u8) -> Image {
        Image::from_raw(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn grayscale_frozen_values() {
        assert_eq!(to_grayscale(&rgb1(255, 255, 255)).unwrap().gray(0, 0), 255);
        assert_eq!(to_grayscale(&rgb1(255, 0, 0)).unwrap().gray(0, 0), 76);
        assert_eq!(to_grayscale(&rgb1(0, 255, 0)).unwrap().gray(0, 0), 150);
        assert_eq!(to_grayscale(&rgb1(0, 0, 255)).unwrap().gray(0, 0), 29);
        assert_eq!(to_grayscale(&rgb1(10, 20, 30)).unwrap().gray(0, 0), 18);
    }

    #[test]
    fn grayscale_uniform_image() {
        let img = Image::from_raw(2, 2, 3, [10, 20, 30].repeat(4)).unwrap();
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g.data(), &[18, 18, 18, 18]);
    }

    #[test]
    fn grayscale_rejects_gray_input() {
        let g = Image::new_fill(2, 2, 1, 7).unwrap();
        assert!(matches!(to_grayscale(&g), Err(ImagingError::NotRgb)));
        // ensure_gray is the identity path
        assert_eq!(ensure_gray(&g).unwrap(), g);
    }

    #[test]
    fn ensure_gray_twice_equals_once() {
        let img = Image::from_raw(3, 1, 3, vec![1, 2, 3, 200, 100, 50, 255, 0, 0]).unwrap();
        let once = ensure_gray(&img).unwrap();
        let twice = ensure_gray(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn histogram_counts_and_total() {
        let img = Image::from_raw(2, 2, 1, vec![0, 0, 7, 255]).unwrap();
        let h = Histogram256::from_gray(&img).unwrap();
        assert_eq!(h.counts()[0], 2);
        assert_eq!(h.counts()[7], 1);
        assert_eq!(h.counts()[255], 1);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn otsu_rejects_empty() {
        let h = Histogram256::from_counts([0; 256]);
        assert!(matches!(otsu_threshold(&h), Err(ImagingError::EmptyHistogram)));
    }

    #[test]
    fn otsu_single_bin_returns_that_bin() {
        let mut counts = [0u64; 256];
        counts[100] = 500;
        let h = Histogram256::from_counts(counts);
        assert_eq!(otsu_threshold(&h).unwrap(), 100);
    }

    #[test]
    fn otsu_two_spikes_ties_to_smallest() {
        let mut counts = [0u64; 256];
        counts[10] = 50;
        counts[200] = 50;
        let h = Histogram256::from_counts(counts);
        assert_eq!(otsu_threshold(&h).unwrap(), 10);
    }

    #[test]
    fn otsu_matches_exact_oracle_on_seeded_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut counts = [0u64; 256];
            for c in counts.iter_mut() {
                *c = rng.random_range(0..=255u64);
            }
            let h = Histogram256::from_counts(counts);
            let got = otsu_threshold(&h).unwrap();
            let want = test_oracle::otsu_exact(&counts).unwrap();
            assert_eq!(got, want, "counts={counts:?}");
        }
    }

    #[test]
    fn binarize_strict_greater_rule() {
        let img = Image::from_raw(3, 1, 1, vec![10, 100, 200]).unwrap();
        let b = binarize(&img, 100).unwrap();
        assert_eq!(b.data(), &[0, 0, 255]);
    }

    #[test]
    fn binarize_all_zero_at_zero_threshold() {
        let img = Image::new_fill(4, 2, 1, 0).unwrap();
        let b = binarize(&img, 0).unwrap();
        assert!(b.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn binarize_idempotent_at_zero_on_binary() {
        let img = Image::from_raw(4, 1, 1, vec![3, 130, 255, 0]).unwrap();
        let once = binarize(&img, 100).unwrap();
        let twice = binarize(&once, 0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn crop_full_box_is_identity() {
        let img = Image::from_raw(3, 2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let c = crop(&img, Rect::new(0, 0, 3, 2)).unwrap();
        assert_eq!(c, img);
    }

    #[test]
    fn crop_coordinates() {
        let mut img = Image::new_fill(10, 10, 1, 0).unwrap();
        img.set_pixel(2, 3, &[42]);
        let c = crop(&img, Rect::new(2, 3, 4, 5)).unwrap();
        assert_eq!((c.width(), c.height()), (4, 5));
        assert_eq!(c.gray(0, 0), 42);
    }

    #[test]
    fn crop_clamps_overhang() {
        let img = Image::new_fill(10, 4, 1, 9).unwrap();
        let c = crop(&img, Rect::new(7, 0, 6, 4)).unwrap();
        assert_eq!((c.width(), c.height()), (3, 4));
    }

    #[test]
    fn crop_zero_area_is_error() {
        let img = Image::new_fill(4, 4, 1, 0).unwrap();
        assert!(crop(&img, Rect::new(4, 0, 3, 3)).is_err());
        assert!(crop(&img, Rect::new(0, 0, 0, 3)).is_err());
    }

    #[test]
    fn blit_places_pixels() {
        let mut dst = Image::new_fill(5, 5, 1, 0).unwrap();
        let src = Image::new_fill(2, 2, 1, 9).unwrap();
        blit(&mut dst, &src, 3, 2).unwrap();
        assert_eq!(dst.gray(3, 2), 9);
        assert_eq!(dst.gray(4, 3), 9);
        assert_eq!(dst.gray(2, 2), 0);
        assert!(blit(&mut dst, &src, 4, 4).is_err());
    }

    #[test]
    fn png_roundtrip_gray_and_rgb() {
        let g = Image::from_raw(3, 2, 1, vec![0, 50, 100, 150, 200, 250]).unwrap();
        let back = decode_image(&encode_png(&g).unwrap()).unwrap();
        assert_eq!(back, g);

        let c = Image::from_raw(2, 1, 3, vec![255, 0, 0, 0, 0, 255]).unwrap();
        let back = decode_image(&encode_png(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn jpeg_decodes_to_plausible_values() {
        let img = Image::new_fill(16, 16, 3, 200).unwrap();
        let jpg = encode_jpeg(&img, 90).unwrap();
        let back = decode_image(&jpg).unwrap();
        assert_eq!((back.width(), back.height()), (16, 16));
        // lossy codec: stay within a small band
        assert!(back.data().iter().all(|&v| (190..=210).contains(&v)));
    }

    #[test]
    fn decode_garbage_is_error() {
        assert!(decode_image(b"this is not an image").is_err());
    }

    proptest! {
        #[test]
        fn otsu_equals_exact_oracle(counts in proptest::array::uniform32(0u64..=255)) {
            // spread 32 random counts over the 256 bins deterministically
            let mut full = [0u64; 256];
            for (i, &c) in counts.iter().enumerate() {
                full[i * 8 + (c as usize % 8)] = c;
            }
            let h = Histogram256::from_counts(full);
            if h.total() > 0 {
                prop_assert_eq!(otsu_threshold(&h).unwrap(), test_oracle::otsu_exact(&full).unwrap());
            }
        }

        #[test]
        fn otsu_f32_and_f64_stay_in_range(counts in proptest::array::uniform32(0u64..=255)) {
            let mut full = [0u64; 256];
            for (i, &c) in counts.iter().enumerate() {
                full[i] = c;
            }
            let h = Histogram256::from_counts(full);
            if h.total() > 0 {
                let t64 = otsu_threshold_with::<f64>(&h).unwrap() as i32;
                let t32 = otsu_threshold_with::<f32>(&h).unwrap() as i32;
                // both precisions must land inside the populated range
                let first = full.iter().position(|&c| c > 0).unwrap() as i32;
                let last = full.iter().rposition(|&c| c > 0).unwrap() as i32;
                prop_assert!(t64 >= first.min(last) && t64 <= last);
                prop_assert!(t32 >= first.min(last) && t32 <= last);
            }
        }

        #[test]
        fn binarize_emits_only_0_and_255(data in proptest::collection::vec(any::<u8>(), 1..64), t in any::<u8>()) {
            let w = data.len() as u32;
            let img = Image::from_raw(w, 1, 1, data).unwrap();
            let b = binarize(&img, t).unwrap();
            prop_assert_eq!(b.data().len(), img.data().len());
            prop_assert!(b.data().iter().all(|&v| v == 0 || v == 255));
        }

        #[test]
        fn crop_composition(
            bx in 0u32..6, by in 0u32..6, bw in 1u32..8, bh in 1u32..8,
            cx in 0u32..4, cy in 0u32..4, cw in 1u32..6, ch in 1u32..6,
        ) {
            // 12x12 gradient image
            let data: Vec<u8> = (0..144u32).map(|i| (i % 251) as u8).collect();
            let img = Image::from_raw(12, 12, 1, data).unwrap();
            let b = Rect::new(bx, by, bw, bh).clamp_to(12, 12);
            prop_assume!(b.w > 0 && b.h > 0);
            let inner = crop(&img, b).unwrap();
            let c = Rect::new(cx, cy, cw, ch).clamp_to(b.w, b.h);
            prop_assume!(c.w > 0 && c.h > 0);
            let two_step = crop(&inner, c).unwrap();
            let composed = crop(&img, Rect::new(b.x + c.x, b.y + c.y, c.w, c.h)).unwrap();
            prop_assert_eq!(two_step, composed);
        }
    }
}
