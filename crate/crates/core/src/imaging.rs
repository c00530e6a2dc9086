//! Grayscale image I/O, resampling, background masks and intensity
//! histograms.
//!
//! Intensities live in `[0, 1]` in memory, `[0, 255]` on disk and `[-1, 1]`
//! at the network boundary. All conversions are fixed affine maps.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    source_path: Option<PathBuf>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::Dimension(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidInput(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Image { height, width, pixels, source_path: None })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Image::new(height, width, pixels)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn with_source_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    /// 8-bit quantisation used on disk.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(height, width, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// `[1, H, W]` tensor in the network range `[-1, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.pixels.iter().map(|&v| T::of(2.0 * v - 1.0)).collect();
        Tensor::from_vec(&[1, self.height, self.width], data).expect("image shape")
    }

    /// Inverse of [`Image::to_tensor`]; values are clamped into range.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = t.dims3();
        if c != 1 {
            return Err(Error::Shape(format!("expected a single-channel tensor, got {c} channels")));
        }
        let pixels = t.data().iter().map(|v| ((v.f64() + 1.0) * 0.5).clamp(0.0, 1.0)).collect();
        Image::new(h, w, pixels)
    }
}

/// Loads an 8-bit grayscale raster, mapping intensities to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    let dynimg = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode { path: path.to_path_buf(), message: other.to_string() },
    })?;
    let gray = match dynimg {
        DynamicImage::ImageLuma8(g) => g,
        DynamicImage::ImageLuma16(_) => {
            return Err(Error::UnsupportedImage { path: path.to_path_buf(), property: "bit depth 16 (expected 8)".into() })
        }
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                property: format!("color type {:?} (expected 8-bit grayscale)", other.color()),
            })
        }
    };
    let (w, h) = gray.dimensions();
    Ok(Image::from_u8(h as usize, w as usize, gray.as_raw())?.with_source_path(path))
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    save_gray_u8(img.height, img.width, img.to_u8(), path.as_ref())
}

pub(crate) fn save_gray_u8(height: usize, width: usize, bytes: Vec<u8>, path: &Path) -> Result<()> {
    let buf = GrayImage::from_raw(width as u32, height as u32, bytes).expect("buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode { path: path.to_path_buf(), message: other.to_string() },
    })
}

/// Per-output-sample source taps along one axis.
fn axis_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            if n_out >= n_in {
                // bilinear with half-pixel centres
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let frac = src - i0 as f64;
                if frac > 0.0 && i0 + 1 < n_in {
                    vec![(i0, 1.0 - frac), (i0 + 1, frac)]
                } else {
                    vec![(i0, 1.0)]
                }
            } else {
                // area average over the footprint of the output sample
                let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
                let mut taps = Vec::new();
                let mut i = a.floor() as usize;
                while (i as f64) < b && i < n_in {
                    let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                    if overlap > 0.0 {
                        taps.push((i, overlap / scale));
                    }
                    i += 1;
                }
                taps
            }
        })
        .collect()
}

/// Separable resampling: bilinear when enlarging, area-averaging (the
/// antialiased limit of bilinear) when shrinking.
pub fn resize(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::Dimension(format!("resize target must be at least {MIN_SIDE}x{MIN_SIDE}")));
    }
    if height == img.height && width == img.width {
        return Ok(img.clone());
    }
    let wx = axis_weights(img.width, width);
    let wy = axis_weights(img.height, height);
    let mut rows = vec![0.0; img.height * width];
    for y in 0..img.height {
        let src = &img.pixels[y * img.width..(y + 1) * img.width];
        for (x, taps) in wx.iter().enumerate() {
            rows[y * width + x] = taps.iter().map(|&(i, w)| src[i] * w).sum();
        }
    }
    let mut out = vec![0.0; height * width];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..width {
            out[y * width + x] = taps.iter().map(|&(i, w)| rows[i * width + x] * w).sum::<f64>().clamp(0.0, 1.0);
        }
    }
    let mut res = Image::new(height, width, out)?;
    res.source_path = img.source_path.clone();
    Ok(res)
}

/// Boolean background map; `true` marks a background pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackgroundMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BackgroundMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Shape(format!("mask of {height}x{width} needs {} bits", height * width)));
        }
        Ok(BackgroundMask { height, width, bits })
    }

    pub fn full(height: usize, width: usize) -> Self {
        BackgroundMask { height, width, bits: vec![true; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Fraction of background pixels.
    pub fn coverage(&self) -> f64 {
        self.bits.iter().filter(|b| **b).count() as f64 / self.bits.len() as f64
    }

    /// Intersection-over-union with another mask of the same size.
    pub fn iou(&self, other: &BackgroundMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    fn check_matches(&self, img: &Image) -> Result<()> {
        if self.height != img.height || self.width != img.width {
            return Err(Error::Dimension(format!(
                "mask is {}x{} but image is {}x{}",
                self.height, self.width, img.height, img.width
            )));
        }
        Ok(())
    }
}

/// Reads a mask PNG; nonzero pixels are background.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BackgroundMask> {
    let img = load_image(path)?;
    let bits = img.pixels.iter().map(|v| *v > 0.0).collect();
    BackgroundMask::new(img.height, img.width, bits)
}

pub fn save_mask(mask: &BackgroundMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
    save_gray_u8(mask.height, mask.width, bytes, path.as_ref())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdMethod {
    /// Otsu's threshold on the image's own 256-level histogram.
    Otsu,
    /// Background where intensity is strictly below the value.
    Fixed(f64),
}

fn level(v: f64) -> usize {
    (v * 255.0).round().clamp(0.0, 255.0) as usize
}

/// Otsu threshold in intensity units: pixels whose 8-bit level is at most the
/// optimal level `t` satisfy `v < (t + 0.5) / 255`.
pub fn otsu_threshold(img: &Image) -> Result<f64> {
    let mut counts = [0u64; 256];
    for &v in &img.pixels {
        counts[level(v)] += 1;
    }
    if counts.iter().filter(|c| **c > 0).count() < 2 {
        return Err(Error::DegenerateThreshold);
    }
    let total = img.pixels.len() as f64;
    let sum_all: f64 = counts.iter().enumerate().map(|(i, c)| i as f64 * *c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best_t, mut best_var) = (0usize, -1.0);
    for (t, &c) in counts.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best_t = t;
        }
    }
    Ok((best_t as f64 + 0.5) / 255.0)
}

pub fn extract_background_mask(img: &Image, method: ThresholdMethod) -> Result<BackgroundMask> {
    let threshold = match method {
        ThresholdMethod::Otsu => otsu_threshold(img)?,
        ThresholdMethod::Fixed(t) => t,
    };
    let bits = img.pixels.iter().map(|&v| v < threshold).collect();
    BackgroundMask::new(img.height, img.width, bits)
}

/// Normalised intensity histogram over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    counts_normalized: Vec<f64>,
    intensity_range: (f64, f64),
}

impl Histogram {
    /// Normalises raw bin counts to unit sum.
    pub fn from_counts(counts: &[f64], intensity_range: (f64, f64)) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidInput("a histogram needs at least 2 bins".into()));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput("histogram counts must be finite and non-negative".into()));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("histogram has no mass".into()));
        }
        Ok(Histogram { counts_normalized: counts.iter().map(|c| c / total).collect(), intensity_range })
    }

    pub fn counts_normalized(&self) -> &[f64] {
        &self.counts_normalized
    }

    pub fn bin_count(&self) -> usize {
        self.counts_normalized.len()
    }

    /// Arithmetic mean of the bin values (1/N for any normalised histogram).
    pub fn mean_value(&self) -> f64 {
        self.counts_normalized.iter().sum::<f64>() / self.bin_count() as f64
    }

    pub fn intensity_range(&self) -> (f64, f64) {
        self.intensity_range
    }
}

/// Bin index of `v` among `bins` equal-width bins over `[0, 1]`.
pub fn bin_index(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Raw counts of mask-true pixels.
pub fn masked_counts(img: &Image, mask: &BackgroundMask, bins: usize) -> Result<Vec<f64>> {
    mask.check_matches(img)?;
    if bins < 2 {
        return Err(Error::InvalidInput("a histogram needs at least 2 bins".into()));
    }
    let mut counts = vec![0.0; bins];
    for (&v, &m) in img.pixels.iter().zip(&mask.bits) {
        if m {
            counts[bin_index(v, bins)] += 1.0;
        }
    }
    Ok(counts)
}

pub fn masked_histogram(img: &Image, mask: &BackgroundMask, bins: usize) -> Result<Histogram> {
    let counts = masked_counts(img, mask, bins)?;
    if counts.iter().all(|c| *c == 0.0) {
        return Err(Error::InvalidInput("background mask selects no pixels".into()));
    }
    Histogram::from_counts(&counts, (0.0, 1.0))
}
