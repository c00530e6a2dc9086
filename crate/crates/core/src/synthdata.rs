//! Procedural two-domain B-mode-like phantoms.
//!
//! Each image is a horizontal layered anatomy (dark top strip, attenuating
//! tissue, bright walls around a dark lumen) multiplied by a unit-mean
//! log-normal speckle field. The field is Gaussian-smoothed white noise, so
//! `speckle_grain` sets the correlation length and, through the log-amplitude
//! `speckle_contrast / sqrt(grain)`, the intensity spread. Optional
//! reverberation adds decaying periodic bright bands inside the lumen.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetLayout, MASKS, TEST_SOURCE, TEST_TARGET, TRAIN_SOURCE, TRAIN_TARGET};
use crate::error::{Error, Result};
use crate::imaging::{save_image, save_mask, BackgroundMask, Image};
use crate::trainer::derive_seed;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

const TOP_STRIP_FRAC: f64 = 0.05;
const TOP_STRIP_LEVEL: f64 = 0.05;
const TISSUE_LEVEL: f64 = 0.55;
const TISSUE_ATTENUATION: f64 = 0.15;
const LUMEN_LEVEL: f64 = 0.07;
const WALL_FRAC: f64 = 0.04;
const BAND_DECAY: f64 = 0.8;
const BAND_SIGMA: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reverberation {
    pub band_count: usize,
    pub band_brightness: f64,
    /// Distance between consecutive bands in pixels.
    pub band_spacing: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub image_size: usize,
    /// `(top_frac, bottom_frac)` of the image height.
    pub lumen_band: (f64, f64),
    pub wall_brightness: f64,
    /// Speckle correlation length in pixels.
    pub speckle_grain: f64,
    pub speckle_contrast: f64,
    pub reverberation: Option<Reverberation>,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            image_size: 64,
            lumen_band: (0.4, 0.7),
            wall_brightness: 0.85,
            speckle_grain: 4.0,
            speckle_contrast: 0.6,
            reverberation: None,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let (t, b) = self.lumen_band;
        let fail = |m: String| Err(Error::InvalidInput(m));
        if !(0.0 <= t && t < b && b <= 1.0) {
            return fail(format!("lumen band must satisfy 0 <= top < bottom <= 1, got ({t}, {b})"));
        }
        if self.speckle_grain.is_nan() || self.speckle_grain < 1.0 {
            return fail(format!("speckle_grain must be at least 1 px, got {}", self.speckle_grain));
        }
        if !(0.0..=1.0).contains(&self.speckle_contrast) || !(0.0..=1.0).contains(&self.wall_brightness) {
            return fail("speckle_contrast and wall_brightness must lie in [0, 1]".into());
        }
        if self.image_size < 8 {
            return fail(format!("image_size must be at least 8, got {}", self.image_size));
        }
        if let Some(r) = self.reverberation {
            if r.band_spacing.is_nan() || r.band_spacing <= 0.0 || !(0.0..=1.0).contains(&r.band_brightness) {
                return fail("reverberation needs positive spacing and brightness in [0, 1]".into());
            }
        }
        Ok(())
    }

    /// Row ranges `(top strip, lumen)` and wall thickness.
    fn layout(&self) -> (Range<usize>, Range<usize>, usize) {
        let h = self.image_size;
        let strip = (TOP_STRIP_FRAC * h as f64).round() as usize;
        let wall = ((WALL_FRAC * h as f64).round() as usize).max(2);
        let top = ((self.lumen_band.0 * h as f64).round() as usize).clamp(strip + wall, h);
        let bottom = ((self.lumen_band.1 * h as f64).round() as usize).clamp(top, h);
        (0..strip, top..bottom, wall)
    }
}

/// Gaussian-smoothed standard normal noise with unit marginal variance.
fn smooth_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as usize;
    let taps: Vec<f64> = (0..=2 * r).map(|i| (-((i as f64 - r as f64).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let norm1: f64 = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    let raw: Vec<f64> = (0..ph * pw).map(|_| rng.sample(StandardNormal)).collect();
    // Valid convolution over the padded canvas keeps the field stationary.
    let mut rows = vec![0.0; ph * w];
    for y in 0..ph {
        for x in 0..w {
            rows[y * w + x] = taps.iter().enumerate().map(|(k, t)| t * raw[y * pw + x + k]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * w + x]).sum::<f64>() / (norm1 * norm1);
        }
    }
    out
}

/// Renders one phantom and its exact background mask (top strip and lumen).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Image, BackgroundMask)> {
    spec.validate()?;
    let n = spec.image_size;
    let (strip, lumen, wall) = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let row_level = |y: usize| -> f64 {
        if strip.contains(&y) || lumen.contains(&y) {
            if lumen.contains(&y) {
                LUMEN_LEVEL
            } else {
                TOP_STRIP_LEVEL
            }
        } else if (lumen.start.saturating_sub(wall)..lumen.start).contains(&y) || (lumen.end..lumen.end + wall).contains(&y) {
            spec.wall_brightness
        } else {
            TISSUE_LEVEL * (1.0 - TISSUE_ATTENUATION * y as f64 / n as f64)
        }
    };
    let band = |y: usize| -> f64 {
        let Some(r) = spec.reverberation else { return 0.0 };
        if !lumen.contains(&y) {
            return 0.0;
        }
        (0..r.band_count)
            .map(|k| {
                let centre = lumen.start as f64 + (k + 1) as f64 * r.band_spacing;
                r.band_brightness * BAND_DECAY.powi(k as i32) * (-((y as f64 - centre).powi(2)) / (2.0 * BAND_SIGMA * BAND_SIGMA)).exp()
            })
            .sum()
    };

    let s = spec.speckle_contrast / spec.speckle_grain.sqrt();
    let field = if s > 0.0 { smooth_noise(&mut rng, n, n, spec.speckle_grain / 2.0) } else { vec![0.0; n * n] };
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        let base = row_level(y) + band(y);
        for x in 0..n {
            let speckle = (s * field[y * n + x] - s * s / 2.0).exp();
            pixels.push((base * speckle).clamp(0.0, 1.0));
        }
    }
    let bits = (0..n * n).map(|i| strip.contains(&(i / n)) || lumen.contains(&(i / n))).collect();
    Ok((Image::new(n, n, pixels)?, BackgroundMask::new(n, n, bits)?))
}

/// Longest run of rows whose mask coverage exceeds 90%.
pub fn lumen_rows(mask: &BackgroundMask) -> Range<usize> {
    let w = mask.width();
    let full = |y: usize| (0..w).filter(|&x| mask.get(y, x)).count() as f64 > 0.9 * w as f64;
    let (mut best, mut start) = (0..0, None);
    for y in 0..=mask.height() {
        match (y < mask.height() && full(y), start) {
            (true, None) => start = Some(y),
            (false, Some(s)) => {
                if y - s > best.len() {
                    best = s..y;
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Strength of periodic structure across lumen rows: the largest
/// autocovariance (divided by the row count, not by the variance) of the
/// de-meaned masked row-mean profile over lags `2..=n/2`, floored at zero.
pub fn periodicity_score(img: &Image, mask: &BackgroundMask) -> Result<f64> {
    if (mask.height(), mask.width()) != (img.height(), img.width()) {
        return Err(Error::Dimension("mask and image sizes differ".into()));
    }
    let rows = lumen_rows(mask);
    let profile: Vec<f64> = rows
        .map(|y| {
            let sel: Vec<f64> = (0..img.width()).filter(|&x| mask.get(y, x)).map(|x| img.get(y, x)).collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        })
        .collect();
    let n = profile.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!("lumen spans {n} rows; need at least 4")));
    }
    let mean = profile.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = profile.iter().map(|v| v - mean).collect();
    let best = (2..=n / 2)
        .map(|lag| (0..n - lag).map(|i| d[i] * d[i + lag]).sum::<f64>() / n as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best.max(0.0))
}

/// Two-domain corpus description; also the manifest content.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub source: PhantomSpec,
    pub target: PhantomSpec,
    pub n_train: usize,
    pub n_test: usize,
    /// Per-image uniform jitter applied to both lumen-band fractions.
    pub lumen_jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    #[serde(flatten)]
    pub spec: CorpusSpec,
}

pub const DEFAULT_LUMEN_JITTER: f64 = 0.05;

const STREAM_ANATOMY_TRAIN: u64 = 11;
const STREAM_ANATOMY_TEST: u64 = 12;
const STREAM_SPECKLE_TRAIN: u64 = 13;
const STREAM_SPECKLE_TEST: u64 = 14;

fn jittered(base: &PhantomSpec, anatomy_seed: u64, speckle_seed: u64, jitter: f64) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(anatomy_seed);
    let (t, b) = base.lumen_band;
    let (mut dt, mut db) = (0.0, 0.0);
    if jitter > 0.0 {
        dt = rng.gen_range(-jitter..=jitter);
        db = rng.gen_range(-jitter..=jitter);
    }
    let top = (t + dt).clamp(0.0, 0.95);
    let bottom = (b + db).clamp(top + 0.05, 1.0);
    PhantomSpec { lumen_band: (top, bottom), seed: speckle_seed, ..*base }
}

pub fn train_name(domain: char, i: usize) -> String {
    format!("{domain}_train_{i:04}.png")
}

pub fn test_name(i: usize) -> String {
    format!("test_{i:04}.png")
}

/// Per-image specs: `(directory, file name, spec)` for the whole corpus.
pub fn corpus_plan(spec: &CorpusSpec) -> Vec<(&'static str, String, PhantomSpec)> {
    let mut out = Vec::new();
    let j = spec.lumen_jitter;
    for i in 0..spec.n_train {
        let (s, t) = (&spec.source, &spec.target);
        let ps = jittered(s, derive_seed(s.seed, STREAM_ANATOMY_TRAIN, i as u64), derive_seed(s.seed, STREAM_SPECKLE_TRAIN, i as u64), j);
        let pt = jittered(t, derive_seed(t.seed, STREAM_ANATOMY_TRAIN, i as u64), derive_seed(t.seed, STREAM_SPECKLE_TRAIN, i as u64), j);
        out.push((TRAIN_SOURCE, train_name('s', i), ps));
        out.push((TRAIN_TARGET, train_name('t', i), pt));
    }
    for i in 0..spec.n_test {
        // Test pairs share anatomy; speckle and artefacts follow each domain.
        let anatomy = derive_seed(spec.source.seed, STREAM_ANATOMY_TEST, i as u64);
        let ps = jittered(&spec.source, anatomy, derive_seed(spec.source.seed, STREAM_SPECKLE_TEST, i as u64), j);
        let pt = jittered(&spec.target, anatomy, derive_seed(spec.target.seed, STREAM_SPECKLE_TEST, i as u64), j);
        out.push((TEST_SOURCE, test_name(i), ps));
        out.push((TEST_TARGET, test_name(i), pt));
    }
    out
}

/// Writes the standard layout, ground-truth masks and `manifest.json`.
pub fn generate_corpus_from(spec: &CorpusSpec, out_root: &Path) -> Result<CorpusManifest> {
    if spec.n_train == 0 || spec.n_test == 0 {
        return Err(Error::InvalidInput("n_train and n_test must be at least 1".into()));
    }
    spec.source.validate()?;
    spec.target.validate()?;
    if spec.source.image_size != spec.target.image_size {
        return Err(Error::InvalidInput("source and target image sizes differ".into()));
    }
    let layout = DatasetLayout::new(out_root);
    for dir in [TRAIN_SOURCE, TRAIN_TARGET, TEST_SOURCE, TEST_TARGET, MASKS] {
        let d = layout.root.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for (dir, name, ps) in corpus_plan(spec) {
        let (img, mask) = generate_phantom(&ps)?;
        save_image(&img, layout.root.join(dir).join(&name))?;
        save_mask(&mask, layout.masks().join(&name))?;
    }
    let manifest = CorpusManifest { version: MANIFEST_VERSION, spec: spec.clone() };
    let path = out_root.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn generate_corpus(
    spec_source: &PhantomSpec,
    spec_target: &PhantomSpec,
    n_train: usize,
    n_test: usize,
    out_root: &Path,
) -> Result<CorpusManifest> {
    let spec = CorpusSpec { source: *spec_source, target: *spec_target, n_train, n_test, lumen_jitter: DEFAULT_LUMEN_JITTER };
    generate_corpus_from(&spec, out_root)
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("bad manifest {}: {e}", path.display())))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Dataset(format!("unsupported manifest version {}", m.version)));
    }
    Ok(m)
}

/// Rebuilds a corpus from its manifest.
pub fn regenerate(manifest: &Path, out_root: &Path) -> Result<CorpusManifest> {
    generate_corpus_from(&read_manifest(manifest)?.spec, out_root)
}

/// Bundled two-domain setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Texture-only gap: fine, high-contrast source speckle against coarse
    /// target speckle.
    TextureShift,
    /// The same texture gap plus reverberation bands in the source lumen.
    Reverb,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "texture-shift" => Ok(Preset::TextureShift),
            "reverb" => Ok(Preset::Reverb),
            other => Err(Error::InvalidInput(format!("unknown preset `{other}` (expected texture-shift or reverb)"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::TextureShift => "texture-shift",
            Preset::Reverb => "reverb",
        }
    }

    /// `(source, target)` specs.
    pub fn specs(self, seed: u64, image_size: usize) -> (PhantomSpec, PhantomSpec) {
        let base = PhantomSpec { image_size, ..PhantomSpec::default() };
        let source = PhantomSpec {
            speckle_grain: 1.5,
            speckle_contrast: 0.7,
            seed: derive_seed(seed, 21, 0),
            reverberation: match self {
                Preset::TextureShift => None,
                Preset::Reverb => Some(Reverberation { band_count: 3, band_brightness: 0.3, band_spacing: 5.0 }),
            },
            ..base
        };
        let target = PhantomSpec { speckle_grain: 6.0, speckle_contrast: 0.7, seed: derive_seed(seed, 22, 0), ..base };
        (source, target)
    }

    pub fn corpus(self, seed: u64, image_size: usize, n_train: usize, n_test: usize) -> CorpusSpec {
        let (source, target) = self.specs(seed, image_size);
        CorpusSpec { source, target, n_train, n_test, lumen_jitter: DEFAULT_LUMEN_JITTER }
    }
}

/// Paths of a generated corpus that callers commonly need.
pub fn manifest_path(root: &Path) -> PathBuf {
    root.join(MANIFEST)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{extract_background_mask, masked_counts, Histogram, ThresholdMethod};
    use crate::metrics::bhattacharyya;

    #[test]
    fn noise_free_limit_is_piecewise_constant() {
        let spec = PhantomSpec { speckle_contrast: 0.0, ..Default::default() };
        let (img, mask) = generate_phantom(&spec).unwrap();
        let (strip, lumen, wall) = spec.layout();
        let row = |y: usize| (0..64).map(|x| img.get(y, x)).collect::<Vec<_>>();
        for y in 0..64 {
            assert!(row(y).iter().all(|v| *v == row(y)[0]));
        }
        let wall_px = img.get(lumen.start - 1, 10);
        let lumen_px = img.get(lumen.start + 2, 10);
        assert!(lumen_px < wall_px);
        assert_eq!(wall_px, spec.wall_brightness);
        assert_eq!(img.get(lumen.end + wall - 1, 3), spec.wall_brightness);
        assert!(mask.get(strip.start, 0) && mask.get(lumen.start, 0) && !mask.get(lumen.start - 1, 0));
        let expect = (strip.len() + lumen.len()) as f64 / 64.0;
        assert!((mask.coverage() - expect).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let s = PhantomSpec::default();
        assert_eq!(generate_phantom(&s).unwrap(), generate_phantom(&s).unwrap());
        let other = PhantomSpec { seed: 1, ..s };
        assert_ne!(generate_phantom(&s).unwrap().0, generate_phantom(&other).unwrap().0);
    }

    #[test]
    fn invalid_specs_rejected() {
        for bad in [
            PhantomSpec { lumen_band: (0.6, 0.5), ..Default::default() },
            PhantomSpec { speckle_grain: 0.5, ..Default::default() },
            PhantomSpec { speckle_contrast: 1.5, ..Default::default() },
        ] {
            assert!(generate_phantom(&bad).is_err());
        }
    }

    #[test]
    fn speckle_field_has_unit_mean() {
        let spec = PhantomSpec { image_size: 128, lumen_band: (0.9, 1.0), speckle_grain: 3.0, ..Default::default() };
        let (noisy, _) = generate_phantom(&spec).unwrap();
        let (clean, _) = generate_phantom(&PhantomSpec { speckle_contrast: 0.0, ..spec }).unwrap();
        let rows = 20..100;
        let ratio: f64 = rows.clone().flat_map(|y| (0..128).map(move |x| (y, x))).map(|(y, x)| noisy.get(y, x) / clean.get(y, x)).sum::<f64>()
            / (rows.len() * 128) as f64;
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn otsu_recovers_true_background() {
        for seed in 0..5 {
            let (img, truth) = generate_phantom(&PhantomSpec { seed, ..Default::default() }).unwrap();
            let otsu = extract_background_mask(&img, ThresholdMethod::Otsu).unwrap();
            assert!(otsu.iou(&truth) > 0.7, "seed {seed}: {}", otsu.iou(&truth));
        }
    }

    fn pooled(images: &[(Image, BackgroundMask)]) -> Histogram {
        let mut total = vec![0.0; 256];
        for (img, m) in images {
            let img = Image::from_u8(img.height(), img.width(), &img.to_u8()).unwrap();
            total.iter_mut().zip(masked_counts(&img, m, 256).unwrap()).for_each(|(t, c)| *t += c);
        }
        Histogram::from_counts(&total, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn grain_changes_background_histogram() {
        let set = |grain: f64| -> Vec<(Image, BackgroundMask)> {
            (0..100).map(|i| generate_phantom(&PhantomSpec { speckle_grain: grain, seed: i, ..Default::default() }).unwrap()).collect()
        };
        let bd = bhattacharyya(&pooled(&set(2.0)), &pooled(&set(8.0))).unwrap();
        assert!(bd > 0.05, "{bd}");
    }

    #[test]
    fn reverberation_raises_periodicity() {
        let spec = PhantomSpec {
            reverberation: Some(Reverberation { band_count: 3, band_brightness: 0.3, band_spacing: 5.0 }),
            ..Default::default()
        };
        for seed in 0..5 {
            let (with, mask) = generate_phantom(&PhantomSpec { seed, ..spec }).unwrap();
            let (without, _) = generate_phantom(&PhantomSpec { seed, reverberation: None, ..spec }).unwrap();
            let (a, b) = (periodicity_score(&with, &mask).unwrap(), periodicity_score(&without, &mask).unwrap());
            assert!(a > 4.0 * b, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn lumen_rows_is_longest_full_run() {
        let spec = PhantomSpec::default();
        let (_, mask) = generate_phantom(&spec).unwrap();
        assert_eq!(lumen_rows(&mask), spec.layout().1);
    }

    #[test]
    fn corpus_counts_manifest_and_reproducibility() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let (s, t) = Preset::Reverb.specs(7, 32);
        generate_corpus(&s, &t, 4, 2, &a).unwrap();
        let layout = DatasetLayout::new(&a);
        let count = |p: PathBuf| crate::dataset::list_images(&p).unwrap().len();
        assert_eq!(
            (count(layout.train_source()), count(layout.train_target()), count(layout.test_source()), count(layout.test_target())),
            (4, 4, 2, 2)
        );
        assert_eq!(count(layout.masks()), 10);
        regenerate(&manifest_path(&a), &b).unwrap();
        for p in crate::dataset::list_images(&layout.test_source()).unwrap() {
            let rel = p.strip_prefix(&a).unwrap();
            assert_eq!(fs::read(&p).unwrap(), fs::read(b.join(rel)).unwrap());
        }
        assert_eq!(fs::read(manifest_path(&a)).unwrap(), fs::read(manifest_path(&b)).unwrap());
        assert!(generate_corpus(&s, &t, 0, 2, &b).is_err());
    }

    #[test]
    fn test_pairs_share_anatomy_but_not_bands() {
        let spec = Preset::Reverb.corpus(3, 64, 1, 6);
        let plan = corpus_plan(&spec);
        for i in 0..6 {
            let name = test_name(i);
            let s = plan.iter().find(|(d, n, _)| *d == TEST_SOURCE && *n == name).unwrap().2;
            let t = plan.iter().find(|(d, n, _)| *d == TEST_TARGET && *n == name).unwrap().2;
            assert_eq!(s.lumen_band, t.lumen_band);
            let (si, sm) = generate_phantom(&s).unwrap();
            let (ti, tm) = generate_phantom(&t).unwrap();
            assert_eq!(sm, tm);
            assert!(periodicity_score(&si, &sm).unwrap() > 4.0 * periodicity_score(&ti, &tm).unwrap());
        }
    }
}
