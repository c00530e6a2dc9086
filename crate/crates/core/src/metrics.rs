//! Background-histogram distances (Bhattacharyya, correlation) and SSIM.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, file_name};
use crate::error::{Error, Result};
use crate::imaging::{
    extract_background_mask, load_image, load_mask, masked_counts, save_image, BackgroundMask, Histogram, Image,
    ThresholdMethod,
};

/// Slack allowed before the inner Bhattacharyya term is clamped to `[0, 1]`.
pub const BD_CLAMP_TOLERANCE: f64 = 1e-9;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DEFAULT_BINS: usize = 256;

fn check_bins(h1: &Histogram, h2: &Histogram) -> Result<()> {
    if h1.bin_count() != h2.bin_count() {
        return Err(Error::InvalidInput(format!("bin counts differ: {} vs {}", h1.bin_count(), h2.bin_count())));
    }
    Ok(())
}

/// `sqrt(1 - sum_I sqrt(h1(I) h2(I)) / sqrt(mean(h1) mean(h2) N^2))`.
///
/// 0 for identical histograms, 1 for disjoint supports.
pub fn bhattacharyya(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    check_bins(h1, h2)?;
    let n = h1.bin_count() as f64;
    let (m1, m2) = (h1.mean_value(), h2.mean_value());
    if m1 <= 0.0 || m2 <= 0.0 {
        return Err(Error::InvalidInput("histogram has zero mean".into()));
    }
    let overlap: f64 = h1.counts_normalized().iter().zip(h2.counts_normalized()).map(|(a, b)| (a * b).sqrt()).sum();
    let inner = 1.0 - overlap / (m1 * m2 * n * n).sqrt();
    if !(-BD_CLAMP_TOLERANCE..=1.0 + BD_CLAMP_TOLERANCE).contains(&inner) {
        return Err(Error::InvalidInput(format!("Bhattacharyya inner term {inner} outside [0, 1]")));
    }
    Ok(inner.clamp(0.0, 1.0).sqrt())
}

/// Pearson correlation of the two bin vectors, clamped to `[-1, 1]`.
pub fn histogram_correlation(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    check_bins(h1, h2)?;
    let (a, b) = (h1.counts_normalized(), h2.counts_normalized());
    let (ma, mb) = (h1.mean_value(), h2.mean_value());
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        num += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((num / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Per-pixel SSIM values.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    /// Mean over the mask (or the whole map when no mask was given).
    pub mean_over_mask: f64,
}

impl SsimMap {
    /// Visualisation with `[-1, 1]` mapped affinely to `[0, 1]`.
    pub fn to_image(&self) -> Result<Image> {
        Image::new(self.height, self.width, self.values.iter().map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0)).collect())
    }
}

fn gaussian_taps() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect()
}

/// Separable Gaussian blur; at borders the window is truncated and
/// renormalised.
fn blur(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        let len = if along_rows { w } else { h };
        for y in 0..h {
            for x in 0..w {
                let pos = if along_rows { x } else { y };
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(len - 1);
                let (mut acc, mut norm) = (0.0, 0.0);
                for q in lo..=hi {
                    let wt = taps[q + r - pos];
                    let v = if along_rows { src[y * w + q] } else { src[q * w + x] };
                    acc += wt * v;
                    norm += wt;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, range 1).
pub fn ssim(a: &Image, b: &Image, mask: Option<&BackgroundMask>) -> Result<(f64, SsimMap)> {
    let (h, w) = (a.height(), a.width());
    if (b.height(), b.width()) != (h, w) {
        return Err(Error::Dimension(format!("SSIM needs equal sizes, got {h}x{w} and {}x{}", b.height(), b.width())));
    }
    if let Some(m) = mask {
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::Dimension(format!("mask is {}x{}, images are {h}x{w}", m.height(), m.width())));
        }
    }
    let taps = gaussian_taps();
    let (pa, pb) = (a.pixels(), b.pixels());
    let prod = |f: &dyn Fn(usize) -> f64| (0..h * w).map(f).collect::<Vec<f64>>();
    let mu_a = blur(pa, h, w, &taps);
    let mu_b = blur(pb, h, w, &taps);
    let e_aa = blur(&prod(&|i| pa[i] * pa[i]), h, w, &taps);
    let e_bb = blur(&prod(&|i| pb[i] * pb[i]), h, w, &taps);
    let e_ab = blur(&prod(&|i| pa[i] * pb[i]), h, w, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let values: Vec<f64> = (0..h * w)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    let mean = match mask {
        Some(m) => {
            let sel: Vec<f64> = values.iter().zip(m.bits()).filter(|(_, b)| **b).map(|(v, _)| *v).collect();
            if sel.is_empty() {
                return Err(Error::InvalidInput("background mask selects no pixels".into()));
            }
            sel.iter().sum::<f64>() / sel.len() as f64
        }
        None => values.iter().sum::<f64>() / values.len() as f64,
    };
    Ok((mean, SsimMap { height: h, width: w, values, mean_over_mask: mean }))
}

/// Where background masks come from during set evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskSource {
    Otsu,
    Fixed(f64),
    /// `<dir>/<image file name>`; nonzero pixels are background.
    Files(PathBuf),
}

impl MaskSource {
    pub fn mask_for(&self, img: &Image, name: &str) -> Result<BackgroundMask> {
        let m = match self {
            MaskSource::Otsu => extract_background_mask(img, ThresholdMethod::Otsu)?,
            MaskSource::Fixed(t) => extract_background_mask(img, ThresholdMethod::Fixed(*t))?,
            MaskSource::Files(dir) => {
                let m = load_mask(dir.join(name))?;
                if (m.height(), m.width()) != (img.height(), img.width()) {
                    return Err(Error::Dimension(format!(
                        "mask {name} is {}x{}, image is {}x{}",
                        m.height(),
                        m.width(),
                        img.height(),
                        img.width()
                    )));
                }
                m
            }
        };
        if m.coverage() == 0.0 {
            return Err(Error::InvalidInput(format!("background mask of {name} selects no pixels")));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub filename: String,
    pub bd: f64,
    pub hc: f64,
    /// Present only when a same-named reference image exists.
    pub ssim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub bd_mean: f64,
    pub bd_sd: f64,
    pub hc_mean: f64,
    pub hc_sd: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_image: Vec<ImageMetrics>,
    pub bd_mean: f64,
    pub bd_sd: f64,
    pub hc_mean: f64,
    pub hc_sd: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn from_rows(mut per_image: Vec<ImageMetrics>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Dataset("no images to report".into()));
        }
        per_image.sort_by(|a, b| a.filename.cmp(&b.filename));
        let bd: Vec<f64> = per_image.iter().map(|r| r.bd).collect();
        let hc: Vec<f64> = per_image.iter().map(|r| r.hc).collect();
        let (bd_mean, bd_sd) = mean_sd(&bd);
        let (hc_mean, hc_sd) = mean_sd(&hc);
        Ok(MetricReport { per_image, bd_mean, bd_sd, hc_mean, hc_sd })
    }

    pub fn summary(&self) -> MetricSummary {
        MetricSummary { bd_mean: self.bd_mean, bd_sd: self.bd_sd, hc_mean: self.hc_mean, hc_sd: self.hc_sd, n: self.per_image.len() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("filename,bd,hc,ssim\n");
        for r in &self.per_image {
            let ssim = r.ssim.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{},{}", r.filename, r.bd, r.hc, ssim).expect("string write");
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serialises")
    }

    /// `BD mean (SD)` and `HC mean (SD)` lines to three decimals.
    pub fn table_lines(&self) -> String {
        format!("BD {:.3} ({:.3})\nHC {:.3} ({:.3})", self.bd_mean, self.bd_sd, self.hc_mean, self.hc_sd)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        fs::write(&json, self.summary_json()).map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub mask_source: MaskSource,
    pub bins: usize,
    /// Write one SSIM-map PNG per paired image here.
    pub ssim_maps_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { mask_source: MaskSource::Otsu, bins: DEFAULT_BINS, ssim_maps_dir: None }
    }
}

struct Loaded {
    image: Image,
    counts: Vec<f64>,
}

fn load_set(dir: &Path, opts: &EvalOptions) -> Result<BTreeMap<String, Loaded>> {
    let mut out = BTreeMap::new();
    for path in dataset::list_images_nonempty(dir)? {
        let name = file_name(&path);
        let image = load_image(&path)?;
        let mask = opts.mask_source.mask_for(&image, &name)?;
        let counts = masked_counts(&image, &mask, opts.bins)?;
        out.insert(name, Loaded { image, counts });
    }
    Ok(out)
}

/// Background-histogram BD/HC of every image in `translated_dir` against the
/// same-named image in `reference_dir`, or against the pooled reference
/// histogram when no such image exists. Each image's histogram uses its own
/// background mask. SSIM is reported for same-named pairs only.
pub fn evaluate_set_with(translated_dir: &Path, reference_dir: &Path, opts: &EvalOptions) -> Result<MetricReport> {
    let cand = load_set(translated_dir, opts)?;
    let refs = load_set(reference_dir, opts)?;
    let pooled = {
        let mut total = vec![0.0; opts.bins];
        for r in refs.values() {
            total.iter_mut().zip(&r.counts).for_each(|(t, c)| *t += c);
        }
        Histogram::from_counts(&total, (0.0, 1.0))?
    };
    if let Some(dir) = &opts.ssim_maps_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rows = Vec::with_capacity(cand.len());
    for (name, c) in &cand {
        let h = Histogram::from_counts(&c.counts, (0.0, 1.0))?;
        let (reference, ssim_value) = match refs.get(name) {
            Some(r) => {
                let (s, map) = ssim(&c.image, &r.image, None)?;
                if let Some(dir) = &opts.ssim_maps_dir {
                    save_image(&map.to_image()?, dir.join(name))?;
                }
                (Histogram::from_counts(&r.counts, (0.0, 1.0))?, Some(s))
            }
            None => (pooled.clone(), None),
        };
        rows.push(ImageMetrics {
            filename: name.clone(),
            bd: bhattacharyya(&h, &reference)?,
            hc: histogram_correlation(&h, &reference)?,
            ssim: ssim_value,
        });
    }
    MetricReport::from_rows(rows)
}

pub fn evaluate_set(translated_dir: &Path, reference_dir: &Path, mask_source: MaskSource, bins: usize) -> Result<MetricReport> {
    evaluate_set_with(translated_dir, reference_dir, &EvalOptions { mask_source, bins, ssim_maps_dir: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hist(v: &[f64]) -> Histogram {
        Histogram::from_counts(v, (0.0, 1.0)).unwrap()
    }

    fn random_hist(rng: &mut ChaCha8Rng, n: usize) -> Histogram {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        hist(&v)
    }

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.gen_range(0..=255) as f64 / 255.0).unwrap()
    }

    #[test]
    fn bhattacharyya_examples() {
        let u = hist(&[1.0; 8]);
        assert_eq!(bhattacharyya(&u, &u).unwrap(), 0.0);
        assert_eq!(bhattacharyya(&hist(&[1.0, 0.0, 2.0, 0.0]), &hist(&[0.0, 3.0, 0.0, 1.0])).unwrap(), 1.0);
        let d = bhattacharyya(&hist(&[1.0, 0.0]), &hist(&[0.5, 0.5])).unwrap();
        assert_relative_eq!(d, (1.0 - 0.5f64.sqrt()).sqrt(), max_relative = 1e-12);
        assert!(bhattacharyya(&hist(&[1.0, 1.0]), &hist(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn correlation_examples() {
        let h = hist(&[0.7, 0.3]);
        assert_relative_eq!(histogram_correlation(&h, &h).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(histogram_correlation(&h, &hist(&[0.3, 0.7])).unwrap(), -1.0, max_relative = 1e-12);
        let u = hist(&[1.0; 4]);
        assert!(matches!(histogram_correlation(&u, &hist(&[1.0, 2.0, 3.0, 4.0])), Err(Error::UndefinedCorrelation)));
        assert!(histogram_correlation(&h, &u).is_err());
    }

    fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
    }

    #[test]
    fn correlation_matches_pearson_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..300);
            let (a, b) = (random_hist(&mut rng, n), random_hist(&mut rng, n));
            let want = pearson_oracle(a.counts_normalized(), b.counts_normalized());
            assert!((histogram_correlation(&a, &b).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_examples() {
        let a = random_image(32, 24, 1);
        let (s, map) = ssim(&a, &a, None).unwrap();
        assert_eq!(s, 1.0);
        assert!(map.values.iter().all(|v| *v == 1.0));
        let inv = Image::from_fn(32, 24, |y, x| 1.0 - a.get(y, x)).unwrap();
        assert!(ssim(&a, &inv, None).unwrap().0 < 0.5);
        let zero = Image::constant(16, 16, 0.0).unwrap();
        let one = Image::constant(16, 16, 1.0).unwrap();
        let c1 = SSIM_K1 * SSIM_K1;
        assert_relative_eq!(ssim(&zero, &one, None).unwrap().0, c1 / (1.0 + c1), max_relative = 1e-9);
        assert!(ssim(&a, &random_image(32, 32, 1), None).is_err());
    }

    #[test]
    fn ssim_mask_mean_and_map_image() {
        let a = random_image(16, 16, 4);
        let b = random_image(16, 16, 5);
        let bits: Vec<bool> = (0..256).map(|i| i < 128).collect();
        let mask = BackgroundMask::new(16, 16, bits).unwrap();
        let (s, map) = ssim(&a, &b, Some(&mask)).unwrap();
        let want = map.values[..128].iter().sum::<f64>() / 128.0;
        assert_relative_eq!(s, want, max_relative = 1e-12);
        let img = map.to_image().unwrap();
        assert_relative_eq!(img.pixels()[0], (map.values[0] + 1.0) / 2.0, max_relative = 1e-12);
    }

    fn write_set(dir: &Path, images: &[(&str, &Image)]) {
        fs::create_dir_all(dir).unwrap();
        for (n, i) in images {
            save_image(i, dir.join(n)).unwrap();
        }
    }

    fn bimodal(seed: u64, dark: f64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(32, 32, |y, _| if y < 16 { dark + rng.gen_range(0.0..0.1) } else { 0.8 + rng.gen_range(0.0..0.15) })
            .unwrap()
    }

    #[test]
    fn self_evaluation_is_perfect_and_aggregates_consistently() {
        let dir = tempfile::tempdir().unwrap();
        let set = dir.path().join("set");
        let (a, b, c) = (bimodal(1, 0.0), bimodal(2, 0.05), bimodal(3, 0.1));
        write_set(&set, &[("b.png", &b), ("a.png", &a), ("c.png", &c)]);
        let maps = dir.path().join("maps");
        let opts = EvalOptions { ssim_maps_dir: Some(maps.clone()), ..Default::default() };
        let r = evaluate_set_with(&set, &set, &opts).unwrap();
        assert_eq!(r.per_image.iter().map(|r| r.filename.as_str()).collect::<Vec<_>>(), vec!["a.png", "b.png", "c.png"]);
        assert!(r.bd_mean.abs() < 1e-12 && r.bd_sd.abs() < 1e-12);
        assert!((r.hc_mean - 1.0).abs() < 1e-12);
        assert!(r.per_image.iter().all(|x| x.ssim == Some(1.0)));
        assert_eq!(dataset::list_images(&maps).unwrap().len(), 3);
        let (bm, bs) = mean_sd(&r.per_image.iter().map(|x| x.bd).collect::<Vec<_>>());
        assert_eq!((bm, bs), (r.bd_mean, r.bd_sd));
        assert!(r.table_lines().starts_with("BD 0.000 (0.000)\nHC 1.000 (0.000)"));
        let csv = r.to_csv();
        assert!(csv.starts_with("filename,bd,hc,ssim\na.png,"));
        let summary: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
        assert_eq!(summary["n"], 3);
    }

    #[test]
    fn unmatched_names_use_pooled_reference() {
        let dir = tempfile::tempdir().unwrap();
        let (cand, refs) = (dir.path().join("c"), dir.path().join("r"));
        let (a, b, c) = (bimodal(1, 0.0), bimodal(2, 0.05), bimodal(3, 0.0));
        write_set(&cand, &[("x.png", &a)]);
        write_set(&refs, &[("p.png", &b), ("q.png", &c)]);
        let opts = EvalOptions { mask_source: MaskSource::Fixed(0.5), ..Default::default() };
        let r = evaluate_set_with(&cand, &refs, &opts).unwrap();
        assert_eq!(r.per_image[0].ssim, None);
        assert!(r.to_csv().ends_with(",\n"));
        // Oracle: pooled counts over both references.
        let mut pooled = vec![0.0; 256];
        for img in [&b, &c] {
            let img = load_image_round_trip(img);
            let m = extract_background_mask(&img, ThresholdMethod::Fixed(0.5)).unwrap();
            pooled.iter_mut().zip(masked_counts(&img, &m, 256).unwrap()).for_each(|(p, v)| *p += v);
        }
        let a = load_image_round_trip(&a);
        let m = extract_background_mask(&a, ThresholdMethod::Fixed(0.5)).unwrap();
        let ha = Histogram::from_counts(&masked_counts(&a, &m, 256).unwrap(), (0.0, 1.0)).unwrap();
        let want = bhattacharyya(&ha, &hist(&pooled)).unwrap();
        assert_relative_eq!(r.bd_mean, want, max_relative = 1e-12);
        assert_eq!(r.bd_sd, 0.0);
    }

    fn load_image_round_trip(img: &Image) -> Image {
        Image::from_u8(img.height(), img.width(), &img.to_u8()).unwrap()
    }

    #[test]
    fn mask_files_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (set, masks) = (dir.path().join("s"), dir.path().join("m"));
        write_set(&set, &[("a.png", &bimodal(1, 0.0))]);
        fs::create_dir_all(&masks).unwrap();
        let src = MaskSource::Files(masks.clone());
        assert!(evaluate_set(&set, &set, src.clone(), 256).is_err());
        let none = BackgroundMask::new(32, 32, vec![false; 1024]).unwrap();
        crate::imaging::save_mask(&none, masks.join("a.png")).unwrap();
        assert!(evaluate_set(&set, &set, src.clone(), 256).unwrap_err().to_string().contains("no pixels"));
        let top: Vec<bool> = (0..1024).map(|i| i < 512).collect();
        crate::imaging::save_mask(&BackgroundMask::new(32, 32, top).unwrap(), masks.join("a.png")).unwrap();
        let r = evaluate_set(&set, &set, src, 256).unwrap();
        assert!(r.bd_mean.abs() < 1e-12);
        let empty = dir.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(matches!(evaluate_set(&empty, &set, MaskSource::Otsu, 256), Err(Error::Dataset(_))));
    }

    #[test]
    fn sample_sd() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(s, (5.0f64 / 3.0).sqrt(), max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn bd_symmetric_and_bounded(seed in any::<u64>(), n in 2usize..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_hist(&mut rng, n), random_hist(&mut rng, n));
            let d = bhattacharyya(&a, &b).unwrap();
            prop_assert_eq!(d, bhattacharyya(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
            let c = histogram_correlation(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn correlation_is_invariant_to_shift_and_scale(seed in any::<u64>(), shift in 0.0f64..5.0, k in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_hist(&mut rng, 16), random_hist(&mut rng, 16));
            let base = histogram_correlation(&a, &b).unwrap();
            let m = a.mean_value();
            let moved: Vec<f64> = a.counts_normalized().iter().map(|v| m + k * (v - m) + shift).collect();
            let moved = Histogram::from_counts(&moved, (0.0, 1.0));
            if let Ok(moved) = moved {
                prop_assert!((histogram_correlation(&moved, &b).unwrap() - base).abs() < 1e-9);
            }
        }

        #[test]
        fn ssim_is_symmetric(seed in any::<u64>()) {
            let a = random_image(16, 20, seed);
            let b = random_image(16, 20, seed ^ 0xff);
            prop_assert_eq!(ssim(&a, &b, None).unwrap().0, ssim(&b, &a, None).unwrap().0);
        }
    }
}
