//! Image quality metrics and the combined Avg score.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("image shapes differ: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

/// Peak signal-to-noise ratio over all pixels and channels, dynamic range 1.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shape((a.width, a.height), (b.width, b.height))?;
    if a.pixels.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>())
        .sum();
    Ok(psnr_from_mse(sum / (3 * a.pixels.len()) as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering: rows first, then columns.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// the positions where the window fits inside the image.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_shape((a.width, a.height), (b.width, b.height))?;
    let (w, h) = (a.width, a.height);
    if w.min(h) < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.pixels.iter().zip(&b.pixels).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(&a.pixels, w, h, &taps);
    let mu_b = filter_valid(&b.pixels, w, h, &taps);
    let aa = filter_valid(&prod(&|x, _| x * x), w, h, &taps);
    let bb = filter_valid(&prod(&|_, y| y * y), w, h, &taps);
    let ab = filter_valid(&prod(&|x, y| x * y), w, h, &taps);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean of the per-channel SSIM scores.
pub fn ssim_rgb(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    let mut s = 0.0;
    for c in 0..3 {
        s += ssim(&a.channel(c), &b.channel(c))?;
    }
    Ok(s / 3.0)
}

/// Geometric mean of LPIPS, `√(1 − SSIM)` and `10^(−PSNR/10)`.
pub fn avg_metric(psnr: f64, ssim: f64, lpips: f64) -> Result<f64> {
    if ssim > 1.0 {
        return Err(Error::invalid(format!("ssim {ssim} exceeds 1")));
    }
    if !(lpips >= 0.0) {
        return Err(Error::invalid(format!("lpips {lpips} must be non-negative")));
    }
    Ok((lpips * (1.0 - ssim).sqrt() * 10f64.powf(-psnr / 10.0)).cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `inf` when every rendered view matches its reference exactly.
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
    pub avg: Option<f64>,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value {t:?}"))),
    }
}

impl EvalReport {
    pub fn new(psnr: f64, ssim: f64, lpips: Option<f64>) -> Result<Self> {
        let avg = lpips.map(|l| avg_metric(psnr, ssim, l)).transpose()?;
        Ok(Self { psnr, ssim, lpips, avg })
    }

    /// Averages per-view PSNR and SSIM over `(rendered, reference)` pairs.
    pub fn from_views(pairs: &[(RgbImage, RgbImage)], lpips: Option<f64>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("no views to evaluate"));
        }
        let (mut p, mut s) = (0.0, 0.0);
        for (a, b) in pairs {
            p += psnr(a, b)?;
            s += ssim_rgb(a, b)?;
        }
        let n = pairs.len() as f64;
        Self::new(p / n, s / n, lpips)
    }

    pub const CSV_HEADER: &'static str = "psnr,ssim,lpips,avg";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let p = if self.psnr.is_infinite() { "inf".to_string() } else { self.psnr.to_string() };
        format!("{p},{},{},{}", self.ssim, opt(self.lpips), opt(self.avg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(w: usize, h: usize, rng: &mut impl Rng) -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn random_rgb(w: usize, h: usize, rng: &mut impl Rng) -> RgbImage {
        RgbImage::new(w, h, (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap()
    }

    /// Direct 2-D windowed statistics at every valid position.
    fn naive_ssim(a: &GrayImage, b: &GrayImage) -> f64 {
        let g = gaussian_taps(11, 1.5);
        let (w, h) = (a.width, a.height);
        let mut total = 0.0;
        let mut count = 0;
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = g[i] * g[j];
                        ma += wt * a.get(x + i, y + j);
                        mb += wt * b.get(x + i, y + j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = g[i] * g[j];
                        let da = a.get(x + i, y + j) - ma;
                        let db = b.get(x + i, y + j) - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn psnr_examples() {
        let a = RgbImage::filled(4, 3, [0.2, 0.5, 0.7]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = RgbImage::filled(4, 3, [0.3, 0.6, 0.8]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let zero = RgbImage::filled(2, 2, [0.0; 3]);
        let one = RgbImage::filled(2, 2, [1.0; 3]);
        assert_eq!(psnr(&zero, &one).unwrap(), 0.0);
        assert!(psnr(&a, &zero).is_err());
    }

    #[test]
    fn ssim_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_gray(16, 14, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = GrayImage::new(16, 14, a.pixels.iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 1.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = GrayImage::new(10, 20, vec![0.5; 200]).unwrap();
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ssim_matches_direct_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = random_gray(32, 32, &mut rng);
            let b = random_gray(32, 32, &mut rng);
            assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-9);
        }
    }

    #[test]
    fn avg_of_table_rows() {
        assert!((avg_metric(25.653, 0.898, 0.106).unwrap() - 0.045).abs() < 5e-4);
        assert!((avg_metric(24.424, 0.878, 0.132).unwrap() - 0.055).abs() < 5e-4);
        assert_eq!(avg_metric(12.0, 1.0, 0.4).unwrap(), 0.0);
        assert!(avg_metric(20.0, 1.01, 0.1).is_err());
    }

    #[test]
    fn report_json_keeps_infinity() {
        let r = EvalReport::new(f64::INFINITY, 1.0, None).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
        let back: EvalReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.csv_row(), "inf,1,,");
    }

    #[test]
    fn report_over_identical_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_rgb(12, 12, &mut rng);
        let r = EvalReport::from_views(&[(a.clone(), a)], Some(0.2)).unwrap();
        assert_eq!(r.psnr, f64::INFINITY);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.avg, Some(0.0));
    }

    proptest! {
        #[test]
        fn symmetric_and_permutation_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_rgb(12, 13, &mut rng);
            let b = random_rgb(12, 13, &mut rng);
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            prop_assert!((ssim_rgb(&a, &b).unwrap() - ssim_rgb(&b, &a).unwrap()).abs() < 1e-12);
            let perm = |img: &RgbImage| RgbImage::new(12, 13, img.pixels.iter().map(|p| [p[2], p[0], p[1]]).collect()).unwrap();
            prop_assert!((psnr(&perm(&a), &perm(&b)).unwrap() - psnr(&a, &b).unwrap()).abs() < 1e-9);
            prop_assert!((ssim_rgb(&perm(&a), &perm(&b)).unwrap() - ssim_rgb(&a, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn avg_is_monotone(p in 5.0f64..40.0, s in 0.0f64..0.99, l in 0.01f64..0.9, dp in 0.01f64..3.0, ds in 0.001f64..0.009, dl in 0.001f64..0.1) {
            let base = avg_metric(p, s, l).unwrap();
            prop_assert!(avg_metric(p + dp, s, l).unwrap() < base);
            prop_assert!(avg_metric(p, s + ds, l).unwrap() < base);
            prop_assert!(avg_metric(p, s, l + dl).unwrap() > base);
        }
    }
}
