//! Pixel-level selection: local image entropy, its normalization into a
//! sampling distribution, and the mixed entropy/uniform ray draw.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};

pub const DEFAULT_WINDOW: usize = 9;
pub const DEFAULT_BINS: usize = 256;

/// Per-pixel local entropy in bits, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl EntropyMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Histogram bin of an intensity: `⌊v·bins⌋` clamped into `[0, bins)`.
pub fn quantize_intensity(v: f64, bins: usize) -> usize {
    let q = (v * bins as f64).floor();
    if q.is_nan() || q < 0.0 {
        0
    } else {
        (q as usize).min(bins - 1)
    }
}

/// `-h·log2(h)` for every possible count `c` out of `n`, with `0·log 0 = 0`.
fn entropy_terms(n: usize) -> Vec<f64> {
    std::iter::once(0.0)
        .chain((1..=n).map(|c| {
            let h = c as f64 / n as f64;
            -h * h.log2()
        }))
        .collect()
}

/// Entropy in bits of a histogram given as raw counts; bins are summed in order.
pub fn histogram_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let terms = entropy_terms(n);
    counts.iter().map(|&c| terms[c]).sum()
}

/// Shannon entropy (bits) of the intensity histogram in a `window × window`
/// neighbourhood of each pixel. Borders replicate the nearest edge pixel.
///
/// The histogram slides along each row, so every pixel costs `O(window)` to
/// update plus `O(bins)` to evaluate.
pub fn local_entropy_map(image: &GrayImage, window: usize, bins: usize) -> Result<EntropyMap> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::invalid(format!("entropy window must be odd and at least 3, got {window}")));
    }
    if bins < 2 {
        return Err(Error::invalid(format!("entropy needs at least 2 bins, got {bins}")));
    }
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 {
        return Err(Error::invalid("entropy of an empty image"));
    }
    let q: Vec<usize> = image.pixels.iter().map(|&v| quantize_intensity(v, bins)).collect();
    let terms = entropy_terms(window * window);
    let r = (window / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut values = vec![0.0; w * h];
    let mut hist = vec![0usize; bins];

    for y in 0..h {
        let rows: Vec<usize> = (-r..=r).map(|dy| clamp(y as isize + dy, h)).collect();
        hist.iter_mut().for_each(|c| *c = 0);
        for dx in -r..=r {
            let x = clamp(dx, w);
            for &yy in &rows {
                hist[q[yy * w + x]] += 1;
            }
        }
        for x in 0..w {
            if x > 0 {
                let gone = clamp(x as isize - 1 - r, w);
                let added = clamp(x as isize + r, w);
                for &yy in &rows {
                    hist[q[yy * w + gone]] -= 1;
                    hist[q[yy * w + added]] += 1;
                }
            }
            values[y * w + x] = hist.iter().map(|&c| terms[c]).sum();
        }
    }
    Ok(EntropyMap { width: w, height: h, values })
}

/// Luma with Rec. 601 weights.
pub fn rgb_to_gray(image: &RgbImage) -> GrayImage {
    GrayImage {
        width: image.width,
        height: image.height,
        pixels: image.pixels.iter().map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect(),
    }
}

/// Probability of drawing each pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDistribution {
    pub width: usize,
    pub height: usize,
    pub probs: Vec<f64>,
}

impl PixelDistribution {
    pub fn uniform(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, probs: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Normalizes an entropy map. `floor` adds `floor · mean(e)` to every pixel
/// before normalizing; an all-zero map becomes uniform.
pub fn to_distribution(em: &EntropyMap, floor: f64) -> PixelDistribution {
    let n = em.values.len();
    let total: f64 = em.values.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return PixelDistribution::uniform(em.width, em.height);
    }
    let eps = floor.max(0.0) * total / n as f64;
    let norm = total + eps * n as f64;
    PixelDistribution {
        width: em.width,
        height: em.height,
        probs: em.values.iter().map(|&e| (e + eps) / norm).collect(),
    }
}

/// Walker/Vose alias table for O(1) draws from a fixed discrete distribution.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::invalid("alias table over an empty distribution"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("alias weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("alias weights sum to zero"));
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        Ok(Self { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Draws `B` pixel indices: `B/2` from the entropy distribution followed by
/// `B/2` uniform ones, all with replacement.
#[derive(Debug, Clone)]
pub struct RaySampler {
    table: AliasTable,
}

impl RaySampler {
    pub fn new(dist: &PixelDistribution) -> Result<Self> {
        Ok(Self { table: AliasTable::new(&dist.probs)? })
    }

    pub fn n_pixels(&self) -> usize {
        self.table.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        check_batch(batch)?;
        let n = self.table.len();
        let mut out: Vec<usize> = (0..batch / 2).map(|_| self.table.sample(rng)).collect();
        out.extend((0..batch / 2).map(|_| rng.random_range(0..n)));
        Ok(out)
    }
}

pub(crate) fn check_batch(batch: usize) -> Result<()> {
    if batch < 2 || batch % 2 != 0 {
        return Err(Error::invalid(format!("batch size must be even and at least 2, got {batch}")));
    }
    Ok(())
}

pub fn sample_rays<R: Rng + ?Sized>(dist: &PixelDistribution, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_batch(batch)?;
    RaySampler::new(dist)?.sample(batch, rng)
}
