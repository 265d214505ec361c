//! Quality metrics reported by the pipeline: waveform SNR, image PSNR, and
//! SSIM (Wang et al.: 11x11 Gaussian window, sigma 1.5, K1 = 0.01,
//! K2 = 0.03, dynamic range 255, averaged over valid windows and channels).

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::io::Image;

/// A dB figure, with identical signals reported as a distinguished marker
/// rather than a fake large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Db {
    Infinite,
    Value(f64),
}

impl Db {
    pub fn as_finite(&self) -> Option<f64> {
        match self {
            Db::Infinite => None,
            Db::Value(v) => Some(*v),
        }
    }
}

impl std::fmt::Display for Db {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Db::Infinite => write!(f, "inf"),
            Db::Value(v) => write!(f, "{v:.4}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairMetrics {
    pub snr_db: Db,
    pub ssim: f64,
    pub psnr_db: Db,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub audio_snr_db: Db,
    pub image_ssim: f64,
    pub image_psnr_db: Db,
    pub pairs: Vec<PairMetrics>,
}

impl MetricsReport {
    /// Aggregate per-pair metrics; an infinite entry dominates its mean.
    pub fn from_pairs(pairs: Vec<PairMetrics>) -> MetricsReport {
        let mean_db = |vals: Vec<&Db>| -> Db {
            if vals.iter().any(|d| matches!(d, Db::Infinite)) {
                Db::Infinite
            } else {
                let sum: f64 = vals.iter().filter_map(|d| d.as_finite()).sum();
                Db::Value(sum / vals.len() as f64)
            }
        };
        let audio_snr_db = mean_db(pairs.iter().map(|p| &p.snr_db).collect());
        let image_psnr_db = mean_db(pairs.iter().map(|p| &p.psnr_db).collect());
        let image_ssim =
            pairs.iter().map(|p| p.ssim).sum::<f64>() / pairs.len().max(1) as f64;
        MetricsReport { audio_snr_db, image_ssim, image_psnr_db, pairs }
    }
}

/// 10 log10(sum host^2 / sum (host - container)^2).
pub fn snr_db(host: &Waveform, container: &Waveform) -> Result<Db> {
    if host.len() != container.len() {
        return Err(Error::Dimension(format!(
            "snr: lengths differ ({} vs {})",
            host.len(),
            container.len()
        )));
    }
    let signal: f64 = host.samples.iter().map(|&v| (v as f64) * (v as f64)).sum();
    if signal == 0.0 {
        return Err(Error::Numeric("snr: host has zero energy".into()));
    }
    let noise: f64 = host
        .samples
        .iter()
        .zip(&container.samples)
        .map(|(&h, &c)| {
            let d = h as f64 - c as f64;
            d * d
        })
        .sum();
    if noise == 0.0 {
        return Ok(Db::Infinite);
    }
    Ok(Db::Value(10.0 * (signal / noise).log10()))
}

/// 10 log10(255^2 / MSE) over 8-bit images.
pub fn psnr(a: &Image, b: &Image) -> Result<Db> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension("psnr: image shapes differ".into()));
    }
    let mse: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(Db::Infinite);
    }
    Ok(Db::Value(10.0 * (255.0 * 255.0 / mse).log10()))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 255.0;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0f64; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean SSIM over all valid 11x11 window positions, per channel.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension("ssim: image shapes differ".into()));
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim: image {}x{} smaller than the {}x{} window",
            a.width, a.height, SSIM_WINDOW, SSIM_WINDOW
        )));
    }
    let window = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);
    let (w, h) = (a.width, a.height);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for ch in 0..3 {
        for wy in 0..=(h - SSIM_WINDOW) {
            for wx in 0..=(w - SSIM_WINDOW) {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for ky in 0..SSIM_WINDOW {
                    for kx in 0..SSIM_WINDOW {
                        let g = window[ky * SSIM_WINDOW + kx];
                        let idx = (((wy + ky) * w) + wx + kx) * 3 + ch;
                        let va = a.pixels[idx] as f64;
                        let vb = b.pixels[idx] as f64;
                        mu_a += g * va;
                        mu_b += g * vb;
                        aa += g * va * va;
                        bb += g * vb * vb;
                        ab += g * va * vb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let val = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += val;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
