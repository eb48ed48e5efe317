//! Image-quality metrics and step-size convergence studies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classification::TransferFunction;
use crate::image::ImageRgba;
use crate::raycast::{Camera, RenderError, RenderSettings, Renderer};
use crate::volume::ScalarVolume;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("steps must be positive and strictly descending")]
    InvalidSteps,
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl QualityError {
    pub fn code(&self) -> &'static str {
        match self {
            QualityError::DimensionMismatch { .. } => "DimensionMismatch",
            QualityError::InvalidSteps => "InvalidSettings",
            QualityError::Render(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim: f64,
    /// Mean squared error of R, G and B at 8-bit scale.
    pub mse: [f64; 3],
    pub width: u32,
    pub height: u32,
}

fn check_dims(a: &ImageRgba, b: &ImageRgba) -> Result<(), QualityError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(QualityError::DimensionMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    Ok(())
}

fn channel_mse(a: &ImageRgba, b: &ImageRgba) -> [f64; 3] {
    let mut sum = [0.0f64; 3];
    for (pa, pb) in a.pixels().chunks_exact(4).zip(b.pixels().chunks_exact(4)) {
        for c in 0..3 {
            let d = f64::from(pa[c]) - f64::from(pb[c]);
            sum[c] += d * d;
        }
    }
    let n = (a.width() as f64 * a.height() as f64).max(1.0);
    sum.map(|s| s / n)
}

fn psnr_from_mse(mse: [f64; 3]) -> f64 {
    let mse = (mse[0] + mse[1] + mse[2]) / 3.0;
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Peak signal-to-noise ratio over the RGB channels, in dB.
pub fn psnr(a: &ImageRgba, b: &ImageRgba) -> Result<f64, QualityError> {
    check_dims(a, b)?;
    Ok(psnr_from_mse(channel_mse(a, b)))
}

fn luma(img: &ImageRgba) -> Vec<f64> {
    img.pixels()
        .chunks_exact(4)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Separable "valid" filtering with the Gaussian window.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * horiz[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

fn ssim_index(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)) / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2))
}

/// Mean structural similarity of the luma channels.
///
/// Images smaller than the 11×11 window are compared as one global window.
pub fn ssim(a: &ImageRgba, b: &ImageRgba) -> Result<f64, QualityError> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let (la, lb) = (luma(a), luma(b));
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        let n = (w * h) as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let (ma, mb) = (mean(&la), mean(&lb));
        let var_a = la.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let var_b = lb.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
        let cov = la.iter().zip(&lb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        return Ok(ssim_index(ma, mb, var_a, var_b, cov));
    }
    let k = gaussian_window();
    let product = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mu_a, ow, oh) = filter_valid(&la, w, h, &k);
    let (mu_b, ..) = filter_valid(&lb, w, h, &k);
    let (aa, ..) = filter_valid(&product(&la, &la), w, h, &k);
    let (bb, ..) = filter_valid(&product(&lb, &lb), w, h, &k);
    let (ab, ..) = filter_valid(&product(&la, &lb), w, h, &k);
    let total: f64 = (0..ow * oh)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            ssim_index(ma, mb, aa[i] - ma * ma, bb[i] - mb * mb, ab[i] - ma * mb)
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

pub fn compare(a: &ImageRgba, b: &ImageRgba) -> Result<QualityReport, QualityError> {
    check_dims(a, b)?;
    let mse = channel_mse(a, b);
    Ok(QualityReport {
        psnr_db: psnr_from_mse(mse),
        ssim: ssim(a, b)?,
        mse,
        width: a.width(),
        height: a.height(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub step: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub reference_step: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,psnr_db,ssim,wall_time_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.4},{:.6},{:.1}\n",
                r.step, r.psnr_db, r.ssim, r.wall_time_ms
            ));
        }
        out
    }

    pub fn psnr_non_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].psnr_db >= w[0].psnr_db)
    }
}

/// Renders once per step (descending, mm) and compares each image against a
/// render at half the smallest step.
pub fn convergence_study(
    vol: &ScalarVolume,
    camera: &Camera,
    tf: &TransferFunction,
    settings: &RenderSettings,
    steps: &[f64],
) -> Result<ConvergenceTable, QualityError> {
    let descending = steps.windows(2).all(|w| w[1] < w[0]);
    if steps.is_empty() || !descending || steps.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(QualityError::InvalidSteps);
    }
    let render_at = |step: f64| -> Result<ImageRgba, QualityError> {
        let s = RenderSettings {
            step: Some(step),
            ..settings.clone()
        };
        Ok(Renderer::<f32>::new(vol, tf, &s)?.render(camera)?)
    };
    let reference_step = steps[steps.len() - 1] / 2.0;
    let reference = render_at(reference_step)?;
    let mut rows = Vec::with_capacity(steps.len());
    for &step in steps {
        let img = render_at(step)?;
        rows.push(ConvergenceRow {
            step,
            psnr_db: psnr(&img, &reference)?,
            ssim: ssim(&img, &reference)?,
            wall_time_ms: img.stats.wall_time_ms,
        });
    }
    Ok(ConvergenceTable { reference_step, rows })
}
