use crate::error::{Error, Result};
use crate::render::Image;

pub const PSNR_CAP: f64 = 99.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::DimensionMismatch(format!(
            "images are {}×{}×{} and {}×{}×{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.data.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10 log₁₀(1 / MSE)` for unit-range images, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let e = mse(a, b)?;
    if e < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x0 in 0..ow {
            rows[y * ow + x0] = (0..n).map(|i| k[i] * x[y * w + x0 + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y0 in 0..oh {
        for x0 in 0..ow {
            out[y0 * ow + x0] = (0..n).map(|i| k[i] * rows[(y0 + i) * ow + x0]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM (unit dynamic range) over valid 11×11 Gaussian windows and
/// channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels"
        )));
    }
    let k = gaussian_window();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..a.channels {
        let x = a.channel(ch);
        let y = b.channel(ch);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, _, _) = filter_valid(&x, w, h, &k);
        let (my, _, _) = filter_valid(&y, w, h, &k);
        let (sxx, _, _) = filter_valid(&xx, w, h, &k);
        let (syy, _, _) = filter_valid(&yy, w, h, &k);
        let (sxy, _, _) = filter_valid(&xy, w, h, &k);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
