//! Evaluation metrics for predicted rasters and token distributions.

use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::terrain::gaussian_blur;

/// SSIM window: 11×11 Gaussian with σ = 1.5.
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_RADIUS: usize = 5;
/// Stabilizers for unit dynamic range: `(K1·L)²` and `(K2·L)²`.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_pair(x: &Grid, y: &Grid) -> Result<()> {
    x.check_same_shape(y)?;
    if x.is_empty() {
        return invalid("metrics need at least one sample");
    }
    Ok(())
}

pub fn mse(x: &Grid, y: &Grid) -> Result<f64> {
    check_pair(x, y)?;
    let sum: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

pub fn rmse(x: &Grid, y: &Grid) -> Result<f64> {
    mse(x, y).map(f64::sqrt)
}

/// `20·log10(max_value / rmse)` in dB; `+∞` for identical inputs.
pub fn psnr(x: &Grid, y: &Grid, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0 && max_value.is_finite()) {
        return invalid(format!("PSNR data range {max_value} must be positive"));
    }
    let e = rmse(x, y)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max_value / e).log10())
}

/// Mean structural similarity of two `[0, 1]` images.
pub fn ssim(x: &Grid, y: &Grid) -> Result<f64> {
    check_pair(x, y)?;
    for g in [x, y] {
        if let Some(v) = g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("SSIM input {v} outside [0, 1]"));
        }
    }
    Ok(ssim_map(x, y).mean())
}

fn ssim_map(x: &Grid, y: &Grid) -> Grid {
    let blur = |g: &Grid| gaussian_blur(g, SSIM_SIGMA, SSIM_RADIUS);
    let mu_x = blur(x);
    let mu_y = blur(y);
    let xx = blur(&x.map(|v| v * v));
    let yy = blur(&y.map(|v| v * v));
    let xy = blur(&x.zip_map(y, |a, b| a * b).expect("same shape"));
    Grid::from_fn(x.width(), x.height(), |i, j| {
        let (mx, my) = (mu_x[(i, j)], mu_y[(i, j)]);
        let vx = xx[(i, j)] - mx * mx;
        let vy = yy[(i, j)] - my * my;
        let cov = xy[(i, j)] - mx * my;
        ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
    })
}

/// Fraction of pixels with `|x − y| < threshold` (strict).
pub fn remaining_error(x: &Grid, y: &Grid, threshold: f64) -> Result<f64> {
    check_pair(x, y)?;
    if !(threshold > 0.0) {
        return invalid(format!("remaining-error threshold {threshold} must be positive"));
    }
    let hits = x
        .iter()
        .zip(y.iter())
        .filter(|(a, b)| (*a - *b).abs() < threshold)
        .count();
    Ok(hits as f64 / x.len() as f64)
}

/// Sum over modalities of the mean token cross-entropy `−ln p(target)`.
///
/// `predicted[m][t]` is the distribution over the vocabulary for token `t` of
/// modality `m`; `targets[m][t]` the true token index. A zero probability on a
/// target yields `+∞`.
pub fn modality_ce_loss(predicted: &[Vec<Vec<f64>>], targets: &[Vec<usize>]) -> Result<f64> {
    if predicted.len() != targets.len() {
        return invalid(format!(
            "{} predicted modalities but {} target modalities",
            predicted.len(),
            targets.len()
        ));
    }
    let mut total = 0.0;
    for (m, (dists, tokens)) in predicted.iter().zip(targets).enumerate() {
        if dists.len() != tokens.len() {
            return invalid(format!(
                "modality {m}: {} distributions for {} targets",
                dists.len(),
                tokens.len()
            ));
        }
        if tokens.is_empty() {
            return invalid(format!("modality {m} has no tokens"));
        }
        let mut sum = 0.0;
        for (t, (dist, &target)) in dists.iter().zip(tokens).enumerate() {
            let mass: f64 = dist.iter().sum();
            if (mass - 1.0).abs() > 1e-9 || dist.iter().any(|p| !(*p >= 0.0)) {
                return invalid(format!("modality {m} token {t}: not a probability distribution"));
            }
            let Some(&p) = dist.get(target) else {
                return invalid(format!(
                    "modality {m} token {t}: target {target} outside vocabulary of {}",
                    dist.len()
                ));
            };
            sum -= p.ln();
        }
        total += sum / tokens.len() as f64;
    }
    Ok(total)
}
