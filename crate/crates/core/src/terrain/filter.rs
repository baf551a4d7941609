//! Separable Gaussian filtering with half-sample symmetric borders.
//!
//! With symmetric (edge-duplicating) reflection every input sample
//! contributes with total weight exactly one, so the filter preserves the grid
//! sum, and the resulting linear operator is symmetric, i.e. its own adjoint.

use crate::grid::Grid;

/// Index into `0..n` for an arbitrary integer position under half-sample
/// symmetric reflection (`… 1 0 | 0 1 … n-1 | n-1 n-2 …`).
#[inline]
pub(crate) fn reflect(m: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = m.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub(crate) fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let d = k as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Convolves `grid` with the separable kernel `taps` (odd length, centered)
/// along both axes.
pub(crate) fn separable_filter(grid: &Grid, taps: &[f64]) -> Grid {
    let (w, h) = grid.shape();
    let radius = (taps.len() / 2) as isize;
    let mut tmp = Grid::zeros(w, h);
    for y in 0..h {
        let row = grid.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * row[reflect(x as isize + k as isize - radius, w)];
            }
            tmp[(x, y)] = acc;
        }
    }
    let mut out = Grid::zeros(w, h);
    let mut column = vec![0.0; h];
    for x in 0..w {
        for (y, c) in column.iter_mut().enumerate() {
            *c = tmp[(x, y)];
        }
        for y in 0..h {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * column[reflect(y as isize + k as isize - radius, h)];
            }
            out[(x, y)] = acc;
        }
    }
    out
}

/// Gaussian blur with explicit `sigma` and kernel `radius`.
pub fn gaussian_blur(grid: &Grid, sigma: f64, radius: usize) -> Grid {
    if sigma <= 0.0 || radius == 0 {
        return grid.clone();
    }
    separable_filter(grid, &gaussian_kernel(sigma, radius))
}

/// Low-pass operator matching a resolution ratio `scale`: Gaussian with
/// `σ = scale / 2` pixels and radius `⌈3σ⌉`. `scale <= 1` is the identity.
pub fn lowpass(grid: &Grid, scale: f64) -> Grid {
    if !(scale > 1.0) {
        return grid.clone();
    }
    let sigma = 0.5 * scale;
    gaussian_blur(grid, sigma, (3.0 * sigma).ceil() as usize)
}

/// Adjoint of [`lowpass`]. The operator is symmetric, so this is the same
/// filter; kept as a named entry point for gradient code.
#[inline]
pub(crate) fn lowpass_adjoint(grid: &Grid, scale: f64) -> Grid {
    lowpass(grid, scale)
}

/// Diagonal entry of `Lᵀ L` for the interior of the grid, where `L` is
/// [`lowpass`] at `scale`. Used only as a preconditioner estimate.
pub(crate) fn lowpass_gram_diagonal(scale: f64) -> f64 {
    if !(scale > 1.0) {
        return 1.0;
    }
    let sigma = 0.5 * scale;
    let taps = gaussian_kernel(sigma, (3.0 * sigma).ceil() as usize);
    let s: f64 = taps.iter().map(|t| t * t).sum();
    s * s
}
