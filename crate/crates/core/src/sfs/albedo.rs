use super::{SfsProblem, SfsState};
use crate::error::Result;
use crate::grid::Grid;
use crate::photometry::{dot, hapke_from_cosines};
use crate::terrain::{lowpass, normal_from_slopes};

/// Lower end of the albedo search interval.
pub const MIN_ALBEDO: f64 = 1e-4;
const BISECTION_TOL: f64 = 1e-14;

/// Result of one pixelwise albedo inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoEstimate {
    /// Per-pixel solution of `R(w) = I` before smoothing.
    pub raw: Grid,
    /// `raw` after the low-pass filter; this is what the solver adopts.
    pub smoothed: Grid,
    /// Pixels whose observed intensity lies outside `[R(MIN_ALBEDO), R(1)]`
    /// and were clamped to a bound.
    pub clamped: Vec<bool>,
    /// Pixels that are unlit under the current geometry and kept their albedo.
    pub unlit: Vec<bool>,
}

impl AlbedoEstimate {
    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

impl SfsProblem {
    /// Solves `R_AMSA(i, e, g, w) = I` per pixel by bisection on `w` under the
    /// current geometry, then low-passes the field at `cfg.lowpass_scale`.
    pub fn estimate_albedo(&self, state: &SfsState) -> Result<AlbedoEstimate> {
        self.check_state(state)?;
        let (s, v) = (self.illum.sun(), self.illum.view());
        let n_pix = self.image.len();
        let mut raw = state.albedo.clone();
        let mut clamped = vec![false; n_pix];
        let mut unlit = vec![false; n_pix];
        for i in 0..n_pix {
            let n = normal_from_slopes(state.gradient.p.as_slice()[i], state.gradient.q.as_slice()[i]);
            let (mu0, mu) = (dot(n, s), dot(n, v));
            if mu0 <= 0.0 || mu <= 0.0 {
                unlit[i] = true;
                continue;
            }
            let target = self.image.as_slice()[i];
            let model = |w: f64| hapke_from_cosines(mu0, mu, self.phase_term, w).0;
            let w = if target <= model(MIN_ALBEDO) {
                clamped[i] = true;
                MIN_ALBEDO
            } else if target >= model(1.0) {
                clamped[i] = true;
                1.0
            } else {
                let (mut lo, mut hi) = (MIN_ALBEDO, 1.0);
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if model(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            raw.as_mut_slice()[i] = w;
        }
        let smoothed = lowpass(&raw, self.cfg.lowpass_scale)
            .map(|w| w.clamp(MIN_ALBEDO, 1.0));
        Ok(AlbedoEstimate {
            raw,
            smoothed,
            clamped,
            unlit,
        })
    }
}

