//! Variational shape and albedo from shading.
//!
//! The unknowns are the height field `z`, the gradient field `(p, q)` and the
//! per-pixel single-scattering albedo `w`. The energy is
//!
//! ```text
//! E = E_I + γ·E_int + δ·E_rel + τ·E_abs
//! ```
//!
//! with the Hapke intensity error `E_I`, the integrability error `E_int`
//! tying `(p, q)` to the finite-difference gradient of `z`, and two
//! low-pass depth constraints tying the gradients and heights to an initial
//! low-resolution DEM. All four terms are integrated over the pixel area.
//!
//! [`SfsProblem::reconstruct`] alternates a limited-memory BFGS step on
//! `(p, q, z)`, a conjugate-gradient relaxation of `z`, and a periodic
//! per-pixel albedo inversion. Every update is accepted only if it does not
//! increase the energy.

mod albedo;
mod energy;
mod solver;

pub use albedo::AlbedoEstimate;
pub use energy::{
    absolute_depth_error, integrability_error, intensity_error, relative_depth_error, EnergyGradient,
    EnergyTerms,
};

use crate::config::KeyValues;
use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::photometry::{HapkeParams, IlluminationGeometry};
use crate::terrain::{gradient_field, lowpass, Dem, GradientField};

/// Solver weights and controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SfsConfig {
    /// Weight of the integrability error.
    pub gamma: f64,
    /// Weight of the relative (gradient) depth constraint.
    pub delta: f64,
    /// Weight of the absolute depth constraint.
    pub tau: f64,
    /// Resolution ratio between the image and the initial DEM; sets the
    /// low-pass filter of both depth constraints and the albedo smoothing.
    pub lowpass_scale: f64,
    pub max_iters: usize,
    /// Initial line-search step of the `(p, q, z)` update. With an empty
    /// quasi-Newton memory it bounds the largest first trial change of `p`/`q`.
    pub step_pq: f64,
    /// Relaxation factor in `(0, 1]` applied to the `z` update.
    pub step_z: f64,
    /// Conjugate-gradient iterations per `z` relaxation.
    pub z_relax_iters: usize,
    /// Curvature pairs kept by the limited-memory BFGS step over `(p, q, z)`.
    /// `0` selects a Gauss-Newton preconditioned step on `(p, q)` alone.
    pub lbfgs_memory: usize,
    /// Re-estimate the albedo every this many iterations (starting at 0).
    /// `0` disables albedo estimation.
    pub albedo_update_period: usize,
    /// Stop when the relative energy decrease of an iteration drops below this.
    pub stop_tol: f64,
}

impl Default for SfsConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            delta: 1e-5,
            tau: 1e-6,
            lowpass_scale: 8.0,
            max_iters: 2000,
            step_pq: 1.0,
            step_z: 1.0,
            z_relax_iters: 10,
            lbfgs_memory: 8,
            albedo_update_period: 25,
            stop_tol: 1e-6,
        }
    }
}

impl SfsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("delta", self.delta), ("tau", self.tau)] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} = {v} must be a nonnegative number"));
            }
        }
        if !(self.lowpass_scale >= 1.0 && self.lowpass_scale.is_finite()) {
            return invalid(format!("lowpass_scale = {} must be >= 1", self.lowpass_scale));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.step_pq > 0.0 && self.step_pq.is_finite()) {
            return invalid("step_pq must be positive");
        }
        if !(self.step_z > 0.0 && self.step_z <= 1.0) {
            return invalid("step_z must lie in (0, 1]");
        }
        if !(self.stop_tol > 0.0) {
            return invalid("stop_tol must be positive");
        }
        Ok(())
    }

    /// Applies `key = value` overrides; unknown keys are left in `kv`.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        kv.update("gamma", &mut self.gamma)?;
        kv.update("delta", &mut self.delta)?;
        kv.update("tau", &mut self.tau)?;
        kv.update("lowpass_scale", &mut self.lowpass_scale)?;
        kv.update("max_iters", &mut self.max_iters)?;
        kv.update("step_pq", &mut self.step_pq)?;
        kv.update("step_z", &mut self.step_z)?;
        kv.update("z_relax_iters", &mut self.z_relax_iters)?;
        kv.update("lbfgs_memory", &mut self.lbfgs_memory)?;
        kv.update("albedo_update_period", &mut self.albedo_update_period)?;
        kv.update("stop_tol", &mut self.stop_tol)?;
        Ok(())
    }
}

/// One accepted iteration of the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub iteration: usize,
    pub terms: EnergyTerms,
}

/// Current estimate of heights, gradients and albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct SfsState {
    pub z: Dem,
    pub gradient: GradientField,
    pub albedo: Grid,
    pub history: Vec<EnergyRecord>,
}

impl SfsState {
    /// `z = dem`, `(p, q) = ∇dem`, uniform albedo.
    pub fn from_dem(dem: &Dem, albedo: f64) -> Self {
        let (w, h) = dem.shape();
        Self {
            z: dem.clone(),
            gradient: gradient_field(dem),
            albedo: Grid::filled(w, h, albedo),
            history: Vec::new(),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let shape = self.z.shape();
        for g in [&self.gradient.p, &self.gradient.q, &self.albedo] {
            if g.shape() != shape {
                return Err(crate::Error::ShapeMismatch {
                    expected: shape,
                    actual: g.shape(),
                });
            }
        }
        Ok(())
    }

    /// Total energy after each accepted iteration.
    pub fn energy_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.terms.total).collect()
    }
}

/// Observed image, reference DEM and model settings for one reconstruction.
#[derive(Debug, Clone)]
pub struct SfsProblem {
    image: Grid,
    reference: Dem,
    illum: IlluminationGeometry,
    params: HapkeParams,
    cfg: SfsConfig,
    // low-passed reference heights and gradients, fixed for the whole run
    ref_z_lp: Grid,
    ref_p_lp: Grid,
    ref_q_lp: Grid,
    phase_term: f64,
    // energies below this are indistinguishable from an exact fit
    energy_floor: f64,
}

/// Energy, relative to `½·ΣI²·dA`, below which the solver stops outright.
pub const ENERGY_FLOOR: f64 = 1e-12;

impl SfsProblem {
    /// `reference` is the initial low-resolution DEM, already resampled to
    /// the image grid.
    pub fn new(
        image: Grid,
        reference: Dem,
        illum: IlluminationGeometry,
        params: HapkeParams,
        cfg: SfsConfig,
    ) -> Result<Self> {
        reference.heights().check_same_shape(&image)?;
        params.validate()?;
        cfg.validate()?;
        if !image.all_finite() {
            return invalid("image contains non-finite samples");
        }
        let ref_grad = gradient_field(&reference);
        let scale = cfg.lowpass_scale;
        Ok(Self {
            ref_z_lp: lowpass(reference.heights(), scale),
            ref_p_lp: lowpass(&ref_grad.p, scale),
            ref_q_lp: lowpass(&ref_grad.q, scale),
            phase_term: params.phase_term(illum.phase()),
            energy_floor: ENERGY_FLOOR * 0.5 * image.iter().map(|v| v * v).sum::<f64>() * reference.pixel_area(),
            image,
            reference,
            illum,
            params,
            cfg,
        })
    }

    pub fn image(&self) -> &Grid {
        &self.image
    }

    pub fn reference(&self) -> &Dem {
        &self.reference
    }

    pub fn illumination(&self) -> &IlluminationGeometry {
        &self.illum
    }

    pub fn params(&self) -> &HapkeParams {
        &self.params
    }

    pub fn config(&self) -> &SfsConfig {
        &self.cfg
    }

    /// Starting state: the reference DEM, its gradients and uniform `params.w`.
    pub fn initial_state(&self) -> SfsState {
        SfsState::from_dem(&self.reference, self.params.w)
    }

    fn check_state(&self, state: &SfsState) -> Result<()> {
        state.check_shapes()?;
        self.image.check_same_shape(state.z.heights())?;
        if state.z.pixel_size() != self.reference.pixel_size() {
            return invalid("state and reference DEM pixel sizes differ");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
