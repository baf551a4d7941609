use std::collections::VecDeque;

use super::energy::{EnergyGradient, EnergyTerms};
use super::{EnergyRecord, SfsProblem, SfsState};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::terrain::{
    diff_x, diff_x_adjoint, diff_y, diff_y_adjoint, lowpass, lowpass_adjoint, lowpass_gram_diagonal,
    Dem, GradientField,
};

/// Halvings tried by the `(p, q)` line search before giving up on the step.
const MAX_HALVINGS: usize = 40;

/// Sufficient-decrease constant of the quasi-Newton line search.
const ARMIJO: f64 = 1e-4;

fn inner(a: &Grid, b: &Grid) -> f64 {
    dot(a.as_slice(), b.as_slice())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS history over the packed unknowns `[p | q | z]`.
struct QuasiNewton {
    memory: usize,
    // (s, y, 1 / y·s), oldest first
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    // point and gradient at the start of the previous step
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl QuasiNewton {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            pairs: VecDeque::with_capacity(memory),
            last: None,
        }
    }

    fn clear(&mut self) {
        self.pairs.clear();
        self.last = None;
    }

    /// Records the secant pair between the previous step's start and `(x, g)`.
    fn observe(&mut self, x: &[f64], g: &[f64]) {
        if let Some((x0, g0)) = self.last.take() {
            let s: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&g0).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            // skip pairs without positive curvature to keep H positive definite
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if self.pairs.len() == self.memory {
                    self.pairs.pop_front();
                }
                self.pairs.push_back((s, y, 1.0 / sy));
            }
        }
    }

    /// `−H·g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn pack(gf: &GradientField, z: &Grid) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * z.len());
    v.extend_from_slice(gf.p.as_slice());
    v.extend_from_slice(gf.q.as_slice());
    v.extend_from_slice(z.as_slice());
    v
}

fn pack_gradient(g: &EnergyGradient) -> Vec<f64> {
    pack(
        &GradientField {
            p: g.p.clone(),
            q: g.q.clone(),
        },
        &g.z,
    )
}

fn unpack(v: &[f64], w: usize, h: usize) -> (GradientField, Grid) {
    let n = w * h;
    let grid = |k: usize| Grid::from_vec(w, h, v[k * n..(k + 1) * n].to_vec()).expect("packed length");
    (GradientField { p: grid(0), q: grid(1) }, grid(2))
}

impl SfsProblem {
    /// Runs the solver from [`SfsProblem::initial_state`].
    pub fn reconstruct(&self) -> Result<SfsState> {
        self.reconstruct_from(self.initial_state())
    }

    /// Runs the solver from an arbitrary starting state.
    ///
    /// The returned history starts with the initial energy (iteration 0) and
    /// holds one record per iteration after that; it is non-increasing.
    pub fn reconstruct_from(&self, mut state: SfsState) -> Result<SfsState> {
        self.check_state(&state)?;
        let mut terms = self.energy_unchecked(&state.z, &state.gradient, &state.albedo);
        if !terms.is_finite() {
            return Err(Error::SolverDiverged { iteration: 0 });
        }
        state.history.clear();
        state.history.push(EnergyRecord { iteration: 0, terms });
        let mut qn = QuasiNewton::new(self.cfg.lbfgs_memory);

        for it in 0..self.cfg.max_iters {
            let before = terms.total;
            if before <= self.energy_floor {
                break;
            }
            let period = self.cfg.albedo_update_period;
            if period > 0 && it % period == 0 {
                let albedo_before = state.albedo.clone();
                terms = self.albedo_step(&mut state, terms)?;
                if state.albedo != albedo_before {
                    qn.clear();
                }
            }
            terms = if self.cfg.lbfgs_memory > 0 {
                self.quasi_newton_step(&mut state, terms, &mut qn, it + 1)?
            } else {
                self.gradient_step(&mut state, terms, it + 1)?
            };
            terms = self.height_step(&mut state, terms);
            state.history.push(EnergyRecord {
                iteration: it + 1,
                terms,
            });
            if before - terms.total <= self.cfg.stop_tol * before {
                break;
            }
        }
        Ok(state)
    }

    fn albedo_step(&self, state: &mut SfsState, current: EnergyTerms) -> Result<EnergyTerms> {
        let estimate = self.estimate_albedo(state)?;
        let trial = self.energy_unchecked(&state.z, &state.gradient, &estimate.smoothed);
        if trial.is_finite() && trial.total <= current.total {
            state.albedo = estimate.smoothed;
            return Ok(trial);
        }
        Ok(current)
    }

    /// One limited-memory BFGS step on `(p, q, z)` jointly, with a
    /// backtracking Armijo line search.
    fn quasi_newton_step(
        &self,
        state: &mut SfsState,
        current: EnergyTerms,
        qn: &mut QuasiNewton,
        iteration: usize,
    ) -> Result<EnergyTerms> {
        let shading = self.shading(&state.gradient, &state.albedo);
        let grad = self.gradient_unchecked(&state.z, &state.gradient, &shading);
        let g = pack_gradient(&grad);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::SolverDiverged { iteration });
        }
        let x = pack(&state.gradient, state.z.heights());
        qn.observe(&x, &g);

        let (w, h) = state.z.shape();
        let n = w * h;
        let mut d = qn.direction(&g);
        let mut slope = dot(&d, &g);
        let mut step = 1.0;
        if qn.pairs.is_empty() || !(slope < 0.0) {
            qn.pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            let largest = g[..2 * n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if largest > 0.0 {
                step = self.cfg.step_pq / largest;
            }
        }
        if !(slope < 0.0) {
            return Ok(current);
        }

        let pixel_size = state.z.pixel_size();
        for _ in 0..MAX_HALVINGS {
            let trial_x: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (trial_gf, trial_z) = unpack(&trial_x, w, h);
            if let Ok(trial_dem) = Dem::new(trial_z, pixel_size) {
                let trial = self.energy_unchecked(&trial_dem, &trial_gf, &state.albedo);
                if trial.is_finite()
                    && trial.total < current.total
                    && trial.total <= current.total + ARMIJO * step * slope
                {
                    state.gradient = trial_gf;
                    state.z = trial_dem;
                    qn.last = Some((x, g));
                    return Ok(trial);
                }
            }
            step *= 0.5;
        }
        qn.clear();
        Ok(current)
    }

    /// Gauss-Newton preconditioned descent on `(p, q)` with backtracking.
    fn gradient_step(&self, state: &mut SfsState, current: EnergyTerms, iteration: usize) -> Result<EnergyTerms> {
        let shading = self.shading(&state.gradient, &state.albedo);
        let grad = self.gradient_unchecked(&state.z, &state.gradient, &shading);
        if !(grad.p.all_finite() && grad.q.all_finite() && grad.z.all_finite()) {
            return Err(Error::SolverDiverged { iteration });
        }

        let area = state.z.pixel_area();
        let coupling = self.cfg.gamma + self.cfg.delta * lowpass_gram_diagonal(self.cfg.lowpass_scale);
        let (w, h) = state.z.shape();
        let mut dp = Grid::zeros(w, h);
        let mut dq = Grid::zeros(w, h);
        for i in 0..dp.len() {
            let lit = shading.lit.as_slice()[i];
            let a = lit * shading.dr_dp.as_slice()[i];
            let b = lit * shading.dr_dq.as_slice()[i];
            let ridge = 1e-10 * (a * a + b * b) + 1e-14;
            let h11 = area * (a * a + coupling + ridge);
            let h22 = area * (b * b + coupling + ridge);
            let h12 = area * a * b;
            let det = h11 * h22 - h12 * h12;
            let (gp, gq) = (grad.p.as_slice()[i], grad.q.as_slice()[i]);
            dp.as_mut_slice()[i] = -(h22 * gp - h12 * gq) / det;
            dq.as_mut_slice()[i] = -(h11 * gq - h12 * gp) / det;
        }
        if inner(&dp, &grad.p) + inner(&dq, &grad.q) >= 0.0 {
            return Ok(current);
        }

        let mut step = self.cfg.step_pq;
        for _ in 0..MAX_HALVINGS {
            let trial_gf = GradientField {
                p: state.gradient.p.zip_map(&dp, |v, d| v + step * d)?,
                q: state.gradient.q.zip_map(&dq, |v, d| v + step * d)?,
            };
            let trial = self.energy_unchecked(&state.z, &trial_gf, &state.albedo);
            if trial.is_finite() && trial.total < current.total {
                state.gradient = trial_gf;
                return Ok(trial);
            }
            step *= 0.5;
        }
        Ok(current)
    }

    /// `z ↦ dx·dy·(γ(DxᵀDx + DyᵀDy) + τ·fᵀf) z`, the Hessian of the energy in `z`.
    fn height_operator(&self, z: &Grid, pixel_size: f64) -> Grid {
        let (gamma, tau) = (self.cfg.gamma, self.cfg.tau);
        let area = pixel_size * pixel_size;
        let mut out = Grid::zeros(z.width(), z.height());
        if gamma > 0.0 {
            let ax = diff_x_adjoint(&diff_x(z, pixel_size), pixel_size);
            let ay = diff_y_adjoint(&diff_y(z, pixel_size), pixel_size);
            for i in 0..out.len() {
                out.as_mut_slice()[i] += gamma * (ax.as_slice()[i] + ay.as_slice()[i]);
            }
        }
        if tau > 0.0 {
            let scale = self.cfg.lowpass_scale;
            let back = lowpass_adjoint(&lowpass(z, scale), scale);
            for i in 0..out.len() {
                out.as_mut_slice()[i] += tau * back.as_slice()[i];
            }
        }
        out.as_mut_slice().iter_mut().for_each(|v| *v *= area);
        out
    }

    /// Conjugate-gradient relaxation of the heights; the energy is quadratic
    /// in `z` with `(p, q)` fixed.
    fn height_step(&self, state: &mut SfsState, current: EnergyTerms) -> EnergyTerms {
        if (self.cfg.gamma == 0.0 && self.cfg.tau == 0.0) || self.cfg.z_relax_iters == 0 {
            return current;
        }
        let shading = self.shading(&state.gradient, &state.albedo);
        let grad = self.gradient_unchecked(&state.z, &state.gradient, &shading);
        let pixel_size = state.z.pixel_size();

        let mut z = state.z.heights().clone();
        let mut r = grad.z.map(|g| -g);
        let mut d = r.clone();
        let mut rr = inner(&r, &r);
        let tol = 1e-24 * rr.max(f64::MIN_POSITIVE);
        for _ in 0..self.cfg.z_relax_iters {
            if rr <= tol {
                break;
            }
            let ad = self.height_operator(&d, pixel_size);
            let curvature = inner(&d, &ad);
            if !(curvature > 0.0) {
                break;
            }
            let alpha = rr / curvature;
            for i in 0..z.len() {
                z.as_mut_slice()[i] += alpha * d.as_slice()[i];
                r.as_mut_slice()[i] -= alpha * ad.as_slice()[i];
            }
            let rr_next = inner(&r, &r);
            let beta = rr_next / rr;
            rr = rr_next;
            for i in 0..d.len() {
                d.as_mut_slice()[i] = r.as_slice()[i] + beta * d.as_slice()[i];
            }
        }

        let omega = self.cfg.step_z;
        let relaxed = state
            .z
            .heights()
            .zip_map(&z, |old, new| old + omega * (new - old))
            .expect("same shape");
        let Ok(trial_dem) = Dem::new(relaxed, pixel_size) else {
            return current;
        };
        let trial = self.energy_unchecked(&trial_dem, &state.gradient, &state.albedo);
        if trial.is_finite() && trial.total < current.total {
            state.z = trial_dem;
            return trial;
        }
        current
    }
}
