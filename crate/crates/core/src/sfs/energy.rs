use super::{SfsProblem, SfsState};
use crate::error::Result;
use crate::grid::Grid;
use crate::photometry::{dot, hapke_from_cosines};
use crate::terrain::{
    diff_x, diff_x_adjoint, diff_y, diff_y_adjoint, gradient_field, lowpass, lowpass_adjoint, Dem,
    GradientField,
};

/// The four energy terms (unweighted) and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms {
    pub total: f64,
    pub intensity: f64,
    pub integrability: f64,
    pub relative_depth: f64,
    pub absolute_depth: f64,
}

impl EnergyTerms {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Partial derivatives of the total energy with respect to every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGradient {
    pub p: Grid,
    pub q: Grid,
    pub z: Grid,
}

fn half_sum_sq(a: &Grid, b: &Grid) -> f64 {
    0.5 * a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}

/// `½ Σ (R − I)² · dx·dy`.
pub fn intensity_error(rendered: &Grid, image: &Grid, pixel_area: f64) -> Result<f64> {
    rendered.check_same_shape(image)?;
    Ok(half_sum_sq(rendered, image) * pixel_area)
}

/// `½ Σ [(∂z/∂x − p)² + (∂z/∂y − q)²] · dx·dy`.
pub fn integrability_error(z: &Dem, gf: &GradientField) -> Result<f64> {
    z.heights().check_same_shape(&gf.p)?;
    z.heights().check_same_shape(&gf.q)?;
    let dz = gradient_field(z);
    Ok((half_sum_sq(&dz.p, &gf.p) + half_sum_sq(&dz.q, &gf.q)) * z.pixel_area())
}

/// `½ Σ [(f(p) − f(p_ref))² + (f(q) − f(q_ref))²] · dx·dy` with `f` the
/// low-pass filter at `scale` and `(p_ref, q_ref)` the gradient of `reference`.
pub fn relative_depth_error(gf: &GradientField, reference: &Dem, scale: f64) -> Result<f64> {
    reference.heights().check_same_shape(&gf.p)?;
    reference.heights().check_same_shape(&gf.q)?;
    let r = gradient_field(reference);
    let e = half_sum_sq(&lowpass(&gf.p, scale), &lowpass(&r.p, scale))
        + half_sum_sq(&lowpass(&gf.q, scale), &lowpass(&r.q, scale));
    Ok(e * reference.pixel_area())
}

/// `½ Σ (f(z) − f(z_ref))² · dx·dy`.
pub fn absolute_depth_error(z: &Dem, reference: &Dem, scale: f64) -> Result<f64> {
    z.heights().check_same_shape(reference.heights())?;
    let e = half_sum_sq(
        &lowpass(z.heights(), scale),
        &lowpass(reference.heights(), scale),
    );
    Ok(e * reference.pixel_area())
}

/// Per-pixel modelled reflectance and its slope partials.
pub(super) struct Shading {
    pub r: Grid,
    pub dr_dp: Grid,
    pub dr_dq: Grid,
    /// 1 where the facet is lit and visible, 0 otherwise.
    pub lit: Grid,
}

impl SfsProblem {
    pub(super) fn shading(&self, gf: &GradientField, albedo: &Grid) -> Shading {
        let (w, h) = gf.shape();
        let (s, v) = (self.illum.sun(), self.illum.view());
        let mut r = Grid::zeros(w, h);
        let mut dr_dp = Grid::zeros(w, h);
        let mut dr_dq = Grid::zeros(w, h);
        let mut lit = Grid::zeros(w, h);
        for i in 0..w * h {
            let p = gf.p.as_slice()[i];
            let q = gf.q.as_slice()[i];
            let n2 = 1.0 + p * p + q * q;
            let inv_n = 1.0 / n2.sqrt();
            let n = [-p * inv_n, -q * inv_n, inv_n];
            let mu0 = dot(n, s);
            let mu = dot(n, v);
            if mu0 <= 0.0 || mu <= 0.0 {
                continue;
            }
            let (ri, d_mu0, d_mu) = hapke_from_cosines(mu0, mu, self.phase_term, albedo.as_slice()[i]);
            // ∂μ0/∂p = −s_x/N − μ0·p/N², likewise for μ and for q
            let dmu0_dp = -s[0] * inv_n - mu0 * p / n2;
            let dmu0_dq = -s[1] * inv_n - mu0 * q / n2;
            let dmu_dp = -v[0] * inv_n - mu * p / n2;
            let dmu_dq = -v[1] * inv_n - mu * q / n2;
            r.as_mut_slice()[i] = ri;
            dr_dp.as_mut_slice()[i] = d_mu0 * dmu0_dp + d_mu * dmu_dp;
            dr_dq.as_mut_slice()[i] = d_mu0 * dmu0_dq + d_mu * dmu_dq;
            lit.as_mut_slice()[i] = 1.0;
        }
        Shading { r, dr_dp, dr_dq, lit }
    }

    fn intensity_term(&self, shading: &Shading, area: f64) -> f64 {
        let mut e = 0.0;
        for i in 0..self.image.len() {
            if shading.lit.as_slice()[i] > 0.0 {
                let d = shading.r.as_slice()[i] - self.image.as_slice()[i];
                e += d * d;
            }
        }
        0.5 * e * area
    }

    /// Energy terms of `state`. Unlit or back-facing facets contribute nothing
    /// to the intensity error.
    pub fn total_error(&self, state: &SfsState) -> Result<EnergyTerms> {
        self.check_state(state)?;
        Ok(self.energy_unchecked(&state.z, &state.gradient, &state.albedo))
    }

    pub(super) fn energy_unchecked(&self, z: &Dem, gf: &GradientField, albedo: &Grid) -> EnergyTerms {
        let area = z.pixel_area();
        let scale = self.cfg.lowpass_scale;
        let shading = self.shading(gf, albedo);
        let intensity = self.intensity_term(&shading, area);

        let h = z.pixel_size();
        let zx = diff_x(z.heights(), h);
        let zy = diff_y(z.heights(), h);
        let integrability = (half_sum_sq(&zx, &gf.p) + half_sum_sq(&zy, &gf.q)) * area;

        let relative_depth = (half_sum_sq(&lowpass(&gf.p, scale), &self.ref_p_lp)
            + half_sum_sq(&lowpass(&gf.q, scale), &self.ref_q_lp))
            * area;
        let absolute_depth = half_sum_sq(&lowpass(z.heights(), scale), &self.ref_z_lp) * area;

        EnergyTerms {
            total: intensity
                + self.cfg.gamma * integrability
                + self.cfg.delta * relative_depth
                + self.cfg.tau * absolute_depth,
            intensity,
            integrability,
            relative_depth,
            absolute_depth,
        }
    }

    /// Analytic gradient of [`SfsProblem::total_error`].
    pub fn energy_gradient(&self, state: &SfsState) -> Result<EnergyGradient> {
        self.check_state(state)?;
        let shading = self.shading(&state.gradient, &state.albedo);
        Ok(self.gradient_unchecked(&state.z, &state.gradient, &shading))
    }

    pub(super) fn gradient_unchecked(&self, z: &Dem, gf: &GradientField, shading: &Shading) -> EnergyGradient {
        let area = z.pixel_area();
        let h = z.pixel_size();
        let scale = self.cfg.lowpass_scale;
        let (gamma, delta, tau) = (self.cfg.gamma, self.cfg.delta, self.cfg.tau);

        // integrability residuals ∂z − (p, q)
        let rx = diff_x(z.heights(), h).zip_map(&gf.p, |a, b| a - b).expect("shape");
        let ry = diff_y(z.heights(), h).zip_map(&gf.q, |a, b| a - b).expect("shape");

        let mut gp = Grid::zeros(gf.p.width(), gf.p.height());
        let mut gq = gp.clone();
        for i in 0..gp.len() {
            let lit = shading.lit.as_slice()[i];
            let res = lit * (shading.r.as_slice()[i] - self.image.as_slice()[i]);
            gp.as_mut_slice()[i] = res * shading.dr_dp.as_slice()[i] - gamma * rx.as_slice()[i];
            gq.as_mut_slice()[i] = res * shading.dr_dq.as_slice()[i] - gamma * ry.as_slice()[i];
        }
        if delta > 0.0 {
            let dp = lowpass(&gf.p, scale).zip_map(&self.ref_p_lp, |a, b| a - b).expect("shape");
            let dq = lowpass(&gf.q, scale).zip_map(&self.ref_q_lp, |a, b| a - b).expect("shape");
            let back_p = lowpass_adjoint(&dp, scale);
            let back_q = lowpass_adjoint(&dq, scale);
            for i in 0..gp.len() {
                gp.as_mut_slice()[i] += delta * back_p.as_slice()[i];
                gq.as_mut_slice()[i] += delta * back_q.as_slice()[i];
            }
        }
        gp.as_mut_slice().iter_mut().for_each(|v| *v *= area);
        gq.as_mut_slice().iter_mut().for_each(|v| *v *= area);

        let mut gz = Grid::zeros(gf.p.width(), gf.p.height());
        if gamma > 0.0 {
            let ax = diff_x_adjoint(&rx, h);
            let ay = diff_y_adjoint(&ry, h);
            for i in 0..gz.len() {
                gz.as_mut_slice()[i] += gamma * (ax.as_slice()[i] + ay.as_slice()[i]);
            }
        }
        if tau > 0.0 {
            let dz = lowpass(z.heights(), scale).zip_map(&self.ref_z_lp, |a, b| a - b).expect("shape");
            let back = lowpass_adjoint(&dz, scale);
            for i in 0..gz.len() {
                gz.as_mut_slice()[i] += tau * back.as_slice()[i];
            }
        }
        gz.as_mut_slice().iter_mut().for_each(|v| *v *= area);

        EnergyGradient { p: gp, q: gq, z: gz }
    }
}
