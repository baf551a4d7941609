//! Scalar reflectance physics: illumination geometry, the Double
//! Henyey-Greenstein phase function, shadow-hiding opposition effect,
//! Chandrasekhar H-function approximation, and the Hapke AMSA and Lambert
//! reflectance models.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Result};

pub type Vec3 = [f64; 3];

/// Tolerance on `|v| - 1` accepted by [`angles_from_vectors`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Result<Vec3> {
    let n = norm(a);
    if !(n.is_finite() && n > 0.0) {
        return invalid(format!("cannot normalize vector {a:?}"));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

#[inline]
fn clamped_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Unit vector for an azimuth/elevation pair given in degrees.
///
/// Azimuth is measured in the x-y plane from +x toward +y; elevation is
/// measured from the x-y plane toward +z.
pub fn direction_from_az_el(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

/// Incidence, emission and phase angles `(i, e, g)` in radians.
pub fn angles_from_vectors(n: Vec3, s: Vec3, v: Vec3) -> Result<(f64, f64, f64)> {
    for (name, vec) in [("normal", n), ("sun", s), ("view", v)] {
        let len = norm(vec);
        if !len.is_finite() || (len - 1.0).abs() > UNIT_TOLERANCE {
            return invalid(format!("{name} vector {vec:?} is not unit length"));
        }
    }
    Ok((
        clamped_acos(dot(n, s)),
        clamped_acos(dot(n, v)),
        clamped_acos(dot(s, v)),
    ))
}

/// Distant-source illumination: one sun and one view direction for a whole tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlluminationGeometry {
    sun: Vec3,
    view: Vec3,
    phase: f64,
}

impl IlluminationGeometry {
    /// Builds the geometry from (not necessarily normalized) directions toward
    /// the sun and toward the camera.
    pub fn new(sun: Vec3, view: Vec3) -> Result<Self> {
        let sun = normalize(sun)?;
        let view = normalize(view)?;
        Ok(Self {
            sun,
            view,
            phase: clamped_acos(dot(sun, view)),
        })
    }

    pub fn from_az_el(sun_az_el: (f64, f64), view_az_el: (f64, f64)) -> Result<Self> {
        Self::new(
            direction_from_az_el(sun_az_el.0, sun_az_el.1),
            direction_from_az_el(view_az_el.0, view_az_el.1),
        )
    }

    /// Sun in the given direction, camera looking straight down.
    pub fn nadir_view(sun: Vec3) -> Result<Self> {
        Self::new(sun, [0.0, 0.0, 1.0])
    }

    pub fn sun(&self) -> Vec3 {
        self.sun
    }

    pub fn view(&self) -> Vec3 {
        self.view
    }

    /// Phase angle `g`; independent of any surface normal.
    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// `(i, e)` for a unit surface normal.
    pub fn incidence_emission(&self, n: Vec3) -> (f64, f64) {
        (clamped_acos(dot(n, self.sun)), clamped_acos(dot(n, self.view)))
    }
}

/// Hapke model constants other than the single-scattering albedo.
///
/// Defaults are the Warell lunar values: DHG `b = 0.21`, `c = 0.7`, SHOE
/// `B_S0 = 3.1`, `h_S = 0.11`. Macroscopic roughness and coherent backscatter
/// are disabled (`S ≡ 1`, `B_CB ≡ 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapkeParams {
    /// Single-scattering albedo used when no per-pixel value is supplied.
    pub w: f64,
    pub b: f64,
    pub c: f64,
    pub b_s0: f64,
    pub h_s: f64,
    /// Mean macroscopic roughness angle in radians. Only `0` is modelled.
    pub theta_bar: f64,
    pub cboe_enabled: bool,
}

impl Default for HapkeParams {
    fn default() -> Self {
        Self {
            w: 0.3,
            b: 0.21,
            c: 0.7,
            b_s0: 3.1,
            h_s: 0.11,
            theta_bar: 0.0,
            cboe_enabled: false,
        }
    }
}

impl HapkeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w <= 1.0) {
            return invalid(format!("single-scattering albedo {} outside (0, 1]", self.w));
        }
        if !(0.0..1.0).contains(&self.b) {
            return invalid(format!("DHG b = {} outside [0, 1)", self.b));
        }
        if !self.c.is_finite() {
            return invalid("DHG c must be finite");
        }
        if !(self.h_s > 0.0 && self.h_s.is_finite()) {
            return invalid(format!("h_S = {} must be positive", self.h_s));
        }
        if !(self.b_s0 >= 0.0 && self.b_s0.is_finite()) {
            return invalid(format!("B_S0 = {} must be nonnegative", self.b_s0));
        }
        if !(self.theta_bar >= 0.0) {
            return invalid("theta_bar must be nonnegative");
        }
        if self.theta_bar > 0.0 {
            return invalid("macroscopic roughness (theta_bar > 0) is not modelled");
        }
        if self.cboe_enabled {
            return invalid("coherent backscatter opposition effect is not modelled");
        }
        Ok(())
    }

    /// `p(g)·B_SH(g)`: the part of the single-scattering term that depends
    /// only on the phase angle.
    pub fn phase_term(&self, g: f64) -> f64 {
        dhg_phase_unchecked(g, self.b, self.c) * shoe_unchecked(g, self.b_s0, self.h_s)
    }
}

/// Double Henyey-Greenstein phase function, normalized so that
/// `(1/4π)∮p dΩ = 1`.
pub fn dhg_phase(g: f64, b: f64, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&b) {
        return invalid(format!("DHG b = {b} outside [0, 1)"));
    }
    Ok(dhg_phase_unchecked(g, b, c))
}

#[inline]
fn dhg_phase_unchecked(g: f64, b: f64, c: f64) -> f64 {
    let cg = g.cos();
    let b2 = b * b;
    let num = 1.0 - b2;
    let lobe_plus = num / (1.0 + 2.0 * b * cg + b2).powf(1.5);
    let lobe_minus = num / (1.0 - 2.0 * b * cg + b2).powf(1.5);
    0.5 * (1.0 + c) * lobe_plus + 0.5 * (1.0 - c) * lobe_minus
}

/// Shadow-hiding opposition effect `B_SH(g) = 1 + B_S0 / (1 + tan(g/2)/h_S)`.
pub fn shoe(g: f64, b_s0: f64, h_s: f64) -> Result<f64> {
    if !(h_s > 0.0) {
        return invalid(format!("h_S = {h_s} must be positive"));
    }
    Ok(shoe_unchecked(g, b_s0, h_s))
}

#[inline]
fn shoe_unchecked(g: f64, b_s0: f64, h_s: f64) -> f64 {
    if g >= PI {
        return 1.0;
    }
    1.0 + b_s0 / (1.0 + (0.5 * g).tan() / h_s)
}

/// Rational approximation of Chandrasekhar's H-function for isotropic scatterers.
pub fn h_function(x: f64, w: f64) -> Result<f64> {
    check_h_args(x, w)?;
    Ok(h_with_derivative(x, w).0)
}

fn check_h_args(x: f64, w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return invalid(format!("H-function argument {x} outside [0, 1]"));
    }
    if !(w > 0.0 && w <= 1.0) {
        return invalid(format!("single-scattering albedo {w} outside (0, 1]"));
    }
    Ok(())
}

/// `(H(x), dH/dx)`. At `x = 0` the value is exactly 1; the derivative is
/// unbounded there and reported as `+∞`.
pub(crate) fn h_with_derivative(x: f64, w: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (1.0, f64::INFINITY);
    }
    let gamma = (1.0 - w).sqrt();
    let r0 = (1.0 - gamma) / (1.0 + gamma);
    let log_term = ((1.0 + x) / x).ln();
    let half = 0.5 * (1.0 - 2.0 * r0 * x);
    let inner = r0 + half * log_term;
    let denom = 1.0 - w * x * inner;
    // d(inner)/dx = -r0·ln((1+x)/x) + half·(1/(1+x) - 1/x)
    let dinner = -r0 * log_term - half / (x * (1.0 + x));
    let ddenom = -w * (inner + x * dinner);
    let h = 1.0 / denom;
    (h, -ddenom * h * h)
}

/// Isotropic multiple-scattering term `M(μ0, μ) = H(μ0)·H(μ) − 1`.
pub fn multiple_scattering(mu0: f64, mu: f64, w: f64) -> Result<f64> {
    check_h_args(mu0, w)?;
    check_h_args(mu, w)?;
    Ok(h_with_derivative(mu0, w).0 * h_with_derivative(mu, w).0 - 1.0)
}

/// Hapke AMSA bidirectional reflectance (I/F) for angles in radians.
pub fn hapke_amsa(i: f64, e: f64, g: f64, w: f64, params: &HapkeParams) -> Result<f64> {
    if !(w > 0.0 && w <= 1.0) {
        return invalid(format!("single-scattering albedo {w} outside (0, 1]"));
    }
    params.validate()?;
    // cos(π/2) rounds to a tiny positive number; grazing means unlit
    if i.abs() >= FRAC_PI_2 || e.abs() >= FRAC_PI_2 {
        return Ok(0.0);
    }
    Ok(hapke_from_cosines(i.cos(), e.cos(), params.phase_term(g), w).0)
}

/// Reflectance and its partials `(R, ∂R/∂μ0, ∂R/∂μ)` given the cosines of
/// incidence and emission and the precomputed `p(g)·B_SH(g)`.
///
/// Returns zeros for self-shadowed or back-facing facets (`μ0 ≤ 0` or `μ ≤ 0`).
pub(crate) fn hapke_from_cosines(mu0: f64, mu: f64, phase_term: f64, w: f64) -> (f64, f64, f64) {
    if mu0 <= 0.0 || mu <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let mu0 = mu0.min(1.0);
    let mu = mu.min(1.0);
    let (h0, dh0) = h_with_derivative(mu0, w);
    let (h, dh) = h_with_derivative(mu, w);
    let k = w / (4.0 * PI);
    let sum = mu0 + mu;
    let bracket = phase_term + h0 * h - 1.0;
    let r = k * mu0 / sum * bracket;
    let sum2 = sum * sum;
    let dr_dmu0 = k * (mu / sum2 * bracket + mu0 / sum * dh0 * h);
    let dr_dmu = k * (-mu0 / sum2 * bracket + mu0 / sum * h0 * dh);
    (r, dr_dmu0, dr_dmu)
}

/// Lambertian reflectance `A·max(0, cos i)`.
pub fn lambert_reflectance(i: f64, albedo: f64) -> Result<f64> {
    if !(albedo >= 0.0) {
        return invalid(format!("Lambert albedo {albedo} must be nonnegative"));
    }
    Ok(albedo * i.cos().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, SQRT_2};

    // Frozen from a 40-digit evaluation of the closed forms.
    const DHG_HALF_PI: f64 = 0.895_982_068_194_448_5;
    const H_HALF_W08: f64 = 1.405_644_071_478_713_7;
    const M_ONE_ONE_W06: f64 = 0.774_920_545_171_012_6;
    const AMSA_45_0_45_W03: f64 = 0.014_657_579_328_767_315;

    #[test]
    fn angle_examples() {
        let z = [0.0, 0.0, 1.0];
        assert_eq!(angles_from_vectors(z, z, z).unwrap(), (0.0, 0.0, 0.0));

        let s = [1.0 / SQRT_2, 0.0, 1.0 / SQRT_2];
        let (i, e, g) = angles_from_vectors(z, s, z).unwrap();
        assert_abs_diff_eq!(i, FRAC_PI_4, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g, FRAC_PI_4, epsilon = 1e-12);

        let (i, e, g) = angles_from_vectors(z, z, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(i, 0.0);
        assert_abs_diff_eq!(e, FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(g, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn non_unit_vectors_are_rejected() {
        let z = [0.0, 0.0, 1.0];
        assert!(angles_from_vectors([0.0, 0.0, 1.1], z, z).is_err());
        assert!(angles_from_vectors(z, [0.0, 0.0, 0.0], z).is_err());
        assert!(angles_from_vectors(z, z, [f64::NAN, 0.0, 1.0]).is_err());
    }

    #[test]
    fn illumination_phase_ignores_normal() {
        let geo = IlluminationGeometry::new([1.0, 0.0, 1.0], [0.0, 0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(geo.phase(), FRAC_PI_4, epsilon = 1e-12);
        assert!((norm(geo.sun()) - 1.0).abs() < 1e-12);
        assert!(IlluminationGeometry::new([0.0; 3], [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn az_el_conventions() {
        let v = direction_from_az_el(0.0, 90.0);
        assert_abs_diff_eq!(v[2], 1.0, epsilon = 1e-15);
        let v = direction_from_az_el(90.0, 0.0);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dhg_examples() {
        for g in [0.0, 0.3, 1.7, PI] {
            assert_abs_diff_eq!(dhg_phase(g, 0.0, 0.7).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(
            dhg_phase(FRAC_PI_2, 0.21, 0.7).unwrap(),
            DHG_HALF_PI,
            epsilon = 1e-14
        );
        // c only weights two lobes that coincide at g = π/2
        assert_abs_diff_eq!(
            dhg_phase(FRAC_PI_2, 0.21, -0.4).unwrap(),
            DHG_HALF_PI,
            epsilon = 1e-14
        );
        assert!(dhg_phase(0.5, 1.0, 0.7).is_err());
    }

    #[test]
    fn shoe_examples() {
        assert_abs_diff_eq!(shoe(0.0, 3.1, 0.11).unwrap(), 4.1, epsilon = 1e-15);
        assert_eq!(shoe(PI, 3.1, 0.11).unwrap(), 1.0);
        assert!((shoe(PI - 1e-9, 3.1, 0.11).unwrap() - 1.0).abs() < 1e-8);
        let mid = 2.0 * 0.11f64.atan();
        assert_abs_diff_eq!(shoe(mid, 3.1, 0.11).unwrap(), 2.55, epsilon = 1e-12);
        assert!(shoe(0.1, 3.1, 0.0).is_err());
    }

    #[test]
    fn h_function_examples() {
        assert_eq!(h_function(0.0, 0.5).unwrap(), 1.0);
        assert_abs_diff_eq!(h_function(1.0, 1e-12).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(h_function(0.5, 0.8).unwrap(), H_HALF_W08, epsilon = 1e-13);
        assert!(h_function(1.5, 0.5).is_err());
        assert!(h_function(0.5, 0.0).is_err());
    }

    #[test]
    fn h_derivative_matches_finite_differences() {
        for &w in &[0.1, 0.5, 0.95, 1.0] {
            for &x in &[0.05, 0.3, 0.7, 0.99] {
                let step = 1e-6;
                let fd = (h_with_derivative(x + step, w).0 - h_with_derivative(x - step, w).0)
                    / (2.0 * step);
                let an = h_with_derivative(x, w).1;
                assert!((fd - an).abs() <= 1e-7 * an.abs().max(1.0), "x={x} w={w}");
            }
        }
    }

    #[test]
    fn multiple_scattering_examples() {
        assert_abs_diff_eq!(
            multiple_scattering(0.4, 0.9, 1e-12).unwrap(),
            0.0,
            epsilon = 1e-10
        );
        assert_eq!(multiple_scattering(0.0, 0.0, 0.7).unwrap(), 0.0);
        assert_abs_diff_eq!(
            multiple_scattering(1.0, 1.0, 0.6).unwrap(),
            M_ONE_ONE_W06,
            epsilon = 1e-13
        );
    }

    #[test]
    fn hapke_examples() {
        let params = HapkeParams::default();
        let r = hapke_amsa(FRAC_PI_4, 0.0, FRAC_PI_4, 1e-12, &params).unwrap();
        assert!(r.abs() < 1e-12);

        let d30 = 30f64.to_radians();
        let lo = hapke_amsa(d30, d30, d30, 0.3, &params).unwrap();
        let hi = hapke_amsa(d30, d30, d30, 0.6, &params).unwrap();
        assert!(hi > lo);

        let r = hapke_amsa(FRAC_PI_4, 0.0, FRAC_PI_4, 0.3, &params).unwrap();
        assert_abs_diff_eq!(r, AMSA_45_0_45_W03, epsilon = 1e-15);
    }

    #[test]
    fn hapke_zero_when_unlit_or_grazing() {
        let params = HapkeParams::default();
        assert_eq!(hapke_amsa(FRAC_PI_2, 0.2, 1.0, 0.5, &params).unwrap(), 0.0);
        assert_eq!(hapke_amsa(2.0, 0.2, 1.0, 0.5, &params).unwrap(), 0.0);
        assert_eq!(hapke_amsa(0.2, FRAC_PI_2 + 0.1, 1.0, 0.5, &params).unwrap(), 0.0);
    }

    #[test]
    fn hapke_rejects_unsupported_params() {
        let mut p = HapkeParams::default();
        p.theta_bar = 0.2;
        assert!(hapke_amsa(0.1, 0.1, 0.1, 0.5, &p).is_err());
        let mut p = HapkeParams::default();
        p.cboe_enabled = true;
        assert!(hapke_amsa(0.1, 0.1, 0.1, 0.5, &p).is_err());
        assert!(hapke_amsa(0.1, 0.1, 0.1, 1.2, &HapkeParams::default()).is_err());
    }

    #[test]
    fn hapke_cosine_partials_match_finite_differences() {
        let pt = HapkeParams::default().phase_term(0.6);
        let (mu0, mu, w) = (0.63, 0.81, 0.27);
        let (_, d0, d1) = hapke_from_cosines(mu0, mu, pt, w);
        let h = 1e-6;
        let fd0 = (hapke_from_cosines(mu0 + h, mu, pt, w).0 - hapke_from_cosines(mu0 - h, mu, pt, w).0)
            / (2.0 * h);
        let fd1 = (hapke_from_cosines(mu0, mu + h, pt, w).0 - hapke_from_cosines(mu0, mu - h, pt, w).0)
            / (2.0 * h);
        assert!((d0 - fd0).abs() < 1e-8 * d0.abs());
        assert!((d1 - fd1).abs() < 1e-8 * d1.abs());
    }

    #[test]
    fn lambert_examples() {
        assert_eq!(lambert_reflectance(0.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(lambert_reflectance(FRAC_PI_2, 1.0).unwrap(), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(lambert_reflectance(FRAC_PI_3, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(lambert_reflectance(2.5, 1.0).unwrap(), 0.0);
        assert!(lambert_reflectance(0.0, -0.1).is_err());
    }
}
