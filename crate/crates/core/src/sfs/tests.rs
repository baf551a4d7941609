use approx::assert_abs_diff_eq;

use super::*;
use crate::photometry::{hapke_amsa, HapkeParams, IlluminationGeometry};
use crate::render::{render_image, ReflectanceModel};
use crate::terrain::{normals_from_gradient, synth_terrain, TerrainSpec};
use crate::Error;

fn illum() -> IlluminationGeometry {
    IlluminationGeometry::from_az_el((30.0, 45.0), (0.0, 90.0)).unwrap()
}

fn terrain(n: usize, seed: u64) -> Dem {
    synth_terrain(&TerrainSpec {
        width: n,
        height: n,
        crater_count: 2,
        crater_radius: (2.0, (n as f64 / 2.0).min(6.0)),
        crater_depth: (0.5, 1.0),
        fractal_amplitude: 0.1,
        seed,
        ..TerrainSpec::default()
    })
    .unwrap()
}

fn render(dem: &Dem, w: f64) -> Grid {
    let albedo = Grid::filled(dem.width(), dem.height(), w);
    render_image(dem, &albedo, &illum(), ReflectanceModel::Hapke, &HapkeParams::default()).unwrap()
}

fn problem(image: Grid, reference: Dem, cfg: SfsConfig) -> SfsProblem {
    SfsProblem::new(image, reference, illum(), HapkeParams::default(), cfg).unwrap()
}

/// Direct 2-D Gaussian blur with half-sample reflection, independent of the
/// separable implementation.
fn brute_lowpass(g: &Grid, scale: f64) -> Grid {
    if scale <= 1.0 {
        return g.clone();
    }
    let sigma = scale / 2.0;
    let r = (3.0 * sigma).ceil() as isize;
    let (w, h) = (g.width() as isize, g.height() as isize);
    let reflect = |i: isize, n: isize| {
        let m = i.rem_euclid(2 * n);
        if m < n {
            m
        } else {
            2 * n - 1 - m
        }
    };
    let norm: f64 = (-r..=r).map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()).sum();
    Grid::from_fn(g.width(), g.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let k = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() / (norm * norm);
                let xx = reflect(x as isize + dx, w) as usize;
                let yy = reflect(y as isize + dy, h) as usize;
                acc += k * g[(xx, yy)];
            }
        }
        acc
    })
}

#[test]
fn intensity_examples() {
    let a = Grid::from_fn(4, 3, |x, y| (x + y) as f64 * 0.1);
    assert_eq!(intensity_error(&a, &a, 1.0).unwrap(), 0.0);
    let r = Grid::filled(1, 1, 0.2);
    let i = Grid::filled(1, 1, 0.1);
    assert_abs_diff_eq!(intensity_error(&r, &i, 1.0).unwrap(), 0.005, epsilon = 1e-15);
    let b = Grid::from_fn(4, 3, |x, _| x as f64);
    assert_eq!(intensity_error(&a, &b, 1.0).unwrap(), intensity_error(&b, &a, 1.0).unwrap());
    assert!(matches!(intensity_error(&a, &r, 1.0), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn integrability_examples() {
    let z = terrain(12, 1);
    assert_eq!(integrability_error(&z, &gradient_field(&z)).unwrap(), 0.0);
    let flat = Dem::new(Grid::filled(5, 4, 3.0), 1.0).unwrap();
    let gf = GradientField::new(Grid::filled(5, 4, 1.0), Grid::zeros(5, 4)).unwrap();
    assert_abs_diff_eq!(integrability_error(&flat, &gf).unwrap(), 10.0, epsilon = 1e-12);
    let small = GradientField::new(Grid::zeros(3, 3), Grid::zeros(3, 3)).unwrap();
    assert!(integrability_error(&flat, &small).is_err());
}

#[test]
fn relative_depth_examples() {
    let init = terrain(20, 2);
    let gf = gradient_field(&init);
    assert_eq!(relative_depth_error(&gf, &init, 4.0).unwrap(), 0.0);

    let other = GradientField::new(
        Grid::from_fn(20, 20, |x, y| ((x * 7 + y * 3) % 5) as f64 * 0.1 - 0.2),
        Grid::from_fn(20, 20, |x, y| ((x * 2 + y * 5) % 7) as f64 * 0.05),
    )
    .unwrap();
    let base = relative_depth_error(&other, &init, 4.0).unwrap();
    assert_abs_diff_eq!(base, relative_depth_error(&other, &init.offset(123.0), 4.0).unwrap(), epsilon = 1e-9);

    // oracle: direct double loop over the 2-D kernel
    let rp = brute_lowpass(&gf.p, 4.0);
    let rq = brute_lowpass(&gf.q, 4.0);
    let op = brute_lowpass(&other.p, 4.0);
    let oq = brute_lowpass(&other.q, 4.0);
    let mut expected = 0.0;
    for i in 0..rp.len() {
        expected += (op.as_slice()[i] - rp.as_slice()[i]).powi(2) + (oq.as_slice()[i] - rq.as_slice()[i]).powi(2);
    }
    assert_abs_diff_eq!(base, 0.5 * expected, epsilon = 1e-12);
}

#[test]
fn absolute_depth_examples() {
    let init = terrain(16, 3);
    assert_eq!(absolute_depth_error(&init, &init, 8.0).unwrap(), 0.0);
    let shifted = init.offset(0.5);
    assert_abs_diff_eq!(
        absolute_depth_error(&shifted, &init, 8.0).unwrap(),
        0.5 * 256.0 * 0.25,
        epsilon = 1e-9
    );
    let a = 1.0;
    let checker = Dem::new(
        init.heights().zip_map(&Grid::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { a } else { -a }), |z, c| z + c).unwrap(),
        1.0,
    )
    .unwrap();
    let e = absolute_depth_error(&checker, &init, 8.0).unwrap();
    assert!(e < 1e-3 * 0.5 * 256.0 * a * a, "checkerboard leaked through: {e}");
}

#[test]
fn total_error_decomposes() {
    let truth = terrain(16, 4);
    let image = render(&truth, 0.3);
    let init = Dem::new(lowpass(truth.heights(), 4.0), 1.0).unwrap();
    let cfg = SfsConfig {
        gamma: 0.7,
        delta: 0.2,
        tau: 0.05,
        lowpass_scale: 4.0,
        ..SfsConfig::default()
    };
    let pb = problem(image.clone(), init.clone(), cfg);
    let mut state = SfsState::from_dem(&truth, 0.25);
    state.gradient.p = state.gradient.p.map(|v| v + 0.01);
    let t = pb.total_error(&state).unwrap();

    let e_i = intensity_error(&render_hapke_of(&state), &image, 1.0).unwrap();
    let e_int = integrability_error(&state.z, &state.gradient).unwrap();
    let e_rel = relative_depth_error(&state.gradient, &init, 4.0).unwrap();
    let e_abs = absolute_depth_error(&state.z, &init, 4.0).unwrap();
    assert_abs_diff_eq!(t.intensity, e_i, epsilon = 1e-12);
    assert_abs_diff_eq!(t.integrability, e_int, epsilon = 1e-12);
    assert_abs_diff_eq!(t.relative_depth, e_rel, epsilon = 1e-12);
    assert_abs_diff_eq!(t.absolute_depth, e_abs, epsilon = 1e-12);
    assert_abs_diff_eq!(t.total, e_i + 0.7 * e_int + 0.2 * e_rel + 0.05 * e_abs, epsilon = 1e-12);

    let unweighted = problem(
        image.clone(),
        init,
        SfsConfig {
            gamma: 0.0,
            delta: 0.0,
            tau: 0.0,
            ..SfsConfig::default()
        },
    );
    assert_abs_diff_eq!(unweighted.total_error(&state).unwrap().total, e_i, epsilon = 1e-15);
}

/// Renders the state's own `(p, q)` gradients (not those of `z`) through the
/// angle-based reflectance function.
fn render_hapke_of(state: &SfsState) -> Grid {
    let params = HapkeParams::default();
    let il = illum();
    let normals = normals_from_gradient(&state.gradient);
    Grid::from_fn(state.albedo.width(), state.albedo.height(), |x, y| {
        let (inc, emi) = il.incidence_emission(normals.get(x, y));
        hapke_amsa(inc, emi, il.phase(), state.albedo[(x, y)], &params).unwrap()
    })
}

#[test]
fn perfect_state_is_a_global_minimum() {
    let truth = terrain(16, 5);
    let pb = problem(render(&truth, 0.3), truth.clone(), SfsConfig { lowpass_scale: 4.0, ..SfsConfig::default() });
    let state = pb.initial_state();
    assert!(pb.total_error(&state).unwrap().total < 1e-30);
    let g = pb.energy_gradient(&state).unwrap();
    for v in g.p.iter().chain(g.q.iter()).chain(g.z.iter()) {
        assert!(v.abs() < 1e-9);
    }
}

#[test]
fn z_gradient_vanishes_without_regularisation() {
    let truth = terrain(12, 6);
    let pb = problem(
        render(&truth, 0.3),
        Dem::new(lowpass(truth.heights(), 4.0), 1.0).unwrap(),
        SfsConfig {
            gamma: 0.0,
            delta: 0.0,
            tau: 0.0,
            ..SfsConfig::default()
        },
    );
    let g = pb.energy_gradient(&pb.initial_state()).unwrap();
    assert!(g.z.iter().all(|&v| v == 0.0));
    assert!(g.p.iter().any(|&v| v != 0.0));
}

#[test]
fn gradient_matches_finite_differences() {
    let truth = terrain(10, 7);
    let init = Dem::new(lowpass(truth.heights(), 3.0), 1.0).unwrap();
    let pb = problem(
        render(&truth, 0.3),
        init,
        SfsConfig {
            gamma: 0.3,
            delta: 0.2,
            tau: 0.1,
            lowpass_scale: 3.0,
            ..SfsConfig::default()
        },
    );
    let mut state = SfsState::from_dem(&truth, 0.3);
    state.gradient.p = state.gradient.p.map(|v| v * 0.8 + 0.02);
    state.albedo = Grid::from_fn(10, 10, |x, y| 0.2 + 0.01 * (x + y) as f64);
    let g = pb.energy_gradient(&state).unwrap();
    let h = 1e-6;
    let energy = |s: &SfsState| pb.total_error(s).unwrap().total;
    for i in [0, 11, 45, 99] {
        let mut plus = state.clone();
        let mut minus = state.clone();
        plus.gradient.q.as_mut_slice()[i] += h;
        minus.gradient.q.as_mut_slice()[i] -= h;
        let fd = (energy(&plus) - energy(&minus)) / (2.0 * h);
        assert_abs_diff_eq!(g.q.as_slice()[i], fd, epsilon = 1e-9);

        let mut zp = state.clone();
        let mut zm = state.clone();
        let mut hp = zp.z.heights().clone();
        hp.as_mut_slice()[i] += h;
        zp.z = Dem::new(hp, 1.0).unwrap();
        let mut hm = zm.z.heights().clone();
        hm.as_mut_slice()[i] -= h;
        zm.z = Dem::new(hm, 1.0).unwrap();
        let fd = (energy(&zp) - energy(&zm)) / (2.0 * h);
        assert_abs_diff_eq!(g.z.as_slice()[i], fd, epsilon = 1e-9);
    }
}

#[test]
fn albedo_inversion_recovers_flat_albedo() {
    let flat = Dem::new(Grid::zeros(8, 8), 1.0).unwrap();
    let image = render(&flat, 0.3);
    let pb = problem(image.clone(), flat.clone(), SfsConfig::default());
    let est = pb.estimate_albedo(&SfsState::from_dem(&flat, 0.5)).unwrap();
    let params = HapkeParams::default();
    let (inc, emi) = illum().incidence_emission([0.0, 0.0, 1.0]);
    let g = illum().phase();
    for (&w, &i) in est.raw.iter().zip(image.iter()) {
        assert_abs_diff_eq!(w, 0.3, epsilon = 1e-9);
        let r = hapke_amsa(inc, emi, g, w, &params).unwrap();
        assert!((r - i).abs() < 1e-8);
    }
    assert_eq!(est.clamped_count(), 0);
}

#[test]
fn dark_pixels_clamp_to_lower_bound() {
    let flat = Dem::new(Grid::zeros(6, 6), 1.0).unwrap();
    let pb = problem(Grid::zeros(6, 6), flat.clone(), SfsConfig::default());
    let est = pb.estimate_albedo(&SfsState::from_dem(&flat, 0.3)).unwrap();
    assert!(est.raw.iter().all(|&w| w == albedo::MIN_ALBEDO));
    assert_eq!(est.clamped_count(), 36);
}

#[test]
fn consistent_state_is_an_albedo_fixed_point() {
    let truth = terrain(12, 8);
    let pb = problem(render(&truth, 0.3), truth.clone(), SfsConfig::default());
    let est = pb.estimate_albedo(&pb.initial_state()).unwrap();
    for &w in est.smoothed.iter() {
        assert_abs_diff_eq!(w, 0.3, epsilon = 1e-10);
    }
}

#[test]
fn unlit_pixels_keep_their_albedo() {
    let steep = Dem::new(Grid::from_fn(6, 6, |x, _| 5.0 * x as f64), 1.0).unwrap();
    // sun from +x: a slope rising 5:1 toward +x faces away from it
    let il = IlluminationGeometry::from_az_el((0.0, 30.0), (0.0, 90.0)).unwrap();
    let pb = SfsProblem::new(Grid::filled(6, 6, 0.05), steep.clone(), il, HapkeParams::default(), SfsConfig::default()).unwrap();
    let state = SfsState::from_dem(&steep, 0.42);
    let est = pb.estimate_albedo(&state).unwrap();
    assert!(est.unlit.iter().all(|&u| u));
    assert!(est.raw.iter().all(|&w| w == 0.42));
    assert_eq!(pb.total_error(&state).unwrap().intensity, 0.0);
}

#[test]
fn reconstruct_fixed_point() {
    let truth = terrain(24, 9);
    let pb = problem(render(&truth, 0.3), truth.clone(), SfsConfig::default());
    let out = pb.reconstruct().unwrap();
    let max_dz = out
        .z
        .heights()
        .iter()
        .zip(truth.heights().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_dz < 1e-6, "drifted by {max_dz}");
    assert!(out.history.last().unwrap().terms.total < 1e-12);
}

fn crater_problem(cfg: SfsConfig) -> (Dem, SfsProblem) {
    let truth = terrain(32, 10);
    let init = Dem::new(lowpass(truth.heights(), 4.0), 1.0).unwrap();
    (
        truth.clone(),
        problem(
            render(&truth, 0.3),
            init,
            SfsConfig {
                lowpass_scale: 4.0,
                max_iters: 60,
                ..cfg
            },
        ),
    )
}

#[test]
fn energy_history_never_increases() {
    for memory in [0, 8] {
        let (_, pb) = crater_problem(SfsConfig {
            lbfgs_memory: memory,
            albedo_update_period: 7,
            ..SfsConfig::default()
        });
        let out = pb.reconstruct().unwrap();
        let h = out.energy_history();
        assert!(h.len() > 2);
        assert!(h.windows(2).all(|w| w[1] <= w[0]), "memory {memory}: {h:?}");
        assert!(h.last() < h.first());
        assert_eq!(out.history[0].iteration, 0);
    }
}

#[test]
fn reconstruction_improves_slopes() {
    let (truth, pb) = crater_problem(SfsConfig {
        max_iters: 300,
        ..SfsConfig::default()
    });
    let out = pb.reconstruct().unwrap();
    let err = |d: &Dem| {
        let a = crate::terrain::slope_map(&gradient_field(d));
        let b = crate::terrain::slope_map(&gradient_field(&truth));
        crate::metrics::rmse(&a, &b).unwrap()
    };
    assert!(err(&out.z) < err(pb.reference()));
}

#[test]
fn reconstruct_is_translation_consistent() {
    let (_, pb) = crater_problem(SfsConfig::default());
    let shifted = SfsProblem::new(
        pb.image().clone(),
        pb.reference().offset(250.0),
        *pb.illumination(),
        *pb.params(),
        pb.config().clone(),
    )
    .unwrap();
    let a = pb.reconstruct().unwrap();
    let b = shifted.reconstruct().unwrap();
    for (za, zb) in a.z.heights().iter().zip(b.z.heights().iter()) {
        assert_abs_diff_eq!(zb - za, 250.0, epsilon = 1e-6);
    }
    for (x, y) in a.gradient.p.iter().zip(b.gradient.p.iter()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-6);
    }
    for (x, y) in a.albedo.iter().zip(b.albedo.iter()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-6);
    }
}

#[test]
fn construction_errors() {
    let d = terrain(8, 11);
    let bad = SfsProblem::new(Grid::zeros(9, 8), d.clone(), illum(), HapkeParams::default(), SfsConfig::default());
    assert!(matches!(bad, Err(Error::ShapeMismatch { .. })));
    let nan = SfsProblem::new(Grid::filled(8, 8, f64::NAN), d.clone(), illum(), HapkeParams::default(), SfsConfig::default());
    assert!(nan.is_err());
    for cfg in [
        SfsConfig { gamma: -1.0, ..SfsConfig::default() },
        SfsConfig { lowpass_scale: 0.5, ..SfsConfig::default() },
        SfsConfig { max_iters: 0, ..SfsConfig::default() },
        SfsConfig { stop_tol: 0.0, ..SfsConfig::default() },
    ] {
        assert!(SfsProblem::new(Grid::zeros(8, 8), d.clone(), illum(), HapkeParams::default(), cfg).is_err());
    }
}

#[test]
fn config_overrides() {
    let mut kv = crate::config::KeyValues::parse("gamma = 0.25\nmax_iters = 12\n# note\nlbfgs_memory = 0\n").unwrap();
    let mut cfg = SfsConfig::default();
    cfg.apply(&mut kv).unwrap();
    kv.finish().unwrap();
    assert_eq!((cfg.gamma, cfg.max_iters, cfg.lbfgs_memory), (0.25, 12, 0));
    let mut kv = crate::config::KeyValues::parse("gamma = 1\nbeta = 2\n").unwrap();
    SfsConfig::default().apply(&mut kv).unwrap();
    assert!(kv.finish().is_err());
}
