use lunar_sfs_core::render::lambert_shade;
use lunar_sfs_core::terrain::{gradient_field, lowpass, normals_from_gradient, slope_map, Dem};
use lunar_sfs_core::Grid;
use proptest::prelude::*;

fn grid(w: usize, h: usize) -> impl Strategy<Value = Grid> {
    prop::collection::vec(-50.0..50.0f64, w * h).prop_map(move |v| Grid::from_vec(w, h, v).unwrap())
}

fn dem_strategy() -> impl Strategy<Value = (Dem, f64)> {
    (3usize..12, 3usize..12, 0.25..4.0f64)
        .prop_flat_map(|(w, h, px)| (grid(w, h), Just(px)))
        .prop_map(|(g, px)| (Dem::new(g, px).unwrap(), px))
}

proptest! {
    #[test]
    fn normals_are_unit_and_upward((dem, _) in dem_strategy()) {
        let normals = normals_from_gradient(&gradient_field(&dem));
        for n in normals.as_slice() {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            prop_assert!((len - 1.0).abs() < 1e-9);
            prop_assert!(n[2] > 0.0);
        }
    }

    #[test]
    fn slope_equals_normal_tilt((dem, _) in dem_strategy()) {
        let gf = gradient_field(&dem);
        let slope = slope_map(&gf);
        let normals = normals_from_gradient(&gf);
        for (s, n) in slope.iter().zip(normals.as_slice()) {
            // arccos loses precision as n_z -> 1; widen by its condition number there
            let tol = 1e-12f64.max(4.0 * f64::EPSILON / s.sin());
            prop_assert!((s - n[2].acos()).abs() < tol, "slope {} vs {}", s, n[2].acos());
        }
    }

    #[test]
    fn gradient_is_linear(
        (a_g, b_g) in (3usize..10, 3usize..10).prop_flat_map(|(w, h)| (grid(w, h), grid(w, h))),
        a in -3.0..3.0f64, b in -3.0..3.0f64, px in 0.5..2.0f64,
    ) {
        let mix = a_g.zip_map(&b_g, |x, y| a * x + b * y).unwrap();
        let g1 = gradient_field(&Dem::new(a_g, px).unwrap());
        let g2 = gradient_field(&Dem::new(b_g, px).unwrap());
        let gm = gradient_field(&Dem::new(mix, px).unwrap());
        for i in 0..gm.p.len() {
            prop_assert!((gm.p.as_slice()[i] - (a * g1.p.as_slice()[i] + b * g2.p.as_slice()[i])).abs() < 1e-9);
            prop_assert!((gm.q.as_slice()[i] - (a * g1.q.as_slice()[i] + b * g2.q.as_slice()[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn lowpass_keeps_mean(g in (4usize..40, 4usize..40).prop_flat_map(|(w, h)| grid(w, h)), scale in 1.0..12.0f64) {
        prop_assert!((lowpass(&g, scale).mean() - g.mean()).abs() < 1e-9);
    }

    #[test]
    fn shading_ignores_height_offset((dem, _) in dem_strategy(), c in -1e3..1e3f64) {
        let light = [0.5, 0.0, 0.4];
        let a = lambert_shade(&dem, light).unwrap();
        let b = lambert_shade(&dem.offset(c), light).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
