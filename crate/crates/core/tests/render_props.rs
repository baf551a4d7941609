use lunar_sfs_core::photometry::{HapkeParams, IlluminationGeometry};
use lunar_sfs_core::render::{render_image, ReflectanceModel};
use lunar_sfs_core::terrain::{gradient_field, normals_from_gradient, Dem};
use lunar_sfs_core::Grid;
use proptest::prelude::*;

fn scene() -> impl Strategy<Value = (Grid, Grid)> {
    (4usize..12, 4usize..12).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(-5.0..5.0f64, w * h).prop_map(move |v| Grid::from_vec(w, h, v).unwrap()),
            prop::collection::vec(0.05..0.9f64, w * h).prop_map(move |v| Grid::from_vec(w, h, v).unwrap()),
        )
    })
}

fn geometry() -> impl Strategy<Value = IlluminationGeometry> {
    (0.0..360.0f64, 5.0..85.0f64, 0.0..360.0f64, 60.0..90.0f64)
        .prop_map(|(sa, se, va, ve)| IlluminationGeometry::from_az_el((sa, se), (va, ve)).unwrap())
}

proptest! {
    #[test]
    fn hapke_image_nonnegative_and_dark_where_unlit((z, w) in scene(), il in geometry()) {
        let dem = Dem::new(z, 1.0).unwrap();
        let img = render_image(&dem, &w, &il, ReflectanceModel::Hapke, &HapkeParams::default()).unwrap();
        let normals = normals_from_gradient(&gradient_field(&dem));
        let s = il.sun();
        for (r, n) in img.iter().zip(normals.as_slice()) {
            prop_assert!(*r >= 0.0);
            let mu0 = n[0] * s[0] + n[1] * s[1] + n[2] * s[2];
            if mu0 <= 0.0 {
                prop_assert_eq!(*r, 0.0);
            }
        }
    }

    #[test]
    fn render_is_shift_equivariant((z, w) in scene(), il in geometry(), dx in 1usize..3, dy in 1usize..3) {
        let (width, height) = z.shape();
        let shift = |g: &Grid| Grid::from_fn(width, height, |x, y| g[((x + dx) % width, (y + dy) % height)]);
        let render = |z: &Grid, w: &Grid| {
            render_image(&Dem::new(z.clone(), 1.0).unwrap(), w, &il, ReflectanceModel::Hapke, &HapkeParams::default()).unwrap()
        };
        let a = render(&z, &w);
        let b = render(&shift(&z), &shift(&w));
        prop_assert_eq!(&a, &render(&z, &w));
        // borders use one-sided differences, so compare pixels whose stencil stays
        // interior in both frames
        for y in 1..height.saturating_sub(1 + dy) {
            for x in 1..width.saturating_sub(1 + dx) {
                prop_assert!((b[(x, y)] - a[(x + dx, y + dy)]).abs() < 1e-12);
            }
        }
    }
}
