mod common;

use std::sync::Arc;

use common::*;
use meevc::femspace::{Family, Field};
use meevc::linsolve::LuSolver;
use meevc::mesh::{build_channel_mesh, ChannelGeometry, Mesh, Pattern};
use meevc::operators::{assemble_curl_coupling, assemble_div, assemble_mass, assemble_rotation};
use proptest::prelude::*;

fn jittered(nx: usize, ny: usize, pattern: Pattern, amount: f64, seed: u64) -> Arc<Mesh> {
    let g = ChannelGeometry::new(2.0, 1.0, 0.5).unwrap();
    Arc::new(build_channel_mesh(g, nx, ny, pattern).unwrap().jitter(amount, seed).unwrap())
}

fn pattern() -> impl Strategy<Value = Pattern> {
    prop_oneof![Just(Pattern::Left), Just(Pattern::Right), Just(Pattern::Crisscross)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cell_areas_sum_to_domain(nx in 1usize..8, ny in 1usize..5, p in pattern(), j in 0.0..0.3f64, seed in any::<u64>()) {
        let mesh = jittered(nx, ny, p, j, seed);
        let total: f64 = (0..mesh.num_cells()).map(|c| mesh.geometry(c).area()).sum();
        prop_assert!((total - 2.0).abs() < 1e-12);
        prop_assert!((mesh.total_area() - 2.0).abs() < 1e-12);
        prop_assert!((0..mesh.num_cells()).all(|c| mesh.geometry(c).det > 0.0));
    }

    #[test]
    fn discrete_curl_is_divergence_free(nx in 1usize..6, ny in 1usize..4, p in pattern(), n in 1usize..=2, seed in any::<u64>()) {
        let mesh = jittered(nx, ny, p, 0.2, seed);
        let w = space(&mesh, Family::CG, n);
        let u = space(&mesh, Family::RT, n);
        let (d, _) = assemble_div(&u, &space(&mesh, Family::DG, n - 1)).unwrap();
        let c = assemble_curl_coupling(&w, &u).unwrap();
        let psi = random_vec(w.dim(), seed);
        let (x, _) = LuSolver::new(&assemble_mass(&u), &[]).unwrap().solve(&c.mul_vec(&psi), &[]).unwrap();
        prop_assert!(max_abs(&d.mul_vec(&x)) < 1e-9 * (1.0 + max_abs(&x)));
    }

    #[test]
    fn rotation_matrix_is_skew(n in 1usize..=2, seed in any::<u64>()) {
        let mesh = jittered(4, 2, Pattern::Crisscross, 0.2, seed);
        let w = space(&mesh, Family::CG, n);
        let u = space(&mesh, Family::RT, n);
        let om = Field::new(&w, random_vec(w.dim(), seed ^ 7)).unwrap();
        let (r, _) = assemble_rotation(&om, &u).unwrap();
        let x = random_vec(u.dim(), seed ^ 11);
        let y = random_vec(u.dim(), seed ^ 13);
        prop_assert!((r.quad_form(&x, &y) + r.quad_form(&y, &x)).abs() < 1e-12);
    }
}
