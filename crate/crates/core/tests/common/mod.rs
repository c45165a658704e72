#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use meevc::femspace::{make_space, Family, Field, FunctionSpace};
use meevc::mesh::{build_channel_mesh, build_periodic_rect_mesh, ChannelGeometry, Mesh, Pattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `[−½, ½] × [0, 1]`.
pub fn unit_square(nx: usize, ny: usize) -> Arc<Mesh> {
    let g = ChannelGeometry::new(1.0, 1.0, 0.5).unwrap();
    Arc::new(build_channel_mesh(g, nx, ny, Pattern::Left).unwrap())
}

pub fn channel(length: f64, nx: usize, ny: usize, pattern: Pattern) -> Arc<Mesh> {
    let g = ChannelGeometry::new(length, 1.0, 1.0).unwrap();
    Arc::new(build_channel_mesh(g, nx, ny, pattern).unwrap())
}

pub fn torus(n: usize, pattern: Pattern) -> Arc<Mesh> {
    Arc::new(build_periodic_rect_mesh(2.0 * PI, 2.0 * PI, n, n, pattern).unwrap())
}

/// Jittered channel mesh, for tests that should not rely on structure.
pub fn random_channel(seed: u64) -> Arc<Mesh> {
    let base = build_channel_mesh(ChannelGeometry::new(3.0, 1.0, 1.0).unwrap(), 9, 4, Pattern::Crisscross).unwrap();
    Arc::new(base.jitter(0.2, seed).unwrap())
}

pub fn random_torus(seed: u64) -> Arc<Mesh> {
    let base = build_periodic_rect_mesh(1.0, 1.5, 5, 6, Pattern::Right).unwrap();
    Arc::new(base.jitter(0.2, seed).unwrap())
}

pub fn space(mesh: &Arc<Mesh>, family: Family, degree: usize) -> Arc<FunctionSpace> {
    make_space(mesh, family, degree).unwrap()
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn random_field(space: &Arc<FunctionSpace>, seed: u64) -> Field {
    let mut v = random_vec(space.dim(), seed);
    for &d in space.constrained_dofs() {
        v[d] = 0.0;
    }
    Field::new(space, v).unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Unstructured-count channel triangulation with (V, E, C) = (619, 1734, 1116):
/// a 54×6 grid whose first 234 quads are split into four triangles around
/// their centroid and the rest into two.
pub fn split_channel_mesh_text() -> String {
    let (nx, ny, split4) = (54usize, 6usize, 234usize);
    let (x0, lx, ly) = (-1.0, 13.0, 1.0);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut verts = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push([x0 + lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut cells = Vec::new();
    let mut q = 0;
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            if q < split4 {
                let m = verts.len();
                let p = [verts[a], verts[b], verts[c], verts[d]];
                verts.push([(p[0][0] + p[2][0]) / 2.0, (p[0][1] + p[2][1]) / 2.0]);
                cells.extend([[a, b, m], [b, c, m], [c, d, m], [d, a, m]]);
            } else {
                cells.extend([[a, b, c], [a, c, d]]);
            }
            q += 1;
        }
    }
    let mut s = format!("{} {} {}\n", verts.len(), verts.len() + cells.len() - 1, cells.len());
    for v in &verts {
        s.push_str(&format!("{:e} {:e}\n", v[0], v[1]));
    }
    for c in &cells {
        s.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
    }
    s
}
