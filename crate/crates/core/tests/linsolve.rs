mod common;

use common::*;
use meevc::femspace::{project_scalar, Family};
use meevc::linsolve::{cg_solve, lu_solve, project_out_constant, solve_saddle, LinearSystem};
use meevc::mesh::BoundaryTag;
use meevc::operators::{assemble_div, assemble_mass, assemble_rotation};
use meevc::sparse::{dot, SparseMatrix};

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        assert!(a[k][k].abs() > 1e-14, "dense oracle hit a singular pivot");
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Bordered KKT `[[A, −Dᵀ, 0], [D, 0, w], [0, wᵀ, 0]]` over the free velocity
/// DOFs, with `w` the pressure basis integrals enforcing a zero mean.
fn saddle_oracle(a: &SparseMatrix, d: &SparseMatrix, f: &[f64], free: &[usize], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nf, np) = (free.len(), d.nrows());
    let n = nf + np + 1;
    let ad = a.to_dense();
    let dd = d.to_dense();
    let mut m = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            m[r][c] = ad[i][j];
        }
        for q in 0..np {
            m[r][nf + q] = -dd[q][i];
            m[nf + q][r] = dd[q][i];
        }
        rhs[r] = f[i];
    }
    for q in 0..np {
        m[nf + q][n - 1] = w[q];
        m[n - 1][nf + q] = w[q];
    }
    let x = dense_solve(m, rhs);
    let mut u = vec![0.0; a.nrows()];
    for (r, &i) in free.iter().enumerate() {
        u[i] = x[r];
    }
    (u, x[nf..nf + np].to_vec())
}

#[test]
fn mass_solve_of_projected_constant() {
    let mesh = random_channel(1);
    let w = space(&mesh, Family::CG, 1);
    let n = assemble_mass(&w);
    let b = n.mul_vec(&vec![1.0; w.dim()]);
    let (x, _) = lu_solve(LinearSystem::new(&n, &b)).unwrap();
    assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn cg_matches_lu_on_mass_matrices() {
    let mesh = random_channel(2);
    for n in 1..=2 {
        let m = assemble_mass(&space(&mesh, Family::RT, n));
        let b = random_vec(m.nrows(), 3);
        let (x_lu, _) = lu_solve(LinearSystem::new(&m, &b)).unwrap();
        let (x_cg, rep) = cg_solve(LinearSystem::new(&m, &b), 1e-12, 10_000).unwrap();
        assert!(rep.iterations > 0);
        let diff: Vec<f64> = x_lu.iter().zip(&x_cg).map(|(a, b)| a - b).collect();
        assert!(max_abs(&diff) < 1e-9 * (1.0 + max_abs(&x_lu)));
    }
}

#[test]
fn lu_honours_constraints_and_residual_bound() {
    let mesh = random_channel(4);
    let w = space(&mesh, Family::CG, 2);
    let a = assemble_mass(&w);
    let b = random_vec(w.dim(), 5);
    let fixed = w.boundary_dofs(&[BoundaryTag::Left]);
    let cons: Vec<(usize, f64)> = fixed.iter().map(|&i| (i, 0.25)).collect();
    let (x, rep) = lu_solve(LinearSystem::new(&a, &b).with_constraints(&cons)).unwrap();
    for &i in &fixed {
        assert_eq!(x[i], 0.25);
    }
    let ax = a.mul_vec(&x);
    let res = (0..w.dim())
        .filter(|i| !fixed.contains(i))
        .map(|i| (ax[i] - b[i]).abs())
        .fold(0.0, f64::max);
    assert!(res <= 1e-10 * (1.0 + max_abs(&b)));
    assert!(rep.residual <= 1e-10);
}

#[test]
fn saddle_matches_bordered_dense_oracle() {
    let mesh = unit_square(3, 3);
    for n in 1..=2 {
        let uf = space(&mesh, Family::RT, n);
        let u = uf.with_constraints(uf.boundary_dofs(&BoundaryTag::ALL)).unwrap();
        let q = space(&mesh, Family::DG, n - 1);
        let w = space(&mesh, Family::CG, n);
        let (d, _) = assemble_div(&u, &q).unwrap();
        let m = assemble_mass(&u);
        let (r, _) = assemble_rotation(&random_field(&w, 6), &u).unwrap();
        let free: Vec<usize> = (0..u.dim()).filter(|i| !u.constrained_dofs().contains(i)).collect();
        for a in [
            SparseMatrix::lin_comb(&[(100.0, &m)]),
            SparseMatrix::lin_comb(&[(100.0, &m), (0.5, &r)]),
        ] {
            let f = random_vec(u.dim(), 7);
            let sol = solve_saddle(&a, &d, &f, u.constrained_dofs(), &q, true).unwrap();
            let (uo, po) = saddle_oracle(&a, &d, &f, &free, q.basis_integrals());
            let du: Vec<f64> = sol.u.iter().zip(&uo).map(|(a, b)| a - b).collect();
            let dp: Vec<f64> = sol.p.iter().zip(&po).map(|(a, b)| a - b).collect();
            assert!(max_abs(&du) < 1e-9, "N={n}: velocity {}", max_abs(&du));
            assert!(max_abs(&dp) < 1e-9, "N={n}: pressure {}", max_abs(&dp));
            assert!(max_abs(&d.mul_vec(&sol.u)) <= 1e-10);
            assert!(dot(&sol.p, q.basis_integrals()).abs() <= 1e-12);
        }
    }
}

#[test]
fn saddle_with_zero_data_is_zero() {
    let mesh = random_channel(8);
    let uf = space(&mesh, Family::RT, 2);
    let u = uf.with_constraints(uf.boundary_dofs(&BoundaryTag::ALL)).unwrap();
    let q = space(&mesh, Family::DG, 1);
    let (d, _) = assemble_div(&u, &q).unwrap();
    let m = assemble_mass(&u);
    let sol = solve_saddle(&m, &d, &vec![0.0; u.dim()], u.constrained_dofs(), &q, true).unwrap();
    assert_eq!(max_abs(&sol.u), 0.0);
    assert_eq!(max_abs(&sol.p), 0.0);
}

#[test]
fn project_out_constant_examples() {
    let mesh = unit_square(4, 4);
    for deg in 0..=1 {
        let q = space(&mesh, Family::DG, deg);
        let mut c = vec![3.5; q.dim()];
        project_out_constant(&mut c, &q);
        assert!(max_abs(&c) < 1e-14);

        let mut z = random_vec(q.dim(), 9);
        project_out_constant(&mut z, &q);
        let before = z.clone();
        project_out_constant(&mut z, &q);
        let diff: Vec<f64> = z.iter().zip(&before).map(|(a, b)| a - b).collect();
        assert!(max_abs(&diff) <= 1e-14);
    }
    let q = space(&mesh, Family::DG, 1);
    let y = project_scalar(&q, |x| x[1]).unwrap();
    let mut shifted = y.coeffs().to_vec();
    project_out_constant(&mut shifted, &q);
    let centred = project_scalar(&q, |x| x[1] - 0.5).unwrap();
    let diff: Vec<f64> = shifted.iter().zip(centred.coeffs()).map(|(a, b)| a - b).collect();
    assert!(max_abs(&diff) < 1e-12);
}
