//! Direct and iterative solvers, constraint elimination, and the
//! velocity–pressure saddle solve.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};
use crate::femspace::FunctionSpace;
use crate::sparse::{dot, norm_inf, SparseMatrix};

pub const DIRECT_TOL: f64 = 1e-10;
pub const CG_TOL: f64 = 1e-12;
pub const DIV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub residual: f64,
    pub reused_factorization: bool,
}

/// `A x = b` with `x[i] = v` prescribed for every `(i, v)` in `constraints`.
#[derive(Debug, Clone, Copy)]
pub struct LinearSystem<'a> {
    pub matrix: &'a SparseMatrix,
    pub rhs: &'a [f64],
    pub constraints: &'a [(usize, f64)],
}

impl<'a> LinearSystem<'a> {
    pub fn new(matrix: &'a SparseMatrix, rhs: &'a [f64]) -> Self {
        Self {
            matrix,
            rhs,
            constraints: &[],
        }
    }

    pub fn with_constraints(mut self, constraints: &'a [(usize, f64)]) -> Self {
        self.constraints = constraints;
        self
    }
}

fn to_faer(a: &SparseMatrix) -> Result<SparseColMat<usize, f64>> {
    let trips: Vec<_> = a
        .triplets()
        .into_iter()
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &trips)
        .map_err(|e| Error::Singular {
            pivot: None,
            msg: format!("cannot build sparse matrix: {e:?}"),
        })
}

fn lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular { index } => Error::Singular {
            pivot: Some(index),
            msg: "structurally singular".into(),
        },
        LuError::Generic(e) => Error::Singular {
            pivot: None,
            msg: format!("{e:?}"),
        },
    }
}

/// Sparse LU of `A` restricted to its unconstrained rows and columns.
/// The symbolic analysis is kept and reused when the pattern is unchanged.
pub struct LuSolver {
    n: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    a_ff: SparseMatrix,
    a_fc: SparseMatrix,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
    solves: AtomicUsize,
}

impl LuSolver {
    pub fn new(a: &SparseMatrix, fixed: &[usize]) -> Result<Self> {
        let (free, fixed) = split_dofs(a, fixed)?;
        let a_ff = a.select(&free, &free);
        let a_fc = a.select(&free, &fixed);
        let mat = to_faer(&a_ff)?;
        let symbolic = SymbolicLu::try_new(mat.symbolic()).map_err(|e| Error::Singular {
            pivot: None,
            msg: format!("symbolic analysis failed: {e:?}"),
        })?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat.as_ref()).map_err(lu_error)?;
        Ok(Self {
            n: a.nrows(),
            free,
            fixed,
            a_ff,
            a_fc,
            symbolic,
            lu,
            solves: AtomicUsize::new(0),
        })
    }

    /// Refactor with new values; the constrained set is unchanged.
    pub fn refactor(&mut self, a: &SparseMatrix) -> Result<()> {
        if a.nrows() != self.n || a.ncols() != self.n {
            return Err(Error::SpaceMismatch(format!(
                "refactor with a {}x{} matrix, expected {}x{}",
                a.nrows(),
                a.ncols(),
                self.n,
                self.n
            )));
        }
        let a_ff = a.select(&self.free, &self.free);
        let mat = to_faer(&a_ff)?;
        let same_pattern =
            a_ff.row_ptr() == self.a_ff.row_ptr() && a_ff.col_idx() == self.a_ff.col_idx();
        if !same_pattern {
            self.symbolic = SymbolicLu::try_new(mat.symbolic()).map_err(|e| Error::Singular {
                pivot: None,
                msg: format!("symbolic analysis failed: {e:?}"),
            })?;
        }
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat.as_ref()).map_err(lu_error)?;
        self.a_ff = a_ff;
        self.a_fc = a.select(&self.free, &self.fixed);
        self.solves.store(0, Ordering::Relaxed);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    /// Solve with `x[fixed[k]] = fixed_values[k]`.
    pub fn solve(&self, b: &[f64], fixed_values: &[f64]) -> Result<(Vec<f64>, SolverReport)> {
        if b.len() != self.n || fixed_values.len() != self.fixed.len() {
            return Err(Error::SpaceMismatch(format!(
                "rhs length {} / {} constraint values for a {}-system with {} constraints",
                b.len(),
                fixed_values.len(),
                self.n,
                self.fixed.len()
            )));
        }
        let lift = self.a_fc.mul_vec(fixed_values);
        let rhs: Vec<f64> = self.free.iter().zip(&lift).map(|(&i, l)| b[i] - l).collect();
        let mut xf = self.apply_inverse(&rhs);
        let tol = DIRECT_TOL * (1.0 + norm_inf(&rhs));
        let mut res = residual(&self.a_ff, &xf, &rhs);
        if !(norm_inf(&res) <= tol) && res.iter().all(|r| r.is_finite()) {
            let dx = self.apply_inverse(&res);
            xf.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
            res = residual(&self.a_ff, &xf, &rhs);
        }
        let r = if xf.iter().all(|v| v.is_finite()) { norm_inf(&res) } else { f64::INFINITY };
        if !(r <= tol) {
            return Err(Error::Singular {
                pivot: None,
                msg: format!("residual {r:e} exceeds {tol:e} after LU solve"),
            });
        }
        let mut x = vec![0.0; self.n];
        for (&i, &v) in self.free.iter().zip(&xf) {
            x[i] = v;
        }
        for (&i, &v) in self.fixed.iter().zip(fixed_values) {
            x[i] = v;
        }
        let previous = self.solves.fetch_add(1, Ordering::Relaxed);
        Ok((
            x,
            SolverReport {
                iterations: 0,
                residual: r,
                reused_factorization: previous > 0,
            },
        ))
    }

    fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, b)| b - ax).collect()
}

fn split_dofs(a: &SparseMatrix, fixed: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::SpaceMismatch(format!(
            "square matrix required, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut is_fixed = vec![false; a.nrows()];
    for &i in fixed {
        if i >= a.nrows() {
            return Err(Error::SpaceMismatch(format!("constrained DOF {i} out of range")));
        }
        is_fixed[i] = true;
    }
    let free = (0..a.nrows()).filter(|&i| !is_fixed[i]).collect();
    let fixed = (0..a.nrows()).filter(|&i| is_fixed[i]).collect();
    Ok((free, fixed))
}

fn constraint_parts(system: &LinearSystem<'_>) -> (Vec<usize>, Vec<f64>) {
    let mut c: Vec<(usize, f64)> = system.constraints.to_vec();
    c.sort_by_key(|&(i, _)| i);
    c.dedup_by_key(|&mut (i, _)| i);
    c.into_iter().unzip()
}

pub fn lu_solve(system: LinearSystem<'_>) -> Result<(Vec<f64>, SolverReport)> {
    let (idx, vals) = constraint_parts(&system);
    LuSolver::new(system.matrix, &idx)?.solve(system.rhs, &vals)
}

/// Unpreconditioned conjugate gradients on the unconstrained block.
pub fn cg_solve(system: LinearSystem<'_>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolverReport)> {
    let a = system.matrix;
    let (idx, vals) = constraint_parts(&system);
    let (free, fixed) = split_dofs(a, &idx)?;
    if system.rhs.len() != a.nrows() {
        return Err(Error::SpaceMismatch("rhs length differs from matrix size".into()));
    }
    let a_ff = a.select(&free, &free);
    let lift = a.select(&free, &fixed).mul_vec(&vals);
    let b: Vec<f64> = free.iter().zip(&lift).map(|(&i, l)| system.rhs[i] - l).collect();

    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; free.len()];
    let mut iterations = 0;
    let mut rnorm = bnorm;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        while iterations < max_iter {
            let ap = a_ff.mul_vec(&p);
            let alpha = rr / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
            iterations += 1;
            let rr_new = dot(&r, &r);
            rnorm = rr_new.sqrt();
            if rnorm <= tol * bnorm {
                break;
            }
            let beta = rr_new / rr;
            p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
            rr = rr_new;
        }
        if !(rnorm <= tol * bnorm) {
            return Err(Error::NotConverged {
                iterations,
                residual: rnorm / bnorm,
            });
        }
    }
    let mut out = vec![0.0; a.nrows()];
    for (&i, &v) in free.iter().zip(&x) {
        out[i] = v;
    }
    for (&i, &v) in fixed.iter().zip(&vals) {
        out[i] = v;
    }
    Ok((
        out,
        SolverReport {
            iterations,
            residual: if bnorm > 0.0 { rnorm / bnorm } else { 0.0 },
            reused_factorization: false,
        },
    ))
}

/// Remove the mean: afterwards `⟨q, 1⟩ = 0`.
pub fn project_out_constant(q: &mut [f64], space: &FunctionSpace) {
    let w = space.basis_integrals();
    let area: f64 = w.iter().sum();
    let mean = dot(q, w) / area;
    q.iter_mut().for_each(|v| *v -= mean);
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub report: SolverReport,
}

/// Monolithic LU for `A u − Dᵀ p = f`, `D u = 0`, with `u` fixed to zero on
/// `fixed_u`. When `nullspace` is set the first pressure DOF is pinned
/// (its continuity row is dropped) and the mean is removed afterwards.
pub struct SaddleSolver {
    nu: usize,
    np: usize,
    free_u: Vec<usize>,
    kept_p: Vec<usize>,
    d: SparseMatrix,
    lu: Option<LuSolver>,
    nullspace: bool,
}

impl SaddleSolver {
    pub fn new(d: &SparseMatrix, fixed_u: &[usize], nullspace: bool) -> Result<Self> {
        let (nu, np) = (d.ncols(), d.nrows());
        let mut is_fixed = vec![false; nu];
        for &i in fixed_u {
            if i >= nu {
                return Err(Error::SpaceMismatch(format!("velocity DOF {i} out of range")));
            }
            is_fixed[i] = true;
        }
        let free_u = (0..nu).filter(|&i| !is_fixed[i]).collect();
        let kept_p = if nullspace { (1..np).collect() } else { (0..np).collect() };
        Ok(Self {
            nu,
            np,
            free_u,
            kept_p,
            d: d.clone(),
            lu: None,
            nullspace,
        })
    }

    fn kkt(&self, a: &SparseMatrix) -> Result<SparseMatrix> {
        let nf = self.free_u.len();
        let a_ff = a.select(&self.free_u, &self.free_u);
        let d_pf = self.d.select(&self.kept_p, &self.free_u);
        let mut trips = a_ff.triplets();
        for (i, j, v) in d_pf.triplets() {
            trips.push((nf + i, j, v));
            trips.push((j, nf + i, -v));
        }
        let n = nf + self.kept_p.len();
        SparseMatrix::from_triplets(n, n, &trips)
    }

    pub fn solve(&mut self, a: &SparseMatrix, f: &[f64], q_space: &FunctionSpace) -> Result<SaddleSolution> {
        if a.nrows() != self.nu || a.ncols() != self.nu || f.len() != self.nu {
            return Err(Error::SpaceMismatch("saddle operator and rhs sizes disagree".into()));
        }
        if q_space.dim() != self.np {
            return Err(Error::SpaceMismatch("pressure space differs from divergence rows".into()));
        }
        let k = self.kkt(a)?;
        match self.lu.as_mut() {
            Some(lu) => lu.refactor(&k)?,
            None => self.lu = Some(LuSolver::new(&k, &[])?),
        }
        let nf = self.free_u.len();
        let mut rhs = vec![0.0; k.nrows()];
        for (r, &i) in rhs.iter_mut().zip(&self.free_u) {
            *r = f[i];
        }
        let (x, report) = self.lu.as_ref().expect("factored").solve(&rhs, &[])?;
        let mut u = vec![0.0; self.nu];
        for (&i, &v) in self.free_u.iter().zip(&x[..nf]) {
            u[i] = v;
        }
        let mut p = vec![0.0; self.np];
        for (&i, &v) in self.kept_p.iter().zip(&x[nf..]) {
            p[i] = v;
        }
        if self.nullspace {
            project_out_constant(&mut p, q_space);
        }
        let div = norm_inf(&self.d.mul_vec(&u));
        if !(div <= DIV_TOL) {
            return Err(Error::Postcondition(format!("‖Du‖∞ = {div:e} exceeds {DIV_TOL:e}")));
        }
        Ok(SaddleSolution { u, p, report })
    }
}

/// One-shot saddle solve; see [`SaddleSolver`].
pub fn solve_saddle(
    a: &SparseMatrix,
    d: &SparseMatrix,
    f: &[f64],
    fixed_u: &[usize],
    q_space: &FunctionSpace,
    nullspace: bool,
) -> Result<SaddleSolution> {
    SaddleSolver::new(d, fixed_u, nullspace)?.solve(a, f, q_space)
}
