//! Conforming spaces CG_N ⊂ H¹, RT_N ⊂ H(div) and DG_k ⊂ L² on triangles.
//!
//! Degrees follow the FEniCS convention: RT_1 is the lowest-order
//! Raviart–Thomas space, whose divergences lie in DG_0. CG and DG bases are
//! mapped by pullback, RT bases by the contravariant Piola transform.
//!
//! RT edge degrees of freedom are normal moments against Legendre
//! polynomials in the edge parameter running from the lower to the higher
//! global vertex; the normal is that direction rotated clockwise.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{Error, Result};
use crate::linsolve::{lu_solve, LinearSystem};
use crate::mesh::{BoundaryTag, Mesh, LOCAL_EDGES};
use crate::operators::assemble_mass;
use crate::quadrature::{interval_rule, quadrature_rule, MAX_DEGREE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    CG,
    RT,
    DG,
}

impl Family {
    pub fn is_vector(self) -> bool {
        self == Family::RT
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::CG => "CG",
            Family::RT => "RT",
            Family::DG => "DG",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CG" => Ok(Family::CG),
            "RT" => Ok(Family::RT),
            "DG" => Ok(Family::DG),
            _ => Err(Error::Space(format!("unknown element family '{s}'"))),
        }
    }
}

/// Global dimension from mesh counts; valid for any degree.
pub fn dof_count(family: Family, degree: usize, v: usize, e: usize, c: usize) -> Result<usize> {
    let n = degree;
    match family {
        Family::CG if n >= 1 => Ok(v + (n - 1) * e + (n - 1) * n.saturating_sub(2) / 2 * c),
        Family::RT if n >= 1 => Ok(n * e + n * (n - 1) * c),
        Family::DG => Ok((n + 1) * (n + 2) / 2 * c),
        _ => Err(Error::Space(format!("{family}_{n} is not a valid space"))),
    }
}

/// Outward-normal sign of local edge `i` relative to `rot_cw(v_k − v_j)`.
const EDGE_EPS: [f64; 3] = [1.0, -1.0, 1.0];
const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

fn rot_cw(a: [f64; 2]) -> [f64; 2] {
    [a[1], -a[0]]
}

fn legendre01(m: usize, t: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0 * t - 1.0,
        _ => unreachable!("edge moments above degree 1 are not tabulated"),
    }
}

#[derive(Debug, Clone)]
enum RefElement {
    Cg1,
    Cg2,
    Dg0,
    Dg1,
    /// Basis coefficients (one row per basis function) over the primal set.
    Rt { degree: usize, coeffs: Vec<Vec<f64>> },
}

impl RefElement {
    fn new(family: Family, degree: usize) -> Result<Self> {
        match (family, degree) {
            (Family::CG, 1) => Ok(RefElement::Cg1),
            (Family::CG, 2) => Ok(RefElement::Cg2),
            (Family::DG, 0) => Ok(RefElement::Dg0),
            (Family::DG, 1) => Ok(RefElement::Dg1),
            (Family::RT, 1 | 2) => Ok(RefElement::Rt {
                degree,
                coeffs: rt_dual_basis(degree),
            }),
            (Family::CG, 0) | (Family::RT, 0) => {
                Err(Error::Space(format!("{family}_0 is not a valid space")))
            }
            (family, degree) => Err(Error::UnsupportedElement {
                family: match family {
                    Family::CG => "CG",
                    Family::RT => "RT",
                    Family::DG => "DG",
                },
                degree,
            }),
        }
    }

    fn ndofs(&self) -> usize {
        match self {
            RefElement::Cg1 | RefElement::Dg1 => 3,
            RefElement::Cg2 => 6,
            RefElement::Dg0 => 1,
            RefElement::Rt { degree, .. } => degree * (degree + 2),
        }
    }

    /// Scalar values and reference gradients.
    fn scalar(&self, xh: [f64; 2], vals: &mut Vec<f64>, grads: &mut Vec<[f64; 2]>) {
        let l = [1.0 - xh[0] - xh[1], xh[0], xh[1]];
        let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        match self {
            RefElement::Dg0 => {
                vals.push(1.0);
                grads.push([0.0, 0.0]);
            }
            RefElement::Cg1 | RefElement::Dg1 => {
                vals.extend_from_slice(&l);
                grads.extend_from_slice(&dl);
            }
            RefElement::Cg2 => {
                for i in 0..3 {
                    vals.push(l[i] * (2.0 * l[i] - 1.0));
                    let s = 4.0 * l[i] - 1.0;
                    grads.push([s * dl[i][0], s * dl[i][1]]);
                }
                for [j, k] in LOCAL_EDGES {
                    vals.push(4.0 * l[j] * l[k]);
                    grads.push([
                        4.0 * (l[k] * dl[j][0] + l[j] * dl[k][0]),
                        4.0 * (l[k] * dl[j][1] + l[j] * dl[k][1]),
                    ]);
                }
            }
            RefElement::Rt { .. } => unreachable!("vector element"),
        }
    }

    /// Reference vector values and reference divergences.
    fn vector(&self, xh: [f64; 2], vals: &mut Vec<[f64; 2]>, divs: &mut Vec<f64>) {
        let RefElement::Rt { degree, coeffs } = self else {
            unreachable!("scalar element")
        };
        let (pv, pd) = rt_primal(*degree, xh);
        for row in coeffs {
            let mut v = [0.0; 2];
            let mut d = 0.0;
            for (a, &c) in row.iter().enumerate() {
                v[0] += c * pv[a][0];
                v[1] += c * pv[a][1];
                d += c * pd[a];
            }
            vals.push(v);
            divs.push(d);
        }
    }
}

/// Primal polynomial set spanning reference RT_N, with divergences.
fn rt_primal(degree: usize, p: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let [x, y] = p;
    match degree {
        1 => (vec![[1.0, 0.0], [0.0, 1.0], [x, y]], vec![0.0, 0.0, 2.0]),
        2 => (
            vec![
                [1.0, 0.0],
                [x, 0.0],
                [y, 0.0],
                [0.0, 1.0],
                [0.0, x],
                [0.0, y],
                [x * x, x * y],
                [x * y, y * y],
            ],
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 3.0 * x, 3.0 * y],
        ),
        _ => unreachable!("RT tabulation limited to degrees 1 and 2"),
    }
}

/// Invert the degree-of-freedom matrix so that basis `b` has unit moment `b`.
fn rt_dual_basis(degree: usize) -> Vec<Vec<f64>> {
    let n = degree * (degree + 2);
    let mut dofs = Mat::<f64>::zeros(n, n);
    let (ts, ws) = interval_rule(2 * degree + 1);
    for (i, [j, k]) in LOCAL_EDGES.iter().copied().enumerate() {
        let (vj, vk) = (REF_VERTICES[j], REF_VERTICES[k]);
        let tang = [vk[0] - vj[0], vk[1] - vj[1]];
        let r = rot_cw(tang);
        let nrm = [EDGE_EPS[i] * r[0], EDGE_EPS[i] * r[1]];
        for m in 0..degree {
            let row = i * degree + m;
            for (&t, &w) in ts.iter().zip(&ws) {
                let x = [vj[0] + t * tang[0], vj[1] + t * tang[1]];
                let (pv, _) = rt_primal(degree, x);
                for (a, v) in pv.iter().enumerate() {
                    dofs[(row, a)] += w * (v[0] * nrm[0] + v[1] * nrm[1]) * legendre01(m, t);
                }
            }
        }
    }
    if degree == 2 {
        let q = quadrature_rule(4).expect("supported degree");
        for (p, &w) in q.points.iter().zip(&q.weights) {
            let (pv, _) = rt_primal(degree, *p);
            for (a, v) in pv.iter().enumerate() {
                dofs[(6, a)] += w * v[0];
                dofs[(7, a)] += w * v[1];
            }
        }
    }
    let inv = dofs.partial_piv_lu().inverse();
    (0..n).map(|b| (0..n).map(|a| inv[(a, b)]).collect()).collect()
}

#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    family: Family,
    degree: usize,
    dim: usize,
    ndofs: usize,
    dofs: Vec<usize>,
    signs: Vec<f64>,
    element: RefElement,
    constrained: Vec<usize>,
    integrals: OnceLock<Vec<f64>>,
    ref_cache: Mutex<Vec<(Vec<[f64; 2]>, Arc<ReferenceTabulation>)>>,
}

#[derive(Debug)]
struct ReferenceTabulation {
    scalar: Vec<f64>,
    vector: Vec<[f64; 2]>,
}

impl Clone for FunctionSpace {
    fn clone(&self) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            family: self.family,
            degree: self.degree,
            dim: self.dim,
            ndofs: self.ndofs,
            dofs: self.dofs.clone(),
            signs: self.signs.clone(),
            element: self.element.clone(),
            constrained: self.constrained.clone(),
            integrals: OnceLock::new(),
            ref_cache: Mutex::new(Vec::new()),
        }
    }
}

/// Build `family_degree` over `mesh`. DG degrees start at 0, CG and RT at 1.
pub fn make_space(mesh: &Arc<Mesh>, family: Family, degree: usize) -> Result<Arc<FunctionSpace>> {
    let element = RefElement::new(family, degree)?;
    let (nv, ne, nc) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_cells());
    let dim = dof_count(family, degree, nv, ne, nc)?;
    let ndofs = element.ndofs();
    let mut dofs = Vec::with_capacity(nc * ndofs);
    let mut signs = Vec::with_capacity(nc * ndofs);
    for c in 0..nc {
        let verts = mesh.cells()[c];
        let edges = mesh.cell_edges(c);
        match family {
            Family::CG => {
                dofs.extend_from_slice(&verts);
                if degree == 2 {
                    dofs.extend(edges.iter().map(|&e| nv + e));
                }
                signs.extend(std::iter::repeat(1.0).take(ndofs));
            }
            Family::DG => {
                dofs.extend((0..ndofs).map(|l| c * ndofs + l));
                signs.extend(std::iter::repeat(1.0).take(ndofs));
            }
            Family::RT => {
                for (i, &e) in edges.iter().enumerate() {
                    let dir = mesh.edge_direction(c, i);
                    for m in 0..degree {
                        dofs.push(e * degree + m);
                        signs.push(EDGE_EPS[i] * dir.powi(m as i32 + 1));
                    }
                }
                let ni = degree * (degree - 1);
                for l in 0..ni {
                    dofs.push(ne * degree + c * ni + l);
                    signs.push(1.0);
                }
            }
        }
    }
    debug_assert!(dofs.iter().all(|&d| d < dim));
    Ok(Arc::new(FunctionSpace {
        mesh: Arc::clone(mesh),
        family,
        degree,
        dim,
        ndofs,
        dofs,
        signs,
        element,
        constrained: Vec::new(),
        integrals: OnceLock::new(),
        ref_cache: Mutex::new(Vec::new()),
    }))
}

impl FunctionSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.ndofs
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.dofs[cell * self.ndofs..(cell + 1) * self.ndofs]
    }

    pub fn cell_signs(&self, cell: usize) -> &[f64] {
        &self.signs[cell * self.ndofs..(cell + 1) * self.ndofs]
    }

    pub fn constrained_dofs(&self) -> &[usize] {
        &self.constrained
    }

    /// Copy of this space with the given DOFs constrained.
    pub fn with_constraints(&self, mut dofs: Vec<usize>) -> Result<Arc<FunctionSpace>> {
        dofs.sort_unstable();
        dofs.dedup();
        if dofs.last().is_some_and(|&d| d >= self.dim) {
            return Err(Error::Space("constrained DOF out of range".into()));
        }
        let mut s = self.clone();
        s.constrained = dofs;
        Ok(Arc::new(s))
    }

    /// DOFs whose support touches the walls in `tags` (none for DG).
    pub fn boundary_dofs(&self, tags: &[BoundaryTag]) -> Vec<usize> {
        let mesh = &self.mesh;
        let mut out = Vec::new();
        for e in 0..mesh.num_edges() {
            let Some(tag) = mesh.edge_tag(e) else { continue };
            if !tags.contains(&tag) {
                continue;
            }
            match self.family {
                Family::CG => {
                    out.extend_from_slice(&mesh.edges()[e]);
                    if self.degree == 2 {
                        out.push(mesh.num_vertices() + e);
                    }
                }
                Family::RT => out.extend((0..self.degree).map(|m| e * self.degree + m)),
                Family::DG => {}
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Physical basis data of `cell` at reference points.
    pub fn tabulate(&self, cell: usize, points: &[[f64; 2]]) -> Result<CellTabulation> {
        if cell >= self.mesh.num_cells() {
            return Err(Error::Space(format!("cell {cell} not in mesh")));
        }
        let tol = 1e-12;
        for p in points {
            if p[0] < -tol || p[1] < -tol || p[0] + p[1] > 1.0 + tol {
                return Err(Error::Space(format!(
                    "reference point ({}, {}) lies outside the reference triangle",
                    p[0], p[1]
                )));
            }
        }
        Ok(self.tabulate_unchecked(cell, points))
    }

    /// Reference-element values at `points`, cached per point set.
    fn reference_tabulation(&self, points: &[[f64; 2]]) -> Arc<ReferenceTabulation> {
        let mut cache = self.ref_cache.lock().expect("tabulation cache");
        if let Some((_, t)) = cache.iter().find(|(p, _)| p.as_slice() == points) {
            return Arc::clone(t);
        }
        let n = self.ndofs;
        let mut scalar = Vec::with_capacity(points.len() * n);
        let mut vector = Vec::with_capacity(points.len() * n);
        for &p in points {
            if self.family.is_vector() {
                self.element.vector(p, &mut vector, &mut scalar);
            } else {
                self.element.scalar(p, &mut scalar, &mut vector);
            }
        }
        let t = Arc::new(ReferenceTabulation { scalar, vector });
        if cache.len() >= 16 {
            cache.remove(0);
        }
        cache.push((points.to_vec(), Arc::clone(&t)));
        t
    }

    pub(crate) fn tabulate_unchecked(&self, cell: usize, points: &[[f64; 2]]) -> CellTabulation {
        let reference = self.reference_tabulation(points);
        let geo = self.mesh.geometry(cell);
        let signs = self.cell_signs(cell);
        let n = self.ndofs;
        let mut scalar = reference.scalar.clone();
        let mut vector = reference.vector.clone();
        if self.family.is_vector() {
            for (k, (v, d)) in vector.iter_mut().zip(scalar.iter_mut()).enumerate() {
                let s = signs[k % n];
                let pv = geo.piola(*v);
                *v = [s * pv[0], s * pv[1]];
                *d *= s / geo.det;
            }
        } else {
            for g in vector.iter_mut() {
                *g = geo.grad(*g);
            }
        }
        CellTabulation {
            npts: points.len(),
            ndofs: n,
            family: self.family,
            scalar,
            vector,
        }
    }

    /// `∫ φ_i` for scalar families (zero for RT).
    pub fn basis_integrals(&self) -> &[f64] {
        self.integrals.get_or_init(|| {
            let mut out = vec![0.0; self.dim];
            if self.family.is_vector() {
                return out;
            }
            let q = quadrature_rule(self.degree.max(1)).expect("supported degree");
            for c in 0..self.mesh.num_cells() {
                let tab = self.tabulate_unchecked(c, &q.points);
                let det = self.mesh.geometry(c).det;
                for (p, &w) in q.weights.iter().enumerate() {
                    for (l, &d) in self.cell_dofs(c).iter().enumerate() {
                        out[d] += w * det * tab.value(p, l);
                    }
                }
            }
            out
        })
    }
}

/// Basis data at `npts` points. Scalar families fill values and gradients;
/// RT fills vector values and divergences.
#[derive(Debug, Clone)]
pub struct CellTabulation {
    pub npts: usize,
    pub ndofs: usize,
    family: Family,
    scalar: Vec<f64>,
    vector: Vec<[f64; 2]>,
}

impl CellTabulation {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn value(&self, p: usize, i: usize) -> f64 {
        debug_assert!(!self.family.is_vector());
        self.scalar[p * self.ndofs + i]
    }

    pub fn grad(&self, p: usize, i: usize) -> [f64; 2] {
        debug_assert!(!self.family.is_vector());
        self.vector[p * self.ndofs + i]
    }

    /// Vector curl `(∂y, −∂x)` of a scalar basis function.
    pub fn curl(&self, p: usize, i: usize) -> [f64; 2] {
        let g = self.grad(p, i);
        [g[1], -g[0]]
    }

    pub fn vec_value(&self, p: usize, i: usize) -> [f64; 2] {
        debug_assert!(self.family.is_vector());
        self.vector[p * self.ndofs + i]
    }

    pub fn div(&self, p: usize, i: usize) -> f64 {
        debug_assert!(self.family.is_vector());
        self.scalar[p * self.ndofs + i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector([f64; 2]),
}

impl Value {
    pub fn scalar(self) -> f64 {
        match self {
            Value::Scalar(v) => v,
            Value::Vector(_) => panic!("vector value used as scalar"),
        }
    }

    pub fn vector(self) -> [f64; 2] {
        match self {
            Value::Vector(v) => v,
            Value::Scalar(_) => panic!("scalar value used as vector"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
}

impl Field {
    pub fn new(space: &Arc<FunctionSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::SpaceMismatch(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        Ok(Self {
            space: Arc::clone(space),
            coeffs,
        })
    }

    pub fn zeros(space: &Arc<FunctionSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.dim()],
        }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Value at reference point `xh` of `cell`.
    pub fn evaluate_in_cell(&self, cell: usize, xh: [f64; 2]) -> Value {
        let tab = self.space.tabulate_unchecked(cell, &[xh]);
        let dofs = self.space.cell_dofs(cell);
        if self.space.family().is_vector() {
            let mut v = [0.0; 2];
            for (l, &d) in dofs.iter().enumerate() {
                let b = tab.vec_value(0, l);
                v[0] += self.coeffs[d] * b[0];
                v[1] += self.coeffs[d] * b[1];
            }
            Value::Vector(v)
        } else {
            Value::Scalar(dofs.iter().enumerate().map(|(l, &d)| self.coeffs[d] * tab.value(0, l)).sum())
        }
    }

    /// Gradient of a scalar field at reference point `xh` of `cell`.
    pub fn gradient_in_cell(&self, cell: usize, xh: [f64; 2]) -> [f64; 2] {
        let tab = self.space.tabulate_unchecked(cell, &[xh]);
        let mut g = [0.0; 2];
        for (l, &d) in self.space.cell_dofs(cell).iter().enumerate() {
            let b = tab.grad(0, l);
            g[0] += self.coeffs[d] * b[0];
            g[1] += self.coeffs[d] * b[1];
        }
        g
    }
}

pub fn evaluate(field: &Field, x: [f64; 2]) -> Result<Value> {
    let (cell, xh) = field
        .space
        .mesh()
        .locate(x)
        .ok_or(Error::PointOutside(x[0], x[1]))?;
    Ok(field.evaluate_in_cell(cell, xh))
}

fn project_with(
    space: &Arc<FunctionSpace>,
    load: impl Fn(&CellTabulation, usize, usize, [f64; 2]) -> f64,
) -> Result<Field> {
    let q = quadrature_rule(MAX_DEGREE)?;
    let mesh = space.mesh();
    let mut rhs = vec![0.0; space.dim()];
    for c in 0..mesh.num_cells() {
        let geo = mesh.geometry(c);
        let tab = space.tabulate_unchecked(c, &q.points);
        for (p, (&xh, &w)) in q.points.iter().zip(&q.weights).enumerate() {
            let x = geo.map(xh);
            for (l, &d) in space.cell_dofs(c).iter().enumerate() {
                rhs[d] += w * geo.det * load(&tab, p, l, x);
            }
        }
    }
    let m = assemble_mass(space);
    let (coeffs, _) = lu_solve(LinearSystem::new(&m, &rhs))?;
    Field::new(space, coeffs)
}

/// L² projection of a scalar function into a CG or DG space.
pub fn project_scalar(space: &Arc<FunctionSpace>, f: impl Fn([f64; 2]) -> f64) -> Result<Field> {
    if space.family().is_vector() {
        return Err(Error::SpaceMismatch("scalar projection into an RT space".into()));
    }
    project_with(space, |tab, p, l, x| f(x) * tab.value(p, l))
}

/// L² projection of a vector function into an RT space.
pub fn project_vector(space: &Arc<FunctionSpace>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Field> {
    if !space.family().is_vector() {
        return Err(Error::SpaceMismatch("vector projection into a scalar space".into()));
    }
    project_with(space, |tab, p, l, x| {
        let v = f(x);
        let b = tab.vec_value(p, l);
        v[0] * b[0] + v[1] * b[1]
    })
}

/// `‖f_h − f‖_{L²}` computed with the highest available rule.
pub fn l2_error(field: &Field, f: impl Fn([f64; 2]) -> Value) -> f64 {
    let q = quadrature_rule(MAX_DEGREE).expect("supported degree");
    let mesh = field.space().mesh();
    let mut err = 0.0;
    for c in 0..mesh.num_cells() {
        let geo = mesh.geometry(c);
        for (&xh, &w) in q.points.iter().zip(&q.weights) {
            let d = match (field.evaluate_in_cell(c, xh), f(geo.map(xh))) {
                (Value::Scalar(a), Value::Scalar(b)) => (a - b).powi(2),
                (Value::Vector(a), Value::Vector(b)) => (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2),
                _ => panic!("l2_error: value kinds differ"),
            };
            err += w * geo.det * d;
        }
    }
    err.sqrt()
}
