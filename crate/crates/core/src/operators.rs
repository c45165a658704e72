//! Matrices and load vectors of the discretization.
//!
//! Conventions in 2D: the curl of a scalar is `(∂y, −∂x)`, `ω×u` is
//! `ω(−u_y, u_x)` and gravity is `e_g = (0, −1)`, so `∇φ×e_g = −∂xφ`.
//! All volume terms use one rule of degree `2N+2`, boundary terms `N+2`,
//! which keeps `P = Dᵀ` and the skew-symmetries exact.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::femspace::{CellTabulation, Family, Field, FunctionSpace};
use crate::mesh::{BoundaryTag, Mesh, LOCAL_EDGES};
use crate::quadrature::{interval_rule, quadrature_rule, QuadratureRule, MAX_DEGREE};
use crate::sparse::SparseMatrix;

pub const E_G: [f64; 2] = [0.0, -1.0];

/// Element degree `N` of the complex a space belongs to.
fn complex_degree(space: &FunctionSpace) -> usize {
    match space.family() {
        Family::DG => space.degree() + 1,
        _ => space.degree(),
    }
}

pub fn volume_rule(space: &FunctionSpace) -> QuadratureRule {
    quadrature_rule((2 * complex_degree(space) + 2).min(MAX_DEGREE)).expect("supported degree")
}

pub fn boundary_rule(space: &FunctionSpace) -> (Vec<f64>, Vec<f64>) {
    interval_rule(complex_degree(space) + 2)
}

fn same_mesh(a: &FunctionSpace, b: &FunctionSpace) -> Result<()> {
    if Arc::ptr_eq(a.mesh(), b.mesh()) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!(
            "{}_{} and {}_{} live on different meshes",
            a.family(),
            a.degree(),
            b.family(),
            b.degree()
        )))
    }
}

fn expect_family(space: &FunctionSpace, family: Family, what: &str) -> Result<()> {
    if space.family() == family {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!(
            "{what} must be a {family} space, got {}_{}",
            space.family(),
            space.degree()
        )))
    }
}

fn pattern(rows: &FunctionSpace, cols: &FunctionSpace) -> SparseMatrix {
    let mesh = rows.mesh();
    SparseMatrix::from_cell_pattern(
        rows.dim(),
        cols.dim(),
        (0..mesh.num_cells()).map(|c| (rows.cell_dofs(c), cols.cell_dofs(c))),
    )
}

/// Loop over cells with the volume rule: `f(cell, tab, point, weight·det)`.
fn for_each_point(
    space: &FunctionSpace,
    rule: &QuadratureRule,
    mut f: impl FnMut(usize, &CellTabulation, usize, f64),
) {
    let mesh = space.mesh();
    for c in 0..mesh.num_cells() {
        let tab = space.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &w) in rule.weights.iter().enumerate() {
            f(c, &tab, p, w * det);
        }
    }
}

fn field_value(field: &Field, cell: usize, tab: &CellTabulation, p: usize) -> f64 {
    let dofs = field.space().cell_dofs(cell);
    dofs.iter().enumerate().map(|(l, &d)| field.coeffs()[d] * tab.value(p, l)).sum()
}

fn field_grad(field: &Field, cell: usize, tab: &CellTabulation, p: usize) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (l, &d) in field.space().cell_dofs(cell).iter().enumerate() {
        let b = tab.grad(p, l);
        g[0] += field.coeffs()[d] * b[0];
        g[1] += field.coeffs()[d] * b[1];
    }
    g
}

fn field_vector(field: &Field, cell: usize, tab: &CellTabulation, p: usize) -> ([f64; 2], f64) {
    let mut v = [0.0; 2];
    let mut div = 0.0;
    for (l, &d) in field.space().cell_dofs(cell).iter().enumerate() {
        let c = field.coeffs()[d];
        let b = tab.vec_value(p, l);
        v[0] += c * b[0];
        v[1] += c * b[1];
        div += c * tab.div(p, l);
    }
    (v, div)
}

/// `⟨φ_j, φ_i⟩` for any family.
pub fn assemble_mass(space: &FunctionSpace) -> SparseMatrix {
    let rule = volume_rule(space);
    let mut m = pattern(space, space);
    let vector = space.family().is_vector();
    for_each_point(space, &rule, |c, tab, p, w| {
        let dofs = space.cell_dofs(c);
        for (i, &di) in dofs.iter().enumerate() {
            for (j, &dj) in dofs.iter().enumerate() {
                let v = if vector {
                    let (a, b) = (tab.vec_value(p, i), tab.vec_value(p, j));
                    a[0] * b[0] + a[1] * b[1]
                } else {
                    tab.value(p, i) * tab.value(p, j)
                };
                m.add(di, dj, w * v);
            }
        }
    });
    m
}

/// `D_ij = ⟨∇·u_j, p_i⟩` and `P = Dᵀ`.
pub fn assemble_div(u: &FunctionSpace, q: &FunctionSpace) -> Result<(SparseMatrix, SparseMatrix)> {
    expect_family(u, Family::RT, "velocity space")?;
    expect_family(q, Family::DG, "pressure space")?;
    same_mesh(u, q)?;
    if q.degree() + 1 != u.degree() {
        return Err(Error::SpaceMismatch(format!(
            "DG_{} is not the divergence space of RT_{}",
            q.degree(),
            u.degree()
        )));
    }
    let rule = volume_rule(u);
    let mut d = pattern(q, u);
    let mesh = u.mesh();
    for c in 0..mesh.num_cells() {
        let tu = u.tabulate_unchecked(c, &rule.points);
        let tq = q.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &w) in rule.weights.iter().enumerate() {
            for (i, &di) in q.cell_dofs(c).iter().enumerate() {
                for (j, &dj) in u.cell_dofs(c).iter().enumerate() {
                    d.add(di, dj, w * det * tu.div(p, j) * tq.value(p, i));
                }
            }
        }
    }
    let pt = d.transpose();
    Ok((d, pt))
}

/// `L_ij = ⟨∇×w_j, ∇×w_i⟩`, equal to the stiffness matrix.
pub fn assemble_curlcurl(w: &FunctionSpace) -> Result<SparseMatrix> {
    expect_family(w, Family::CG, "vorticity space")?;
    let rule = volume_rule(w);
    let mut l = pattern(w, w);
    for_each_point(w, &rule, |c, tab, p, wt| {
        let dofs = w.cell_dofs(c);
        for (i, &di) in dofs.iter().enumerate() {
            let a = tab.curl(p, i);
            for (j, &dj) in dofs.iter().enumerate() {
                let b = tab.curl(p, j);
                l.add(di, dj, wt * (a[0] * b[0] + a[1] * b[1]));
            }
        }
    });
    Ok(l)
}

/// `C_ij = ⟨∇×w_j, u_i⟩`, so that `M⁻¹C` maps CG coefficients to their
/// exact curl in RT, `Cω = l(ω)` and `Cᵀu` is the weak-curl right-hand side.
pub fn assemble_curl_coupling(w: &FunctionSpace, u: &FunctionSpace) -> Result<SparseMatrix> {
    expect_family(w, Family::CG, "vorticity space")?;
    expect_family(u, Family::RT, "velocity space")?;
    same_mesh(w, u)?;
    let rule = volume_rule(u);
    let mut m = pattern(u, w);
    let mesh = u.mesh();
    for c in 0..mesh.num_cells() {
        let tw = w.tabulate_unchecked(c, &rule.points);
        let tu = u.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &wt) in rule.weights.iter().enumerate() {
            for (i, &di) in u.cell_dofs(c).iter().enumerate() {
                let ui = tu.vec_value(p, i);
                for (j, &dj) in w.cell_dofs(c).iter().enumerate() {
                    let k = tw.curl(p, j);
                    m.add(di, dj, wt * det * (k[0] * ui[0] + k[1] * ui[1]));
                }
            }
        }
    }
    Ok(m)
}

/// `R_ij = ⟨ω×u_j, u_i⟩` and `l_i = ⟨∇×ω, u_i⟩`.
pub fn assemble_rotation(omega: &Field, u: &FunctionSpace) -> Result<(SparseMatrix, Vec<f64>)> {
    let w = omega.space();
    expect_family(w, Family::CG, "vorticity field")?;
    expect_family(u, Family::RT, "velocity space")?;
    same_mesh(w, u)?;
    let rule = volume_rule(u);
    let mut r = pattern(u, u);
    let mut l = vec![0.0; u.dim()];
    let mesh = u.mesh();
    for c in 0..mesh.num_cells() {
        let tw = w.tabulate_unchecked(c, &rule.points);
        let tu = u.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        let dofs = u.cell_dofs(c);
        let n = dofs.len();
        let mut local = vec![0.0; n * n];
        for (p, &wt) in rule.weights.iter().enumerate() {
            let om = field_value(omega, c, &tw, p);
            let g = field_grad(omega, c, &tw, p);
            let curl = [g[1], -g[0]];
            for (i, &di) in dofs.iter().enumerate() {
                let ui = tu.vec_value(p, i);
                l[di] += wt * det * (curl[0] * ui[0] + curl[1] * ui[1]);
                for j in 0..n {
                    let uj = tu.vec_value(p, j);
                    local[i * n + j] += wt * det * om * (uj[0] * ui[1] - uj[1] * ui[0]);
                }
            }
        }
        r.add_local(dofs, dofs, &local);
    }
    Ok((r, l))
}

/// `W_ij = ⟨w_j, ∇·(a w_i)⟩` with advecting field `a = u + s e_g`.
pub fn assemble_transport(u: &Field, w: &FunctionSpace, settling: f64) -> Result<SparseMatrix> {
    let us = u.space();
    expect_family(us, Family::RT, "velocity field")?;
    expect_family(w, Family::CG, "transported space")?;
    same_mesh(us, w)?;
    let rule = volume_rule(w);
    let mut m = pattern(w, w);
    let mesh = w.mesh();
    for c in 0..mesh.num_cells() {
        let tu = us.tabulate_unchecked(c, &rule.points);
        let tw = w.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        let dofs = w.cell_dofs(c);
        let n = dofs.len();
        let mut local = vec![0.0; n * n];
        for (p, &wt) in rule.weights.iter().enumerate() {
            let (v, div) = field_vector(u, c, &tu, p);
            let a = [v[0] + settling * E_G[0], v[1] + settling * E_G[1]];
            for i in 0..n {
                let gi = tw.grad(p, i);
                let div_awi = tw.value(p, i) * div + a[0] * gi[0] + a[1] * gi[1];
                for j in 0..n {
                    local[i * n + j] += wt * det * tw.value(p, j) * div_awi;
                }
            }
        }
        m.add_local(dofs, dofs, &local);
    }
    Ok(m)
}

pub fn assemble_vorticity_convection(u: &Field, w: &FunctionSpace) -> Result<SparseMatrix> {
    assemble_transport(u, w, 0.0)
}

/// Skew convection operator `½(Wᵀ − W)`: row `i` is
/// `½⟨a·∇w_j, w_i⟩ − ½⟨w_j, a·∇w_i⟩`.
pub fn convection_operator(w: &SparseMatrix) -> SparseMatrix {
    SparseMatrix::lin_comb(&[(0.5, &w.transpose()), (-0.5, w)])
}

/// Settling boundary matrix `c·u_s∫_{Γ1} ζφ + ½u_s∫_{Γ3} ζφ`, with `c = +½`
/// (mass-consistent) or `c = −½` (`paper_literal`).
pub fn assemble_settling_boundary(w: &FunctionSpace, settling: f64, paper_literal: bool) -> Result<SparseMatrix> {
    expect_family(w, Family::CG, "particle space")?;
    let mesh = w.mesh();
    require_channel(mesh)?;
    let top = if paper_literal { -0.5 } else { 0.5 };
    let mut b = pattern(w, w);
    for (tag, coef) in [(BoundaryTag::Top, top), (BoundaryTag::Bottom, 0.5)] {
        for_each_boundary_point(w, tag, |c, tab, p, ds, _| {
            let dofs = w.cell_dofs(c);
            for (i, &di) in dofs.iter().enumerate() {
                for (j, &dj) in dofs.iter().enumerate() {
                    b.add(di, dj, coef * settling * ds * tab.value(p, i) * tab.value(p, j));
                }
            }
        });
    }
    Ok(b)
}

/// Full particle convection operator `½(W_pᵀ − W_p) + B` with
/// `u_p = u + u_s e_g`.
pub fn assemble_particle_convection(
    u: &Field,
    w: &FunctionSpace,
    settling: f64,
    paper_literal: bool,
) -> Result<SparseMatrix> {
    if !(settling >= 0.0) {
        return Err(Error::param("settling_velocity", format!("must be non-negative, got {settling}")));
    }
    let wp = assemble_transport(u, w, settling)?;
    let b = assemble_settling_boundary(w, settling, paper_literal)?;
    let skew = convection_operator(&wp);
    Ok(SparseMatrix::lin_comb(&[(1.0, &skew), (1.0, &b)]))
}

/// `b_i = ⟨φ e_g, u_i⟩`.
pub fn assemble_buoyancy(phi: &Field, u: &FunctionSpace) -> Result<Vec<f64>> {
    let ws = phi.space();
    expect_family(u, Family::RT, "velocity space")?;
    same_mesh(ws, u)?;
    let rule = volume_rule(u);
    let mut b = vec![0.0; u.dim()];
    let mesh = u.mesh();
    for c in 0..mesh.num_cells() {
        let tp = ws.tabulate_unchecked(c, &rule.points);
        let tu = u.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &wt) in rule.weights.iter().enumerate() {
            let ph = field_value(phi, c, &tp, p);
            for (i, &di) in u.cell_dofs(c).iter().enumerate() {
                let v = tu.vec_value(p, i);
                b[di] += wt * det * ph * (E_G[0] * v[0] + E_G[1] * v[1]);
            }
        }
    }
    Ok(b)
}

/// `c_i = ⟨∇φ×e_g, ξ_i⟩` with `∇φ×e_g = φ_x e_gy − φ_y e_gx`.
pub fn assemble_baroclinic(phi: &Field, w: &FunctionSpace) -> Result<Vec<f64>> {
    expect_family(phi.space(), Family::CG, "particle field")?;
    expect_family(w, Family::CG, "vorticity space")?;
    same_mesh(phi.space(), w)?;
    let rule = volume_rule(w);
    let mut out = vec![0.0; w.dim()];
    let mesh = w.mesh();
    for c in 0..mesh.num_cells() {
        let tp = phi.space().tabulate_unchecked(c, &rule.points);
        let tw = w.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &wt) in rule.weights.iter().enumerate() {
            let g = field_grad(phi, c, &tp, p);
            let cross = g[0] * E_G[1] - g[1] * E_G[0];
            for (i, &di) in w.cell_dofs(c).iter().enumerate() {
                out[di] += wt * det * cross * tw.value(p, i);
            }
        }
    }
    Ok(out)
}

/// `r_i = ⟨u, ∇×ξ_i⟩`.
pub fn assemble_curl_h_rhs(u: &Field, w: &FunctionSpace) -> Result<Vec<f64>> {
    expect_family(u.space(), Family::RT, "velocity field")?;
    expect_family(w, Family::CG, "vorticity space")?;
    same_mesh(u.space(), w)?;
    let rule = volume_rule(w);
    let mut out = vec![0.0; w.dim()];
    let mesh = w.mesh();
    for c in 0..mesh.num_cells() {
        let tu = u.space().tabulate_unchecked(c, &rule.points);
        let tw = w.tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &wt) in rule.weights.iter().enumerate() {
            let (v, _) = field_vector(u, c, &tu, p);
            for (i, &di) in w.cell_dofs(c).iter().enumerate() {
                let k = tw.curl(p, i);
                out[di] += wt * det * (v[0] * k[0] + v[1] * k[1]);
            }
        }
    }
    Ok(out)
}

/// `g_i = ∫_{Γ1∪Γ3} ξ_i ∇ω̃·n`, one-sided from the boundary cell.
pub fn assemble_vorticity_neumann(omega_t: &Field, w: &FunctionSpace) -> Result<Vec<f64>> {
    let ws = omega_t.space();
    expect_family(ws, Family::CG, "vorticity field")?;
    same_mesh(ws, w)?;
    require_channel(w.mesh())?;
    let mut out = vec![0.0; w.dim()];
    for tag in [BoundaryTag::Top, BoundaryTag::Bottom] {
        let n = tag.outward_normal();
        for_each_boundary_point(w, tag, |c, tab, p, ds, _| {
            let g = field_grad(omega_t, c, tab, p);
            let flux = g[0] * n[0] + g[1] * n[1];
            for (i, &di) in w.cell_dofs(c).iter().enumerate() {
                out[di] += ds * flux * tab.value(p, i);
            }
        });
    }
    Ok(out)
}

fn require_channel(mesh: &Mesh) -> Result<()> {
    if mesh.channel().is_some() {
        Ok(())
    } else {
        Err(Error::SpaceMismatch("boundary terms need a tagged channel mesh".into()))
    }
}

/// Loop over quadrature points of edges tagged `tag`:
/// `f(cell, tab, point, weight·length, physical point)`.
pub fn for_each_boundary_point(
    space: &FunctionSpace,
    tag: BoundaryTag,
    mut f: impl FnMut(usize, &CellTabulation, usize, f64, [f64; 2]),
) {
    let mesh = space.mesh();
    let (ts, ws) = boundary_rule(space);
    let refv = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    for e in mesh.boundary_edges(tag) {
        let (c, _) = mesh.edge_cells(e);
        let i = mesh.local_edge_index(c, e).expect("incident cell");
        let [j, k] = LOCAL_EDGES[i];
        let pts: Vec<[f64; 2]> = ts
            .iter()
            .map(|&t| {
                [
                    refv[j][0] + t * (refv[k][0] - refv[j][0]),
                    refv[j][1] + t * (refv[k][1] - refv[j][1]),
                ]
            })
            .collect();
        let tab = space.tabulate_unchecked(c, &pts);
        let len = mesh.edge_length(e);
        let geo = mesh.geometry(c);
        for (p, &w) in ws.iter().enumerate() {
            f(c, &tab, p, w * len, geo.map(pts[p]));
        }
    }
}

/// Time-independent matrices shared by all steps.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// RT mass.
    pub m: SparseMatrix,
    /// CG mass.
    pub n: SparseMatrix,
    /// Curl–curl (stiffness) on CG.
    pub l: SparseMatrix,
    pub d: SparseMatrix,
    pub p: SparseMatrix,
    /// Curl coupling `⟨∇×w_j, u_i⟩`.
    pub curl: SparseMatrix,
}

impl OperatorSet {
    pub fn assemble(w: &FunctionSpace, u: &FunctionSpace, q: &FunctionSpace) -> Result<Self> {
        same_mesh(w, u)?;
        expect_family(w, Family::CG, "vorticity space")?;
        let (d, p) = assemble_div(u, q)?;
        Ok(Self {
            m: assemble_mass(u),
            n: assemble_mass(w),
            l: assemble_curlcurl(w)?,
            d,
            p,
            curl: assemble_curl_coupling(w, u)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femspace::{make_space, project_scalar, project_vector};
    use crate::mesh::{build_channel_mesh, ChannelGeometry, Pattern};

    fn unit_square(n: usize, pattern: Pattern) -> Arc<Mesh> {
        let g = ChannelGeometry::new(1.0, 1.0, 0.5).unwrap();
        Arc::new(build_channel_mesh(g, n, n, pattern).unwrap())
    }

    #[test]
    fn dg0_mass_on_two_cells() {
        let m = unit_square(1, Pattern::Left);
        let q = make_space(&m, Family::DG, 0).unwrap();
        let mass = assemble_mass(&q);
        let d = mass.to_dense();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((d[i][j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn curlcurl_of_x_is_area() {
        let m = unit_square(1, Pattern::Left);
        let w = make_space(&m, Family::CG, 1).unwrap();
        let l = assemble_curlcurl(&w).unwrap();
        let x: Vec<f64> = m.vertices().iter().map(|v| v[0]).collect();
        assert!((l.quad_form(&x, &x) - 1.0).abs() < 1e-14);
        assert!(l.mul_vec(&vec![1.0; w.dim()]).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn baroclinic_of_x_pairs_to_minus_one() {
        let m = unit_square(2, Pattern::Crisscross);
        let w = make_space(&m, Family::CG, 2).unwrap();
        let phi = project_scalar(&w, |p| p[0]).unwrap();
        let c = assemble_baroclinic(&phi, &w).unwrap();
        let total: f64 = c.iter().sum();
        assert!((total + 1.0).abs() < 1e-12);
        let phi_y = project_scalar(&w, |p| p[1]).unwrap();
        assert!(assemble_baroclinic(&phi_y, &w).unwrap().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn neumann_of_y_is_wall_length() {
        let g = ChannelGeometry::new(3.0, 1.0, 1.0).unwrap();
        let m = Arc::new(build_channel_mesh(g, 6, 2, Pattern::Left).unwrap());
        let w = make_space(&m, Family::CG, 1).unwrap();
        let om = project_scalar(&w, |p| p[1]).unwrap();
        let gvec = assemble_vorticity_neumann(&om, &w).unwrap();
        let top: f64 = (0..w.dim()).filter(|&i| m.vertices()[i][1] == 1.0).map(|i| gvec[i]).sum();
        let bottom: f64 = (0..w.dim()).filter(|&i| m.vertices()[i][1] == 0.0).map(|i| gvec[i]).sum();
        assert!((top - 3.0).abs() < 1e-12, "{top}");
        assert!((bottom + 3.0).abs() < 1e-12, "{bottom}");
    }

    #[test]
    fn buoyancy_of_unit_phi_against_down_field() {
        let m = unit_square(1, Pattern::Left);
        let w = make_space(&m, Family::CG, 1).unwrap();
        let u = make_space(&m, Family::RT, 1).unwrap();
        let phi = project_scalar(&w, |_| 1.0).unwrap();
        let b = assemble_buoyancy(&phi, &u).unwrap();
        let v = project_vector(&u, |_| [0.0, -1.0]).unwrap();
        let pair: f64 = b.iter().zip(v.coeffs()).map(|(a, b)| a * b).sum();
        assert!((pair - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_of_position_field() {
        let m = unit_square(1, Pattern::Right);
        let u = make_space(&m, Family::RT, 1).unwrap();
        let q = make_space(&m, Family::DG, 0).unwrap();
        let (d, p) = assemble_div(&u, &q).unwrap();
        assert_eq!(p, d.transpose());
        let f = project_vector(&u, |x| x).unwrap();
        let du = d.mul_vec(f.coeffs());
        assert!((du.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }
}
