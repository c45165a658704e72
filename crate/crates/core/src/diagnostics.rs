//! Energy budget and turbidity-current observables.
//!
//! Row `k` is produced after step `k` from the states before and after it.
//! With `K^{k+½} = ½uᵀMu`, `E_p^k = ⟨φ^k, y⟩` and the cumulative dissipations
//! `E_v = Σ Δt ε_v`, `E_s = Σ Δt ε_s`, the residual
//!
//! `E_res^k = K^{k+½} + E_p^k + E_v + E_s − K^{½} − E_p^0`
//!
//! telescopes to `(Δt/2)(⟨φ^k e_g, u^{k+½}⟩ − ⟨φ^0 e_g, u^{½}⟩)`.

use crate::error::{Error, Result};
use crate::femspace::Field;
use crate::mesh::BoundaryTag;
use crate::operators::{for_each_boundary_point, volume_rule, E_G};
use crate::quadrature::interval_rule;
use crate::sparse::{dot, norm_inf};
use crate::stepper::{midpoint, Simulation, SimulationState};

pub const CSV_COLUMNS: [&str; 17] = [
    "step",
    "t",
    "K",
    "Ep",
    "eps_v",
    "eps_s",
    "Ev",
    "Es",
    "E_res",
    "enstrophy",
    "total_vorticity",
    "m_p_ratio",
    "mdot_s",
    "x_f",
    "phi_min",
    "phi_max",
    "div_inf",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsConfig {
    pub front_threshold: f64,
    /// Column spacing for `x_f`; `None` selects `h_min`.
    pub front_spacing: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            front_threshold: 0.01,
            front_spacing: None,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.front_threshold > 0.0 && self.front_threshold < 1.0) {
            return Err(Error::param("diagnostics.front_threshold", "must lie in (0, 1)"));
        }
        if let Some(h) = self.front_spacing {
            if !(h > 0.0) {
                return Err(Error::param("diagnostics.front_spacing", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub k: f64,
    pub ep: f64,
    pub eps_v: f64,
    pub eps_s: f64,
    pub ev: f64,
    pub es: f64,
    pub e_res: f64,
    /// Residual with the time-averaged kinetic energy `½(K^{k+½} + K^{k−½})`.
    pub e_res_avg: f64,
    pub enstrophy: f64,
    pub total_vorticity: f64,
    pub m_p_ratio: f64,
    pub mdot_s: f64,
    pub x_f: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub div_inf: f64,
}

impl LedgerRow {
    pub fn values(&self) -> [f64; 16] {
        [
            self.t,
            self.k,
            self.ep,
            self.eps_v,
            self.eps_s,
            self.ev,
            self.es,
            self.e_res,
            self.enstrophy,
            self.total_vorticity,
            self.m_p_ratio,
            self.mdot_s,
            self.x_f,
            self.phi_min,
            self.phi_max,
            self.div_inf,
        ]
    }
}

/// Running accumulators of the energy budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger {
    pub ev: f64,
    pub es: f64,
    pub ep0: f64,
    pub k_half0: f64,
    /// `K⁰` of the initial velocity, for the averaged variant.
    pub k0: f64,
    /// `⟨φ⁰ e_g, u^{½}⟩`.
    pub b0: f64,
    pub m_p0: f64,
    pub config: DiagnosticsConfig,
}

impl EnergyLedger {
    pub fn start(sim: &Simulation, state0: &SimulationState, u0: &Field, config: DiagnosticsConfig) -> Self {
        Self {
            ev: 0.0,
            es: 0.0,
            ep0: potential_energy(&state0.phi),
            k_half0: kinetic_energy(sim, &state0.u_half),
            k0: kinetic_energy(sim, u0),
            b0: buoyancy_work(&state0.phi, &state0.u_half),
            m_p0: integral(&state0.phi),
            config,
        }
    }

    pub fn update(
        &mut self,
        sim: &Simulation,
        prev: &SimulationState,
        new: &SimulationState,
    ) -> Result<LedgerRow> {
        if new.k != prev.k + 1 {
            return Err(Error::SpaceMismatch(format!(
                "ledger update from step {} to step {}",
                prev.k, new.k
            )));
        }
        let dt = sim.dt();
        let nu = sim.physics.viscosity();
        let us = sim.physics.settling();
        let kappa = sim.physics.diffusivity();

        let l = sim.ops.curl.mul_vec(new.omega.coeffs());
        let ubar: Vec<f64> = new
            .u_half
            .coeffs()
            .iter()
            .zip(prev.u_half.coeffs())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let eps_v = nu * dot(&l, &ubar);
        let phi_mid = midpoint(&prev.phi, &new.phi)?;
        let eps_s = settling_dissipation(&phi_mid, us, kappa);
        self.ev += dt * eps_v;
        self.es += dt * eps_s;

        let k = kinetic_energy(sim, &new.u_half);
        let k_prev = kinetic_energy(sim, &prev.u_half);
        let ep = potential_energy(&new.phi);
        let e_res = k + ep + self.ev + self.es - self.k_half0 - self.ep0;
        let k_avg0 = 0.5 * (self.k_half0 + self.k0);
        let e_res_avg = 0.5 * (k + k_prev) + ep + self.ev + self.es - k_avg0 - self.ep0;

        let enstrophy = 0.5 * sim.ops.n.quad_form(new.omega.coeffs(), new.omega.coeffs());
        let total_vorticity = integral(&new.omega);
        let m_p_ratio = if self.m_p0 != 0.0 {
            integral(&new.phi) / self.m_p0
        } else {
            f64::NAN
        };
        let mdot_s = sedimentation_rate(&new.phi, us);
        let x_f = front_position(&new.phi, self.config.front_threshold, self.config.front_spacing);
        let phi = new.phi.coeffs();
        let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let div_inf = norm_inf(&sim.ops.d.mul_vec(new.u_half.coeffs()));
        Ok(LedgerRow {
            step: new.k,
            t: new.t,
            k,
            ep,
            eps_v,
            eps_s,
            ev: self.ev,
            es: self.es,
            e_res,
            e_res_avg,
            enstrophy,
            total_vorticity,
            m_p_ratio,
            mdot_s,
            x_f,
            phi_min,
            phi_max,
            div_inf,
        })
    }

    /// Closed form of `E_res` for the state after step `k`.
    pub fn predicted_residual(&self, sim: &Simulation, state: &SimulationState) -> f64 {
        0.5 * sim.dt() * (buoyancy_work(&state.phi, &state.u_half) - self.b0)
    }
}

pub fn kinetic_energy(sim: &Simulation, u: &Field) -> f64 {
    0.5 * sim.ops.m.quad_form(u.coeffs(), u.coeffs())
}

/// `∫ f_h` of a scalar field.
pub fn integral(field: &Field) -> f64 {
    dot(field.coeffs(), field.space().basis_integrals())
}

/// Integrate `g(x, f_h(x), ∇f_h(x))` over the domain with the volume rule.
fn integrate_with(field: &Field, g: impl Fn([f64; 2], f64, [f64; 2]) -> f64) -> f64 {
    let space = field.space();
    let mesh = space.mesh();
    let rule = volume_rule(space);
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let geo = mesh.geometry(c);
        let tab = space.tabulate_unchecked(c, &rule.points);
        let dofs = space.cell_dofs(c);
        for (p, (&xh, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let mut v = 0.0;
            let mut grad = [0.0; 2];
            for (l, &d) in dofs.iter().enumerate() {
                let a = field.coeffs()[d];
                v += a * tab.value(p, l);
                let gl = tab.grad(p, l);
                grad[0] += a * gl[0];
                grad[1] += a * gl[1];
            }
            total += w * geo.det * g(geo.map(xh), v, grad);
        }
    }
    total
}

/// `E_p = ⟨φ, y⟩`.
pub fn potential_energy(phi: &Field) -> f64 {
    integrate_with(phi, |x, v, _| v * x[1])
}

/// `⟨φ e_g, u⟩` for a CG field `φ` and an RT field `u`.
pub fn buoyancy_work(phi: &Field, u: &Field) -> f64 {
    let space = phi.space();
    let mesh = space.mesh();
    let rule = volume_rule(u.space());
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let tp = space.tabulate_unchecked(c, &rule.points);
        let tu = u.space().tabulate_unchecked(c, &rule.points);
        let det = mesh.geometry(c).det;
        for (p, &w) in rule.weights.iter().enumerate() {
            let ph: f64 = space
                .cell_dofs(c)
                .iter()
                .enumerate()
                .map(|(l, &d)| phi.coeffs()[d] * tp.value(p, l))
                .sum();
            let mut v = [0.0; 2];
            for (l, &d) in u.space().cell_dofs(c).iter().enumerate() {
                let b = tu.vec_value(p, l);
                v[0] += u.coeffs()[d] * b[0];
                v[1] += u.coeffs()[d] * b[1];
            }
            total += w * det * ph * (E_G[0] * v[0] + E_G[1] * v[1]);
        }
    }
    total
}

/// `ε_s = u_s⟨φ,1⟩ − κ⟨∇φ, e_g⟩`.
pub fn settling_dissipation(phi: &Field, settling: f64, kappa: f64) -> f64 {
    integrate_with(phi, |_, v, g| settling * v - kappa * (g[0] * E_G[0] + g[1] * E_G[1]))
}

/// Alternative settling dissipation
/// `−u_s⟨e_g, ∇φ⟩ − κ(⟨∇φ, ∇y⟩ − ∮ y ∇φ·n)`.
pub fn eps_s_ref1_variant(phi: &Field, settling: f64, kappa: f64) -> f64 {
    let volume = integrate_with(phi, |_, _, g| {
        -settling * (E_G[0] * g[0] + E_G[1] * g[1]) - kappa * g[1]
    });
    let mut boundary = 0.0;
    if phi.space().mesh().channel().is_some() {
        for tag in BoundaryTag::ALL {
            let n = tag.outward_normal();
            for_each_boundary_point(phi.space(), tag, |c, tab, p, ds, x| {
                let mut g = [0.0; 2];
                for (l, &d) in phi.space().cell_dofs(c).iter().enumerate() {
                    let gl = tab.grad(p, l);
                    g[0] += phi.coeffs()[d] * gl[0];
                    g[1] += phi.coeffs()[d] * gl[1];
                }
                boundary += ds * x[1] * (g[0] * n[0] + g[1] * n[1]);
            });
        }
    }
    volume + kappa * boundary
}

/// `∫_{Γ} φ` over the walls tagged `tag`.
pub fn boundary_integral(phi: &Field, tag: BoundaryTag) -> f64 {
    let mut total = 0.0;
    if phi.space().mesh().channel().is_none() {
        return 0.0;
    }
    for_each_boundary_point(phi.space(), tag, |c, tab, p, ds, _| {
        let v: f64 = phi
            .space()
            .cell_dofs(c)
            .iter()
            .enumerate()
            .map(|(l, &d)| phi.coeffs()[d] * tab.value(p, l))
            .sum();
        total += ds * v;
    });
    total
}

/// `ṁ_s = −u_s ∫_{Γ3} φ`.
pub fn sedimentation_rate(phi: &Field, settling: f64) -> f64 {
    -settling * boundary_integral(phi, BoundaryTag::Bottom)
}

/// `∫φ / m_{p,0}`.
pub fn suspended_mass(phi: &Field, m_p0: f64) -> Result<f64> {
    if m_p0 == 0.0 {
        return Err(Error::param("m_p0", "initial suspended mass is zero"));
    }
    Ok(integral(phi) / m_p0)
}

/// Depth-averaged `φ` at abscissa `x`, by composite Gauss sampling.
pub fn depth_average(phi: &Field, x: f64, rows: usize) -> f64 {
    let mesh = phi.space().mesh();
    let Some(geom) = mesh.channel() else {
        return f64::NAN;
    };
    let (ts, ws) = interval_rule(5);
    let dy = geom.height / rows as f64;
    let mut total = 0.0;
    for r in 0..rows {
        for (&t, &w) in ts.iter().zip(&ws) {
            let y = (r as f64 + t) * dy;
            if let Some((c, xh)) = mesh.locate([x, y]) {
                total += w * dy * phi.evaluate_in_cell(c, xh).scalar();
            }
        }
    }
    total / geom.height
}

/// Front position: the largest sampled abscissa whose depth average reaches
/// `threshold`, refined by linear interpolation towards the next column.
/// Returns the left wall when no column qualifies; NaN on periodic meshes.
pub fn front_position(phi: &Field, threshold: f64, spacing: Option<f64>) -> f64 {
    let mesh = phi.space().mesh();
    let Some(geom) = mesh.channel().copied() else {
        return f64::NAN;
    };
    let h = spacing.unwrap_or_else(|| mesh.h_min());
    let ncols = ((geom.length / h).ceil() as usize).max(1);
    let rows = ((geom.height / h).ceil() as usize).max(1);
    let xs: Vec<f64> = (0..=ncols)
        .map(|j| (geom.x_min() + j as f64 * h).min(geom.x_max()))
        .collect();
    let avg: Vec<f64> = xs.iter().map(|&x| depth_average(phi, x, rows)).collect();
    let Some(j) = (0..xs.len()).rev().find(|&j| avg[j] >= threshold) else {
        return geom.x_min();
    };
    if j + 1 == xs.len() {
        return geom.x_max();
    }
    let (a, b) = (avg[j], avg[j + 1]);
    xs[j] + (a - threshold) / (a - b) * (xs[j + 1] - xs[j])
}
