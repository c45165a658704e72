//! Staggered midpoint time integration.
//!
//! Vorticity, concentration and pressure live at integer levels, velocity at
//! half levels. After the implicit startup step every sub-step is a single
//! linear solve:
//!
//! 1. `N ω̃ = Cᵀu^{k+½}` (weak curl, ω̃ = 0 on Γ2∪Γ4)
//! 2. `(N/Δt + ½A) φ^{k+1} = (N/Δt − ½A) φ^k`, `A = C_p(u^{k+½}) + B + κK`
//! 3. `(N/Δt + ½C + ½νL) ω^{k+1} = (N/Δt − ½C − ½νL) ω^k + c(φ̃) + νg(ω̃)`
//! 4. `(M/Δt + ½R(ω^{k+1})) u^{k+3/2} − P p̄ = (M/Δt − ½R) u^{k+½} − νCω^{k+1} + b(φ^{k+1})`,
//!    `D u^{k+3/2} = 0`

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::femspace::{make_space, project_scalar, project_vector, Family, Field, FunctionSpace};
use crate::linsolve::{LuSolver, SaddleSolver, SolverReport};
use crate::mesh::{BoundaryTag, Mesh};
use crate::operators::{
    assemble_baroclinic, assemble_buoyancy, assemble_particle_convection, assemble_rotation,
    assemble_vorticity_convection, assemble_vorticity_neumann, convection_operator, OperatorSet,
};
use crate::sparse::{norm_inf, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Turbidity,
    Homogeneous,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "turbidity" => Ok(Mode::Turbidity),
            "homogeneous" => Ok(Mode::Homogeneous),
            other => Err(Error::param("physics.mode", format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsConfig {
    pub mode: Mode,
    pub grashof: f64,
    pub schmidt: f64,
    pub settling_velocity: f64,
    /// Kinematic viscosity of the homogeneous mode.
    pub nu: f64,
    pub paper_literal_signs: bool,
}

impl PhysicsConfig {
    pub fn turbidity(grashof: f64, schmidt: f64, settling_velocity: f64) -> Self {
        Self {
            mode: Mode::Turbidity,
            grashof,
            schmidt,
            settling_velocity,
            nu: 0.0,
            paper_literal_signs: false,
        }
    }

    pub fn homogeneous(nu: f64) -> Self {
        Self {
            mode: Mode::Homogeneous,
            grashof: 1.0,
            schmidt: 1.0,
            settling_velocity: 0.0,
            nu,
            paper_literal_signs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Turbidity => {
                if !(self.grashof > 0.0 && self.grashof.is_finite()) {
                    return Err(Error::param("physics.grashof", "must be positive"));
                }
                if !(self.schmidt > 0.0 && self.schmidt.is_finite()) {
                    return Err(Error::param("physics.schmidt", "must be positive"));
                }
                if !(self.settling_velocity >= 0.0 && self.settling_velocity.is_finite()) {
                    return Err(Error::param("physics.settling_velocity", "must be non-negative"));
                }
            }
            Mode::Homogeneous => {
                if !(self.nu >= 0.0 && self.nu.is_finite()) {
                    return Err(Error::param("physics.nu", "must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// `1/√Gr` for turbidity currents, `nu` otherwise.
    pub fn viscosity(&self) -> f64 {
        match self.mode {
            Mode::Turbidity => 1.0 / self.grashof.sqrt(),
            Mode::Homogeneous => self.nu,
        }
    }

    /// Particle diffusivity `1/√(Gr·Sc²)`.
    pub fn diffusivity(&self) -> f64 {
        match self.mode {
            Mode::Turbidity => 1.0 / (self.grashof * self.schmidt * self.schmidt).sqrt(),
            Mode::Homogeneous => 0.0,
        }
    }

    pub fn settling(&self) -> f64 {
        match self.mode {
            Mode::Turbidity => self.settling_velocity,
            Mode::Homogeneous => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub startup_tol: f64,
    pub startup_max_iter: usize,
}

impl TimeConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            startup_tol: 1e-10,
            startup_max_iter: 25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("time.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt * (1.0 - 1e-9)) {
            return Err(Error::param("time.t_end", format!("must be at least dt, got {}", self.t_end)));
        }
        if !(self.startup_tol > 0.0) {
            return Err(Error::param("time.startup_tol", "must be positive"));
        }
        if self.startup_max_iter == 0 {
            return Err(Error::param("time.startup_max_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// Smoothed lock `½(1 − tanh(x/δ))`; `None` selects `δ = 2 h_min`.
    Lock { interface_width: Option<f64> },
    /// `u = (sin x cos y, −cos x sin y)`, `ω = 2 sin x sin y`.
    TaylorGreen,
    /// `u = curl ψ` for random CG coefficients of ψ.
    RandomSolenoidal { seed: u64 },
    Rest,
}

/// Function spaces of one simulation.
#[derive(Debug, Clone)]
pub struct Spaces {
    /// Vorticity space; DOFs on Γ2∪Γ4 constrained in channel runs.
    pub w: Arc<FunctionSpace>,
    /// Particle space, same elements as `w` without constraints.
    pub phi: Arc<FunctionSpace>,
    /// Velocity space; all boundary normal DOFs constrained.
    pub u: Arc<FunctionSpace>,
    pub q: Arc<FunctionSpace>,
}

impl Spaces {
    pub fn new(mesh: &Arc<Mesh>, degree: usize) -> Result<Self> {
        let phi = make_space(mesh, Family::CG, degree)?;
        let u_free = make_space(mesh, Family::RT, degree)?;
        let q = make_space(mesh, Family::DG, degree - 1)?;
        let w = phi.with_constraints(phi.boundary_dofs(&[BoundaryTag::Right, BoundaryTag::Left]))?;
        let u = u_free.with_constraints(u_free.boundary_dofs(&BoundaryTag::ALL))?;
        Ok(Self { w, phi, u, q })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.w.mesh()
    }
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub k: usize,
    pub t: f64,
    /// `u^{k+½}`.
    pub u_half: Field,
    pub omega: Field,
    pub phi: Field,
    pub p_bar: Field,
    /// `ω̃^{k−½}` from the most recent Step 1 (zero before the first step).
    pub omega_tilde: Field,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartupReport {
    pub iterations: usize,
    pub last_update: f64,
}

/// Per-step solver reports, one per sub-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step1: SolverReport,
    pub step2: Option<SolverReport>,
    pub step3: SolverReport,
    pub step4: SolverReport,
}

pub struct Simulation {
    pub physics: PhysicsConfig,
    pub time: TimeConfig,
    pub spaces: Spaces,
    pub ops: OperatorSet,
    step1: LuSolver,
    step2: Option<LuSolver>,
    step3: Option<LuSolver>,
    saddle: SaddleSolver,
}

impl Simulation {
    pub fn new(mesh: Arc<Mesh>, degree: usize, physics: PhysicsConfig, time: TimeConfig) -> Result<Self> {
        physics.validate()?;
        time.validate()?;
        match physics.mode {
            Mode::Turbidity if mesh.channel().is_none() => {
                return Err(Error::param("physics.mode", "turbidity runs need a channel mesh"))
            }
            Mode::Homogeneous if !mesh.is_periodic() => {
                return Err(Error::param("physics.mode", "homogeneous runs need a periodic mesh"))
            }
            _ => {}
        }
        let spaces = Spaces::new(&mesh, degree)?;
        let ops = OperatorSet::assemble(&spaces.w, &spaces.u, &spaces.q)?;
        let step1 = LuSolver::new(&ops.n, spaces.w.constrained_dofs())?;
        let saddle = SaddleSolver::new(&ops.d, spaces.u.constrained_dofs(), true)?;
        Ok(Self {
            physics,
            time,
            spaces,
            ops,
            step1,
            step2: None,
            step3: None,
            saddle,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.spaces.mesh()
    }

    pub fn dt(&self) -> f64 {
        self.time.dt
    }

    fn zero_constraints(space: &FunctionSpace) -> Vec<f64> {
        vec![0.0; space.constrained_dofs().len()]
    }

    /// Weak curl `ω̃ = curl_h u`.
    pub fn weak_curl(&self, u: &Field) -> Result<(Field, SolverReport)> {
        let r = self.ops.curl.transpose_mul_vec(u.coeffs());
        let (x, rep) = self.step1.solve(&r, &Self::zero_constraints(&self.spaces.w))?;
        Ok((Field::new(&self.spaces.w, x)?, rep))
    }

    fn initial_fields(&self, ic: InitialCondition) -> Result<(Field, Field, Field)> {
        let sp = &self.spaces;
        match ic {
            InitialCondition::Rest => Ok((Field::zeros(&sp.u), Field::zeros(&sp.w), Field::zeros(&sp.phi))),
            InitialCondition::Lock { interface_width } => {
                if self.physics.mode != Mode::Turbidity {
                    return Err(Error::param("initial.kind", "lock initial data needs turbidity mode"));
                }
                let delta = interface_width.unwrap_or(2.0 * self.mesh().h_min());
                if !(delta > 0.0) {
                    return Err(Error::param("initial.interface_width", "must be positive"));
                }
                let phi = project_scalar(&sp.phi, |x| 0.5 * (1.0 - (x[0] / delta).tanh()))?;
                Ok((Field::zeros(&sp.u), Field::zeros(&sp.w), phi))
            }
            InitialCondition::TaylorGreen => {
                let u = project_vector(&sp.u, |x| [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin()])?;
                let w = project_scalar(&sp.w, |x| 2.0 * x[0].sin() * x[1].sin())?;
                Ok((u, w, Field::zeros(&sp.phi)))
            }
            InitialCondition::RandomSolenoidal { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let psi: Vec<f64> = (0..sp.w.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let u = curl_of(self, &psi)?;
                let (w, _) = self.weak_curl(&u)?;
                Ok((u, w, Field::zeros(&sp.phi)))
            }
        }
    }

    /// Startup: fixed-point iteration for `u^{½}` over `[t⁰, t^{½}]`.
    pub fn initialize(&mut self, ic: InitialCondition) -> Result<(SimulationState, Field, StartupReport)> {
        let (u0, omega0, phi0) = self.initial_fields(ic)?;
        let (u_half, p, report) = self.startup(&u0, &omega0, &phi0)?;
        let state = SimulationState {
            k: 0,
            t: 0.0,
            u_half,
            omega: omega0,
            phi: phi0,
            p_bar: p,
            omega_tilde: Field::zeros(&self.spaces.w),
        };
        Ok((state, u0, report))
    }

    fn startup(&mut self, u0: &Field, omega0: &Field, phi0: &Field) -> Result<(Field, Field, StartupReport)> {
        let sp = self.spaces.clone();
        let h = 0.5 * self.time.dt;
        let nu = self.physics.viscosity();
        let b = if self.physics.mode == Mode::Turbidity {
            assemble_buoyancy(phi0, &sp.u)?
        } else {
            vec![0.0; sp.u.dim()]
        };
        let mut u_iter = u0.clone();
        let mut last = f64::INFINITY;
        for it in 1..=self.time.startup_max_iter {
            let (wt, _) = self.weak_curl(&u_iter)?;
            let mid: Vec<f64> = omega0.coeffs().iter().zip(wt.coeffs()).map(|(a, b)| 0.5 * (a + b)).collect();
            let omega_mid = Field::new(&sp.w, mid)?;
            let (r, _) = assemble_rotation(&omega_mid, &sp.u)?;
            let lhs = SparseMatrix::lin_comb(&[(1.0 / h, &self.ops.m), (0.5, &r)]);
            let rhs_m = SparseMatrix::lin_comb(&[(1.0 / h, &self.ops.m), (-0.5, &r)]);
            let visc = self.ops.curl.mul_vec(omega_mid.coeffs());
            let mut f = rhs_m.mul_vec(u0.coeffs());
            for i in 0..f.len() {
                f[i] += b[i] - nu * visc[i];
            }
            let sol = self.saddle.solve(&lhs, &f, &sp.q)?;
            let du: Vec<f64> = sol.u.iter().zip(u_iter.coeffs()).map(|(a, b)| a - b).collect();
            let scale = norm_inf(&sol.u).max(norm_inf(u_iter.coeffs()));
            last = norm_inf(&du);
            let done = last == 0.0 || last <= self.time.startup_tol * scale;
            u_iter = Field::new(&sp.u, sol.u)?;
            if done {
                let p = Field::new(&sp.q, sol.p)?;
                let rel = if scale > 0.0 { last / scale } else { 0.0 };
                return Ok((u_iter, p, StartupReport { iterations: it, last_update: rel }));
            }
        }
        Err(Error::Startup {
            iterations: self.time.startup_max_iter,
            residual: last,
        })
    }

    /// Advance one step in the configured mode.
    pub fn step(&mut self, state: &SimulationState) -> Result<(SimulationState, StepReport)> {
        let k = state.k + 1;
        match self.physics.mode {
            Mode::Turbidity => self.step_turbidity(state),
            Mode::Homogeneous => self.step_homogeneous(state),
        }
        .map_err(|e| match e {
            Error::Step { .. } => e,
            other => other.in_step(k, "step"),
        })
    }

    pub fn step_turbidity(&mut self, state: &SimulationState) -> Result<(SimulationState, StepReport)> {
        let k = state.k + 1;
        let sp = self.spaces.clone();
        let dt = self.time.dt;
        let nu = self.physics.viscosity();
        let kappa = self.physics.diffusivity();
        let us = self.physics.settling();

        // Step 1
        let (omega_tilde, rep1) = self.weak_curl(&state.u_half).map_err(|e| e.in_step(k, "step 1 (auxiliary vorticity)"))?;

        // Step 2
        let (phi_new, rep2) = (|| -> Result<(Field, SolverReport)> {
            let cp = assemble_particle_convection(&state.u_half, &sp.phi, us, self.physics.paper_literal_signs)?;
            let a = SparseMatrix::lin_comb(&[(1.0, &cp), (kappa, &self.ops.l)]);
            let lhs = SparseMatrix::lin_comb(&[(1.0 / dt, &self.ops.n), (0.5, &a)]);
            let rhs_m = SparseMatrix::lin_comb(&[(1.0 / dt, &self.ops.n), (-0.5, &a)]);
            let rhs = rhs_m.mul_vec(state.phi.coeffs());
            let lu = refactor(&mut self.step2, &lhs, &[])?;
            let (x, rep) = lu.solve(&rhs, &[])?;
            Ok((Field::new(&sp.phi, x)?, rep))
        })()
        .map_err(|e| e.in_step(k, "step 2 (particle transport)"))?;

        // Step 3
        let (omega_new, rep3) = (|| -> Result<(Field, SolverReport)> {
            let phi_mid = midpoint(&state.phi, &phi_new)?;
            let c = assemble_baroclinic(&phi_mid, &sp.w)?;
            let g = assemble_vorticity_neumann(&omega_tilde, &sp.w)?;
            let mut src = c;
            for (s, gi) in src.iter_mut().zip(&g) {
                *s += nu * gi;
            }
            self.vorticity_solve(state, &src)
        })()
        .map_err(|e| e.in_step(k, "step 3 (vorticity)"))?;

        // Step 4
        let (u_new, p_new, rep4) = (|| {
            let b = assemble_buoyancy(&phi_new, &sp.u)?;
            self.velocity_solve(state, &omega_new, &b)
        })()
        .map_err(|e| e.in_step(k, "step 4 (velocity-pressure)"))?;

        Ok((
            SimulationState {
                k,
                t: k as f64 * dt,
                u_half: u_new,
                omega: omega_new,
                phi: phi_new,
                p_bar: p_new,
                omega_tilde,
            },
            StepReport {
                step1: rep1,
                step2: Some(rep2),
                step3: rep3,
                step4: rep4,
            },
        ))
    }

    pub fn step_homogeneous(&mut self, state: &SimulationState) -> Result<(SimulationState, StepReport)> {
        let k = state.k + 1;
        let sp = self.spaces.clone();
        let dt = self.time.dt;
        let (omega_tilde, rep1) = self.weak_curl(&state.u_half).map_err(|e| e.in_step(k, "step 1 (auxiliary vorticity)"))?;
        let zero = vec![0.0; sp.w.dim()];
        let (omega_new, rep3) = self
            .vorticity_solve(state, &zero)
            .map_err(|e| e.in_step(k, "step 3 (vorticity)"))?;
        let b = vec![0.0; sp.u.dim()];
        let (u_new, p_new, rep4) = self
            .velocity_solve(state, &omega_new, &b)
            .map_err(|e| e.in_step(k, "step 4 (velocity-pressure)"))?;
        Ok((
            SimulationState {
                k,
                t: k as f64 * dt,
                u_half: u_new,
                omega: omega_new,
                phi: state.phi.clone(),
                p_bar: p_new,
                omega_tilde,
            },
            StepReport {
                step1: rep1,
                step2: None,
                step3: rep3,
                step4: rep4,
            },
        ))
    }

    fn vorticity_solve(&mut self, state: &SimulationState, src: &[f64]) -> Result<(Field, SolverReport)> {
        let sp = &self.spaces;
        let dt = self.time.dt;
        let nu = self.physics.viscosity();
        let wmat = assemble_vorticity_convection(&state.u_half, &sp.w)?;
        let conv = convection_operator(&wmat);
        let a = SparseMatrix::lin_comb(&[(1.0, &conv), (nu, &self.ops.l)]);
        let lhs = SparseMatrix::lin_comb(&[(1.0 / dt, &self.ops.n), (0.5, &a)]);
        let rhs_m = SparseMatrix::lin_comb(&[(1.0 / dt, &self.ops.n), (-0.5, &a)]);
        let mut rhs = rhs_m.mul_vec(state.omega.coeffs());
        for (r, s) in rhs.iter_mut().zip(src) {
            *r += s;
        }
        let zeros = Self::zero_constraints(&sp.w);
        let lu = refactor(&mut self.step3, &lhs, sp.w.constrained_dofs())?;
        let (x, rep) = lu.solve(&rhs, &zeros)?;
        Ok((Field::new(&sp.w, x)?, rep))
    }

    fn velocity_solve(
        &mut self,
        state: &SimulationState,
        omega_new: &Field,
        b: &[f64],
    ) -> Result<(Field, Field, SolverReport)> {
        let sp = self.spaces.clone();
        let dt = self.time.dt;
        let nu = self.physics.viscosity();
        let (r, _) = assemble_rotation(omega_new, &sp.u)?;
        let lhs = SparseMatrix::lin_comb(&[(1.0 / dt, &self.ops.m), (0.5, &r)]);
        let rhs_m = SparseMatrix::lin_comb(&[(1.0 / dt, &self.ops.m), (-0.5, &r)]);
        let visc = self.ops.curl.mul_vec(omega_new.coeffs());
        let mut f = rhs_m.mul_vec(state.u_half.coeffs());
        for i in 0..f.len() {
            f[i] += b[i] - nu * visc[i];
        }
        let sol = self.saddle.solve(&lhs, &f, &sp.q)?;
        Ok((Field::new(&sp.u, sol.u)?, Field::new(&sp.q, sol.p)?, sol.report))
    }
}

fn refactor<'a>(slot: &'a mut Option<LuSolver>, a: &SparseMatrix, fixed: &[usize]) -> Result<&'a LuSolver> {
    match slot {
        Some(lu) => lu.refactor(a)?,
        None => *slot = Some(LuSolver::new(a, fixed)?),
    }
    Ok(slot.as_ref().expect("factored"))
}

/// `½(a + b)` on the space of `a`.
pub fn midpoint(a: &Field, b: &Field) -> Result<Field> {
    if a.coeffs().len() != b.coeffs().len() {
        return Err(Error::SpaceMismatch("midpoint of fields of different size".into()));
    }
    let c = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| 0.5 * (x + y)).collect();
    Field::new(a.space(), c)
}

/// RT field `curl ψ` for CG coefficients `psi` (exact, as `curl CG ⊂ RT`).
pub fn curl_of(sim: &Simulation, psi: &[f64]) -> Result<Field> {
    let rhs = sim.ops.curl.mul_vec(psi);
    let lu = LuSolver::new(&sim.ops.m, &[])?;
    let (x, _) = lu.solve(&rhs, &[])?;
    Field::new(&sim.spaces.u, x)
}
