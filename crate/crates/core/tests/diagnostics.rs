mod common;

use common::*;
use meevc::diagnostics::*;
use meevc::femspace::{project_scalar, Family, Field};
use meevc::mesh::{BoundaryTag, Pattern};
use meevc::stepper::{InitialCondition, PhysicsConfig, Simulation, TimeConfig};

fn lock_channel() -> std::sync::Arc<meevc::mesh::Mesh> {
    channel(13.0, 78, 6, Pattern::Left)
}

#[test]
fn rest_state_rows_are_zero() {
    let mesh = channel(4.0, 8, 2, Pattern::Left);
    let mut sim = Simulation::new(mesh, 1, PhysicsConfig::turbidity(5e6, 1.0, 0.02), TimeConfig::new(0.1, 1.0)).unwrap();
    let (s0, u0, _) = sim.initialize(InitialCondition::Rest).unwrap();
    let mut ledger = EnergyLedger::start(&sim, &s0, &u0, DiagnosticsConfig::default());
    let (s1, _) = sim.step(&s0).unwrap();
    let row = ledger.update(&sim, &s0, &s1).unwrap();
    assert_eq!(row.step, 1);
    for v in [row.k, row.ep, row.eps_v, row.eps_s, row.ev, row.es, row.e_res, row.enstrophy, row.total_vorticity, row.mdot_s, row.phi_min, row.phi_max, row.div_inf] {
        assert_eq!(v, 0.0);
    }
    assert!(row.m_p_ratio.is_nan());
    assert_eq!(row.x_f, -1.0);
    assert!(ledger.update(&sim, &s0, &s0).is_err());
}

#[test]
fn uniform_suspension_energy_and_sedimentation() {
    let mesh = lock_channel();
    let phi = project_scalar(&space(&mesh, Family::CG, 2), |_| 1.0).unwrap();
    assert!((potential_energy(&phi) - 6.5).abs() < 1e-12);
    assert!((integral(&phi) - 13.0).abs() < 1e-12);
    assert!((sedimentation_rate(&phi, 0.02) + 0.26).abs() < 1e-14);
    assert!((boundary_integral(&phi, BoundaryTag::Top) - 13.0).abs() < 1e-12);
    assert!((boundary_integral(&phi, BoundaryTag::Left) - 1.0).abs() < 1e-12);
    assert!((suspended_mass(&phi, 13.0).unwrap() - 1.0).abs() < 1e-13);
    assert!(suspended_mass(&phi, 0.0).is_err());
}

#[test]
fn settling_dissipation_forms() {
    let mesh = unit_square(4, 4);
    let w = space(&mesh, Family::CG, 2);
    let (us, kappa) = (0.02, 1e-3);
    let c = project_scalar(&w, |_| 0.4).unwrap();
    assert!(eps_s_ref1_variant(&c, us, kappa).abs() < 1e-14);
    assert!((settling_dissipation(&c, us, kappa) - 0.4 * us).abs() < 1e-14);

    let lin = project_scalar(&w, |x| 1.0 - x[1]).unwrap();
    assert!((eps_s_ref1_variant(&lin, us, kappa) + us).abs() < 1e-13);
    assert!((settling_dissipation(&lin, us, kappa) - (0.5 * us - kappa)).abs() < 1e-13);
}

#[test]
fn front_position_limits() {
    let mesh = lock_channel();
    let w = space(&mesh, Family::CG, 2);
    let zero = project_scalar(&w, |_| 0.0).unwrap();
    assert_eq!(front_position(&zero, 0.01, None), -1.0);
    let one = project_scalar(&w, |_| 1.0).unwrap();
    assert_eq!(front_position(&one, 0.01, None), 12.0);

    // Sharp lock as a nodal CG1 field: 1 on x ≤ 0, 0 beyond.
    let w1 = space(&mesh, Family::CG, 1);
    let mut sharp = Field::zeros(&w1);
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    for c in 0..mesh.num_cells() {
        for (j, &v) in mesh.cells()[c].iter().enumerate() {
            let d = w1.cell_dofs(c)[j];
            sharp.coeffs_mut()[d] = if mesh.vertices()[v][0] <= 1e-12 { 1.0 } else { 0.0 };
        }
    }
    for c in 0..mesh.num_cells() {
        for (j, &v) in mesh.cells()[c].iter().enumerate() {
            let expect = if mesh.vertices()[v][0] <= 1e-12 { 1.0 } else { 0.0 };
            assert_eq!(sharp.evaluate_in_cell(c, corners[j]).scalar(), expect);
        }
    }
    let xf = front_position(&sharp, 0.01, None);
    assert!(xf > 0.0 && xf <= mesh.h_min(), "{xf}");

    let torus = random_torus(1);
    let tw = project_scalar(&space(&torus, Family::CG, 1), |_| 1.0).unwrap();
    assert!(front_position(&tw, 0.01, None).is_nan());
}

#[test]
fn front_moves_with_a_shifted_lock() {
    let mesh = lock_channel();
    let w = space(&mesh, Family::CG, 2);
    let delta = 2.0 * mesh.h_min();
    let base = front_position(&project_scalar(&w, |x| 0.5 * (1.0 - (x[0] / delta).tanh())).unwrap(), 0.01, None);
    let shifted = front_position(&project_scalar(&w, |x| 0.5 * (1.0 - ((x[0] - 2.0) / delta).tanh())).unwrap(), 0.01, None);
    assert!((shifted - base - 2.0).abs() < 0.05 * delta, "{base} {shifted}");
    // ½(1 − tanh(x/δ)) = θ at x = δ artanh(1 − 2θ).
    let exact = delta * (0.98f64).atanh();
    assert!((base - exact).abs() < 0.2 * delta, "{base} vs {exact}");
}

#[test]
fn depth_average_of_linear_profile() {
    let mesh = lock_channel();
    let w = space(&mesh, Family::CG, 2);
    let f = project_scalar(&w, |x| x[1] + 0.1 * x[0]).unwrap();
    for x in [-0.7, 0.0, 3.3, 11.9] {
        assert!((depth_average(&f, x, 6) - (0.5 + 0.1 * x)).abs() < 1e-12);
    }
}

#[test]
fn suspended_mass_without_settling_is_constant() {
    let mesh = channel(4.0, 16, 4, Pattern::Left);
    let mut sim = Simulation::new(mesh, 2, PhysicsConfig::turbidity(5e6, 1.0, 0.0), TimeConfig::new(1e-3, 1.0)).unwrap();
    let (mut s, u0, _) = sim.initialize(InitialCondition::Lock { interface_width: None }).unwrap();
    let mut ledger = EnergyLedger::start(&sim, &s, &u0, DiagnosticsConfig::default());
    assert_eq!(suspended_mass(&s.phi, ledger.m_p0).unwrap(), 1.0);
    for _ in 0..4 {
        let (next, _) = sim.step(&s).unwrap();
        let row = ledger.update(&sim, &s, &next).unwrap();
        assert!((row.m_p_ratio - 1.0).abs() < 1e-12);
        assert_eq!(row.mdot_s, 0.0);
        s = next;
    }
}

#[test]
fn diagnostics_config_validation() {
    assert!(DiagnosticsConfig::default().validate().is_ok());
    for (theta, h) in [(0.0, None), (1.0, None), (0.5, Some(0.0))] {
        let cfg = DiagnosticsConfig { front_threshold: theta, front_spacing: h };
        assert!(cfg.validate().is_err());
    }
}

#[test]
fn csv_columns_match_row_values() {
    assert_eq!(CSV_COLUMNS.len(), 17);
    assert_eq!(CSV_COLUMNS[0], "step");
    assert_eq!(CSV_COLUMNS[8], "E_res");
}
