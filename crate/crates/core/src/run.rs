//! Run orchestration: startup, time loop, CSV/VTK/checkpoint output.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics::{EnergyLedger, LedgerRow};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, CsvWriter};
use crate::stepper::{Simulation, SimulationState, StartupReport};

pub const CSV_NAME: &str = "diagnostics.csv";
pub const FINAL_CHECKPOINT: &str = "final.chk";

pub fn checkpoint_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("checkpoint_{k:07}.chk"))
}

pub fn snapshot_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("snapshot_{k:07}.vtk"))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub startup: Option<StartupReport>,
    pub final_state: SimulationState,
    /// Every ledger row computed during this invocation, written or not.
    pub rows: Vec<LedgerRow>,
}

/// Called after each step with the previous state, the new state and its row.
pub type Observer<'a> = dyn FnMut(&Simulation, &SimulationState, &SimulationState, &LedgerRow) + 'a;

pub fn build_simulation(cfg: &RunConfig) -> Result<Simulation> {
    let mesh = cfg.build_mesh()?;
    Simulation::new(mesh, cfg.discretization.degree, cfg.physics()?, cfg.time_config())
}

/// Fresh run into `dir` (created if needed).
pub fn run(cfg: &RunConfig, dir: &Path, observer: Option<&mut Observer>) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sim = build_simulation(cfg)?;
    let (state, u0, startup) = sim.initialize(cfg.initial_condition()?)?;
    let ledger = EnergyLedger::start(&sim, &state, &u0, cfg.diagnostics_config());
    let csv = CsvWriter::create(&dir.join(CSV_NAME))?;
    if cfg.output.vtk_every > 0 {
        crate::io::write_vtk(&sim, &state, &snapshot_path(dir, 0))?;
    }
    let mut summary = advance(cfg, dir, &mut sim, state, ledger, csv, observer)?;
    summary.startup = Some(startup);
    Ok(summary)
}

/// Continue from `checkpoint`, truncating the CSV in `dir` to its step.
pub fn resume(
    cfg: &RunConfig,
    dir: &Path,
    checkpoint: &Path,
    observer: Option<&mut Observer>,
) -> Result<RunSummary> {
    let mut sim = build_simulation(cfg)?;
    let (state, ledger) = Checkpoint::load(checkpoint)?.restore(&sim, cfg.diagnostics_config())?;
    let csv = CsvWriter::resume(&dir.join(CSV_NAME), state.k)?;
    advance(cfg, dir, &mut sim, state, ledger, csv, observer)
}

fn advance(
    cfg: &RunConfig,
    dir: &Path,
    sim: &mut Simulation,
    mut state: SimulationState,
    mut ledger: EnergyLedger,
    mut csv: CsvWriter,
    mut observer: Option<&mut Observer>,
) -> Result<RunSummary> {
    let n = sim.time.num_steps();
    let out = &cfg.output;
    let mut rows = Vec::new();
    let result = (|| -> Result<()> {
        while state.k < n {
            let (next, _) = sim.step(&state)?;
            let row = ledger.update(sim, &state, &next)?;
            if let Some(obs) = observer.as_deref_mut() {
                obs(sim, &state, &next, &row);
            }
            state = next;
            let k = state.k;
            if k % out.csv_every == 0 {
                csv.write_row(&row)?;
            }
            rows.push(row);
            if out.vtk_every > 0 && k % out.vtk_every == 0 {
                crate::io::write_vtk(sim, &state, &snapshot_path(dir, k))?;
            }
            if out.checkpoint_every > 0 && k % out.checkpoint_every == 0 {
                csv.flush()?;
                Checkpoint::capture(&state, &ledger).save(&checkpoint_path(dir, k))?;
            }
        }
        Ok(())
    })();
    csv.flush()?;
    result?;
    Checkpoint::capture(&state, &ledger).save(&dir.join(FINAL_CHECKPOINT))?;
    Ok(RunSummary {
        startup: None,
        final_state: state,
        rows,
    })
}
