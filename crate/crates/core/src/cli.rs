//! Command-line front end: `run`, `resume`, `check` and `mesh-info`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{dof_summary, load_config, RunConfig};
use crate::error::{Error, Result};
use crate::mesh::mesh_stats;
use crate::run::{build_simulation, resume, run, CSV_NAME};

#[derive(Debug, Parser)]
#[command(name = "meevc", version, about = "Dual-field finite element solver for 2D flow and turbidity currents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation from t = 0.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Continue a run from a checkpoint.
    Resume {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Validate the config and perform the startup solve; writes nothing.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print mesh statistics and DOF counts.
    MeshInfo {
        #[arg(long)]
        config: PathBuf,
    },
}

fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output.dir.clone())
}

/// Execute a parsed command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let say = |out: &mut dyn std::io::Write, s: String| {
        writeln!(out, "{s}").map_err(|e| Error::io("<stdout>", e))
    };
    match cli.command {
        Command::Run { config, output_dir: dir } => {
            let cfg = load_config(&config)?;
            let dir = output_dir(&cfg, dir);
            let summary = run(&cfg, &dir, None)?;
            if let Some(s) = summary.startup {
                say(out, format!("startup: {} iterations, last update {:e}", s.iterations, s.last_update))?;
            }
            say(
                out,
                format!(
                    "finished step {} (t = {}); diagnostics in {}",
                    summary.final_state.k,
                    summary.final_state.t,
                    dir.join(CSV_NAME).display()
                ),
            )
        }
        Command::Resume {
            config,
            checkpoint,
            output_dir: dir,
        } => {
            let cfg = load_config(&config)?;
            let dir = output_dir(&cfg, dir);
            let summary = resume(&cfg, &dir, &checkpoint, None)?;
            say(
                out,
                format!("resumed and finished step {} (t = {})", summary.final_state.k, summary.final_state.t),
            )
        }
        Command::Check { config } => {
            let mut cfg = load_config(&config)?;
            cfg.time.startup_max_iter = 1;
            let mut sim = build_simulation(&cfg)?;
            match sim.initialize(cfg.initial_condition()?) {
                Ok(_) | Err(Error::Startup { .. }) => {}
                Err(e) => return Err(e),
            }
            say(out, format!("{}: ok", config.display()))
        }
        Command::MeshInfo { config } => {
            let cfg = load_config(&config)?;
            let mesh = cfg.build_mesh()?;
            let st = mesh_stats(&mesh);
            let d = dof_summary(st.vertices, st.edges, st.cells, cfg.discretization.degree)?;
            say(out, format!("vertices        {}", st.vertices))?;
            say(out, format!("edges           {}", st.edges))?;
            say(out, format!("cells           {}", st.cells))?;
            say(out, format!("h_min           {:.6}", st.h_min))?;
            say(out, format!("area            {:.6}", st.total_area))?;
            say(out, format!("N               {}", d.degree))?;
            say(out, format!("d_W             {}", d.d_w))?;
            say(out, format!("d_U             {}", d.d_u))?;
            say(out, format!("d_Q             {}", d.d_q))?;
            say(out, format!("eq. num. cells  {:.1} ({:.1e})", d.equivalent_cells, d.equivalent_cells))
        }
    }
}
