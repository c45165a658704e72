//! Run configuration: TOML sections `mesh`, `physics`, `discretization`,
//! `time`, `initial`, `solver`, `output`, `flags` and `diagnostics`.
//!
//! Unknown keys are rejected. `mesh` and `time` are mandatory; every other
//! section falls back to the lock-exchange defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::femspace::{dof_count, Family};
use crate::mesh::{build_channel_mesh, build_periodic_rect_mesh, import_mesh, ChannelGeometry, Mesh, Pattern};
use crate::stepper::{InitialCondition, Mode, PhysicsConfig, TimeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    /// Lock-exchange channel `[−L_s, L − L_s] × [0, H]`.
    Channel,
    /// Doubly periodic box `[0, length] × [0, height]`.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default = "MeshSection::default_kind")]
    pub kind: MeshKind,
    #[serde(default = "MeshSection::default_length")]
    pub length: f64,
    #[serde(default = "MeshSection::default_height")]
    pub height: f64,
    #[serde(default = "MeshSection::default_lock_length")]
    pub lock_length: f64,
    #[serde(default = "MeshSection::default_nx")]
    pub nx: usize,
    #[serde(default = "MeshSection::default_ny")]
    pub ny: usize,
    #[serde(default = "MeshSection::default_pattern")]
    pub pattern: String,
    /// Triangulation file; overrides `nx`, `ny` and `pattern`.
    #[serde(default)]
    pub import: Option<PathBuf>,
}

impl MeshSection {
    fn default_kind() -> MeshKind {
        MeshKind::Channel
    }
    fn default_length() -> f64 {
        13.0
    }
    fn default_height() -> f64 {
        1.0
    }
    fn default_lock_length() -> f64 {
        1.0
    }
    fn default_nx() -> usize {
        78
    }
    fn default_ny() -> usize {
        6
    }
    fn default_pattern() -> String {
        "left".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub mode: String,
    pub grashof: f64,
    pub schmidt: f64,
    pub settling_velocity: f64,
    pub nu: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            mode: "turbidity".into(),
            grashof: 5e6,
            schmidt: 1.0,
            settling_velocity: 0.02,
            nu: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    pub degree: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "TimeSection::default_tol")]
    pub startup_tol: f64,
    #[serde(default = "TimeSection::default_iter")]
    pub startup_max_iter: usize,
}

impl TimeSection {
    fn default_tol() -> f64 {
        1e-10
    }
    fn default_iter() -> usize {
        25
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// `lock`, `taylor_green`, `random` or `rest`.
    pub kind: String,
    /// Interface width δ of the lock; `2 h_min` when absent.
    pub interface_width: Option<f64>,
    pub seed: u64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: "lock".into(),
            interface_width: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Only `direct` (sparse LU) is available.
    pub strategy: String,
    pub tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            strategy: "direct".into(),
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv_every: usize,
    /// 0 disables snapshots.
    pub vtk_every: usize,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            csv_every: 1,
            vtk_every: 0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagsSection {
    pub paper_literal_signs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub front_threshold: f64,
    pub front_spacing: Option<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsConfig::default();
        Self {
            front_threshold: d.front_threshold,
            front_spacing: d.front_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    pub time: TimeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub flags: FlagsSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

/// Parse and validate. Errors carry the line of the offending key when it
/// appears in `text`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| 1 + text[..s.start].matches('\n').count());
        let msg = e.message().trim().to_string();
        match line {
            Some(line) => Error::Config(format!("line {line}: {msg}")),
            None => Error::Config(msg),
        }
    })?;
    cfg.validate().map_err(|e| locate(text, e))?;
    Ok(cfg)
}

/// Read a config file; a relative `mesh.import` is resolved against the
/// file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(import) = cfg.mesh.import.as_mut() {
        if import.is_relative() {
            if let Some(dir) = path.parent() {
                *import = dir.join(&*import);
            }
        }
    }
    Ok(cfg)
}

fn locate(text: &str, err: Error) -> Error {
    let Error::Parameter { key, msg } = &err else {
        return err;
    };
    let Some((section, name)) = key.split_once('.') else {
        return err;
    };
    let mut current = "";
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = s.trim();
        } else if current == section
            && line.split_once('=').is_some_and(|(k, _)| k.trim() == name)
        {
            return Error::Config(format!("line {}: invalid parameter {key}: {msg}", i + 1));
        }
    }
    err
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        for (key, v) in [("mesh.length", m.length), ("mesh.height", m.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(key, format!("must be positive, got {v}")));
            }
        }
        if m.kind == MeshKind::Channel {
            ChannelGeometry::new(m.length, m.height, m.lock_length)
                .map_err(|e| Error::param("mesh.lock_length", e.to_string()))?;
        }
        if m.import.is_none() {
            if m.nx == 0 {
                return Err(Error::param("mesh.nx", "must be at least 1"));
            }
            if m.ny == 0 {
                return Err(Error::param("mesh.ny", "must be at least 1"));
            }
        }
        if m.import.is_some() && m.kind == MeshKind::Periodic {
            return Err(Error::param("mesh.import", "imported meshes are channel meshes"));
        }
        self.pattern()?;
        let physics = self.physics()?;
        physics.validate()?;
        match (physics.mode, m.kind) {
            (Mode::Turbidity, MeshKind::Periodic) => {
                return Err(Error::param("mesh.kind", "turbidity mode needs a channel mesh"))
            }
            (Mode::Homogeneous, MeshKind::Channel) => {
                return Err(Error::param("mesh.kind", "homogeneous mode needs a periodic mesh"))
            }
            _ => {}
        }
        if self.discretization.degree == 0 {
            return Err(Error::param("discretization.degree", "must be at least 1"));
        }
        self.time_config().validate()?;
        self.initial_condition()?;
        if let Some(d) = self.initial.interface_width {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::param("initial.interface_width", format!("must be positive, got {d}")));
            }
        }
        if self.solver.strategy != "direct" {
            return Err(Error::param(
                "solver.strategy",
                format!("unknown strategy '{}' (available: direct)", self.solver.strategy),
            ));
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(Error::param("solver.tolerance", "must be positive"));
        }
        if self.output.csv_every == 0 {
            return Err(Error::param("output.csv_every", "must be at least 1"));
        }
        self.diagnostics_config().validate()
    }

    pub fn pattern(&self) -> Result<Pattern> {
        self.mesh
            .pattern
            .parse()
            .map_err(|_| Error::param("mesh.pattern", format!("unknown pattern '{}'", self.mesh.pattern)))
    }

    pub fn physics(&self) -> Result<PhysicsConfig> {
        let mode: Mode = self.physics.mode.parse()?;
        let p = &self.physics;
        Ok(PhysicsConfig {
            mode,
            grashof: p.grashof,
            schmidt: p.schmidt,
            settling_velocity: p.settling_velocity,
            nu: p.nu,
            paper_literal_signs: self.flags.paper_literal_signs,
        })
    }

    pub fn time_config(&self) -> TimeConfig {
        TimeConfig {
            dt: self.time.dt,
            t_end: self.time.t_end,
            startup_tol: self.time.startup_tol,
            startup_max_iter: self.time.startup_max_iter,
        }
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        match self.initial.kind.as_str() {
            "lock" => Ok(InitialCondition::Lock {
                interface_width: self.initial.interface_width,
            }),
            "taylor_green" => Ok(InitialCondition::TaylorGreen),
            "random" => Ok(InitialCondition::RandomSolenoidal { seed: self.initial.seed }),
            "rest" => Ok(InitialCondition::Rest),
            other => Err(Error::param(
                "initial.kind",
                format!("unknown initial condition '{other}' (lock, taylor_green, random, rest)"),
            )),
        }
    }

    pub fn diagnostics_config(&self) -> DiagnosticsConfig {
        DiagnosticsConfig {
            front_threshold: self.diagnostics.front_threshold,
            front_spacing: self.diagnostics.front_spacing,
        }
    }

    pub fn geometry(&self) -> Result<ChannelGeometry> {
        ChannelGeometry::new(self.mesh.length, self.mesh.height, self.mesh.lock_length)
    }

    pub fn build_mesh(&self) -> Result<Arc<Mesh>> {
        let m = &self.mesh;
        let mesh = match (m.kind, &m.import) {
            (MeshKind::Channel, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                import_mesh(&text, self.geometry()?)?
            }
            (MeshKind::Channel, None) => build_channel_mesh(self.geometry()?, m.nx, m.ny, self.pattern()?)?,
            (MeshKind::Periodic, _) => build_periodic_rect_mesh(m.length, m.height, m.nx, m.ny, self.pattern()?)?,
        };
        Ok(Arc::new(mesh))
    }
}

/// DOF accounting of one mesh at degree `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofSummary {
    pub degree: usize,
    pub d_w: usize,
    pub d_u: usize,
    pub d_q: usize,
    /// `C · 19/13 · N²`.
    pub equivalent_cells: f64,
}

pub fn dof_summary(vertices: usize, edges: usize, cells: usize, degree: usize) -> Result<DofSummary> {
    if degree == 0 {
        return Err(Error::param("discretization.degree", "must be at least 1"));
    }
    Ok(DofSummary {
        degree,
        d_w: dof_count(Family::CG, degree, vertices, edges, cells)?,
        d_u: dof_count(Family::RT, degree, vertices, edges, cells)?,
        d_q: dof_count(Family::DG, degree - 1, vertices, edges, cells)?,
        equivalent_cells: cells as f64 * 19.0 / 13.0 * (degree * degree) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mesh]\nnx = 4\nny = 2\n[time]\ndt = 0.1\nt_end = 0.2\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.discretization.degree, 2);
        assert_eq!(cfg.physics.grashof, 5e6);
        assert_eq!(cfg.output.csv_every, 1);
        assert_eq!(cfg.time.startup_max_iter, 25);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse_config(&format!("{MINIMAL}bogus = 1\n")).unwrap_err().to_string();
        assert!(err.contains("line 7"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn type_mismatch_is_rejected() {
        let err = parse_config("[mesh]\nnx = \"four\"\n[time]\ndt = 0.1\nt_end = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn equivalent_cells() {
        let s = dof_summary(619, 1734, 1116, 4).unwrap();
        assert!((s.equivalent_cells - 339264.0 / 13.0).abs() < 1e-9);
        assert_eq!((s.equivalent_cells / 1e3).round(), 26.0);
    }
}
