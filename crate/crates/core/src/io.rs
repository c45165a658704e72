//! On-disk formats: CSV time series, legacy-VTK snapshots and checkpoints.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::{EnergyLedger, LedgerRow, CSV_COLUMNS};
use crate::error::{Error, Result};
use crate::femspace::{Field, Value};
use crate::stepper::{Simulation, SimulationState};

const CHECKPOINT_MAGIC: &str = "MEEVC-CHECKPOINT 1";
const CENTROID: [f64; 2] = [1.0 / 3.0, 1.0 / 3.0];
const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Append-only diagnostics CSV.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_line(row: &LedgerRow) -> String {
    let mut s = row.step.to_string();
    for v in row.values() {
        s.push(',');
        s.push_str(&format!("{v:.16e}"));
    }
    s
}

impl CsvWriter {
    /// Truncate `path` and write the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writeln!(w.out, "{}", csv_header()).map_err(|e| Error::io(path, e))?;
        Ok(w)
    }

    /// Reopen an existing series, dropping rows after `last_step`.
    pub fn resume(path: &Path, last_step: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut kept = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 {
                if line != csv_header() {
                    return Err(Error::Checkpoint(format!("{}: unexpected CSV header", path.display())));
                }
                kept.push(line);
                continue;
            }
            let step: usize = line
                .split(',')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("{}: malformed row {}", path.display(), i + 1)))?;
            if step <= last_step {
                kept.push(line);
            }
        }
        let mut text = kept.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write_row(&mut self, row: &LedgerRow) -> Result<()> {
        writeln!(self.out, "{}", csv_line(row)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn scalar_at(field: &Field, cell: usize, xh: [f64; 2]) -> f64 {
    match field.evaluate_in_cell(cell, xh) {
        Value::Scalar(v) => v,
        Value::Vector(_) => f64::NAN,
    }
}

/// Legacy ASCII VTK snapshot.
///
/// Channel meshes share vertices between cells. Periodic meshes write three
/// points per cell so that cells crossing the period are drawn unwrapped.
pub fn write_vtk(sim: &Simulation, state: &SimulationState, path: &Path) -> Result<()> {
    let mesh = sim.mesh();
    let nc = mesh.num_cells();
    let periodic = mesh.is_periodic();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&format!(
        "step {} t {:e}; velocity is the RT field at cell centroids, pressure the cell mean of the total pressure\n",
        state.k, state.t
    ));
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    // Each output point is (cell, local vertex).
    let points: Vec<(usize, usize)> = if periodic {
        (0..nc).flat_map(|c| (0..3).map(move |l| (c, l))).collect()
    } else {
        let mut first = vec![None; mesh.num_vertices()];
        for (c, cell) in mesh.cells().iter().enumerate() {
            for (l, &v) in cell.iter().enumerate() {
                first[v].get_or_insert((c, l));
            }
        }
        first
            .into_iter()
            .enumerate()
            .map(|(v, p)| p.ok_or_else(|| Error::Mesh(format!("vertex {v} belongs to no cell"))))
            .collect::<Result<_>>()?
    };
    s.push_str(&format!("POINTS {} double\n", points.len()));
    if periodic {
        for &(c, l) in &points {
            let x = mesh.geometry(c).coords[l];
            s.push_str(&format!("{:e} {:e} 0\n", x[0], x[1]));
        }
    } else {
        for x in mesh.vertices() {
            s.push_str(&format!("{:e} {:e} 0\n", x[0], x[1]));
        }
    }
    s.push_str(&format!("CELLS {} {}\n", nc, 4 * nc));
    for (c, cell) in mesh.cells().iter().enumerate() {
        let ids = if periodic { [3 * c, 3 * c + 1, 3 * c + 2] } else { *cell };
        s.push_str(&format!("3 {} {} {}\n", ids[0], ids[1], ids[2]));
    }
    s.push_str(&format!("CELL_TYPES {nc}\n"));
    for _ in 0..nc {
        s.push_str("5\n");
    }

    s.push_str(&format!("POINT_DATA {}\n", points.len()));
    for (name, field) in [("phi", &state.phi), ("omega", &state.omega), ("omega_tilde", &state.omega_tilde)] {
        s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for &(c, l) in &points {
            s.push_str(&format!("{:e}\n", scalar_at(field, c, REF_VERTICES[l])));
        }
    }

    s.push_str(&format!("CELL_DATA {nc}\nSCALARS pressure double 1\nLOOKUP_TABLE default\n"));
    for c in 0..nc {
        // DG fields of degree ≤ 1 take their mean at the centroid.
        s.push_str(&format!("{:e}\n", scalar_at(&state.p_bar, c, CENTROID)));
    }
    s.push_str("VECTORS velocity double\n");
    for c in 0..nc {
        let v = state.u_half.evaluate_in_cell(c, CENTROID).vector();
        s.push_str(&format!("{:e} {:e} 0\n", v[0], v[1]));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub k: usize,
    pub t: f64,
    pub ledger: EnergyLedger,
    pub u_half: Vec<f64>,
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub omega_tilde: Vec<f64>,
}

impl Checkpoint {
    pub fn capture(state: &SimulationState, ledger: &EnergyLedger) -> Self {
        Self {
            k: state.k,
            t: state.t,
            ledger: *ledger,
            u_half: state.u_half.coeffs().to_vec(),
            omega: state.omega.coeffs().to_vec(),
            phi: state.phi.coeffs().to_vec(),
            p_bar: state.p_bar.coeffs().to_vec(),
            omega_tilde: state.omega_tilde.coeffs().to_vec(),
        }
    }

    /// Rebuild the state on the spaces of `sim`; the ledger keeps its
    /// diagnostics configuration from `config`.
    pub fn restore(
        &self,
        sim: &Simulation,
        config: crate::diagnostics::DiagnosticsConfig,
    ) -> Result<(SimulationState, EnergyLedger)> {
        let sp = &sim.spaces;
        let check = |name: &str, have: usize, want: usize| {
            if have == want {
                Ok(())
            } else {
                Err(Error::Checkpoint(format!(
                    "{name} has {have} coefficients, the configured space has {want}"
                )))
            }
        };
        check("u_half", self.u_half.len(), sp.u.dim())?;
        check("omega", self.omega.len(), sp.w.dim())?;
        check("phi", self.phi.len(), sp.phi.dim())?;
        check("p_bar", self.p_bar.len(), sp.q.dim())?;
        check("omega_tilde", self.omega_tilde.len(), sp.w.dim())?;
        let state = SimulationState {
            k: self.k,
            t: self.t,
            u_half: Field::new(&sp.u, self.u_half.clone())?,
            omega: Field::new(&sp.w, self.omega.clone())?,
            phi: Field::new(&sp.phi, self.phi.clone())?,
            p_bar: Field::new(&sp.q, self.p_bar.clone())?,
            omega_tilde: Field::new(&sp.w, self.omega_tilde.clone())?,
        };
        let mut ledger = self.ledger;
        ledger.config = config;
        Ok((state, ledger))
    }

    pub fn to_text(&self) -> String {
        let l = &self.ledger;
        let mut s = format!("{CHECKPOINT_MAGIC}\nk {}\nt {:e}\n", self.k, self.t);
        s.push_str(&format!(
            "ledger {:e} {:e} {:e} {:e} {:e} {:e} {:e}\n",
            l.ev, l.es, l.ep0, l.k_half0, l.k0, l.b0, l.m_p0
        ));
        for (name, v) in self.vectors() {
            s.push_str(&format!("{name} {}\n", v.len()));
            for x in v {
                s.push_str(&format!("{x:e}\n"));
            }
        }
        s
    }

    fn vectors(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("u_half", &self.u_half),
            ("omega", &self.omega),
            ("phi", &self.phi),
            ("p_bar", &self.p_bar),
            ("omega_tilde", &self.omega_tilde),
        ]
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.trim()))
                .ok_or_else(|| bad(format!("truncated file, expected {what}")))
        };
        let (_, magic) = next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(format!("unknown format '{magic}'")));
        }
        let field = |line: (usize, &str), key: &str| -> Result<Vec<String>> {
            let mut it = line.1.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("line {}: expected '{key}'", line.0)));
            }
            Ok(it.map(str::to_string).collect())
        };
        let num = |s: &str, line: usize| -> Result<f64> {
            s.parse().map_err(|_| bad(format!("line {line}: bad number '{s}'")))
        };
        let l = next("k")?;
        let k = field(l, "k")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad step index", l.0)))?;
        let l = next("t")?;
        let t = num(field(l, "t")?.first().map_or("", String::as_str), l.0)?;
        let l = next("ledger")?;
        let acc = field(l, "ledger")?
            .iter()
            .map(|s| num(s, l.0))
            .collect::<Result<Vec<_>>>()?;
        if acc.len() != 7 {
            return Err(bad(format!("line {}: expected 7 ledger values", l.0)));
        }
        let mut vecs = Vec::new();
        for name in ["u_half", "omega", "phi", "p_bar", "omega_tilde"] {
            let l = next(name)?;
            let n: usize = field(l, name)?
                .first()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("line {}: bad length", l.0)))?;
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let l = next(name)?;
                v.push(num(l.1, l.0)?);
            }
            vecs.push(v);
        }
        let [u_half, omega, phi, p_bar, omega_tilde]: [Vec<f64>; 5] = vecs.try_into().expect("five vectors");
        Ok(Self {
            k,
            t,
            ledger: EnergyLedger {
                ev: acc[0],
                es: acc[1],
                ep0: acc[2],
                k_half0: acc[3],
                k0: acc[4],
                b0: acc[5],
                m_p0: acc[6],
                config: Default::default(),
            },
            u_half,
            omega,
            phi,
            p_bar,
            omega_tilde,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
