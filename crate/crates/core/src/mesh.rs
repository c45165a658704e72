//! Triangulations of the lock-exchange channel and of periodic rectangles.
//!
//! Cells are stored counter-clockwise. Local edge `i` is the edge opposite
//! local vertex `i` (`[1,2]`, `[0,2]`, `[0,1]`). Every edge carries a global
//! orientation from its lower to its higher vertex index; the RT and CG edge
//! degrees of freedom are defined relative to that orientation.
//!
//! Periodic meshes identify opposite boundary vertices. Cells keep their
//! unwrapped coordinates, stored as vertex position plus an integer multiple
//! of the period, so that geometry stays local while topology is a torus.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Endpoints (local vertex indices) of local edge `i`, opposite vertex `i`.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];

/// Tolerance used when inferring boundary tags from coordinates.
pub const TAG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    pub length: f64,
    pub height: f64,
    pub lock_length: f64,
}

impl ChannelGeometry {
    pub fn new(length: f64, height: f64, lock_length: f64) -> Result<Self> {
        let geom = Self {
            length,
            height,
            lock_length,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height > 0.0) {
            return Err(Error::Mesh(format!("channel height must be positive, got {}", self.height)));
        }
        if !(self.lock_length > 0.0) {
            return Err(Error::Mesh(format!(
                "lock length must be positive, got {}",
                self.lock_length
            )));
        }
        if !(self.length > self.lock_length) {
            return Err(Error::Mesh(format!(
                "channel length {} must exceed lock length {}",
                self.length, self.lock_length
            )));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        -self.lock_length
    }

    pub fn x_max(&self) -> f64 {
        self.length - self.lock_length
    }

    /// Tag of the channel side containing segment `a`–`b`, if any.
    pub fn side_of(&self, a: [f64; 2], b: [f64; 2], tol: f64) -> Option<BoundaryTag> {
        let on = |p: [f64; 2], tag: BoundaryTag| match tag {
            BoundaryTag::Top => (p[1] - self.height).abs() <= tol,
            BoundaryTag::Right => (p[0] - self.x_max()).abs() <= tol,
            BoundaryTag::Bottom => p[1].abs() <= tol,
            BoundaryTag::Left => (p[0] - self.x_min()).abs() <= tol,
        };
        BoundaryTag::ALL
            .into_iter()
            .find(|&tag| on(a, tag) && on(b, tag))
    }
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self {
            length: 13.0,
            height: 1.0,
            lock_length: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    Left,
    Right,
    Crisscross,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Pattern::Left),
            "right" => Ok(Pattern::Right),
            "crisscross" => Ok(Pattern::Crisscross),
            other => Err(Error::Mesh(format!(
                "unknown pattern '{other}' (expected left, right or crisscross)"
            ))),
        }
    }
}

/// Channel walls: Γ1 top, Γ2 right, Γ3 bottom, Γ4 left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Top,
    Right,
    Bottom,
    Left,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::Top,
        BoundaryTag::Right,
        BoundaryTag::Bottom,
        BoundaryTag::Left,
    ];

    /// Index `i` of Γi.
    pub fn index(self) -> u8 {
        match self {
            BoundaryTag::Top => 1,
            BoundaryTag::Right => 2,
            BoundaryTag::Bottom => 3,
            BoundaryTag::Left => 4,
        }
    }

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            BoundaryTag::Top => [0.0, 1.0],
            BoundaryTag::Right => [1.0, 0.0],
            BoundaryTag::Bottom => [0.0, -1.0],
            BoundaryTag::Left => [-1.0, 0.0],
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BoundaryTag::Top => "top",
            BoundaryTag::Right => "right",
            BoundaryTag::Bottom => "bottom",
            BoundaryTag::Left => "left",
        };
        write!(f, "Γ{}({})", self.index(), name)
    }
}

/// Affine map from the reference triangle (0,0),(1,0),(0,1).
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub coords: [[f64; 2]; 3],
    /// Columns are `P1 - P0` and `P2 - P0`; stored row-major.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub inv: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn new(coords: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        Self {
            coords,
            jac,
            det,
            inv,
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    pub fn map(&self, xhat: [f64; 2]) -> [f64; 2] {
        let p0 = self.coords[0];
        [
            p0[0] + self.jac[0][0] * xhat[0] + self.jac[0][1] * xhat[1],
            p0[1] + self.jac[1][0] * xhat[0] + self.jac[1][1] * xhat[1],
        ]
    }

    pub fn pullback(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.coords[0][0], x[1] - self.coords[0][1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient `J^{-T} ĝ` of a pulled-back scalar.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Contravariant Piola transform `J v̂ / det J`.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            (self.jac[0][0] * v[0] + self.jac[0][1] * v[1]) / self.det,
            (self.jac[1][0] * v[0] + self.jac[1][1] * v[1]) / self.det,
        ]
    }

    /// Inverse Piola transform `det J · J^{-1} v`.
    pub fn inverse_piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.det * (self.inv[0][0] * v[0] + self.inv[0][1] * v[1]),
            self.det * (self.inv[1][0] * v[0] + self.inv[1][1] * v[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub vertices: usize,
    pub edges: usize,
    pub cells: usize,
    pub h_min: f64,
    pub total_area: f64,
}

impl MeshStats {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices as i64 - self.edges as i64 + self.cells as i64
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    cell_shifts: Vec<[[i32; 2]; 3]>,
    geometry: Vec<CellGeometry>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[usize; 3]>,
    edge_cells: Vec<(usize, Option<usize>)>,
    edge_tags: Vec<Option<BoundaryTag>>,
    period: Option<[f64; 2]>,
    channel: Option<ChannelGeometry>,
    locator: Locator,
}

impl Mesh {
    fn assemble(
        vertices: Vec<[f64; 2]>,
        mut cells: Vec<[usize; 3]>,
        mut cell_shifts: Vec<[[i32; 2]; 3]>,
        period: Option<[f64; 2]>,
        channel: Option<ChannelGeometry>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let coords_of = |cell: &[usize; 3], shifts: &[[i32; 2]; 3]| -> [[f64; 2]; 3] {
            let mut out = [[0.0; 2]; 3];
            for l in 0..3 {
                let p = vertices[cell[l]];
                let (sx, sy) = match period {
                    Some(per) => (shifts[l][0] as f64 * per[0], shifts[l][1] as f64 * per[1]),
                    None => (0.0, 0.0),
                };
                out[l] = [p[0] + sx, p[1] + sy];
            }
            out
        };

        let mut geometry = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::Mesh(format!("cell {c} references a missing vertex")));
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::Mesh(format!("cell {c} repeats a vertex")));
            }
            let mut geo = CellGeometry::new(coords_of(cell, &cell_shifts[c]));
            if geo.det < 0.0 {
                cell.swap(1, 2);
                cell_shifts[c].swap(1, 2);
                geo = CellGeometry::new(coords_of(cell, &cell_shifts[c]));
            }
            if !(geo.det > 0.0) {
                return Err(Error::Mesh(format!("cell {c} is degenerate")));
            }
            geometry.push(geo);
        }

        // Edge identity: vertex pair plus relative periodic shift.
        let mut edge_index: HashMap<(usize, usize, [i32; 2]), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_cells: Vec<(usize, Option<usize>)> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut ce = [0usize; 3];
            for (i, [a, b]) in LOCAL_EDGES.iter().copied().enumerate() {
                let (va, vb) = (cell[a], cell[b]);
                let (sa, sb) = (cell_shifts[c][a], cell_shifts[c][b]);
                let key = if va < vb {
                    (va, vb, [sb[0] - sa[0], sb[1] - sa[1]])
                } else {
                    (vb, va, [sa[0] - sb[0], sa[1] - sb[1]])
                };
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_cells.push((c, None));
                    edges.len() - 1
                });
                if edge_cells[e].0 != c {
                    if edge_cells[e].1.is_some() {
                        return Err(Error::Mesh(format!("edge {:?} shared by more than two cells", edges[e])));
                    }
                    edge_cells[e].1 = Some(c);
                }
                ce[i] = e;
            }
            cell_edges.push(ce);
        }

        let mut mesh = Self {
            vertices,
            cells,
            cell_shifts,
            geometry,
            edges,
            cell_edges,
            edge_cells,
            edge_tags: Vec::new(),
            period,
            channel,
            locator: Locator::default(),
        };

        let mut tags = vec![None; mesh.edges.len()];
        for e in 0..mesh.edges.len() {
            if mesh.edge_cells[e].1.is_some() {
                continue;
            }
            let (a, b) = mesh.edge_endpoints(e);
            match mesh.channel {
                Some(geom) => match geom.side_of(a, b, TAG_TOLERANCE) {
                    Some(tag) => tags[e] = Some(tag),
                    None => {
                        return Err(Error::Mesh(format!(
                            "boundary edge ({:?} -> {:?}) is not on the channel boundary",
                            a, b
                        )))
                    }
                },
                None => {
                    return Err(Error::Mesh(format!(
                        "periodic mesh has an unmatched boundary edge at {a:?}"
                    )))
                }
            }
        }
        mesh.edge_tags = tags;
        mesh.locator = Locator::build(&mesh.geometry);
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self, cell: usize) -> [usize; 3] {
        self.cell_edges[cell]
    }

    pub fn edge_cells(&self, edge: usize) -> (usize, Option<usize>) {
        self.edge_cells[edge]
    }

    pub fn edge_tag(&self, edge: usize) -> Option<BoundaryTag> {
        self.edge_tags[edge]
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edge_cells[edge].1.is_none()
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    pub fn period(&self) -> Option<[f64; 2]> {
        self.period
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    pub fn channel(&self) -> Option<&ChannelGeometry> {
        self.channel.as_ref()
    }

    /// +1 when the local edge `i` of `cell`, traversed from its lower to its
    /// higher local vertex, follows the global edge orientation.
    pub fn edge_direction(&self, cell: usize, local_edge: usize) -> f64 {
        let [a, b] = LOCAL_EDGES[local_edge];
        if self.cells[cell][a] < self.cells[cell][b] {
            1.0
        } else {
            -1.0
        }
    }

    /// Local index of `edge` within `cell`.
    pub fn local_edge_index(&self, cell: usize, edge: usize) -> Option<usize> {
        self.cell_edges[cell].iter().position(|&e| e == edge)
    }

    /// Edge endpoints in the coordinates of its first cell, in global order.
    pub fn edge_endpoints(&self, edge: usize) -> ([f64; 2], [f64; 2]) {
        let (c, _) = self.edge_cells[edge];
        let i = self.local_edge_index(c, edge).expect("edge/cell incidence");
        self.edge_endpoints_in_cell(c, i)
    }

    /// Endpoints of local edge `i` of `cell`, ordered along the global edge direction.
    pub fn edge_endpoints_in_cell(&self, cell: usize, local_edge: usize) -> ([f64; 2], [f64; 2]) {
        let [a, b] = LOCAL_EDGES[local_edge];
        let coords = &self.geometry[cell].coords;
        if self.edge_direction(cell, local_edge) > 0.0 {
            (coords[a], coords[b])
        } else {
            (coords[b], coords[a])
        }
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let (a, b) = self.edge_endpoints(edge);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn boundary_edges(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| self.edge_tags[e] == Some(tag))
    }

    pub fn h_min(&self) -> f64 {
        (0..self.edges.len())
            .map(|e| self.edge_length(e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(CellGeometry::area).sum()
    }

    pub fn stats(&self) -> MeshStats {
        MeshStats {
            vertices: self.num_vertices(),
            edges: self.num_edges(),
            cells: self.num_cells(),
            h_min: self.h_min(),
            total_area: self.total_area(),
        }
    }

    /// Bounding box `[[xmin, ymin], [xmax, ymax]]` of the domain.
    pub fn bounds(&self) -> [[f64; 2]; 2] {
        if let Some(geom) = self.channel {
            return [[geom.x_min(), 0.0], [geom.x_max(), geom.height]];
        }
        if let Some(per) = self.period {
            return [[0.0, 0.0], per];
        }
        self.locator.bounds
    }

    /// Cell containing `x` and the reference coordinates of `x` in it.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        match self.period {
            None => self.locator.find(&self.geometry, x),
            Some(per) => {
                let base = [x[0].rem_euclid(per[0]), x[1].rem_euclid(per[1])];
                for sx in [0.0, -1.0, 1.0] {
                    for sy in [0.0, -1.0, 1.0] {
                        let p = [base[0] + sx * per[0], base[1] + sy * per[1]];
                        if let Some(hit) = self.locator.find(&self.geometry, p) {
                            return Some(hit);
                        }
                    }
                }
                None
            }
        }
    }

    /// Plain-text export (`V E C` header, vertex lines, cell lines).
    pub fn to_text(&self) -> Result<String> {
        if self.is_periodic() {
            return Err(Error::Mesh("periodic meshes cannot be exported".into()));
        }
        let mut out = format!("{} {} {}\n", self.num_vertices(), self.num_edges(), self.num_cells());
        for v in &self.vertices {
            out.push_str(&format!("{:e} {:e}\n", v[0], v[1]));
        }
        for c in &self.cells {
            out.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
        }
        Ok(out)
    }

    /// Move vertices by a uniform random offset of at most `amplitude · h_min`.
    /// Channel boundary vertices stay on their wall (corners do not move).
    pub fn jitter(&self, amplitude: f64, seed: u64) -> Result<Mesh> {
        let h = self.h_min();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vertices = self.vertices.clone();
        let tol = TAG_TOLERANCE;
        for v in vertices.iter_mut() {
            let dx = amplitude * h * rng.gen_range(-1.0..1.0);
            let dy = amplitude * h * rng.gen_range(-1.0..1.0);
            match self.channel {
                Some(g) => {
                    let on_x = (v[0] - g.x_min()).abs() < tol || (v[0] - g.x_max()).abs() < tol;
                    let on_y = v[1].abs() < tol || (v[1] - g.height).abs() < tol;
                    if !on_x {
                        v[0] += dx;
                    }
                    if !on_y {
                        v[1] += dy;
                    }
                }
                None => {
                    v[0] += dx;
                    v[1] += dy;
                }
            }
        }
        Mesh::assemble(
            vertices,
            self.cells.clone(),
            self.cell_shifts.clone(),
            self.period,
            self.channel,
        )
    }
}

/// Structured triangulation of the channel `[-L_s, L-L_s] × [0, H]`.
pub fn build_channel_mesh(
    geom: ChannelGeometry,
    nx: usize,
    ny: usize,
    pattern: Pattern,
) -> Result<Mesh> {
    geom.validate()?;
    if nx < 1 || ny < 1 {
        return Err(Error::Mesh(format!("resolution must be at least 1x1, got {nx}x{ny}")));
    }
    let grid = StructuredGrid {
        origin: [geom.x_min(), 0.0],
        size: [geom.length, geom.height],
        nx,
        ny,
        periodic: false,
    };
    let (vertices, cells, shifts) = grid.triangulate(pattern);
    Mesh::assemble(vertices, cells, shifts, None, Some(geom))
}

/// Structured triangulation of `[0, lx] × [0, ly]` with both directions periodic.
pub fn build_periodic_rect_mesh(
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    pattern: Pattern,
) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::Mesh(format!(
            "periodic meshes need at least 2x2 cells, got {nx}x{ny}"
        )));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::Mesh(format!("periodic box {lx}x{ly} must have positive size")));
    }
    let grid = StructuredGrid {
        origin: [0.0, 0.0],
        size: [lx, ly],
        nx,
        ny,
        periodic: true,
    };
    let (vertices, cells, shifts) = grid.triangulate(pattern);
    Mesh::assemble(vertices, cells, shifts, Some([lx, ly]), None)
}

pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    mesh.stats()
}

/// Read the plain-text mesh format; boundary tags are inferred from `geom`.
pub fn import_mesh(text: &str, geom: ChannelGeometry) -> Result<Mesh> {
    geom.validate()?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let parse_err = |line: usize, msg: String| Error::MeshImport { line, msg };
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `V E C` header".into()))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(hline, format!("bad header: {e}")))?;
    let [nv, ne, nc] = counts[..] else {
        return Err(parse_err(hline, "header must hold exactly three counts".into()));
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {nv} vertex lines")))?;
        let xy: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(ln, format!("bad vertex: {e}")))?;
        let [x, y] = xy[..] else {
            return Err(parse_err(ln, "vertex line needs `x y`".into()));
        };
        vertices.push([x, y]);
    }
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {nc} cell lines")))?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(ln, format!("bad cell: {e}")))?;
        let [a, b, c] = ids[..] else {
            return Err(parse_err(ln, "cell line needs `v0 v1 v2`".into()));
        };
        cells.push([a, b, c]);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing data after the last cell".into()));
    }
    let shifts = vec![[[0; 2]; 3]; cells.len()];
    let mesh = Mesh::assemble(vertices, cells, shifts, None, Some(geom))?;
    if mesh.num_edges() != ne {
        return Err(parse_err(
            hline,
            format!("header declares {ne} edges, connectivity yields {}", mesh.num_edges()),
        ));
    }
    Ok(mesh)
}

struct StructuredGrid {
    origin: [f64; 2],
    size: [f64; 2],
    nx: usize,
    ny: usize,
    periodic: bool,
}

type Triangulation = (Vec<[f64; 2]>, Vec<[usize; 3]>, Vec<[[i32; 2]; 3]>);

impl StructuredGrid {
    fn corner(&self, i: usize, j: usize) -> (usize, [i32; 2]) {
        if self.periodic {
            let (ii, jj) = (i % self.nx, j % self.ny);
            (jj * self.nx + ii, [(i / self.nx) as i32, (j / self.ny) as i32])
        } else {
            (j * (self.nx + 1) + i, [0, 0])
        }
    }

    fn num_corners(&self) -> usize {
        if self.periodic {
            self.nx * self.ny
        } else {
            (self.nx + 1) * (self.ny + 1)
        }
    }

    fn triangulate(&self, pattern: Pattern) -> Triangulation {
        let dx = self.size[0] / self.nx as f64;
        let dy = self.size[1] / self.ny as f64;
        let ncorner = self.num_corners();
        let mut vertices = vec![[0.0; 2]; ncorner];
        let (ci, cj) = if self.periodic {
            (self.nx, self.ny)
        } else {
            (self.nx + 1, self.ny + 1)
        };
        for j in 0..cj {
            for i in 0..ci {
                let (id, _) = self.corner(i, j);
                vertices[id] = [self.origin[0] + i as f64 * dx, self.origin[1] + j as f64 * dy];
            }
        }
        if pattern == Pattern::Crisscross {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    vertices.push([
                        self.origin[0] + (i as f64 + 0.5) * dx,
                        self.origin[1] + (j as f64 + 0.5) * dy,
                    ]);
                }
            }
        }

        let mut cells = Vec::new();
        let mut shifts = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let a = self.corner(i, j);
                let b = self.corner(i + 1, j);
                let c = self.corner(i + 1, j + 1);
                let d = self.corner(i, j + 1);
                let tris: Vec<[(usize, [i32; 2]); 3]> = match pattern {
                    Pattern::Left => vec![[a, b, d], [b, c, d]],
                    Pattern::Right => vec![[a, b, c], [a, c, d]],
                    Pattern::Crisscross => {
                        let m = (ncorner + j * self.nx + i, [0, 0]);
                        vec![[a, b, m], [b, c, m], [c, d, m], [d, a, m]]
                    }
                };
                for t in tris {
                    cells.push([t[0].0, t[1].0, t[2].0]);
                    shifts.push([t[0].1, t[1].1, t[2].1]);
                }
            }
        }
        (vertices, cells, shifts)
    }
}

/// Uniform bucket grid over cell bounding boxes.
#[derive(Debug, Clone, Default)]
struct Locator {
    bounds: [[f64; 2]; 2],
    nb: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn build(geometry: &[CellGeometry]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for g in geometry {
            for p in g.coords {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        let n = ((geometry.len() as f64).sqrt().ceil() as usize).max(1);
        let nb = [n, n];
        let mut buckets = vec![Vec::new(); n * n];
        let loc = Self {
            bounds: [lo, hi],
            nb,
            buckets: Vec::new(),
        };
        for (c, g) in geometry.iter().enumerate() {
            let mut clo = [f64::INFINITY; 2];
            let mut chi = [f64::NEG_INFINITY; 2];
            for p in g.coords {
                for d in 0..2 {
                    clo[d] = clo[d].min(p[d]);
                    chi[d] = chi[d].max(p[d]);
                }
            }
            let (i0, j0) = loc.bucket_of(clo);
            let (i1, j1) = loc.bucket_of(chi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nb[0] + i].push(c);
                }
            }
        }
        Self { buckets, ..loc }
    }

    fn bucket_of(&self, p: [f64; 2]) -> (usize, usize) {
        let idx = |d: usize| {
            let span = (self.bounds[1][d] - self.bounds[0][d]).max(f64::MIN_POSITIVE);
            let t = ((p[d] - self.bounds[0][d]) / span * self.nb[d] as f64).floor();
            t.clamp(0.0, (self.nb[d] - 1) as f64) as usize
        };
        (idx(0), idx(1))
    }

    fn find(&self, geometry: &[CellGeometry], x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let tol = 1e-10;
        for d in 0..2 {
            let span = self.bounds[1][d] - self.bounds[0][d];
            if x[d] < self.bounds[0][d] - tol * span || x[d] > self.bounds[1][d] + tol * span {
                return None;
            }
        }
        let (i, j) = self.bucket_of(x);
        for &c in &self.buckets[j * self.nb[0] + i] {
            let xh = geometry[c].pullback(x);
            if xh[0] >= -tol && xh[1] >= -tol && xh[0] + xh[1] <= 1.0 + tol {
                return Some((c, xh));
            }
        }
        None
    }
}
