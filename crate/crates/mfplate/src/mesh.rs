//! Triangular integration meshes, node sets and nodal volumes.
//!
//! The solver works on a partition of the domain into three-node triangles.
//! Mesh vertices form the standard node set; per-cell barycenters can be
//! appended as a second node set carrying rotation unknowns only. Meshes are
//! immutable after construction and safe to share across threads.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Standard,
    Barycenter,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    pub x: Vec2,
    pub kind: NodeKind,
}

/// A counter-clockwise three-node cell, optionally linked to its barycenter
/// node once the mesh has been enhanced.
#[derive(Debug, Clone)]
pub struct TriCell {
    pub id: usize,
    pub vertices: [usize; 3],
    pub barycenter: Option<usize>,
}

/// Representative nodal volume: the union of cells attached to a node.
#[derive(Debug, Clone)]
pub struct NodalVolume {
    pub node_id: usize,
    pub cells: Vec<usize>,
    pub measure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshPattern {
    Structured,
    /// Deterministic interior-node jitter (at most 0.25/n) followed by
    /// Lawson flips to the Delaunay triangulation.
    Perturbed {
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct TriangulationMesh {
    pub nodes: Vec<Node>,
    pub cells: Vec<TriCell>,
    /// Standard node ids on the domain boundary, sorted.
    pub boundary_nodes: Vec<usize>,
    /// Maximum cell diameter (longest edge over all cells).
    pub h: f64,
    n_standard: usize,
    /// Cells incident to each standard node (vertex incidence), in cell order.
    vertex_cells: Vec<Vec<usize>>,
}

pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

impl TriangulationMesh {
    /// Build a mesh from raw vertex coordinates and triangles. Cells given
    /// clockwise are reordered; boundary nodes are inferred from edges with a
    /// single incident cell.
    pub fn from_raw(coords: Vec<Vec2>, tris: Vec<[usize; 3]>) -> Result<Self> {
        let n = coords.len();
        let mut cells = Vec::with_capacity(tris.len());
        for (id, mut vs) in tris.into_iter().enumerate() {
            for &v in &vs {
                if v >= n {
                    return Err(Error::InvalidArgument(format!(
                        "cell {id} references node {v} out of {n}"
                    )));
                }
            }
            let area = signed_area(coords[vs[0]], coords[vs[1]], coords[vs[2]]);
            if area < 0.0 {
                vs.swap(1, 2);
            } else if area == 0.0 {
                return Err(Error::InvalidArgument(format!("cell {id} is degenerate")));
            }
            cells.push(TriCell {
                id,
                vertices: vs,
                barycenter: None,
            });
        }

        // Edge census: a manifold surface mesh has at most 2 cells per edge.
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in &cells {
            for k in 0..3 {
                let a = cell.vertices[k];
                let b = cell.vertices[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        let mut boundary = Vec::new();
        for (&(a, b), &count) in &edge_count {
            if count > 2 {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) is shared by {count} cells"
                )));
            }
            if count == 1 {
                boundary.push(a);
                boundary.push(b);
            }
        }
        boundary.sort_unstable();
        boundary.dedup();

        let mut h: f64 = 0.0;
        for cell in &cells {
            for k in 0..3 {
                let a = coords[cell.vertices[k]];
                let b = coords[cell.vertices[(k + 1) % 3]];
                h = h.max((b - a).norm());
            }
        }

        let mut vertex_cells = vec![Vec::new(); n];
        for cell in &cells {
            for &v in &cell.vertices {
                vertex_cells[v].push(cell.id);
            }
        }

        let nodes = coords
            .into_iter()
            .enumerate()
            .map(|(id, x)| Node {
                id,
                x,
                kind: NodeKind::Standard,
            })
            .collect();

        Ok(TriangulationMesh {
            nodes,
            cells,
            boundary_nodes: boundary,
            h,
            n_standard: n,
            vertex_cells,
        })
    }

    pub fn n_standard(&self) -> usize {
        self.n_standard
    }

    pub fn n_enhanced(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_barycenters(&self) -> bool {
        self.nodes.len() > self.n_standard
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary_nodes.binary_search(&node).is_ok()
    }

    pub fn cell_coords(&self, cell: &TriCell) -> [Vec2; 3] {
        [
            self.nodes[cell.vertices[0]].x,
            self.nodes[cell.vertices[1]].x,
            self.nodes[cell.vertices[2]].x,
        ]
    }

    pub fn cell_area(&self, cell: &TriCell) -> f64 {
        let [a, b, c] = self.cell_coords(cell);
        signed_area(a, b, c)
    }

    pub fn cell_centroid(&self, cell: &TriCell) -> Vec2 {
        let [a, b, c] = self.cell_coords(cell);
        (a + b + c) / 3.0
    }

    pub fn domain_area(&self) -> f64 {
        self.cells.iter().map(|c| self.cell_area(c)).sum()
    }

    /// Cells incident to a standard node.
    pub fn cells_of_vertex(&self, node: usize) -> &[usize] {
        &self.vertex_cells[node]
    }

    /// Append one barycenter node per cell. Barycenter ids follow the
    /// standard ids, so the enhanced ordering is standard-then-barycenter.
    pub fn enhance_with_barycenters(&self) -> Result<TriangulationMesh> {
        if self.has_barycenters() {
            return Err(Error::InvalidState(
                "mesh already carries barycenter nodes".into(),
            ));
        }
        let mut out = self.clone();
        for cell in &mut out.cells {
            let id = out.nodes.len();
            out.nodes.push(Node {
                id,
                x: (self.nodes[cell.vertices[0]].x
                    + self.nodes[cell.vertices[1]].x
                    + self.nodes[cell.vertices[2]].x)
                    / 3.0,
                kind: NodeKind::Barycenter,
            });
            cell.barycenter = Some(id);
        }
        Ok(out)
    }

    /// Nodal volume of a node: vertex-incident cells for a standard node, the
    /// single owning cell for a barycenter node.
    pub fn nodal_volume(&self, node_id: usize) -> Result<NodalVolume> {
        if node_id >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "unknown node id {node_id}"
            )));
        }
        let cells: Vec<usize> = match self.nodes[node_id].kind {
            NodeKind::Standard => self.vertex_cells[node_id].clone(),
            NodeKind::Barycenter => vec![node_id - self.n_standard],
        };
        let measure = cells.iter().map(|&c| self.cell_area(&self.cells[c])).sum();
        Ok(NodalVolume {
            node_id,
            cells,
            measure,
        })
    }
}

/// Unit-square mesh with `n` cells per side, split into 2n^2 triangles.
pub fn generate_square_mesh(n: usize, pattern: MeshPattern) -> Result<TriangulationMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut coords = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            coords.push(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    if let MeshPattern::Perturbed { seed } = pattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = 0.25 / n as f64;
        for j in 1..n {
            for i in 1..n {
                let node = &mut coords[j * (n + 1) + i];
                node.x += rng.random_range(-amp..amp);
                node.y += rng.random_range(-amp..amp);
            }
        }
    }
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * (n + 1) + i;
            let v10 = v00 + 1;
            let v01 = v00 + n + 1;
            let v11 = v01 + 1;
            tris.push([v00, v10, v11]);
            tris.push([v00, v11, v01]);
        }
    }
    if matches!(pattern, MeshPattern::Perturbed { .. }) {
        lawson_flip_to_delaunay(&coords, &mut tris);
    }
    TriangulationMesh::from_raw(coords, tris)
}

/// Polygonal approximation of the unit disk: a hexagon fan refined
/// `levels` times, with boundary-edge midpoints projected onto the circle.
pub fn generate_disk_mesh(levels: usize) -> TriangulationMesh {
    let mut coords = vec![Vec2::new(0.0, 0.0)];
    for k in 0..6 {
        let ang = std::f64::consts::FRAC_PI_3 * k as f64;
        coords.push(Vec2::new(ang.cos(), ang.sin()));
    }
    let mut tris: Vec<[usize; 3]> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();

    for _ in 0..levels {
        // Boundary edges are those on a single cell.
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in tris.iter() {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let mut m = (coords[a] + coords[b]) / 2.0;
                    if count[&key] == 1 {
                        m /= m.norm();
                    }
                    coords.push(m);
                    coords.len() - 1
                });
            }
            next.push([t[0], mid[0], mid[2]]);
            next.push([mid[0], t[1], mid[1]]);
            next.push([mid[2], mid[1], t[2]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        tris = next;
    }
    TriangulationMesh::from_raw(coords, tris).expect("disk construction is always valid")
}

/// Parallelogram with vertices (0,0), (a,0), (a + b cos th, b sin th),
/// (b cos th, b sin th), structured n-by-n split into 2n^2 triangles.
pub fn generate_parallelogram_mesh(
    a: f64,
    b: f64,
    skew_deg: f64,
    n: usize,
) -> Result<TriangulationMesh> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument("side lengths must be positive".into()));
    }
    if !(skew_deg > 0.0 && skew_deg < 90.0) {
        return Err(Error::InvalidArgument(format!(
            "skew angle {skew_deg} deg outside (0, 90)"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let th = skew_deg.to_radians();
    let (ex, ey) = (Vec2::new(a / n as f64, 0.0), Vec2::new(b * th.cos() / n as f64, b * th.sin() / n as f64));
    let mut coords = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            coords.push(ex * i as f64 + ey * j as f64);
        }
    }
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * (n + 1) + i;
            let v10 = v00 + 1;
            let v01 = v00 + n + 1;
            let v11 = v01 + 1;
            tris.push([v00, v10, v11]);
            tris.push([v00, v11, v01]);
        }
    }
    TriangulationMesh::from_raw(coords, tris)
}

/// Read a mesh from `<stem>.node` / `<stem>.ele` text files. `path` may be
/// the stem or either file.
pub fn read_mesh(path: &Path) -> Result<TriangulationMesh> {
    let stem: PathBuf = match path.extension().and_then(|e| e.to_str()) {
        Some("node") | Some("ele") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let node_path = stem.with_extension("node");
    let ele_path = stem.with_extension("ele");

    let coords = parse_node_file(&node_path)?;
    let tris = parse_ele_file(&ele_path, coords.len())?;
    TriangulationMesh::from_raw(coords, tris)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_node_file(path: &Path) -> Result<Vec<Vec2>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty node file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let count: usize = fields
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, hline, "expected header `<count> 2 0 0`"))?;
    let mut coords = vec![None; count];
    for (lno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(format_err(path, lno, "expected `<id> <x> <y>`"));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| format_err(path, lno, "bad node id"))?;
        let x: f64 = fields[1]
            .parse()
            .map_err(|_| format_err(path, lno, "bad x coordinate"))?;
        let y: f64 = fields[2]
            .parse()
            .map_err(|_| format_err(path, lno, "bad y coordinate"))?;
        if id >= count {
            return Err(format_err(path, lno, format!("node id {id} >= count {count}")));
        }
        coords[id] = Some(Vec2::new(x, y));
    }
    coords
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| format_err(path, 0, format!("missing node {i}"))))
        .collect()
}

fn parse_ele_file(path: &Path, n_nodes: usize) -> Result<Vec<[usize; 3]>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty ele file"))?;
    let count: usize = header
        .split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, hline, "expected header `<count> 3 0`"))?;
    let mut tris = vec![None; count];
    for (lno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(format_err(path, lno, "expected `<id> <v1> <v2> <v3>`"));
        }
        let mut vals = [0usize; 4];
        for (k, f) in fields.iter().take(4).enumerate() {
            vals[k] = f
                .parse()
                .map_err(|_| format_err(path, lno, format!("bad integer `{f}`")))?;
        }
        let id = vals[0];
        if id >= count {
            return Err(format_err(path, lno, format!("cell id {id} >= count {count}")));
        }
        for &v in &vals[1..] {
            if v >= n_nodes {
                return Err(format_err(path, lno, format!("vertex {v} out of range")));
            }
        }
        tris[id] = Some([vals[1], vals[2], vals[3]]);
    }
    tris.into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| format_err(path, 0, format!("missing cell {i}"))))
        .collect()
}

/// In-circle predicate: > 0 when `d` lies strictly inside the circumcircle
/// of CCW triangle (a, b, c).
fn incircle(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let (a2, b2, c2) = (ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy);
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

/// Lawson flips until every interior edge is locally Delaunay.
fn lawson_flip_to_delaunay(coords: &[Vec2], tris: &mut Vec<[usize; 3]>) {
    // Normalize orientation first so the incircle sign test is meaningful.
    for t in tris.iter_mut() {
        if signed_area(coords[t[0]], coords[t[1]], coords[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    let scale = coords
        .iter()
        .fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
    let tol = 1e-12 * scale.powi(4).max(f64::MIN_POSITIVE);

    let max_sweeps = 20 * tris.len().max(4);
    for _ in 0..max_sweeps {
        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut flipped = false;
        'sweep: for t1 in 0..tris.len() {
            for k in 0..3 {
                let a = tris[t1][k];
                let b = tris[t1][(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                if let Some(&(t0, k0)) = edge_owner.get(&key) {
                    // opposite vertices
                    let p = tris[t0][(k0 + 2) % 3];
                    let q = tris[t1][(k + 2) % 3];
                    let (ea, eb) = (tris[t0][k0], tris[t0][(k0 + 1) % 3]);
                    if incircle(coords[ea], coords[eb], coords[p], coords[q]) > tol {
                        // flip shared edge (ea, eb) -> (p, q)
                        let new0 = [ea, q, p];
                        let new1 = [eb, p, q];
                        if signed_area(coords[new0[0]], coords[new0[1]], coords[new0[2]]) > 0.0
                            && signed_area(coords[new1[0]], coords[new1[1]], coords[new1[2]]) > 0.0
                        {
                            tris[t0] = new0;
                            tris[t1] = new1;
                            flipped = true;
                            break 'sweep;
                        }
                    }
                } else {
                    edge_owner.insert(key, (t1, k));
                }
            }
        }
        if !flipped {
            break;
        }
    }
}
