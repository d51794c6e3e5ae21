//! Volume-averaged nodal projection tables and global system assembly.
//!
//! The shear strain entering the energy is not the raw gradient: each
//! standard node carries a nodal average over its volume (cells touching the
//! node), and the projected field interpolates those averages with the
//! standard-set basis. Expanding the cell quadrature of the shear blocks
//! shows they factor exactly through the standard-set mass matrix H:
//!
//!   K_ww = P_gx' H P_gx + P_gy' H P_gy,   K_wr = [P_gx' H P_n, P_gy' H P_n],
//!   K_rr = (P_n' H P_n) ⊗ I_2,
//!
//! where P_g / P_n hold the per-node projection rows. Assembly builds those
//! sparse factors once and multiplies them, which is algebraically identical
//! to looping quadrature points but far cheaper; a naive quadrature-loop
//! assembler in the tests pins the identity down numerically.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maxent::{self, BasisEval, MaxentConfig, NodalSpacing};
use crate::mesh::TriangulationMesh;
use crate::problems::{BenchmarkProblem, PlateMaterial};
use crate::quadrature::{
    align_contributors, edge_rule, interior_rule, qc3_correct, InteriorOrder, TriQuadRule,
};
use crate::sparse::{add_scaled, Csr};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    /// 3-point rule with quadratically consistent derivative correction.
    Qc3,
    /// 3-point rule with raw basis derivatives.
    St3,
    /// 6-point rule with raw basis derivatives.
    St6,
}

impl QuadratureScheme {
    pub fn name(&self) -> &'static str {
        match self {
            QuadratureScheme::Qc3 => "qc3",
            QuadratureScheme::St3 => "st3",
            QuadratureScheme::St6 => "st6",
        }
    }
}

/// Basis data aligned to one contributor list at a set of points.
#[derive(Debug, Clone)]
pub struct PointBasis {
    pub contributors: Vec<usize>,
    /// `phi[p][i]`: value of contributor `i` at point `p`.
    pub phi: Vec<Vec<f64>>,
    /// Derivatives at the same points (corrected under Qc3, raw otherwise);
    /// empty when only values are needed.
    pub dx: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
}

fn align_with_gradients(evals: &[BasisEval]) -> PointBasis {
    let mut contributors: Vec<usize> = Vec::new();
    for e in evals {
        contributors.extend_from_slice(&e.contributors);
    }
    contributors.sort_unstable();
    contributors.dedup();
    let n = contributors.len();
    let mut phi = Vec::with_capacity(evals.len());
    let mut dx = Vec::with_capacity(evals.len());
    let mut dy = Vec::with_capacity(evals.len());
    for e in evals {
        let mut vp = vec![0.0; n];
        let mut vx = vec![0.0; n];
        let mut vy = vec![0.0; n];
        for (k, &a) in e.contributors.iter().enumerate() {
            let i = contributors.binary_search(&a).expect("union list");
            vp[i] = e.phi[k];
            vx[i] = e.grad_phi[k].x;
            vy[i] = e.grad_phi[k].y;
        }
        phi.push(vp);
        dx.push(vx);
        dy.push(vy);
    }
    PointBasis {
        contributors,
        phi,
        dx,
        dy,
    }
}

fn values_only(evals: &[BasisEval]) -> PointBasis {
    let mut pb = align_with_gradients(evals);
    pb.dx.clear();
    pb.dy.clear();
    pb
}

/// All quadrature-point basis data one cell needs: stiffness points for the
/// chosen scheme plus a degree-4 rule for loads and error integrals.
#[derive(Debug, Clone)]
pub struct CellQuadData {
    pub cell: usize,
    pub scheme: QuadratureScheme,
    pub interior: TriQuadRule,
    pub st6: TriQuadRule,
    pub std_b: PointBasis,
    pub enh_b: PointBasis,
    pub std_l: PointBasis,
    pub enh_l: PointBasis,
}

/// Evaluate both node-set bases at every quadrature point of every cell.
/// Cells are processed in parallel and collected in id order, so the result
/// does not depend on the worker count.
pub fn build_cell_data(
    mesh: &TriangulationMesh,
    std_spacing: &NodalSpacing,
    enh_spacing: &NodalSpacing,
    config: &MaxentConfig,
    scheme: QuadratureScheme,
) -> Result<Vec<CellQuadData>> {
    if !mesh.has_barycenters() {
        return Err(Error::InvalidMesh(
            "assembly requires an enhanced mesh".into(),
        ));
    }
    let eval_set = |points: &[Vec2], spacing: &NodalSpacing| -> Result<Vec<BasisEval>> {
        points
            .iter()
            .map(|&p| maxent::evaluate_basis(p, mesh, spacing, config))
            .collect()
    };
    mesh.cells
        .par_iter()
        .map(|cell| {
            let verts = mesh.cell_coords(cell);
            let st6 = interior_rule(&verts, InteriorOrder::St6);
            let interior = match scheme {
                QuadratureScheme::St6 => st6.clone(),
                _ => interior_rule(&verts, InteriorOrder::St3),
            };
            let std_i = eval_set(&interior.points, std_spacing)?;
            let enh_i = eval_set(&interior.points, enh_spacing)?;
            let (std_b, enh_b) = match scheme {
                QuadratureScheme::Qc3 => {
                    let edges = edge_rule(&verts);
                    let epts: Vec<Vec2> = edges.points.iter().flatten().copied().collect();
                    let std_e = eval_set(&epts, std_spacing)?;
                    let enh_e = eval_set(&epts, enh_spacing)?;
                    let std_vals = align_contributors(&std_i, &std_e);
                    let enh_vals = align_contributors(&enh_i, &enh_e);
                    let std_c = qc3_correct(cell.id, &interior, &edges, &std_vals)?;
                    let enh_c = qc3_correct(cell.id, &interior, &edges, &enh_vals)?;
                    (
                        PointBasis {
                            contributors: std_c.contributors,
                            phi: std_c.phi,
                            dx: std_c.dx,
                            dy: std_c.dy,
                        },
                        PointBasis {
                            contributors: enh_c.contributors,
                            phi: enh_c.phi,
                            dx: enh_c.dx,
                            dy: enh_c.dy,
                        },
                    )
                }
                _ => (align_with_gradients(&std_i), align_with_gradients(&enh_i)),
            };
            let (std_l, enh_l) = if scheme == QuadratureScheme::St6 {
                (values_only(&std_i), values_only(&enh_i))
            } else {
                let std_6 = eval_set(&st6.points, std_spacing)?;
                let enh_6 = eval_set(&st6.points, enh_spacing)?;
                (values_only(&std_6), values_only(&enh_6))
            };
            Ok(CellQuadData {
                cell: cell.id,
                scheme,
                interior,
                st6,
                std_b,
                enh_b,
                std_l,
                enh_l,
            })
        })
        .collect()
}

/// Volume-averaged nodal projection rows for every standard node.
#[derive(Debug, Clone)]
pub struct ProjectionTable {
    /// V_c: integral of phi_c over the nodal volume.
    pub volumes: Vec<f64>,
    /// Gradient rows: pi_c[G_a] as (standard node, 2-vector).
    pub g_rows: Vec<Vec<(usize, Vec2)>>,
    /// Value rows: pi_c[N_a] as (enhanced node, scalar); the 2x2 block is
    /// that scalar times the identity.
    pub n_rows: Vec<Vec<(usize, f64)>>,
}

pub fn build_projection_tables(
    mesh: &TriangulationMesh,
    cells: &[CellQuadData],
) -> Result<ProjectionTable> {
    let n_std = mesh.n_standard();
    let mut volumes = vec![0.0; n_std];
    let mut g_maps: Vec<HashMap<usize, Vec2>> = vec![HashMap::new(); n_std];
    let mut n_maps: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n_std];

    for data in cells {
        let cell = &mesh.cells[data.cell];
        for &c in &cell.vertices {
            let ic = match data.std_b.contributors.binary_search(&c) {
                Ok(i) => i,
                Err(_) => continue, // vertex outside its own cell support cannot happen
            };
            for (h, w) in data.interior.weights.iter().enumerate() {
                let phic = data.std_b.phi[h][ic];
                if phic == 0.0 {
                    continue;
                }
                let wc = w * phic;
                volumes[c] += wc;
                for (ia, &a) in data.std_b.contributors.iter().enumerate() {
                    let g = Vec2::new(data.std_b.dx[h][ia], data.std_b.dy[h][ia]);
                    if g.x != 0.0 || g.y != 0.0 {
                        *g_maps[c].entry(a).or_insert_with(Vec2::zeros) += wc * g;
                    }
                }
                for (ib, &b) in data.enh_b.contributors.iter().enumerate() {
                    let v = data.enh_b.phi[h][ib];
                    if v != 0.0 {
                        *n_maps[c].entry(b).or_insert(0.0) += wc * v;
                    }
                }
            }
        }
    }

    let mut g_rows = Vec::with_capacity(n_std);
    let mut n_rows = Vec::with_capacity(n_std);
    for c in 0..n_std {
        if !(volumes[c] > 0.0) {
            return Err(Error::ProjectionDegeneracy { node: c });
        }
        let vc = volumes[c];
        let mut g: Vec<(usize, Vec2)> = g_maps[c].drain().map(|(a, v)| (a, v / vc)).collect();
        g.sort_by_key(|&(a, _)| a);
        let mut n: Vec<(usize, f64)> = n_maps[c].drain().map(|(a, v)| (a, v / vc)).collect();
        n.sort_by_key(|&(a, _)| a);
        g_rows.push(g);
        n_rows.push(n);
    }
    Ok(ProjectionTable {
        volumes,
        g_rows,
        n_rows,
    })
}

/// Global unknown layout: one deflection per standard node followed by two
/// rotations per enhanced node.
#[derive(Debug, Clone, Copy)]
pub struct DofMap {
    pub n_standard: usize,
    pub n_enhanced: usize,
}

impl DofMap {
    pub fn total(&self) -> usize {
        self.n_standard + 2 * self.n_enhanced
    }
    pub fn w_dof(&self, node: usize) -> usize {
        node
    }
    pub fn r_dof(&self, node: usize, comp: usize) -> usize {
        self.n_standard + 2 * node + comp
    }
}

/// Nodal solution fields.
#[derive(Debug, Clone)]
pub struct Solution {
    pub w: Vec<f64>,
    pub r: Vec<Vec2>,
}

impl Solution {
    pub fn from_full(dofs: &DofMap, full: &[f64]) -> Solution {
        let w = full[..dofs.n_standard].to_vec();
        let r = (0..dofs.n_enhanced)
            .map(|a| Vec2::new(full[dofs.r_dof(a, 0)], full[dofs.r_dof(a, 1)]))
            .collect();
        Solution { w, r }
    }
}

/// Assembled block system. The shear part scales with lambda t^-2 while the
/// bending part is thickness-independent, so both are kept separately and
/// combined on demand; re-assembly across a thickness sweep is then free.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub dof_map: DofMap,
    pub shear_upper: Csr,
    pub bending_upper: Csr,
    pub f: Vec<f64>,
    pub lambda_t: f64,
}

impl GlobalSystem {
    /// Upper triangle of the symmetric stiffness matrix.
    pub fn matrix_upper(&self) -> Csr {
        add_scaled(self.lambda_t, &self.shear_upper, 1.0, &self.bending_upper)
    }

    /// Same mesh and tables, different thickness.
    pub fn with_material(&self, material: &PlateMaterial) -> GlobalSystem {
        GlobalSystem {
            lambda_t: material.lambda_t(),
            ..self.clone()
        }
    }

    /// Shear energy of a nodal field (the lambda t^-2-scaled quadratic form
    /// of the projected shear strain).
    pub fn shear_energy(&self, full: &[f64]) -> f64 {
        let mut y = vec![0.0; full.len()];
        self.shear_upper.symv_upper(full, self.lambda_t, &mut y);
        full.iter().zip(&y).map(|(a, b)| a * b).sum()
    }
}

fn row_maps_to_csr(n_cols: usize, maps: Vec<HashMap<u32, f64>>) -> Csr {
    let rows = maps
        .into_iter()
        .map(|m| {
            let mut row: Vec<(u32, f64)> = m.into_iter().collect();
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    Csr::from_rows(n_cols, rows)
}

/// Assemble the global system for a problem and material.
pub fn assemble_system(
    mesh: &TriangulationMesh,
    material: &PlateMaterial,
    problem: &BenchmarkProblem,
    tables: &ProjectionTable,
    cells: &[CellQuadData],
    scheme: QuadratureScheme,
) -> Result<GlobalSystem> {
    if !mesh.has_barycenters() {
        return Err(Error::InvalidMesh(
            "assembly requires an enhanced mesh".into(),
        ));
    }
    let n_std = mesh.n_standard();
    let n_enh = mesh.n_enhanced();
    if tables.volumes.len() != n_std {
        return Err(Error::InvalidState(
            "projection tables do not match the mesh".into(),
        ));
    }
    if cells.iter().any(|c| c.scheme != scheme) {
        return Err(Error::InvalidState(
            "cell data was built for a different quadrature scheme".into(),
        ));
    }
    let dof_map = DofMap {
        n_standard: n_std,
        n_enhanced: n_enh,
    };

    // Standard-set mass matrix over the stiffness quadrature points.
    let mut h_maps: Vec<HashMap<u32, f64>> = vec![HashMap::new(); n_std];
    for data in cells {
        let nb = &data.std_b;
        for (h, w) in data.interior.weights.iter().enumerate() {
            let phis = &nb.phi[h];
            for (i, &ci) in nb.contributors.iter().enumerate() {
                let pi = phis[i];
                if pi == 0.0 {
                    continue;
                }
                let row = &mut h_maps[ci];
                for (j, &cj) in nb.contributors.iter().enumerate() {
                    let pj = phis[j];
                    if pj != 0.0 {
                        *row.entry(cj as u32).or_insert(0.0) += w * pi * pj;
                    }
                }
            }
        }
    }
    let h_mat = row_maps_to_csr(n_std, h_maps);

    // Projection factors.
    let gx = Csr::from_rows(
        n_std,
        tables
            .g_rows
            .iter()
            .map(|r| r.iter().map(|&(a, v)| (a as u32, v.x)).collect())
            .collect(),
    );
    let gy = Csr::from_rows(
        n_std,
        tables
            .g_rows
            .iter()
            .map(|r| r.iter().map(|&(a, v)| (a as u32, v.y)).collect())
            .collect(),
    );
    let pn = Csr::from_rows(
        n_enh,
        tables
            .n_rows
            .iter()
            .map(|r| r.iter().map(|&(a, v)| (a as u32, v)).collect())
            .collect(),
    );

    let gxt = gx.transpose();
    let gyt = gy.transpose();
    let h_gx = h_mat.matmul(&gx);
    let h_gy = h_mat.matmul(&gy);
    let h_pn = h_mat.matmul(&pn);
    let s_ww = add_scaled(1.0, &gxt.matmul(&h_gx), 1.0, &gyt.matmul(&h_gy));
    let s_wr_x = gxt.matmul(&h_pn);
    let s_wr_y = gyt.matmul(&h_pn);
    let s_rr = pn.transpose().matmul(&h_pn);

    // Scatter the blocks into the global upper triangle.
    let total = dof_map.total();
    let mut shear_rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); total];
    for (a, b, v) in s_ww.triplets() {
        if b >= a {
            shear_rows[a].push((b as u32, v));
        }
    }
    for (a, b, v) in s_wr_x.triplets() {
        shear_rows[a].push((dof_map.r_dof(b, 0) as u32, -v));
    }
    for (a, b, v) in s_wr_y.triplets() {
        shear_rows[a].push((dof_map.r_dof(b, 1) as u32, -v));
    }
    for (a, b, v) in s_rr.triplets() {
        if b >= a {
            for comp in 0..2 {
                let (i, j) = (dof_map.r_dof(a, comp), dof_map.r_dof(b, comp));
                if j >= i {
                    shear_rows[i].push((j as u32, v));
                }
            }
        }
    }
    let shear_upper = Csr::from_rows(total, shear_rows);

    // Bending block: plain cell quadrature of B' C B over the enhanced set.
    let c_mat = &material.c;
    let mut k_ee: Vec<HashMap<u32, f64>> = vec![HashMap::new(); total];
    for data in cells {
        let nb = &data.enh_b;
        let n = nb.contributors.len();
        for (h, w) in data.interior.weights.iter().enumerate() {
            let dx = &nb.dx[h];
            let dy = &nb.dy[h];
            for i in 0..n {
                let (bix, biy) = (dx[i], dy[i]);
                if bix == 0.0 && biy == 0.0 {
                    continue;
                }
                let a = nb.contributors[i];
                for j in 0..n {
                    let (bjx, bjy) = (dx[j], dy[j]);
                    if bjx == 0.0 && bjy == 0.0 {
                        continue;
                    }
                    let b = nb.contributors[j];
                    // (B_i' C B_j) for B = [[dx,0],[0,dy],[dy,dx]]
                    let k00 = bix * c_mat[(0, 0)] * bjx + biy * c_mat[(2, 2)] * bjy;
                    let k01 = bix * c_mat[(0, 1)] * bjy + biy * c_mat[(2, 2)] * bjx;
                    let k10 = biy * c_mat[(1, 0)] * bjx + bix * c_mat[(2, 2)] * bjy;
                    let k11 = biy * c_mat[(1, 1)] * bjy + bix * c_mat[(2, 2)] * bjx;
                    for (ci, cj, v) in [
                        (0, 0, k00),
                        (0, 1, k01),
                        (1, 0, k10),
                        (1, 1, k11),
                    ] {
                        let gi = dof_map.r_dof(a, ci);
                        let gj = dof_map.r_dof(b, cj);
                        if gj >= gi {
                            *k_ee[gi].entry(gj as u32).or_insert(0.0) += w * v;
                        }
                    }
                }
            }
        }
    }
    let bending_upper = row_maps_to_csr(total, k_ee);

    // Load vector with the degree-4 rule, exact load evaluation at the
    // quadrature points.
    let mut f = vec![0.0; total];
    for data in cells {
        let nb = &data.std_l;
        for (h, (p, w)) in data.st6.points.iter().zip(&data.st6.weights).enumerate() {
            let q = (problem.load)(*p);
            if q == 0.0 {
                continue;
            }
            for (i, &a) in nb.contributors.iter().enumerate() {
                f[dof_map.w_dof(a)] += w * q * nb.phi[h][i];
            }
        }
    }

    Ok(GlobalSystem {
        dof_map,
        shear_upper,
        bending_upper,
        f,
        lambda_t: material.lambda_t(),
    })
}

/// Essential conditions at clamped (or prescribed) boundary nodes: one
/// deflection and two rotations per boundary standard node.
pub fn essential_conditions(
    mesh: &TriangulationMesh,
    dofs: &DofMap,
    problem: &BenchmarkProblem,
) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(3 * mesh.boundary_nodes.len());
    for &b in &mesh.boundary_nodes {
        let (w, r) = problem.essential_data(mesh.nodes[b].x);
        out.push((dofs.w_dof(b), w));
        out.push((dofs.r_dof(b, 0), r.x));
        out.push((dofs.r_dof(b, 1), r.y));
    }
    out.sort_by_key(|&(d, _)| d);
    out
}

/// Volume-averaged nodal scaled shear stress, recovered from the primitive
/// fields through the projection tables.
pub fn recover_nodal_shear(
    solution: &Solution,
    tables: &ProjectionTable,
    material: &PlateMaterial,
) -> Vec<Vec2> {
    let lt = material.lambda_t();
    tables
        .g_rows
        .iter()
        .zip(&tables.n_rows)
        .map(|(grow, nrow)| {
            let mut s = Vec2::zeros();
            for &(a, g) in grow {
                s += g * solution.w[a];
            }
            for &(b, v) in nrow {
                s -= v * solution.r[b];
            }
            lt * s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::{compute_nodal_spacing, NodeSet};
    use crate::mesh::{generate_square_mesh, MeshPattern};
    use crate::problems::{benchmark_material, patch_problem, square_problem};

    fn setup(
        n: usize,
        pattern: MeshPattern,
        scheme: QuadratureScheme,
    ) -> (
        TriangulationMesh,
        Vec<CellQuadData>,
        ProjectionTable,
    ) {
        let mesh = generate_square_mesh(n, pattern)
            .unwrap()
            .enhance_with_barycenters()
            .unwrap();
        let sp_s = compute_nodal_spacing(&mesh, NodeSet::Standard).unwrap();
        let sp_e = compute_nodal_spacing(&mesh, NodeSet::Enhanced).unwrap();
        let config = MaxentConfig::default();
        let cells = build_cell_data(&mesh, &sp_s, &sp_e, &config, scheme).unwrap();
        let tables = build_projection_tables(&mesh, &cells).unwrap();
        (mesh, cells, tables)
    }

    #[test]
    fn projection_reproduces_constants_and_linears() {
        let (mesh, _, tables) = setup(3, MeshPattern::Perturbed { seed: 5 }, QuadratureScheme::Qc3);
        let n_std = mesh.n_standard();
        // constant rotation field r = (1, 0)
        for c in 0..n_std {
            let mut acc = Vec2::zeros();
            for &(_, v) in &tables.n_rows[c] {
                acc += v * Vec2::new(1.0, 0.0);
            }
            assert!((acc - Vec2::new(1.0, 0.0)).norm() < 1e-12, "node {c}");
        }
        // linear deflection w = x has projected gradient (1, 0)
        for c in 0..n_std {
            let mut acc = Vec2::zeros();
            for &(a, g) in &tables.g_rows[c] {
                acc += g * mesh.nodes[a].x.x;
            }
            assert!((acc - Vec2::new(1.0, 0.0)).norm() < 1e-10, "node {c}");
        }
    }

    #[test]
    fn volumes_are_positive_and_bounded() {
        // V_c integrates phi_c over the nodal volume only, so the sum stays
        // strictly below the domain area (the basis tail outside each E_c is
        // dropped) while each volume is positive and bounded by |E_c|.
        let (mesh, _, tables) = setup(3, MeshPattern::Structured, QuadratureScheme::Qc3);
        let area = mesh.domain_area();
        let total: f64 = tables.volumes.iter().sum();
        assert!(total < area);
        assert!(total > 0.25 * area);
        for c in 0..mesh.n_standard() {
            let e_c = mesh.nodal_volume(c).unwrap().measure;
            assert!(tables.volumes[c] > 0.0);
            assert!(tables.volumes[c] < e_c);
        }
    }

    #[test]
    fn zero_load_gives_zero_force() {
        let (mesh, cells, tables) = setup(2, MeshPattern::Structured, QuadratureScheme::Qc3);
        let material = benchmark_material(0.1);
        let problem = patch_problem();
        let sys =
            assemble_system(&mesh, &material, &problem, &tables, &cells, QuadratureScheme::Qc3)
                .unwrap();
        assert!(sys.f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shear_blocks_scale_with_thickness_and_bending_does_not() {
        let (mesh, cells, tables) = setup(2, MeshPattern::Structured, QuadratureScheme::Qc3);
        let problem = square_problem(&benchmark_material(0.1));
        let sys_a = assemble_system(
            &mesh,
            &benchmark_material(0.1),
            &problem,
            &tables,
            &cells,
            QuadratureScheme::Qc3,
        )
        .unwrap();
        let sys_b = sys_a.with_material(&benchmark_material(0.01));
        // thinner by 10x: lambda t^-2 grows by 100x
        let ratio = sys_b.lambda_t / sys_a.lambda_t;
        assert!((ratio - 100.0).abs() < 1e-10);
        assert_eq!(sys_a.bending_upper.values, sys_b.bending_upper.values);
        // K(t_b) - B = ratio * (K(t_a) - B) entrywise
        let ka = sys_a.matrix_upper();
        let kb = sys_b.matrix_upper();
        let shear_from_a = add_scaled(1.0, &ka, -1.0, &sys_a.bending_upper);
        let shear_from_b = add_scaled(1.0, &kb, -1.0, &sys_b.bending_upper);
        let diff = add_scaled(ratio, &shear_from_a, -1.0, &shear_from_b);
        assert!(diff.max_abs() <= 1e-9 * shear_from_b.max_abs());
    }

    /// Naive quadrature-loop assembly of the shear blocks, straight from the
    /// barred-field definition; validates the mass-matrix factorization.
    fn naive_shear_upper(
        mesh: &TriangulationMesh,
        tables: &ProjectionTable,
        cells: &[CellQuadData],
        dofs: &DofMap,
    ) -> Csr {
        let total = dofs.total();
        let mut rows: Vec<HashMap<u32, f64>> = vec![HashMap::new(); total];
        for data in cells {
            let nb = &data.std_b;
            for (h, w) in data.interior.weights.iter().enumerate() {
                // barred gradient rows and barred value rows at this point
                let mut gbar: HashMap<usize, Vec2> = HashMap::new();
                let mut nbar: HashMap<usize, f64> = HashMap::new();
                for (ic, &c) in nb.contributors.iter().enumerate() {
                    let phic = nb.phi[h][ic];
                    if phic == 0.0 || c >= mesh.n_standard() {
                        continue;
                    }
                    for &(a, g) in &tables.g_rows[c] {
                        *gbar.entry(a).or_insert_with(Vec2::zeros) += phic * g;
                    }
                    for &(b, v) in &tables.n_rows[c] {
                        *nbar.entry(b).or_insert(0.0) += phic * v;
                    }
                }
                let mut glist: Vec<(usize, Vec2)> = gbar.into_iter().collect();
                glist.sort_by_key(|&(a, _)| a);
                let mut nlist: Vec<(usize, f64)> = nbar.into_iter().collect();
                nlist.sort_by_key(|&(a, _)| a);
                for &(a, ga) in &glist {
                    for &(b, gb) in &glist {
                        let (i, j) = (dofs.w_dof(a), dofs.w_dof(b));
                        if j >= i {
                            *rows[i].entry(j as u32).or_insert(0.0) += w * ga.dot(&gb);
                        }
                    }
                    for &(b, vb) in &nlist {
                        for comp in 0..2 {
                            let (i, j) = (dofs.w_dof(a), dofs.r_dof(b, comp));
                            *rows[i].entry(j as u32).or_insert(0.0) -= w * ga[comp] * vb;
                        }
                    }
                }
                for &(a, va) in &nlist {
                    for &(b, vb) in &nlist {
                        for comp in 0..2 {
                            let (i, j) = (dofs.r_dof(a, comp), dofs.r_dof(b, comp));
                            if j >= i {
                                *rows[i].entry(j as u32).or_insert(0.0) += w * va * vb;
                            }
                        }
                    }
                }
            }
        }
        row_maps_to_csr(total, rows)
    }

    #[test]
    fn factored_assembly_matches_naive_quadrature_loop() {
        let (mesh, cells, tables) = setup(2, MeshPattern::Perturbed { seed: 2 }, QuadratureScheme::Qc3);
        let material = benchmark_material(0.1);
        let problem = patch_problem();
        let sys =
            assemble_system(&mesh, &material, &problem, &tables, &cells, QuadratureScheme::Qc3)
                .unwrap();
        let naive = naive_shear_upper(&mesh, &tables, &cells, &sys.dof_map);
        let scale = naive.max_abs();
        // same pattern and values to roundoff
        let diff = add_scaled(1.0, &sys.shear_upper, -1.0, &naive);
        assert!(
            diff.max_abs() <= 1e-12 * scale,
            "max deviation {:.3e} vs scale {scale:.3e}",
            diff.max_abs()
        );
    }

    #[test]
    fn kirchhoff_mode_has_no_shear_energy() {
        // nodal interpolant of the zero-shear patch solution
        let (mesh, cells, tables) = setup(3, MeshPattern::Perturbed { seed: 9 }, QuadratureScheme::Qc3);
        let material = benchmark_material(0.001);
        let problem = patch_problem();
        let sys =
            assemble_system(&mesh, &material, &problem, &tables, &cells, QuadratureScheme::Qc3)
                .unwrap();
        let mut full = vec![0.0; sys.dof_map.total()];
        for a in 0..mesh.n_standard() {
            full[sys.dof_map.w_dof(a)] = 1.0 + mesh.nodes[a].x.x + mesh.nodes[a].x.y;
        }
        for a in 0..mesh.n_enhanced() {
            full[sys.dof_map.r_dof(a, 0)] = 1.0;
            full[sys.dof_map.r_dof(a, 1)] = 1.0;
        }
        let energy = sys.shear_energy(&full);
        let bound = 1e-16 * material.lambda_t() * mesh.domain_area();
        assert!(energy.abs() <= bound, "shear energy {energy:.3e} > {bound:.3e}");
    }
}
