//! Error norms, convergence-rate fitting and field sampling.

use crate::error::{Error, Result};
use crate::maxent::{self, MaxentConfig, NodalSpacing};
use crate::mesh::TriangulationMesh;
use crate::problems::{BenchmarkProblem, PlateMaterial};
use crate::vanp::{recover_nodal_shear, CellQuadData, ProjectionTable, Solution};
use crate::Vec2;

/// Relative error norms of one solve.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub h: f64,
    /// Relative L2 norm over (w, r_x, r_y).
    pub rel_l2: f64,
    /// Relative H1 seminorm over the six first derivatives.
    pub rel_h1: f64,
    /// Relative nodal L2 error of the recovered shear stress, when an exact
    /// shear field exists and is not identically zero.
    pub rel_s_nodal: Option<f64>,
    pub dofs: usize,
    pub runtime_s: f64,
}

/// Error rows across refinements plus fitted rates.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ErrorReport>,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub rate_s: Option<f64>,
}

impl ConvergenceTable {
    pub fn from_rows(rows: Vec<ErrorReport>) -> ConvergenceTable {
        let pick = |f: &dyn Fn(&ErrorReport) -> Option<f64>| -> Option<f64> {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| f(r).map(|e| (r.h, e)))
                .collect();
            if pts.len() >= 2 && pts.iter().all(|&(h, e)| h > 0.0 && e > 0.0) {
                fit_rate(&pts).ok()
            } else {
                None
            }
        };
        let rate_l2 = pick(&|r| Some(r.rel_l2));
        let rate_h1 = pick(&|r| Some(r.rel_h1));
        let rate_s = pick(&|r| r.rel_s_nodal);
        ConvergenceTable {
            rows,
            rate_l2,
            rate_h1,
            rate_s,
        }
    }
}

/// Least-squares slope of log(error) against log(h).
pub fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "rate fit needs at least two points".into(),
        ));
    }
    if points.iter().any(|&(h, e)| h <= 0.0 || e <= 0.0) {
        return Err(Error::InvalidArgument(
            "rate fit needs positive sizes and errors".into(),
        ));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, e) in points {
        let (x, y) = (h.ln(), e.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Integrate the displayed norm quotients over the mesh.
///
/// L2 terms use the degree-4 rule; derivative terms are evaluated at the
/// stiffness quadrature points with the same derivative values the stiffness
/// used (corrected under the 3-point consistent scheme, raw otherwise).
pub fn compute_error_norms(
    solution: &Solution,
    problem: &BenchmarkProblem,
    mesh: &TriangulationMesh,
    cells: &[CellQuadData],
    tables: &ProjectionTable,
    material: &PlateMaterial,
    runtime_s: f64,
) -> Result<ErrorReport> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::UnsupportedProblem(problem.kind.name().into()))?;

    let mut num_l2 = 0.0;
    let mut den_l2 = 0.0;
    let mut num_h1 = 0.0;
    let mut den_h1 = 0.0;
    for data in cells {
        // L2 part on the degree-4 points
        for (h, (&w, p)) in data.st6.weights.iter().zip(&data.st6.points).enumerate() {
            let mut wh = 0.0;
            for (i, &a) in data.std_l.contributors.iter().enumerate() {
                wh += data.std_l.phi[h][i] * solution.w[a];
            }
            let mut rh = Vec2::zeros();
            for (i, &a) in data.enh_l.contributors.iter().enumerate() {
                rh += data.enh_l.phi[h][i] * solution.r[a];
            }
            let we = (exact.w)(*p);
            let re = (exact.r)(*p);
            num_l2 += w * ((wh - we).powi(2) + (rh - re).norm_squared());
            den_l2 += w * (we * we + re.norm_squared());
        }
        // H1 seminorm at the stiffness points
        for (h, (&w, p)) in data
            .interior
            .weights
            .iter()
            .zip(&data.interior.points)
            .enumerate()
        {
            let mut gwh = Vec2::zeros();
            for (i, &a) in data.std_b.contributors.iter().enumerate() {
                gwh += Vec2::new(data.std_b.dx[h][i], data.std_b.dy[h][i]) * solution.w[a];
            }
            let mut grh = nalgebra::Matrix2::<f64>::zeros();
            for (i, &a) in data.enh_b.contributors.iter().enumerate() {
                let g = Vec2::new(data.enh_b.dx[h][i], data.enh_b.dy[h][i]);
                grh[(0, 0)] += g.x * solution.r[a].x;
                grh[(0, 1)] += g.y * solution.r[a].x;
                grh[(1, 0)] += g.x * solution.r[a].y;
                grh[(1, 1)] += g.y * solution.r[a].y;
            }
            let gwe = (exact.grad_w)(*p);
            let gre = (exact.grad_r)(*p);
            num_h1 += w * ((gwh - gwe).norm_squared() + (grh - gre).norm_squared());
            den_h1 += w * (gwe.norm_squared() + gre.norm_squared());
        }
    }

    // nodal shear error over standard nodes
    let s_h = recover_nodal_shear(solution, tables, material);
    let mut num_s = 0.0;
    let mut den_s = 0.0;
    for a in 0..mesh.n_standard() {
        let se = (exact.s)(mesh.nodes[a].x);
        num_s += (s_h[a] - se).norm_squared();
        den_s += se.norm_squared();
    }
    let rel_s_nodal = if den_s > 0.0 {
        Some((num_s / den_s).sqrt())
    } else {
        None
    };

    Ok(ErrorReport {
        h: mesh.h,
        rel_l2: (num_l2 / den_l2).sqrt(),
        rel_h1: (num_h1 / den_h1).sqrt(),
        rel_s_nodal,
        dofs: mesh.n_standard() + 2 * mesh.n_enhanced(),
        runtime_s,
    })
}

/// Sampled fields at one probe point.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub point: Vec2,
    pub w: f64,
    pub r: Vec2,
    pub s: Vec2,
}

/// Evaluate the solved fields at arbitrary points inside the domain. The
/// shear field interpolates the recovered nodal values with the standard-set
/// basis.
pub fn sample_field(
    solution: &Solution,
    mesh: &TriangulationMesh,
    std_spacing: &NodalSpacing,
    enh_spacing: &NodalSpacing,
    config: &MaxentConfig,
    tables: &ProjectionTable,
    material: &PlateMaterial,
    points: &[Vec2],
) -> Result<Vec<FieldSample>> {
    let s_nodes = recover_nodal_shear(solution, tables, material);
    let inside = |x: Vec2| {
        mesh.cells.iter().any(|cell| {
            let [a, b, c] = mesh.cell_coords(cell);
            let tol = -1e-12 * mesh.h * mesh.h;
            crate::mesh::signed_area(a, b, x) >= tol
                && crate::mesh::signed_area(b, c, x) >= tol
                && crate::mesh::signed_area(c, a, x) >= tol
        })
    };
    points
        .iter()
        .map(|&x| {
            if !inside(x) {
                return Err(Error::OutOfDomain { x: x.x, y: x.y });
            }
            let std_eval = maxent::evaluate_basis(x, mesh, std_spacing, config)?;
            let enh_eval = maxent::evaluate_basis(x, mesh, enh_spacing, config)?;
            let mut w = 0.0;
            let mut s = Vec2::zeros();
            for (&a, &p) in std_eval.contributors.iter().zip(&std_eval.phi) {
                w += p * solution.w[a];
                s += p * s_nodes[a];
            }
            let mut r = Vec2::zeros();
            for (&a, &p) in enh_eval.contributors.iter().zip(&enh_eval.phi) {
                r += p * solution.r[a];
            }
            Ok(FieldSample { point: x, w, r, s })
        })
        .collect()
}

/// Consistent-mass shear recovery: solves H s = lambda t^-2 b instead of
/// lumping H by row sums. Used as a reference route for the lumped recovery.
pub fn recover_nodal_shear_consistent(
    solution: &Solution,
    mesh: &TriangulationMesh,
    cells: &[CellQuadData],
    material: &PlateMaterial,
) -> Result<Vec<Vec2>> {
    use crate::sparse::Csr;
    use std::collections::HashMap;

    let n_std = mesh.n_standard();
    let mut h_maps: Vec<HashMap<u32, f64>> = vec![HashMap::new(); n_std];
    let mut bx = vec![0.0; n_std];
    let mut by = vec![0.0; n_std];
    for data in cells {
        let nb = &data.std_b;
        for (h, w) in data.interior.weights.iter().enumerate() {
            // discrete shear strain at the point
            let mut gw = Vec2::zeros();
            for (i, &a) in nb.contributors.iter().enumerate() {
                gw += Vec2::new(nb.dx[h][i], nb.dy[h][i]) * solution.w[a];
            }
            let mut rh = Vec2::zeros();
            for (i, &a) in data.enh_b.contributors.iter().enumerate() {
                rh += data.enh_b.phi[h][i] * solution.r[a];
            }
            let strain = gw - rh;
            for (i, &ci) in nb.contributors.iter().enumerate() {
                let pi = nb.phi[h][i];
                if pi == 0.0 {
                    continue;
                }
                bx[ci] += w * pi * strain.x;
                by[ci] += w * pi * strain.y;
                let row = &mut h_maps[ci];
                for (j, &cj) in nb.contributors.iter().enumerate() {
                    let pj = nb.phi[h][j];
                    if pj != 0.0 {
                        *row.entry(cj as u32).or_insert(0.0) += w * pi * pj;
                    }
                }
            }
        }
    }
    let rows = h_maps
        .into_iter()
        .map(|m| {
            let mut row: Vec<(u32, f64)> = m.into_iter().collect();
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    let h_full = Csr::from_rows(n_std, rows);
    let h_upper = h_full.upper_triangle();
    let red_x = crate::solve::apply_dirichlet(&h_upper, &bx, &[])?;
    let red_y = crate::solve::apply_dirichlet(&h_upper, &by, &[])?;
    let sx = crate::solve::solve_spd(&red_x)?;
    let sy = crate::solve::solve_spd(&red_y)?;
    let lt = material.lambda_t();
    Ok((0..n_std)
        .map(|i| lt * Vec2::new(sx[i], sy[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_rate_exact_cases() {
        let slope = fit_rate(&[(1.0, 1.0), (0.5, 0.25), (0.25, 0.0625)]).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        let slope = fit_rate(&[(1.0, 1.0), (0.5, 0.5)]).unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_matches_normal_equations() {
        // independent oracle: explicit normal-equations solve on random-ish data
        let pts: Vec<(f64, f64)> = (1..=6)
            .map(|i| {
                let h = 1.0 / i as f64;
                let e = 3.0 * h.powf(1.7) * (1.0 + 0.05 * (i as f64).sin());
                (h, e)
            })
            .collect();
        let slope = fit_rate(&pts).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let xb = xs.iter().sum::<f64>() / xs.len() as f64;
        let yb = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
        let den: f64 = xs.iter().map(|x| (x - xb) * (x - xb)).sum();
        assert!((slope - num / den).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_rejects_bad_input() {
        assert!(fit_rate(&[(1.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (0.5, -0.1)]).is_err());
    }
}
