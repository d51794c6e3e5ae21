//! Maximum-entropy basis functions over a node set.
//!
//! Basis values at a point come from a small convex dual problem: two
//! Lagrange multipliers enforce the linear reproducing conditions, found by a
//! damped Newton iteration on the gradient of the log partition function.
//! Spatial gradients are the exact total derivatives of the computed basis,
//! including the sensitivity of the converged multipliers to the evaluation
//! point and the node-to-node variation of the prior widths; for uniform
//! prior widths the extra terms vanish identically.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::mesh::{NodeKind, TriangulationMesh};
use crate::Vec2;

#[derive(Debug, Clone, Copy)]
pub struct MaxentConfig {
    /// Support parameter of the Gaussian prior; larger values shrink the
    /// basis support.
    pub gamma: f64,
    /// Absolute tolerance on the constraint residual, scaled by the local
    /// nodal spacing.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Prior values below this threshold are treated as zero, truncating the
    /// basis support.
    pub prior_cutoff: f64,
}

impl Default for MaxentConfig {
    fn default() -> Self {
        MaxentConfig {
            gamma: 2.0,
            newton_tol: 1e-12,
            newton_max_iter: 100,
            // Support truncation leaks into the consistency of the corrected
            // derivatives at the cutoff level; 1e-10 keeps the zero-shear
            // patch modes below the acceptance floor while the support stays
            // compact (radius ~3.4 h at gamma = 2).
            prior_cutoff: 1e-10,
        }
    }
}

impl MaxentConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        MaxentConfig {
            gamma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidArgument("newton_tol must be positive".into()));
        }
        if !(self.prior_cutoff > 0.0 && self.prior_cutoff < 1.0) {
            return Err(Error::InvalidArgument(
                "prior_cutoff must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Truncation radius for a node with spacing `h_a`: the prior drops below
    /// the cutoff beyond `h_a * sqrt(-ln(cutoff) / gamma)`.
    pub fn cutoff_radius(&self, h_a: f64) -> f64 {
        h_a * (-self.prior_cutoff.ln() / self.gamma).sqrt()
    }
}

/// Which node set a basis is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSet {
    Standard,
    Enhanced,
}

/// Per-node characteristic spacing, indexed by node id.
#[derive(Debug, Clone)]
pub struct NodalSpacing {
    pub set: NodeSet,
    pub h: Vec<f64>,
}

/// Basis values and gradients at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub point: Vec2,
    pub contributors: Vec<usize>,
    pub phi: Vec<f64>,
    pub grad_phi: Vec<Vec2>,
    pub lambda: Vec2,
    pub iterations: usize,
}

/// Mean distance from each node to the nodes sharing a cell with it.
pub fn compute_nodal_spacing(mesh: &TriangulationMesh, set: NodeSet) -> Result<NodalSpacing> {
    if set == NodeSet::Enhanced && !mesh.has_barycenters() {
        return Err(Error::InvalidMesh(
            "enhanced spacing requires barycenter nodes".into(),
        ));
    }
    let count = match set {
        NodeSet::Standard => mesh.n_standard(),
        NodeSet::Enhanced => mesh.n_enhanced(),
    };
    let mut h = Vec::with_capacity(count);
    for a in 0..count {
        let xa = mesh.nodes[a].x;
        let mut neighbors: Vec<usize> = Vec::new();
        match mesh.nodes[a].kind {
            NodeKind::Standard => {
                for &cid in mesh.cells_of_vertex(a) {
                    let cell = &mesh.cells[cid];
                    for &v in &cell.vertices {
                        if v != a {
                            neighbors.push(v);
                        }
                    }
                    if set == NodeSet::Enhanced {
                        neighbors.push(cell.barycenter.expect("enhanced mesh"));
                    }
                }
            }
            NodeKind::Barycenter => {
                let cell = &mesh.cells[a - mesh.n_standard()];
                neighbors.extend_from_slice(&cell.vertices);
            }
        }
        neighbors.sort_unstable();
        neighbors.dedup();
        if neighbors.is_empty() {
            return Err(Error::InvalidMesh(format!("node {a} is isolated")));
        }
        let mean = neighbors
            .iter()
            .map(|&b| (mesh.nodes[b].x - xa).norm())
            .sum::<f64>()
            / neighbors.len() as f64;
        h.push(mean);
    }
    Ok(NodalSpacing { set, h })
}

/// Ids of the nodes whose truncated prior is nonzero at `x`, in id order.
pub fn contributing_nodes(
    x: Vec2,
    mesh: &TriangulationMesh,
    spacing: &NodalSpacing,
    config: &MaxentConfig,
) -> Result<Vec<usize>> {
    let logcut = -config.prior_cutoff.ln() / config.gamma;
    let mut ids = Vec::new();
    for (a, &ha) in spacing.h.iter().enumerate() {
        let d2 = (mesh.nodes[a].x - x).norm_squared();
        if d2 <= ha * ha * logcut {
            ids.push(a);
        }
    }
    // The dual problem needs at least three affinely independent nodes.
    let mut spanning = false;
    if ids.len() >= 3 {
        let p0 = mesh.nodes[ids[0]].x;
        if let Some(&i1) = ids[1..]
            .iter()
            .find(|&&i| (mesh.nodes[i].x - p0).norm() > 0.0)
        {
            let d1 = mesh.nodes[i1].x - p0;
            let tol = 1e-12 * d1.norm();
            spanning = ids.iter().any(|&i| {
                let d2 = mesh.nodes[i].x - p0;
                (d1.x * d2.y - d1.y * d2.x).abs() > tol * d2.norm()
            });
        }
    }
    if !spanning {
        return Err(Error::SupportDeficiency {
            x: x.x,
            y: x.y,
            found: ids.len(),
        });
    }
    Ok(ids)
}

struct DualState {
    phi: Vec<f64>,
    residual: Vec2,
}

fn dual_eval(lambda: Vec2, shifted: &[Vec2], beta: &[f64]) -> DualState {
    // log-sum-exp normalization keeps the partition function finite for
    // large multipliers (boundary evaluation pushes lambda hard).
    let mut phi = Vec::with_capacity(shifted.len());
    let mut max_a = f64::NEG_INFINITY;
    for (c, &b) in shifted.iter().zip(beta) {
        let a = -b * c.norm_squared() - lambda.dot(c);
        phi.push(a);
        max_a = max_a.max(a);
    }
    let mut z = 0.0;
    for v in phi.iter_mut() {
        *v = (*v - max_a).exp();
        z += *v;
    }
    let mut residual = Vec2::zeros();
    for (v, c) in phi.iter_mut().zip(shifted) {
        *v /= z;
        residual += *v * c;
    }
    DualState { phi, residual }
}

/// Evaluate maxent basis values and exact gradients at `x`.
pub fn evaluate_basis(
    x: Vec2,
    mesh: &TriangulationMesh,
    spacing: &NodalSpacing,
    config: &MaxentConfig,
) -> Result<BasisEval> {
    config.validate()?;
    let contributors = contributing_nodes(x, mesh, spacing, config)?;
    let n = contributors.len();
    let shifted: Vec<Vec2> = contributors.iter().map(|&a| mesh.nodes[a].x - x).collect();
    let beta: Vec<f64> = contributors
        .iter()
        .map(|&a| config.gamma / (spacing.h[a] * spacing.h[a]))
        .collect();
    let h_bar = contributors
        .iter()
        .map(|&a| spacing.h[a])
        .sum::<f64>()
        / n as f64;
    let tol = config.newton_tol * h_bar;

    let mut lambda = Vec2::zeros();
    let mut state = dual_eval(lambda, &shifted, &beta);
    let mut iterations = 0;
    while state.residual.norm() > tol {
        if iterations >= config.newton_max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: state.residual.norm(),
            });
        }
        let j = dual_hessian(&state.phi, &shifted, state.residual);
        let det = j.determinant();
        if !det.is_finite() || det.abs() < f64::MIN_POSITIVE {
            return Err(Error::DegenerateGeometry { x: x.x, y: x.y });
        }
        // residual = sum(phi c); its lambda-Jacobian is minus the dual
        // Hessian, so the Newton step is +J^{-1} residual
        let step = j.try_inverse().expect("checked determinant") * state.residual;
        // backtracking on the residual norm, halving up to 20 times
        let norm0 = state.residual.norm();
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = dual_eval(lambda + s * step, &shifted, &beta);
            if trial.residual.norm() < norm0 {
                lambda += s * step;
                state = trial;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                residual: norm0,
            });
        }
    }

    let grad_phi = basis_gradients(&state.phi, &shifted, &beta, state.residual, x)?;
    Ok(BasisEval {
        point: x,
        contributors,
        phi: state.phi,
        grad_phi,
        lambda,
        iterations,
    })
}

fn dual_hessian(phi: &[f64], shifted: &[Vec2], residual: Vec2) -> Matrix2<f64> {
    let mut j = Matrix2::zeros();
    for (&p, c) in phi.iter().zip(shifted) {
        j += p * c * c.transpose();
    }
    j - residual * residual.transpose()
}

/// Total spatial derivative of the basis at the converged multipliers.
///
/// With per-node prior widths the derivative picks up correction terms from
/// the width variation across the support; they cancel exactly when all
/// widths match.
fn basis_gradients(
    phi: &[f64],
    shifted: &[Vec2],
    beta: &[f64],
    residual: Vec2,
    x: Vec2,
) -> Result<Vec<Vec2>> {
    let j = dual_hessian(phi, shifted, residual);
    let det = j.determinant();
    if !det.is_finite() || det.abs() < f64::MIN_POSITIVE {
        return Err(Error::DegenerateGeometry { x: x.x, y: x.y });
    }
    let j_inv = j.try_inverse().expect("checked determinant");

    let mut m = Vec2::zeros();
    let mut m_beta = Matrix2::zeros();
    for ((&p, c), &b) in phi.iter().zip(shifted).zip(beta) {
        m += b * p * c;
        m_beta += b * p * c * c.transpose();
    }

    let grads = phi
        .iter()
        .zip(shifted)
        .zip(beta)
        .map(|((&p, c), &b)| {
            let u = j_inv * c;
            p * (u + 2.0 * b * c - 2.0 * m - 2.0 * (m_beta * u))
        })
        .collect();
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_square_mesh, MeshPattern};

    fn unit_square_spacing(n: usize) -> (TriangulationMesh, NodalSpacing) {
        let mesh = generate_square_mesh(n, MeshPattern::Structured).unwrap();
        let spacing = compute_nodal_spacing(&mesh, NodeSet::Standard).unwrap();
        (mesh, spacing)
    }

    #[test]
    fn spacing_on_smallest_square() {
        let (_, spacing) = unit_square_spacing(1);
        // corners 0 and 3 sit on the diagonal: neighbors at 1, 1 and sqrt(2)
        let expect = (2.0 + std::f64::consts::SQRT_2) / 3.0;
        assert!((spacing.h[0] - expect).abs() < 1e-14);
        assert!((spacing.h[3] - expect).abs() < 1e-14);
        // off-diagonal corners see only the one incident cell: two unit edges
        assert!((spacing.h[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn barycenter_spacing_equilateral() {
        let s = 2.0;
        let coords = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(s, 0.0),
            Vec2::new(s / 2.0, s * 3.0f64.sqrt() / 2.0),
        ];
        let mesh = TriangulationMesh::from_raw(coords, vec![[0, 1, 2]]).unwrap();
        let mesh = mesh.enhance_with_barycenters().unwrap();
        let spacing = compute_nodal_spacing(&mesh, NodeSet::Enhanced).unwrap();
        assert!((spacing.h[3] - s / 3.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn spacing_halves_under_refinement() {
        let (mesh_c, sp_c) = unit_square_spacing(2);
        let (mesh_f, sp_f) = unit_square_spacing(4);
        // compare at the shared interior point (0.5, 0.5)
        let find = |mesh: &TriangulationMesh| {
            (0..mesh.n_standard())
                .find(|&i| (mesh.nodes[i].x - Vec2::new(0.5, 0.5)).norm() < 1e-12)
                .unwrap()
        };
        let hc = sp_c.h[find(&mesh_c)];
        let hf = sp_f.h[find(&mesh_f)];
        assert!((hf - hc / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cutoff_radius_closed_form() {
        let config = MaxentConfig {
            gamma: 2.0,
            prior_cutoff: 1e-8,
            ..Default::default()
        };
        let expect = (8.0 * 10.0f64.ln() / 2.0).sqrt();
        assert!((config.cutoff_radius(1.0) - expect).abs() < 1e-12);
        assert!((expect - 3.0349).abs() < 1e-3);
    }

    #[test]
    fn contributors_include_own_node_and_shrink_with_gamma() {
        let (mesh, spacing) = unit_square_spacing(4);
        let x = mesh.nodes[12].x;
        for gamma in [1.5, 2.0, 3.0] {
            let ids =
                contributing_nodes(x, &mesh, &spacing, &MaxentConfig::with_gamma(gamma)).unwrap();
            assert!(ids.contains(&12));
        }
        let wide =
            contributing_nodes(x, &mesh, &spacing, &MaxentConfig::with_gamma(1.5)).unwrap();
        let narrow =
            contributing_nodes(x, &mesh, &spacing, &MaxentConfig::with_gamma(3.0)).unwrap();
        assert!(narrow.iter().all(|i| wide.contains(i)));
        assert!(narrow.len() <= wide.len());
    }

    #[test]
    fn support_deficiency_detected() {
        let (mesh, spacing) = unit_square_spacing(4);
        let config = MaxentConfig {
            prior_cutoff: 0.999_999,
            ..Default::default()
        };
        let x = Vec2::new(0.51, 0.515);
        assert!(matches!(
            contributing_nodes(x, &mesh, &spacing, &config),
            Err(Error::SupportDeficiency { .. })
        ));
    }

    #[test]
    fn partition_of_unity_and_linear_reproduction() {
        let (mesh, spacing) = unit_square_spacing(4);
        let config = MaxentConfig::default();
        for &(px, py) in &[(0.3, 0.4), (0.11, 0.87), (0.5, 0.5), (0.99, 0.01)] {
            let x = Vec2::new(px, py);
            let eval = evaluate_basis(x, &mesh, &spacing, &config).unwrap();
            let sum: f64 = eval.phi.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let mut rep = Vec2::zeros();
            for (&p, &a) in eval.phi.iter().zip(&eval.contributors) {
                rep += p * mesh.nodes[a].x;
            }
            assert!((rep - x).norm() < 1e-10 * mesh.h);
            assert!(eval.phi.iter().all(|&p| p >= -1e-14));
        }
    }

    #[test]
    fn hull_vertex_gives_indicator() {
        let (mesh, spacing) = unit_square_spacing(3);
        let config = MaxentConfig::default();
        let corner = 0;
        let eval = evaluate_basis(mesh.nodes[corner].x, &mesh, &spacing, &config).unwrap();
        for (&p, &a) in eval.phi.iter().zip(&eval.contributors) {
            let expect = if a == corner { 1.0 } else { 0.0 };
            assert!((p - expect).abs() < 1e-12, "phi[{a}] = {p}");
        }
    }

    #[test]
    fn gradient_consistency() {
        let (mesh, spacing) = unit_square_spacing(5);
        let config = MaxentConfig::default();
        for &(px, py) in &[(0.31, 0.42), (0.05, 0.93), (0.64, 0.17)] {
            let eval = evaluate_basis(Vec2::new(px, py), &mesh, &spacing, &config).unwrap();
            let mut sum_g = Vec2::zeros();
            let mut moment = Matrix2::zeros();
            for (g, &a) in eval.grad_phi.iter().zip(&eval.contributors) {
                sum_g += g;
                moment += g * mesh.nodes[a].x.transpose();
            }
            assert!(sum_g.norm() < 1e-8 / mesh.h);
            assert!((moment - Matrix2::identity()).norm() < 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // includes the enhanced set, whose spacing varies strongly
        let mesh = generate_square_mesh(3, MeshPattern::Perturbed { seed: 11 })
            .unwrap()
            .enhance_with_barycenters()
            .unwrap();
        let spacing = compute_nodal_spacing(&mesh, NodeSet::Enhanced).unwrap();
        let config = MaxentConfig::default();
        let step = 1e-6 * mesh.h;
        let mut rng_pts = Vec::new();
        // deterministic scattered probes, strictly interior
        for i in 0..20 {
            let t = i as f64 / 20.0;
            rng_pts.push(Vec2::new(
                0.08 + 0.84 * ((5.0 * t + 0.13 * (i as f64).sin()) % 1.0),
                0.08 + 0.84 * ((3.0 * t * t + 0.5) % 1.0),
            ));
        }
        let mut worst: f64 = 0.0;
        for &x in &rng_pts {
            let eval = evaluate_basis(x, &mesh, &spacing, &config).unwrap();
            let xp = evaluate_basis(x + Vec2::new(step, 0.0), &mesh, &spacing, &config).unwrap();
            let xm = evaluate_basis(x - Vec2::new(step, 0.0), &mesh, &spacing, &config).unwrap();
            let yp = evaluate_basis(x + Vec2::new(0.0, step), &mesh, &spacing, &config).unwrap();
            let ym = evaluate_basis(x - Vec2::new(0.0, step), &mesh, &spacing, &config).unwrap();
            for (k, &a) in eval.contributors.iter().enumerate() {
                let get = |e: &BasisEval| {
                    e.contributors
                        .iter()
                        .position(|&b| b == a)
                        .map(|i| e.phi[i])
                        .unwrap_or(0.0)
                };
                let fd = Vec2::new(
                    (get(&xp) - get(&xm)) / (2.0 * step),
                    (get(&yp) - get(&ym)) / (2.0 * step),
                );
                worst = worst.max((eval.grad_phi[k] - fd).norm());
            }
        }
        assert!(worst < 1e-5, "max gradient defect {worst:.3e}");
    }

    #[test]
    fn contributor_count_non_increasing_in_gamma() {
        let (mesh, spacing) = unit_square_spacing(6);
        let x = Vec2::new(0.47, 0.53);
        let mut last = usize::MAX;
        for gamma in [1.5, 2.0, 3.0] {
            let eval =
                evaluate_basis(x, &mesh, &spacing, &MaxentConfig::with_gamma(gamma)).unwrap();
            assert!(eval.contributors.len() <= last);
            last = eval.contributors.len();
        }
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let (mesh, spacing) = unit_square_spacing(4);
        let config = MaxentConfig::default();
        let x = Vec2::new(0.371, 0.642);
        let a = evaluate_basis(x, &mesh, &spacing, &config).unwrap();
        let b = evaluate_basis(x, &mesh, &spacing, &config).unwrap();
        assert_eq!(a, b);
    }
}
