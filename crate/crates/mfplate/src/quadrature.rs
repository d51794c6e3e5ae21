//! Triangle quadrature rules and the quadratically consistent derivative
//! correction.
//!
//! The corrected scheme replaces basis derivatives at the three interior
//! Gauss points by the solution of a per-cell 3x3 system built from discrete
//! divergence constraints: cell integrals of phi_{a,j} * f for linear f must
//! match their boundary-minus-interior counterparts exactly. The system
//! matrix depends only on the interior rule and is shared by every
//! contributor and both derivative components.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::maxent::BasisEval;
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteriorOrder {
    /// 3-point rule at barycentric (2/3, 1/6, 1/6) and cyclic permutations;
    /// exact for quadratics.
    St3,
    /// 6-point degree-4 rule.
    St6,
}

#[derive(Debug, Clone)]
pub struct TriQuadRule {
    pub order: InteriorOrder,
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

/// Two-point Gauss rule per edge plus outward unit normals.
#[derive(Debug, Clone)]
pub struct EdgeQuadRule {
    pub points: [[Vec2; 2]; 3],
    pub weights: [[f64; 2]; 3],
    pub normals: [Vec2; 3],
}

const ST3_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

// degree-4 six-point rule (two symmetric orbits)
const ST6_A1: f64 = 0.445948490915965;
const ST6_W1: f64 = 0.223381589678011;
const ST6_A2: f64 = 0.091576213509771;
const ST6_W2: f64 = 0.109951743655322;

fn tri_area(v: &[Vec2; 3]) -> f64 {
    0.5 * ((v[1].x - v[0].x) * (v[2].y - v[0].y) - (v[2].x - v[0].x) * (v[1].y - v[0].y))
}

fn from_bary(v: &[Vec2; 3], b: [f64; 3]) -> Vec2 {
    v[0] * b[0] + v[1] * b[1] + v[2] * b[2]
}

pub fn interior_rule(vertices: &[Vec2; 3], order: InteriorOrder) -> TriQuadRule {
    let area = tri_area(vertices);
    let (points, weights) = match order {
        InteriorOrder::St3 => (
            ST3_BARY.iter().map(|&b| from_bary(vertices, b)).collect(),
            vec![area / 3.0; 3],
        ),
        InteriorOrder::St6 => {
            let mut pts = Vec::with_capacity(6);
            let mut wts = Vec::with_capacity(6);
            for &(a, w) in &[(ST6_A1, ST6_W1), (ST6_A2, ST6_W2)] {
                for k in 0..3 {
                    let mut b = [a; 3];
                    b[k] = 1.0 - 2.0 * a;
                    pts.push(from_bary(vertices, b));
                    wts.push(w * area);
                }
            }
            (pts, wts)
        }
    };
    TriQuadRule {
        order,
        points,
        weights,
    }
}

pub fn edge_rule(vertices: &[Vec2; 3]) -> EdgeQuadRule {
    let mut points = [[Vec2::zeros(); 2]; 3];
    let mut weights = [[0.0; 2]; 3];
    let mut normals = [Vec2::zeros(); 3];
    let g = 1.0 / (2.0 * 3.0f64.sqrt());
    for k in 0..3 {
        let a = vertices[k];
        let b = vertices[(k + 1) % 3];
        let mid = (a + b) / 2.0;
        let d = b - a;
        let len = d.norm();
        points[k] = [mid - d * g, mid + d * g];
        weights[k] = [len / 2.0; 2];
        // CCW cell: outward normal is the edge direction rotated clockwise
        normals[k] = Vec2::new(d.y, -d.x) / len;
    }
    EdgeQuadRule {
        points,
        weights,
        normals,
    }
}

/// Basis values aligned to one contributor list across the 3 interior and 6
/// edge points of a cell; nodes outside a point's truncated support carry
/// zero.
#[derive(Debug, Clone)]
pub struct CellBasisValues {
    pub contributors: Vec<usize>,
    /// `interior[h][i]`: value of contributor `i` at interior point `h`.
    pub interior: Vec<Vec<f64>>,
    /// `edge[2k + g][i]`: value at Gauss point `g` of edge `k`.
    pub edge: Vec<Vec<f64>>,
}

/// Union-align separate point evaluations into one contributor list.
pub fn align_contributors(interior: &[BasisEval], edge: &[BasisEval]) -> CellBasisValues {
    let mut contributors: Vec<usize> = Vec::new();
    for e in interior.iter().chain(edge) {
        contributors.extend_from_slice(&e.contributors);
    }
    contributors.sort_unstable();
    contributors.dedup();
    fn spread(contributors: &[usize], e: &BasisEval) -> Vec<f64> {
        let mut row = vec![0.0; contributors.len()];
        for (&a, &p) in e.contributors.iter().zip(&e.phi) {
            let i = contributors.binary_search(&a).expect("union list");
            row[i] = p;
        }
        row
    }
    let interior = interior.iter().map(|e| spread(&contributors, e)).collect();
    let edge = edge.iter().map(|e| spread(&contributors, e)).collect();
    CellBasisValues {
        contributors,
        interior,
        edge,
    }
}

/// Per-cell interior rule with corrected derivatives for every contributor.
#[derive(Debug, Clone)]
pub struct CorrectedCellQuadrature {
    pub cell: usize,
    pub contributors: Vec<usize>,
    /// Values at the 3 interior points, `phi[h][i]`.
    pub phi: Vec<Vec<f64>>,
    /// Corrected x-derivatives at the 3 interior points, `dx[h][i]`.
    pub dx: Vec<Vec<f64>>,
    /// Corrected y-derivatives.
    pub dy: Vec<Vec<f64>>,
}

/// Solve the discrete integration constraints for every contributor on one
/// cell. `interior` must be the 3-point rule whose points the corrected
/// derivatives live on.
pub fn qc3_correct(
    cell: usize,
    interior: &TriQuadRule,
    edges: &EdgeQuadRule,
    values: &CellBasisValues,
) -> Result<CorrectedCellQuadrature> {
    assert_eq!(interior.points.len(), 3, "correction needs the 3-point rule");
    let w = Matrix3::from_fn(|r, h| match r {
        0 => interior.weights[h],
        1 => interior.weights[h] * interior.points[h].x,
        _ => interior.weights[h] * interior.points[h].y,
    });
    let lu = w.lu();
    if lu.determinant().abs() < f64::MIN_POSITIVE {
        return Err(Error::DegenerateRule { cell });
    }

    let n = values.contributors.len();
    let mut dx = vec![vec![0.0; n]; 3];
    let mut dy = vec![vec![0.0; n]; 3];
    for i in 0..n {
        // interior moment of the basis value, shared by both components
        let mut vol = 0.0;
        for h in 0..3 {
            vol += values.interior[h][i] * interior.weights[h];
        }
        for j in 0..2 {
            let mut f = Vector3::zeros();
            for k in 0..3 {
                let nj = if j == 0 {
                    edges.normals[k].x
                } else {
                    edges.normals[k].y
                };
                for g in 0..2 {
                    let p = values.edge[2 * k + g][i];
                    let e = edges.points[k][g];
                    let v = edges.weights[k][g];
                    f[0] += p * nj * v;
                    f[1] += p * e.x * nj * v;
                    f[2] += p * e.y * nj * v;
                }
            }
            f[1 + j] -= vol;
            let d = lu.solve(&f).ok_or(Error::DegenerateRule { cell })?;
            for h in 0..3 {
                if j == 0 {
                    dx[h][i] = d[h];
                } else {
                    dy[h][i] = d[h];
                }
            }
        }
    }
    Ok(CorrectedCellQuadrature {
        cell,
        contributors: values.contributors.clone(),
        phi: values.interior.clone(),
        dx,
        dy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_right() -> [Vec2; 3] {
        [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]
    }

    #[test]
    fn st3_weights_and_linear_exactness() {
        let rule = interior_rule(&unit_right(), InteriorOrder::St3);
        for &w in &rule.weights {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
        // integrates x exactly on an arbitrary cell
        let cell = [Vec2::new(0.2, -0.1), Vec2::new(1.3, 0.4), Vec2::new(0.5, 1.7)];
        let rule = interior_rule(&cell, InteriorOrder::St3);
        let area = tri_area(&cell);
        let centroid_x = (cell[0].x + cell[1].x + cell[2].x) / 3.0;
        let quad: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p.x)
            .sum();
        assert!((quad - area * centroid_x).abs() < 1e-14 * area.abs().max(1.0));
    }

    #[test]
    fn st6_degree_four_exactness() {
        let rule = interior_rule(&unit_right(), InteriorOrder::St6);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 0.5).abs() < 1e-14);
        // int over unit right triangle of x^2 y^2 = 2!2!/(2+2+2)! = 1/180
        let quad: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p.x * p.x * p.y * p.y)
            .sum();
        assert!((quad - 1.0 / 180.0).abs() < 1e-12);
    }

    #[test]
    fn edge_rule_normals_and_closure() {
        let rule = edge_rule(&unit_right());
        // hypotenuse is edge 1 (from (1,0) to (0,1))
        let s = 1.0 / 2.0f64.sqrt();
        assert!((rule.normals[1] - Vec2::new(s, s)).norm() < 1e-15);
        // closed polygon: sum of length-weighted normals vanishes
        let mut total = Vec2::zeros();
        for k in 0..3 {
            total += rule.normals[k] * (rule.weights[k][0] + rule.weights[k][1]);
        }
        assert!(total.norm() < 1e-14);
        // outward orientation against the centroid
        let centroid = Vec2::new(1.0 / 3.0, 1.0 / 3.0);
        for k in 0..3 {
            let mid = (rule.points[k][0] + rule.points[k][1]) / 2.0;
            assert!(rule.normals[k].dot(&(mid - centroid)) > 0.0);
        }
    }

    #[test]
    fn edge_rule_linear_exactness() {
        let cell = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0), Vec2::new(-0.5, 2.0)];
        let rule = edge_rule(&cell);
        for k in 0..3 {
            let a = cell[k];
            let b = cell[(k + 1) % 3];
            let len = (b - a).norm();
            // f(x, y) = 3x - 2y + 1 integrated along the straight edge
            let f = |p: Vec2| 3.0 * p.x - 2.0 * p.y + 1.0;
            let exact = len * (f(a) + f(b)) / 2.0;
            let quad: f64 = (0..2)
                .map(|g| rule.weights[k][g] * f(rule.points[k][g]))
                .sum();
            assert!((quad - exact).abs() < 1e-14 * exact.abs().max(1.0));
        }
    }

    /// Hat-function oracle: feeding linear finite-element hats through the
    /// correction must return their exact constant gradients.
    #[test]
    fn correction_reproduces_hat_gradients() {
        let cell = [Vec2::new(0.1, 0.2), Vec2::new(1.4, 0.3), Vec2::new(0.6, 1.5)];
        let area = tri_area(&cell);
        let interior = interior_rule(&cell, InteriorOrder::St3);
        let edges = edge_rule(&cell);
        // hat_i(x) is 1 at vertex i, 0 at the others; gradient is constant
        let hat = |i: usize, p: Vec2| {
            let a = cell[(i + 1) % 3];
            let b = cell[(i + 2) % 3];
            ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / (2.0 * area)
        };
        let grad_hat = |i: usize| {
            let a = cell[(i + 1) % 3];
            let b = cell[(i + 2) % 3];
            Vec2::new(-(b.y - a.y), b.x - a.x) / (2.0 * area)
        };
        let values = CellBasisValues {
            contributors: vec![0, 1, 2],
            interior: interior
                .points
                .iter()
                .map(|&p| (0..3).map(|i| hat(i, p)).collect())
                .collect(),
            edge: (0..3)
                .flat_map(|k| (0..2).map(move |g| (k, g)))
                .map(|(k, g)| (0..3).map(|i| hat(i, edges.points[k][g])).collect())
                .collect(),
        };
        let corr = qc3_correct(7, &interior, &edges, &values).unwrap();
        for i in 0..3 {
            let g = grad_hat(i);
            for h in 0..3 {
                assert!((corr.dx[h][i] - g.x).abs() < 1e-12);
                assert!((corr.dy[h][i] - g.y).abs() < 1e-12);
            }
        }
    }

    /// The constraint system is solved exactly: residual at machine level.
    #[test]
    fn constraint_residual_vanishes() {
        let cell = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.1), Vec2::new(0.3, 0.9)];
        let interior = interior_rule(&cell, InteriorOrder::St3);
        let edges = edge_rule(&cell);
        // an arbitrary smooth "basis" function, no special structure
        let f = |p: Vec2| (1.3 * p.x - 0.7 * p.y).cos() * (p.x + 0.4).exp();
        let values = CellBasisValues {
            contributors: vec![0],
            interior: interior.points.iter().map(|&p| vec![f(p)]).collect(),
            edge: (0..3)
                .flat_map(|k| (0..2).map(move |g| (k, g)))
                .map(|(k, g)| vec![f(edges.points[k][g])])
                .collect(),
        };
        let corr = qc3_correct(0, &interior, &edges, &values).unwrap();
        // rebuild both sides of the six constraints
        for j in 0..2 {
            let d = if j == 0 { &corr.dx } else { &corr.dy };
            for (m, moment) in [(0, None), (1, Some(0)), (2, Some(1))] {
                let lhs: f64 = (0..3)
                    .map(|h| {
                        let p = interior.points[h];
                        let fm = match moment {
                            None => 1.0,
                            Some(0) => p.x,
                            _ => p.y,
                        };
                        interior.weights[h] * d[h][0] * fm
                    })
                    .sum();
                let mut rhs = 0.0;
                for k in 0..3 {
                    let nj = if j == 0 {
                        edges.normals[k].x
                    } else {
                        edges.normals[k].y
                    };
                    for g in 0..2 {
                        let e = edges.points[k][g];
                        let fm = match moment {
                            None => 1.0,
                            Some(0) => e.x,
                            _ => e.y,
                        };
                        rhs += f(e) * fm * nj * edges.weights[k][g];
                    }
                }
                if moment == Some(j) {
                    let vol: f64 = (0..3)
                        .map(|h| interior.weights[h] * corr.phi[h][0])
                        .sum();
                    rhs -= vol;
                }
                assert!(
                    (lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()),
                    "constraint ({j}, {m}) residual {}",
                    lhs - rhs
                );
            }
        }
    }
}
