//! Constraint elimination and the SPD linear solve.
//!
//! Essential conditions are imposed by row/column elimination with a
//! right-hand-side lift; the reduced matrix stays symmetric positive
//! definite and goes to a direct sparse Cholesky factorization. Eliminated
//! rows are kept for reaction recovery.

use faer::prelude::SpSolver;
use faer::sparse::SparseColMat;

use crate::error::{Error, Result};
use crate::sparse::Csr;

/// Constrained system after eliminating prescribed dofs.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Upper triangle of the reduced SPD matrix, in free-dof numbering.
    pub matrix_upper: Csr,
    pub rhs: Vec<f64>,
    /// Free dof ids in ascending global numbering.
    pub free: Vec<usize>,
    /// Prescribed (dof, value) pairs, ascending.
    pub constrained: Vec<(usize, f64)>,
    pub full_len: usize,
    /// Rows of the original matrix at constrained dofs (full storage),
    /// retained for reaction recovery.
    pub constrained_rows: Vec<(usize, usize, f64)>,
}

/// Eliminate prescribed dofs from the symmetric system given by its upper
/// triangle. `values` must be sorted by dof and cover every constrained dof
/// exactly once.
pub fn apply_dirichlet(
    k_upper: &Csr,
    f: &[f64],
    values: &[(usize, f64)],
) -> Result<ReducedSystem> {
    let n = k_upper.n_rows;
    if f.len() != n {
        return Err(Error::InvalidArgument(
            "right side length does not match the matrix".into(),
        ));
    }
    let mut prescribed: Vec<Option<f64>> = vec![None; n];
    for &(dof, v) in values {
        if dof >= n {
            return Err(Error::ConstraintCoverage { dof });
        }
        prescribed[dof] = Some(v);
    }
    let free: Vec<usize> = (0..n).filter(|&i| prescribed[i].is_none()).collect();
    let mut free_index = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        free_index[i] = k;
    }

    let mut rhs: Vec<f64> = free.iter().map(|&i| f[i]).collect();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); free.len()];
    let mut constrained_rows = Vec::new();
    for (i, j, v) in k_upper.triplets() {
        match (prescribed[i], prescribed[j]) {
            (None, None) => {
                let (fi, fj) = (free_index[i], free_index[j]);
                rows[fi].push((fj as u32, v));
            }
            (None, Some(g)) => {
                rhs[free_index[i]] -= v * g;
                constrained_rows.push((j, i, v));
            }
            (Some(g), None) => {
                rhs[free_index[j]] -= v * g;
                constrained_rows.push((i, j, v));
            }
            (Some(_), Some(_)) => {
                constrained_rows.push((i, j, v));
                if i != j {
                    constrained_rows.push((j, i, v));
                }
            }
        }
    }
    Ok(ReducedSystem {
        matrix_upper: Csr::from_rows(free.len(), rows),
        rhs,
        free,
        constrained: values.to_vec(),
        full_len: n,
        constrained_rows,
    })
}

/// Direct sparse Cholesky solve of the reduced system; returns the full
/// solution vector with prescribed values filled in.
pub fn solve_spd(reduced: &ReducedSystem) -> Result<Vec<f64>> {
    let n = reduced.matrix_upper.n_rows;
    let mut full = vec![0.0; reduced.full_len];
    for &(dof, g) in &reduced.constrained {
        full[dof] = g;
    }
    if n == 0 {
        return Ok(full);
    }

    let triplets: Vec<(usize, usize, f64)> = reduced
        .matrix_upper
        .triplets()
        .flat_map(|(i, j, v)| {
            if i == j {
                vec![(i, j, v)]
            } else {
                vec![(i, j, v), (j, i, v)]
            }
        })
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Solver(format!("matrix construction failed: {e:?}")))?;
    let llt = a
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Solver(format!("Cholesky factorization failed: {e:?}")))?;
    let b = faer::Mat::<f64>::from_fn(n, 1, |i, _| reduced.rhs[i]);
    let x = llt.solve(&b);

    let xs: Vec<f64> = (0..n).map(|i| x.read(i, 0)).collect();
    // residual contract
    let mut r = reduced.rhs.clone();
    reduced.matrix_upper.symv_upper(&xs, -1.0, &mut r);
    let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let anorm = reduced.matrix_upper.max_abs();
    let xnorm = xs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bnorm = reduced.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = 1e-10 * (anorm * xnorm + bnorm);
    if rnorm > bound.max(f64::MIN_POSITIVE) {
        return Err(Error::Solver(format!(
            "residual {rnorm:.3e} exceeds bound {bound:.3e}"
        )));
    }

    for (k, &i) in reduced.free.iter().enumerate() {
        full[i] = xs[k];
    }
    Ok(full)
}

/// Reactions at constrained dofs: K_c. * u - f_c.
pub fn reactions(reduced: &ReducedSystem, full: &[f64], f: &[f64]) -> Vec<(usize, f64)> {
    let mut acc: std::collections::BTreeMap<usize, f64> = reduced
        .constrained
        .iter()
        .map(|&(dof, _)| (dof, -f[dof]))
        .collect();
    for &(i, j, v) in &reduced.constrained_rows {
        if let Some(e) = acc.get_mut(&i) {
            *e += v * full[j];
        }
    }
    acc.into_iter().collect()
}

/// Jacobi-preconditioned conjugate gradients on the reduced system. Kept as
/// an independent cross-check of the direct path.
pub fn cg_solve(reduced: &ReducedSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = reduced.matrix_upper.n_rows;
    let a = &reduced.matrix_upper;
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let d = a.get(i, i);
        if d <= 0.0 {
            return Err(Error::Solver(format!("non-positive diagonal at {i}")));
        }
        diag[i] = d;
    }
    let mut x = vec![0.0; n];
    let mut r = reduced.rhs.clone();
    let bnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        let mut full = vec![0.0; reduced.full_len];
        for &(dof, g) in &reduced.constrained {
            full[dof] = g;
        }
        return Ok(full);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(v, d)| v / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let mut ap = vec![0.0; n];
        a.symv_upper(&p, 1.0, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            let mut full = vec![0.0; reduced.full_len];
            for &(dof, g) in &reduced.constrained {
                full[dof] = g;
            }
            for (k, &i) in reduced.free.iter().enumerate() {
                full[i] = x[k];
            }
            return Ok(full);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver("conjugate gradients stalled".into()))
}
