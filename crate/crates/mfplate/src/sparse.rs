//! Minimal CSR sparse matrix support for assembly.
//!
//! Rows keep their column indices sorted, which makes products and
//! accumulation deterministic: identical inputs produce bitwise-identical
//! matrices regardless of thread count.

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Csr {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from per-row (column, value) pairs. Pairs within a row need not
    /// be sorted; duplicates are summed in their given order.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut it = row.into_iter().peekable();
            while let Some((c, mut v)) = it.next() {
                while let Some(&(c2, v2)) = it.peek() {
                    if c2 == c {
                        v += v2;
                        it.next();
                    } else {
                        break;
                    }
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Csr {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut pos = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let p = pos[c as usize];
                indices[p] = i as u32;
                values[p] = v;
                pos[c as usize] += 1;
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse matrix product `self * other` (SMMP-style row merge with a
    /// dense scratch column; output rows sorted).
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.n_cols, other.n_rows);
        let n_cols = other.n_cols;
        let mut scratch = vec![0.0f64; n_cols];
        let mut mark = vec![false; n_cols];
        let mut touched: Vec<u32> = Vec::new();
        let mut indptr = Vec::with_capacity(self.n_rows + 1);
        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        indptr.push(0);
        for i in 0..self.n_rows {
            let (acols, avals) = self.row(i);
            for (&k, &av) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k as usize);
                for (&j, &bv) in bcols.iter().zip(bvals) {
                    if !mark[j as usize] {
                        mark[j as usize] = true;
                        touched.push(j);
                    }
                    scratch[j as usize] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                indices.push(j);
                values.push(scratch[j as usize]);
                scratch[j as usize] = 0.0;
                mark[j as usize] = false;
            }
            touched.clear();
            indptr.push(indices.len());
        }
        Csr {
            n_rows: self.n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// y = alpha * A * x (A stored in full).
    pub fn matvec(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            y[i] += alpha * acc;
        }
    }

    /// y += alpha * A * x where only the upper triangle (i <= j) is stored
    /// and A is symmetric.
    pub fn symv_upper(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = c as usize;
                y[i] += alpha * v * x[j];
                if j != i {
                    y[j] += alpha * v * x[i];
                }
            }
        }
    }

    /// Keep only entries with i <= j.
    pub fn upper_triangle(&self) -> Csr {
        let mut rows = Vec::with_capacity(self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let row: Vec<(u32, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(&c, _)| c as usize >= i)
                .map(|(&c, &v)| (c, v))
                .collect();
            rows.push(row);
        }
        Csr::from_rows(self.n_cols, rows)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .map(move |(&c, &v)| (i, c as usize, v))
        })
    }
}

/// a*X + b*Y of two matrices with identical shapes (patterns may differ).
pub fn add_scaled(a: f64, x: &Csr, b: f64, y: &Csr) -> Csr {
    assert_eq!(x.n_rows, y.n_rows);
    assert_eq!(x.n_cols, y.n_cols);
    let mut rows = Vec::with_capacity(x.n_rows);
    for i in 0..x.n_rows {
        let (xc, xv) = x.row(i);
        let (yc, yv) = y.row(i);
        let mut row = Vec::with_capacity(xc.len() + yc.len());
        row.extend(xc.iter().zip(xv).map(|(&c, &v)| (c, a * v)));
        row.extend(yc.iter().zip(yv).map(|(&c, &v)| (c, b * v)));
        rows.push(row);
    }
    Csr::from_rows(x.n_cols, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &Csr) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; m.n_cols]; m.n_rows];
        for (i, j, v) in m.triplets() {
            d[i][j] += v;
        }
        d
    }

    #[test]
    fn matmul_matches_dense() {
        let a = Csr::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![(1, -1.0)]]);
        let b = Csr::from_rows(
            2,
            vec![vec![(0, 3.0)], vec![(1, 4.0)], vec![(0, 5.0), (1, 6.0)]],
        );
        let c = a.matmul(&b);
        let (da, db, dc) = (dense(&a), dense(&b), dense(&c));
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += da[i][k] * db[k][j];
                }
                assert!((acc - dc[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let a = Csr::from_rows(4, vec![vec![(1, 2.0), (3, -1.0)], vec![(0, 5.0)]]);
        let att = a.transpose().transpose();
        assert_eq!(dense(&a), dense(&att));
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let a = Csr::from_rows(2, vec![vec![(1, 2.0), (1, 3.0), (0, 1.0)]]);
        assert_eq!(a.get(0, 1), 5.0);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn symv_upper_matches_full() {
        // symmetric matrix [[2,1,0],[1,3,4],[0,4,5]]
        let full = Csr::from_rows(
            3,
            vec![
                vec![(0, 2.0), (1, 1.0)],
                vec![(0, 1.0), (1, 3.0), (2, 4.0)],
                vec![(1, 4.0), (2, 5.0)],
            ],
        );
        let upper = full.upper_triangle();
        let x = [1.0, -2.0, 0.5];
        let mut y1 = vec![0.0; 3];
        let mut y2 = vec![0.0; 3];
        full.matvec(&x, 1.0, &mut y1);
        upper.symv_upper(&x, 1.0, &mut y2);
        for i in 0..3 {
            assert!((y1[i] - y2[i]).abs() < 1e-15);
        }
    }
}
