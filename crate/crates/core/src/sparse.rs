//! Minimal sparse symmetric storage: triplet accumulation in a fixed
//! insertion order, compressed sparse rows for matvec and factorization.

/// Triplet accumulator. Duplicate entries are summed during compression in
/// insertion-independent (sorted) order, so assembly stays deterministic.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        CooBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|e| (e.0, e.1));

        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut k = 0;
        for r in 0..self.n {
            while k < sorted.len() && sorted[k].0 == r {
                let c = sorted[k].1;
                let mut v = sorted[k].2;
                k += 1;
                while k < sorted.len() && sorted[k].0 == r && sorted[k].1 == c {
                    v += sorted[k].2;
                    k += 1;
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr[r + 1] = cols.len();
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Compressed sparse rows, full (both triangles) symmetric pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[s..e], &self.vals[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Largest absolute asymmetry relative to the largest absolute entry.
    pub fn max_asymmetry(&self) -> f64 {
        let mut max_entry: f64 = 0.0;
        let mut max_diff: f64 = 0.0;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                max_entry = max_entry.max(v.abs());
                max_diff = max_diff.max((v - self.get(*c, r)).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_diff / max_entry
        }
    }

    /// Extracts the principal submatrix on `keep` (sorted, deduplicated).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = vec![0usize; keep.len() + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            let (rc, rv) = self.row(old_r);
            for (c, v) in rc.iter().zip(rv) {
                if map[*c] != usize::MAX {
                    cols.push(map[*c]);
                    vals.push(*v);
                }
            }
            row_ptr[new_r + 1] = cols.len();
        }
        CsrMatrix {
            n: keep.len(),
            row_ptr,
            cols,
            vals,
        }
    }

    /// Scales every entry by `c`.
    pub fn scaled(&self, c: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= c;
        }
        out
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter()
                .zip(vals)
                .map(move |(c, v)| (r, *c, *v))
                .collect::<Vec<_>>()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_sums_duplicates() {
        let mut b = CooBuilder::new(3);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.0);
        b.push(2, 1, 5.0);
        b.push(1, 2, 5.0);
        let m = b.to_csr();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(2, 1), 5.0);
        assert_eq!(m.get(1, 2), 5.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.max_asymmetry(), 0.0);
    }

    #[test]
    fn matvec_identity() {
        let m = CsrMatrix::identity(4);
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut y = [0.0; 4];
        m.matvec(&x, &mut y);
        assert_eq!(x, y);
    }

    #[test]
    fn submatrix_extracts_block() {
        let mut b = CooBuilder::new(4);
        for i in 0..4 {
            b.push(i, i, (i + 1) as f64);
        }
        b.push(0, 3, 7.0);
        b.push(3, 0, 7.0);
        let m = b.to_csr();
        let s = m.submatrix(&[0, 3]);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(1, 1), 4.0);
        assert_eq!(s.get(0, 1), 7.0);
    }
}
