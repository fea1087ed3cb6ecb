//! Compressed sparse row storage assembled from (row, col, value) triplets.

#[derive(Debug, Clone, Default)]
pub struct TripletList {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletList { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletList { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Drops all entries, keeping the allocation.
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    /// Sums duplicates in push order. Explicit zeros are kept so the
    /// pattern does not depend on coefficient values.
    pub fn into_csr(self) -> CsrMatrix {
        self.into_csr_with_scatter().0
    }

    /// Like [`TripletList::into_csr`], also returning for every triplet the
    /// index of the stored value it was added to.
    pub fn into_csr_with_scatter(self) -> (CsrMatrix, Vec<usize>) {
        let n = self.entries.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by_key(|&k| {
            let e = &self.entries[k as usize];
            (e.0, e.1)
        });
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut cols = Vec::with_capacity(n / 3);
        let mut vals: Vec<f64> = Vec::with_capacity(n / 3);
        let mut scatter = vec![0usize; n];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, _) = self.entries[k as usize];
            if last != Some((r, c)) {
                cols.push(c);
                vals.push(0.0);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
            scatter[k as usize] = vals.len() - 1;
        }
        // sum in push order
        for (k, &(_, _, v)) in self.entries.iter().enumerate() {
            vals[scatter[k]] += v;
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        (CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, cols, vals }, scatter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&c) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletList::with_capacity(self.ncols, self.nrows, self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push(c, r, v);
            }
        }
        t.into_csr()
    }

    /// Row-major dense copy; meant for small matrices in tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }

    /// Sub-block of rows `rows` and columns `cols`.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> CsrMatrix {
        let mut t = TripletList::new(rows.len(), cols.len());
        for r in rows.clone() {
            for (c, v) in self.row(r) {
                if cols.contains(&c) {
                    t.push(r - rows.start, c - cols.start, v);
                }
            }
        }
        t.into_csr()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletList::new(2, 3);
        t.push(1, 2, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 2, 0.5);
        t.push(0, 1, 0.0);
        let m = t.into_csr();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![2.0, 4.5]);
        let mt = m.transpose();
        assert_eq!(mt.get(2, 1), 1.5);
        assert_eq!(mt.nrows(), 3);
    }
}
