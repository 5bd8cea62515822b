use nalgebra::DMatrix;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed in the
    /// order they appear, so assembly order fixes the floating-point result.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        // stable: duplicate entries keep insertion order
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, cols, vals }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
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

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yr = s;
        }
    }

    /// xᵀ A x
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|r| x[r] * (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum::<f64>())
            .sum()
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, beta * v)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Exact (bitwise) symmetry of the stored entries.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.triplets().iter().all(|&(r, c, v)| self.get(c, r) == v)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Max absolute row sum (the induced ∞-norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn from_dense(d: &DMatrix<f64>) -> CsrMatrix {
        let mut t = Vec::new();
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                if d[(r, c)] != 0.0 {
                    t.push((r, c, d[(r, c)]));
                }
            }
        }
        CsrMatrix::from_triplets(d.nrows(), d.ncols(), &t)
    }

    /// Writes the matrix in Matrix Market coordinate format (general, real).
    pub fn write_matrix_market<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
        }
        Ok(())
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().iter().all(|&(r, c, _)| r == c)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}
