use super::CsrMatrix;
use crate::error::{Error, Result};

/// Cholesky factor `L` (with `A = L Lᵀ`) of a symmetric positive definite
/// matrix stored in variable-band (skyline) row format.
///
/// Row `r` of `L` occupies columns `first[r]..=r`, where `first[r]` is the
/// leftmost nonzero of row `r` of `A`. Fill stays inside that envelope, so a
/// DOF ordering with interior nodes first and vertices last keeps the factor
/// near-banded on metric-graph meshes.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    vals: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
        }
        let mut first: Vec<usize> = (0..n).collect();
        for r in 0..n {
            for (c, _) in a.row(r) {
                if c < first[r] {
                    first[r] = c;
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for r in 0..n {
            offset[r + 1] = offset[r] + (r - first[r] + 1);
        }
        let mut vals = vec![0.0; offset[n]];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    vals[offset[r] + c - first[r]] = v;
                }
            }
        }
        for r in 0..n {
            let fr = first[r];
            for c in fr..r {
                let fc = first[c];
                let k0 = fr.max(fc);
                let mut s = vals[offset[r] + c - fr];
                for k in k0..c {
                    s -= vals[offset[r] + k - fr] * vals[offset[c] + k - fc];
                }
                vals[offset[r] + c - fr] = s / vals[offset[c] + c - fc];
            }
            let mut d = vals[offset[r] + r - fr];
            for k in fr..r {
                let l = vals[offset[r] + k - fr];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::FactorizationFailure { pivot: r, value: d });
            }
            vals[offset[r] + r - fr] = d.sqrt();
        }
        Ok(Self { n, first, offset, vals })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.vals[self.offset[r]..self.offset[r + 1]]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `L y = b`
    pub fn forward_in_place(&self, b: &mut [f64]) {
        for r in 0..self.n {
            let row = self.row(r);
            let fr = self.first[r];
            let mut s = b[r];
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                s -= l * b[fr + k];
            }
            b[r] = s / row[row.len() - 1];
        }
    }

    /// `Lᵀ x = y`
    pub fn backward_in_place(&self, y: &mut [f64]) {
        for r in (0..self.n).rev() {
            let row = self.row(r);
            let fr = self.first[r];
            let xr = y[r] / row[row.len() - 1];
            y[r] = xr;
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                y[fr + k] -= l * xr;
            }
        }
    }

    /// `L z`
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_lower_into(z, &mut out);
        out
    }

    pub fn mul_lower_into(&self, z: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            let fr = self.first[r];
            *o = self.row(r).iter().enumerate().map(|(k, l)| l * z[fr + k]).sum();
        }
    }

    pub fn to_dense_lower(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (k, &l) in self.row(r).iter().enumerate() {
                d[(r, self.first[r] + k)] = l;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn arrow(n: usize, d: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if i + 1 < n - 1 {
                t.push((i, n - 1, 0.5));
                t.push((n - 1, i, 0.5));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn factor_reconstructs() {
        let a = arrow(12, 8.0);
        let f = SkylineCholesky::factor(&a).unwrap();
        let l = f.to_dense_lower();
        let err = (&l * l.transpose() - a.to_dense()).abs().max();
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn indefinite_fails() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(SkylineCholesky::factor(&a), Err(Error::FactorizationFailure { pivot: 1, .. })));
    }

    proptest! {
        #[test]
        fn solve_matches_dense(b in prop::collection::vec(-1.0f64..1.0, 20)) {
            let a = arrow(20, 6.0);
            let x = SkylineCholesky::factor(&a).unwrap().solve(&b);
            let r = a.mul_vec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-12);
            }
        }
    }
}
