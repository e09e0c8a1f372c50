//! B-spline bases on clamped knot vectors.
//!
//! A basis of degree `d` with `K` functions is stored as its full knot vector
//! (length `K + d + 1`) with both boundary knots repeated `d + 1` times.
//! Evaluation uses the triangular Cox–de Boor recursion, which produces the
//! `d + 1` functions that are nonzero on the knot span containing `x`.
//!
//! Spans are half-open `[t_mu, t_{mu+1})` except the last one, which also
//! contains the right boundary so the whole closed domain can be evaluated.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    degree: usize,
    knots: Vec<f64>,
}

impl BasisSpec {
    /// Builds a basis from an explicit clamped knot vector.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let mult = degree + 1;
        if knots.len() < 2 * mult {
            return Err(Error::InvalidSpec(format!(
                "degree {degree} needs at least {} knots, got {}",
                2 * mult,
                knots.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSpec("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidSpec("knots must be non-decreasing".into()));
        }
        let lo = knots[0];
        let hi = knots[knots.len() - 1];
        if lo >= hi {
            return Err(Error::InvalidSpec(format!("degenerate domain [{lo}, {hi}]")));
        }
        let left = knots.iter().take_while(|&&t| t == lo).count();
        let right = knots.iter().rev().take_while(|&&t| t == hi).count();
        if left != mult || right != mult {
            return Err(Error::InvalidSpec(format!(
                "boundary knots must have multiplicity {mult}, got {left} and {right}"
            )));
        }
        let max_interior = degree.max(1);
        let interior = &knots[mult..knots.len() - mult];
        for chunk in interior.chunk_by(|a, b| a == b) {
            if chunk.len() > max_interior {
                return Err(Error::InvalidSpec(format!(
                    "interior knot {} repeated {} times (at most {max_interior})",
                    chunk[0],
                    chunk.len()
                )));
            }
        }
        Ok(Self { degree, knots })
    }

    /// Evenly spaced interior knots over `[lo, hi]`.
    pub fn even(lo: f64, hi: f64, degree: usize, num_basis: usize) -> Result<Self> {
        if num_basis < degree + 1 {
            return Err(Error::InvalidSpec(format!(
                "need at least {} basis functions for degree {degree}, got {num_basis}",
                degree + 1
            )));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidSpec(format!("degenerate domain [{lo}, {hi}]")));
        }
        let n_interior = num_basis - degree - 1;
        let pieces = (n_interior + 1) as f64;
        let mut knots = Vec::with_capacity(num_basis + degree + 1);
        knots.extend(std::iter::repeat_n(lo, degree + 1));
        knots.extend((1..=n_interior).map(|t| lo + (hi - lo) * t as f64 / pieces));
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Distinct breakpoints, boundaries included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.knots.clone();
        b.dedup();
        b
    }

    fn check_domain(&self, x: f64, index: Option<usize>) -> Result<()> {
        let (lo, hi) = self.domain();
        if x.is_nan() || x < lo || x > hi {
            return Err(Error::OutOfDomain { x, lo, hi, index });
        }
        Ok(())
    }

    /// Knot span `mu` with `t_mu <= x < t_{mu+1}`; the right boundary maps to the last span.
    pub fn span(&self, x: f64) -> Result<usize> {
        self.check_domain(x, None)?;
        Ok(self.span_unchecked(x))
    }

    fn span_unchecked(&self, x: f64) -> usize {
        let k = self.num_basis();
        let (_, hi) = self.domain();
        if x >= hi {
            return k - 1;
        }
        let mu = self.knots.partition_point(|&t| t <= x) - 1;
        mu.clamp(self.degree, k - 1)
    }

    /// Index of the first basis function supported on the span containing `x`;
    /// the nonzero functions at `x` are `first..=first + degree`.
    pub fn first_active(&self, x: f64) -> Result<usize> {
        Ok(self.span(x)? - self.degree)
    }

    /// Nonzero basis values at `x`, written into `out[..=degree]`; returns the
    /// index of the first active function.
    pub fn eval_nonzero(&self, x: f64, out: &mut [f64]) -> Result<usize> {
        self.check_domain(x, None)?;
        Ok(self.eval_nonzero_unchecked(x, out))
    }

    fn eval_nonzero_unchecked(&self, x: f64, out: &mut [f64]) -> usize {
        let d = self.degree;
        let t = &self.knots;
        let mu = self.span_unchecked(x);
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        out[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            out[j] = saved;
        }
        mu - d
    }

    /// All `K` basis values at `x`.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(x, &mut local)?;
        let mut full = vec![0.0; self.num_basis()];
        full[first..=first + self.degree].copy_from_slice(&local);
        Ok(full)
    }

    pub fn design_matrix(&self, points: &[f64]) -> Result<DesignMatrix> {
        let w = self.degree + 1;
        let mut first = Vec::with_capacity(points.len());
        let mut values = vec![0.0; points.len() * w];
        for (m, &x) in points.iter().enumerate() {
            self.check_domain(x, Some(m))?;
            first.push(self.eval_nonzero_unchecked(x, &mut values[m * w..(m + 1) * w]));
        }
        Ok(DesignMatrix {
            num_basis: self.num_basis(),
            width: w,
            first,
            values,
        })
    }

    /// Evaluates `sum_k b_k(x) coef_k`.
    pub fn eval_curve(&self, coef: &[f64], x: f64) -> Result<f64> {
        if coef.len() != self.num_basis() {
            return Err(Error::Dimension {
                expected: self.num_basis(),
                got: coef.len(),
            });
        }
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(x, &mut local)?;
        Ok(local
            .iter()
            .zip(&coef[first..])
            .map(|(b, c)| b * c)
            .sum())
    }
}

/// Row-sparse design matrix `B[m, k] = b_k(x_m)`: each row stores the
/// `degree + 1` values starting at its first active basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    num_basis: usize,
    width: usize,
    first: Vec<usize>,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn num_rows(&self) -> usize {
        self.first.len()
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    /// First active basis index and the nonzero values of row `m`.
    pub fn row(&self, m: usize) -> (usize, &[f64]) {
        (self.first[m], &self.values[m * self.width..(m + 1) * self.width])
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        let (first, vals) = self.row(m);
        if k >= first && k < first + self.width {
            vals[k - first]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.num_rows())
            .map(|m| (0..self.num_basis).map(|k| self.get(m, k)).collect())
            .collect()
    }

    /// Rows whose support includes basis `k`. Rows are assumed sorted by `x`,
    /// which makes this a contiguous range.
    pub fn rows_touching(&self, k: usize) -> std::ops::Range<usize> {
        let lo = self.first.partition_point(|&f| f + self.width <= k);
        let hi = self.first.partition_point(|&f| f <= k);
        lo..hi.max(lo)
    }

    /// Fitted values `B coef` where `coef[k]` is the coefficient of basis `k`.
    pub fn apply(&self, coef: &[f64]) -> Vec<f64> {
        (0..self.num_rows())
            .map(|m| {
                let (first, vals) = self.row(m);
                vals.iter().zip(&coef[first..]).map(|(b, c)| b * c).sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn indicator_basis() {
        let b = BasisSpec::even(0.0, 1.0, 0, 1).unwrap();
        assert_eq!(b.knots(), &[0.0, 1.0]);
        assert_eq!(b.eval(0.5).unwrap(), vec![1.0]);
        assert_eq!(b.eval(1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn cubic_even_knot_count() {
        let b = BasisSpec::even(0.0, 1.0, 3, 10).unwrap();
        assert_eq!(b.knots().len(), 14);
        let interior: Vec<f64> = b.knots()[4..10].to_vec();
        assert_eq!(interior.len(), 6);
        for (t, w) in interior.iter().enumerate() {
            assert_abs_diff_eq!(*w, (t + 1) as f64 / 7.0, epsilon = 1e-15);
        }
        assert_eq!(b.num_basis(), 10);
    }

    #[test]
    fn linear_without_interior_knots() {
        let b = BasisSpec::even(0.0, 1.0, 1, 2).unwrap();
        assert_eq!(b.knots(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn hat_functions_at_quarter() {
        let b = BasisSpec::even(0.0, 1.0, 1, 3).unwrap();
        let v = b.eval(0.25).unwrap();
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_too_few_basis() {
        assert!(matches!(
            BasisSpec::even(0.0, 1.0, 3, 3),
            Err(Error::InvalidSpec(_))
        ));
        assert!(BasisSpec::even(1.0, 1.0, 1, 3).is_err());
    }

    #[test]
    fn rejects_bad_multiplicity() {
        assert!(BasisSpec::new(2, vec![0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).is_err());
        assert!(BasisSpec::new(1, vec![0.0, 0.0, 0.5, 0.4, 1.0, 1.0]).is_err());
        assert!(BasisSpec::new(1, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]).is_err());
        assert!(BasisSpec::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0]).is_ok());
    }

    #[test]
    fn out_of_domain() {
        let b = BasisSpec::even(0.0, 1.0, 3, 6).unwrap();
        assert!(matches!(b.eval(1.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(b.eval(f64::NAN), Err(Error::OutOfDomain { .. })));
        match b.design_matrix(&[0.1, 0.2, -0.1]) {
            Err(Error::OutOfDomain { index, .. }) => assert_eq!(index, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn design_rows() {
        let b = BasisSpec::even(0.0, 1.0, 0, 1).unwrap();
        assert_eq!(b.design_matrix(&[0.3]).unwrap().to_dense(), vec![vec![1.0]]);

        let b = BasisSpec::even(0.0, 1.0, 3, 8).unwrap();
        let pts: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let dm = b.design_matrix(&pts).unwrap();
        for row in dm.to_dense() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(row.iter().filter(|v| **v != 0.0).count() <= 4);
            assert!(row.iter().all(|v| *v >= 0.0));
        }
        for (m, x) in pts.iter().enumerate() {
            assert_eq!(dm.to_dense()[m], b.eval(*x).unwrap());
        }
    }

    #[test]
    fn rows_touching_matches_dense() {
        let b = BasisSpec::even(0.0, 1.0, 3, 9).unwrap();
        let pts: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let dm = b.design_matrix(&pts).unwrap();
        for k in 0..9 {
            let r = dm.rows_touching(k);
            for m in 0..pts.len() {
                let (first, _) = dm.row(m);
                let touches = k >= first && k <= first + 3;
                assert_eq!(r.contains(&m), touches, "k={k} m={m}");
            }
        }
    }

    #[test]
    fn local_support() {
        let b = BasisSpec::even(0.0, 2.0, 2, 7).unwrap();
        let t = b.knots().to_vec();
        for i in 0..=400 {
            let x = 2.0 * i as f64 / 400.0;
            let v = b.eval(x).unwrap();
            for (k, val) in v.iter().enumerate() {
                if x < t[k] || x > t[k + 3] {
                    assert_eq!(*val, 0.0);
                }
            }
        }
    }
}
