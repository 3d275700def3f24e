//! Invertible per-component affine scaling of latent vectors.

use serde::{Deserialize, Serialize};

/// Maps each component's training range [min, max] onto [lo, hi] affinely;
/// components with zero range are shifted to the interval midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    /// scaled = a * x + b, per component.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl AffineScaler {
    pub fn fit(rows: &[&[f64]], lo: f64, hi: f64) -> Self {
        assert!(!rows.is_empty(), "scaler needs data");
        let m = rows[0].len();
        let mut a = vec![1.0; m];
        let mut b = vec![0.0; m];
        for j in 0..m {
            let mut mn = f64::INFINITY;
            let mut mx = f64::NEG_INFINITY;
            for r in rows {
                mn = mn.min(r[j]);
                mx = mx.max(r[j]);
            }
            if mx > mn {
                a[j] = (hi - lo) / (mx - mn);
                b[j] = lo - a[j] * mn;
            } else {
                a[j] = 1.0;
                b[j] = 0.5 * (lo + hi) - mn;
            }
        }
        Self { a, b }
    }

    pub fn identity(m: usize) -> Self {
        Self { a: vec![1.0; m], b: vec![0.0; m] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, v)| self.a[j] * v + self.b[j]).collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter().enumerate().map(|(j, v)| (v - self.b[j]) / self.a[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_range_and_inverts() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0, -5.0], vec![10.0, 5.0], vec![5.0, 0.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = AffineScaler::fit(&refs, 0.05, 0.95);
        for (got, want) in s.apply(&[0.0, -5.0]).iter().chain(s.apply(&[10.0, 5.0]).iter()).zip([0.05, 0.05, 0.95, 0.95]) {
            assert!((got - want).abs() < 1e-12);
        }
        let x = vec![3.7, -1.2];
        let back = s.invert(&s.apply(&x));
        for (u, v) in x.iter().zip(&back) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_component_roundtrips() {
        let rows: Vec<Vec<f64>> = vec![vec![4.0], vec![4.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = AffineScaler::fit(&refs, 0.05, 0.95);
        assert_eq!(s.apply(&[4.0]), vec![0.5]);
        assert_eq!(s.invert(&[0.5]), vec![4.0]);
    }
}
