//! Snapshot matrices, PCA basis fitting and latent-space mapping.
//!
//! The basis is the truncated SVD of the (optionally normalised) snapshot
//! matrix, computed by one-sided Jacobi on the transposed matrix: the
//! problem sizes here (<= ~400 x 800) make the dense route trivial and
//! keep the decomposition deterministic and dependency-free.

use crate::state::{field_order, Compartment, Group, StateField, N_FIELDS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("snapshot series is empty")]
    EmptySeries,
    #[error("stride must be >= 1")]
    ZeroStride,
    #[error("need at least 2 snapshot rows to fit a basis (got {0})")]
    TooFewRows(usize),
    #[error("component count {m} exceeds min(rows, vars) = {max}")]
    TooManyComponents { m: usize, max: usize },
    #[error("zero variance in compartment-group {name}: mean/std normalization undefined")]
    ZeroVariance { name: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Jacobi SVD failed to converge after {0} sweeps")]
    SvdConvergence(usize),
}

/// Sampled solution rows: `rows` time levels by `n_vars` variables in the
/// canonical (compartment, group, cell) layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMatrix {
    pub rows: usize,
    pub n_vars: usize,
    /// Solver steps between consecutive rows.
    pub stride: usize,
    /// Row-major data, `rows * n_vars`.
    pub data: Vec<f64>,
    /// Time of each row, seconds.
    pub times: Vec<f64>,
}

impl SnapshotMatrix {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_vars..(i + 1) * self.n_vars]
    }
}

/// Sample every `stride`-th state (indices 0, stride, 2*stride, ...) of a
/// recorded series into a snapshot matrix.
pub fn build_snapshots(series: &[StateField], stride: usize) -> Result<SnapshotMatrix, RomError> {
    if stride == 0 {
        return Err(RomError::ZeroStride);
    }
    if series.is_empty() {
        return Err(RomError::EmptySeries);
    }
    let n_vars = N_FIELDS * series[0].n_cells();
    let mut data = Vec::new();
    let mut times = Vec::new();
    let mut i = 0;
    while i < series.len() {
        data.extend_from_slice(&series[i].flatten());
        times.push(series[i].t);
        i += stride;
    }
    Ok(SnapshotMatrix { rows: times.len(), n_vars, stride, data, times })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Pooled mean/std per (compartment, group) before PCA (with per-column
    /// centring absorbed into the stored means).
    PerCompartment,
    /// Raw SVD of the data matrix, no centring or scaling.
    None,
}

/// Fitted PCA basis with its normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomBasis {
    /// Per-variable offset subtracted before projection.
    pub mean: Vec<f64>,
    /// Per-variable scale divided out before projection (> 0).
    pub std: Vec<f64>,
    /// Orthonormal basis, row-major `n_vars x m`.
    pub basis: Vec<f64>,
    /// Top-m singular values, non-increasing.
    pub singular_values: Vec<f64>,
    pub n_vars: usize,
    pub m: usize,
    pub normalization: Normalization,
    /// Sum of all squared singular values of the full spectrum.
    pub total_sq: f64,
}

/// Latent coefficients of a snapshot series on a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeries {
    /// Row-major `rows x m`.
    pub coeffs: Vec<f64>,
    pub rows: usize,
    pub m: usize,
    /// Fingerprint of the basis that produced the coefficients.
    pub basis_id: String,
}

impl LatentSeries {
    #[inline]
    pub fn level(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.m..(i + 1) * self.m]
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

impl RomBasis {
    /// Deterministic content fingerprint used as provenance id.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(8 * (self.basis.len() + self.mean.len()));
        for v in self.basis.iter().chain(&self.singular_values).chain(&self.mean).chain(&self.std) {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        format!("{:016x}", fnv1a(&bytes))
    }

    /// Fraction of total variance captured by the first `k` components.
    pub fn explained_variance(&self, k: usize) -> f64 {
        let k = k.min(self.m);
        let cap: f64 = self.singular_values[..k].iter().map(|s| s * s).sum();
        cap / self.total_sq
    }
}

/// One-sided Jacobi orthogonalisation of the columns of `cols` (each of
/// length `len`). On return the columns are mutually orthogonal; their
/// norms are the singular values.
fn jacobi_orthogonalise(cols: &mut [Vec<f64>], len: usize) -> Result<(), RomError> {
    let n = cols.len();
    let tol = 3e-13;
    let max_sweeps = 60;
    // columns this far below the matrix scale are numerically null
    // (rank-deficient inputs) and are excluded from rotations
    let total_sq: f64 = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum();
    let floor = total_sq * 1e-28;
    for _sweep in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for k in 0..len {
                    alpha += cols[i][k] * cols[i][k];
                    beta += cols[j][k] * cols[j][k];
                    gamma += cols[i][k] * cols[j][k];
                }
                if alpha <= floor || beta <= floor {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..len {
                    let vi = cols[i][k];
                    let vj = cols[j][k];
                    cols[i][k] = c * vi - s * vj;
                    cols[j][k] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(RomError::SvdConvergence(60))
}

fn cg_name(c: Compartment, g: Group) -> String {
    format!("{}_{}", c.short(), g.short())
}

/// Fit a truncated PCA basis of `m` components to the snapshot matrix.
pub fn fit_pca(
    snapshots: &SnapshotMatrix,
    m: usize,
    normalization: Normalization,
) -> Result<RomBasis, RomError> {
    let (rows, n_vars) = (snapshots.rows, snapshots.n_vars);
    if rows < 2 {
        return Err(RomError::TooFewRows(rows));
    }
    let max_m = rows.min(n_vars);
    if m == 0 || m > max_m {
        return Err(RomError::TooManyComponents { m, max: max_m });
    }

    let mut mean = vec![0.0; n_vars];
    let mut std = vec![1.0; n_vars];
    if normalization == Normalization::PerCompartment {
        // pooled mean/std per (compartment, group) over cells and time
        let n_cells = n_vars / N_FIELDS;
        for (fi, (c, g)) in field_order().into_iter().enumerate() {
            let lo = fi * n_cells;
            let hi = lo + n_cells;
            let count = (rows * n_cells) as f64;
            let mut acc = 0.0;
            for r in 0..rows {
                for v in &snapshots.row(r)[lo..hi] {
                    acc += v;
                }
            }
            let pooled_mean = acc / count;
            let mut var = 0.0;
            for r in 0..rows {
                for v in &snapshots.row(r)[lo..hi] {
                    let d = v - pooled_mean;
                    var += d * d;
                }
            }
            let pooled_std = (var / count).sqrt();
            if pooled_std == 0.0 {
                return Err(RomError::ZeroVariance { name: cg_name(c, g) });
            }
            for s in &mut std[lo..hi] {
                *s = pooled_std;
            }
        }
        // per-column centring (absorbs the pooled means)
        for j in 0..n_vars {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += snapshots.row(r)[j];
            }
            mean[j] = acc / rows as f64;
        }
    }

    // scaled matrix transposed: one column per time level, length n_vars
    let mut cols: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            let row = snapshots.row(r);
            (0..n_vars).map(|j| (row[j] - mean[j]) / std[j]).collect()
        })
        .collect();
    jacobi_orthogonalise(&mut cols, n_vars)?;

    let mut norms: Vec<(usize, f64)> =
        cols.iter().enumerate().map(|(i, c)| (i, c.iter().map(|v| v * v).sum::<f64>().sqrt())).collect();
    let total_sq: f64 = norms.iter().map(|(_, s)| s * s).sum();
    norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut basis = vec![0.0; n_vars * m];
    let mut singular_values = Vec::with_capacity(m);
    for (k, &(ci, sigma)) in norms.iter().take(m).enumerate() {
        singular_values.push(sigma);
        if sigma > 0.0 {
            // sign convention: largest-magnitude entry positive
            let mut best = 0;
            for (idx, v) in cols[ci].iter().enumerate() {
                if v.abs() > cols[ci][best].abs() {
                    best = idx;
                }
            }
            let flip = if cols[ci][best] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n_vars {
                basis[j * m + k] = flip * cols[ci][j] / sigma;
            }
        }
    }
    Ok(RomBasis { mean, std, basis, singular_values, n_vars, m, normalization, total_sq })
}

/// Project a physical state row onto the latent space.
pub fn project(basis: &RomBasis, state_row: &[f64]) -> Result<Vec<f64>, RomError> {
    if state_row.len() != basis.n_vars {
        return Err(RomError::DimensionMismatch { expected: basis.n_vars, got: state_row.len() });
    }
    let mut out = vec![0.0; basis.m];
    for j in 0..basis.n_vars {
        let v = (state_row[j] - basis.mean[j]) / basis.std[j];
        for k in 0..basis.m {
            out[k] += basis.basis[j * basis.m + k] * v;
        }
    }
    Ok(out)
}

/// Map latent coefficients back to a physical state row.
pub fn reconstruct(basis: &RomBasis, latent: &[f64]) -> Result<Vec<f64>, RomError> {
    if latent.len() != basis.m {
        return Err(RomError::DimensionMismatch { expected: basis.m, got: latent.len() });
    }
    let mut out = vec![0.0; basis.n_vars];
    for j in 0..basis.n_vars {
        let mut acc = 0.0;
        for k in 0..basis.m {
            acc += basis.basis[j * basis.m + k] * latent[k];
        }
        out[j] = acc * basis.std[j] + basis.mean[j];
    }
    Ok(out)
}

/// Project every snapshot row; returns the latent series tagged with the
/// basis fingerprint.
pub fn project_series(basis: &RomBasis, snapshots: &SnapshotMatrix) -> Result<LatentSeries, RomError> {
    let mut coeffs = Vec::with_capacity(snapshots.rows * basis.m);
    for r in 0..snapshots.rows {
        coeffs.extend_from_slice(&project(basis, snapshots.row(r))?);
    }
    Ok(LatentSeries { coeffs, rows: snapshots.rows, m: basis.m, basis_id: basis.fingerprint() })
}

/// Diagonal of the principal-component weight matrix W_alpha: the stored
/// singular values.
pub fn pc_weight_matrix(basis: &RomBasis) -> Vec<f64> {
    basis.singular_values.clone()
}

/// The W_alpha-weighted quadratic form (a-b)^T W (a-b) for diagonal W.
pub fn weighted_sq_mismatch(w_diag: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((w, x), y) in w_diag.iter().zip(a).zip(b) {
        let d = x - y;
        acc += w * d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn series_of(n: usize, n_cells: usize) -> Vec<StateField> {
        let mut out = Vec::new();
        for i in 0..n {
            let mut s = StateField::zeros(n_cells);
            for (fi, f) in s.fields.iter_mut().enumerate() {
                for (ci, v) in f.iter_mut().enumerate() {
                    *v = (i as f64 * 0.1 + fi as f64 + 0.01 * ci as f64).sin() + 2.0;
                }
            }
            s.t = 1000.0 * i as f64;
            out.push(s);
        }
        out
    }

    #[test]
    fn snapshot_sampling_counts() {
        let series = series_of(3880, 2);
        let m = build_snapshots(&series, 10).unwrap();
        assert_eq!(m.rows, 388);
        let m1 = build_snapshots(&series, 1).unwrap();
        assert_eq!(m1.rows, 3880);
        assert!(build_snapshots(&[], 10).is_err());
        assert!(build_snapshots(&series, 0).is_err());
    }

    #[test]
    fn snapshot_rows_roundtrip_bitwise() {
        let series = series_of(25, 3);
        let m = build_snapshots(&series, 5).unwrap();
        for (r, src_idx) in [(0usize, 0usize), (1, 5), (4, 20)] {
            let back = StateField::from_flat(m.row(r), m.times[r]);
            assert_eq!(back, series[src_idx]);
        }
        assert!(m.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rank_one_data_fully_explained() {
        let n_vars = 16;
        let rows = 10;
        let dir: Vec<f64> = (0..n_vars).map(|j| ((j * 7 % 5) as f64) - 2.0).collect();
        let mut data = Vec::new();
        for r in 0..rows {
            let a = (r as f64 + 1.0) * 0.37;
            data.extend(dir.iter().map(|d| a * d));
        }
        let snap = SnapshotMatrix { rows, n_vars, stride: 1, data, times: (0..rows).map(|r| r as f64).collect() };
        let b = fit_pca(&snap, 1, Normalization::None).unwrap();
        assert!((b.explained_variance(1) - 1.0).abs() < 1e-12);
    }

    /// Dense oracle: eigen-decomposition of the Gram matrix X^T X by the
    /// classical two-sided Jacobi method for symmetric matrices. Entirely
    /// independent of the one-sided route used by `fit_pca`.
    fn gram_eigenvalues(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut g = vec![0.0; cols * cols];
        for i in 0..cols {
            for j in 0..cols {
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += data[r * cols + i] * data[r * cols + j];
                }
                g[i * cols + j] = acc;
            }
        }
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..cols {
                for j in (i + 1)..cols {
                    off += g[i * cols + j].abs();
                }
            }
            if off < 1e-13 {
                break;
            }
            for p in 0..cols {
                for q in (p + 1)..cols {
                    let apq = g[p * cols + q];
                    if apq.abs() < 1e-18 {
                        continue;
                    }
                    let app = g[p * cols + p];
                    let aqq = g[q * cols + q];
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for k in 0..cols {
                        let akp = g[k * cols + p];
                        let akq = g[k * cols + q];
                        g[k * cols + p] = c * akp - s * akq;
                        g[k * cols + q] = s * akp + c * akq;
                    }
                    for k in 0..cols {
                        let apk = g[p * cols + k];
                        let aqk = g[q * cols + k];
                        g[p * cols + k] = c * apk - s * aqk;
                        g[q * cols + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..cols).map(|i| g[i * cols + i]).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    #[test]
    fn random_matrix_matches_dense_gram_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (rows, cols) = (20, 8);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let snap = SnapshotMatrix {
            rows,
            n_vars: cols,
            stride: 1,
            data: data.clone(),
            times: (0..rows).map(|r| r as f64).collect(),
        };
        let b = fit_pca(&snap, 8, Normalization::None).unwrap();
        let ev = gram_eigenvalues(&data, rows, cols);
        let total: f64 = ev.iter().sum();
        assert!((b.total_sq - total).abs() <= 1e-8 * total);
        for (k, lam) in ev.iter().enumerate() {
            let s2 = b.singular_values[k] * b.singular_values[k];
            assert!((s2 - lam).abs() <= 1e-8 * total, "sigma^2[{k}]={s2} vs oracle {lam}");
        }
        // orthonormality of the basis columns
        for i in 0..b.m {
            for j in i..b.m {
                let mut dot = 0.0;
                for v in 0..cols {
                    dot += b.basis[v * b.m + i] * b.basis[v * b.m + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-10, "basis^T basis [{i},{j}] = {dot}");
            }
        }
        // variance fractions sum to 1 over the full spectrum
        let frac_sum: f64 = (0..8).map(|k| b.singular_values[k] * b.singular_values[k] / b.total_sq).sum();
        assert!((frac_sum - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn projection_linear_under_none() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (rows, cols) = (12, 6);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let snap = SnapshotMatrix { rows, n_vars: cols, stride: 1, data, times: (0..rows).map(|r| r as f64).collect() };
        let b = fit_pca(&snap, 4, Normalization::None).unwrap();
        let x: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, bb) = (0.7, -1.3);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + bb * v).collect();
        let p_combo = project(&b, &combo).unwrap();
        let px = project(&b, &x).unwrap();
        let py = project(&b, &y).unwrap();
        for k in 0..b.m {
            assert!((p_combo[k] - (a * px[k] + bb * py[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn roundtrip_in_span_and_mean_state() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let rows = 15;
        let data: Vec<f64> = (0..rows * 8).map(|_| rng.gen_range(0.0..5.0)).collect();
        // 8 variables = 8 fields of one cell each, so per-compartment applies
        let snap = SnapshotMatrix { rows, n_vars: 8, stride: 1, data, times: (0..rows).map(|r| r as f64).collect() };
        let b = fit_pca(&snap, 6, Normalization::PerCompartment).unwrap();
        // a vector already in the span: reconstruct(project(x)) == x
        let lat: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = reconstruct(&b, &lat).unwrap();
        let lat2 = project(&b, &x).unwrap();
        let x2 = reconstruct(&b, &lat2).unwrap();
        for (u, v) in x.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-10);
        }
        // zero latent reconstructs the stored mean state
        let mean_state = reconstruct(&b, &vec![0.0; 6]).unwrap();
        for (v, m) in mean_state.iter().zip(&b.mean) {
            assert!((v - m).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_compartment_named() {
        // all-zero first compartment-group (one cell per field)
        let rows = 6;
        let mut data = Vec::new();
        for r in 0..rows {
            let mut row = vec![0.0; 8];
            for (j, value) in row.iter_mut().enumerate().skip(1) {
                *value = (r * 3 + j) as f64;
            }
            data.extend(row);
        }
        let snap = SnapshotMatrix { rows, n_vars: 8, stride: 1, data, times: (0..rows).map(|r| r as f64).collect() };
        let err = fit_pca(&snap, 2, Normalization::PerCompartment).unwrap_err();
        assert!(err.to_string().contains("S_H"), "error should name the variable: {err}");
    }

    #[test]
    fn weight_matrix_is_singular_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (rows, cols) = (10, 5);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let snap = SnapshotMatrix { rows, n_vars: cols, stride: 1, data, times: (0..rows).map(|r| r as f64).collect() };
        let b = fit_pca(&snap, 4, Normalization::None).unwrap();
        let w = pc_weight_matrix(&b);
        assert_eq!(w, b.singular_values);
        // weighted quadratic form vs a hand loop
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = weighted_sq_mismatch(&w, &a, &c);
        let mut hand = 0.0;
        for k in 0..4 {
            hand += w[k] * (a[k] - c[k]) * (a[k] - c[k]);
        }
        assert!((got - hand).abs() <= 1e-12 * hand.abs().max(1.0));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let snap = SnapshotMatrix {
            rows: 4,
            n_vars: 8,
            stride: 1,
            data: (0..32).map(|i| i as f64).collect(),
            times: vec![0.0, 1.0, 2.0, 3.0],
        };
        let b = fit_pca(&snap, 2, Normalization::None).unwrap();
        assert!(project(&b, &[1.0; 7]).is_err());
        assert!(reconstruct(&b, &[1.0; 3]).is_err());
        assert!(fit_pca(&snap, 9, Normalization::None).is_err());
    }
}
