//! Second-order control-volume discretization of div(k grad u).

use crate::grid::GridSpec;

/// Face diffusion coefficient: arithmetic mean of the cell values, zeroed
/// whenever either side blocks transport. Domain edges have no faces, which
/// realises the zero-flux boundary condition.
#[inline]
pub fn face_k(k_a: f64, k_b: f64) -> f64 {
    if k_a == 0.0 || k_b == 0.0 {
        0.0
    } else {
        0.5 * (k_a + k_b)
    }
}

/// Per-cell contributions of div(k grad u) with the 5-point (7-point in
/// 3-D) stencil and face-averaged k. Zero-flux at domain edges and at faces
/// into cells with k = 0.
pub fn apply_diffusion(field: &[f64], k: &[f64], grid: &GridSpec) -> Vec<f64> {
    assert_eq!(field.len(), grid.n_cells());
    assert_eq!(k.len(), grid.n_cells());
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut out = vec![0.0; field.len()];
    for cell in 0..field.len() {
        let mut acc = 0.0;
        for nb in grid.neighbours(cell) {
            let kf = face_k(k[cell], k[nb]);
            acc += kf * (field[nb] - field[cell]);
        }
        out[cell] = acc * inv_h2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_grid(n: usize) -> GridSpec {
        // unit spacing: domain length equals the cell count
        GridSpec::new(n, 1, 1, n as f64, vec![3; n]).unwrap()
    }

    #[test]
    fn uniform_field_has_zero_divergence() {
        let g = GridSpec::default_cross();
        let field = vec![7.5; g.n_cells()];
        let k = vec![3.0; g.n_cells()];
        assert!(apply_diffusion(&field, &k, &g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_k_everywhere() {
        let g = line_grid(4);
        let field = vec![1.0, -2.0, 5.0, 0.5];
        let k = vec![0.0; 4];
        assert!(apply_diffusion(&field, &k, &g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_d_stencil_by_hand() {
        // 3x1 grid, uniform k, field (0,1,0), unit spacing -> (k, -2k, k)
        let g = line_grid(3);
        let kval = 2.25;
        let out = apply_diffusion(&[0.0, 1.0, 0.0], &[kval; 3], &g);
        assert_eq!(out, vec![kval, -2.0 * kval, kval]);
    }

    #[test]
    fn sums_to_zero_and_symmetric() {
        // zero-flux conservation: sum over cells vanishes for any field;
        // <v, D u> = <u, D v> for uniform k.
        let g = GridSpec::default_cross();
        let n = g.n_cells();
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            u[i] = ((i * 37 % 101) as f64).sin();
            v[i] = ((i * 17 % 89) as f64).cos();
        }
        let k: Vec<f64> = (0..n).map(|i| if g.is_blocked(i) { 0.0 } else { 1.5 }).collect();
        let du = apply_diffusion(&u, &k, &g);
        let dv = apply_diffusion(&v, &k, &g);
        let total: f64 = du.iter().sum();
        assert!(total.abs() < 1e-12 * u.iter().map(|x| x.abs()).sum::<f64>());
        let vdu: f64 = v.iter().zip(&du).map(|(a, b)| a * b).sum();
        let udv: f64 = u.iter().zip(&dv).map(|(a, b)| a * b).sum();
        assert!((vdu - udv).abs() < 1e-10);
        // negative semidefinite: <u, D u> <= 0
        let udu: f64 = u.iter().zip(&du).map(|(a, b)| a * b).sum();
        assert!(udu <= 1e-12);
    }

    #[test]
    fn blocked_faces_carry_no_flux() {
        let g = GridSpec::default_cross();
        let n = g.n_cells();
        let mut field = vec![0.0; n];
        // load the cell adjacent to a blocked corner block
        let src = g.cell_index(2, 0, 0);
        field[src] = 10.0;
        let k: Vec<f64> = (0..n).map(|i| if g.is_blocked(i) { 0.0 } else { 4.0 }).collect();
        let out = apply_diffusion(&field, &k, &g);
        let blocked_nb = g.cell_index(1, 0, 0);
        assert_eq!(out[blocked_nb], 0.0);
        assert!(out[src] < 0.0);
    }
}
