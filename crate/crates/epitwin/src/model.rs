//! Model parameters of the extended SEIRS system and the intergroup
//! transfer-coefficient formulas for transient and eigenvalue modes.

use crate::grid::{REGION_BLOCKED, REGION_HOMES};
use crate::state::{Compartment, Group, N_COMPARTMENTS, N_GROUPS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("epsilon must be positive for the eigen-mode diagonal (got {0})")]
    ZeroEpsilon(f64),
}

/// Every SEIRS coefficient of the two-group extended model, in SI units.
///
/// Defaults follow the test-case parameterisation: 100 km domain, daily
/// forcing, UK-flavoured rates, dt = 1000 s and 3880 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Incubation rate, 1/s (incubation period 4.5 days).
    pub sigma: f64,
    /// Average infection duration per group, seconds. Not stated in the
    /// source material; defaults to 7 days for both groups.
    pub t_d: [f64; N_GROUPS],
    /// Within-group reproduction numbers R0_h (dimensionless).
    pub r0_group: [f64; N_GROUPS],
    /// Immunity-loss rate per group, 1/s.
    pub xi: [f64; N_GROUPS],
    /// Birth rate per group, 1/s.
    pub mu: [f64; N_GROUPS],
    /// Death rate per compartment and group, 1/s.
    pub nu: [[f64; N_GROUPS]; N_COMPARTMENTS],
    /// Transient diffusion coefficient for regions 2 and 3, m^2/s.
    pub k_transient: f64,
    /// Eigen-mode diffusion coefficient (0.05 x transient), m^2/s.
    pub k_eigen: f64,
    /// Whether the Home-group fields diffuse. The taught behaviour keeps
    /// home people in the home region, so this defaults to false.
    pub diffuse_home_group: bool,
    /// Transfer-rate scale in the home region, 1/s (1000 per day).
    pub lambda_hh_region2: f64,
    /// Home:mobile equilibrium ratio used by the eigen-mode transfers.
    pub r_ratio: f64,
    /// Regulariser guarding denominators and forming the eigen-mode 1/eps
    /// diagonal.
    pub epsilon: f64,
    /// Region id where the eigen-mode switch r_switch is 1. The equations
    /// print region 1; the surrounding text says the switch marks the home
    /// location, so the default is region 2. Both are selectable.
    pub eigen_home_region: u8,
    /// Seconds per day used by the daily forcing.
    pub t_one_day: f64,
    /// Time step, seconds.
    pub dt: f64,
    /// Number of transient steps.
    pub n_steps: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        let t_one_day = SECONDS_PER_DAY;
        let mu = 1.0 / (60.0 * 365.0 * t_one_day);
        let xi = 1.0 / (365.0 * t_one_day);
        let l = 1e5;
        let k = 2.5 * l * l / t_one_day;
        Self {
            sigma: 1.0 / (4.5 * t_one_day),
            t_d: [7.0 * t_one_day; 2],
            r0_group: [0.2, 10.0],
            xi: [xi; 2],
            mu: [mu; 2],
            nu: [[mu; 2]; 4],
            k_transient: k,
            k_eigen: 0.05 * k,
            diffuse_home_group: false,
            lambda_hh_region2: 1000.0 / t_one_day,
            r_ratio: 25.65,
            epsilon: 1e-10,
            eigen_home_region: REGION_HOMES,
            t_one_day,
            dt: 1000.0,
            n_steps: 3880,
        }
    }
}

impl ModelParams {
    /// Recovery rate gamma_h = 1/T_D_h.
    #[inline]
    pub fn gamma(&self, g: Group) -> f64 {
        1.0 / self.t_d[g.index()]
    }

    /// Within-group infection rate beta_hh = gamma_h * R0_h. Cross-group
    /// rates are zero.
    #[inline]
    pub fn beta(&self, g: Group) -> f64 {
        self.gamma(g) * self.r0_group[g.index()]
    }

    /// Diffusion coefficient for a (group, region) pair in the given mode.
    /// Region 1 blocks all transport.
    pub fn diffusion_k(&self, mode: SolveMode, g: Group, region: u8) -> f64 {
        if region == REGION_BLOCKED {
            return 0.0;
        }
        if g == Group::Home && !self.diffuse_home_group {
            return 0.0;
        }
        match mode {
            SolveMode::Transient => self.k_transient,
            SolveMode::Eigen => self.k_eigen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Transient,
    Eigen,
}

/// Day/night fraction: 0.5*sin(2*pi*t/T_one_day) + 0.5.
#[inline]
pub fn r_day(t: f64, t_one_day: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * t / t_one_day).sin() + 0.5
}

/// sign(F) with sign(0) = +1.
#[inline]
fn sign_pos(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Intergroup transfer coefficients lambda^c_{hh'} (1/s) for one cell.
/// Indexed `[compartment][h][h']`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferCoeffs {
    pub lambda: [[[f64; N_GROUPS]; N_GROUPS]; N_COMPARTMENTS],
}

impl TransferCoeffs {
    pub const ZERO: TransferCoeffs =
        TransferCoeffs { lambda: [[[0.0; N_GROUPS]; N_GROUPS]; N_COMPARTMENTS] };

    #[inline]
    pub fn get(&self, c: Compartment, h: Group, hp: Group) -> f64 {
        self.lambda[c.index()][h.index()][hp.index()]
    }
}

/// Transient-mode transfer coefficients for a cell in the given region,
/// driven by the cell's Home population and the time of day.
///
/// In the home region the target population is 1000*(1-R_DAY)+1000 and the
/// forcing F = (N_H - N_H_aim)/max{eps, N_H, N_H_aim} moves people out of
/// their homes in the day and back at night; all other regions have no
/// transfer. The same coefficients apply to all four compartments.
pub fn transfer_coeffs_transient(
    region: u8,
    n_home: f64,
    t: f64,
    params: &ModelParams,
) -> TransferCoeffs {
    let (aim, lambda_hh) = if region == REGION_HOMES {
        (1000.0 * (1.0 - r_day(t, params.t_one_day)) + 1000.0, params.lambda_hh_region2)
    } else {
        (0.0, 0.0)
    };
    let denom = params.epsilon.max(n_home).max(aim);
    let f = (n_home - aim) / denom;
    let s_h2m = 0.5 + 0.5 * sign_pos(f);
    let l_hh = 0.01 * lambda_hh * s_h2m * f;
    let l_mm = -lambda_hh * (1.0 - s_h2m) * f;
    let l_hm = lambda_hh * (1.0 - s_h2m) * f;
    let l_mh = -0.01 * lambda_hh * s_h2m * f;
    let per = [[l_hh, l_hm], [l_mh, l_mm]];
    TransferCoeffs { lambda: [per; N_COMPARTMENTS] }
}

/// Eigen-mode transfer coefficients for a cell in the given region.
///
/// The switch r_switch is 1 in `params.eigen_home_region`; the S and R
/// equations get a 1/eps diagonal that pins those fields to ~0.
pub fn transfer_coeffs_eigen(region: u8, params: &ModelParams) -> Result<TransferCoeffs, ModelError> {
    if params.epsilon <= 0.0 {
        return Err(ModelError::ZeroEpsilon(params.epsilon));
    }
    let r_switch = if region == params.eigen_home_region { 1.0 } else { 0.0 };
    let lam_hh = r_switch / params.t_one_day;
    let lam_mm = 10_000.0 * (1.0 - r_switch) / params.t_one_day;
    let big = 1.0 / params.epsilon;
    let l_hm = -lam_hh * params.r_ratio;
    let l_mh = -lam_hh;
    let sr = [[big, l_hm], [l_mh, big]];
    let ei = [[lam_hh + lam_mm, l_hm], [l_mh, lam_hh * params.r_ratio]];
    Ok(TransferCoeffs {
        lambda: [
            sr, // S
            ei, // E
            ei, // I
            sr, // R
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::REGION_TRAVEL;
    use crate::state::Compartment as C;
    use crate::state::Group as G;

    #[test]
    fn r_day_quarters() {
        let t1 = SECONDS_PER_DAY;
        assert_eq!(r_day(0.0, t1), 0.5);
        assert!((r_day(t1 / 4.0, t1) - 1.0).abs() < 1e-15);
        assert!(r_day(3.0 * t1 / 4.0, t1).abs() < 1e-15);
    }

    #[test]
    fn transient_no_transfer_outside_homes() {
        let p = ModelParams::default();
        let tc = transfer_coeffs_transient(REGION_TRAVEL, 1234.0, 5000.0, &p);
        assert_eq!(tc, TransferCoeffs::ZERO);
        let tc = transfer_coeffs_transient(REGION_BLOCKED, 0.0, 5000.0, &p);
        assert_eq!(tc, TransferCoeffs::ZERO);
    }

    #[test]
    fn transient_zero_forcing_at_target() {
        let p = ModelParams::default();
        let aim = 1000.0 * (1.0 - r_day(0.0, p.t_one_day)) + 1000.0;
        let tc = transfer_coeffs_transient(REGION_HOMES, aim, 0.0, &p);
        assert_eq!(tc, TransferCoeffs::ZERO);
    }

    #[test]
    fn transient_midday_overfull_home() {
        // N_H = 2000 at t = T/4: aim = 1000, F = 0.5, S_H2M = 1.
        let p = ModelParams::default();
        let t = p.t_one_day / 4.0;
        let tc = transfer_coeffs_transient(REGION_HOMES, 2000.0, t, &p);
        let lam = p.lambda_hh_region2;
        for c in C::ALL {
            assert!((tc.get(c, G::Home, G::Home) - 0.01 * lam * 0.5).abs() < 1e-18);
            assert!((tc.get(c, G::Mobile, G::Home) + 0.01 * lam * 0.5).abs() < 1e-18);
            assert_eq!(tc.get(c, G::Mobile, G::Mobile), 0.0);
            assert_eq!(tc.get(c, G::Home, G::Mobile), 0.0);
        }
    }

    #[test]
    fn transient_night_pull() {
        // t = 3T/4 (aim = 2000), N_H = 1000: F = -0.5, S_H2M = 0.
        let p = ModelParams::default();
        let t = 3.0 * p.t_one_day / 4.0;
        let tc = transfer_coeffs_transient(REGION_HOMES, 1000.0, t, &p);
        let lam = p.lambda_hh_region2;
        let f = -0.5;
        assert!((tc.get(C::Susceptible, G::Mobile, G::Mobile) - (-lam * f)).abs() < 1e-18);
        assert!((tc.get(C::Susceptible, G::Home, G::Mobile) - lam * f).abs() < 1e-18);
        assert_eq!(tc.get(C::Susceptible, G::Home, G::Home), 0.0);
        assert_eq!(tc.get(C::Susceptible, G::Mobile, G::Home), -0.0);
    }

    #[test]
    fn transient_conservation_identities() {
        // lambda_HH = -lambda_MH and lambda_MM = -lambda_HM for any forcing.
        let p = ModelParams::default();
        for &(n_h, t_frac) in &[(1700.0, 0.1), (900.0, 0.6), (2500.0, 0.85), (1500.0, 0.0)] {
            let tc = transfer_coeffs_transient(REGION_HOMES, n_h, t_frac * p.t_one_day, &p);
            for c in C::ALL {
                assert_eq!(tc.get(c, G::Home, G::Home), -tc.get(c, G::Mobile, G::Home));
                assert_eq!(tc.get(c, G::Mobile, G::Mobile), -tc.get(c, G::Home, G::Mobile));
            }
        }
    }

    #[test]
    fn eigen_diagonal_trick() {
        let p = ModelParams::default();
        let tc = transfer_coeffs_eigen(REGION_TRAVEL, &p).unwrap();
        assert_eq!(tc.get(C::Susceptible, G::Home, G::Home), 1e10);
        assert_eq!(tc.get(C::Recovered, G::Mobile, G::Mobile), 1e10);
    }

    #[test]
    fn eigen_switch_off_cell() {
        // r_switch = 0: lambda^E_HH = Lambda_MM = 10000/T_day, lambda^E_MM = 0.
        let p = ModelParams::default();
        let tc = transfer_coeffs_eigen(REGION_TRAVEL, &p).unwrap();
        let expect = 10_000.0 / p.t_one_day;
        assert_eq!(tc.get(C::Exposed, G::Home, G::Home), expect);
        assert_eq!(tc.get(C::Exposed, G::Mobile, G::Mobile), 0.0);
        assert_eq!(tc.get(C::Exposed, G::Home, G::Mobile), -0.0);
        assert_eq!(tc.get(C::Infectious, G::Home, G::Home), expect);
    }

    #[test]
    fn eigen_home_cell_couplings() {
        let p = ModelParams::default();
        let tc = transfer_coeffs_eigen(REGION_HOMES, &p).unwrap();
        let lam = 1.0 / p.t_one_day;
        assert_eq!(tc.get(C::Exposed, G::Home, G::Home), lam);
        assert_eq!(tc.get(C::Exposed, G::Mobile, G::Mobile), lam * p.r_ratio);
        assert_eq!(tc.get(C::Exposed, G::Home, G::Mobile), -lam * p.r_ratio);
        assert_eq!(tc.get(C::Infectious, G::Mobile, G::Home), -lam);
        // the 1/eps rows keep the same off-diagonals
        assert_eq!(tc.get(C::Susceptible, G::Home, G::Mobile), -lam * p.r_ratio);
    }

    #[test]
    fn eigen_rejects_zero_epsilon() {
        let mut p = ModelParams::default();
        p.epsilon = 0.0;
        assert!(transfer_coeffs_eigen(REGION_HOMES, &p).is_err());
    }

    #[test]
    fn default_param_values() {
        let p = ModelParams::default();
        assert_eq!(p.r_ratio, 25.65);
        assert_eq!(p.dt, 1000.0);
        assert_eq!(p.n_steps, 3880);
        assert!((p.k_transient - 2.5e10 / 86_400.0).abs() < 1e-6);
        assert!((p.k_eigen / p.k_transient - 0.05).abs() < 1e-15);
        assert!((p.beta(G::Mobile) - 10.0 / (7.0 * 86_400.0)).abs() < 1e-18);
        assert_eq!(p.mu[0], p.nu[2][0]);
    }
}
