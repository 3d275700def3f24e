//! Classical single-group SEIRS point equations with vital dynamics.

use super::SeirsError;

/// Parameters of the classical (single-group) SEIRS system, all rates in
/// consistent units (the solver is unit-agnostic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    /// Infection rate beta.
    pub beta: f64,
    /// Incubation rate sigma.
    pub sigma: f64,
    /// Recovery rate gamma.
    pub gamma: f64,
    /// Immunity-loss rate xi.
    pub xi: f64,
    /// Birth rate mu.
    pub mu: f64,
    /// Death rate nu (shared by all compartments).
    pub nu: f64,
}

/// Time derivatives (dS, dE, dI, dR) of the classical SEIRS system:
///
/// dS/dt = mu*N - beta*S*I/N + xi*R - nu*S
/// dE/dt = beta*S*I/N - sigma*E - nu*E
/// dI/dt = sigma*E - gamma*I - nu*I
/// dR/dt = gamma*I - xi*R - nu*R
pub fn classical_rhs(
    state: (f64, f64, f64, f64),
    p: &ClassicalParams,
) -> Result<(f64, f64, f64, f64), SeirsError> {
    let (s, e, i, r) = state;
    for (v, name) in [(s, "S"), (e, "E"), (i, "I"), (r, "R")] {
        if !v.is_finite() {
            return Err(SeirsError::NonFinite { context: format!("classical_rhs input {name}={v}") });
        }
    }
    let n = s + e + i + r;
    if n <= 0.0 {
        return Err(SeirsError::EmptyPopulation { n });
    }
    let infection = p.beta * s * i / n;
    let ds = p.mu * n - infection + p.xi * r - p.nu * s;
    let de = infection - p.sigma * e - p.nu * e;
    let di = p.sigma * e - p.gamma * i - p.nu * i;
    let dr = p.gamma * i - p.xi * r - p.nu * r;
    Ok((ds, de, di, dr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_susceptible_balanced_vitals_is_stationary() {
        let p = ClassicalParams { beta: 0.3, sigma: 0.2, gamma: 0.1, xi: 0.0, mu: 0.01, nu: 0.01 };
        let (ds, de, di, dr) = classical_rhs((1000.0, 0.0, 0.0, 0.0), &p).unwrap();
        assert_eq!(ds, 0.0);
        assert_eq!(de, 0.0);
        assert_eq!(di, 0.0);
        assert_eq!(dr, 0.0);
    }

    #[test]
    fn all_processes_off() {
        let p = ClassicalParams { beta: 0.0, sigma: 0.0, gamma: 0.0, xi: 0.0, mu: 0.0, nu: 0.0 };
        let (ds, de, di, dr) = classical_rhs((900.0, 50.0, 40.0, 10.0), &p).unwrap();
        assert_eq!((ds, de, di, dr), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_evaluated_mixed_state() {
        // Rates per day: beta = 0.3, sigma = 1/4.5, gamma = 1/7, everything
        // else off. Expected values evaluated independently term by term.
        let p = ClassicalParams {
            beta: 0.3,
            sigma: 1.0 / 4.5,
            gamma: 1.0 / 7.0,
            xi: 0.0,
            mu: 0.0,
            nu: 0.0,
        };
        let (s, e, i, r) = (900.0, 50.0, 40.0, 10.0);
        let (ds, de, di, dr) = classical_rhs((s, e, i, r), &p).unwrap();
        let infection = 0.3 * 900.0 * 40.0 / 1000.0; // 10.8
        let incubation = 50.0 / 4.5;
        let recovery = 40.0 / 7.0;
        assert!((ds - (-infection)).abs() < 1e-12);
        assert!((de - (infection - incubation)).abs() < 1e-12);
        assert!((di - (incubation - recovery)).abs() < 1e-12);
        assert!((dr - recovery).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let p = ClassicalParams { beta: 0.3, sigma: 0.2, gamma: 0.1, xi: 0.0, mu: 0.0, nu: 0.0 };
        assert!(classical_rhs((f64::NAN, 0.0, 0.0, 0.0), &p).is_err());
        assert!(classical_rhs((f64::INFINITY, 0.0, 1.0, 0.0), &p).is_err());
        assert!(classical_rhs((0.0, 0.0, 0.0, 0.0), &p).is_err());
    }
}
