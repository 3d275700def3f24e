//! R0 eigenvalue mode: zero time derivatives, linearised infection term,
//! and lambda0 scaling the sigma*E progression source in the I equations.
//!
//! The generalised problem A x = lambda0 B x (B = the sigma*E source
//! operator) is solved by inverse power iteration: each sweep solves
//! A y = B x with the same Block FBGS machinery as the transient stepper
//! and renormalises over the E and I fields. The S and R equations carry
//! the 1/eps diagonal, which pins those fields to ~0; they are excluded
//! from the mode normalisation.

use super::transient::{fbgs_pair_solve, pair_fields_mut, SolverOptions, Stencil};
use super::SeirsError;
use crate::grid::GridSpec;
use crate::model::{transfer_coeffs_eigen, ModelParams, SolveMode, TransferCoeffs};
use crate::state::{Compartment, Group, StateField, N_FIELDS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative tolerance on lambda0 between power-iteration sweeps.
    pub lambda_tol: f64,
    /// Residual target ||A x - lambda0 B x||_2 / ||x||_2.
    pub residual_target: f64,
    pub max_sweeps: usize,
    /// Inner linear-solver tolerances.
    pub linear: SolverOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            lambda_tol: 1e-10,
            residual_target: 1e-8,
            max_sweeps: 10_000,
            linear: SolverOptions {
                fbgs_max: 50_000,
                block_tol: 1e-11,
                block_max: 400,
                ..SolverOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub lambda0: f64,
    /// Basic reproduction number, 1/lambda0.
    pub r0: f64,
    /// Converged mode, normalised to unit L2 norm over the E and I fields.
    pub mode: StateField,
    /// ||A x - lambda0 B x||_2 / ||x||_2 at the returned mode.
    pub residual_norm: f64,
}

struct EigenSystem<'a> {
    params: &'a ModelParams,
    stencil: Stencil,
    transfer: Vec<TransferCoeffs>,
}

impl<'a> EigenSystem<'a> {
    fn build(params: &'a ModelParams, grid: &GridSpec) -> Result<Self, SeirsError> {
        let stencil = Stencil::build(grid, params, SolveMode::Eigen);
        let mut transfer = vec![TransferCoeffs::ZERO; grid.n_cells()];
        for &cell in &stencil.active {
            transfer[cell] = transfer_coeffs_eigen(grid.region(cell), params)?;
        }
        Ok(Self { params, stencil, transfer })
    }

    /// Reaction sink on a compartment's own field (excluding nu and the
    /// transfer diagonal): the infection sink is linearised away from S.
    fn own_sink(&self, c: Compartment, g: Group) -> f64 {
        match c {
            Compartment::Susceptible => 0.0,
            Compartment::Exposed => self.params.sigma,
            Compartment::Infectious => self.params.gamma(g),
            Compartment::Recovered => self.params.xi[g.index()],
        }
    }

    /// Cross-compartment sources feeding compartment `c` of group `g`,
    /// evaluated on `state` (the linearised infection term is beta_h I_h).
    fn cross_source(&self, c: Compartment, g: Group, state: &StateField, cell: usize) -> f64 {
        let p = self.params;
        let gi = g.index();
        match c {
            Compartment::Susceptible => {
                p.mu[gi] * state.group_population(g, cell)
                    - p.beta(g) * state.field(Compartment::Infectious, g)[cell]
                    + p.xi[gi] * state.field(Compartment::Recovered, g)[cell]
            }
            Compartment::Exposed => p.beta(g) * state.field(Compartment::Infectious, g)[cell],
            Compartment::Infectious => 0.0, // the sigma*E source belongs to B
            Compartment::Recovered => p.gamma(g) * state.field(Compartment::Infectious, g)[cell],
        }
    }

    /// Solve A y = B x in place (y is warm-started from its current values).
    fn solve(&self, y: &mut StateField, bx: &StateField, opts: &SolverOptions) -> Result<(), SeirsError> {
        let n = y.n_cells();
        let mut a = vec![[0.0f64; 4]; n];
        let mut b = vec![[0.0f64; 2]; n];
        let mut last = f64::INFINITY;
        for _pass in 0..opts.block_max {
            let mut pass_delta: f64 = 0.0;
            for &c in &super::transient::BLOCK_ORDER {
                let ci = c.index();
                for &cell in &self.stencil.active {
                    let tc = &self.transfer[cell].lambda[ci];
                    for g in Group::ALL {
                        let gi = g.index();
                        let diag = self.params.nu[ci][gi]
                            + self.own_sink(c, g)
                            + tc[gi][gi]
                            + self.stencil.diag_k[gi][cell];
                        let off = tc[gi][1 - gi];
                        if gi == 0 {
                            a[cell][0] = diag;
                            a[cell][1] = off;
                        } else {
                            a[cell][3] = diag;
                            a[cell][2] = off;
                        }
                        b[cell][gi] = self.cross_source(c, g, y, cell)
                            + bx.field(c, g)[cell];
                    }
                }
                let (fh, fm) = pair_fields_mut(y, c);
                let d = fbgs_pair_solve(fh, fm, &a, &b, &self.stencil, opts, 1.0, None)?;
                pass_delta = pass_delta.max(d);
            }
            last = pass_delta;
            if pass_delta <= opts.block_tol {
                return Ok(());
            }
        }
        Err(SeirsError::Convergence {
            stage: "eigen Block FBGS",
            step: None,
            iters: opts.block_max,
            last_update: last,
            tol: opts.block_tol,
        })
    }

    /// Matrix-free A x (all eight rows).
    fn apply_a(&self, x: &StateField) -> StateField {
        let n = x.n_cells();
        let mut out = StateField::zeros(n);
        for c in Compartment::ALL {
            let ci = c.index();
            for g in Group::ALL {
                let gi = g.index();
                let fi = crate::state::field_index(c, g);
                for &cell in &self.stencil.active {
                    let tc = &self.transfer[cell].lambda[ci];
                    let mut acc = (self.params.nu[ci][gi] + self.own_sink(c, g) + tc[gi][gi])
                        * x.fields[fi][cell];
                    // transfer coupling to the other group
                    let other = crate::state::field_index(c, if gi == 0 { Group::Mobile } else { Group::Home });
                    acc += tc[gi][1 - gi] * x.fields[other][cell];
                    // diffusion: -div(k grad)
                    let (s, e) = (self.stencil.offsets[cell], self.stencil.offsets[cell + 1]);
                    let mut diff = self.stencil.diag_k[gi][cell] * x.fields[fi][cell];
                    for j in s..e {
                        diff -= self.stencil.face_k[gi][j] * x.fields[fi][self.stencil.nb[j]];
                    }
                    acc += diff;
                    acc -= self.cross_source(c, g, x, cell);
                    out.fields[fi][cell] = acc;
                }
            }
        }
        out
    }

    /// Matrix-free B x: the sigma*E source entering the I rows.
    fn apply_b(&self, x: &StateField) -> StateField {
        let n = x.n_cells();
        let mut out = StateField::zeros(n);
        for g in Group::ALL {
            let e = crate::state::field_index(Compartment::Exposed, g);
            let i = crate::state::field_index(Compartment::Infectious, g);
            for &cell in &self.stencil.active {
                out.fields[i][cell] = self.params.sigma * x.fields[e][cell];
            }
        }
        out
    }
}

fn ei_norm(x: &StateField) -> f64 {
    let mut acc = 0.0;
    for c in [Compartment::Exposed, Compartment::Infectious] {
        for g in Group::ALL {
            for &v in x.field(c, g) {
                acc += v * v;
            }
        }
    }
    acc.sqrt()
}

fn all_norm(x: &StateField) -> f64 {
    let mut acc = 0.0;
    for f in &x.fields {
        for &v in f {
            acc += v * v;
        }
    }
    acc.sqrt()
}

fn dot_all(a: &StateField, b: &StateField) -> f64 {
    let mut acc = 0.0;
    for f in 0..N_FIELDS {
        for (x, y) in a.fields[f].iter().zip(&b.fields[f]) {
            acc += x * y;
        }
    }
    acc
}

/// Solve the R0 eigenvalue problem by inverse power iteration.
pub fn solve_eigen(
    params: &ModelParams,
    grid: &GridSpec,
    opts: &EigenOptions,
) -> Result<EigenResult, SeirsError> {
    let sys = EigenSystem::build(params, grid)?;
    let n = grid.n_cells();

    // uniform positive start on the E and I fields of active cells
    let mut x = StateField::zeros(n);
    for c in [Compartment::Exposed, Compartment::Infectious] {
        for g in Group::ALL {
            let fi = crate::state::field_index(c, g);
            for &cell in &sys.stencil.active {
                x.fields[fi][cell] = 1.0;
            }
        }
    }
    let nrm = ei_norm(&x);
    for f in &mut x.fields {
        for v in f.iter_mut() {
            *v /= nrm;
        }
    }

    let mut y = x.clone();
    let mut lambda_prev = f64::INFINITY;
    let mut last_rel = f64::INFINITY;
    for _sweep in 0..opts.max_sweeps {
        let bx = sys.apply_b(&x);
        sys.solve(&mut y, &bx, &opts.linear)?;
        let nrm = ei_norm(&y);
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(SeirsError::NonFinite { context: "eigen iterate norm".into() });
        }
        for f in 0..N_FIELDS {
            for cell in 0..n {
                x.fields[f][cell] = y.fields[f][cell] / nrm;
            }
        }
        let ax = sys.apply_a(&x);
        let bx = sys.apply_b(&x);
        let lambda0 = dot_all(&x, &ax) / dot_all(&x, &bx);
        let mut res = StateField::zeros(n);
        for f in 0..N_FIELDS {
            for cell in 0..n {
                res.fields[f][cell] = ax.fields[f][cell] - lambda0 * bx.fields[f][cell];
            }
        }
        let residual_norm = all_norm(&res) / all_norm(&x);
        last_rel = ((lambda0 - lambda_prev) / lambda0).abs();
        if last_rel <= opts.lambda_tol && residual_norm <= opts.residual_target {
            return Ok(EigenResult { lambda0, r0: 1.0 / lambda0, mode: x, residual_norm });
        }
        lambda_prev = lambda0;
    }
    Err(SeirsError::Convergence {
        stage: "inverse power iteration",
        step: None,
        iters: opts.max_sweeps,
        last_update: last_rel,
        tol: opts.lambda_tol,
    })
}
