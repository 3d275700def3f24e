//! Backward-Euler transient integration of the extended SEIRS system.
//!
//! Each step solves the implicit system for all eight fields. Nonlinear
//! terms (the infection term and the transfer coefficients) are evaluated
//! at the future time level by Picard iteration with Irons-Tuck adaptive
//! under-relaxation; inside each Picard pass the linear couplings are
//! converged by Block FBGS over the compartments, with per-compartment
//! FBGS sweeps that solve the (Home, Mobile) 2x2 cell block exactly so the
//! intergroup transfer conserves people identically.

use super::SeirsError;
use crate::grid::GridSpec;
use crate::model::{transfer_coeffs_transient, ModelParams, SolveMode, TransferCoeffs};
use crate::state::{Compartment, Group, StateField, N_FIELDS, N_GROUPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative-update tolerance of the Picard iteration.
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Relative-update tolerance of the per-compartment FBGS sweeps.
    pub fbgs_tol: f64,
    pub fbgs_max: usize,
    /// Relative-update tolerance of the Block FBGS over the compartments.
    pub block_tol: f64,
    pub block_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            picard_tol: 1e-10,
            picard_max: 50,
            fbgs_tol: 1e-12,
            fbgs_max: 500,
            block_tol: 1e-10,
            block_max: 200,
        }
    }
}

/// Precomputed grid stencil: active cells and face diffusion couplings
/// (already divided by h^2) per group.
pub(crate) struct Stencil {
    pub active: Vec<usize>,
    /// CSR offsets into `nb`/`face_k`, indexed by cell.
    pub offsets: Vec<usize>,
    pub nb: Vec<usize>,
    /// Face coupling coefficient kf/h^2 per adjacency entry, per group.
    pub face_k: [Vec<f64>; N_GROUPS],
    /// Sum of face couplings per cell, per group.
    pub diag_k: [Vec<f64>; N_GROUPS],
}

impl Stencil {
    pub fn build(grid: &GridSpec, params: &ModelParams, mode: SolveMode) -> Self {
        let n = grid.n_cells();
        let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
        let mut active = Vec::new();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut nb = Vec::new();
        let mut face_k: [Vec<f64>; N_GROUPS] = [Vec::new(), Vec::new()];
        let mut diag_k: [Vec<f64>; N_GROUPS] = [vec![0.0; n], vec![0.0; n]];
        offsets.push(0);
        for cell in 0..n {
            if !grid.is_blocked(cell) {
                active.push(cell);
                for nbc in grid.neighbours(cell) {
                    nb.push(nbc);
                    for g in Group::ALL {
                        let ka = params.diffusion_k(mode, g, grid.region(cell));
                        let kb = params.diffusion_k(mode, g, grid.region(nbc));
                        let kf = super::diffusion::face_k(ka, kb) * inv_h2;
                        face_k[g.index()].push(kf);
                        diag_k[g.index()][cell] += kf;
                    }
                }
            }
            offsets.push(nb.len());
        }
        Self { active, offsets, nb, face_k, diag_k }
    }
}

/// Picard-frozen nonlinear coefficients for one step.
struct StepCoeffs {
    transfer: Vec<TransferCoeffs>,
    /// Infection coefficient beta_h * I_h / max(N_h, eps) per group, per cell.
    binf: [Vec<f64>; N_GROUPS],
}

impl StepCoeffs {
    fn compute(guess: &StateField, t_future: f64, params: &ModelParams, grid: &GridSpec) -> Self {
        let n = grid.n_cells();
        let mut transfer = vec![TransferCoeffs::ZERO; n];
        let mut binf: [Vec<f64>; N_GROUPS] = [vec![0.0; n], vec![0.0; n]];
        for cell in 0..n {
            if grid.is_blocked(cell) {
                continue;
            }
            let n_home = guess.group_population(Group::Home, cell);
            transfer[cell] = transfer_coeffs_transient(grid.region(cell), n_home, t_future, params);
            for g in Group::ALL {
                let pop = guess.group_population(g, cell);
                let inf = guess.field(Compartment::Infectious, g)[cell];
                binf[g.index()][cell] = params.beta(g) * inf / pop.max(params.epsilon);
            }
        }
        Self { transfer, binf }
    }
}

fn state_scale(s: &StateField) -> f64 {
    let mut m: f64 = 1.0;
    for f in &s.fields {
        for &v in f {
            m = m.max(v.abs());
        }
    }
    m
}

struct TransientSystem<'a> {
    params: &'a ModelParams,
    old: &'a StateField,
    inv_dt: f64,
}

/// Solve one compartment's coupled (Home, Mobile) fields by FBGS sweeps,
/// given the latest values of the other compartments in `new`. Returns the
/// max relative change applied.
#[allow(clippy::too_many_arguments)]
fn solve_compartment(
    c: Compartment,
    new: &mut StateField,
    sys: &TransientSystem,
    coeffs: &StepCoeffs,
    stencil: &Stencil,
    opts: &SolverOptions,
    scale: f64,
    step: Option<usize>,
) -> Result<f64, SeirsError> {
    let p = sys.params;
    let nc = new.n_cells();
    let ci = c.index();
    // Per-cell 2x2 coefficients and rhs (diffusion handled inside sweeps).
    let mut a = vec![[0.0f64; 4]; nc]; // [a_hh, a_hm, a_mh, a_mm]
    let mut b = vec![[0.0f64; 2]; nc];
    for &cell in &stencil.active {
        let tc = &coeffs.transfer[cell].lambda[ci];
        let mut row_a = [0.0; 4];
        let mut row_b = [0.0; 2];
        for g in Group::ALL {
            let gi = g.index();
            let own_sink = match c {
                Compartment::Susceptible => coeffs.binf[gi][cell],
                Compartment::Exposed => p.sigma,
                Compartment::Infectious => p.gamma(g),
                Compartment::Recovered => p.xi[gi],
            };
            let diag = sys.inv_dt
                + p.nu[ci][gi]
                + own_sink
                + tc[gi][gi]
                + stencil.diag_k[gi][cell];
            let off = tc[gi][1 - gi];
            if gi == 0 {
                row_a[0] = diag;
                row_a[1] = off;
            } else {
                row_a[3] = diag;
                row_a[2] = off;
            }
            let source = match c {
                Compartment::Susceptible => {
                    p.mu[gi] * new.group_population(g, cell)
                        + p.xi[gi] * new.field(Compartment::Recovered, g)[cell]
                }
                Compartment::Exposed => {
                    coeffs.binf[gi][cell] * new.field(Compartment::Susceptible, g)[cell]
                }
                Compartment::Infectious => p.sigma * new.field(Compartment::Exposed, g)[cell],
                Compartment::Recovered => p.gamma(g) * new.field(Compartment::Infectious, g)[cell],
            };
            row_b[gi] = sys.inv_dt * sys.old.field(c, g)[cell] + source;
        }
        a[cell] = row_a;
        b[cell] = row_b;
    }

    let (fh, fm) = pair_fields_mut(new, c);
    fbgs_pair_solve(fh, fm, &a, &b, stencil, opts, scale, step)
}

/// Mutable borrows of the Home and Mobile field of one compartment.
pub(crate) fn pair_fields_mut(
    state: &mut StateField,
    c: Compartment,
) -> (&mut [f64], &mut [f64]) {
    let idx_h = crate::state::field_index(c, Group::Home);
    let idx_m = crate::state::field_index(c, Group::Mobile);
    debug_assert_eq!(idx_m, idx_h + 1);
    let (left, right) = state.fields.split_at_mut(idx_m);
    (left[idx_h].as_mut_slice(), right[0].as_mut_slice())
}

/// FBGS sweeps over the active cells for one compartment's (Home, Mobile)
/// pair: each cell update solves the local 2x2 exactly, with neighbour
/// diffusion terms taken at their latest values. `a` holds the per-cell
/// [a_hh, a_hm, a_mh, a_mm] coefficients (diffusion diagonal included) and
/// `b` the rhs without the neighbour terms. Returns the max relative change.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fbgs_pair_solve(
    fh: &mut [f64],
    fm: &mut [f64],
    a: &[[f64; 4]],
    b: &[[f64; 2]],
    stencil: &Stencil,
    opts: &SolverOptions,
    scale: f64,
    step: Option<usize>,
) -> Result<f64, SeirsError> {
    let mut total_delta: f64 = 0.0;
    let mut last = f64::INFINITY;
    for _sweep in 0..opts.fbgs_max {
        let mut delta: f64 = 0.0;
        // forward then backward cell ordering
        for dir in 0..2 {
            for k in 0..stencil.active.len() {
                let cell =
                    if dir == 0 { stencil.active[k] } else { stencil.active[stencil.active.len() - 1 - k] };
                let (s, e) = (stencil.offsets[cell], stencil.offsets[cell + 1]);
                let mut rh = b[cell][0];
                let mut rm = b[cell][1];
                for j in s..e {
                    let nbc = stencil.nb[j];
                    rh += stencil.face_k[0][j] * fh[nbc];
                    rm += stencil.face_k[1][j] * fm[nbc];
                }
                let [ahh, ahm, amh, amm] = a[cell];
                let det = ahh * amm - ahm * amh;
                let xh = (amm * rh - ahm * rm) / det;
                let xm = (ahh * rm - amh * rh) / det;
                delta = delta.max((xh - fh[cell]).abs()).max((xm - fm[cell]).abs());
                fh[cell] = xh;
                fm[cell] = xm;
            }
        }
        total_delta = total_delta.max(delta);
        last = delta / scale;
        if last <= opts.fbgs_tol {
            return Ok(total_delta / scale);
        }
    }
    Err(SeirsError::Convergence {
        stage: "FBGS",
        step,
        iters: opts.fbgs_max,
        last_update: last,
        tol: opts.fbgs_tol,
    })
}

pub(crate) const BLOCK_ORDER: [Compartment; 8] = [
    Compartment::Susceptible,
    Compartment::Exposed,
    Compartment::Infectious,
    Compartment::Recovered,
    Compartment::Recovered,
    Compartment::Infectious,
    Compartment::Exposed,
    Compartment::Susceptible,
];

fn solve_linear(
    new: &mut StateField,
    sys: &TransientSystem,
    coeffs: &StepCoeffs,
    stencil: &Stencil,
    opts: &SolverOptions,
    scale: f64,
    step: Option<usize>,
) -> Result<(), SeirsError> {
    let mut last = f64::INFINITY;
    for _pass in 0..opts.block_max {
        let mut pass_delta: f64 = 0.0;
        for &c in &BLOCK_ORDER {
            let d = solve_compartment(c, new, sys, coeffs, stencil, opts, scale, step)?;
            pass_delta = pass_delta.max(d);
        }
        last = pass_delta;
        if pass_delta <= opts.block_tol {
            return Ok(());
        }
    }
    Err(SeirsError::Convergence {
        stage: "Block FBGS",
        step,
        iters: opts.block_max,
        last_update: last,
        tol: opts.block_tol,
    })
}

fn check_finite(s: &StateField, step: Option<usize>) -> Result<(), SeirsError> {
    for f in &s.fields {
        for &v in f {
            if !v.is_finite() {
                return Err(SeirsError::NonFinite {
                    context: format!("transient solve{}", step.map(|s| format!(" step {s}")).unwrap_or_default()),
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn step_with_stencil(
    state: &StateField,
    params: &ModelParams,
    grid: &GridSpec,
    stencil: &Stencil,
    opts: &SolverOptions,
    step: Option<usize>,
) -> Result<StateField, SeirsError> {
    let t_future = state.t + params.dt;
    let scale = state_scale(state);
    let sys = TransientSystem { params, old: state, inv_dt: 1.0 / params.dt };

    let mut guess = state.clone();
    let mut new = state.clone();
    let n_flat = N_FIELDS * state.n_cells();
    let mut prev_r: Option<Vec<f64>> = None;
    let mut theta = 1.0f64;
    let mut last = f64::INFINITY;
    for _it in 0..opts.picard_max {
        let coeffs = StepCoeffs::compute(&guess, t_future, params, grid);
        solve_linear(&mut new, &sys, &coeffs, stencil, opts, scale, step)?;
        check_finite(&new, step)?;
        // residual of the fixed-point iteration
        let mut r = vec![0.0; n_flat];
        let mut rmax: f64 = 0.0;
        for f in 0..N_FIELDS {
            let n = state.n_cells();
            for cell in 0..n {
                let d = new.fields[f][cell] - guess.fields[f][cell];
                r[f * n + cell] = d;
                rmax = rmax.max(d.abs());
            }
        }
        last = rmax / scale;
        if last <= opts.picard_tol {
            let mut out = new;
            out.t = t_future;
            return Ok(out);
        }
        // Irons-Tuck relaxation of the coefficient-evaluation state
        if let Some(pr) = &prev_r {
            let mut num = 0.0;
            let mut den = 0.0;
            for (rp, rn) in pr.iter().zip(&r) {
                let d = rn - rp;
                num += rp * d;
                den += d * d;
            }
            if den > 0.0 {
                theta = (-theta * num / den).clamp(0.05, 1.0);
            }
        }
        let n = state.n_cells();
        for f in 0..N_FIELDS {
            for cell in 0..n {
                guess.fields[f][cell] += theta * r[f * n + cell];
            }
        }
        prev_r = Some(r);
    }
    Err(SeirsError::Convergence {
        stage: "Picard",
        step,
        iters: opts.picard_max,
        last_update: last,
        tol: opts.picard_tol,
    })
}

/// Advance the state by one backward-Euler step of length `params.dt`.
pub fn step_transient(
    state: &StateField,
    params: &ModelParams,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<StateField, SeirsError> {
    let stencil = Stencil::build(grid, params, SolveMode::Transient);
    step_with_stencil(state, params, grid, &stencil, opts, None)
}

/// Run `params.n_steps` transient steps from `init`, recording every state
/// (the returned series starts with `init` itself).
pub fn simulate(
    params: &ModelParams,
    grid: &GridSpec,
    init: StateField,
    opts: &SolverOptions,
) -> Result<Vec<StateField>, SeirsError> {
    let stencil = Stencil::build(grid, params, SolveMode::Transient);
    let mut series = Vec::with_capacity(params.n_steps + 1);
    series.push(init);
    for step in 0..params.n_steps {
        let next =
            step_with_stencil(series.last().unwrap(), params, grid, &stencil, opts, Some(step))?;
        series.push(next);
    }
    Ok(series)
}
