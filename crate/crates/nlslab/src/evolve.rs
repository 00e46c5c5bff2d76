//! Time integration: Strang-split nonlinear Schroedinger flow, the linear
//! Schroedinger flow, and the Dirichlet heat flow on both grid types.
//!
//! The linear substep is Crank-Nicolson on the discrete Dirichlet Laplacian:
//! tridiagonal direct solve in the radial v-representation, conjugate
//! gradient on the positive-definite normal form for the Cartesian mask.
//! The nonlinear substep is the exact pointwise phase rotation, so the full
//! Strang step preserves the discrete mass up to the linear-solver tolerance.

use crate::diagnostics::DiagnosticsRow;
use crate::domain::{
    gradient_norm_sq, laplacian_slices, norm_lp, smoothstep_c2, sup_norm, Field, Grid, Lp,
};
use crate::observables::virial_functional;
use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid stepper config: {0}")]
    InvalidConfig(String),
    #[error("conjugate gradient stalled after {iterations} iterations (residual {residual:.3e})")]
    CgStall { iterations: usize, residual: f64 },
    #[error("field/grid mismatch")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    StrangCn,
    LinearCn,
    HeatBe,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::StrangCn => "strang-cn",
            Scheme::LinearCn => "linear-cn",
            Scheme::HeatBe => "heat-be",
        }
    }

    pub fn from_tag(s: &str) -> Option<Scheme> {
        match s {
            "strang-cn" => Some(Scheme::StrangCn),
            "linear-cn" => Some(Scheme::LinearCn),
            "heat-be" => Some(Scheme::HeatBe),
            _ => None,
        }
    }
}

/// Smooth imaginary-potential ramp over the outer part of the domain.
/// Must be disabled for conservation runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorberConfig {
    pub strength: f64,
    /// Ramp starts at this fraction of the outer radius (e.g. 0.9).
    pub start_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub absorber: Option<AbsorberConfig>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            scheme: Scheme::StrangCn,
            absorber: None,
            cg_tol: 1e-10,
            cg_max_iter: 500,
        }
    }
}

impl StepperConfig {
    fn validate(&self) -> Result<(), EvolveError> {
        if !(self.dt > 0.0) {
            return Err(EvolveError::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if !(self.cg_tol > 1e-14 && self.cg_tol < 1e-4) {
            return Err(EvolveError::InvalidConfig(format!(
                "cg_tol = {} outside (1e-14, 1e-4)",
                self.cg_tol
            )));
        }
        if let Some(a) = &self.absorber {
            if !(a.strength >= 0.0) || !(a.start_fraction > 0.0 && a.start_fraction < 1.0) {
                return Err(EvolveError::InvalidConfig("absorber parameters".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Evolving state: current time, field, and the accumulated spacetime
/// L^5 integral S(t) (trapezoid in t).
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub t: f64,
    pub field: Field,
    pub steps: u64,
    pub s_l5: f64,
    l5_now: f64,
}

impl TrajectoryState {
    pub fn new(field: Field) -> TrajectoryState {
        let l5 = norm_lp(&field, Lp::P5);
        TrajectoryState {
            t: 0.0,
            field,
            steps: 0,
            s_l5: 0.0,
            l5_now: l5,
        }
    }
}

/// Constant-coefficient symmetric tridiagonal solver with precomputed
/// forward-elimination factors.
struct ConstTridiag {
    off: Complex64,
    cp: Vec<Complex64>,
    inv_m: Vec<Complex64>,
}

impl ConstTridiag {
    fn new(diag: Complex64, off: Complex64, n: usize) -> ConstTridiag {
        let mut cp = vec![Complex64::ZERO; n];
        let mut inv_m = vec![Complex64::ZERO; n];
        let mut m = diag;
        inv_m[0] = 1.0 / m;
        cp[0] = off / m;
        for i in 1..n {
            m = diag - off * cp[i - 1];
            inv_m[i] = 1.0 / m;
            cp[i] = off / m;
        }
        ConstTridiag { off, cp, inv_m }
    }

    fn solve_in_place(&self, d: &mut [Complex64]) {
        let n = d.len();
        d[0] *= self.inv_m[0];
        for i in 1..n {
            d[i] = (d[i] - self.off * d[i - 1]) * self.inv_m[i];
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= self.cp[i] * next;
        }
    }
}

pub struct Stepper {
    pub grid: Arc<Grid>,
    pub cfg: StepperConfig,
    /// per-node exp(-dt W) damping factors when the absorbing layer is on
    absorb: Option<Vec<f64>>,
    cn_fwd: Option<ConstTridiag>,
    cn_bwd: Option<ConstTridiag>,
    heat: Option<ConstTridiag>,
    scratch: Vec<Complex64>,
    scratch2: Vec<Complex64>,
    cg_r: Vec<Complex64>,
    cg_p: Vec<Complex64>,
    cg_ap: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: Arc<Grid>, cfg: StepperConfig) -> Result<Stepper, EvolveError> {
        cfg.validate()?;
        let len = grid.len();
        let absorb = cfg.absorber.as_ref().map(|a| absorber_weights(&grid, a, cfg.dt));
        let mut s = Stepper {
            grid,
            cfg,
            absorb,
            cn_fwd: None,
            cn_bwd: None,
            heat: None,
            scratch: vec![Complex64::ZERO; len],
            scratch2: vec![Complex64::ZERO; len],
            cg_r: Vec::new(),
            cg_p: Vec::new(),
            cg_ap: Vec::new(),
        };
        if let Grid::Radial(g) = s.grid.as_ref() {
            let theta = 0.5 * s.cfg.dt;
            let ih2 = 1.0 / (g.h * g.h);
            let i = Complex64::I;
            s.cn_fwd = Some(ConstTridiag::new(
                1.0 + 2.0 * i * theta * ih2,
                -i * theta * ih2,
                g.n,
            ));
            s.cn_bwd = Some(ConstTridiag::new(
                1.0 - 2.0 * i * theta * ih2,
                i * theta * ih2,
                g.n,
            ));
            s.heat = Some(ConstTridiag::new(
                Complex64::new(1.0 + 2.0 * s.cfg.dt * ih2, 0.0),
                Complex64::new(-s.cfg.dt * ih2, 0.0),
                g.n,
            ));
        } else {
            s.cg_r = vec![Complex64::ZERO; len];
            s.cg_p = vec![Complex64::ZERO; len];
            s.cg_ap = vec![Complex64::ZERO; len];
        }
        Ok(s)
    }

    /// One Strang step: half nonlinear rotation, linear CN, (absorber,)
    /// second half rotation. Updates t and the accumulated L^5 integral.
    pub fn step_strang(&mut self, state: &mut TrajectoryState) -> Result<(), EvolveError> {
        let half = 0.5 * self.cfg.dt;
        nonlinear_rotation(&mut state.field, half);
        self.linear_cn(&mut state.field, Direction::Forward)?;
        self.apply_absorber(&mut state.field);
        nonlinear_rotation(&mut state.field, half);
        self.advance_clock(state, self.cfg.dt);
        Ok(())
    }

    /// One linear Crank-Nicolson step (time-reversible; `Backward` undoes
    /// `Forward` exactly up to solver tolerance).
    pub fn step_linear(
        &mut self,
        state: &mut TrajectoryState,
        direction: Direction,
    ) -> Result<(), EvolveError> {
        self.linear_cn(&mut state.field, direction)?;
        if direction == Direction::Forward {
            self.apply_absorber(&mut state.field);
        }
        let dt = match direction {
            Direction::Forward => self.cfg.dt,
            Direction::Backward => -self.cfg.dt,
        };
        self.advance_clock(state, dt);
        Ok(())
    }

    /// One backward-Euler heat step (positivity preserving).
    pub fn step_heat(&mut self, state: &mut TrajectoryState) -> Result<(), EvolveError> {
        match self.grid.as_ref() {
            Grid::Radial(_) => {
                self.heat.as_ref().unwrap().solve_in_place(&mut state.field.values);
            }
            Grid::Cartesian(_) => {
                // (I + dt (-Lap)) u+ = u, SPD, plain CG
                self.scratch.copy_from_slice(&state.field.values);
                let dt = self.cfg.dt;
                let grid = self.grid.clone();
                self.cg_solve(
                    |x, out, tmp| {
                        laplacian_slices(&grid, x, out);
                        for i in 0..out.len() {
                            out[i] = x[i] - dt * out[i];
                        }
                        let _ = tmp;
                    },
                    &mut state.field.values,
                )?;
            }
        }
        state.field.enforce_mask();
        self.advance_clock(state, self.cfg.dt);
        Ok(())
    }

    fn advance_clock(&mut self, state: &mut TrajectoryState, dt: f64) {
        let l5 = norm_lp(&state.field, Lp::P5);
        state.s_l5 += dt.abs() * 0.5 * (state.l5_now + l5);
        state.l5_now = l5;
        state.t += dt;
        state.steps += 1;
    }

    fn apply_absorber(&mut self, f: &mut Field) {
        if let Some(w) = &self.absorb {
            for (v, &d) in f.values.iter_mut().zip(w.iter()) {
                *v *= d;
            }
        }
    }

    fn linear_cn(&mut self, f: &mut Field, direction: Direction) -> Result<(), EvolveError> {
        if f.grid != self.grid {
            return Err(EvolveError::GridMismatch);
        }
        let theta = match direction {
            Direction::Forward => 0.5 * self.cfg.dt,
            Direction::Backward => -0.5 * self.cfg.dt,
        };
        match self.grid.as_ref() {
            Grid::Radial(g) => {
                // rhs = (I + i theta Lap) v
                let ih2 = 1.0 / (g.h * g.h);
                let n = g.n;
                let v = &f.values;
                for j in 0..n {
                    let left = if j > 0 { v[j - 1] } else { Complex64::ZERO };
                    let right = if j + 1 < n { v[j + 1] } else { Complex64::ZERO };
                    self.scratch[j] =
                        v[j] + Complex64::I * theta * (left - 2.0 * v[j] + right) * ih2;
                }
                let solver = match direction {
                    Direction::Forward => self.cn_fwd.as_ref().unwrap(),
                    Direction::Backward => self.cn_bwd.as_ref().unwrap(),
                };
                solver.solve_in_place(&mut self.scratch);
                f.values.copy_from_slice(&self.scratch);
            }
            Grid::Cartesian(_) => {
                // normal form: (I + theta^2 Lap^2) u+ = (I + i theta Lap)^2 u
                let grid = self.grid.clone();
                let apply_b = |x: &[Complex64], out: &mut [Complex64], tmp: &mut [Complex64]| {
                    laplacian_slices(&grid, x, tmp);
                    for i in 0..out.len() {
                        out[i] = x[i] + Complex64::I * theta * tmp[i];
                    }
                };
                apply_b(&f.values, &mut self.scratch, &mut self.scratch2);
                let mut rhs = vec![Complex64::ZERO; f.values.len()];
                apply_b(&self.scratch, &mut rhs, &mut self.scratch2);
                f.values.copy_from_slice(&rhs);
                let grid2 = self.grid.clone();
                self.cg_solve(
                    |x, out, tmp| {
                        laplacian_slices(&grid2, x, tmp);
                        laplacian_slices(&grid2, tmp, out);
                        for i in 0..out.len() {
                            out[i] = x[i] + theta * theta * out[i];
                        }
                    },
                    &mut f.values,
                )?;
                f.enforce_mask();
            }
        }
        Ok(())
    }

    /// CG for a Hermitian positive-definite operator; `b_and_x` holds the
    /// right-hand side on entry and the solution on exit.
    fn cg_solve<F>(&mut self, apply: F, b_and_x: &mut [Complex64]) -> Result<(), EvolveError>
    where
        F: Fn(&[Complex64], &mut [Complex64], &mut [Complex64]),
    {
        let n = b_and_x.len();
        let b_norm = b_and_x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok(());
        }
        // x0 = b (the operator is a small perturbation of the identity)
        let x = &mut self.scratch;
        x.copy_from_slice(b_and_x);
        apply(x, &mut self.cg_ap, &mut self.scratch2);
        for i in 0..n {
            self.cg_r[i] = b_and_x[i] - self.cg_ap[i];
        }
        self.cg_p.copy_from_slice(&self.cg_r);
        let mut rho: f64 = self.cg_r.iter().map(|v| v.norm_sqr()).sum();
        let tol = self.cfg.cg_tol * b_norm;
        let mut iters = 0;
        while rho.sqrt() > tol {
            if iters >= self.cfg.cg_max_iter {
                return Err(EvolveError::CgStall {
                    iterations: iters,
                    residual: rho.sqrt() / b_norm,
                });
            }
            apply(&self.cg_p, &mut self.cg_ap, &mut self.scratch2);
            let denom: f64 = self
                .cg_p
                .iter()
                .zip(self.cg_ap.iter())
                .map(|(p, ap)| (p.conj() * ap).re)
                .sum();
            let alpha = rho / denom;
            for i in 0..n {
                x[i] += alpha * self.cg_p[i];
                self.cg_r[i] -= alpha * self.cg_ap[i];
            }
            let rho_new: f64 = self.cg_r.iter().map(|v| v.norm_sqr()).sum();
            let beta = rho_new / rho;
            rho = rho_new;
            for i in 0..n {
                self.cg_p[i] = self.cg_r[i] + beta * self.cg_p[i];
            }
            iters += 1;
        }
        b_and_x.copy_from_slice(x);
        Ok(())
    }
}

/// Exact pointwise rotation u <- u exp(i tau |u|^2); preserves |u|.
fn nonlinear_rotation(f: &mut Field, tau: f64) {
    match f.grid.clone().as_ref() {
        Grid::Radial(g) => {
            for j in 0..g.n {
                let r = g.node(j);
                let mod2 = f.values[j].norm_sqr() / (r * r);
                f.values[j] *= Complex64::from_polar(1.0, tau * mod2);
            }
        }
        Grid::Cartesian(_) => {
            for v in f.values.iter_mut() {
                let mod2 = v.norm_sqr();
                *v *= Complex64::from_polar(1.0, tau * mod2);
            }
        }
    }
}

fn absorber_weights(grid: &Arc<Grid>, a: &AbsorberConfig, dt: f64) -> Vec<f64> {
    match grid.as_ref() {
        Grid::Radial(g) => (0..g.n)
            .map(|j| {
                let r = g.node(j);
                let start = a.start_fraction * g.r_max;
                let w = a.strength * smoothstep_c2((r - start) / (g.r_max - start));
                (-dt * w).exp()
            })
            .collect(),
        Grid::Cartesian(g) => {
            let mut out = vec![1.0; g.n * g.n * g.n];
            let l = g.half_width;
            let start = a.start_fraction * l;
            for ix in 0..g.n {
                for iy in 0..g.n {
                    for iz in 0..g.n {
                        let p = g.node_pos(ix, iy, iz);
                        let w: f64 = p
                            .iter()
                            .map(|c| a.strength * smoothstep_c2((c.abs() - start) / (l - start)))
                            .sum();
                        out[g.idx(ix, iy, iz)] = (-dt * w).exp();
                    }
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    SupGuard { sup: f64, initial: f64 },
    KineticGuard { kinetic: f64, initial: f64 },
    CgFailure(String),
    NonFinite,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortReason::SupGuard { sup, initial } => {
                write!(f, "sup-norm guard: {sup:.3e} > 50 x {initial:.3e}")
            }
            AbortReason::KineticGuard { kinetic, initial } => {
                write!(f, "kinetic guard: {kinetic:.3e} > 1e3 x {initial:.3e}")
            }
            AbortReason::CgFailure(s) => write!(f, "linear solve failed: {s}"),
            AbortReason::NonFinite => write!(f, "non-finite diagnostic value"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub horizon: f64,
    /// Emit a diagnostics row every this many steps.
    pub cadence: usize,
    pub virial_radius: Option<f64>,
    /// Times at which to store field snapshots (for the classifier).
    pub snapshot_times: Vec<f64>,
    pub sup_guard_factor: f64,
    pub kinetic_guard_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 1.0,
            cadence: 50,
            virial_radius: None,
            snapshot_times: Vec::new(),
            sup_guard_factor: 50.0,
            kinetic_guard_factor: 1e3,
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub rows: Vec<DiagnosticsRow>,
    pub snapshots: Vec<Snapshot>,
    pub state: TrajectoryState,
    pub abort: Option<AbortReason>,
}

/// Step the configured scheme to the horizon, emitting diagnostics at the
/// observer cadence and aborting early on the blowup guard.
pub fn run(
    initial: Field,
    scfg: &StepperConfig,
    rcfg: &RunConfig,
) -> Result<RunOutput, EvolveError> {
    if !(rcfg.horizon > 0.0) {
        return Err(EvolveError::InvalidConfig(format!(
            "horizon = {}",
            rcfg.horizon
        )));
    }
    let grid = initial.grid.clone();
    let mut stepper = Stepper::new(grid, scfg.clone())?;
    let mut state = TrajectoryState::new(initial);
    let sup0 = sup_norm(&state.field);
    let kin0 = gradient_norm_sq(&state.field);
    let n_steps = (rcfg.horizon / scfg.dt).round().max(1.0) as u64;

    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut abort = None;
    let mut snap_idx = 0usize;

    let mut v_prev = match rcfg.virial_radius {
        Some(r) => virial_functional(&state.field, r).map(|s| s.v).unwrap_or(0.0),
        None => 0.0,
    };
    let row0 = make_row(&state, rcfg, v_prev, 0.0);
    if !row0.is_finite() {
        abort = Some(AbortReason::NonFinite);
    }
    rows.push(row0);
    if snap_idx < rcfg.snapshot_times.len()
        && rcfg.snapshot_times[snap_idx] <= 0.5 * scfg.dt
    {
        snapshots.push(Snapshot {
            t: state.t,
            field: state.field.clone(),
        });
        snap_idx += 1;
    }

    if abort.is_none() {
        'steps: for k in 1..=n_steps {
            let res = match scfg.scheme {
                Scheme::StrangCn => stepper.step_strang(&mut state),
                Scheme::LinearCn => stepper.step_linear(&mut state, Direction::Forward),
                Scheme::HeatBe => stepper.step_heat(&mut state),
            };
            if let Err(e) = res {
                abort = Some(AbortReason::CgFailure(e.to_string()));
                break 'steps;
            }

            let v_now = match rcfg.virial_radius {
                Some(r) => virial_functional(&state.field, r).map(|s| s.v).unwrap_or(0.0),
                None => 0.0,
            };
            let rate = (v_now - v_prev) / scfg.dt;
            v_prev = v_now;

            let sup = sup_norm(&state.field);
            if !sup.is_finite() {
                abort = Some(AbortReason::NonFinite);
                break 'steps;
            }
            if sup0 > 0.0 && sup > rcfg.sup_guard_factor * sup0 {
                abort = Some(AbortReason::SupGuard { sup, initial: sup0 });
            }

            while snap_idx < rcfg.snapshot_times.len()
                && state.t >= rcfg.snapshot_times[snap_idx] - 0.5 * scfg.dt
            {
                snapshots.push(Snapshot {
                    t: state.t,
                    field: state.field.clone(),
                });
                snap_idx += 1;
            }

            let sampled = k % rcfg.cadence as u64 == 0 || k == n_steps || abort.is_some();
            if sampled {
                let row = make_row(&state, rcfg, v_now, rate);
                if !row.is_finite() {
                    abort = Some(AbortReason::NonFinite);
                    rows.push(DiagnosticsRow {
                        sup,
                        t: state.t,
                        ..*rows.last().unwrap()
                    });
                    break 'steps;
                }
                if kin0 > 0.0 && row.kinetic > rcfg.kinetic_guard_factor * kin0 {
                    abort = Some(AbortReason::KineticGuard {
                        kinetic: row.kinetic,
                        initial: kin0,
                    });
                }
                rows.push(row);
            }
            if abort.is_some() {
                if !sampled {
                    rows.push(make_row(&state, rcfg, v_now, rate));
                }
                break 'steps;
            }
        }
    }

    Ok(RunOutput {
        rows,
        snapshots,
        state,
        abort,
    })
}

fn make_row(state: &TrajectoryState, rcfg: &RunConfig, v: f64, rate: f64) -> DiagnosticsRow {
    let f = &state.field;
    let k = gradient_norm_sq(f);
    let p = norm_lp(f, Lp::P4);
    DiagnosticsRow {
        t: state.t,
        mass: norm_lp(f, Lp::P2),
        energy: 0.5 * k - 0.25 * p,
        kinetic: k,
        quartic: p,
        virial: if rcfg.virial_radius.is_some() { v } else { 0.0 },
        virial_rate: if rcfg.virial_radius.is_some() { rate } else { 0.0 },
        s: state.s_l5,
        sup: sup_norm(f),
        l4: p.powf(0.25),
    }
}
