//! Scalar functionals of a field: mass, energy, free energy, threshold
//! predicates, coercivity checks, and the truncated virial functional.

use crate::domain::{
    gradient_norm_sq, norm_lp, smoothstep_c3, Field, Grid, Lp,
};
use crate::groundstate::{threshold_constants, GroundStateTable};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("virial cutoff R = {r} violates the truncated-virial hypothesis (requires R >= 1 and R > 100 a = {min})")]
    VirialCutoffTooSmall { r: f64, min: f64 },
    #[error("dt must be nonzero")]
    ZeroDt,
}

pub fn mass(f: &Field) -> f64 {
    norm_lp(f, Lp::P2)
}

pub fn kinetic(f: &Field) -> f64 {
    gradient_norm_sq(f)
}

pub fn quartic(f: &Field) -> f64 {
    norm_lp(f, Lp::P4)
}

pub fn energy(f: &Field) -> f64 {
    0.5 * kinetic(f) - 0.25 * quartic(f)
}

/// F^lambda = E + lambda M.
pub fn free_energy(f: &Field, lambda: f64) -> f64 {
    energy(f) + lambda * mass(f)
}

/// Threshold comparison of a field against the ground-state constants.
/// Both predicates are strict; equality reports false.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdReport {
    pub mass: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub quartic: f64,
    pub em_ok: bool,
    pub km_ok: bool,
    pub f_lambda: f64,
    pub f_ratio: f64,
}

pub fn threshold_report(f: &Field, gs: &GroundStateTable, lambda: f64) -> ThresholdReport {
    let k = kinetic(f);
    let p = quartic(f);
    let m = mass(f);
    let e = 0.5 * k - 0.25 * p;
    let c = threshold_constants(gs, lambda);
    let f_lambda = e + lambda * m;
    ThresholdReport {
        mass: m,
        energy: e,
        kinetic: k,
        quartic: p,
        em_ok: e * m < c.emq,
        km_ok: (k * m).sqrt() < c.gmq,
        f_lambda,
        f_ratio: f_lambda / c.fstar,
    }
}

/// Outcome of the coercivity check. The proposition asserts nothing unless
/// the sub-threshold preconditions hold, so that case is reported separately.
#[derive(Debug, Clone, Copy)]
pub enum CoercivityOutcome {
    NotApplicable,
    Checked {
        sandwich_ok: bool,
        quantitative_ok: bool,
        /// measured ratio (4K - 3P)/K
        c_delta: f64,
    },
}

pub fn coercivity_check(
    f: &Field,
    gs: &GroundStateTable,
    lambda: f64,
    delta: f64,
) -> CoercivityOutcome {
    let rep = threshold_report(f, gs, lambda);
    let c = threshold_constants(gs, lambda);
    if rep.mass == 0.0 {
        // zero field: trivially coercive
        return CoercivityOutcome::Checked {
            sandwich_ok: true,
            quantitative_ok: true,
            c_delta: 0.0,
        };
    }
    if !(rep.em_ok && rep.km_ok && rep.f_lambda < (1.0 - delta) * c.fstar) {
        return CoercivityOutcome::NotApplicable;
    }
    let k = rep.kinetic;
    let p = rep.quartic;
    let e = rep.energy;
    let lower = 4.0 * k - 3.0 * p;
    CoercivityOutcome::Checked {
        sandwich_ok: k / 6.0 <= e && e <= k / 2.0,
        quantitative_ok: lower > 0.0,
        c_delta: lower / k,
    }
}

/// Truncated virial functional V = Im int conj(u) (grad u . grad phi_R) with
/// phi_R(x) = |x|^2 for |x| <= R and grad phi_R = 0 beyond 2R (C^3 radial
/// blend in between, centered on the obstacle).
#[derive(Debug, Clone, Copy)]
pub struct VirialState {
    pub r_cutoff: f64,
    pub v: f64,
    /// 4K - 3P over the whole domain.
    pub lower_bound: f64,
    /// R^{-2} part of the measured remainder.
    pub r_term: f64,
    /// measured exterior tail: int_{|x|>=R} |u|^4 + |grad u|^2.
    pub tail_term: f64,
}

/// phi_R'(rho): 2 rho inside R, tapered to 0 at 2R.
#[inline]
pub fn virial_weight_grad(rho: f64, r_cutoff: f64) -> f64 {
    if rho <= r_cutoff {
        2.0 * rho
    } else if rho >= 2.0 * r_cutoff {
        0.0
    } else {
        2.0 * rho * (1.0 - smoothstep_c3((rho - r_cutoff) / r_cutoff))
    }
}

pub fn virial_functional(f: &Field, r_cutoff: f64) -> Result<VirialState, ObservableError> {
    let a = match f.grid.as_ref() {
        Grid::Radial(g) => g.a,
        Grid::Cartesian(g) => g.a,
    };
    if r_cutoff < 1.0 || (a > 0.0 && r_cutoff <= 100.0 * a) {
        return Err(ObservableError::VirialCutoffTooSmall {
            r: r_cutoff,
            min: 100.0 * a,
        });
    }
    let mut v = 0.0;
    let mut tail4 = 0.0;
    let mut tail_grad = 0.0;
    match f.grid.as_ref() {
        Grid::Radial(g) => {
            let n = g.n;
            let u: Vec<Complex64> = (0..n).map(|j| f.u_radial(g, j)).collect();
            for j in 0..n {
                let r = g.node(j);
                let du = if j == 0 {
                    (u[1] - u[0]) / g.h
                } else if j == n - 1 {
                    (u[n - 1] - u[n - 2]) / g.h
                } else {
                    (u[j + 1] - u[j - 1]) / (2.0 * g.h)
                };
                let w = 4.0 * std::f64::consts::PI * r * r * g.h;
                v += (u[j].conj() * du).im * virial_weight_grad(r, r_cutoff) * w;
                if r >= r_cutoff {
                    tail4 += u[j].norm_sqr().powi(2) * w;
                    tail_grad += du.norm_sqr() * w;
                }
            }
        }
        Grid::Cartesian(g) => {
            let n = g.n;
            let w = g.h * g.h * g.h;
            let stride = [n * n, n, 1usize];
            let u = &f.values;
            for ix in 1..n - 1 {
                for iy in 1..n - 1 {
                    for iz in 1..n - 1 {
                        let idx = g.idx(ix, iy, iz);
                        if !g.mask[idx] {
                            continue;
                        }
                        let pos = g.node_pos(ix, iy, iz);
                        let d = [
                            pos[0] - g.x_obs[0],
                            pos[1] - g.x_obs[1],
                            pos[2] - g.x_obs[2],
                        ];
                        let rho = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                        let wg = virial_weight_grad(rho, r_cutoff);
                        let mut grad_sq = 0.0;
                        let mut flux = 0.0;
                        for (axis, &s) in stride.iter().enumerate() {
                            let um = if g.mask[idx - s] { u[idx - s] } else { Complex64::ZERO };
                            let up = if g.mask[idx + s] { u[idx + s] } else { Complex64::ZERO };
                            let du = (up - um) / (2.0 * g.h);
                            grad_sq += du.norm_sqr();
                            if rho > 0.0 {
                                flux += (u[idx].conj() * du).im * wg * d[axis] / rho;
                            }
                        }
                        v += flux * w;
                        if rho >= r_cutoff {
                            tail4 += u[idx].norm_sqr().powi(2) * w;
                            tail_grad += grad_sq * w;
                        }
                    }
                }
            }
        }
    }
    let k = kinetic(f);
    let p = quartic(f);
    Ok(VirialState {
        r_cutoff,
        v,
        lower_bound: 4.0 * k - 3.0 * p,
        r_term: r_cutoff.powi(-2),
        tail_term: tail4 + tail_grad,
    })
}

/// Finite-difference rate (V(t+dt) - V(t))/dt from two stored fields.
pub fn virial_rate(
    f_before: &Field,
    f_after: &Field,
    dt: f64,
    r_cutoff: f64,
) -> Result<f64, ObservableError> {
    if dt == 0.0 {
        return Err(ObservableError::ZeroDt);
    }
    let v0 = virial_functional(f_before, r_cutoff)?.v;
    let v1 = virial_functional(f_after, r_cutoff)?.v;
    Ok((v1 - v0) / dt)
}

/// Probe a log grid of 400 lambda values in [1e-4, 1e4] for one with
/// F^lambda(f) < F^lambda_* (strict margin 1e-6). Returns the first such
/// lambda. Exhausts the sub-threshold region M E < M(Q)E(Q).
pub fn exhaustion_lambda(m: f64, e: f64, gs: &GroundStateTable) -> Option<f64> {
    let lo: f64 = 1e-4;
    let hi: f64 = 1e4;
    for i in 0..400 {
        let lambda = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 399.0).exp();
        let fstar = 2.0 * (lambda * gs.mass * gs.energy).sqrt();
        if e + lambda * m < fstar * (1.0 - 1e-6) {
            return Some(lambda);
        }
    }
    None
}
