//! Post-run classification of a trajectory as scattering, blowup, or
//! undecided.
//!
//! Scattering requires all three of:
//!   1. the final L^4 norm has dropped below a small fraction of its
//!      running peak,
//!   2. the spacetime L^5 integral S has nearly saturated (the increment
//!      over the last portion of the run is a small fraction of the total),
//!   3. free back-propagation of the stored probe fields yields a Cauchy
//!      sequence: the H^1 gaps between consecutive back-propagated probes
//!      decrease.
//! When all three hold the final probe is back-propagated to t = 0 to
//! produce the asymptotic free profile u_plus.
//!
//! Blowup is declared when a runtime guard fired or when the discrete H^1
//! norm grew by a large factor over its running minimum.

use crate::domain::{gradient_norm_sq, norm_lp, Field, Lp};
use crate::evolve::{Direction, RunOutput, Scheme, Stepper, StepperConfig, TrajectoryState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("corrupt diagnostics: {0}")]
    Corrupt(String),
    #[error("propagation failed during classification: {0}")]
    Propagation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Scatter,
    Blowup,
    Undecided,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Scatter => "SCATTER",
            Verdict::Blowup => "BLOWUP",
            Verdict::Undecided => "UNDECIDED",
        }
    }
}

/// Decision thresholds. Defaults are deliberate, not tuned per run:
/// the L^4 norm must fall below 5% of its peak, the trailing 20% of the
/// run may contribute at most 2% of S, three consecutive Cauchy gaps
/// must decrease, and a hundredfold H^1 growth counts as blowup.
#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    pub l4_fraction: f64,
    pub tail_fraction: f64,
    pub s_increment_fraction: f64,
    pub h1_growth_factor: f64,
    pub min_probes: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            l4_fraction: 0.05,
            tail_fraction: 0.2,
            s_increment_fraction: 0.02,
            h1_growth_factor: 1e2,
            min_probes: 3,
        }
    }
}

/// Approximation to the asymptotic free profile: u(T) pulled back to
/// t = 0 under the free flow, with the Cauchy gap bounding the residual
/// sup_t || u(t) - e^{it Lap} u_plus ||.
#[derive(Debug, Clone)]
pub struct ScatteringState {
    pub u_plus: Field,
    pub gap: f64,
}

#[derive(Debug)]
pub struct Classification {
    pub verdict: Verdict,
    pub evidence: Vec<String>,
    pub scattering: Option<ScatteringState>,
}

fn h1_norm(f: &Field) -> f64 {
    (gradient_norm_sq(f) + norm_lp(f, Lp::P2)).sqrt()
}

fn h1_gap(a: &Field, b: &Field) -> f64 {
    let mut diff = a.clone();
    for (d, v) in diff.values.iter_mut().zip(&b.values) {
        *d -= v;
    }
    h1_norm(&diff)
}

/// Validate the cumulative S column: it must be finite and nondecreasing.
pub fn cumulative_l5(rows: &[crate::diagnostics::DiagnosticsRow]) -> Result<Vec<f64>, ClassifyError> {
    let mut out = Vec::with_capacity(rows.len());
    let mut prev = f64::NEG_INFINITY;
    for (i, row) in rows.iter().enumerate() {
        if !row.s.is_finite() {
            return Err(ClassifyError::Corrupt(format!("S not finite at row {i}")));
        }
        if row.s < prev - 1e-12 * prev.abs().max(1.0) {
            return Err(ClassifyError::Corrupt(format!(
                "S decreases at row {i}: {} -> {}",
                prev, row.s
            )));
        }
        prev = row.s;
        out.push(row.s);
    }
    Ok(out)
}

/// Blowup evidence: a guard abort, or H^1 growth past `h1_growth_factor`
/// times the running minimum.
pub fn detect_blowup(out: &RunOutput, cfg: &ClassifyConfig) -> Option<String> {
    if let Some(reason) = &out.abort {
        return Some(format!("aborted: {reason}"));
    }
    let mut running_min = f64::INFINITY;
    for row in &out.rows {
        let h1 = (row.kinetic + row.mass).sqrt();
        if h1.is_finite() {
            if running_min.is_finite() && h1 > cfg.h1_growth_factor * running_min {
                return Some(format!(
                    "H1 norm grew to {h1:.3e} from a minimum of {running_min:.3e}"
                ));
            }
            running_min = running_min.min(h1);
        }
    }
    None
}

fn free_backpropagate(
    field: &Field,
    duration: f64,
    scfg: &StepperConfig,
) -> Result<Field, ClassifyError> {
    if duration <= 0.5 * scfg.dt {
        return Ok(field.clone());
    }
    let mut cfg = scfg.clone();
    cfg.scheme = Scheme::LinearCn;
    cfg.absorber = None;
    let mut stepper = Stepper::new(field.grid.clone(), cfg.clone())
        .map_err(|e| ClassifyError::Propagation(e.to_string()))?;
    let mut state = TrajectoryState::new(field.clone());
    let n = (duration / cfg.dt).round().max(1.0) as u64;
    for _ in 0..n {
        stepper
            .step_linear(&mut state, Direction::Backward)
            .map_err(|e| ClassifyError::Propagation(e.to_string()))?;
    }
    Ok(state.field)
}

/// Scattering evidence from the diagnostics rows and the stored probes.
/// Returns the failure reason on the first criterion that does not hold.
pub fn detect_scattering(
    out: &RunOutput,
    scfg: &StepperConfig,
    cfg: &ClassifyConfig,
) -> Result<Result<ScatteringState, String>, ClassifyError> {
    let rows = &out.rows;
    if rows.len() < 4 {
        return Ok(Err("too few diagnostics rows".into()));
    }
    cumulative_l5(rows)?;

    let peak = rows.iter().map(|r| r.l4).fold(0.0f64, f64::max);
    let last = rows.last().unwrap();
    if peak <= 0.0 {
        return Ok(Err("trajectory is identically zero".into()));
    }
    if last.l4 >= cfg.l4_fraction * peak {
        return Ok(Err(format!(
            "L4 norm {:.3e} still above {:.0}% of its peak {:.3e}",
            last.l4,
            100.0 * cfg.l4_fraction,
            peak
        )));
    }

    let t_final = last.t;
    let t_tail = (1.0 - cfg.tail_fraction) * t_final;
    let s_at_tail = rows
        .iter()
        .rev()
        .find(|r| r.t <= t_tail)
        .map(|r| r.s)
        .unwrap_or(0.0);
    let s_total = last.s;
    if s_total > 0.0 && s_total - s_at_tail >= cfg.s_increment_fraction * s_total {
        return Ok(Err(format!(
            "spacetime integral still growing: last {:.0}% of the run added {:.1}% of S",
            100.0 * cfg.tail_fraction,
            100.0 * (s_total - s_at_tail) / s_total
        )));
    }

    let probes = &out.snapshots;
    if probes.len() < cfg.min_probes + 1 {
        return Ok(Err(format!(
            "need {} probes for the Cauchy test, have {}",
            cfg.min_probes + 1,
            probes.len()
        )));
    }
    // Gap between consecutive probes after pulling the later one back
    // under the free flow; a Cauchy tail means these shrink.
    let start = probes.len() - (cfg.min_probes + 1);
    let mut gaps = Vec::with_capacity(cfg.min_probes);
    for k in start..probes.len() - 1 {
        let pulled = free_backpropagate(
            &probes[k + 1].field,
            probes[k + 1].t - probes[k].t,
            scfg,
        )?;
        let denom = h1_norm(&probes[k].field).max(1e-300);
        gaps.push(h1_gap(&pulled, &probes[k].field) / denom);
    }
    for w in gaps.windows(2) {
        if w[1] >= w[0] {
            return Ok(Err(format!(
                "back-propagation gaps not decreasing: {:?}",
                gaps
            )));
        }
    }

    let final_probe = probes.last().unwrap();
    let u_plus = free_backpropagate(&final_probe.field, final_probe.t, scfg)?;
    Ok(Ok(ScatteringState {
        u_plus,
        gap: gaps.last().copied().unwrap_or(0.0) + 10.0 * scfg.cg_tol,
    }))
}

/// Compose the final verdict. Blowup evidence wins; otherwise scattering
/// evidence; otherwise undecided, carrying the reason scattering failed.
pub fn verdict(
    out: &RunOutput,
    scfg: &StepperConfig,
    cfg: &ClassifyConfig,
) -> Result<Classification, ClassifyError> {
    if let Some(reason) = detect_blowup(out, cfg) {
        return Ok(Classification {
            verdict: Verdict::Blowup,
            evidence: vec![reason],
            scattering: None,
        });
    }
    match detect_scattering(out, scfg, cfg)? {
        Ok(state) => Ok(Classification {
            verdict: Verdict::Scatter,
            evidence: vec![
                "L4 decay, saturated spacetime norm, and Cauchy back-propagation all hold".into(),
            ],
            scattering: Some(state),
        }),
        Err(reason) => Ok(Classification {
            verdict: Verdict::Undecided,
            evidence: vec![reason],
            scattering: None,
        }),
    }
}
