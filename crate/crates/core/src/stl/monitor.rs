//! Offline monitor: boolean satisfaction and robustness of mission formulas
//! over sampled trajectories.
//!
//! Semantics are discrete-time: temporal quantifiers range over sample
//! indices. A window `[t+a, t+b]` maps to the nearest enclosing index range
//! (floor on the left edge, ceil on the right, snapped by
//! [`super::INDEX_SNAP`] to absorb floating-point drift on grid-aligned
//! endpoints). Robustness is the usual min/max quantitative semantics; a
//! strictly positive value implies satisfaction, strictly negative implies
//! violation.

use super::{Formula, MonitorError, Trajectory, INDEX_SNAP};

/// Boolean satisfaction of `formula` at time `t` (which must lie on or near a
/// sample instant; it is rounded to the nearest index).
pub fn evaluate(formula: &Formula, traj: &Trajectory, t: f64) -> Result<bool, MonitorError> {
    let k = anchor_index(formula, traj, t)?;
    Ok(eval_at(formula, traj, k))
}

/// Quantitative robustness of `formula` at time `t`.
pub fn robustness(formula: &Formula, traj: &Trajectory, t: f64) -> Result<f64, MonitorError> {
    let k = anchor_index(formula, traj, t)?;
    Ok(rho_at(formula, traj, k))
}

/// Validates bounds and maps `t` to its sample index.
fn anchor_index(formula: &Formula, traj: &Trajectory, t: f64) -> Result<usize, MonitorError> {
    let period = traj.period();
    let slack = period * INDEX_SNAP.max(1e-9) + 1e-9 * t.abs();
    if t < traj.start_time() - slack {
        return Err(MonitorError::BeforeStart {
            t,
            start: traj.start_time(),
        });
    }
    let horizon = formula.horizon();
    if t + horizon > traj.end_time() + slack.max(period * 1e-6) {
        return Err(MonitorError::InsufficientHorizon {
            t,
            horizon,
            end: traj.end_time(),
        });
    }
    let q = (t - traj.start_time()) / period;
    Ok((q.round().max(0.0) as usize).min(traj.len() - 1))
}

/// Nearest enclosing index range for the real window `[lo_t, hi_t]`.
fn window_indices(traj: &Trajectory, lo_t: f64, hi_t: f64) -> (usize, usize) {
    let q_lo = (lo_t - traj.start_time()) / traj.period();
    let q_hi = (hi_t - traj.start_time()) / traj.period();
    let lo = (q_lo + INDEX_SNAP).floor().max(0.0) as usize;
    let hi = ((q_hi - INDEX_SNAP).ceil().max(0.0) as usize).min(traj.len() - 1);
    (lo.min(hi), hi)
}

fn eval_at(formula: &Formula, traj: &Trajectory, k: usize) -> bool {
    match formula {
        Formula::True => true,
        Formula::Pred(p) => p.margin(&traj.state(k).pos) >= 0.0,
        Formula::Not(p) => p.margin(&traj.state(k).pos) < 0.0,
        Formula::And(l, r) => eval_at(l, traj, k) && eval_at(r, traj, k),
        Formula::Eventually { interval, inner } => {
            let t = traj.time(k);
            let (lo, hi) = window_indices(traj, t + interval.start, t + interval.end);
            (lo..=hi).any(|k1| eval_at(inner, traj, k1))
        }
        Formula::Always { interval, inner } => {
            let t = traj.time(k);
            let (lo, hi) = window_indices(traj, t + interval.start, t + interval.end);
            (lo..=hi).all(|k1| eval_at(inner, traj, k1))
        }
        Formula::Until { interval, lhs, rhs } => {
            let t = traj.time(k);
            let (lo, hi) = window_indices(traj, t + interval.start, t + interval.end);
            (lo..=hi).any(|k1| eval_at(rhs, traj, k1) && (k..=k1).all(|k2| eval_at(lhs, traj, k2)))
        }
    }
}

fn rho_at(formula: &Formula, traj: &Trajectory, k: usize) -> f64 {
    match formula {
        Formula::True => f64::INFINITY,
        Formula::Pred(p) => p.margin(&traj.state(k).pos),
        Formula::Not(p) => -p.margin(&traj.state(k).pos),
        Formula::And(l, r) => rho_at(l, traj, k).min(rho_at(r, traj, k)),
        Formula::Eventually { interval, inner } => {
            let t = traj.time(k);
            let (lo, hi) = window_indices(traj, t + interval.start, t + interval.end);
            (lo..=hi)
                .map(|k1| rho_at(inner, traj, k1))
                .fold(f64::NEG_INFINITY, f64::max)
        }
        Formula::Always { interval, inner } => {
            let t = traj.time(k);
            let (lo, hi) = window_indices(traj, t + interval.start, t + interval.end);
            (lo..=hi)
                .map(|k1| rho_at(inner, traj, k1))
                .fold(f64::INFINITY, f64::min)
        }
        Formula::Until { interval, lhs, rhs } => {
            let t = traj.time(k);
            let (lo, hi) = window_indices(traj, t + interval.start, t + interval.end);
            // Running minimum of the left operand over [k, k1] as k1 advances.
            let mut lhs_min = (k..lo)
                .map(|k2| rho_at(lhs, traj, k2))
                .fold(f64::INFINITY, f64::min);
            let mut best = f64::NEG_INFINITY;
            for k1 in lo..=hi {
                lhs_min = lhs_min.min(rho_at(lhs, traj, k1));
                best = best.max(rho_at(rhs, traj, k1).min(lhs_min));
            }
            best
        }
    }
}
