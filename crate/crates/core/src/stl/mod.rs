//! Mission formulas: a fragment of signal temporal logic over payload position.
//!
//! State formulas (predicates, their negations, and conjunctions) describe
//! where the payload is; task formulas wrap state formulas in time-windowed
//! `F` (eventually), `G` (always), or `U` (until) operators and conjoin them.
//! Temporal operators never nest and negation applies to predicates only —
//! [`Formula::validate_fragment`] enforces this, and the smart constructors
//! check it up front.
//!
//! Formulas are evaluated over uniformly sampled trajectories
//! ([`Trajectory`]) by the monitor in [`monitor`], and compiled into
//! time-varying barriers by the `barrier` module.

pub mod monitor;
pub mod parse;

pub use monitor::{evaluate, robustness};
pub use parse::{parse_spec, ParseError};

use std::fmt;

use thiserror::Error;

use crate::rigid_body::{SystemState, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum FragmentError {
    #[error("temporal operator applied to a non-state operand (nested temporal logic)")]
    NestedTemporal,
    #[error("time interval [{0}, {1}] is not well formed (need 0 <= start <= end, finite)")]
    BadInterval(f64, f64),
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory samples are not uniformly spaced (sample {index} at t = {time})")]
    NonUniform { index: usize, time: f64 },
    #[error("sample period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error(
        "trajectory too short: evaluation at t = {t} needs horizon {horizon} but samples end at t = {end}"
    )]
    InsufficientHorizon { t: f64, horizon: f64, end: f64 },
    #[error("evaluation time {t} precedes the first sample at {start}")]
    BeforeStart { t: f64, start: f64 },
}

/// Which norm a ball predicate uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Euclidean,
    Infinity,
}

/// Atomic condition on the payload position. Each predicate evaluates a
/// margin `h(x)`; the predicate holds iff `h(x) >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Predicate {
    /// `radius - ||pos - center||` in the chosen norm.
    NormBall {
        center: Vec3,
        radius: f64,
        norm: NormKind,
    },
    /// Half space `offset - normal . pos`.
    Affine { normal: Vec3, offset: f64 },
}

impl Predicate {
    /// The margin `h(x)`; non-negative exactly when the predicate holds.
    pub fn margin(&self, pos: &Vec3) -> f64 {
        match self {
            Predicate::NormBall {
                center,
                radius,
                norm,
            } => {
                let d = pos - center;
                let dist = match norm {
                    NormKind::Euclidean => d.norm(),
                    NormKind::Infinity => d.x.abs().max(d.y.abs()).max(d.z.abs()),
                };
                radius - dist
            }
            Predicate::Affine { normal, offset } => offset - normal.dot(pos),
        }
    }
}

/// Closed time window `[start, end]`, relative to the evaluation instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeInterval {
    pub start: f64,
    pub end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self, FragmentError> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start <= end) {
            return Err(FragmentError::BadInterval(start, end));
        }
        Ok(TimeInterval { start, end })
    }
}

/// A formula of the temporal fragment. See the module docs for the shape;
/// [`Formula::validate_fragment`] rejects trees built outside it.
#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    Pred(Predicate),
    /// Negation, restricted to predicates.
    Not(Predicate),
    And(Box<Formula>, Box<Formula>),
    Eventually {
        interval: TimeInterval,
        inner: Box<Formula>,
    },
    Always {
        interval: TimeInterval,
        inner: Box<Formula>,
    },
    Until {
        interval: TimeInterval,
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
}

impl Formula {
    /// True for state formulas: predicates, negated predicates, `true`, and
    /// conjunctions of state formulas. These are the only operands temporal
    /// operators accept.
    pub fn is_state_formula(&self) -> bool {
        match self {
            Formula::True | Formula::Pred(_) | Formula::Not(_) => true,
            Formula::And(l, r) => l.is_state_formula() && r.is_state_formula(),
            _ => false,
        }
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn eventually(interval: TimeInterval, inner: Formula) -> Result<Formula, FragmentError> {
        if !inner.is_state_formula() {
            return Err(FragmentError::NestedTemporal);
        }
        Ok(Formula::Eventually {
            interval,
            inner: Box::new(inner),
        })
    }

    pub fn always(interval: TimeInterval, inner: Formula) -> Result<Formula, FragmentError> {
        if !inner.is_state_formula() {
            return Err(FragmentError::NestedTemporal);
        }
        Ok(Formula::Always {
            interval,
            inner: Box::new(inner),
        })
    }

    pub fn until(
        interval: TimeInterval,
        lhs: Formula,
        rhs: Formula,
    ) -> Result<Formula, FragmentError> {
        if !lhs.is_state_formula() || !rhs.is_state_formula() {
            return Err(FragmentError::NestedTemporal);
        }
        Ok(Formula::Until {
            interval,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    /// Checks an arbitrary tree against the fragment: temporal operators only
    /// over state formulas, intervals well formed.
    pub fn validate_fragment(&self) -> Result<(), FragmentError> {
        match self {
            Formula::True | Formula::Pred(_) | Formula::Not(_) => Ok(()),
            Formula::And(l, r) => {
                l.validate_fragment()?;
                r.validate_fragment()
            }
            Formula::Eventually { interval, inner } | Formula::Always { interval, inner } => {
                TimeInterval::new(interval.start, interval.end)?;
                if !inner.is_state_formula() {
                    return Err(FragmentError::NestedTemporal);
                }
                inner.validate_fragment()
            }
            Formula::Until { interval, lhs, rhs } => {
                TimeInterval::new(interval.start, interval.end)?;
                if !lhs.is_state_formula() || !rhs.is_state_formula() {
                    return Err(FragmentError::NestedTemporal);
                }
                lhs.validate_fragment()?;
                rhs.validate_fragment()
            }
        }
    }

    /// How far past the evaluation instant the formula can look: 0 for state
    /// formulas, window end plus operand horizon for temporal operators.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::True | Formula::Pred(_) | Formula::Not(_) => 0.0,
            Formula::And(l, r) => l.horizon().max(r.horizon()),
            Formula::Eventually { interval, inner } | Formula::Always { interval, inner } => {
                interval.end + inner.horizon()
            }
            Formula::Until { interval, lhs, rhs } => {
                interval.end + lhs.horizon().max(rhs.horizon())
            }
        }
    }

    /// Splits a top-level conjunction into its conjuncts (a single-element
    /// slice for anything else), for per-task reporting.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::And(l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }
}

/// Standalone horizon helper mirroring [`Formula::horizon`].
pub fn horizon(f: &Formula) -> f64 {
    f.horizon()
}

fn fmt_num(x: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // Print integral values without a trailing ".0" so formulas round-trip
    // through the parser in their natural surface form.
    if x == x.trunc() && x.abs() < 1e15 {
        write!(f, "{}", x as i64)
    } else {
        write!(f, "{x}")
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::NormBall {
                center,
                radius,
                norm: NormKind::Euclidean,
            } => {
                write!(f, "ball(r0, [")?;
                fmt_num(center.x, f)?;
                write!(f, ", ")?;
                fmt_num(center.y, f)?;
                write!(f, ", ")?;
                fmt_num(center.z, f)?;
                write!(f, "]) <= ")?;
                fmt_num(*radius, f)
            }
            Predicate::NormBall {
                center,
                radius,
                norm: NormKind::Infinity,
            } => {
                if center.norm() == 0.0 {
                    write!(f, "box(r0, ")?;
                    fmt_num(*radius, f)?;
                    write!(f, ")")
                } else {
                    // No surface syntax for off-origin boxes; describe it.
                    write!(f, "box(r0 - [{}, {}, {}], ", center.x, center.y, center.z)?;
                    fmt_num(*radius, f)?;
                    write!(f, ")")
                }
            }
            Predicate::Affine { normal, offset } => {
                write!(f, "[{}, {}, {}] . r0 <= ", normal.x, normal.y, normal.z)?;
                fmt_num(*offset, f)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(p) => write!(f, "not {p}"),
            Formula::And(l, r) => write!(f, "{l} and {r}"),
            Formula::Eventually { interval, inner } => {
                write!(f, "F[")?;
                fmt_num(interval.start, f)?;
                write!(f, ", ")?;
                fmt_num(interval.end, f)?;
                write!(f, "]({inner})")
            }
            Formula::Always { interval, inner } => {
                write!(f, "G[")?;
                fmt_num(interval.start, f)?;
                write!(f, ", ")?;
                fmt_num(interval.end, f)?;
                write!(f, "]({inner})")
            }
            Formula::Until { interval, lhs, rhs } => {
                write!(f, "U[")?;
                fmt_num(interval.start, f)?;
                write!(f, ", ")?;
                fmt_num(interval.end, f)?;
                write!(f, "]({lhs}, {rhs})")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Tolerance (in sample periods) when matching a real time to a sample index.
pub const INDEX_SNAP: f64 = 1e-9;

/// Uniformly sampled state sequence the monitor quantifies over.
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: Vec<SystemState>,
    period: f64,
}

impl Trajectory {
    /// Wraps samples after checking they are uniformly spaced at `period`
    /// (each state's `time` field must sit on the grid).
    pub fn new(states: Vec<SystemState>, period: f64) -> Result<Self, MonitorError> {
        if states.is_empty() {
            return Err(MonitorError::EmptyTrajectory);
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(MonitorError::BadPeriod(period));
        }
        let t0 = states[0].time;
        for (k, s) in states.iter().enumerate() {
            let expected = t0 + k as f64 * period;
            if (s.time - expected).abs() > INDEX_SNAP * period.max(expected.abs()) + 1e-12 {
                return Err(MonitorError::NonUniform {
                    index: k,
                    time: s.time,
                });
            }
        }
        Ok(Trajectory { states, period })
    }

    /// Position-only trajectory (identity attitudes, zero velocities) —
    /// enough for the position predicates the fragment uses.
    pub fn from_positions(t0: f64, period: f64, positions: &[Vec3]) -> Result<Self, MonitorError> {
        let states = positions
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let mut s = SystemState::at_rest(1);
                s.time = t0 + k as f64 * period;
                s.pos = *p;
                s
            })
            .collect();
        Trajectory::new(states, period)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn start_time(&self) -> f64 {
        self.states[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.states[self.states.len() - 1].time
    }

    pub fn state(&self, k: usize) -> &SystemState {
        &self.states[k]
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time() + k as f64 * self.period
    }
}
