//! Time-varying certificate synthesis from mission formulas.
//!
//! Each reach (`F[a,b]`) or hold (`G[a,b]`) goal over a position predicate
//! becomes one or more *atomic barriers* of the form `b_j(r, t) = Γ_j(t) −
//! s_j(r)`, where `s_j` measures how far the payload is from the goal region
//! and `Γ_j` is a scheduled envelope that shrinks toward the region bound as
//! the deadline approaches. Keeping every `b_j` nonnegative along the closed
//! loop therefore certifies the goal: at a reach deadline `Γ = R` forces the
//! payload inside the target ball, and throughout a hold window `Γ ≤ R` keeps
//! it there.
//!
//! Active atoms are blended with a soft minimum, `B = −ln Σ_j e^{−b_j}`,
//! which stays within `ln n` of the true minimum and is smooth, so the
//! controller can consume first and second derivatives. Atoms participate
//! only between their activation time and the end of their goal window;
//! expired goals drop out so they stop taxing the blend.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rigid_body::{Mat3, Vec3};
use crate::stl::{Formula, NormKind, Predicate};

/// Absolute slack when comparing simulation times against schedule edges,
/// comfortably above accumulated `k * period` rounding and far below any
/// control period.
pub const ACTIVATION_SNAP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("formula shape not supported for barrier synthesis: {0}")]
    Unsupported(String),
    #[error("bad barrier config: {0}")]
    BadConfig(String),
    #[error("profile override index {index} out of range: formula yields {count} atoms")]
    OverrideIndex { index: usize, count: usize },
    #[error(
        "hold goal `{label}` cannot be scheduled: it activates at its own window start \
         but the reference distance {ref_dist:.3} plus margin exceeds the radius {radius:.3}"
    )]
    ScheduleConflict {
        label: String,
        ref_dist: f64,
        radius: f64,
    },
    #[error(
        "profile for `{label}` is unsound: gamma({t:.4}) = {gamma:.7} exceeds the \
         region bound {bound:.7} (tolerance {tol:e}) inside the hold window"
    )]
    UnsoundProfile {
        label: String,
        t: f64,
        gamma: f64,
        bound: f64,
        tol: f64,
    },
    #[error("barrier `{label}` is infeasible at the start: b({t0}) = {value:.6}")]
    InfeasibleAtStart { label: String, t0: f64, value: f64 },
    #[error("combined barrier is infeasible at the start: B({t0}) = {value:.6}")]
    CompositeInfeasible { t0: f64, value: f64 },
}

/// Scheduled envelope `Γ(t)` for one atomic barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalProfile {
    Constant {
        value: f64,
    },
    /// `Γ(t) = start_value − decay_rate · (min(t, t_freeze) − t_start)`.
    Linear {
        start_value: f64,
        decay_rate: f64,
        t_start: f64,
        t_freeze: f64,
    },
    /// `Γ(t) = amplitude · exp(−rate · (t − t_start)) + offset`.
    Exponential {
        amplitude: f64,
        rate: f64,
        offset: f64,
        t_start: f64,
    },
}

impl TemporalProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TemporalProfile::Constant { value } => value,
            TemporalProfile::Linear {
                start_value,
                decay_rate,
                t_start,
                t_freeze,
            } => start_value - decay_rate * (t.min(t_freeze) - t_start),
            TemporalProfile::Exponential {
                amplitude,
                rate,
                offset,
                t_start,
            } => amplitude * (-rate * (t - t_start)).exp() + offset,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            TemporalProfile::Constant { .. } => 0.0,
            TemporalProfile::Linear {
                decay_rate,
                t_freeze,
                ..
            } => {
                if t < t_freeze {
                    -decay_rate
                } else {
                    0.0
                }
            }
            TemporalProfile::Exponential {
                amplitude,
                rate,
                t_start,
                ..
            } => -rate * amplitude * (-rate * (t - t_start)).exp(),
        }
    }

    pub fn accel(&self, t: f64) -> f64 {
        match *self {
            TemporalProfile::Constant { .. } | TemporalProfile::Linear { .. } => 0.0,
            TemporalProfile::Exponential {
                amplitude,
                rate,
                t_start,
                ..
            } => rate * rate * amplitude * (-rate * (t - t_start)).exp(),
        }
    }
}

/// Spatial part of an atomic barrier.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomGeometry {
    /// `s(r) = sqrt(‖r − center‖² + epsilon²)`; the small regularizer keeps
    /// the gradient bounded when the payload sits on the center.
    Ball { center: Vec3, epsilon: f64 },
    /// `s(r) = normal · r` with the plane offset folded into the profile.
    Halfspace { normal: Vec3 },
}

impl AtomGeometry {
    /// Distance surrogate, its gradient, and its Hessian at `r`.
    fn measure(&self, r: &Vec3) -> (f64, Vec3, Mat3) {
        match self {
            AtomGeometry::Ball { center, epsilon } => {
                let d = r - center;
                let s = (d.norm_squared() + epsilon * epsilon).sqrt();
                let grad = d / s;
                let hess = Mat3::identity() / s - d * d.transpose() / (s * s * s);
                (s, grad, hess)
            }
            AtomGeometry::Halfspace { normal } => (normal.dot(r), *normal, Mat3::zeros()),
        }
    }
}

/// One scheduled barrier `b(r, t) = Γ(t) − s(r)`, active on
/// `[t_activate, t_expire]`.
#[derive(Debug, Clone)]
pub struct AtomicBarrier {
    pub geometry: AtomGeometry,
    pub profile: TemporalProfile,
    pub t_activate: f64,
    pub t_expire: f64,
    /// Human-readable provenance for diagnostics and the `check` listing.
    pub label: String,
}

impl AtomicBarrier {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t_activate - ACTIVATION_SNAP && t <= self.t_expire + ACTIVATION_SNAP
    }

    pub fn value(&self, r: &Vec3, t: f64) -> f64 {
        let (s, _, _) = self.geometry.measure(r);
        self.profile.value(t) - s
    }

    /// `(b, ∂b/∂t, ∂²b/∂t², ∇b, ∇²b)` at `(r, t)`; the barrier separates in
    /// time and space, so the mixed derivative of a single atom is zero.
    fn terms(&self, r: &Vec3, t: f64) -> (f64, f64, f64, Vec3, Mat3) {
        let (s, gs, hs) = self.geometry.measure(r);
        (
            self.profile.value(t) - s,
            self.profile.rate(t),
            self.profile.accel(t),
            -gs,
            -hs,
        )
    }
}

/// Derivatives of the blended barrier `B` at one `(r, t)`, everything the
/// constraint assembly needs.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub b: f64,
    pub db_dt: f64,
    pub d2b_dt2: f64,
    pub grad_r: Vec3,
    pub hess_r: Mat3,
    /// `∂∇B/∂t`: zero per atom, but the blend weights shift over time.
    pub d_grad_dt: Vec3,
    pub n_active: usize,
}

/// Soft minimum of the active atomic barriers.
#[derive(Debug, Clone)]
pub struct CompositeBarrier {
    atoms: Vec<AtomicBarrier>,
}

impl CompositeBarrier {
    pub fn from_atoms(atoms: Vec<AtomicBarrier>) -> Self {
        CompositeBarrier { atoms }
    }

    pub fn atoms(&self) -> &[AtomicBarrier] {
        &self.atoms
    }

    pub fn active_indices(&self, t: f64) -> Vec<usize> {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_active(t))
            .map(|(i, _)| i)
            .collect()
    }

    /// Blended value and derivatives at `(r, t)`, or `None` when no atom is
    /// active (an unconstrained stretch of the mission).
    ///
    /// With normalized weights `w_j ∝ e^{−b_j}`, first derivatives of
    /// `B = −ln Σ e^{−b_j}` are weighted means of the atom derivatives and
    /// second derivatives pick up a variance correction:
    /// `∂²B = Σ w_j ∂²b_j − (Σ w_j ∂b_j ∂b_jᵀ − (Σ w_j ∂b_j)(Σ w_j ∂b_j)ᵀ)`.
    pub fn eval(&self, r: &Vec3, t: f64) -> Option<BarrierEval> {
        let active: Vec<&AtomicBarrier> = self.atoms.iter().filter(|a| a.is_active(t)).collect();
        if active.is_empty() {
            return None;
        }
        let terms: Vec<(f64, f64, f64, Vec3, Mat3)> =
            active.iter().map(|a| a.terms(r, t)).collect();

        // Shift by the minimum so the exponentials cannot overflow.
        let b_min = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = terms.iter().map(|t| (-(t.0 - b_min)).exp()).collect();
        let z: f64 = raw.iter().sum();
        let b = b_min - z.ln();

        let mut db_dt = 0.0;
        let mut grad = Vec3::zeros();
        let mut mean_gdot2 = 0.0;
        let mut mean_gddot = 0.0;
        let mut mean_gg = Mat3::zeros();
        let mut mean_gdot_g = Vec3::zeros();
        let mut hess = Mat3::zeros();
        for (w_raw, (_, gdot, gddot, g, h)) in raw.iter().zip(&terms) {
            let w = w_raw / z;
            db_dt += w * gdot;
            grad += w * g;
            mean_gdot2 += w * gdot * gdot;
            mean_gddot += w * gddot;
            mean_gg += w * g * g.transpose();
            mean_gdot_g += w * gdot * g;
            hess += w * h;
        }
        let d2b_dt2 = mean_gddot - (mean_gdot2 - db_dt * db_dt);
        let hess_r = hess - (mean_gg - grad * grad.transpose());
        let d_grad_dt = -(mean_gdot_g - db_dt * grad);

        Some(BarrierEval {
            b,
            db_dt,
            d2b_dt2,
            grad_r: grad,
            hess_r,
            d_grad_dt,
            n_active: active.len(),
        })
    }
}

/// Tunables for barrier synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    /// Extra headroom added to the reference distance when a profile is
    /// scheduled, so the barrier starts comfortably feasible.
    pub margin: f64,
    /// Regularizer inside the ball distance surrogate.
    pub epsilon: f64,
    /// How long before its window a reach goal activates; `None` means it is
    /// active from the start of the run.
    pub lead_f: Option<f64>,
    /// Same for hold goals.
    pub lead_g: Option<f64>,
    /// A hold envelope decays toward this fraction of the hold radius, which
    /// sets how firmly the payload is pulled to the ball center.
    pub g_offset_fraction: f64,
    /// Slack allowed when checking hold envelopes against their region bound.
    pub soundness_tol: f64,
    /// Replacement profiles keyed by atom index in `check` listing order.
    pub profile_overrides: BTreeMap<usize, TemporalProfile>,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            margin: 2.0,
            epsilon: 1e-3,
            lead_f: None,
            lead_g: None,
            g_offset_fraction: 2.0 / 3.0,
            soundness_tol: 1e-3,
            profile_overrides: BTreeMap::new(),
        }
    }
}

impl BarrierConfig {
    fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |msg: &str| Err(SynthesisError::BadConfig(msg.to_string()));
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad("margin must be finite and nonnegative");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be finite and positive");
        }
        for lead in [self.lead_f, self.lead_g].into_iter().flatten() {
            if !(lead.is_finite() && lead >= 0.0) {
                return bad("lead times must be finite and nonnegative (or omitted)");
            }
        }
        if !(self.g_offset_fraction > 0.0 && self.g_offset_fraction < 1.0) {
            return bad("g_offset_fraction must lie strictly between 0 and 1");
        }
        if !(self.soundness_tol.is_finite() && self.soundness_tol >= 0.0) {
            return bad("soundness_tol must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GoalKind {
    Reach,
    Hold,
}

/// Flattened goal awaiting a profile.
struct PendingAtom {
    kind: GoalKind,
    win_start: f64,
    win_end: f64,
    geom: PendingGeom,
    label: String,
}

enum PendingGeom {
    Ball { center: Vec3, radius: f64 },
    Halfspace { normal: Vec3, bound: f64 },
}

fn vec3_label(v: &Vec3) -> String {
    format!("({}, {}, {})", v.x, v.y, v.z)
}

/// Expands one goal's state formula into pending atoms.
fn expand_state(
    f: &Formula,
    kind: GoalKind,
    win_start: f64,
    win_end: f64,
    op: &str,
    out: &mut Vec<PendingAtom>,
) -> Result<(), SynthesisError> {
    let window = format!("{op}[{}, {}]", win_start, win_end);
    match f {
        Formula::True => Ok(()),
        Formula::And(l, r) => {
            expand_state(l, kind, win_start, win_end, op, out)?;
            expand_state(r, kind, win_start, win_end, op, out)
        }
        Formula::Not(_) => Err(SynthesisError::Unsupported(
            "negated predicates cannot be turned into control goals".to_string(),
        )),
        Formula::Pred(Predicate::NormBall {
            center,
            radius,
            norm: NormKind::Euclidean,
        }) => {
            out.push(PendingAtom {
                kind,
                win_start,
                win_end,
                geom: PendingGeom::Ball {
                    center: *center,
                    radius: *radius,
                },
                label: format!("{window} ball {} r={}", vec3_label(center), radius),
            });
            Ok(())
        }
        Formula::Pred(Predicate::NormBall {
            center,
            radius,
            norm: NormKind::Infinity,
        }) => {
            // One halfspace per box face: σ(r_ax − c_ax) ≤ S.
            for (ax, name) in ["x", "y", "z"].iter().enumerate() {
                for sigma in [1.0f64, -1.0] {
                    let mut normal = Vec3::zeros();
                    normal[ax] = sigma;
                    let sign = if sigma > 0.0 { '+' } else { '-' };
                    out.push(PendingAtom {
                        kind,
                        win_start,
                        win_end,
                        geom: PendingGeom::Halfspace {
                            normal,
                            bound: radius + sigma * center[ax],
                        },
                        label: format!("{window} box face {sign}{name} bound={radius}"),
                    });
                }
            }
            Ok(())
        }
        Formula::Pred(Predicate::Affine { normal, offset }) => {
            out.push(PendingAtom {
                kind,
                win_start,
                win_end,
                geom: PendingGeom::Halfspace {
                    normal: *normal,
                    bound: *offset,
                },
                label: format!("{window} halfspace n={}", vec3_label(normal)),
            });
            Ok(())
        }
        _ => Err(SynthesisError::Unsupported(
            "nested temporal operators cannot appear inside a goal".to_string(),
        )),
    }
}

/// Builds the scheduled composite barrier for `formula`, starting the mission
/// at time `t0` from payload position `r0`.
///
/// Supported shape: a conjunction of `F[a,b](...)` and `G[a,b](...)` goals
/// over (conjunctions of) position predicates. Each ball goal receives a
/// shrinking envelope — linear to the radius at the deadline for a reach
/// goal, exponential settling just inside the radius for a hold goal — and
/// box or halfspace goals keep their constant bound. Envelope start values
/// come from a *reference distance*: the distance from the latest goal region
/// that is guaranteed to contain the payload when the atom activates (or from
/// `r0` for atoms active at the start), padded by `config.margin`.
pub fn synthesize(
    formula: &Formula,
    t0: f64,
    r0: &Vec3,
    config: &BarrierConfig,
) -> Result<CompositeBarrier, SynthesisError> {
    config.validate()?;

    let mut pending = Vec::new();
    for goal in formula.conjuncts() {
        match goal {
            Formula::Eventually { interval, inner } => expand_state(
                inner,
                GoalKind::Reach,
                t0 + interval.start,
                t0 + interval.end,
                "F",
                &mut pending,
            )?,
            Formula::Always { interval, inner } => expand_state(
                inner,
                GoalKind::Hold,
                t0 + interval.start,
                t0 + interval.end,
                "G",
                &mut pending,
            )?,
            Formula::True => {}
            other => {
                return Err(SynthesisError::Unsupported(format!(
                    "`{other}` is not an F/G goal; barrier synthesis handles conjunctions \
                     of reach and hold goals"
                )))
            }
        }
    }

    // Activation times.
    let t_act: Vec<f64> = pending
        .iter()
        .map(|p| {
            let lead = match p.kind {
                GoalKind::Reach => config.lead_f,
                GoalKind::Hold => config.lead_g,
            };
            match lead {
                Some(lead) => (p.win_start - lead).max(t0),
                None => t0,
            }
        })
        .collect();

    // Reference distance for atom `i`: where can the payload be when the atom
    // activates? At the run start that is `r0`; later it is inside the latest
    // goal ball whose window has already closed.
    let ref_dist = |i: usize| -> f64 {
        let PendingGeom::Ball { center, .. } = &pending[i].geom else {
            return 0.0;
        };
        if t_act[i] <= t0 + ACTIVATION_SNAP {
            return (r0 - center).norm();
        }
        let mut best: Option<(f64, f64, Vec3)> = None; // (win_end, slack, anchor)
        for (j, other) in pending.iter().enumerate() {
            if j == i {
                continue;
            }
            let PendingGeom::Ball {
                center: anchor,
                radius: slack,
            } = &other.geom
            else {
                continue;
            };
            if other.win_end <= t_act[i] + ACTIVATION_SNAP {
                let better = match &best {
                    None => true,
                    Some((end, sl, _)) => {
                        other.win_end > *end || (other.win_end == *end && slack < sl)
                    }
                };
                if better {
                    best = Some((other.win_end, *slack, *anchor));
                }
            }
        }
        match best {
            Some((_, slack, anchor)) => (anchor - center).norm() + slack,
            None => (r0 - center).norm(),
        }
    };

    let mut atoms = Vec::with_capacity(pending.len());
    for (i, p) in pending.iter().enumerate() {
        let profile = match &p.geom {
            PendingGeom::Halfspace { bound, .. } => TemporalProfile::Constant { value: *bound },
            PendingGeom::Ball { radius, .. } => {
                let rd = ref_dist(i);
                let start_value = rd + config.margin;
                match p.kind {
                    GoalKind::Reach => {
                        let span = p.win_end - t_act[i];
                        if span <= ACTIVATION_SNAP {
                            TemporalProfile::Constant { value: *radius }
                        } else {
                            TemporalProfile::Linear {
                                start_value,
                                decay_rate: (start_value - radius) / span,
                                t_start: t_act[i],
                                t_freeze: p.win_end,
                            }
                        }
                    }
                    GoalKind::Hold => {
                        let span = p.win_start - t_act[i];
                        if start_value <= *radius {
                            // Already inside the hold ball with margin when
                            // the atom activates; the bound itself suffices.
                            TemporalProfile::Constant { value: *radius }
                        } else if span <= ACTIVATION_SNAP {
                            return Err(SynthesisError::ScheduleConflict {
                                label: p.label.clone(),
                                ref_dist: rd,
                                radius: *radius,
                            });
                        } else {
                            let offset = config.g_offset_fraction * radius;
                            let amplitude = start_value - offset;
                            TemporalProfile::Exponential {
                                amplitude,
                                rate: (amplitude / (radius - offset)).ln() / span,
                                offset,
                                t_start: t_act[i],
                            }
                        }
                    }
                }
            }
        };
        let geometry = match &p.geom {
            PendingGeom::Ball { center, .. } => AtomGeometry::Ball {
                center: *center,
                epsilon: config.epsilon,
            },
            PendingGeom::Halfspace { normal, .. } => AtomGeometry::Halfspace { normal: *normal },
        };
        atoms.push(AtomicBarrier {
            geometry,
            profile,
            t_activate: t_act[i],
            t_expire: p.win_end,
            label: p.label.clone(),
        });
    }

    for (&index, profile) in &config.profile_overrides {
        if index >= atoms.len() {
            return Err(SynthesisError::OverrideIndex {
                index,
                count: atoms.len(),
            });
        }
        atoms[index].profile = profile.clone();
    }

    // Soundness: keeping b ≥ 0 must actually certify the goal. Hold
    // envelopes may not exceed the region bound anywhere in their window;
    // reach envelopes must be at or below the radius at the deadline.
    for (p, atom) in pending.iter().zip(&atoms) {
        let bound = match &p.geom {
            PendingGeom::Ball { radius, .. } => *radius,
            PendingGeom::Halfspace { bound, .. } => *bound,
        };
        match p.kind {
            GoalKind::Hold => {
                let steps = 256;
                for k in 0..=steps {
                    let t = p.win_start + (p.win_end - p.win_start) * k as f64 / steps as f64;
                    let gamma = atom.profile.value(t);
                    if gamma > bound + config.soundness_tol {
                        return Err(SynthesisError::UnsoundProfile {
                            label: p.label.clone(),
                            t,
                            gamma,
                            bound,
                            tol: config.soundness_tol,
                        });
                    }
                }
            }
            GoalKind::Reach => {
                let gamma = atom.profile.value(p.win_end);
                if gamma > bound + config.soundness_tol {
                    return Err(SynthesisError::UnsoundProfile {
                        label: p.label.clone(),
                        t: p.win_end,
                        gamma,
                        bound,
                        tol: config.soundness_tol,
                    });
                }
            }
        }
    }

    // The schedule must start strictly feasible from r0.
    for atom in &atoms {
        if atom.is_active(t0) {
            let v = atom.value(r0, t0);
            if v <= 0.0 {
                return Err(SynthesisError::InfeasibleAtStart {
                    label: atom.label.clone(),
                    t0,
                    value: v,
                });
            }
        }
    }
    let composite = CompositeBarrier::from_atoms(atoms);
    if let Some(eval) = composite.eval(r0, t0) {
        if eval.b <= 0.0 {
            return Err(SynthesisError::CompositeInfeasible { t0, value: eval.b });
        }
    }
    Ok(composite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse_spec;
    use approx::assert_relative_eq;
    use rand::{RngExt as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn ball_atom(center: [f64; 3], profile: TemporalProfile, window: (f64, f64)) -> AtomicBarrier {
        AtomicBarrier {
            geometry: AtomGeometry::Ball {
                center: Vec3::new(center[0], center[1], center[2]),
                epsilon: 1e-3,
            },
            profile,
            t_activate: window.0,
            t_expire: window.1,
            label: String::new(),
        }
    }

    /// The published two-goal mission: reach a 0.1-ball at (2,2,2) by t=14,
    /// then hold a 3-ball there until t=25, with hand-picked envelopes.
    fn reach_hold_pair() -> CompositeBarrier {
        CompositeBarrier::from_atoms(vec![
            ball_atom(
                [2.0, 2.0, 2.0],
                TemporalProfile::Linear {
                    start_value: 50.1,
                    decay_rate: 50.0 / 14.0,
                    t_start: 0.0,
                    t_freeze: 14.0,
                },
                (0.0, 14.0),
            ),
            ball_atom(
                [2.0, 2.0, 2.0],
                TemporalProfile::Exponential {
                    amplitude: 347.93,
                    rate: 0.418,
                    offset: 2.0,
                    t_start: 0.0,
                },
                (0.0, 25.0),
            ),
        ])
    }

    #[test]
    fn profile_shapes() {
        let lin = TemporalProfile::Linear {
            start_value: 50.1,
            decay_rate: 50.0 / 14.0,
            t_start: 0.0,
            t_freeze: 14.0,
        };
        assert_relative_eq!(lin.value(0.0), 50.1);
        assert_relative_eq!(lin.value(14.0), 0.1, max_relative = 1e-12);
        // Frozen past the deadline.
        assert_relative_eq!(lin.value(20.0), 0.1, max_relative = 1e-12);
        assert_relative_eq!(lin.rate(7.0), -50.0 / 14.0);
        assert_eq!(lin.rate(15.0), 0.0);

        let exp = TemporalProfile::Exponential {
            amplitude: 347.93,
            rate: 0.418,
            offset: 2.0,
            t_start: 0.0,
        };
        assert_relative_eq!(exp.value(0.0), 349.93);
        // Slightly above the hold radius at the window opening — within the
        // soundness tolerance.
        assert_relative_eq!(exp.value(14.0), 3.0000013101167866, max_relative = 1e-12);
        assert_relative_eq!(exp.value(20.0), 2.081431045048303, max_relative = 1e-12);
        assert_relative_eq!(exp.rate(0.0), -0.418 * 347.93);
        assert_relative_eq!(exp.accel(0.0), 0.418 * 0.418 * 347.93);
    }

    #[test]
    fn initial_value_matches_hand_computation() {
        let comp = reach_hold_pair();
        let r0 = Vec3::zeros();
        let eval = comp.eval(&r0, 0.0).unwrap();
        // First atom: 50.1 − sqrt(12 + 1e-6); the hold atom contributes only
        // ~1e-131 to the blend at t = 0.
        let a0 = comp.atoms()[0].value(&r0, 0.0);
        assert_relative_eq!(a0, 46.63589824052468, max_relative = 1e-12);
        assert_relative_eq!(eval.b, 46.635898384862244, max_relative = 1e-6);
        assert_eq!(eval.n_active, 2);
    }

    #[test]
    fn gradient_points_from_payload_toward_goal() {
        let comp = reach_hold_pair();
        let eval = comp.eval(&Vec3::zeros(), 0.0).unwrap();
        // ∇B ≈ (Λ − r)/‖Λ − r‖ for a single dominating ball atom.
        for ax in 0..3 {
            assert_relative_eq!(eval.grad_r[ax], 0.5773502451333661, max_relative = 1e-9);
        }
    }

    #[test]
    fn softmin_of_equal_values_dips_by_ln_n() {
        let comp = CompositeBarrier::from_atoms(vec![
            ball_atom(
                [0.0, 0.0, 1.0],
                TemporalProfile::Constant { value: 1.0 },
                (0.0, 10.0),
            ),
            ball_atom(
                [0.0, 0.0, -1.0],
                TemporalProfile::Constant { value: 1.0 },
                (0.0, 10.0),
            ),
        ]);
        // At the origin both atoms read 1 − sqrt(1 + ε²) ≈ 0.
        let eval = comp.eval(&Vec3::zeros(), 0.0).unwrap();
        assert_relative_eq!(eval.b, -std::f64::consts::LN_2, epsilon = 1e-6);
    }

    #[test]
    fn expired_goals_drop_out_of_the_blend() {
        let comp = reach_hold_pair();
        assert_eq!(comp.active_indices(5.0), vec![0, 1]);
        assert_eq!(comp.active_indices(20.0), vec![1]);
        assert!(comp.active_indices(30.0).is_empty());
        assert!(comp.eval(&Vec3::zeros(), 30.0).is_none());

        // Sitting on the goal during the hold window leaves headroom that the
        // expired reach atom would otherwise have eaten.
        let on_goal = Vec3::new(2.0, 2.0, 2.0);
        let held = comp.eval(&on_goal, 20.0).unwrap();
        assert_eq!(held.n_active, 1);
        assert!(held.b > 2.0, "b = {}", held.b);
    }

    #[test]
    fn synthesis_schedules_the_delivery_mission() {
        let spec = "F[0, 18](ball(r0, [10, 10, 5]) <= 1) and G[17, 30](ball(r0, [10, 10, 5]) <= 1) \
                    and F[30, 48](ball(r0, [25, 10, 5]) <= 1) and G[47, 60](ball(r0, [25, 10, 5]) <= 1) \
                    and F[60, 78](ball(r0, [40, 20, 1]) <= 1) and G[77, 90](ball(r0, [40, 20, 1]) <= 1) \
                    and G[0, 90](box(r0, 50))";
        let formula = parse_spec(spec).unwrap();
        let config = BarrierConfig {
            lead_f: Some(0.0),
            lead_g: Some(17.0),
            ..BarrierConfig::default()
        };
        let r0 = Vec3::new(0.0, 0.0, 5.0);
        let comp = synthesize(&formula, 0.0, &r0, &config).unwrap();
        let atoms = comp.atoms();
        assert_eq!(atoms.len(), 12); // 6 ball goals + 6 box faces

        // Reach goals activate at their window start, holds 17 s early.
        let acts: Vec<f64> = atoms.iter().map(|a| a.t_activate).collect();
        assert_eq!(&acts[..6], &[0.0, 0.0, 30.0, 30.0, 60.0, 60.0]);
        assert!(acts[6..].iter().all(|&t| t == 0.0));

        // The second reach envelope starts from the previous hold ball:
        // ‖Λ1 − Λ2‖ + hold radius + margin = 15 + 1 + 2.
        assert_relative_eq!(atoms[2].profile.value(30.0), 18.0, max_relative = 1e-12);
        assert_relative_eq!(atoms[2].profile.value(48.0), 1.0, max_relative = 1e-9);
        // Hold envelopes land exactly on the radius at their window start.
        assert_relative_eq!(atoms[3].profile.value(47.0), 1.0, max_relative = 1e-9);
        assert_relative_eq!(atoms[5].profile.value(77.0), 1.0, max_relative = 1e-9);

        // Every atom active at t = 0 starts feasible from r0.
        let eval = comp.eval(&r0, 0.0).unwrap();
        assert!(eval.b > 0.0);
    }

    #[test]
    fn synthesis_handles_the_reach_hold_pair_without_overrides() {
        let formula = parse_spec(
            "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and G[14, 25](ball(r0, [2, 2, 2]) <= 3)",
        )
        .unwrap();
        let comp = synthesize(&formula, 0.0, &Vec3::zeros(), &BarrierConfig::default()).unwrap();
        let atoms = comp.atoms();
        assert_eq!(atoms.len(), 2);
        // Reach: sqrt(12) + 2 down to 0.1 at t = 14.
        assert_relative_eq!(
            atoms[0].profile.value(0.0),
            3.4641016151377544 + 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(atoms[0].profile.value(14.0), 0.1, max_relative = 1e-9);
        // Hold: exponential pinned to the radius at its window start, then
        // settling toward two thirds of it.
        assert_relative_eq!(atoms[1].profile.value(14.0), 3.0, max_relative = 1e-9);
        assert!(atoms[1].profile.value(25.0) > 2.0);
        assert!(atoms[1].profile.value(25.0) < 3.0);
        assert!(comp.eval(&Vec3::zeros(), 0.0).unwrap().b > 0.0);
    }

    #[test]
    fn override_replaces_profiles_by_listing_index() {
        let formula = parse_spec(
            "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and G[14, 25](ball(r0, [2, 2, 2]) <= 3)",
        )
        .unwrap();
        let mut config = BarrierConfig::default();
        config.profile_overrides.insert(
            0,
            TemporalProfile::Linear {
                start_value: 50.1,
                decay_rate: 50.0 / 14.0,
                t_start: 0.0,
                t_freeze: 14.0,
            },
        );
        config.profile_overrides.insert(
            1,
            TemporalProfile::Exponential {
                amplitude: 347.93,
                rate: 0.418,
                offset: 2.0,
                t_start: 0.0,
            },
        );
        let comp = synthesize(&formula, 0.0, &Vec3::zeros(), &config).unwrap();
        assert_relative_eq!(comp.atoms()[0].profile.value(0.0), 50.1);
        assert_relative_eq!(comp.atoms()[1].profile.value(0.0), 349.93);

        config
            .profile_overrides
            .insert(7, TemporalProfile::Constant { value: 1.0 });
        let err = synthesize(&formula, 0.0, &Vec3::zeros(), &config).unwrap_err();
        assert!(matches!(
            err,
            SynthesisError::OverrideIndex { index: 7, count: 2 }
        ));
    }

    #[test]
    fn unsound_and_infeasible_schedules_are_rejected() {
        let formula = parse_spec(
            "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and G[14, 25](ball(r0, [2, 2, 2]) <= 3)",
        )
        .unwrap();
        // Inflating the hold envelope above its radius breaks the guarantee.
        let mut config = BarrierConfig::default();
        config
            .profile_overrides
            .insert(1, TemporalProfile::Constant { value: 4.0 });
        let err = synthesize(&formula, 0.0, &Vec3::zeros(), &config).unwrap_err();
        assert!(
            matches!(err, SynthesisError::UnsoundProfile { .. }),
            "{err}"
        );

        // Starting outside an already-active envelope is infeasible.
        let mut config = BarrierConfig::default();
        config
            .profile_overrides
            .insert(0, TemporalProfile::Constant { value: 0.1 });
        let far = Vec3::new(30.0, 0.0, 0.0);
        let err = synthesize(&formula, 0.0, &far, &config).unwrap_err();
        assert!(
            matches!(err, SynthesisError::InfeasibleAtStart { .. }),
            "{err}"
        );
    }

    #[test]
    fn hold_goal_with_no_approach_time_is_a_schedule_conflict() {
        // Zero lead makes the hold atom activate at its own window start,
        // 20 m away from the goal: no envelope can both cover the payload
        // and respect the radius.
        let formula = parse_spec("G[5, 10](ball(r0, [20, 0, 0]) <= 1)").unwrap();
        let config = BarrierConfig {
            lead_g: Some(0.0),
            ..BarrierConfig::default()
        };
        let err = synthesize(&formula, 0.0, &Vec3::zeros(), &config).unwrap_err();
        assert!(
            matches!(err, SynthesisError::ScheduleConflict { .. }),
            "{err}"
        );
    }

    #[test]
    fn unsupported_shapes_are_reported() {
        for spec in [
            "ball(r0, [1, 1, 1]) <= 2",
            "U[0, 5](true, ball(r0, [1, 1, 1]) <= 2)",
            "G[0, 5](not ball(r0, [1, 1, 1]) <= 2)",
        ] {
            let formula = parse_spec(spec).unwrap();
            let err =
                synthesize(&formula, 0.0, &Vec3::zeros(), &BarrierConfig::default()).unwrap_err();
            assert!(
                matches!(err, SynthesisError::Unsupported(_)),
                "{spec}: {err}"
            );
        }
    }

    // --- derivative cross-checks against central differences --------------

    fn rand_composite(rng: &mut ChaCha8Rng, n: usize) -> CompositeBarrier {
        let atoms = (0..n)
            .map(|i| {
                let profile = match rng.random_range(0..3) {
                    0 => TemporalProfile::Constant {
                        value: rng.random_range(5.0..20.0),
                    },
                    1 => TemporalProfile::Linear {
                        start_value: rng.random_range(10.0..30.0),
                        decay_rate: rng.random_range(0.1..1.0),
                        t_start: 0.0,
                        // Far beyond the sampled times, so no kink in range.
                        t_freeze: 1e4,
                    },
                    _ => TemporalProfile::Exponential {
                        amplitude: rng.random_range(5.0..50.0),
                        rate: rng.random_range(0.05..0.5),
                        offset: rng.random_range(1.0..4.0),
                        t_start: 0.0,
                    },
                };
                if i % 4 == 3 {
                    let normal = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    AtomicBarrier {
                        geometry: AtomGeometry::Halfspace { normal },
                        profile,
                        t_activate: 0.0,
                        t_expire: 1e4,
                        label: String::new(),
                    }
                } else {
                    ball_atom(
                        [
                            rng.random_range(-5.0..5.0),
                            rng.random_range(-5.0..5.0),
                            rng.random_range(-5.0..5.0),
                        ],
                        profile,
                        (0.0, 1e4),
                    )
                }
            })
            .collect();
        CompositeBarrier::from_atoms(atoms)
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-6;
        for _ in 0..300 {
            let n = rng.random_range(3..6);
            let comp = rand_composite(&mut rng, n);
            let r = Vec3::new(
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
            );
            let t = rng.random_range(1.0..30.0);
            let eval = comp.eval(&r, t).unwrap();

            let b_at = |r: &Vec3, t: f64| comp.eval(r, t).unwrap().b;

            // First derivatives from values.
            let fd_dt = (b_at(&r, t + h) - b_at(&r, t - h)) / (2.0 * h);
            assert_relative_eq!(eval.db_dt, fd_dt, max_relative = 1e-5, epsilon = 1e-7);
            for ax in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[ax] += h;
                rm[ax] -= h;
                let fd = (b_at(&rp, t) - b_at(&rm, t)) / (2.0 * h);
                assert_relative_eq!(eval.grad_r[ax], fd, max_relative = 1e-5, epsilon = 1e-7);
            }

            // Second derivatives from analytic first derivatives.
            let ev = |r: &Vec3, t: f64| comp.eval(r, t).unwrap();
            let fd_d2t = (ev(&r, t + h).db_dt - ev(&r, t - h).db_dt) / (2.0 * h);
            assert_relative_eq!(eval.d2b_dt2, fd_d2t, max_relative = 1e-5, epsilon = 1e-6);
            let fd_gdot = (ev(&r, t + h).grad_r - ev(&r, t - h).grad_r) / (2.0 * h);
            for ax in 0..3 {
                assert_relative_eq!(
                    eval.d_grad_dt[ax],
                    fd_gdot[ax],
                    max_relative = 1e-5,
                    epsilon = 1e-6
                );
            }
            for ax in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[ax] += h;
                rm[ax] -= h;
                let col = (ev(&rp, t).grad_r - ev(&rm, t).grad_r) / (2.0 * h);
                for row in 0..3 {
                    assert_relative_eq!(
                        eval.hess_r[(row, ax)],
                        col[row],
                        max_relative = 1e-5,
                        epsilon = 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn softmin_stays_within_ln_n_of_the_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..7);
            let comp = rand_composite(&mut rng, n);
            let r = Vec3::new(
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
            );
            let t = rng.random_range(0.0..30.0);
            let eval = comp.eval(&r, t).unwrap();
            let min_b = comp
                .atoms()
                .iter()
                .map(|a| a.value(&r, t))
                .fold(f64::INFINITY, f64::min);
            assert!(eval.b <= min_b + 1e-12);
            assert!(eval.b >= min_b - (n as f64).ln() - 1e-12);
        }
    }
}
