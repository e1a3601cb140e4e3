//! Second-order barrier constraint assembly and the small convex QP that
//! picks the payload acceleration at each control step.
//!
//! With the relative degree of the blended barrier `B(r, t)` equal to two in
//! the linearized translational dynamics (`r̈ = u`), the controller enforces
//! the recursive condition with quadratic class-K functions:
//!
//! ```text
//! ψ1 = Ḃ + B²,        Ḃ = ∂B/∂t + ∇B·ṙ
//! ψ̇1 + ψ1² ≥ 0       with  B̈ = ∂²B/∂t² + 2 (∂∇B/∂t)·ṙ + ṙᵀ∇²B ṙ + ∇B·u
//! ```
//!
//! which rearranges into a single affine row `−∇B·u ≤ H`. The QP then
//! minimizes `uᵀQu` subject to that row and a symmetric box on each
//! acceleration component, with a heavily penalized shared slack as the
//! fallback when the hard problem is infeasible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{BarrierEval, CompositeBarrier};
use crate::rigid_body::Vec3;

/// Acceptance slack for primal/dual feasibility inside the solver.
const SOLVE_TOL: f64 = 1e-9;

/// A single half-space `normal · u ≤ bound` produced from one barrier
/// evaluation, plus the intermediate certificates the logs track.
#[derive(Debug, Clone)]
pub struct BarrierConstraint {
    pub normal: Vec3,
    pub bound: f64,
    /// `Ḃ` along the current velocity.
    pub bdot: f64,
    /// First recursive certificate `ψ1 = Ḃ + B|B|`; it must stay nonnegative.
    pub psi1: f64,
}

/// The quadratic comparison function, extended oddly so it keeps pulling the
/// certificate back once a discrete step lands below zero. On the nominal
/// domain (nonnegative argument) it is exactly the square.
fn kappa(s: f64) -> f64 {
    s * s.abs()
}

/// Assembles the acceleration constraint from a barrier evaluation and the
/// current payload velocity.
///
/// `assume_time_separable` drops the `2 (∂∇B/∂t)·ṙ` coupling term from the
/// expansion. For a single atom the barrier splits as `Γ(t) − s(r)` and the
/// term is identically zero, so both forms agree; the softmin blend of
/// several atoms reintroduces the coupling through its weights, and the exact
/// form (the default) keeps it.
pub fn barrier_constraint(
    eval: &BarrierEval,
    vel: &Vec3,
    assume_time_separable: bool,
) -> BarrierConstraint {
    let bdot = eval.db_dt + eval.grad_r.dot(vel);
    let psi1 = bdot + kappa(eval.b);
    let mixed = if assume_time_separable {
        0.0
    } else {
        2.0 * eval.d_grad_dt.dot(vel)
    };
    let bound = eval.d2b_dt2
        + mixed
        + (vel.transpose() * eval.hess_r * vel)[(0, 0)]
        + 2.0 * eval.b.abs() * bdot
        + kappa(psi1);
    BarrierConstraint {
        normal: -eval.grad_r,
        bound,
        bdot,
        psi1,
    }
}

/// Solver tunables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpConfig {
    /// Diagonal of the cost `uᵀQu`.
    pub q_diag: [f64; 3],
    /// Symmetric bound on each acceleration component; `None` removes it.
    pub u_max: Option<f64>,
    /// Weight on the squared shared slack in the relaxed fallback.
    pub relax_penalty: f64,
    /// See [`barrier_constraint`].
    pub assume_time_separable: bool,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig {
            q_diag: [1.0, 1.0, 1.0],
            u_max: Some(10.0),
            relax_penalty: 1e6,
            assume_time_separable: false,
        }
    }
}

impl QpConfig {
    pub fn validate(&self) -> Result<(), QpError> {
        if self.q_diag.iter().any(|&q| !(q.is_finite() && q > 0.0)) {
            return Err(QpError::BadConfig("q_diag entries must be positive".into()));
        }
        if let Some(m) = self.u_max {
            if !(m.is_finite() && m > 0.0) {
                return Err(QpError::BadConfig("u_max must be positive".into()));
            }
        }
        if !(self.relax_penalty.is_finite() && self.relax_penalty > 0.0) {
            return Err(QpError::BadConfig("relax_penalty must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("bad solver config: {0}")]
    BadConfig(String),
    #[error("constraint data contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    /// All constraints hold exactly.
    Optimal,
    /// Barrier rows hold only up to the reported slack.
    Relaxed,
    /// Even the relaxed problem failed (non-finite data or a solver
    /// breakdown); `u` is zero and should not be trusted.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: Vec3,
    pub status: QpStatus,
    /// Shared slack on the barrier rows (zero when optimal).
    pub slack: f64,
    /// Indices into the combined row list (barrier rows first, then the six
    /// box faces in `+x, −x, +y, −y, +z, −z` order).
    pub active_set: Vec<usize>,
    /// One multiplier per combined row.
    pub multipliers: Vec<f64>,
}

/// Minimizes `uᵀQu` subject to `normal_i · u ≤ bound_i` for every row plus
/// the configured box.
///
/// The solver enumerates candidate active sets: for every subset of at most
/// three rows it solves the equality-constrained KKT system and accepts the
/// first-order point iff it is primal feasible with nonnegative multipliers.
/// With three variables and the handful of rows a control step produces this
/// is exact and needs no iteration or warm start. When no subset certifies,
/// the same search runs on the relaxed four-variable problem
/// `min uᵀQu + ρ s²` with `normal_i · u − s ≤ bound_i`, `s ≥ 0`, and the box
/// kept hard.
pub fn solve_cqp(config: &QpConfig, rows: &[(Vec3, f64)]) -> Result<QpSolution, QpError> {
    config.validate()?;
    if rows
        .iter()
        .any(|(n, b)| !(n.iter().all(|v| v.is_finite()) && b.is_finite()))
    {
        return Err(QpError::NonFinite);
    }

    let mut all_rows: Vec<(DVector<f64>, f64)> = rows
        .iter()
        .map(|(n, b)| (DVector::from_column_slice(n.as_slice()), *b))
        .collect();
    if let Some(m) = config.u_max {
        for ax in 0..3 {
            for sign in [1.0, -1.0] {
                let mut n = DVector::zeros(3);
                n[ax] = sign;
                all_rows.push((n, m));
            }
        }
    }
    let q = DVector::from_column_slice(&config.q_diag);

    if let Some((u, multipliers, active_set)) = enumerate_solve(&q, &all_rows, 3) {
        return Ok(QpSolution {
            u: Vec3::new(u[0], u[1], u[2]),
            status: QpStatus::Optimal,
            slack: 0.0,
            active_set,
            multipliers,
        });
    }

    // Relaxed fallback: a fourth variable `s` loosens the barrier rows only.
    let mut relaxed_rows: Vec<(DVector<f64>, f64)> = Vec::with_capacity(all_rows.len() + 1);
    for (i, (n, b)) in all_rows.iter().enumerate() {
        let mut ext = DVector::zeros(4);
        ext.rows_mut(0, 3).copy_from(&n.rows(0, 3));
        if i < rows.len() {
            ext[3] = -1.0;
        }
        relaxed_rows.push((ext, *b));
    }
    let mut s_nonneg = DVector::zeros(4);
    s_nonneg[3] = -1.0;
    relaxed_rows.push((s_nonneg, 0.0));
    let q_ext = DVector::from_column_slice(&[
        config.q_diag[0],
        config.q_diag[1],
        config.q_diag[2],
        config.relax_penalty,
    ]);

    if let Some((x, multipliers, active_set)) = enumerate_solve(&q_ext, &relaxed_rows, 4) {
        return Ok(QpSolution {
            u: Vec3::new(x[0], x[1], x[2]),
            status: QpStatus::Relaxed,
            slack: x[3].max(0.0),
            // Report rows in the combined indexing; drop the s ≥ 0 helper.
            active_set: active_set
                .into_iter()
                .filter(|&i| i < all_rows.len())
                .collect(),
            multipliers: multipliers[..all_rows.len()].to_vec(),
        });
    }

    Ok(QpSolution {
        u: Vec3::zeros(),
        status: QpStatus::Infeasible,
        slack: f64::INFINITY,
        active_set: Vec::new(),
        multipliers: vec![0.0; all_rows.len()],
    })
}

/// Visits every strictly increasing index tuple of size `k` from `0..m`.
fn combinations(m: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(m, k, i + 1, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(k);
    rec(m, k, 0, &mut cur, f);
}

/// A certified candidate: minimizer, full-length multipliers, active set.
type Candidate = (DVector<f64>, Vec<f64>, Vec<usize>);

/// Exhaustive working-set search over subsets of at most `n` rows; returns
/// the certified minimizer with full-length multipliers and the active set.
fn enumerate_solve(
    q_diag: &DVector<f64>,
    rows: &[(DVector<f64>, f64)],
    n: usize,
) -> Option<Candidate> {
    let m = rows.len();
    let mut best: Option<(f64, Candidate)> = None;

    let consider = |subset: &[usize]| {
        let k = subset.len();
        // KKT system: [2Q Aᵀ; A 0] [u; λ] = [0; h].
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        for i in 0..n {
            kkt[(i, i)] = 2.0 * q_diag[i];
        }
        for (j, &row) in subset.iter().enumerate() {
            let (a, h) = &rows[row];
            for i in 0..n {
                kkt[(n + j, i)] = a[i];
                kkt[(i, n + j)] = a[i];
            }
            rhs[n + j] = *h;
        }
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let u = sol.rows(0, n).into_owned();
        // Dual feasibility on the working set.
        for j in 0..k {
            if sol[n + j] < -SOLVE_TOL {
                return None;
            }
        }
        // Primal feasibility everywhere.
        for (a, h) in rows {
            if a.dot(&u) > h + SOLVE_TOL * (1.0 + h.abs()) {
                return None;
            }
        }
        let obj: f64 = (0..n).map(|i| q_diag[i] * u[i] * u[i]).sum();
        let mut multipliers = vec![0.0; m];
        for (j, &row) in subset.iter().enumerate() {
            multipliers[row] = sol[n + j].max(0.0);
        }
        Some((obj, u, multipliers, subset.to_vec()))
    };

    for k in 0..=n.min(m) {
        combinations(m, k, &mut |subset| {
            if let Some((obj, u, mult, active)) = consider(subset) {
                let better = match &best {
                    None => true,
                    Some((best_obj, ..)) => obj < best_obj - 1e-15,
                };
                if better {
                    best = Some((obj, u, mult, active));
                }
            }
        });
    }
    best.map(|(_, u, mult, active)| (u, mult, active))
}

/// Maximum KKT residual of an `Optimal` solution: stationarity, primal and
/// dual feasibility, and complementary slackness over the combined rows.
pub fn kkt_residual(config: &QpConfig, rows: &[(Vec3, f64)], sol: &QpSolution) -> f64 {
    let mut all_rows: Vec<(Vec3, f64)> = rows.to_vec();
    if let Some(m) = config.u_max {
        for ax in 0..3 {
            for sign in [1.0, -1.0] {
                let mut n = Vec3::zeros();
                n[ax] = sign;
                all_rows.push((n, m));
            }
        }
    }
    let mut res: f64 = 0.0;
    // Stationarity: 2Qu + Σ λ_i a_i = 0.
    let mut grad = Vec3::new(
        2.0 * config.q_diag[0] * sol.u[0],
        2.0 * config.q_diag[1] * sol.u[1],
        2.0 * config.q_diag[2] * sol.u[2],
    );
    for ((a, _), &lambda) in all_rows.iter().zip(&sol.multipliers) {
        grad += lambda * a;
    }
    res = res.max(grad.abs().max());
    for ((a, h), &lambda) in all_rows.iter().zip(&sol.multipliers) {
        let violation = a.dot(&sol.u) - h;
        res = res.max(violation); // primal feasibility
        res = res.max(-lambda); // dual feasibility
        res = res.max((lambda * violation).abs()); // complementarity
    }
    res
}

// ---------------------------------------------------------------------------
// Offline re-verification of the enforced condition along a logged run.

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("no samples to check")]
    Empty,
    #[error("positions and velocities differ in length ({positions} vs {velocities})")]
    MismatchedLengths { positions: usize, velocities: usize },
    #[error("sample period must be positive")]
    BadPeriod,
    #[error("no barrier was active at any sample")]
    NeverActive,
}

#[derive(Debug, Clone)]
pub struct ConditionViolation {
    pub index: usize,
    pub time: f64,
    pub quantity: &'static str,
    pub value: f64,
}

/// Summary of [`condition_check`].
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// Samples at which at least one atom was active.
    pub active_samples: usize,
    pub min_b: f64,
    pub min_psi1: f64,
    /// Minimum of the discrete residual `(ψ1[k+1] − ψ1[k])/dt + ψ1[k]²`,
    /// taken over steps whose active atom set does not change.
    pub min_residual: f64,
    pub first_violation: Option<ConditionViolation>,
}

/// Recomputes the barrier value and first certificate from a logged position
/// and velocity history and checks the discrete version of the enforced
/// condition. `tol_b` flags barrier dips, `tol_residual` flags condition
/// residuals (the residual is a first-order difference, so it carries an
/// `O(dt)` discretization error and deserves a looser tolerance).
pub fn condition_check(
    positions: &[Vec3],
    velocities: &[Vec3],
    t0: f64,
    period: f64,
    barrier: &CompositeBarrier,
    tol_b: f64,
    tol_residual: f64,
) -> Result<ConditionReport, ConditionError> {
    if positions.is_empty() {
        return Err(ConditionError::Empty);
    }
    if positions.len() != velocities.len() {
        return Err(ConditionError::MismatchedLengths {
            positions: positions.len(),
            velocities: velocities.len(),
        });
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(ConditionError::BadPeriod);
    }

    let mut report = ConditionReport {
        active_samples: 0,
        min_b: f64::INFINITY,
        min_psi1: f64::INFINITY,
        min_residual: f64::INFINITY,
        first_violation: None,
    };
    let flag = |report: &mut ConditionReport,
                index: usize,
                time: f64,
                quantity: &'static str,
                value: f64| {
        if report.first_violation.is_none() {
            report.first_violation = Some(ConditionViolation {
                index,
                time,
                quantity,
                value,
            });
        }
    };

    let mut prev: Option<(usize, f64, Vec<usize>)> = None; // (index, psi1, active set)
    for (k, (r, v)) in positions.iter().zip(velocities).enumerate() {
        let t = t0 + k as f64 * period;
        let active = barrier.active_indices(t);
        let Some(eval) = barrier.eval(r, t) else {
            prev = None;
            continue;
        };
        report.active_samples += 1;
        let c = barrier_constraint(&eval, v, false);
        if eval.b < report.min_b {
            report.min_b = eval.b;
        }
        if c.psi1 < report.min_psi1 {
            report.min_psi1 = c.psi1;
        }
        if eval.b < -tol_b {
            flag(&mut report, k, t, "b", eval.b);
        }
        if let Some((pk, p_psi1, p_active)) = &prev {
            if *p_active == active {
                let residual = (c.psi1 - p_psi1) / period + kappa(*p_psi1);
                if residual < report.min_residual {
                    report.min_residual = residual;
                }
                if residual < -tol_residual {
                    flag(
                        &mut report,
                        *pk,
                        t0 + *pk as f64 * period,
                        "residual",
                        residual,
                    );
                }
            }
        }
        prev = Some((k, c.psi1, active));
    }
    if report.active_samples == 0 {
        return Err(ConditionError::NeverActive);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{AtomGeometry, AtomicBarrier, TemporalProfile};
    use crate::rigid_body::Mat3;
    use approx::assert_relative_eq;
    use rand::{RngExt as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn eval_from_parts(
        b: f64,
        db_dt: f64,
        d2b_dt2: f64,
        grad: Vec3,
        hess: Mat3,
        d_grad_dt: Vec3,
    ) -> BarrierEval {
        BarrierEval {
            b,
            db_dt,
            d2b_dt2,
            grad_r: grad,
            hess_r: hess,
            d_grad_dt,
            n_active: 1,
        }
    }

    #[test]
    fn constraint_assembly_hand_case() {
        let eval = eval_from_parts(
            2.0,
            -0.5,
            0.1,
            Vec3::new(1.0, 0.0, 0.0),
            Mat3::from_diagonal(&Vec3::new(0.3, 0.2, 0.0)),
            Vec3::new(0.2, 0.0, 0.0),
        );
        let vel = Vec3::new(1.0, 2.0, 0.0);
        let c = barrier_constraint(&eval, &vel, false);
        // Ḃ = −0.5 + 1 = 0.5, ψ1 = 0.5 + 4 = 4.5.
        assert_relative_eq!(c.bdot, 0.5);
        assert_relative_eq!(c.psi1, 4.5);
        assert_eq!(c.normal, Vec3::new(-1.0, 0.0, 0.0));
        // 0.1 + 2·0.2 + (0.3 + 0.8) + 2·2·0.5 + 4.5².
        assert_relative_eq!(c.bound, 0.1 + 0.4 + 1.1 + 2.0 + 20.25, max_relative = 1e-12);

        let dropped = barrier_constraint(&eval, &vel, true);
        assert_relative_eq!(c.bound - dropped.bound, 0.4, max_relative = 1e-12);
    }

    #[test]
    fn separable_evaluations_agree_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let grad = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let mut hess = Mat3::zeros();
            for i in 0..3 {
                for j in i..3 {
                    let v = rng.random_range(-1.0..1.0);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let eval = eval_from_parts(
                rng.random_range(-1.0..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                grad,
                hess,
                Vec3::zeros(), // time-separable: no mixed coupling
            );
            let vel = Vec3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            );
            let exact = barrier_constraint(&eval, &vel, false);
            let short = barrier_constraint(&eval, &vel, true);
            assert_relative_eq!(exact.bound, short.bound, max_relative = 1e-12);
        }
    }

    #[test]
    fn static_barrier_reduces_to_lie_derivative_form() {
        // A constant-envelope ball atom has no explicit time dependence, so
        // the bound must collapse to L_f²b + 2b L_fb + (L_fb)² + 2b² L_fb + b⁴
        // wherever the certificates are nonnegative (their nominal domain).
        let atom = AtomicBarrier {
            geometry: AtomGeometry::Ball {
                center: Vec3::new(1.0, -2.0, 0.5),
                epsilon: 1e-3,
            },
            profile: TemporalProfile::Constant { value: 8.0 },
            t_activate: 0.0,
            t_expire: 100.0,
            label: String::new(),
        };
        let comp = crate::barrier::CompositeBarrier::from_atoms(vec![atom]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let r = Vec3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let v = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let eval = comp.eval(&r, 1.0).unwrap();
            let c = barrier_constraint(&eval, &v, false);
            let lfb = eval.grad_r.dot(&v);
            let lf2b = (v.transpose() * eval.hess_r * v)[(0, 0)];
            let b = eval.b;
            let psi1 = lfb + kappa(b);
            let expected = lf2b + 2.0 * b.abs() * lfb + kappa(psi1);
            assert_relative_eq!(c.bound, expected, max_relative = 1e-10, epsilon = 1e-10);
            if b >= 0.0 && psi1 >= 0.0 {
                let classical = lf2b + 2.0 * b * lfb + lfb * lfb + 2.0 * b * b * lfb + b.powi(4);
                assert_relative_eq!(c.bound, classical, max_relative = 1e-10, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn unconstrained_and_single_row_closed_forms() {
        let config = QpConfig::default();
        // A satisfied row leaves the origin optimal.
        let sol = solve_cqp(&config, &[(Vec3::new(1.0, 0.0, 0.0), 3.0)]).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_eq!(sol.u, Vec3::zeros());
        assert!(sol.active_set.is_empty());

        // A violated row projects the origin onto its plane.
        let sol = solve_cqp(&config, &[(Vec3::new(1.0, 0.0, 0.0), -2.0)]).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.u.x, -2.0, max_relative = 1e-12);
        assert_relative_eq!(sol.u.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(sol.u.z, 0.0, epsilon = 1e-12);
        assert_eq!(sol.active_set, vec![0]);
    }

    /// Independent closed form for one violated row: `u = (h / pᵀQ⁻¹p) Q⁻¹p`.
    fn single_row_closed_form(q_diag: &[f64; 3], p: &Vec3, h: f64) -> Vec3 {
        if h >= 0.0 {
            return Vec3::zeros();
        }
        let qinv_p = Vec3::new(p.x / q_diag[0], p.y / q_diag[1], p.z / q_diag[2]);
        (h / p.dot(&qinv_p)) * qinv_p
    }

    #[test]
    fn enumeration_matches_the_single_row_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let q_diag = [
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
            ];
            let p = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            if p.norm() < 0.1 {
                continue;
            }
            let h = rng.random_range(-3.0..3.0);
            let config = QpConfig {
                q_diag,
                u_max: None,
                ..QpConfig::default()
            };
            let sol = solve_cqp(&config, &[(p, h)]).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal);
            let expected = single_row_closed_form(&q_diag, &p, h);
            assert_relative_eq!(sol.u.x, expected.x, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(sol.u.y, expected.y, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(sol.u.z, expected.z, max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    /// Projected coordinate descent on the dual — Hildreth's procedure —
    /// used only as an oracle: minimize `¼ λᵀMλ + λᵀh` over `λ ≥ 0` with
    /// `M = AQ⁻¹Aᵀ`, each coordinate solved exactly per sweep, then recover
    /// `u = −½ Q⁻¹Aᵀλ`.
    fn dual_pg_solve(q_diag: &[f64; 3], rows: &[(Vec3, f64)], max_sweeps: usize) -> Vec3 {
        let m = rows.len();
        let mut gram: DMatrix<f64> = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let (pi, _) = &rows[i];
                let (pj, _) = &rows[j];
                gram[(i, j)] =
                    pi.x * pj.x / q_diag[0] + pi.y * pj.y / q_diag[1] + pi.z * pj.z / q_diag[2];
            }
        }
        let mut lambda: DVector<f64> = DVector::zeros(m);
        for _ in 0..max_sweeps {
            let mut change: f64 = 0.0;
            for i in 0..m {
                let mut grad_i = rows[i].1;
                for j in 0..m {
                    grad_i += 0.5 * gram[(i, j)] * lambda[j];
                }
                let next = (lambda[i] - grad_i / (0.5 * gram[(i, i)])).max(0.0);
                change = change.max((next - lambda[i]).abs());
                lambda[i] = next;
            }
            if change < 1e-14 {
                break;
            }
        }
        let mut u = Vec3::zeros();
        for (i, (p, _)) in rows.iter().enumerate() {
            u -= 0.5 * lambda[i] * Vec3::new(p.x / q_diag[0], p.y / q_diag[1], p.z / q_diag[2]);
        }
        u
    }

    fn random_feasible_instance(rng: &mut ChaCha8Rng) -> (QpConfig, Vec<(Vec3, f64)>) {
        let q_diag = [
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
        ];
        let u_max = 10.0;
        let witness = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        let m = rng.random_range(1..6);
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            let p = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            if p.norm() < 0.1 {
                continue;
            }
            // The witness keeps the instance feasible; slack 0 puts some
            // constraints exactly on the witness.
            let h = p.dot(&witness) + rng.random_range(0.0..4.0);
            rows.push((p, h));
        }
        if rows.is_empty() {
            rows.push((Vec3::new(1.0, 0.0, 0.0), 1.0));
        }
        let config = QpConfig {
            q_diag,
            u_max: Some(u_max),
            ..QpConfig::default()
        };
        (config, rows)
    }

    #[test]
    fn matches_dual_projected_gradient_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let (config, rows) = random_feasible_instance(&mut rng);
            let sol = solve_cqp(&config, &rows).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal);
            assert!(kkt_residual(&config, &rows, &sol) < 1e-8);

            // The witness sits inside the box, so the box rows stay slack and
            // the oracle can ignore them.
            let oracle = dual_pg_solve(&config.q_diag, &rows, 8000);
            assert_relative_eq!(sol.u.x, oracle.x, max_relative = 1e-6, epsilon = 1e-6);
            assert_relative_eq!(sol.u.y, oracle.y, max_relative = 1e-6, epsilon = 1e-6);
            assert_relative_eq!(sol.u.z, oracle.z, max_relative = 1e-6, epsilon = 1e-6);
        }
    }

    #[test]
    fn conflicting_rows_relax_with_unit_slack() {
        // x ≤ −1 and x ≥ 1 cannot both hold; the shared slack settles at 1
        // with the payload acceleration balanced at zero.
        let config = QpConfig::default();
        let rows = vec![
            (Vec3::new(1.0, 0.0, 0.0), -1.0),
            (Vec3::new(-1.0, 0.0, 0.0), -1.0),
        ];
        let sol = solve_cqp(&config, &rows).unwrap();
        assert_eq!(sol.status, QpStatus::Relaxed);
        assert_relative_eq!(sol.slack, 1.0, max_relative = 1e-9);
        assert!(sol.u.norm() < 1e-9, "u = {}", sol.u);
    }

    #[test]
    fn box_stays_hard_under_relaxation() {
        // The row wants u_x ≤ −20 but the box caps components at 10.
        let config = QpConfig::default();
        let rows = vec![(Vec3::new(1.0, 0.0, 0.0), -20.0)];
        let sol = solve_cqp(&config, &rows).unwrap();
        assert_eq!(sol.status, QpStatus::Relaxed);
        assert_relative_eq!(sol.u.x, -10.0, max_relative = 1e-9);
        assert_relative_eq!(sol.slack, 10.0, max_relative = 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let config = QpConfig::default();
        assert!(matches!(
            solve_cqp(&config, &[(Vec3::new(f64::NAN, 0.0, 0.0), 1.0)]),
            Err(QpError::NonFinite)
        ));
        let bad = QpConfig {
            q_diag: [0.0, 1.0, 1.0],
            ..QpConfig::default()
        };
        assert!(matches!(solve_cqp(&bad, &[]), Err(QpError::BadConfig(_))));
    }

    #[test]
    fn condition_check_follows_a_clean_and_a_violating_run() {
        // One ball atom with a generous constant envelope; hover at the
        // center satisfies the condition trivially.
        let atom = AtomicBarrier {
            geometry: AtomGeometry::Ball {
                center: Vec3::zeros(),
                epsilon: 1e-3,
            },
            profile: TemporalProfile::Constant { value: 5.0 },
            t_activate: 0.0,
            t_expire: 10.0,
            label: String::new(),
        };
        let barrier = crate::barrier::CompositeBarrier::from_atoms(vec![atom]);
        let n = 101;
        let positions: Vec<Vec3> = (0..n).map(|_| Vec3::new(1.0, 0.0, 0.0)).collect();
        let velocities = vec![Vec3::zeros(); n];
        let report =
            condition_check(&positions, &velocities, 0.0, 0.02, &barrier, 1e-9, 1e-3).unwrap();
        assert!(report.first_violation.is_none());
        assert_relative_eq!(report.min_b, 4.0, max_relative = 1e-6);
        assert!(report.min_psi1 > 0.0);

        // Walking straight out of the envelope drives b negative.
        let escape: Vec<Vec3> = (0..n)
            .map(|k| Vec3::new(0.1 * k as f64, 0.0, 0.0))
            .collect();
        let vels = vec![Vec3::new(5.0, 0.0, 0.0); n];
        let report = condition_check(&escape, &vels, 0.0, 0.02, &barrier, 1e-9, 1e9).unwrap();
        let violation = report.first_violation.expect("escape must be flagged");
        assert_eq!(violation.quantity, "b");
        assert!(report.min_b < -4.9);

        assert!(matches!(
            condition_check(&[], &[], 0.0, 0.02, &barrier, 1e-9, 1e-3),
            Err(ConditionError::Empty)
        ));
    }
}
