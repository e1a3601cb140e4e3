//! Rigid multi-body model of a payload carried by N UAVs through stiff vertical links.
//!
//! The payload and every UAV are rigid bodies; each UAV is attached to the payload
//! at a fixed offset through a massless rigid rod, so the whole assembly translates
//! and rotates as one body driven by the UAV lift forces. The world frame is NED
//! (+z points down, gravity acts along +z); payload translational velocity and all
//! angular velocities are expressed in their own body frames.
//!
//! The translational/rotational payload accelerations come from a 6x6 linear system
//! whose inverse depends only on the (constant) parameters, so it is factored once
//! in [`Model::new`] and reused every derivative evaluation.

use nalgebra::{Matrix3, Matrix6, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Standard gravitational acceleration, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("system must have at least one UAV")]
    NoUavs,
    #[error("non-physical parameter: {0}")]
    BadParameter(String),
    #[error("generalized mass matrix is singular for these parameters")]
    SingularMassMatrix,
    #[error("UAV index {index} out of range (system has {count})")]
    UavIndex { index: usize, count: usize },
    #[error("control input provides {got} UAV entries, system has {expected}")]
    InputLength { got: usize, expected: usize },
    #[error("negative thrust command {0}")]
    NegativeThrust(f64),
    #[error("integration diverged (non-finite state near t = {0})")]
    Diverged(f64),
    #[error("rotation matrix is not orthonormal (error {0:.3e})")]
    NotARotation(f64),
}

// ---------------------------------------------------------------------------
// Basic math helpers
// ---------------------------------------------------------------------------

/// Skew-symmetric matrix of `v`, so that `hat(v) * w == v.cross(&w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Rotation matrix (body -> world) kept orthonormal by construction.
///
/// Integration adds derivative increments to the raw matrix, so intermediate
/// values drift slightly off the manifold; [`RotationMatrix::orthonormalized`]
/// projects back via the polar factor after every full step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Mat3::identity())
    }

    /// Wraps a matrix that is already known to be a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        RotationMatrix(m)
    }

    /// Wraps a matrix after checking orthonormality and a positive determinant.
    pub fn try_new(m: Mat3, tol: f64) -> Result<Self, ModelError> {
        let r = RotationMatrix(m);
        let err = r.orthonormality_error();
        if !err.is_finite() || err > tol || m.determinant() < 0.0 {
            return Err(ModelError::NotARotation(err));
        }
        Ok(r)
    }

    /// Nearest rotation matrix (polar factor) of an arbitrary matrix.
    pub fn orthonormalized(m: &Mat3) -> Result<Self, ModelError> {
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(ModelError::NotARotation(f64::NAN)),
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // Flip the least-significant singular direction to stay in SO(3).
            let mut u_fixed = u;
            u_fixed.column_mut(2).neg_mut();
            r = u_fixed * v_t;
        }
        if !r.iter().all(|x| x.is_finite()) {
            return Err(ModelError::NotARotation(f64::NAN));
        }
        Ok(RotationMatrix(r))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Mat3 {
        self.0.transpose()
    }

    /// Frobenius norm of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

impl std::ops::Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.0 * v
    }
}

/// Roll/pitch/yaw extracted from a rotation matrix (Z-Y-X convention,
/// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`).
#[derive(Clone, Copy, Debug)]
pub struct EulerAngles {
    /// `[roll, pitch, yaw]` in radians.
    pub angles: Vec3,
    /// Set when pitch is within ~1e-5 rad of +/-pi/2, where roll and yaw
    /// become indistinguishable and only their sum/difference is recovered.
    pub gimbal_lock: bool,
}

/// Extracts Z-Y-X Euler angles from a rotation matrix.
pub fn euler_zyx(rot: &RotationMatrix) -> EulerAngles {
    let m = rot.matrix();
    let sin_pitch = -m[(2, 0)];
    let gimbal_lock = sin_pitch.abs() > 1.0 - 1e-10;
    if gimbal_lock {
        // Pitch at +/-pi/2: split the singular direction as pure roll.
        let pitch = if sin_pitch > 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            -std::f64::consts::FRAC_PI_2
        };
        let roll = f64::atan2(-m[(1, 2)], m[(1, 1)]);
        EulerAngles {
            angles: Vec3::new(roll, pitch, 0.0),
            gimbal_lock: true,
        }
    } else {
        EulerAngles {
            angles: Vec3::new(
                f64::atan2(m[(2, 1)], m[(2, 2)]),
                sin_pitch.clamp(-1.0, 1.0).asin(),
                f64::atan2(m[(1, 0)], m[(0, 0)]),
            ),
            gimbal_lock: false,
        }
    }
}

/// Builds a rotation matrix from `[roll, pitch, yaw]` (Z-Y-X convention).
pub fn rotation_from_euler(angles: &Vec3) -> RotationMatrix {
    let (sr, cr) = angles.x.sin_cos();
    let (sp, cp) = angles.y.sin_cos();
    let (sy, cy) = angles.z.sin_cos();
    RotationMatrix(Mat3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    ))
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Mass and body-frame inertia of one rigid body.
#[derive(Clone, Debug)]
pub struct BodyParams {
    pub mass: f64,
    pub inertia: Mat3,
}

/// One UAV: its rigid-body parameters plus where its rod attaches on the payload.
#[derive(Clone, Debug)]
pub struct UavParams {
    pub mass: f64,
    pub inertia: Mat3,
    /// Rod attachment point on the payload, payload frame.
    pub attach_offset: Vec3,
    /// Rod length; the UAV sits this far along payload -z from the attachment.
    pub link_length: f64,
}

/// Full parameter set for the payload + N UAV assembly.
#[derive(Clone, Debug)]
pub struct SystemParams {
    pub payload: BodyParams,
    pub uavs: Vec<UavParams>,
    /// Gravitational acceleration, m/s^2 (acts along world +z, i.e. down).
    pub gravity: f64,
}

impl Default for SystemParams {
    /// Reference desk-scale configuration: a 1 kg payload carried by four
    /// 0.68 kg quadrotors on 3.2 m rods, attached at the payload corners.
    fn default() -> Self {
        let uav = |x: f64, y: f64| UavParams {
            mass: 0.68,
            inertia: Mat3::from_diagonal(&Vec3::new(0.029, 0.029, 0.055)),
            attach_offset: Vec3::new(x, y, 0.125),
            link_length: 3.2,
        };
        SystemParams {
            payload: BodyParams {
                mass: 1.0,
                inertia: Mat3::from_diagonal(&Vec3::new(0.556, 0.556, 0.556)),
            },
            uavs: vec![
                uav(0.25, 0.25),
                uav(0.25, -0.25),
                uav(-0.25, -0.25),
                uav(-0.25, 0.25),
            ],
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl SystemParams {
    pub fn uav_count(&self) -> usize {
        self.uavs.len()
    }

    /// Combined mass of payload and all UAVs.
    pub fn total_mass(&self) -> f64 {
        self.payload.mass + self.uavs.iter().map(|u| u.mass).sum::<f64>()
    }

    /// First mass moment of the UAVs about the payload origin: sum of m_i * rho_i.
    pub fn uav_mass_moment(&self) -> Vec3 {
        self.uavs
            .iter()
            .fold(Vec3::zeros(), |acc, u| acc + u.mass * u.attach_offset)
    }

    /// Inertia of the locked assembly about the payload origin:
    /// payload inertia minus sum of m_i * hat(rho_i)^2.
    pub fn locked_inertia(&self) -> Mat3 {
        self.uavs.iter().fold(self.payload.inertia, |acc, u| {
            let h = hat(&u.attach_offset);
            acc - u.mass * h * h
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.uavs.is_empty() {
            return Err(ModelError::NoUavs);
        }
        let check_body = |name: &str, mass: f64, inertia: &Mat3| -> Result<(), ModelError> {
            if !(mass.is_finite() && mass > 0.0) {
                return Err(ModelError::BadParameter(format!("{name} mass {mass}")));
            }
            if inertia.iter().any(|x| !x.is_finite()) || inertia.cholesky().is_none() {
                return Err(ModelError::BadParameter(format!(
                    "{name} inertia must be symmetric positive definite"
                )));
            }
            Ok(())
        };
        check_body("payload", self.payload.mass, &self.payload.inertia)?;
        for (i, u) in self.uavs.iter().enumerate() {
            check_body(&format!("UAV {i}"), u.mass, &u.inertia)?;
            if !u.attach_offset.iter().all(|x| x.is_finite()) || !u.link_length.is_finite() {
                return Err(ModelError::BadParameter(format!("UAV {i} geometry")));
            }
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(ModelError::BadParameter(format!(
                "gravity {}",
                self.gravity
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// State and input
// ---------------------------------------------------------------------------

/// Attitude and body-frame angular velocity of one UAV.
#[derive(Clone, Copy, Debug)]
pub struct UavState {
    pub rot: RotationMatrix,
    pub omega: Vec3,
}

/// Complete simulation state.
#[derive(Clone, Debug)]
pub struct SystemState {
    pub time: f64,
    /// Payload position, world frame (NED).
    pub pos: Vec3,
    /// Payload translational velocity, payload frame.
    pub vel_body: Vec3,
    /// Payload attitude (payload frame -> world).
    pub rot: RotationMatrix,
    /// Payload angular velocity, payload frame.
    pub omega: Vec3,
    pub uavs: Vec<UavState>,
}

impl SystemState {
    /// Everything at rest at the world origin with identity attitudes.
    pub fn at_rest(uav_count: usize) -> Self {
        SystemState {
            time: 0.0,
            pos: Vec3::zeros(),
            vel_body: Vec3::zeros(),
            rot: RotationMatrix::identity(),
            omega: Vec3::zeros(),
            uavs: vec![
                UavState {
                    rot: RotationMatrix::identity(),
                    omega: Vec3::zeros(),
                };
                uav_count
            ],
        }
    }

    /// Payload velocity in the world frame.
    pub fn world_velocity(&self) -> Vec3 {
        self.rot * self.vel_body
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().all(|x| x.is_finite())
            && self.vel_body.iter().all(|x| x.is_finite())
            && self.rot.matrix().iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.uavs.iter().all(|u| {
                u.rot.matrix().iter().all(|x| x.is_finite())
                    && u.omega.iter().all(|x| x.is_finite())
            })
    }
}

/// Thrust magnitude plus body torque for one UAV. Thrust is non-negative and
/// produces the world-frame force `-thrust * R_i * e_z` (lift pushes against
/// the UAV's body down-axis).
#[derive(Clone, Copy, Debug)]
pub struct UavCommand {
    pub thrust: f64,
    pub torque: Vec3,
}

/// Zero-order-hold actuation applied over an integration step.
#[derive(Clone, Debug)]
pub enum ControlInput {
    /// Physical actuation: per-UAV thrust magnitude and body torque.
    ThrustAttitude(Vec<UavCommand>),
    /// Idealized actuation: per-UAV world-frame forces applied directly,
    /// bypassing the attitude dynamics (their torques are zero).
    WorldForces(Vec<Vec3>),
}

impl ControlInput {
    fn len(&self) -> usize {
        match self {
            ControlInput::ThrustAttitude(c) => c.len(),
            ControlInput::WorldForces(f) => f.len(),
        }
    }
}

/// Time derivative of [`SystemState`]. Attitude derivatives are raw matrices
/// (`R * hat(omega)`), tangent to the rotation manifold.
#[derive(Clone, Debug)]
pub struct StateDeriv {
    pub pos_dot: Vec3,
    pub vel_body_dot: Vec3,
    pub rot_dot: Mat3,
    pub omega_dot: Vec3,
    pub uavs: Vec<UavDeriv>,
}

#[derive(Clone, Copy, Debug)]
pub struct UavDeriv {
    pub rot_dot: Mat3,
    pub omega_dot: Vec3,
}

// ---------------------------------------------------------------------------
// Mass matrix
// ---------------------------------------------------------------------------

/// Inverse of the 6x6 generalized mass matrix, stored as 3x3 blocks. The
/// payload accelerations are `vel_body_dot = p11*f + p12*m` and
/// `omega_dot = p21*f + p22*m` for generalized force `(f, m)`.
#[derive(Clone, Copy, Debug)]
pub struct MassMatrixInverse {
    pub p11: Mat3,
    pub p12: Mat3,
    pub p21: Mat3,
    pub p22: Mat3,
}

impl MassMatrixInverse {
    /// Applies the inverse to a stacked generalized force.
    pub fn apply(&self, force: &Vec3, moment: &Vec3) -> (Vec3, Vec3) {
        (
            self.p11 * force + self.p12 * moment,
            self.p21 * force + self.p22 * moment,
        )
    }
}

/// Factors the generalized mass matrix
/// `[[m_T I, -hat(s)], [hat(s), J_locked]]` (with `s` the UAV mass moment)
/// and returns its inverse in block form.
pub fn assemble_zeta(params: &SystemParams) -> Result<MassMatrixInverse, ModelError> {
    params.validate()?;
    let m_t = params.total_mass();
    let s_hat = hat(&params.uav_mass_moment());
    let j_locked = params.locked_inertia();

    let mut mass = Matrix6::<f64>::zeros();
    mass.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(m_t * Mat3::identity()));
    mass.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-s_hat));
    mass.fixed_view_mut::<3, 3>(3, 0).copy_from(&s_hat);
    mass.fixed_view_mut::<3, 3>(3, 3).copy_from(&j_locked);

    // The matrix is symmetric (the off-diagonal skew blocks are transposes of
    // each other) and positive definite for physical parameters.
    let inv = mass
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(ModelError::SingularMassMatrix)?;
    Ok(MassMatrixInverse {
        p11: inv.fixed_view::<3, 3>(0, 0).into(),
        p12: inv.fixed_view::<3, 3>(0, 3).into(),
        p21: inv.fixed_view::<3, 3>(3, 0).into(),
        p22: inv.fixed_view::<3, 3>(3, 3).into(),
    })
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Validated parameters plus everything derived from them that the dynamics
/// reuse each step: the factored mass matrix, mass sums, and UAV inertia
/// inverses.
#[derive(Clone, Debug)]
pub struct Model {
    params: SystemParams,
    zeta: MassMatrixInverse,
    total_mass: f64,
    uav_mass_moment: Vec3,
    locked_inertia: Mat3,
    uav_inertia_inv: Vec<Mat3>,
}

impl Model {
    pub fn new(params: SystemParams) -> Result<Self, ModelError> {
        let zeta = assemble_zeta(&params)?;
        let uav_inertia_inv = params
            .uavs
            .iter()
            .map(|u| {
                u.inertia
                    .try_inverse()
                    .ok_or_else(|| ModelError::BadParameter("UAV inertia singular".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model {
            total_mass: params.total_mass(),
            uav_mass_moment: params.uav_mass_moment(),
            locked_inertia: params.locked_inertia(),
            uav_inertia_inv,
            zeta,
            params,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn zeta(&self) -> &MassMatrixInverse {
        &self.zeta
    }

    pub fn uav_count(&self) -> usize {
        self.params.uavs.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn uav_mass_moment(&self) -> Vec3 {
        self.uav_mass_moment
    }

    pub fn locked_inertia(&self) -> Mat3 {
        self.locked_inertia
    }

    /// World-frame forces the input applies to each UAV body.
    pub fn world_forces(
        &self,
        state: &SystemState,
        input: &ControlInput,
    ) -> Result<Vec<Vec3>, ModelError> {
        if input.len() != self.uav_count() {
            return Err(ModelError::InputLength {
                got: input.len(),
                expected: self.uav_count(),
            });
        }
        match input {
            ControlInput::WorldForces(f) => Ok(f.clone()),
            ControlInput::ThrustAttitude(cmds) => cmds
                .iter()
                .zip(&state.uavs)
                .map(|(cmd, uav)| {
                    if cmd.thrust < 0.0 {
                        return Err(ModelError::NegativeThrust(cmd.thrust));
                    }
                    Ok(-cmd.thrust * (uav.rot * Vec3::z()))
                })
                .collect(),
        }
    }
}

/// Full state derivative under a zero-order-hold input.
pub fn dynamics_deriv(
    model: &Model,
    state: &SystemState,
    input: &ControlInput,
) -> Result<StateDeriv, ModelError> {
    if state.uavs.len() != model.uav_count() {
        return Err(ModelError::InputLength {
            got: state.uavs.len(),
            expected: model.uav_count(),
        });
    }
    let forces = model.world_forces(state, input)?;
    let g = model.params.gravity;
    let rot_t = state.rot.transpose();
    let gravity_body = rot_t * (g * Vec3::z()); // R^T * g e_z
    let w = state.omega;
    let w_hat = hat(&w);
    let s = model.uav_mass_moment;
    let j_locked = model.locked_inertia;

    // Generalized force on the locked assembly, payload frame.
    let mut force = -model.total_mass * (w_hat * state.vel_body) - w_hat * (w_hat * s)
        + model.total_mass * gravity_body;
    let mut moment =
        -w.cross(&(j_locked * w)) - s.cross(&(w_hat * state.vel_body)) + hat(&s) * gravity_body;
    for (uav, f_world) in model.params.uavs.iter().zip(&forces) {
        let f_body = rot_t * f_world;
        force += f_body;
        moment += uav.attach_offset.cross(&f_body);
    }

    let (vel_body_dot, omega_dot) = model.zeta.apply(&force, &moment);

    let torques: Vec<Vec3> = match input {
        ControlInput::ThrustAttitude(cmds) => cmds.iter().map(|c| c.torque).collect(),
        ControlInput::WorldForces(_) => vec![Vec3::zeros(); model.uav_count()],
    };
    let uavs = state
        .uavs
        .iter()
        .zip(&torques)
        .zip(&model.uav_inertia_inv)
        .zip(&model.params.uavs)
        .map(|(((uav, tau), j_inv), p)| UavDeriv {
            rot_dot: uav.rot.matrix() * hat(&uav.omega),
            omega_dot: j_inv * (tau - uav.omega.cross(&(p.inertia * uav.omega))),
        })
        .collect();

    Ok(StateDeriv {
        pos_dot: state.rot * state.vel_body,
        vel_body_dot,
        rot_dot: state.rot.matrix() * w_hat,
        omega_dot,
        uavs,
    })
}

/// `state + h * deriv`, leaving rotations unnormalized (used inside RK4 stages).
fn add_scaled(state: &SystemState, deriv: &StateDeriv, h: f64) -> SystemState {
    SystemState {
        time: state.time + h,
        pos: state.pos + h * deriv.pos_dot,
        vel_body: state.vel_body + h * deriv.vel_body_dot,
        rot: RotationMatrix::from_matrix_unchecked(state.rot.matrix() + h * deriv.rot_dot),
        omega: state.omega + h * deriv.omega_dot,
        uavs: state
            .uavs
            .iter()
            .zip(&deriv.uavs)
            .map(|(u, d)| UavState {
                rot: RotationMatrix::from_matrix_unchecked(u.rot.matrix() + h * d.rot_dot),
                omega: u.omega + h * d.omega_dot,
            })
            .collect(),
    }
}

/// One fixed-step RK4 step under a zero-order-hold input. All rotation
/// matrices are re-orthonormalized (polar projection) after the combine, so
/// the returned state satisfies `||R^T R - I|| <~ 1e-12`.
pub fn integrate_step(
    model: &Model,
    state: &SystemState,
    input: &ControlInput,
    dt: f64,
) -> Result<SystemState, ModelError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ModelError::BadParameter(format!("step size {dt}")));
    }
    let k1 = dynamics_deriv(model, state, input)?;
    let k2 = dynamics_deriv(model, &add_scaled(state, &k1, dt / 2.0), input)?;
    let k3 = dynamics_deriv(model, &add_scaled(state, &k2, dt / 2.0), input)?;
    let k4 = dynamics_deriv(model, &add_scaled(state, &k3, dt), input)?;

    let combine3 =
        |a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3| (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d);
    let combine_m =
        |a: &Mat3, b: &Mat3, c: &Mat3, d: &Mat3| (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d);

    let mut next = SystemState {
        time: state.time + dt,
        pos: state.pos + combine3(&k1.pos_dot, &k2.pos_dot, &k3.pos_dot, &k4.pos_dot),
        vel_body: state.vel_body
            + combine3(
                &k1.vel_body_dot,
                &k2.vel_body_dot,
                &k3.vel_body_dot,
                &k4.vel_body_dot,
            ),
        rot: RotationMatrix::orthonormalized(
            &(state.rot.matrix() + combine_m(&k1.rot_dot, &k2.rot_dot, &k3.rot_dot, &k4.rot_dot)),
        )?,
        omega: state.omega + combine3(&k1.omega_dot, &k2.omega_dot, &k3.omega_dot, &k4.omega_dot),
        uavs: Vec::with_capacity(state.uavs.len()),
    };
    for (i, u) in state.uavs.iter().enumerate() {
        next.uavs.push(UavState {
            rot: RotationMatrix::orthonormalized(
                &(u.rot.matrix()
                    + combine_m(
                        &k1.uavs[i].rot_dot,
                        &k2.uavs[i].rot_dot,
                        &k3.uavs[i].rot_dot,
                        &k4.uavs[i].rot_dot,
                    )),
            )?,
            omega: u.omega
                + combine3(
                    &k1.uavs[i].omega_dot,
                    &k2.uavs[i].omega_dot,
                    &k3.uavs[i].omega_dot,
                    &k4.uavs[i].omega_dot,
                ),
        });
    }
    if !next.is_finite() {
        return Err(ModelError::Diverged(state.time));
    }
    Ok(next)
}

/// World-frame position of UAV `i`: the attachment point displaced up the rod,
/// `pos + R * (rho_i - l_i e_z)`.
pub fn uav_position(
    state: &SystemState,
    params: &SystemParams,
    i: usize,
) -> Result<Vec3, ModelError> {
    let uav = params.uavs.get(i).ok_or(ModelError::UavIndex {
        index: i,
        count: params.uavs.len(),
    })?;
    Ok(state.pos + state.rot * (uav.attach_offset - uav.link_length * Vec3::z()))
}

// ---------------------------------------------------------------------------
