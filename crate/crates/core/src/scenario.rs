//! Scenario configuration: everything a closed-loop run needs, loadable from
//! JSON, with built-in presets.
//!
//! All world-facing quantities in a scenario — initial position, mission
//! predicates, attachment offsets — use the *user frame*. With the default
//! `z_up = true` that frame has z pointing up; the plant's internal
//! down-positive convention never leaks into configs, logs, or specs.
//! Setting `z_up = false` passes coordinates through unchanged for users who
//! prefer the internal convention.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{BarrierConfig, TemporalProfile};
use crate::linearize::AttitudeGains;
use crate::qp::QpConfig;
use crate::rigid_body::{
    BodyParams, Mat3, RotationMatrix, SystemParams, SystemState, UavParams, UavState, Vec3,
};
use crate::stl::{parse_spec, Formula, FragmentError, ParseError, TimeInterval};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("spec: {0}")]
    Parse(#[from] ParseError),
    #[error("spec: {0}")]
    Fragment(#[from] FragmentError),
    #[error("scenario has neither a `spec` formula nor a `mission` table")]
    NoMission,
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Maps world vectors between the user frame and the plant frame. The two
/// differ only by the sign of z, so the map is its own inverse.
#[derive(Debug, Clone, Copy)]
pub struct FrameConvention {
    pub z_up: bool,
}

impl FrameConvention {
    pub fn convert(&self, v: &Vec3) -> Vec3 {
        if self.z_up {
            Vec3::new(v.x, v.y, -v.z)
        } else {
            *v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationMode {
    /// Rod forces applied directly in the world frame; the attitude loop is
    /// bypassed and the commanded acceleration is realized exactly.
    Ideal,
    /// Each UAV gets a thrust magnitude and tracks its tilt with the
    /// geometric attitude loop at the integrator rate.
    Full,
}

/// Physical parameters, user frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub payload_mass: f64,
    /// Diagonal of the payload inertia.
    pub payload_inertia: [f64; 3],
    pub uav_mass: f64,
    pub uav_inertia: [f64; 3],
    /// Rod attachment points on the payload, one per UAV.
    pub attach_offsets: Vec<[f64; 3]>,
    pub link_length: f64,
    pub gravity: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            payload_mass: 1.0,
            payload_inertia: [0.556; 3],
            uav_mass: 0.68,
            uav_inertia: [0.029, 0.029, 0.055],
            attach_offsets: vec![
                [0.25, 0.25, -0.125],
                [0.25, -0.25, -0.125],
                [-0.25, 0.25, -0.125],
                [-0.25, -0.25, -0.125],
            ],
            link_length: 3.2,
            gravity: 9.81,
        }
    }
}

impl ParamsConfig {
    pub fn to_system_params(&self, frame: FrameConvention) -> SystemParams {
        SystemParams {
            payload: BodyParams {
                mass: self.payload_mass,
                inertia: Mat3::from_diagonal(&Vec3::from_column_slice(&self.payload_inertia)),
            },
            uavs: self
                .attach_offsets
                .iter()
                .map(|o| UavParams {
                    mass: self.uav_mass,
                    inertia: Mat3::from_diagonal(&Vec3::from_column_slice(&self.uav_inertia)),
                    attach_offset: frame.convert(&Vec3::from_column_slice(o)),
                    link_length: self.link_length,
                })
                .collect(),
            gravity: self.gravity,
        }
    }
}

/// Starting condition, user frame. Attitudes start level and everything
/// starts rotation-free.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            position: [0.0; 3],
            velocity: [0.0; 3],
        }
    }
}

/// Mission-table sugar: each waypoint expands to a reach goal and an
/// optional hold goal on the same ball, and `safe_box` to a hold goal on a
/// centered box over the whole run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub safe_box: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub center: [f64; 3],
    pub radius: f64,
    /// Reach window `[a, b]`.
    pub reach: [f64; 2],
    /// Hold window `[a, b]`, if the payload must also stay.
    #[serde(default)]
    pub hold: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Mission formula in the surface syntax; conjoined with `mission` when
    /// both are present.
    pub spec: Option<String>,
    pub mission: Option<Mission>,
    /// Run length in seconds.
    pub duration: f64,
    pub control_period: f64,
    pub integrator_dt: f64,
    pub actuation: ActuationMode,
    pub z_up: bool,
    pub params: ParamsConfig,
    pub barrier: BarrierConfig,
    pub qp: QpConfig,
    pub gains: AttitudeGains,
    pub initial: InitialConfig,
    /// Reserved for stochastic extensions; the closed loop is deterministic.
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: String::new(),
            spec: None,
            mission: None,
            duration: 0.0,
            control_period: 0.02,
            integrator_dt: 0.002,
            actuation: ActuationMode::Ideal,
            z_up: true,
            params: ParamsConfig::default(),
            barrier: BarrierConfig::default(),
            qp: QpConfig::default(),
            gains: AttitudeGains::default(),
            initial: InitialConfig::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn frame(&self) -> FrameConvention {
        FrameConvention { z_up: self.z_up }
    }

    /// The full mission formula: parsed `spec` conjoined with the expanded
    /// `mission` table.
    pub fn formula(&self) -> Result<Formula, ScenarioError> {
        let mut parts: Vec<Formula> = Vec::new();
        if let Some(spec) = &self.spec {
            parts.push(parse_spec(spec)?);
        }
        if let Some(mission) = &self.mission {
            for wp in &mission.waypoints {
                let ball = Formula::Pred(crate::stl::Predicate::NormBall {
                    center: Vec3::from_column_slice(&wp.center),
                    radius: wp.radius,
                    norm: crate::stl::NormKind::Euclidean,
                });
                parts.push(Formula::eventually(
                    TimeInterval::new(wp.reach[0], wp.reach[1]).map_err(ScenarioError::Fragment)?,
                    ball.clone(),
                )?);
                if let Some(hold) = wp.hold {
                    parts.push(Formula::always(
                        TimeInterval::new(hold[0], hold[1]).map_err(ScenarioError::Fragment)?,
                        ball,
                    )?);
                }
            }
            if let Some(size) = mission.safe_box {
                parts.push(Formula::always(
                    TimeInterval::new(0.0, self.duration).map_err(ScenarioError::Fragment)?,
                    Formula::Pred(crate::stl::Predicate::NormBall {
                        center: Vec3::zeros(),
                        radius: size,
                        norm: crate::stl::NormKind::Infinity,
                    }),
                )?);
            }
        }
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(ScenarioError::NoMission)?;
        Ok(iter.fold(first, Formula::and))
    }

    /// Initial plant state in the internal frame.
    pub fn initial_state(&self) -> SystemState {
        let frame = self.frame();
        let n = self.params.attach_offsets.len();
        SystemState {
            time: 0.0,
            pos: frame.convert(&Vec3::from_column_slice(&self.initial.position)),
            // Attitude starts at identity, so body velocity equals world.
            vel_body: frame.convert(&Vec3::from_column_slice(&self.initial.velocity)),
            rot: RotationMatrix::identity(),
            omega: Vec3::zeros(),
            uavs: vec![
                UavState {
                    rot: RotationMatrix::identity(),
                    omega: Vec3::zeros(),
                };
                n
            ],
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid("duration must be positive".into());
        }
        if !(self.control_period.is_finite() && self.control_period > 0.0) {
            return invalid("control_period must be positive".into());
        }
        if !(self.integrator_dt.is_finite() && self.integrator_dt > 0.0) {
            return invalid("integrator_dt must be positive".into());
        }
        let substeps = (self.control_period / self.integrator_dt).round();
        if substeps < 1.0 || (self.control_period - substeps * self.integrator_dt).abs() > 1e-9 {
            return invalid(format!(
                "integrator_dt {} must divide control_period {}",
                self.integrator_dt, self.control_period
            ));
        }
        if !(self.gains.k_rot > 0.0 && self.gains.k_omega > 0.0) {
            return invalid("attitude gains must be positive".into());
        }
        self.qp
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.params
            .to_system_params(self.frame())
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let formula = self.formula()?;
        let horizon = formula.horizon();
        if horizon > self.duration + 1e-9 {
            return invalid(format!(
                "formula horizon {horizon} exceeds the run duration {}; satisfaction could \
                 never be certified",
                self.duration
            ));
        }
        Ok(())
    }

    /// Number of control steps in the run.
    pub fn control_steps(&self) -> usize {
        (self.duration / self.control_period).round() as usize
    }

    pub fn substeps_per_control(&self) -> usize {
        (self.control_period / self.integrator_dt).round() as usize
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["package_delivery", "two_waypoint"]
}

pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "package_delivery" => Some(package_delivery()),
        "two_waypoint" => Some(two_waypoint()),
        _ => None,
    }
}

/// Three-stop delivery: visit and hold three waypoints in sequence inside a
/// 50 m safety box, 90 s total. Reach goals activate at their window start;
/// hold goals activate 5 s early so the hold envelope picks the payload up
/// shortly before its reach deadline instead of squeezing it for the whole
/// approach, which keeps the capture gentle.
fn package_delivery() -> Scenario {
    Scenario {
        name: "package_delivery".into(),
        mission: Some(Mission {
            waypoints: vec![
                Waypoint {
                    center: [10.0, 10.0, 5.0],
                    radius: 1.0,
                    reach: [0.0, 18.0],
                    hold: Some([17.0, 30.0]),
                },
                Waypoint {
                    center: [25.0, 10.0, 5.0],
                    radius: 1.0,
                    reach: [30.0, 48.0],
                    hold: Some([47.0, 60.0]),
                },
                Waypoint {
                    center: [40.0, 20.0, 1.0],
                    radius: 1.0,
                    reach: [60.0, 78.0],
                    hold: Some([77.0, 90.0]),
                },
            ],
            safe_box: Some(50.0),
        }),
        duration: 90.0,
        barrier: BarrierConfig {
            lead_f: Some(0.0),
            lead_g: Some(5.0),
            ..BarrierConfig::default()
        },
        initial: InitialConfig {
            position: [0.0, 0.0, 5.0],
            ..InitialConfig::default()
        },
        ..Scenario::default()
    }
}

/// The two-goal benchmark: reach a 0.1-ball at (2,2,2) by t = 14, then stay
/// within 3 m of it until t = 25, with hand-picked envelopes.
fn two_waypoint() -> Scenario {
    let mut barrier = BarrierConfig::default();
    barrier.profile_overrides.insert(
        0,
        TemporalProfile::Linear {
            start_value: 50.1,
            decay_rate: 50.0 / 14.0,
            t_start: 0.0,
            t_freeze: 14.0,
        },
    );
    barrier.profile_overrides.insert(
        1,
        TemporalProfile::Exponential {
            amplitude: 347.93,
            rate: 0.418,
            offset: 2.0,
            t_start: 0.0,
        },
    );
    Scenario {
        name: "two_waypoint".into(),
        spec: Some(
            "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and G[14, 25](ball(r0, [2, 2, 2]) <= 3)".into(),
        ),
        duration: 25.0,
        barrier,
        ..Scenario::default()
    }
}
