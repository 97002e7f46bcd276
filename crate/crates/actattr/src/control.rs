//! Visual servoing and manipulation on top of the scene: PID strafing onto
//! an image patch, approach to a fixed standoff, and the pick/place
//! primitives with their reach preconditions.
//!
//! The base is holonomic, so the controllers translate without turning:
//! lateral error is corrected by strafing along the body-right axis,
//! longitudinal error by driving along the heading. The target is followed
//! frame to frame by box overlap, never by object id, so a detector that
//! handed over the wrong box stays locked on the wrong object.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, ImagePatch};
use crate::scene::{
    distance_probe, project, ray_distance_to_object, step, CameraModel, SceneError, StepFlags,
    VelocityCommand, World,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("target patch no longer overlaps anything in view")]
    TargetLost,
    #[error("patch refers to unknown frame {0}")]
    UnknownFrame(u64),
    #[error("servo hit the step budget without converging: {0:?}")]
    NotConverged(ServoReport),
    #[error("gripper is already holding {0:?}")]
    AlreadyHolding(String),
    #[error("gripper is empty")]
    NotHolding,
    #[error("object {id:?} is {distance:.3} m away, beyond reach {limit:.3} m")]
    TooFar { id: String, distance: f64, limit: f64 },
    #[error("object {0:?} is not on the camera axis")]
    NotInFront(String),
    #[error("object {0:?} is not graspable")]
    NotGraspable(String),
    #[error("cannot place there: {0}")]
    PlacementBlocked(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Absolute bound on the integral term (anti-windup).
    pub i_clamp: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PidState {
    integral: f64,
    prev_error: Option<f64>,
}

impl PidState {
    pub fn update(&mut self, gains: &PidGains, error: f64, dt: f64) -> f64 {
        self.integral = (self.integral + error * dt).clamp(-gains.i_clamp, gains.i_clamp);
        let derivative = match self.prev_error {
            Some(prev) => (error - prev) / dt,
            None => 0.0,
        };
        self.prev_error = Some(error);
        gains.kp * error + gains.ki * self.integral + gains.kd * derivative
    }
}

/// Controller parameters, JSON-loadable so deployments can retune without a
/// rebuild. Defaults are the tuned stock values; see docs/tuning.md for how
/// they were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Approach distance held between camera and target surface, meters.
    pub standoff: f64,
    /// Image-space convergence band, pixels off frame center.
    pub lateral_tol_px: f64,
    /// Distance convergence band around the standoff, meters.
    pub longitudinal_tol_m: f64,
    /// Hard cap on simulation steps per servo call.
    pub max_steps: u32,
    /// Approach pauses to re-center whenever the pixel error exceeds this
    /// multiple of `lateral_tol_px`.
    pub recenter_factor: f64,
    /// Minimum box overlap for frame-to-frame target association.
    pub track_min_iou: f64,
    /// Pixel-error loop, output in m/s of strafe.
    pub lateral: PidGains,
    /// Range-error loop, output in m/s along the heading.
    pub longitudinal: PidGains,
    /// Std-dev of the force sensor, kilograms.
    pub weight_sigma: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            standoff: 0.25,
            lateral_tol_px: 2.0,
            longitudinal_tol_m: 0.01,
            max_steps: 500,
            recenter_factor: 2.0,
            track_min_iou: 0.1,
            lateral: PidGains {
                kp: 0.015,
                ki: 0.0,
                kd: 0.0,
                i_clamp: 50.0,
            },
            longitudinal: PidGains {
                kp: 1.5,
                ki: 0.0,
                kd: 0.0,
                i_clamp: 5.0,
            },
            weight_sigma: 0.0,
        }
    }
}

impl ControllerConfig {
    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| SceneError::InvalidScene(format!("controller JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let positive = [
            self.standoff,
            self.lateral_tol_px,
            self.longitudinal_tol_m,
            self.recenter_factor,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SceneError::InvalidScene(
                "controller tolerances must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(SceneError::InvalidScene("max_steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.track_min_iou) {
            return Err(SceneError::InvalidScene(
                "track_min_iou must lie in [0, 1)".into(),
            ));
        }
        if !(self.weight_sigma.is_finite() && self.weight_sigma >= 0.0) {
            return Err(SceneError::InvalidScene(
                "weight_sigma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Frame-to-frame target association by box overlap against the current
/// ground-truth projection. Picks the best-overlapping patch, requiring
/// IoU above the configured floor; carries its box forward.
#[derive(Debug, Clone)]
pub struct Tracker {
    last: BoundingBox,
    min_iou: f64,
}

impl Tracker {
    pub fn new(seed: BoundingBox, min_iou: f64) -> Self {
        Self {
            last: seed,
            min_iou,
        }
    }

    pub fn update(&mut self, frame: &[ImagePatch]) -> Option<ImagePatch> {
        let best = frame
            .iter()
            .map(|p| (self.last.iou(&p.bbox), p))
            .filter(|(iou, _)| *iou > self.min_iou)
            .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite iou"))?;
        self.last = best.1.bbox;
        Some(best.1.clone())
    }
}

/// How a servo call went: step count, the errors at exit, and how often the
/// simulator clamped the command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServoReport {
    pub steps: u32,
    pub final_lateral_px: f64,
    pub final_longitudinal_m: f64,
    pub velocity_clamps: u32,
    pub contact_clamps: u32,
    pub converged: bool,
}

/// Issues frame ids and remembers, per frame, which object each pixel box
/// belonged to. A patch is a handle into the frame it came from: actions
/// resolve it against that frame's geometry, not against whatever is in
/// view when the action runs.
#[derive(Debug, Clone, Default)]
pub struct FrameStore {
    frames: HashMap<u64, Vec<(String, BoundingBox)>>,
    next: u64,
}

impl FrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Take one camera frame: assign the next id, project the world, and
    /// record the ground-truth boxes for later patch resolution.
    pub fn observe(&mut self, world: &World, cam: &CameraModel) -> (u64, Vec<ImagePatch>) {
        let id = self.next;
        self.next += 1;
        let frame = project(world, cam, id);
        self.frames.insert(
            id,
            frame
                .iter()
                .map(|p| {
                    (
                        p.object_id.clone().expect("projection carries ids"),
                        p.bbox,
                    )
                })
                .collect(),
        );
        (id, frame)
    }

    /// Id the next frame will get, i.e. how many frames exist so far.
    pub fn next_id(&self) -> u64 {
        self.next
    }

    /// Rebuild a frame's ground-truth patches for the recognition oracle:
    /// the boxes as seen then, named by the stable objects behind them.
    pub fn ground_of(&self, frame_id: u64, world: &World) -> Option<Vec<ImagePatch>> {
        let boxes = self.frames.get(&frame_id)?;
        Some(
            boxes
                .iter()
                .filter_map(|(id, b)| {
                    let name = world.object(id).ok()?.name.clone();
                    ImagePatch::new(*b, name, 1.0, frame_id, Some(id.clone())).ok()
                })
                .collect(),
        )
    }

    /// The object a patch overlapped best in its own frame, requiring IoU
    /// above `min_iou`.
    pub fn resolve(&self, patch: &ImagePatch, min_iou: f64) -> Result<String, ControlError> {
        let boxes = self
            .frames
            .get(&patch.frame_id)
            .ok_or(ControlError::UnknownFrame(patch.frame_id))?;
        boxes
            .iter()
            .map(|(id, b)| (patch.bbox.iou(b), id))
            .filter(|(iou, _)| *iou > min_iou)
            .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite iou"))
            .map(|(_, id)| id.clone())
            .ok_or(ControlError::TargetLost)
    }
}

/// Mutable bundle a control call operates on.
pub struct Drive<'a> {
    pub world: &'a mut World,
    pub cam: &'a CameraModel,
    pub cfg: &'a ControllerConfig,
    pub frames: &'a mut FrameStore,
}

impl Drive<'_> {
    fn observe(&mut self) -> Vec<ImagePatch> {
        self.frames.observe(self.world, self.cam).1
    }

    fn resolve(&self, patch: &ImagePatch) -> Result<String, ControlError> {
        self.frames.resolve(patch, self.cfg.track_min_iou)
    }

    /// Current view of one known object, if visible.
    fn reacquire(&mut self, id: &str) -> Option<ImagePatch> {
        self.observe()
            .into_iter()
            .find(|p| p.object_id.as_deref() == Some(id))
    }
}

fn body_axes(world: &World) -> ((f64, f64), (f64, f64)) {
    let theta = world.robot.pose.theta;
    ((theta.cos(), theta.sin()), (theta.sin(), -theta.cos()))
}

// A box that only grazes the frame edge is a poor track seed: one strafe
// step shifts a sliver past its own width and the overlap test loses it.
// Demand clearance from the side edges before treating a sighting as real.
const SEED_EDGE_MARGIN_PX: f64 = 8.0;

fn clear_of_side_edges(bbox: &BoundingBox, cam: &CameraModel) -> bool {
    bbox.x_min >= SEED_EDGE_MARGIN_PX && bbox.x_max <= cam.width - SEED_EDGE_MARGIN_PX
}

// Back straight up until the object sits comfortably inside the field of
// view. A previous approach parks the camera right in front of one object,
// which pushes the others outside the view cone; giving ground restores
// sight of anything that was visible from farther back.
fn retreat_until_visible(
    d: &mut Drive,
    id: &str,
    report: &mut ServoReport,
) -> Result<ImagePatch, ControlError> {
    let dt = d.world.time_step;
    while report.steps < d.cfg.max_steps {
        let (fwd, _) = body_axes(d.world);
        let speed = 0.5 * d.world.robot.limits.max_speed;
        let flags = step(
            d.world,
            VelocityCommand {
                vx: -fwd.0 * speed,
                vy: -fwd.1 * speed,
                omega: 0.0,
            },
            dt,
        );
        report.steps += 1;
        if flags.velocity_clamped {
            report.velocity_clamps += 1;
        }
        if flags.contact_clamped {
            report.contact_clamps += 1;
        }
        if let Some(p) = d.reacquire(id) {
            if clear_of_side_edges(&p.bbox, d.cam) {
                return Ok(p);
            }
        }
    }
    Err(ControlError::TargetLost)
}

fn servo(d: &mut Drive, patch: &ImagePatch, approach: bool) -> Result<ServoReport, ControlError> {
    // The patch names its object via its own frame. Pick up the track from
    // the object's current appearance; from here on association is pure
    // frame-to-frame box overlap.
    let id = d.resolve(patch)?;
    let mut report = ServoReport::default();
    let entry = (d.world.robot.pose.x, d.world.robot.pose.y);
    let seed = match d.reacquire(&id) {
        Some(p) if clear_of_side_edges(&p.bbox, d.cam) => p,
        _ => retreat_until_visible(d, &id, &mut report)?,
    };
    // A pure centering servo must not move the robot along its heading, or
    // range readings taken afterwards lose their common origin. If the
    // seed search gave ground, owe that distance back.
    let (fwd, _) = body_axes(d.world);
    let given_ground = -((d.world.robot.pose.x - entry.0) * fwd.0
        + (d.world.robot.pose.y - entry.1) * fwd.1);
    let mut owed_forward_m = if approach { 0.0 } else { given_ground.max(0.0) };
    let mut tracker = Tracker::new(seed.bbox, d.cfg.track_min_iou);
    let mut lat_pid = PidState::default();
    let mut long_pid = PidState::default();
    let dt = d.world.time_step;
    loop {
        let frame = d.observe();
        let target = tracker.update(&frame).ok_or(ControlError::TargetLost)?;
        let e_u = target.centroid().0 - d.cam.width / 2.0;
        report.final_lateral_px = e_u;
        // Closing range magnifies pixel error, so the approach yields to
        // re-centering whenever the target drifts off axis. The range
        // sensor reads along the camera axis, so it is consulted only once
        // the target is near that axis.
        let recenter = e_u.abs() > d.cfg.recenter_factor * d.cfg.lateral_tol_px;
        let e_d = if approach && !recenter {
            // No reading means the ray still misses the target (possible at
            // long range even inside the recenter band): hold position
            // along the axis and keep centering.
            match distance_probe(d.world, d.cam) {
                Ok(r) => {
                    let e = r - d.cfg.standoff;
                    report.final_longitudinal_m = e;
                    Some(e)
                }
                Err(SceneError::NoReading) => None,
                Err(other) => return Err(other.into()),
            }
        } else {
            None
        };
        let lat_ok = e_u.abs() <= d.cfg.lateral_tol_px;
        let long_ok = !approach || e_d.is_some_and(|e| e.abs() <= d.cfg.longitudinal_tol_m);
        if lat_ok && long_ok {
            if owed_forward_m > 1e-9 {
                // Centered on the target, so driving the owed distance
                // straight ahead keeps it on axis. Then verify once more
                // from the restored standpoint.
                let speed = 0.5 * d.world.robot.limits.max_speed;
                while owed_forward_m > 1e-9 && report.steps < d.cfg.max_steps {
                    let v = (speed * dt).min(owed_forward_m) / dt;
                    let (fwd, _) = body_axes(d.world);
                    let flags = step(
                        d.world,
                        VelocityCommand {
                            vx: fwd.0 * v,
                            vy: fwd.1 * v,
                            omega: 0.0,
                        },
                        dt,
                    );
                    report.steps += 1;
                    if flags.velocity_clamped {
                        report.velocity_clamps += 1;
                    }
                    if flags.contact_clamped {
                        report.contact_clamps += 1;
                        break;
                    }
                    owed_forward_m -= v * dt;
                }
                owed_forward_m = 0.0;
                continue;
            }
            report.converged = true;
            return Ok(report);
        }
        if report.steps >= d.cfg.max_steps {
            return Err(ControlError::NotConverged(report));
        }
        let v_right = lat_pid.update(&d.cfg.lateral, e_u, dt);
        let v_fwd = match e_d {
            Some(e) => long_pid.update(&d.cfg.longitudinal, e, dt),
            None => 0.0,
        };
        let (fwd, right) = body_axes(d.world);
        let cmd = VelocityCommand {
            vx: fwd.0 * v_fwd + right.0 * v_right,
            vy: fwd.1 * v_fwd + right.1 * v_right,
            omega: 0.0,
        };
        let flags: StepFlags = step(d.world, cmd, dt);
        report.steps += 1;
        if flags.velocity_clamped {
            report.velocity_clamps += 1;
        }
        if flags.contact_clamped {
            report.contact_clamps += 1;
        }
    }
}

/// Strafe until the patch sits on the image center column (within
/// tolerance). Range is left alone.
pub fn focus_on_patch(d: &mut Drive, patch: &ImagePatch) -> Result<ServoReport, ControlError> {
    servo(d, patch, false)
}

/// Center the patch and close to the standoff distance.
pub fn go_to_object(d: &mut Drive, patch: &ImagePatch) -> Result<ServoReport, ControlError> {
    servo(d, patch, true)
}

/// Grasp the object behind the patch. Requires an empty gripper, a
/// graspable target, and the target surface on the camera axis within
/// `standoff + longitudinal_tol_m`.
pub fn pick_up(d: &mut Drive, patch: &ImagePatch) -> Result<String, ControlError> {
    if let Some(held) = &d.world.robot.holding {
        return Err(ControlError::AlreadyHolding(held.clone()));
    }
    let id = d.resolve(patch)?;
    let obj = d.world.object(&id)?;
    if !obj.graspable {
        return Err(ControlError::NotGraspable(id));
    }
    let distance = ray_distance_to_object(d.world, d.cam, &id)
        .ok_or_else(|| ControlError::NotInFront(id.clone()))?;
    let limit = d.cfg.standoff + d.cfg.longitudinal_tol_m;
    if distance > limit {
        return Err(ControlError::TooFar {
            id,
            distance,
            limit,
        });
    }
    let (gx, gy) = d.world.robot.gripper_point();
    let extent_z = d.world.object(&id)?.extent[2];
    {
        let obj = d.world.object_mut(&id)?;
        obj.center[0] = gx;
        obj.center[1] = gy;
        obj.center[2] = crate::scene::GRIP_LIFT + extent_z;
    }
    d.world.robot.holding = Some(id.clone());
    Ok(id)
}

/// Set the held object down on top of the surface behind the patch. The
/// robot must be within `standoff + longitudinal_tol_m` of the surface
/// footprint; the object lands under the gripper, resting on the surface.
pub fn put_on(d: &mut Drive, patch: &ImagePatch) -> Result<(), ControlError> {
    let held = d
        .world
        .robot
        .holding
        .clone()
        .ok_or(ControlError::NotHolding)?;
    let surface_id = d.resolve(patch)?;
    if surface_id == held {
        return Err(ControlError::PlacementBlocked(
            "cannot place an object on itself".into(),
        ));
    }
    let surface = d.world.object(&surface_id)?;
    let reach = surface.footprint_distance(d.world.robot.pose.x, d.world.robot.pose.y);
    let limit = d.cfg.standoff + d.cfg.longitudinal_tol_m;
    if reach > limit {
        return Err(ControlError::TooFar {
            id: surface_id,
            distance: reach,
            limit,
        });
    }
    let surface_top = surface.hi()[2];
    let (gx, gy) = d.world.robot.gripper_point();
    let extent = d.world.object(&held)?.extent;
    let candidate = [gx, gy, surface_top + extent[2]];
    for other in &d.world.objects {
        if other.id == held {
            continue;
        }
        let (olo, ohi) = (other.lo(), other.hi());
        let overlaps = (0..3).all(|k| {
            let lo = (candidate[k] - extent[k]).max(olo[k]);
            let hi = (candidate[k] + extent[k]).min(ohi[k]);
            hi - lo > 1e-9
        });
        if overlaps {
            return Err(ControlError::PlacementBlocked(format!(
                "object {:?} is in the way",
                other.id
            )));
        }
    }
    let obj = d.world.object_mut(&held)?;
    obj.center = candidate;
    d.world.robot.holding = None;
    Ok(())
}
