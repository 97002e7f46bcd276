//! Deterministic tabletop world: axis-aligned objects on a ground plane, a
//! holonomic robot with a body-mounted pinhole camera, and the oracle
//! perception backends (detector, visual QA, mass lookup) that stand in for
//! learned models.
//!
//! Conventions: world coordinates are meters with z up and the ground at
//! z = 0. A robot pose is `(x, y, theta)` with heading `(cos theta,
//! sin theta)`. The camera looks along the heading (plus a yaw offset),
//! horizontally, from a configurable mount point. Image coordinates follow
//! [`crate::geometry`]: origin top-left, v down.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, ImagePatch};
use crate::kb::KnowledgeBase;

/// Corners closer than this to the image plane make an object unprojectable.
pub const NEAR_PLANE: f64 = 1e-6;
/// Vertical span of the robot body used for collision clamping.
pub const ROBOT_HEIGHT: f64 = 0.15;
/// Objects entirely below this height are driven over, not collided with
/// (mats, thin surfaces).
pub const GROUND_CLEARANCE: f64 = 0.02;
/// Held objects ride this far above the ground.
pub const GRIP_LIFT: f64 = 0.02;

pub const LIST_ITEMS_QUESTION: &str = "What are the items in this image?";

/// Recognition question the visual oracle answers about a single patch.
pub const WHAT_IS_THIS_QUESTION: &str = "What is this?";
pub const HEAVIEST_QUESTION: &str =
    "Out of these items, which one is more likely to be the heaviest one?";
pub const LIGHTEST_QUESTION: &str =
    "Out of these items, which one is more likely to be the lightest one?";
/// Name reported by the visual oracle when it cannot identify a patch.
pub const UNKNOWN_NAME: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("no object in the scene with id {0:?}")]
    UnknownObject(String),
    #[error("distance probe got no reading")]
    NoReading,
    #[error("robot is not holding anything")]
    NotHolding,
    #[error("visual oracle cannot answer {0:?}")]
    UnsupportedQuestion(String),
    #[error("language oracle cannot parse {0:?}")]
    MalformedQuestion(String),
    #[error("language query has an empty item list")]
    EmptyItemList,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", from = "[f64; 3]")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn heading(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }
}

impl From<Pose> for [f64; 3] {
    fn from(p: Pose) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl From<[f64; 3]> for Pose {
    fn from(a: [f64; 3]) -> Self {
        Pose::new(a[0], a[1], a[2])
    }
}

/// Which sensors the robot carries. Purely an inventory; all stock robots
/// have all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSuite {
    pub camera: bool,
    pub distance: bool,
    pub force: bool,
}

impl Default for SensorSuite {
    fn default() -> Self {
        Self {
            camera: true,
            distance: true,
            force: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    pub max_speed: f64,
    pub max_yaw_rate: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self {
            max_speed: 0.5,
            max_yaw_rate: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub pose: Pose,
    /// Object id currently in the gripper.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holding: Option<String>,
    /// Grasp distance: how far in front of the camera an object must sit to
    /// be picked up, and where a held object rides.
    pub standoff: f64,
    #[serde(default)]
    pub sensors: SensorSuite,
    #[serde(default)]
    pub limits: VelocityLimits,
}

impl Robot {
    pub fn new(pose: Pose, standoff: f64) -> Self {
        Self {
            pose,
            holding: None,
            standoff,
            sensors: SensorSuite::default(),
            limits: VelocityLimits::default(),
        }
    }

    /// Where a held object sits: `standoff` ahead of the body origin.
    pub fn gripper_point(&self) -> (f64, f64) {
        let (fx, fy) = self.pose.heading();
        (
            self.pose.x + fx * self.standoff,
            self.pose.y + fy * self.standoff,
        )
    }
}

/// Axis-aligned box in the world. `extent` holds half-widths per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub name: String,
    pub center: [f64; 3],
    pub extent: [f64; 3],
    pub mass: f64,
    pub graspable: bool,
}

impl SceneObject {
    pub fn lo(&self) -> [f64; 3] {
        [
            self.center[0] - self.extent[0],
            self.center[1] - self.extent[1],
            self.center[2] - self.extent[2],
        ]
    }

    pub fn hi(&self) -> [f64; 3] {
        [
            self.center[0] + self.extent[0],
            self.center[1] + self.extent[1],
            self.center[2] + self.extent[2],
        ]
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let lo = self.lo();
        let hi = self.hi();
        let mut out = [[0.0; 3]; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            corner[0] = if i & 1 == 0 { lo[0] } else { hi[0] };
            corner[1] = if i & 2 == 0 { lo[1] } else { hi[1] };
            corner[2] = if i & 4 == 0 { lo[2] } else { hi[2] };
        }
        out
    }

    /// Horizontal distance from `(x, y)` to the object's footprint; zero
    /// inside it.
    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        let lo = self.lo();
        let hi = self.hi();
        let dx = (lo[0] - x).max(0.0).max(x - hi[0]);
        let dy = (lo[1] - y).max(0.0).max(y - hi[1]);
        (dx * dx + dy * dy).sqrt()
    }

    fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::InvalidScene(msg));
        if self.id.is_empty() || self.name.is_empty() {
            return bad(format!("object {:?} needs a non-empty id and name", self.id));
        }
        if !self.mass.is_finite() || self.mass <= 0.0 {
            return bad(format!("object {:?} mass must be positive", self.id));
        }
        for v in self.center.iter().chain(self.extent.iter()) {
            if !v.is_finite() {
                return bad(format!("object {:?} has a non-finite coordinate", self.id));
            }
        }
        if self.extent.iter().any(|e| *e <= 0.0) {
            return bad(format!("object {:?} extents must be positive", self.id));
        }
        Ok(())
    }
}

/// Camera mount relative to the robot body: offsets along heading and body
/// right, height above ground, and a yaw offset added to the robot heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    #[serde(default)]
    pub forward: f64,
    #[serde(default)]
    pub lateral: f64,
    pub height: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal: f64,
    pub width: f64,
    pub height: f64,
    pub pose: CameraMount,
}

impl CameraModel {
    pub fn new(focal: f64, width: f64, height: f64, pose: CameraMount) -> Result<Self, SceneError> {
        if !(focal.is_finite() && focal > 0.0 && width > 0.0 && height > 0.0) {
            return Err(SceneError::InvalidScene(
                "camera needs positive focal length and frame dimensions".into(),
            ));
        }
        Ok(Self {
            focal,
            width,
            height,
            pose,
        })
    }

    /// The rig used throughout the generators: 320x240 frame, 90 degree
    /// horizontal field of view, mounted 0.1 m up looking along the heading.
    pub fn standard() -> Self {
        Self {
            focal: 160.0,
            width: 320.0,
            height: 240.0,
            pose: CameraMount {
                forward: 0.0,
                lateral: 0.0,
                height: 0.1,
                yaw: 0.0,
            },
        }
    }

    fn frame(&self, robot: &Pose) -> CamFrame {
        let (fx, fy) = robot.heading();
        let (rx, ry) = (robot.theta.sin(), -robot.theta.cos());
        let origin = [
            robot.x + fx * self.pose.forward + rx * self.pose.lateral,
            robot.y + fy * self.pose.forward + ry * self.pose.lateral,
            self.pose.height,
        ];
        let phi = robot.theta + self.pose.yaw;
        CamFrame {
            origin,
            fwd: (phi.cos(), phi.sin()),
            right: (phi.sin(), -phi.cos()),
        }
    }
}

/// Camera placement in world coordinates. The optical axis is horizontal:
/// `fwd` in the ground plane, image v measured downward from `origin[2]`.
struct CamFrame {
    origin: [f64; 3],
    fwd: (f64, f64),
    right: (f64, f64),
}

impl CamFrame {
    /// Pixel coordinates and depth of a world point, or `None` when the
    /// point is not safely in front of the camera.
    fn project(&self, cam: &CameraModel, p: [f64; 3]) -> Option<(f64, f64, f64)> {
        let dx = p[0] - self.origin[0];
        let dy = p[1] - self.origin[1];
        let depth = dx * self.fwd.0 + dy * self.fwd.1;
        if depth <= NEAR_PLANE {
            return None;
        }
        let lateral = dx * self.right.0 + dy * self.right.1;
        let drop = self.origin[2] - p[2];
        let u = cam.width / 2.0 + cam.focal * lateral / depth;
        let v = cam.height / 2.0 + cam.focal * drop / depth;
        Some((u, v, depth))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub objects: Vec<SceneObject>,
    pub robot: Robot,
    pub rng_seed: u64,
    pub time_step: f64,
}

impl World {
    pub fn new(
        objects: Vec<SceneObject>,
        robot: Robot,
        rng_seed: u64,
        time_step: f64,
    ) -> Result<Self, SceneError> {
        if !(time_step.is_finite() && time_step > 0.0) {
            return Err(SceneError::InvalidScene("time_step must be positive".into()));
        }
        for obj in &objects {
            obj.validate()?;
        }
        for i in 0..objects.len() {
            for j in (i + 1)..objects.len() {
                if objects[i].id == objects[j].id {
                    return Err(SceneError::InvalidScene(format!(
                        "duplicate object id {:?}",
                        objects[i].id
                    )));
                }
                if boxes_interpenetrate(&objects[i], &objects[j]) {
                    return Err(SceneError::InvalidScene(format!(
                        "objects {:?} and {:?} interpenetrate",
                        objects[i].id, objects[j].id
                    )));
                }
            }
        }
        Ok(Self {
            objects,
            robot,
            rng_seed,
            time_step,
        })
    }

    pub fn object(&self, id: &str) -> Result<&SceneObject, SceneError> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| SceneError::UnknownObject(id.to_owned()))
    }

    pub fn object_mut(&mut self, id: &str) -> Result<&mut SceneObject, SceneError> {
        self.objects
            .iter_mut()
            .find(|o| o.id == id)
            .ok_or_else(|| SceneError::UnknownObject(id.to_owned()))
    }

    /// Seeded generator for every stochastic draw tied to this world.
    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

// Strict overlap in all three axes; shared faces are allowed (objects
// resting on a mat touch it exactly).
fn boxes_interpenetrate(a: &SceneObject, b: &SceneObject) -> bool {
    let (alo, ahi) = (a.lo(), a.hi());
    let (blo, bhi) = (b.lo(), b.hi());
    (0..3).all(|k| ahi[k].min(bhi[k]) - alo[k].max(blo[k]) > 1e-9)
}

/// On-disk scene description: everything needed to rebuild a `World` plus
/// its camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub seed: u64,
    pub time_step: f64,
    pub camera: CameraModel,
    pub objects: Vec<SceneObject>,
    pub robot: RobotInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotInit {
    pub pose: Pose,
}

impl SceneFile {
    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        serde_json::from_str(text)
            .map_err(|e| SceneError::InvalidScene(format!("scene JSON: {e}")))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Instantiate the world. `standoff` comes from the controller
    /// configuration, not the scene.
    pub fn build(&self, standoff: f64) -> Result<(World, CameraModel), SceneError> {
        let camera = CameraModel::new(
            self.camera.focal,
            self.camera.width,
            self.camera.height,
            self.camera.pose,
        )?;
        let world = World::new(
            self.objects.clone(),
            Robot::new(self.robot.pose, standoff),
            self.seed,
            self.time_step,
        )?;
        Ok((world, camera))
    }
}

/// Ground-truth detections: project every object through the pinhole model
/// (8 corners, axis-aligned pixel hull), clip to the frame, and drop objects
/// behind the camera or fully outside the frame. Patches are labeled with
/// the object name at confidence 1.0, in scene order.
pub fn project(world: &World, cam: &CameraModel, frame_id: u64) -> Vec<ImagePatch> {
    let frame = cam.frame(&world.robot.pose);
    let mut out = Vec::new();
    for obj in &world.objects {
        let center_depth = {
            let d = (
                obj.center[0] - frame.origin[0],
                obj.center[1] - frame.origin[1],
            );
            d.0 * frame.fwd.0 + d.1 * frame.fwd.1
        };
        if center_depth <= NEAR_PLANE {
            continue;
        }
        let mut hull: Option<(f64, f64, f64, f64)> = None;
        let mut all_in_front = true;
        for corner in obj.corners() {
            match frame.project(cam, corner) {
                Some((u, v, _)) => {
                    hull = Some(match hull {
                        None => (u, v, u, v),
                        Some((x0, y0, x1, y1)) => (x0.min(u), y0.min(v), x1.max(u), y1.max(v)),
                    });
                }
                None => {
                    all_in_front = false;
                    break;
                }
            }
        }
        let (x0, y0, x1, y1) = match (all_in_front, hull) {
            (true, Some(h)) => h,
            _ => continue,
        };
        let Ok(raw) = BoundingBox::new(x0.max(0.0).min(x1), y0.max(0.0).min(y1), x1, y1) else {
            continue;
        };
        // Raw hulls can extend past the frame; only the clipped part counts.
        let Some(bbox) = BoundingBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
        }
        .clip_to_frame(cam.width, cam.height) else {
            let _ = raw;
            continue;
        };
        let patch = ImagePatch::new(bbox, obj.name.clone(), 1.0, frame_id, Some(obj.id.clone()))
            .expect("clipped hull is a valid patch");
        out.push(patch);
    }
    out
}

/// Detector noise, applied in pixel space after projection. Rates are
/// per-patch probabilities except `merge_rate`, which is drawn once per
/// detector call. All-zero means ground truth passes through untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Probability a true detection is dropped (occlusion, missed box).
    pub miss_rate: f64,
    /// Probability all matches collapse into one joint hull.
    pub merge_rate: f64,
    /// Std-dev in pixels of Gaussian noise added to each box coordinate.
    pub jitter_sigma: f64,
    /// Probability a detection snaps onto a different object.
    pub mislabel_rate: f64,
}

impl NoiseProfile {
    pub fn zero() -> Self {
        Self {
            miss_rate: 0.0,
            merge_rate: 0.0,
            jitter_sigma: 0.0,
            mislabel_rate: 0.0,
        }
    }

    /// Stock profile for the ordering experiments.
    pub fn calibrated() -> Self {
        Self {
            miss_rate: 0.1,
            merge_rate: 0.05,
            jitter_sigma: 2.0,
            mislabel_rate: 0.05,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let rates = [self.miss_rate, self.merge_rate, self.mislabel_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(SceneError::InvalidScene(
                "noise rates must lie in [0, 1]".into(),
            ));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(SceneError::InvalidScene(
                "jitter sigma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self::zero()
    }
}

// Open-vocabulary label matching: a query matches an object when either
// string contains the other, case-insensitively. find("mug") matches a
// "coffee mug"; find("the second mug from the left") also matches "mug".
fn label_matches(query: &str, name: &str) -> bool {
    let q = query.trim().to_lowercase();
    let n = name.trim().to_lowercase();
    if q.is_empty() || n.is_empty() {
        return false;
    }
    q.contains(&n) || n.contains(&q)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream layout obvious.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// Re-validate a jittered box: order the corners, keep a minimum size, and
// clamp back into the frame.
fn sanitize_box(x0: f64, y0: f64, x1: f64, y1: f64, w: f64, h: f64) -> BoundingBox {
    const MIN_SIZE: f64 = 0.1;
    let (mut x_min, mut x_max) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
    let (mut y_min, mut y_max) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
    x_min = x_min.clamp(0.0, w - MIN_SIZE);
    y_min = y_min.clamp(0.0, h - MIN_SIZE);
    x_max = x_max.clamp(x_min + MIN_SIZE, w);
    y_max = y_max.clamp(y_min + MIN_SIZE, h);
    BoundingBox {
        x_min,
        y_min,
        x_max,
        y_max,
    }
}

/// Oracle detector: ground-truth projection filtered by label match, then
/// degraded by `noise` in a fixed order (miss, merge, jitter, mislabel).
/// An empty result means "not found". Returned patches carry the query as
/// their label and keep ground-truth object ids.
pub fn oracle_find(
    world: &World,
    cam: &CameraModel,
    label: &str,
    noise: &NoiseProfile,
    rng: &mut ChaCha8Rng,
    frame_id: u64,
) -> Vec<ImagePatch> {
    degrade_find(&project(world, cam, frame_id), cam, label, noise, rng)
}

/// The detector pipeline on an already-projected ground-truth frame.
pub fn degrade_find(
    ground: &[ImagePatch],
    cam: &CameraModel,
    label: &str,
    noise: &NoiseProfile,
    rng: &mut ChaCha8Rng,
) -> Vec<ImagePatch> {
    let frame_id = ground.first().map(|p| p.frame_id).unwrap_or(0);
    let mut matched: Vec<ImagePatch> = ground
        .iter()
        .filter(|p| label_matches(label, &p.label))
        .cloned()
        .map(|mut p| {
            p.label = label.to_owned();
            p
        })
        .collect();
    if noise.is_zero() {
        return matched;
    }

    matched.retain(|_| !(rng.gen::<f64>() < noise.miss_rate));

    if matched.len() >= 2 && rng.gen::<f64>() < noise.merge_rate {
        let hull = matched
            .iter()
            .skip(1)
            .fold(matched[0].bbox, |acc, p| acc.hull(&p.bbox));
        // The merged box inherits the identity of the member it covers best.
        let best = matched
            .iter()
            .max_by(|a, b| {
                hull.iou(&a.bbox)
                    .partial_cmp(&hull.iou(&b.bbox))
                    .expect("finite iou")
            })
            .expect("non-empty");
        let merged = ImagePatch {
            bbox: hull,
            label: label.to_owned(),
            confidence: 1.0,
            frame_id,
            object_id: best.object_id.clone(),
        };
        matched = vec![merged];
    }

    if noise.jitter_sigma > 0.0 {
        for p in &mut matched {
            let b = p.bbox;
            p.bbox = sanitize_box(
                b.x_min + gaussian(rng, noise.jitter_sigma),
                b.y_min + gaussian(rng, noise.jitter_sigma),
                b.x_max + gaussian(rng, noise.jitter_sigma),
                b.y_max + gaussian(rng, noise.jitter_sigma),
                cam.width,
                cam.height,
            );
        }
    }

    if noise.mislabel_rate > 0.0 {
        for p in &mut matched {
            if rng.gen::<f64>() < noise.mislabel_rate {
                let others: Vec<&ImagePatch> = ground
                    .iter()
                    .filter(|g| g.object_id != p.object_id)
                    .collect();
                if !others.is_empty() {
                    let pick = others[rng.gen_range(0..others.len())];
                    p.bbox = pick.bbox;
                    p.object_id = pick.object_id.clone();
                }
            }
        }
    }

    matched
}

/// The two recognition queries the visual oracle supports. Free-form
/// questions are rejected with [`SceneError::UnsupportedQuestion`] at the
/// text boundary; see [`crate::rig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VqaQuestion {
    ListItems,
    NameOfPatch(ImagePatch),
}

/// Visual question answering over the current view.
pub fn oracle_vqa(
    world: &World,
    cam: &CameraModel,
    question: &VqaQuestion,
    noise: &NoiseProfile,
    rng: &mut ChaCha8Rng,
    frame_id: u64,
) -> String {
    match question {
        VqaQuestion::ListItems => oracle_list_items(world, cam, noise, rng, frame_id),
        VqaQuestion::NameOfPatch(patch) => {
            oracle_name_of_patch(world, cam, patch, noise, rng, frame_id)
        }
    }
}

/// Visible object names, left to right by patch centroid, degraded by the
/// recognition noise (`miss_rate` drops an item, `mislabel_rate` swaps it
/// for another visible name).
pub fn oracle_list_items(
    world: &World,
    cam: &CameraModel,
    noise: &NoiseProfile,
    rng: &mut ChaCha8Rng,
    frame_id: u64,
) -> String {
    degrade_list(&project(world, cam, frame_id), noise, rng)
}

/// The listing pipeline on an already-projected ground-truth frame.
pub fn degrade_list(ground: &[ImagePatch], noise: &NoiseProfile, rng: &mut ChaCha8Rng) -> String {
    let mut ground = ground.to_vec();
    ground.sort_by(|a, b| {
        a.centroid()
            .0
            .partial_cmp(&b.centroid().0)
            .expect("finite")
            .then_with(|| a.object_id.cmp(&b.object_id))
    });
    let names: Vec<String> = ground.iter().map(|p| p.label.clone()).collect();
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        if !noise.is_zero() && rng.gen::<f64>() < noise.miss_rate {
            continue;
        }
        let mut name = name.clone();
        if !noise.is_zero() && rng.gen::<f64>() < noise.mislabel_rate {
            let others: Vec<&String> = names
                .iter()
                .enumerate()
                .filter(|(j, n)| *j != i && *n != &name)
                .map(|(_, n)| n)
                .collect();
            if !others.is_empty() {
                name = others[rng.gen_range(0..others.len())].clone();
            }
        }
        out.push(name);
    }
    out.join(", ")
}

/// Name the object behind a patch: the ground-truth object with the highest
/// box overlap. Recognition noise applies: a missed recognition answers
/// [`UNKNOWN_NAME`], a mislabel answers with another visible name.
pub fn oracle_name_of_patch(
    world: &World,
    cam: &CameraModel,
    patch: &ImagePatch,
    noise: &NoiseProfile,
    rng: &mut ChaCha8Rng,
    frame_id: u64,
) -> String {
    degrade_name(&project(world, cam, frame_id), patch, noise, rng)
}

/// The patch-naming pipeline on an already-projected ground-truth frame.
pub fn degrade_name(
    ground: &[ImagePatch],
    patch: &ImagePatch,
    noise: &NoiseProfile,
    rng: &mut ChaCha8Rng,
) -> String {
    let best = ground
        .iter()
        .map(|g| (g.bbox.iou(&patch.bbox), g))
        .filter(|(iou, _)| *iou > 0.0)
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite iou"));
    let truth = match best {
        Some((_, g)) => g.label.clone(),
        None => return UNKNOWN_NAME.to_owned(),
    };
    if !noise.is_zero() {
        if rng.gen::<f64>() < noise.miss_rate {
            return UNKNOWN_NAME.to_owned();
        }
        if rng.gen::<f64>() < noise.mislabel_rate {
            let others: Vec<&ImagePatch> =
                ground.iter().filter(|g| g.label != truth).collect();
            if !others.is_empty() {
                return others[rng.gen_range(0..others.len())].label.clone();
            }
        }
    }
    truth
}

/// Answer from the mass-lookup oracle: the chosen name plus any item names
/// that fell back to the default mass (callers surface these in traces).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageAnswer {
    pub answer: String,
    pub unknown_items: Vec<String>,
}

/// Compose the canonical mass question over an explicit item list.
pub fn compose_items_question(template: &str, items: &str) -> String {
    format!("{template} Items: {items}.")
}

/// Mass-lookup oracle. Accepts exactly the two canonical templates (heaviest
/// / lightest) followed by `Items: a, b, c`, and answers with the item whose
/// table mass is extremal. Ties keep the earliest item.
pub fn oracle_language_query(
    question: &str,
    kb: &KnowledgeBase,
) -> Result<LanguageAnswer, SceneError> {
    let q = question.trim();
    let lowered = q.to_lowercase();
    let want_max = lowered.starts_with(&HEAVIEST_QUESTION.to_lowercase());
    let want_min = lowered.starts_with(&LIGHTEST_QUESTION.to_lowercase());
    if !want_max && !want_min {
        return Err(SceneError::MalformedQuestion(question.to_owned()));
    }
    let template_len = if want_max {
        HEAVIEST_QUESTION.len()
    } else {
        LIGHTEST_QUESTION.len()
    };
    let rest = q[template_len..].trim();
    let items_text = rest
        .strip_prefix("Items:")
        .or_else(|| rest.strip_prefix("items:"))
        .ok_or_else(|| SceneError::MalformedQuestion(question.to_owned()))?;
    let items: Vec<String> = items_text
        .trim()
        .trim_end_matches('.')
        .split(',')
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(SceneError::EmptyItemList);
    }
    let mut unknown_items = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (i, item) in items.iter().enumerate() {
        let (mass, known) = kb.mass_of(item);
        if !known {
            unknown_items.push(item.clone());
        }
        let better = match best {
            None => true,
            Some((_, m)) => {
                if want_max {
                    mass > m
                } else {
                    mass < m
                }
            }
        };
        if better {
            best = Some((i, mass));
        }
    }
    let (idx, _) = best.expect("non-empty items");
    Ok(LanguageAnswer {
        answer: items[idx].clone(),
        unknown_items,
    })
}

fn ray_aabb(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for k in 0..3 {
        if dir[k].abs() < 1e-12 {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let t0 = (lo[k] - origin[k]) / dir[k];
        let t1 = (hi[k] - origin[k]) / dir[k];
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
    }
    if t_enter > t_exit || t_exit < 0.0 {
        return None;
    }
    Some((t_enter.max(0.0), t_exit))
}

fn camera_ray(world: &World, cam: &CameraModel) -> ([f64; 3], [f64; 3]) {
    let frame = cam.frame(&world.robot.pose);
    (frame.origin, [frame.fwd.0, frame.fwd.1, 0.0])
}

/// Distance along the optical axis to the nearest object surface.
pub fn distance_probe(world: &World, cam: &CameraModel) -> Result<f64, SceneError> {
    let (origin, dir) = camera_ray(world, cam);
    world
        .objects
        .iter()
        .filter_map(|obj| ray_aabb(origin, dir, obj.lo(), obj.hi()).map(|(t, _)| t))
        .min_by(|a, b| a.partial_cmp(b).expect("finite distance"))
        .ok_or(SceneError::NoReading)
}

/// Distance along the optical axis to one specific object, if the ray hits it.
pub fn ray_distance_to_object(world: &World, cam: &CameraModel, id: &str) -> Option<f64> {
    let (origin, dir) = camera_ray(world, cam);
    let obj = world.objects.iter().find(|o| o.id == id)?;
    ray_aabb(origin, dir, obj.lo(), obj.hi()).map(|(t, _)| t)
}

/// Force reading for the held object: exact mass plus optional Gaussian
/// sensor noise (clamped at zero).
pub fn weight_probe(
    world: &World,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, SceneError> {
    let id = world.robot.holding.as_ref().ok_or(SceneError::NotHolding)?;
    let mass = world.object(id)?.mass;
    if sigma > 0.0 {
        Ok((mass + gaussian(rng, sigma)).max(0.0))
    } else {
        Ok(mass)
    }
}

/// World-frame velocity command for the holonomic base.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepFlags {
    /// A velocity component exceeded the robot's limits and was clamped.
    pub velocity_clamped: bool,
    /// Translation stopped early at an object surface.
    pub contact_clamped: bool,
}

// Earliest parameter t in [0, 1] at which the 2D segment p0 -> p1 enters the
// rectangle [lo, hi], if it does.
fn segment_rect_entry(p0: (f64, f64), p1: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> Option<f64> {
    let d = (p1.0 - p0.0, p1.1 - p0.1);
    let mut t_enter: f64 = 0.0;
    let mut t_exit: f64 = 1.0;
    for (o, d, lo, hi) in [(p0.0, d.0, lo.0, hi.0), (p0.1, d.1, lo.1, hi.1)] {
        if d.abs() < 1e-12 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let t0 = (lo - o) / d;
        let t1 = (hi - o) / d;
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
    }
    (t_enter <= t_exit).then_some(t_enter)
}

/// Advance the world one step: clamp the command to the robot's velocity
/// limits, integrate the pose (`x += vx dt`, `y += vy dt`,
/// `theta += omega dt`), stop translation at object surfaces, and carry any
/// held object along at the gripper.
pub fn step(world: &mut World, cmd: VelocityCommand, dt: f64) -> StepFlags {
    let mut flags = StepFlags::default();
    let limits = world.robot.limits;
    let clamp = |v: f64, lim: f64, flag: &mut bool| {
        if v.abs() > lim {
            *flag = true;
            v.clamp(-lim, lim)
        } else {
            v
        }
    };
    let vx = clamp(cmd.vx, limits.max_speed, &mut flags.velocity_clamped);
    let vy = clamp(cmd.vy, limits.max_speed, &mut flags.velocity_clamped);
    let omega = clamp(cmd.omega, limits.max_yaw_rate, &mut flags.velocity_clamped);

    let p0 = (world.robot.pose.x, world.robot.pose.y);
    let mut p1 = (p0.0 + vx * dt, p0.1 + vy * dt);
    if p1 != p0 {
        let held = world.robot.holding.clone();
        let mut t_min = 1.0_f64;
        for obj in &world.objects {
            if Some(&obj.id) == held.as_ref() {
                continue;
            }
            // Only bodies tall enough to meet the robot block it; mats and
            // other sub-clearance slabs are driven over.
            let (lo, hi) = (obj.lo(), obj.hi());
            if hi[2] <= GROUND_CLEARANCE || lo[2] >= ROBOT_HEIGHT {
                continue;
            }
            if let Some(t) = segment_rect_entry(p0, p1, (lo[0], lo[1]), (hi[0], hi[1])) {
                t_min = t_min.min(t);
            }
        }
        if t_min < 1.0 {
            flags.contact_clamped = true;
            let t = (t_min - 1e-9).max(0.0);
            p1 = (p0.0 + (p1.0 - p0.0) * t, p0.1 + (p1.1 - p0.1) * t);
        }
    }
    world.robot.pose.x = p1.0;
    world.robot.pose.y = p1.1;
    world.robot.pose.theta += omega * dt;

    if let Some(id) = world.robot.holding.clone() {
        let (gx, gy) = world.robot.gripper_point();
        if let Ok(obj) = world.object_mut(&id) {
            obj.center[0] = gx;
            obj.center[1] = gy;
            obj.center[2] = GRIP_LIFT + obj.extent[2];
        }
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cube(id: &str, name: &str, center: [f64; 3], half: f64, mass: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            name: name.into(),
            center,
            extent: [half, half, half],
            mass,
            graspable: true,
        }
    }

    // Camera at the origin looking along +y with no mount offsets: the
    // textbook configuration used by the projection examples.
    fn bare_camera(focal: f64, w: f64, h: f64) -> (Robot, CameraModel) {
        let robot = Robot::new(Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 0.25);
        let cam = CameraModel::new(
            focal,
            w,
            h,
            CameraMount {
                forward: 0.0,
                lateral: 0.0,
                height: 0.0,
                yaw: 0.0,
            },
        )
        .unwrap();
        (robot, cam)
    }

    fn world_with(objects: Vec<SceneObject>) -> (World, CameraModel) {
        let (robot, cam) = bare_camera(100.0, 200.0, 200.0);
        (World::new(objects, robot, 7, 0.1).unwrap(), cam)
    }

    #[test]
    fn cube_ahead_projects_to_centered_square() {
        // Near face 2 m ahead, half-width 0.5 m, focal 100: the near-face
        // corners land exactly 25 px from the image center.
        let (world, cam) = world_with(vec![cube("c", "cube", [0.0, 2.5, 0.0], 0.5, 1.0)]);
        let ps = project(&world, &cam, 0);
        assert_eq!(ps.len(), 1);
        let b = ps[0].bbox;
        assert!((b.x_min - 75.0).abs() < 1e-9, "x_min {}", b.x_min);
        assert!((b.y_min - 75.0).abs() < 1e-9);
        assert!((b.x_max - 125.0).abs() < 1e-9);
        assert!((b.y_max - 125.0).abs() < 1e-9);
        assert_eq!(ps[0].bbox.centroid(), (100.0, 100.0));
        assert_eq!(ps[0].confidence, 1.0);
        assert_eq!(ps[0].object_id.as_deref(), Some("c"));
    }

    #[test]
    fn objects_behind_camera_are_omitted() {
        let (world, cam) = world_with(vec![
            cube("behind", "cube", [0.0, -2.0, 0.0], 0.5, 1.0),
            cube("ahead", "cube", [0.0, 2.5, 0.0], 0.5, 1.0),
        ]);
        let ps = project(&world, &cam, 0);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].object_id.as_deref(), Some("ahead"));
    }

    #[test]
    fn projections_stay_inside_frame() {
        // Way off to the right: the raw hull exceeds the frame, the clipped
        // hull must not.
        let (world, cam) = world_with(vec![cube("c", "cube", [2.4, 2.5, 0.0], 0.5, 1.0)]);
        let ps = project(&world, &cam, 0);
        assert_eq!(ps.len(), 1);
        assert!(ps[0].bbox.x_max <= 200.0);
        // Fully outside the frame: omitted.
        let (world, cam) = world_with(vec![cube("c", "cube", [9.0, 2.5, 0.0], 0.5, 1.0)]);
        assert!(project(&world, &cam, 0).is_empty());
    }

    #[test]
    fn zero_noise_find_returns_ground_truth() {
        let (world, cam) = world_with(vec![
            cube("m1", "mug", [-1.0, 3.0, 0.0], 0.2, 0.3),
            cube("m2", "mug", [0.0, 3.0, 0.0], 0.2, 0.3),
            cube("m3", "mug", [1.0, 3.0, 0.0], 0.2, 0.3),
            cube("b", "book", [0.5, 2.0, 0.0], 0.2, 0.4),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let found = oracle_find(&world, &cam, "mug", &NoiseProfile::zero(), &mut rng, 0);
        assert_eq!(found.len(), 3);
        assert!(found.iter().all(|p| p.label == "mug"));
        let ground = project(&world, &cam, 0);
        for p in &found {
            assert!(ground.iter().any(|g| g.bbox == p.bbox && g.object_id == p.object_id));
        }
        assert!(oracle_find(&world, &cam, "umbrella", &NoiseProfile::zero(), &mut rng, 0).is_empty());
    }

    #[test]
    fn find_matches_substrings_both_ways() {
        let (world, cam) = world_with(vec![cube("m", "coffee mug", [0.0, 3.0, 0.0], 0.2, 0.3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = NoiseProfile::zero();
        assert_eq!(oracle_find(&world, &cam, "mug", &z, &mut rng, 0).len(), 1);
        assert_eq!(
            oracle_find(&world, &cam, "the coffee mug on the left", &z, &mut rng, 0).len(),
            1
        );
        assert!(oracle_find(&world, &cam, "spoon", &z, &mut rng, 0).is_empty());
    }

    #[test]
    fn miss_rate_one_drops_everything() {
        let (world, cam) = world_with(vec![cube("m", "mug", [0.0, 3.0, 0.0], 0.2, 0.3)]);
        let noise = NoiseProfile {
            miss_rate: 1.0,
            ..NoiseProfile::zero()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(oracle_find(&world, &cam, "mug", &noise, &mut rng, 0).is_empty());
    }

    #[test]
    fn merge_rate_one_returns_joint_hull() {
        let (world, cam) = world_with(vec![
            cube("c1", "paper clip", [-1.0, 3.0, 0.0], 0.1, 0.01),
            cube("c2", "paper clip", [-0.3, 3.0, 0.0], 0.1, 0.01),
            cube("c3", "paper clip", [0.4, 3.0, 0.0], 0.1, 0.01),
            cube("c4", "paper clip", [1.1, 3.0, 0.0], 0.1, 0.01),
        ]);
        let noise = NoiseProfile {
            merge_rate: 1.0,
            ..NoiseProfile::zero()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ground = project(&world, &cam, 0);
        let merged = oracle_find(&world, &cam, "paper clip", &noise, &mut rng, 0);
        assert_eq!(merged.len(), 1);
        for g in &ground {
            assert!(merged[0].bbox.iou(&g.bbox) > 0.0);
            assert!(merged[0].bbox.x_min <= g.bbox.x_min && merged[0].bbox.x_max >= g.bbox.x_max);
        }
    }

    #[test]
    fn jitter_keeps_boxes_valid_and_in_frame() {
        let (world, cam) = world_with(vec![cube("m", "mug", [2.3, 2.5, 0.0], 0.5, 0.3)]);
        let noise = NoiseProfile {
            jitter_sigma: 25.0,
            ..NoiseProfile::zero()
        };
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in oracle_find(&world, &cam, "mug", &noise, &mut rng, 0) {
                assert!(p.bbox.x_min < p.bbox.x_max && p.bbox.y_min < p.bbox.y_max);
                assert!(p.bbox.x_min >= 0.0 && p.bbox.x_max <= 200.0);
                assert!(p.bbox.y_min >= 0.0 && p.bbox.y_max <= 200.0);
            }
        }
    }

    #[test]
    fn mislabel_substitutes_another_object() {
        let (world, cam) = world_with(vec![
            cube("m", "mug", [-0.8, 3.0, 0.0], 0.2, 0.3),
            cube("b", "book", [0.8, 3.0, 0.0], 0.2, 0.4),
        ]);
        let noise = NoiseProfile {
            mislabel_rate: 1.0,
            ..NoiseProfile::zero()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let found = oracle_find(&world, &cam, "mug", &noise, &mut rng, 0);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].label, "mug");
        assert_eq!(found[0].object_id.as_deref(), Some("b"));
    }

    #[test]
    fn list_items_reads_left_to_right() {
        let (world, cam) = world_with(vec![
            cube("b", "book", [1.0, 3.0, 0.0], 0.2, 0.4),
            cube("m", "mug", [-1.0, 3.0, 0.0], 0.2, 0.3),
            cube("s", "spoon", [0.0, 3.0, 0.0], 0.1, 0.05),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let listing = oracle_list_items(&world, &cam, &NoiseProfile::zero(), &mut rng, 0);
        assert_eq!(listing, "mug, spoon, book");
    }

    #[test]
    fn name_of_patch_uses_best_overlap() {
        let (world, cam) = world_with(vec![
            cube("m", "mug", [-1.0, 3.0, 0.0], 0.2, 0.3),
            cube("b", "book", [1.0, 3.0, 0.0], 0.2, 0.4),
        ]);
        let ground = project(&world, &cam, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let name = oracle_name_of_patch(&world, &cam, &ground[1], &NoiseProfile::zero(), &mut rng, 1);
        assert_eq!(name, "book");
        // A patch overlapping nothing is unidentifiable.
        let stray = ImagePatch::new(
            BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap(),
            "x",
            1.0,
            1,
            None,
        )
        .unwrap();
        assert_eq!(
            oracle_name_of_patch(&world, &cam, &stray, &NoiseProfile::zero(), &mut rng, 1),
            UNKNOWN_NAME
        );
    }

    #[test]
    fn language_query_picks_extremes_from_table() {
        let kb = KnowledgeBase::bundled();
        let q = compose_items_question(HEAVIEST_QUESTION, "feather, dog, car");
        let ans = oracle_language_query(&q, &kb).unwrap();
        assert_eq!(ans.answer, "car");
        assert!(ans.unknown_items.is_empty());
        let q = compose_items_question(LIGHTEST_QUESTION, "feather, dog, car");
        assert_eq!(oracle_language_query(&q, &kb).unwrap().answer, "feather");
    }

    #[test]
    fn language_query_reports_unknown_items() {
        let kb = KnowledgeBase::bundled();
        let q = compose_items_question(HEAVIEST_QUESTION, "gadget, dog");
        let ans = oracle_language_query(&q, &kb).unwrap();
        assert_eq!(ans.answer, "dog");
        assert_eq!(ans.unknown_items, vec!["gadget".to_owned()]);
    }

    #[test]
    fn language_query_rejects_garbage() {
        let kb = KnowledgeBase::bundled();
        assert!(matches!(
            oracle_language_query("make me coffee", &kb),
            Err(SceneError::MalformedQuestion(_))
        ));
        let q = compose_items_question(HEAVIEST_QUESTION, "  ");
        assert!(matches!(
            oracle_language_query(&q, &kb),
            Err(SceneError::EmptyItemList)
        ));
    }

    #[test]
    fn distance_probe_reads_nearest_face() {
        // Face 2.0 m dead ahead.
        let (world, cam) = world_with(vec![cube("c", "cube", [0.0, 2.5, 0.0], 0.5, 1.0)]);
        assert!((distance_probe(&world, &cam).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_probe_dead_center_matches_euclidean() {
        let (robot, cam) = bare_camera(100.0, 200.0, 200.0);
        // Center the object exactly on the optical axis (same height as the
        // camera): the probe must equal the camera-to-surface distance.
        let world = World::new(
            vec![cube("c", "cube", [0.0, 1.5 + 0.2, 0.0], 0.2, 1.0)],
            robot,
            7,
            0.1,
        )
        .unwrap();
        let d = distance_probe(&world, &cam).unwrap();
        assert!((d - 1.5).abs() < 1e-9);
    }

    #[test]
    fn distance_probe_misses_offset_object_but_grazes_neighbor() {
        let (world, cam) = world_with(vec![
            cube("offset", "cube", [1.5, 2.0, 0.0], 0.5, 1.0),
            cube("neighbor", "cube", [0.2, 4.0, 0.0], 0.5, 1.0),
        ]);
        // The ray along +y misses the offset cube (x in [1.0, 2.0]) and
        // enters the neighbor (x in [-0.3, 0.7]) at y = 3.5.
        assert!((distance_probe(&world, &cam).unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(ray_distance_to_object(&world, &cam, "offset"), None);
    }

    #[test]
    fn distance_probe_with_empty_view_is_no_reading() {
        let (robot, cam) = bare_camera(100.0, 200.0, 200.0);
        let world = World::new(vec![], robot, 7, 0.1).unwrap();
        assert_eq!(distance_probe(&world, &cam), Err(SceneError::NoReading));
    }

    #[test]
    fn weight_probe_requires_holding() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let mut world = World::new(
            vec![cube("c", "cube", [0.0, 2.0, 0.0], 0.2, 1.7)],
            robot,
            7,
            0.1,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            weight_probe(&world, 0.0, &mut rng),
            Err(SceneError::NotHolding)
        );
        world.robot.holding = Some("c".into());
        assert_eq!(weight_probe(&world, 0.0, &mut rng).unwrap(), 1.7);
    }

    #[test]
    fn weight_probe_noise_stays_within_three_sigma() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let mut world = World::new(
            vec![cube("c", "cube", [0.0, 2.0, 0.0], 0.2, 5.0)],
            robot,
            7,
            0.1,
        )
        .unwrap();
        world.robot.holding = Some("c".into());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sigma = 0.1;
        let within = (0..10_000)
            .filter(|_| {
                let r = weight_probe(&world, sigma, &mut rng).unwrap();
                (r - 5.0).abs() <= 3.0 * sigma
            })
            .count();
        // 99.7% of draws in expectation; the seed is fixed so this is exact.
        assert!(within >= 9930, "{within} of 10000 within 3 sigma");
    }

    #[test]
    fn step_integrates_and_clamps_velocity() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let mut world = World::new(vec![], robot, 7, 0.1).unwrap();
        let flags = step(
            &mut world,
            VelocityCommand {
                vx: 0.3,
                vy: -0.2,
                omega: 0.5,
            },
            0.1,
        );
        assert!(!flags.velocity_clamped && !flags.contact_clamped);
        assert!((world.robot.pose.x - 0.03).abs() < 1e-12);
        assert!((world.robot.pose.y + 0.02).abs() < 1e-12);
        assert!((world.robot.pose.theta - (std::f64::consts::FRAC_PI_2 + 0.05)).abs() < 1e-12);

        let flags = step(
            &mut world,
            VelocityCommand {
                vx: 9.0,
                vy: 0.0,
                omega: 0.0,
            },
            0.1,
        );
        assert!(flags.velocity_clamped);
        // Clamped to max_speed 0.5.
        assert!((world.robot.pose.x - 0.08).abs() < 1e-12);
    }

    #[test]
    fn step_stops_at_object_surfaces() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let mut world = World::new(
            vec![cube("wall", "crate", [0.0, 1.0, 0.1], 0.1, 5.0)],
            robot,
            7,
            0.1,
        )
        .unwrap();
        // Drive straight at the crate face at y = 0.9 for many steps.
        let mut contact = false;
        for _ in 0..100 {
            let flags = step(
                &mut world,
                VelocityCommand {
                    vx: 0.0,
                    vy: 0.4,
                    omega: 0.0,
                },
                0.1,
            );
            contact |= flags.contact_clamped;
        }
        assert!(contact);
        assert!(world.robot.pose.y <= 0.9 + 1e-9);
        assert!(world.robot.pose.y > 0.85);
    }

    #[test]
    fn step_ignores_sub_clearance_slabs() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let mat = SceneObject {
            id: "mat".into(),
            name: "mat".into(),
            center: [0.0, 1.0, 0.005],
            extent: [0.5, 0.5, 0.005],
            mass: 0.2,
            graspable: false,
        };
        let mut world = World::new(vec![mat], robot, 7, 0.1).unwrap();
        for _ in 0..50 {
            let flags = step(
                &mut world,
                VelocityCommand {
                    vx: 0.0,
                    vy: 0.4,
                    omega: 0.0,
                },
                0.1,
            );
            assert!(!flags.contact_clamped);
        }
        assert!(world.robot.pose.y > 1.5);
    }

    #[test]
    fn held_object_follows_the_gripper() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let mut world = World::new(
            vec![cube("c", "cube", [0.0, 0.25, 0.05], 0.05, 0.4)],
            robot,
            7,
            0.1,
        )
        .unwrap();
        world.robot.holding = Some("c".into());
        step(
            &mut world,
            VelocityCommand {
                vx: 0.2,
                vy: 0.0,
                omega: 0.0,
            },
            0.1,
        );
        let (gx, gy) = world.robot.gripper_point();
        let obj = world.object("c").unwrap();
        assert!((obj.center[0] - gx).abs() < 1e-12);
        assert!((obj.center[1] - gy).abs() < 1e-12);
        assert_eq!(obj.center[2], GRIP_LIFT + 0.05);
    }

    #[test]
    fn determinism_identical_runs_bit_identical() {
        let build = || {
            let (robot, cam) = bare_camera(100.0, 200.0, 200.0);
            let world = World::new(
                vec![
                    cube("m", "mug", [-0.5, 3.0, 0.0], 0.2, 0.3),
                    cube("b", "book", [0.7, 2.5, 0.0], 0.2, 0.4),
                ],
                robot,
                42,
                0.1,
            )
            .unwrap();
            (world, cam)
        };
        let run = || {
            let (mut world, cam) = build();
            let mut rng = world.rng();
            let noise = NoiseProfile::calibrated();
            let mut log = Vec::new();
            let dt = world.time_step;
            for i in 0..20 {
                let found = oracle_find(&world, &cam, "mug", &noise, &mut rng, i);
                log.push(serde_json::to_string(&found).unwrap());
                step(
                    &mut world,
                    VelocityCommand {
                        vx: 0.05,
                        vy: 0.1,
                        omega: 0.01,
                    },
                    dt,
                );
            }
            (serde_json::to_string(&world).unwrap(), log)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn world_rejects_interpenetration_and_duplicates() {
        let (robot, _cam) = bare_camera(100.0, 200.0, 200.0);
        let err = World::new(
            vec![
                cube("a", "mug", [0.0, 2.0, 0.0], 0.3, 0.3),
                cube("b", "mug", [0.2, 2.0, 0.0], 0.3, 0.3),
            ],
            robot.clone(),
            7,
            0.1,
        );
        assert!(matches!(err, Err(SceneError::InvalidScene(_))));
        let err = World::new(
            vec![
                cube("a", "mug", [0.0, 2.0, 0.0], 0.1, 0.3),
                cube("a", "mug", [1.0, 2.0, 0.0], 0.1, 0.3),
            ],
            robot.clone(),
            7,
            0.1,
        );
        assert!(matches!(err, Err(SceneError::InvalidScene(_))));
        // Touching faces are fine.
        assert!(World::new(
            vec![
                cube("a", "mug", [0.0, 2.0, 0.0], 0.1, 0.3),
                cube("b", "mug", [0.2, 2.0, 0.0], 0.1, 0.3),
            ],
            robot,
            7,
            0.1,
        )
        .is_ok());
    }

    #[test]
    fn scene_file_round_trips() {
        let scene = SceneFile {
            seed: 5,
            time_step: 0.1,
            camera: CameraModel::standard(),
            objects: vec![cube("m", "mug", [0.0, 2.0, 0.05], 0.05, 0.31)],
            robot: RobotInit {
                pose: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            },
        };
        let json = scene.to_json_string();
        let back = SceneFile::from_json_str(&json).unwrap();
        assert_eq!(scene, back);
        let (world, cam) = back.build(0.25).unwrap();
        assert_eq!(world.robot.standoff, 0.25);
        assert_eq!(cam.focal, 160.0);
    }
}
