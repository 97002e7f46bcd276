//! The primitive API surface: one dispatch point through which programs
//! observe and act on a world. [`Rig`] is the in-process implementation;
//! the TCP bridge client implements the same trait, which is what makes a
//! bridged interpreter indistinguishable from a local one.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{self, ControlError, ControllerConfig, Drive, FrameStore};
use crate::geometry::ImagePatch;
use crate::kb::KnowledgeBase;
use crate::scene::{
    degrade_find, degrade_name, distance_probe, oracle_language_query, weight_probe, CameraModel,
    LanguageAnswer, NoiseProfile, SceneError, SceneFile, World, LIST_ITEMS_QUESTION,
    WHAT_IS_THIS_QUESTION,
};

pub use crate::control::ServoReport;

/// One call into the primitive API. Serializes as
/// `{"primitive": "...", "args": {...}}`, which is also the wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "primitive", content = "args", rename_all = "snake_case")]
pub enum HostCall {
    Find { label: String },
    Exists { label: String },
    VisualQuery { question: String, patch: Option<ImagePatch> },
    LanguageQuery { question: String },
    GoToObject { patch: ImagePatch },
    FocusOnPatch { patch: ImagePatch },
    MeasureDistance { patch: ImagePatch },
    PickUp { patch: ImagePatch },
    PutOn { patch: ImagePatch },
    MeasureWeight,
}

impl HostCall {
    pub fn primitive_name(&self) -> &'static str {
        match self {
            HostCall::Find { .. } => "find",
            HostCall::Exists { .. } => "exists",
            HostCall::VisualQuery { .. } => "visual_query",
            HostCall::LanguageQuery { .. } => "language_query",
            HostCall::GoToObject { .. } => "go_to_object",
            HostCall::FocusOnPatch { .. } => "focus_on_patch",
            HostCall::MeasureDistance { .. } => "measure_distance",
            HostCall::PickUp { .. } => "pick_up",
            HostCall::PutOn { .. } => "put_on",
            HostCall::MeasureWeight => "measure_weight",
        }
    }

    /// Robot actions mutate the world; perception calls do not.
    pub fn is_effectful(&self) -> bool {
        matches!(
            self,
            HostCall::GoToObject { .. }
                | HostCall::FocusOnPatch { .. }
                | HostCall::MeasureDistance { .. }
                | HostCall::PickUp { .. }
                | HostCall::PutOn { .. }
                | HostCall::MeasureWeight
        )
    }
}

/// What a primitive returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum HostValue {
    Patches(Vec<ImagePatch>),
    Bool(bool),
    Text(String),
    Language(LanguageAnswer),
    Servo(ServoReport),
    Number(f64),
    Unit,
}

/// A primitive failure with a stable machine-readable kind, so errors keep
/// their identity across the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostError {
    pub kind: String,
    pub message: String,
}

impl HostError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_owned(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for HostError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for HostError {}

fn scene_error_kind(e: &SceneError) -> &'static str {
    match e {
        SceneError::InvalidScene(_) => "InvalidScene",
        SceneError::UnknownObject(_) => "UnknownObject",
        SceneError::NoReading => "NoReading",
        SceneError::NotHolding => "NotHolding",
        SceneError::UnsupportedQuestion(_) => "UnsupportedQuestion",
        SceneError::MalformedQuestion(_) => "MalformedQuestion",
        SceneError::EmptyItemList => "EmptyItemList",
    }
}

fn control_error_kind(e: &ControlError) -> &'static str {
    match e {
        ControlError::TargetLost => "TargetLost",
        ControlError::UnknownFrame(_) => "UnknownFrame",
        ControlError::NotConverged(_) => "NotConverged",
        ControlError::AlreadyHolding(_) => "AlreadyHolding",
        ControlError::NotHolding => "NotHolding",
        ControlError::TooFar { .. } => "TooFar",
        ControlError::NotInFront(_) => "NotInFront",
        ControlError::NotGraspable(_) => "NotGraspable",
        ControlError::PlacementBlocked(_) => "PlacementBlocked",
        ControlError::Scene(inner) => scene_error_kind(inner),
    }
}

impl From<SceneError> for HostError {
    fn from(e: SceneError) -> Self {
        HostError::new(scene_error_kind(&e), e.to_string())
    }
}

impl From<ControlError> for HostError {
    fn from(e: ControlError) -> Self {
        HostError::new(control_error_kind(&e), e.to_string())
    }
}

/// Anything that can execute primitive calls: the in-process [`Rig`] or a
/// bridge client proxying to a remote one.
pub trait PrimitiveHost {
    fn call(&mut self, call: &HostCall) -> Result<HostValue, HostError>;
}

/// In-process host: a world, its camera, the controllers, the oracle
/// perception stack, and the per-episode frame and RNG state.
pub struct Rig {
    pub world: World,
    pub cam: CameraModel,
    pub cfg: ControllerConfig,
    pub noise: NoiseProfile,
    pub kb: KnowledgeBase,
    frames: FrameStore,
    rng: ChaCha8Rng,
}

impl Rig {
    pub fn new(
        scene: &SceneFile,
        cfg: ControllerConfig,
        noise: NoiseProfile,
        kb: KnowledgeBase,
    ) -> Result<Self, SceneError> {
        cfg.validate()?;
        noise.validate()?;
        let (world, cam) = scene.build(cfg.standoff)?;
        let rng = world.rng();
        Ok(Self {
            world,
            cam,
            cfg,
            noise,
            kb,
            frames: FrameStore::new(),
            rng,
        })
    }

    /// Camera frames captured so far in this episode.
    pub fn frames_taken(&self) -> u64 {
        self.frames.next_id()
    }

    /// Hash of the world state; used to verify that effect-free programs
    /// leave the world untouched.
    pub fn state_hash(&self) -> String {
        let json = serde_json::to_vec(&self.world).expect("world serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        format!("{:x}", hasher.finalize())
    }

    fn drive(&mut self) -> Drive<'_> {
        Drive {
            world: &mut self.world,
            cam: &self.cam,
            cfg: &self.cfg,
            frames: &mut self.frames,
        }
    }

    fn find(&mut self, label: &str) -> Vec<ImagePatch> {
        let (_, clean) = self.frames.observe(&self.world, &self.cam);
        degrade_find(&clean, &self.cam, label, &self.noise, &mut self.rng)
    }

    fn visual_query(
        &mut self,
        question: &str,
        patch: Option<&ImagePatch>,
    ) -> Result<String, HostError> {
        match patch {
            None if question.trim() == LIST_ITEMS_QUESTION => {
                let (_, clean) = self.frames.observe(&self.world, &self.cam);
                Ok(crate::scene::degrade_list(&clean, &self.noise, &mut self.rng))
            }
            Some(p) if question.trim() == WHAT_IS_THIS_QUESTION => {
                // Recognition happens against the patch's own frame: the
                // boxes it was seen among, with names looked up by the
                // stable object ids behind them.
                let ground = self
                    .frames
                    .ground_of(p.frame_id, &self.world)
                    .ok_or_else(|| {
                        HostError::new("UnknownFrame", format!("no frame {}", p.frame_id))
                    })?;
                Ok(degrade_name(&ground, p, &self.noise, &mut self.rng))
            }
            _ => Err(HostError::new(
                "UnsupportedQuestion",
                format!("visual oracle cannot answer {question:?}"),
            )),
        }
    }
}

impl PrimitiveHost for Rig {
    fn call(&mut self, call: &HostCall) -> Result<HostValue, HostError> {
        match call {
            HostCall::Find { label } => Ok(HostValue::Patches(self.find(label))),
            HostCall::Exists { label } => Ok(HostValue::Bool(!self.find(label).is_empty())),
            HostCall::VisualQuery { question, patch } => self
                .visual_query(question, patch.as_ref())
                .map(HostValue::Text),
            HostCall::LanguageQuery { question } => {
                let ans = oracle_language_query(question, &self.kb)?;
                Ok(HostValue::Language(ans))
            }
            HostCall::GoToObject { patch } => {
                let report = control::go_to_object(&mut self.drive(), patch)?;
                Ok(HostValue::Servo(report))
            }
            HostCall::FocusOnPatch { patch } => {
                let report = control::focus_on_patch(&mut self.drive(), patch)?;
                Ok(HostValue::Servo(report))
            }
            HostCall::MeasureDistance { patch } => {
                control::focus_on_patch(&mut self.drive(), patch)?;
                let reading = distance_probe(&self.world, &self.cam)?;
                Ok(HostValue::Number(reading))
            }
            HostCall::PickUp { patch } => {
                let id = control::pick_up(&mut self.drive(), patch)?;
                Ok(HostValue::Text(id))
            }
            HostCall::PutOn { patch } => {
                control::put_on(&mut self.drive(), patch)?;
                Ok(HostValue::Unit)
            }
            HostCall::MeasureWeight => {
                let kg = weight_probe(&self.world, self.cfg.weight_sigma, &mut self.rng)?;
                Ok(HostValue::Number(kg))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CameraMount, Pose, RobotInit, SceneObject};

    fn scene() -> SceneFile {
        let obj = |id: &str, name: &str, x: f64, y: f64, mass: f64| SceneObject {
            id: id.into(),
            name: name.into(),
            center: [x, y, 0.06],
            extent: [0.05, 0.05, 0.06],
            mass,
            graspable: true,
        };
        SceneFile {
            seed: 21,
            time_step: 0.1,
            camera: CameraModel {
                focal: 160.0,
                width: 320.0,
                height: 240.0,
                pose: CameraMount {
                    forward: 0.0,
                    lateral: 0.0,
                    height: 0.1,
                    yaw: 0.0,
                },
            },
            objects: vec![
                obj("f", "feather", -0.8, 3.0, 0.005),
                obj("d", "dog", 0.0, 3.0, 22.0),
                obj("c", "car", 0.8, 3.0, 1450.0),
            ],
            robot: RobotInit {
                pose: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            },
        }
    }

    fn rig() -> Rig {
        Rig::new(
            &scene(),
            ControllerConfig::default(),
            NoiseProfile::zero(),
            KnowledgeBase::bundled(),
        )
        .unwrap()
    }

    #[test]
    fn find_and_exists_share_the_detector() {
        let mut rig = rig();
        let HostValue::Patches(ps) = rig
            .call(&HostCall::Find {
                label: "dog".into(),
            })
            .unwrap()
        else {
            panic!("wrong value type")
        };
        assert_eq!(ps.len(), 1);
        assert_eq!(
            rig.call(&HostCall::Exists {
                label: "dog".into()
            })
            .unwrap(),
            HostValue::Bool(true)
        );
        assert_eq!(
            rig.call(&HostCall::Exists {
                label: "umbrella".into()
            })
            .unwrap(),
            HostValue::Bool(false)
        );
    }

    #[test]
    fn visual_query_lists_and_names() {
        let mut rig = rig();
        let listing = rig
            .call(&HostCall::VisualQuery {
                question: LIST_ITEMS_QUESTION.into(),
                patch: None,
            })
            .unwrap();
        assert_eq!(listing, HostValue::Text("feather, dog, car".into()));
        let HostValue::Patches(ps) = rig
            .call(&HostCall::Find {
                label: "car".into(),
            })
            .unwrap()
        else {
            panic!()
        };
        let name = rig
            .call(&HostCall::VisualQuery {
                question: WHAT_IS_THIS_QUESTION.into(),
                patch: Some(ps[0].clone()),
            })
            .unwrap();
        assert_eq!(name, HostValue::Text("car".into()));
    }

    #[test]
    fn free_form_visual_questions_are_rejected() {
        let mut rig = rig();
        let err = rig
            .call(&HostCall::VisualQuery {
                question: "is the dog heavier than the car?".into(),
                patch: None,
            })
            .unwrap_err();
        assert_eq!(err.kind, "UnsupportedQuestion");
    }

    #[test]
    fn language_query_carries_unknown_items() {
        let mut rig = rig();
        let q = crate::scene::compose_items_question(
            crate::scene::HEAVIEST_QUESTION,
            "feather, dog, car",
        );
        let HostValue::Language(ans) = rig
            .call(&HostCall::LanguageQuery { question: q })
            .unwrap()
        else {
            panic!()
        };
        assert_eq!(ans.answer, "car");
    }

    #[test]
    fn full_weight_measurement_flow() {
        let mut rig = rig();
        // Weight is gated on actually holding something.
        let err = rig.call(&HostCall::MeasureWeight).unwrap_err();
        assert_eq!(err.kind, "NotHolding");

        let HostValue::Patches(ps) = rig
            .call(&HostCall::Find {
                label: "dog".into(),
            })
            .unwrap()
        else {
            panic!()
        };
        let patch = ps[0].clone();
        let HostValue::Servo(report) = rig
            .call(&HostCall::GoToObject {
                patch: patch.clone(),
            })
            .unwrap()
        else {
            panic!()
        };
        assert!(report.converged);
        rig.call(&HostCall::PickUp {
            patch: patch.clone(),
        })
        .unwrap();
        let HostValue::Number(kg) = rig.call(&HostCall::MeasureWeight).unwrap() else {
            panic!()
        };
        assert_eq!(kg, 22.0);
    }

    #[test]
    fn measure_distance_focuses_first() {
        let mut rig = rig();
        let HostValue::Patches(ps) = rig
            .call(&HostCall::Find {
                label: "feather".into(),
            })
            .unwrap()
        else {
            panic!()
        };
        let HostValue::Number(d) = rig
            .call(&HostCall::MeasureDistance {
                patch: ps[0].clone(),
            })
            .unwrap()
        else {
            panic!()
        };
        // Feather face is 2.95 m ahead once centered; focus only strafes.
        assert!((d - 2.95).abs() < 0.02, "distance {d}");
    }

    #[test]
    fn perception_leaves_world_untouched() {
        let mut rig = rig();
        let before = rig.state_hash();
        rig.call(&HostCall::Find {
            label: "dog".into(),
        })
        .unwrap();
        rig.call(&HostCall::VisualQuery {
            question: LIST_ITEMS_QUESTION.into(),
            patch: None,
        })
        .unwrap();
        rig.call(&HostCall::LanguageQuery {
            question: crate::scene::compose_items_question(
                crate::scene::HEAVIEST_QUESTION,
                "dog, car",
            ),
        })
        .unwrap();
        assert_eq!(rig.state_hash(), before);
    }

    #[test]
    fn host_calls_serialize_with_primitive_names() {
        let call = HostCall::Find {
            label: "mug".into(),
        };
        let json = serde_json::to_value(&call).unwrap();
        assert_eq!(json["primitive"], "find");
        assert_eq!(json["args"]["label"], "mug");
        let back: HostCall = serde_json::from_value(json).unwrap();
        assert_eq!(back, call);
        let json = serde_json::to_value(HostCall::MeasureWeight).unwrap();
        assert_eq!(json["primitive"], "measure_weight");
    }

    #[test]
    fn host_errors_round_trip_with_kind() {
        let err: HostError = ControlError::NotHolding.into();
        assert_eq!(err.kind, "NotHolding");
        let json = serde_json::to_string(&err).unwrap();
        let back: HostError = serde_json::from_str(&json).unwrap();
        assert_eq!(back, err);
    }
}
