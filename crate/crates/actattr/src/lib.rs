//! Perception-action query programs over a simulated tabletop robot.
//!
//! The crate provides, bottom to top: bounding-box algebra over image
//! patches ([`geometry`]), a deterministic 3D world with oracle perception
//! and a holonomic robot ([`scene`]), visual-servoing controllers and the
//! primitive API they implement ([`control`], [`rig`]), a small
//! line-oriented program language interpreted against those primitives
//! ([`lang`]), a JSON-lines TCP bridge exposing the same primitives to
//! remote planners ([`bridge`]), and the evaluation harness comparing
//! query-answering methods ([`eval`]).

pub mod bridge;
pub mod control;
pub mod eval;
pub mod geometry;
pub mod kb;
pub mod lang;
pub mod rig;
pub mod scene;

pub use bridge::{
    run_bridged_episode, serve, BridgeClient, BridgeClientConfig, BridgeError, BridgeMessage,
    EpisodeResult, LatencyStats, Planner, RigFactory, ServerConfig, ServerHandle,
    PROTOCOL_VERSION,
};
pub use control::{
    focus_on_patch, go_to_object, pick_up, put_on, ControlError, ControllerConfig, Drive,
    FrameStore, PidGains, PidState, ServoReport, Tracker,
};

pub use geometry::{
    cluster_rows, default_gap_threshold, select_middle, select_ordinal, select_superlative,
    signed_index, sort_patches, Axis, BoundingBox, Dim, Extreme, GeomError, ImagePatch, SortKey,
    SortOrder,
};
pub use kb::{KbError, KnowledgeBase};
pub use rig::{HostCall, HostError, HostValue, PrimitiveHost, Rig};
pub use scene::{
    compose_items_question, degrade_find, degrade_list, degrade_name, distance_probe, oracle_find,
    oracle_language_query, oracle_list_items, oracle_name_of_patch, oracle_vqa, project,
    ray_distance_to_object, step, weight_probe, CameraModel, CameraMount, LanguageAnswer,
    NoiseProfile, Pose, Robot, RobotInit, SceneError, SceneFile, SceneObject, SensorSuite,
    StepFlags, VelocityCommand, VelocityLimits, VqaQuestion, World, GRIP_LIFT, GROUND_CLEARANCE,
    HEAVIEST_QUESTION, LIGHTEST_QUESTION, LIST_ITEMS_QUESTION, NEAR_PLANE, ROBOT_HEIGHT,
    UNKNOWN_NAME, WHAT_IS_THIS_QUESTION,
};
