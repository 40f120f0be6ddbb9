//! Robot dynamics, motion primitives and speed-profile planning.

mod model;
mod planner;
mod primitive;
mod profile;

pub use model::{DriveKind, ModelError, RobotModel};
pub use planner::{chain_directions, min_traverse_time, plan_speed_profile, PlanError};
pub use primitive::{build_primitives, MotionPrimitive, PrimitiveKind, PrimitiveSet, SpeedPhases};
pub use profile::{
    KinematicState, ProfileSegment, ReservedInterval, SegmentKind, SpeedProfile,
    OPEN_BOUND_DELTA, TIME_TOL,
};
pub(crate) use profile::infinite_f64;
