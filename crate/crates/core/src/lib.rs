//! Planning, trajectory generation, and validation for multi-arm
//! Cartesian fruit harvesters.
//!
//! The crate is organized as a pipeline over a shared world model
//! ([`model`]):
//!
//! 1. [`sequence`] partitions a fruit map into zones and builds candidate
//!    pick orders for every arm.
//! 2. [`schedule`] binary-searches the fastest feasible vehicle speed and
//!    times every pick.
//! 3. [`trajectory`] turns a schedule into discrete-time, minimum-effort
//!    arm trajectories via linear programming ([`lp`]).
//! 4. [`validate`] re-derives schedules by event replay and checks
//!    trajectories against every kinematic and ordering constraint.
//!
//! [`scenario`] generates reproducible synthetic fruit maps for
//! benchmarking, and [`motion`] holds the shared point-to-point timing
//! primitive.

pub mod lp;
pub mod model;
pub mod motion;
pub mod scenario;
pub mod schedule;
pub mod sequence;
pub mod trajectory;
pub mod validate;

pub use model::{
    ArmId, Fruit, FruitId, FruitMap, HarvesterConfig, InitialArmState, InitialVelocity,
    KinematicLimits, ModelError, PickingDurationMode,
};
pub use motion::{picking_duration, trapezoid_time};
pub use scenario::{derive_replication_seed, generate_uniform, ScenarioMeta, ScenarioSpec};
pub use schedule::{plan_velocity_and_schedule, PlanResult, ScheduleError};
pub use sequence::{generate_candidates, HarvesterSequence, Strategy};
pub use validate::{
    brute_force_makespan, check_trajectories, fruits_per_second, replay_schedule, ReplayReport,
    ValidationReport,
};
