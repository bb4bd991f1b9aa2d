//! Deterministic multi-rate simulation of the closed loop.

mod analysis;
mod config;
mod run;
mod vehicle;

pub use analysis::{
    descent_fraction, lyapunov, sweep, velocity_field, write_field_csv, write_sweep_csv, FieldCell, SweepCell,
};
pub use config::{DepthConfig, FieldGrid, PersonConfig, ScenarioConfig, StartPose, SurfaceConfig, SweepGrid};
pub use run::{
    run, run_with_provider, true_relative, CommandRecord, EventRecord, ModeChange, RunLog, SensorCounts, StepSample,
};
pub use vehicle::{integrate_vehicle, BodyVelocity, VehicleModel};
