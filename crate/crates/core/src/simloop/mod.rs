//! Fixed-timestep frame loop and the wave-grid compute harness.

mod wave;

use thiserror::Error;

pub use wave::{
    bench_compute, grid_points, run_pure_compute, run_ring_pipeline, wave_height, ComputeConfig, ComputePath,
    FrameReport, RingPipelineReport, WaveParams, WaveSim, WAVE_KERNEL,
};

use crate::cmdring::RingError;
use crate::kerneldsl::{KernelError, RuntimeError};
use crate::soastore::StoreError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Ring(#[from] RingError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopConfig {
    /// Fixed simulation step in seconds.
    pub fixed_dt: f64,
    /// Catch-up steps allowed per frame before the backlog is dropped.
    pub max_steps: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            fixed_dt: 1.0 / 50.0,
            max_steps: 8,
        }
    }
}

impl LoopConfig {
    pub fn new(fixed_dt: f64, max_steps: u32) -> Result<Self, SimError> {
        if !(fixed_dt > 0.0 && fixed_dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "fixed_dt must be positive, got {fixed_dt}"
            )));
        }
        if max_steps == 0 {
            return Err(SimError::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(LoopConfig { fixed_dt, max_steps })
    }

    /// No catch-up clamp; every accumulated step runs.
    pub fn unclamped(fixed_dt: f64) -> Result<Self, SimError> {
        Self::new(fixed_dt, u32::MAX)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoopState {
    /// Unsimulated time in seconds; below `fixed_dt` after every frame.
    pub accumulator: f64,
    pub frames: u64,
    pub fixed_steps: u64,
    /// Steps discarded by the catch-up clamp.
    pub dropped_steps: u64,
}

/// Per-frame hooks, called in the order they are declared here. Fixed-step
/// hooks run once per fixed step; the rest once per frame.
pub trait FrameCallbacks {
    fn poll_input(&mut self) {}
    fn physics_step(&mut self, _fixed_dt: f64) {}
    fn fixed_update(&mut self, _fixed_dt: f64) {}
    fn update(&mut self, _dt: f64) {}
    /// Deferred-task tick, the slot a coroutine scheduler would occupy.
    fn tick_deferred(&mut self, _dt: f64) {}
    fn late_update(&mut self, _dt: f64) {}
    fn render(&mut self) {}
}

/// Callbacks that do nothing.
pub struct NoCallbacks;

impl FrameCallbacks for NoCallbacks {}

#[derive(Clone, Debug)]
pub struct FixedTimestep {
    config: LoopConfig,
    state: LoopState,
}

impl FixedTimestep {
    pub fn new(config: LoopConfig) -> Self {
        FixedTimestep {
            config,
            state: LoopState::default(),
        }
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn state(&self) -> &LoopState {
        &self.state
    }

    /// Advances one frame of `dt` seconds and returns the fixed steps run.
    /// Negative or non-finite `dt` counts as zero.
    pub fn step(&mut self, dt: f64, callbacks: &mut dyn FrameCallbacks) -> u32 {
        let dt = if dt.is_finite() { dt.max(0.0) } else { 0.0 };
        let fixed = self.config.fixed_dt;
        callbacks.poll_input();
        self.state.accumulator += dt;
        let mut steps = 0;
        while self.state.accumulator >= fixed && steps < self.config.max_steps {
            callbacks.physics_step(fixed);
            callbacks.fixed_update(fixed);
            self.state.accumulator -= fixed;
            steps += 1;
        }
        if self.state.accumulator >= fixed {
            let backlog = (self.state.accumulator / fixed).floor();
            self.state.accumulator -= backlog * fixed;
            self.state.dropped_steps += backlog as u64;
        }
        callbacks.update(dt);
        callbacks.tick_deferred(dt);
        callbacks.late_update(dt);
        callbacks.render();
        self.state.frames += 1;
        self.state.fixed_steps += u64::from(steps);
        steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Trace(Vec<&'static str>);

    impl FrameCallbacks for Trace {
        fn physics_step(&mut self, _: f64) {
            self.0.push("physics");
        }
        fn fixed_update(&mut self, _: f64) {
            self.0.push("fixed");
        }
        fn update(&mut self, _: f64) {
            self.0.push("update");
        }
        fn tick_deferred(&mut self, _: f64) {
            self.0.push("deferred");
        }
        fn late_update(&mut self, _: f64) {
            self.0.push("late");
        }
    }

    #[test]
    fn exact_multiple_runs_two_steps() {
        let mut lp = FixedTimestep::new(LoopConfig::default());
        let mut trace = Trace::default();
        assert_eq!(lp.step(1.0 / 25.0, &mut trace), 2);
        assert_eq!(lp.state().accumulator, 0.0);
        assert_eq!(
            trace.0,
            ["physics", "fixed", "physics", "fixed", "update", "deferred", "late"]
        );
    }

    #[test]
    fn zero_dt_still_updates_once() {
        let mut lp = FixedTimestep::new(LoopConfig::default());
        let mut trace = Trace::default();
        assert_eq!(lp.step(0.0, &mut trace), 0);
        assert_eq!(trace.0, ["update", "deferred", "late"]);
    }

    #[test]
    fn clamp_drops_the_backlog() {
        let mut lp = FixedTimestep::new(LoopConfig::new(0.1, 8).unwrap());
        assert_eq!(lp.step(2.05, &mut NoCallbacks), 8);
        assert_eq!(lp.state().dropped_steps, 12);
        assert!(lp.state().accumulator < 0.1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(LoopConfig::new(0.0, 1).is_err());
        assert!(LoopConfig::new(f64::NAN, 1).is_err());
        assert!(LoopConfig::new(0.02, 0).is_err());
    }
}
