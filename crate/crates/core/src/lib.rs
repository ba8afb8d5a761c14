//! Headless performance machinery for a script-driven game engine.
//!
//! * [`framegraph`] compiles declarative render passes into a culled,
//!   ordered, barrier-annotated schedule with transient aliasing.
//! * [`shaderprep`] turns annotated shader sources into per-target variants.
//! * [`soastore`] is a structure-of-arrays store addressed by generational
//!   handles, with batch gather/scatter.
//! * [`kerneldsl`] parses counted-loop kernels, decides whether they can run
//!   in parallel, and executes them serially or across worker threads.
//! * [`cmdring`] is a wait-free SPSC ring carrying batch commands between
//!   threads.
//! * [`simloop`] drives everything from a fixed-timestep loop and hosts the
//!   compute benchmark.

pub mod cmdring;
pub mod framegraph;
pub mod kerneldsl;
pub mod shaderprep;
pub mod simloop;
pub mod soastore;
