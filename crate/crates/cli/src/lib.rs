//! Simulation harness for the vesica monitor model: scenario configuration,
//! the phantom→frames→estimate runner, session recording/replay, and report
//! generation. The `vesica` binary is a thin CLI over these modules.

pub mod report;
pub mod runner;
pub mod scenario;
pub mod session;
