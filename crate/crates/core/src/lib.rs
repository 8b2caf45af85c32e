pub mod dataio;
pub mod numerics;
pub mod semantics;
pub mod model;
pub mod multitask;
pub mod trainer;
pub mod metrics;
pub mod cli;
