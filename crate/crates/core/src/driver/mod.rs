//! Configuration, file formats, orchestration and benchmarks.

pub mod toy;
pub mod solver;
pub mod device_file;
pub mod config;
pub mod run;
pub mod output;
pub mod bench;
pub mod oracle;
