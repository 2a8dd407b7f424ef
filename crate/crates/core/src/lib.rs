pub mod confidence;
pub mod trace_io;
pub mod voting;
pub mod calibration;
pub mod stats;
pub mod seed;
pub mod theory;
pub mod harness;
