pub mod agent;
pub mod buffers;
pub mod envs;
pub mod nn;
pub mod oracle;
pub mod analysis;
pub mod harness;
pub mod live;
