pub mod codec;
pub mod conditioning;
pub mod config;
pub mod mushra;
pub mod neural;
pub mod sampler;
pub mod service;
pub mod trainer;
pub mod wavenet;
