pub mod geometry;
pub mod kinematics;
pub mod mapping;
pub mod retargeting;
pub mod session;
pub mod simulator;
