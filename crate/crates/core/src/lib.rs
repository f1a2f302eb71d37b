//! IMU-supervised attention masks for feature-based monocular visual
//! odometry, plus the evaluation harness that measures their effect.

pub mod error;
pub mod data;
pub mod geometry;
pub mod harness;
pub mod imu;
pub mod learn;
pub mod sfm;
pub mod vision;

pub use error::{Error, Result};
