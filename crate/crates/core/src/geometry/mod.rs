//! Shared planar math: poses, splines, trajectory distance, circle fitting.

pub mod circle;
pub mod frechet;
pub mod pose;
pub mod spline;

pub use circle::{fit_circle, CircleFit};
pub use frechet::{discrete_frechet, discrete_frechet_points};
pub use pose::{compose, normalize_angle, Pose, Trajectory};
pub use spline::{catmull_rom_eval, Spline};
