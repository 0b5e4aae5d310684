//! Swept-volume signed distance fields for rigid bodies moving along
//! polynomial trajectories, and a whole-body trajectory optimizer built on them.

pub mod geometry;
pub mod trajectory;
pub mod flatness;
pub mod sweep;
pub mod objective;
pub mod solver;
