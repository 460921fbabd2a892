//! Simulator and experiment harness for single-layer grasping and bagging
//! of deformable bags.

pub mod bagsim;
pub mod geom;
pub mod harness;
pub mod percept;
pub mod policy;
pub mod slip;
