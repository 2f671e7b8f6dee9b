#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod curation;
pub mod dataset;
pub mod hand_model;
pub mod kinematics;
pub mod model;
pub mod recorder;
pub mod retarget;
pub mod sampler;
pub mod sim;
