//! Check suites shared by the focused test targets and the acceptance run.
#![allow(dead_code)]

pub mod gradients;
pub mod oracles;
pub mod pseudo_label;
pub mod soft_mix;
