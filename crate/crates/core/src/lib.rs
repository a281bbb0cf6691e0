#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod displacement_est;
pub mod harness;
pub mod measurement;
pub mod phase_est;
pub mod phasespace;
pub mod quad;
pub mod specfun;
pub mod squeeze_est;
