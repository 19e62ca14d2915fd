//! Checks shared by the unit-level test targets and the acceptance runner.
#![allow(dead_code)]

pub mod concepts;
pub mod gradcheck;
pub mod kl_mc;
