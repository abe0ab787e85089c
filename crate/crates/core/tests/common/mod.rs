//! Fixtures shared by several test targets; each target uses a subset.
#![allow(dead_code)]

pub mod ops;
pub mod oracle;
