//! Reference implementations shared by the integration tests. Nothing here
//! calls into the library's own numerical paths.
#![allow(dead_code)]

pub mod gradcheck;
pub mod grid;
pub mod steer;
