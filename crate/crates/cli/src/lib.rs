//! Configuration, basis files and the experiment harness behind the
//! `conproj` binary.

pub mod basis_io;
pub mod config;
pub mod harness;
pub mod output;
