//! Command-line front end: matrix file I/O, certificates, instance
//! generation and the subcommand implementations.

pub mod certificate;
pub mod commands;
pub mod generate;
pub mod matfile;
