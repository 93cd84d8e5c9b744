//! On-disk formats read and written by the command-line tool.

pub mod json;
pub mod trajectory;
