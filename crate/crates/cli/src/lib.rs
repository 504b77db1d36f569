//! Library surface of the `collider` command-line tool: file formats and
//! the pipeline steps behind each subcommand. The binary in `main.rs` is a
//! thin argument-parsing layer over this.

pub mod io;
pub mod pipeline;
