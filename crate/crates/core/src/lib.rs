pub mod abp;
pub mod certificate;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod density;
pub mod error;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod isoperimetric;
pub mod knothe;
pub mod transport;
pub mod numerics;
pub mod surface;

pub use error::{Error, Result};
