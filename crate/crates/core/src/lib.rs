pub mod canon;
pub mod controller;
pub mod error;
pub mod linalg;
pub mod packing;
pub mod ring;
pub mod rlwe;
pub mod simbench;
pub mod trace;

pub use error::{Error, Result};
