pub mod certify;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod harness;
pub mod matkernel;
pub mod netsim;
pub mod rng;
pub mod sysmodel;
pub mod triggers;

pub use error::{Error, Result};
