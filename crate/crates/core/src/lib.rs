pub mod cli;
pub mod dse;
pub mod error;
pub mod fixture;
pub mod hw;
pub mod infer;
pub mod kv;
pub mod sim;
pub mod store;
pub mod wmd;

pub use error::{Error, Result};
