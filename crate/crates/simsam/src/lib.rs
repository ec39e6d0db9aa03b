//! File formats, datasets, batch evaluation, a command-line front end and an
//! HTTP service around [`simsam_core`].

#![forbid(unsafe_code)]

pub mod backend;
pub mod clock;
pub mod container;
pub mod dataset;
mod error;
pub mod harness;
pub mod io;
#[cfg(feature = "neural")]
pub mod neural;
pub mod scene;
pub mod segment;
pub mod service;

pub use backend::{Backend, BackendConfig};
pub use clock::SystemClock;
pub use error::{Error, Result};
pub use simsam_core as core;
