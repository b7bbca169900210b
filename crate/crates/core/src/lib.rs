//! Interactive frugal change detection.
//!
//! An oracle labels small displays of patch pairs; after every round the
//! labeled set is augmented in the latent space of a stable invertible
//! network, the network is retrained, and the next display is selected.

pub mod alloop;
pub mod augment;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod invnet;
pub mod linalg;
pub mod selection;
pub mod service;

pub use error::{Error, Result};
