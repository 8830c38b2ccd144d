//! Digital twin of a twisted-coiled nylon thermal actuator, and an ensemble
//! of feed-forward networks that drives it open-loop with constant power.
//!
//! The crate is organised along the data flow:
//!
//! * [`plant`] integrates the actuator's power balance and hysteretic strain.
//! * [`excitation`] builds constant-power schedules.
//! * [`pipeline`] turns simulated camera footage into denoised training samples.
//! * [`nn`] is a small dense network with backpropagation and Adam.
//! * [`controller`] trains the bootstrap ensemble and runs control episodes.
//!
//! A guided tour lives in the `book/` directory at the repository root; its
//! code listings are compiled and run as doctests of this crate.

pub mod controller;
pub mod error;
pub mod excitation;
pub mod format;
pub mod kv;
pub mod nn;
pub mod pipeline;
pub mod plant;
pub mod seed;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/twin.md")]
    mod twin {}
    #[doc = include_str!("../../../book/src/excitation.md")]
    mod excitation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
