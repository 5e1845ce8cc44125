//! Simulation and Monte-Carlo checks for jump processes driven by
//! history-dependent jump measures. See the book under `book/` for a tour.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod construction;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod history;
pub mod integral;
pub mod io;
pub mod ito;
pub mod marks;
pub mod point_process;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod wakarase;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/point-processes.md")]
    mod point_processes {}
    #[doc = include_str!("../../../book/src/wakarase.md")]
    mod wakarase {}
    #[doc = include_str!("../../../book/src/construction.md")]
    mod construction {}
    #[doc = include_str!("../../../book/src/integrals.md")]
    mod integrals {}
    #[doc = include_str!("../../../book/src/ito.md")]
    mod ito {}
    #[doc = include_str!("../../../book/src/sde.md")]
    mod sde {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
