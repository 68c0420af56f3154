//! Conductivity imaging on the unit disk through contracted generalized
//! polarization tensors (CGPTs).
//!
//! The forward chain goes mesh → conductivity field → P1 Neumann solves →
//! Neumann-to-Dirichlet matrix → GPT operator → CGPTs. The inverse side
//! fits a conductivity to target CGPTs by Landweber or Newton iteration.

pub mod boundary_ops;
pub mod cgpt;
pub mod cli;
pub mod error;
pub mod fem;
pub mod forward;
pub mod field;
pub mod inverse;
pub mod io;
pub mod mesh;
pub mod msr;
pub mod sparse;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mesh.md")]
    mod mesh {}
    #[doc = include_str!("../../../book/src/forward.md")]
    mod forward {}
    #[doc = include_str!("../../../book/src/cgpt.md")]
    mod cgpt {}
    #[doc = include_str!("../../../book/src/msr.md")]
    mod msr {}
    #[doc = include_str!("../../../book/src/inverse.md")]
    mod inverse {}
}
