//! Data-driven genetic algorithm (DDGA) for inverse parameter identification.
//!
//! The pipeline has an offline and an online half:
//!
//! * offline: parametrized snapshot ensembles ([`dataset`], generated by
//!   [`surrogate`]) are compressed by a two-level POD into a [`pod::RomDatabase`];
//! * online: the field for an unseen parameter is predicted by fixed-point
//!   barycentric interpolation of the spatial and temporal coefficient blocks
//!   ([`barycentric`]), and a genetic algorithm ([`ddga`]) searches for the
//!   parameter whose prediction best matches a target field ([`objective`]).

pub mod barycentric;
pub mod dataset;
pub mod ddga;
pub mod error;
pub mod linalg;
pub mod objective;
pub mod pod;
pub mod surrogate;

pub use error::{Error, Result};
