//! Tools for flicker-based subjective quality studies of coded light fields.
//!
//! The crate covers the whole study lifecycle: building stimulus conditions
//! from codec and view-synthesis adapters ([`pipeline`]), objective metrics
//! ([`metrics`]), triplet generation and session scheduling ([`study`]),
//! the study execution backend ([`service`]), Thurstone Case V scaling of
//! the responses ([`scaling`]) and metric benchmarking ([`bench`]).

pub mod bench;
pub mod cli;
pub(crate) mod dct;
pub mod lightfield;
pub mod metrics;
pub mod pipeline;
pub mod scaling;
pub mod service;
pub mod study;
pub mod synthetic;
