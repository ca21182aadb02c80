//! The `sqa` command line tool and its local HTTP scoring service.

pub mod cli;
pub mod scoring;
pub mod service;
