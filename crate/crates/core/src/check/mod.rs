//! Independent reference implementations used to validate the main code
//! paths, both from the test suites and from the `selftest` command.

pub mod grad;
pub mod suites;
pub mod queue_reference;
