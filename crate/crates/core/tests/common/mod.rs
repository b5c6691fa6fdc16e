//! Reference formulas and criterion checks shared by the integration tests.
#![allow(dead_code)]

pub mod checks;
pub mod oracle;
