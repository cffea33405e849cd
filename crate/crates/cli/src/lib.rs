//! Run-directory plumbing behind the `codechain` binary: the config file,
//! the run / gen-tests / convert commands, reports and inspection views.

pub mod config;
pub mod inspect;
pub mod report;
pub mod run;
