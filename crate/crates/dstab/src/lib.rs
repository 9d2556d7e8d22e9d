//! Documents, reports, parallel drivers and the command line for `dstab-core`.

pub mod cli;
pub mod doc;
pub mod parallel;
pub mod report;
