//! Learning the PC×PQ skyline of DNF blocking schemes for entity resolution
//! under a label budget.

pub mod blocking;
pub mod datamodel;
pub mod index;
pub mod metrics;
pub mod oracle;
pub mod sampling;
pub mod scheme;
pub mod learner;
pub mod synthetic;
pub mod harness;
pub mod report;
