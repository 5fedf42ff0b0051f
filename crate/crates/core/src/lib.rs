pub mod aglp;
pub mod baselines;
pub mod corpus;
pub mod matcher;
pub mod metrics;
mod partition;
pub mod pipeline;
pub mod robust;
pub mod simmatrix;
pub mod synthkit;

pub use partition::Partition;
