pub mod assurance;
pub mod authz;
pub mod envelope;
pub mod money;
pub mod netsim;
pub mod reconciler;
pub mod pipeline;
