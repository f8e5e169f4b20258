pub mod costfn;
pub mod error;
pub mod flow_oracle;
pub mod model;
pub mod single_machine;
pub mod unrelated;
pub mod verify;
