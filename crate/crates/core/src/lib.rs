//! Flow-based programming runtime for home seismic sensors: flow documents,
//! the node palette, the message-routing runtime, broker and feed transports,
//! and a scenario simulator.

pub mod domain;
pub mod flow;
pub mod nodes;
pub mod palette;
pub mod runtime;
pub mod simulator;
pub mod transport;
