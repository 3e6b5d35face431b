//! Content delivery stack for mobile learning clients: a content warehouse,
//! a server that plans deliveries, fragmenting and acknowledged transport
//! with offline buffering, a modification/acceptance loop, and a client that
//! reassembles and displays content. [`netsim`] provides a deterministic
//! simulated link for driving all of it under virtual time.

pub mod client;
pub mod frame;
pub mod link;
pub mod modloop;
pub mod netsim;
pub mod server;
pub mod transport;
pub mod types;
pub mod warehouse;
