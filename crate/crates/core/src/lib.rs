//! Feeder model, DER aggregation, reactive capability and co-simulation.

pub mod capability;
pub mod device;
pub mod error;
pub mod feeder;
pub mod io;
pub mod tdsim;
