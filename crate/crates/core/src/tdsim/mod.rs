//! Quasi-static transmission-distribution cosimulation: AC power flow on a
//! meshed grid, feeders behind load buses, contingencies and var support.

mod boundary;
mod cosim;
mod network;
mod powerflow;

pub use boundary::{boundary_iterate, feeder_injection, BoundaryFeeder, BoundaryOptions, BoundaryOutcome, FeederInjection, FeederSetpoint};
pub use cosim::{
    cosimulate, BoundaryDoc, BoundaryRecord, CosimEvent, CosimOptions, CosimResult, EventKind, Scenario, ScenarioDoc, StepRecord, SupportRecord,
    VarRequest,
};
pub use network::{apply_contingency, Branch, Bus, BusType, Generator, TransmissionDoc, TransmissionNetwork};
pub use powerflow::{ac_power_flow, admittance, ExtraLoad, PowerFlowOptions, PowerFlowSolution};
