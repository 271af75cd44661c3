//! Federated simulation: clients compute episode meta-gradients on their own
//! tasks, the server averages them and takes one descent step per round.
//! Diagnostics estimate the smoothness, noise and heterogeneity constants and
//! compare the observed stationarity against the nonconvex rate bound.

mod client;
mod diagnostics;
mod server;

pub use client::{
    client_round, episodic_clients, ClientState, ClientUpdate, EpisodicClient, FedClient, GradientEstimate,
    QuadraticClient,
};
pub use diagnostics::{
    convergence_report, estimate_assumption_constants, loglog_slope, AssumptionConstants, ConvergenceReport,
};
pub use server::{
    aggregate, global_estimate, id_order, params_hash, participants, run_federated, Checkpoint, FedConfig, FedTrace,
    Participation, RoundRecord,
};
