//! Joint subcarrier pairing, relay selection, band selection and power
//! allocation for a relay-based multiband (V-band, E-band, LTE) OFDMA HetNet.
//!
//! The pipeline is: a [`model::ScenarioConfig`] describes cells and bands,
//! [`model::sample_topology`] and [`channel::generate_gains`] draw one Monte
//! Carlo drop, and a solver from [`dual_solver`], [`greedy`] or [`baselines`]
//! turns the gains into an [`dual_solver::Allocation`]. [`oracle`] holds
//! brute-force references for tiny instances and [`experiment`] runs seeded
//! sweeps and writes CSV.

pub mod baselines;
pub mod channel;
pub mod dual_solver;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod model;
pub mod oracle;
pub mod rates;

pub use error::{Error, Result};
