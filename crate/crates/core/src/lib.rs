//! Exchange fee design with competing market makers: equilibrium quotes,
//! optimal make-take contracts, value-function solvers and Monte Carlo.

pub mod analysis;
pub mod cli;
pub mod firstbest;
pub mod hjb;
pub mod incentives;
pub mod intensity;
pub mod io;
pub mod model;
pub mod nash;
pub mod simulator;
