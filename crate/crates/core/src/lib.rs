pub mod acceptance;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod gaussian_model;
pub mod grid;
pub mod infinitesimal;
pub mod langevin;
pub mod logconcave;
pub mod transport;
