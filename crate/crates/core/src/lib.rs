//! Koopman autoencoder toolkit.
//!
//! Learns a finite-dimensional latent representation of a dynamical
//! system — an encoder/decoder pair plus a latent linear evolution
//! matrix — from possibly irregular trajectory data, and uses the
//! trained model as a differentiable dynamical prior for variational
//! data assimilation: forecasting, frequency upsampling, backward
//! prediction and interpolation of masked time series.

pub mod diffcore;
pub mod dynamics;
pub mod koopman;
pub mod training;
pub mod mat;
pub mod matfun;
