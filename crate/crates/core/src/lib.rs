//! User-level differentially private stochastic convex optimization.
//!
//! Building blocks ([`mechanisms`], [`optimizers`], [`smoothing`]) are
//! composed into the phased algorithms in [`algorithms`]; [`problems`]
//! supplies synthetic instances with risk oracles and [`audit`] holds the
//! Monte-Carlo checks of the stability, sensitivity and variance bounds.

pub mod algorithms;
pub mod audit;
pub mod data;
pub mod domain;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod mechanisms;
pub mod optimizers;
pub mod privacy;
pub mod problems;
pub mod rng;
pub mod smoothing;

pub use data::{split_users, UserDataset, UserView};
pub use domain::BallDomain;
pub use error::{Error, Result};
pub use loss::{user_avg_gradient, GradCounter, GradientSource, Loss, Smoothness};
pub use privacy::{ConstantMode, PrivacyParams};
pub use rng::RngStream;
