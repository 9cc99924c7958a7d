//! Truncated gradient flow of the perceptron.
//!
//! The square-loss gradient of `σ(λ)`, `λ = w·x/√D`, expands as
//!
//! ```text
//! τ ẇ_i ∝ −Σ_k E[ λ^k x^i (γ_k − β̃_{k+1} y) ]
//! ```
//!
//! so the order-`k` term only sees input moments of order `k + 1`.
//! Truncating at `K` therefore limits the statistics the dynamics can use.

mod expansion;
mod flow;

pub use expansion::{taylor_coefficients, Activation, ActivationExpansion, MAX_ORDER};
pub use flow::{
    gf_rhs, integrate_gf, integrate_gf_recording, steady_state, GfCheckpoint, GfConfig,
    References, StatsSource, Trajectory, TruncationScheme, DIVERGENCE_NORM, MAX_GF_ORDER,
};
