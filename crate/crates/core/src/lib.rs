//! Target control and estimation in linear time-invariant networks.
//!
//! The library decides output controllability and functional
//! observability of a triple `(A, B; F)` / `(C, A; F)`, quantifies the
//! duality gap between the two properties through the shared Gramian,
//! computes target control/observation energies, and synthesizes
//! minimum-energy open-loop controls, partial pole-placement feedback,
//! and functional observers assembled into separation-principle closed
//! loops.

pub mod energy;
pub mod error;
pub mod gramian;
pub mod netgen;
pub mod numkernel;
pub mod observer;
pub mod target_control;

pub use error::{Error, Result};
pub use numkernel::ToleranceConfig;

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::DMatrix;

    /// The 5-state worked example used across the unit tests.
    pub fn example_a(a22: f64, a33: f64, a44: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            5,
            5,
            &[
                -1.0, 0.0, 0.0, 0.0, -1.0, //
                -1.0, a22, 0.0, 0.0, 0.0, //
                0.0, 0.0, a33, 0.0, 0.0, //
                0.0, 0.0, 0.0, a44, 0.0, //
                0.0, -1.0, -1.0, -1.0, -1.0,
            ],
        )
    }

    /// y = x5 for the analysis example.
    pub fn example_c() -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 0.0, 0.0, 1.0])
    }

    /// z = x2 for both worked examples.
    pub fn example_f() -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 0.0, 0.0, 0.0])
    }
}
