//! Shared fixtures and random-system generators for the integration
//! suites.

#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use netlab::numkernel::SeededRng;

/// Five-node design example used throughout the suites: a single
/// actuator at node 1, a sensor chain ending at node 5, and the state
/// of node 2 as the target.  The three free diagonal entries select
/// between the design variant (`-1, -3, -3`) and the rank-test
/// fixtures (`a22 ∈ {0, -1}`, `a33 = a44 = 0`).
pub fn five_node_a(a22: f64, a33: f64, a44: f64) -> DMatrix<f64> {
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

/// Design variant of the five-node plant.
pub fn design_a() -> DMatrix<f64> {
    five_node_a(-1.0, -3.0, -3.0)
}

pub fn design_b() -> DMatrix<f64> {
    DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0])
}

/// Measured outputs `y = (x5, x1)`.
pub fn design_c() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 5, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
}

/// Target `z = x2`.
pub fn design_f() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 0.0, 0.0, 0.0])
}

/// Sensing fixture for the rank tests: `y = x5` only.
pub fn sensor_c() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 0.0, 0.0, 1.0])
}

/// Reference feedback gain for the design variant.
pub fn design_k() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 5, &[12.0, -47.0, 0.0, 0.0, 59.0])
}

/// Reference order-1 functional observer realizing `-K x` for the
/// design variant under `y = (x5, x1)`.
pub fn design_observer() -> netlab::observer::FunctionalObserver {
    netlab::observer::FunctionalObserver::new(
        DMatrix::from_row_slice(1, 1, &[-1.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, -47.0]),
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DMatrix::from_row_slice(1, 2, &[-59.0, -12.0]),
        DMatrix::from_row_slice(1, 5, &[0.0, 47.0, 0.0, 0.0, 0.0]),
    )
    .expect("reference observer dims")
}

/// Random matrix with independent `N(0, 1/n)` entries.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let scale = 1.0 / (cols.max(1) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let u: f64 = rng.rng().gen_range(-1.0..1.0);
        let v: f64 = rng.rng().gen_range(-1.0..1.0);
        (u + v) * scale
    })
}

/// Random Hurwitz matrix: a random matrix shifted left of the imaginary
/// axis by its spectral abscissa plus `margin`.
pub fn random_hurwitz(n: usize, margin: f64, rng: &mut SeededRng) -> DMatrix<f64> {
    let m = random_matrix(n, n, rng);
    let abscissa = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|lam| lam.re)
        .fold(f64::MIN, f64::max);
    let mut a = m;
    for i in 0..n {
        a[(i, i)] -= abscissa + margin;
    }
    a
}

/// Random square matrix with orthonormal rows (Q factor of a random
/// matrix).
pub fn random_orthogonal(n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let raw = random_matrix(n, n, rng);
    raw.qr().q()
}

pub fn random_vector(n: usize, rng: &mut SeededRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.rng().gen_range(-1.0..1.0))
}

/// Sort a complex spectrum by (re, im) for order-insensitive
/// comparison.
pub fn sorted_spectrum(eigs: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut v = eigs.to_vec();
    v.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    v
}

/// Largest pairing distance between two equally sized spectra after
/// sorting.
pub fn spectrum_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "spectra have different sizes");
    sorted_spectrum(a)
        .iter()
        .zip(sorted_spectrum(b))
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
