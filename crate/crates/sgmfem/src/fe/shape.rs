//! Reference-element shape functions: biquadratic Q2, bilinear Q1, the
//! element-local linear pressure frame, and the hierarchical cubic modes
//! used by the higher-order detail space.
//!
//! The reference square is [-1,1]^2. Local Q2 nodes are ordered
//! lattice-style, x fastest: `l = a + 3b` with node coordinates
//! (xi_a, eta_b), xi_0 = -1, xi_1 = 0, xi_2 = 1.

/// 1D quadratic Lagrange values at nodes {-1, 0, 1}.
#[inline]
pub fn lagrange_q2_1d(t: f64) -> [f64; 3] {
    [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)]
}

#[inline]
pub fn lagrange_q2_1d_deriv(t: f64) -> [f64; 3] {
    [t - 0.5, -2.0 * t, t + 0.5]
}

/// Q2 values and reference-coordinate gradients at one point.
pub fn q2_at(xi: f64, eta: f64) -> ([f64; 9], [f64; 9], [f64; 9]) {
    let nx = lagrange_q2_1d(xi);
    let ny = lagrange_q2_1d(eta);
    let dx = lagrange_q2_1d_deriv(xi);
    let dy = lagrange_q2_1d_deriv(eta);
    let mut val = [0.0; 9];
    let mut dxi = [0.0; 9];
    let mut deta = [0.0; 9];
    for b in 0..3 {
        for a in 0..3 {
            let l = a + 3 * b;
            val[l] = nx[a] * ny[b];
            dxi[l] = dx[a] * ny[b];
            deta[l] = nx[a] * dy[b];
        }
    }
    (val, dxi, deta)
}

/// Q1 values at one point; local order `l = a + 2b`, corners at xi,eta = -1,1.
pub fn q1_at(xi: f64, eta: f64) -> [f64; 4] {
    let nx = [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)];
    let ny = [0.5 * (1.0 - eta), 0.5 * (1.0 + eta)];
    [nx[0] * ny[0], nx[1] * ny[0], nx[0] * ny[1], nx[1] * ny[1]]
}

/// Linear hat, quadratic bubble and cubic bubble used by the hierarchical
/// detail modes.
#[inline]
fn l0(t: f64) -> f64 {
    0.5 * (1.0 - t)
}
#[inline]
fn l1(t: f64) -> f64 {
    0.5 * (1.0 + t)
}
#[inline]
fn b2(t: f64) -> f64 {
    1.0 - t * t
}
#[inline]
fn b3(t: f64) -> f64 {
    t * (1.0 - t * t)
}
#[inline]
fn dl0(_t: f64) -> f64 {
    -0.5
}
#[inline]
fn dl1(_t: f64) -> f64 {
    0.5
}
#[inline]
fn db2(t: f64) -> f64 {
    -2.0 * t
}
#[inline]
fn db3(t: f64) -> f64 {
    1.0 - 3.0 * t * t
}

/// Hierarchical cubic detail modes per element: four edge modes (bottom,
/// top, left, right traces are cubic bubbles) followed by three interior
/// modes. Returns values and reference gradients at one point.
pub fn cubic_detail_at(xi: f64, eta: f64) -> ([f64; 7], [f64; 7], [f64; 7]) {
    let val = [
        b3(xi) * l0(eta),
        b3(xi) * l1(eta),
        l0(xi) * b3(eta),
        l1(xi) * b3(eta),
        b3(xi) * b2(eta),
        b2(xi) * b3(eta),
        b3(xi) * b3(eta),
    ];
    let dxi = [
        db3(xi) * l0(eta),
        db3(xi) * l1(eta),
        dl0(xi) * b3(eta),
        dl1(xi) * b3(eta),
        db3(xi) * b2(eta),
        db2(xi) * b3(eta),
        db3(xi) * b3(eta),
    ];
    let deta = [
        b3(xi) * dl0(eta),
        b3(xi) * dl1(eta),
        l0(xi) * db3(eta),
        l1(xi) * db3(eta),
        b3(xi) * db2(eta),
        b2(xi) * db3(eta),
        b3(xi) * db3(eta),
    ];
    (val, dxi, deta)
}

/// Quadratic detail modes for a bilinear pressure space: four edge bubbles
/// and one interior bubble (values only; pressure pairings need no
/// gradients).
pub fn quadratic_detail_at(xi: f64, eta: f64) -> [f64; 5] {
    [
        b2(xi) * l0(eta),
        b2(xi) * l1(eta),
        l0(xi) * b2(eta),
        l1(xi) * b2(eta),
        b2(xi) * b2(eta),
    ]
}

/// Number of cubic detail modes per element: 4 edge + 3 interior.
pub const CUBIC_EDGE_MODES: usize = 4;
pub const CUBIC_INTERIOR_MODES: usize = 3;

pub const QUAD_EDGE_MODES: usize = 4;
pub const QUAD_INTERIOR_MODES: usize = 1;
