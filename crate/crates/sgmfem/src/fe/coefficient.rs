//! Parameter-dependent Young's modulus in affine form
//! `E(x, y) = e_0(x) + sum_k e_k(x) y_k`.

use crate::Error;

/// Affine coefficient expansion with a finite number of terms.
///
/// Two families are supported: a spatially constant two-term field
/// `e_0 + e_1 y_1`, and the cosine expansion
/// `e_m(x) = amp * m^-decay * cos(2 pi b1(m) x1) cos(2 pi b2(m) x2)`
/// whose frequency pairs `(b1, b2)` enumerate the diagonals of N_0^2.
///
/// Uniform ellipticity (`sum_k sup|e_k| < inf e_0`) is verified on a fine
/// sampling grid at construction.
#[derive(Debug, Clone)]
pub enum CoefficientField {
    AffineScalar { e0: f64, e1: f64 },
    CosineExpansion { amp: f64, decay: f64, terms: usize },
}

/// Frequency pair of the m-th cosine term (m >= 1): walks the diagonals
/// of N_0^2 starting at (0,1).
pub fn cosine_frequencies(m: usize) -> (u32, u32) {
    let mi = m as i64;
    let mut k = (-0.5 + (0.25 + 2.0 * m as f64).sqrt()).floor() as i64;
    // guard the exact-diagonal boundaries against floating point error
    while (k + 1) * (k + 2) / 2 <= mi {
        k += 1;
    }
    while k * (k + 1) / 2 > mi {
        k -= 1;
    }
    let b1 = mi - k * (k + 1) / 2;
    let b2 = k - b1;
    debug_assert!(b1 >= 0 && b2 >= 0, "m={m} -> ({b1},{b2})");
    (b1 as u32, b2 as u32)
}

impl CoefficientField {
    /// Spatially constant field `e_0 + e_1 y_1`.
    pub fn affine_scalar(e0: f64, e1: f64) -> Result<Self, Error> {
        let field = Self::AffineScalar { e0, e1 };
        field.check_ellipticity()?;
        Ok(field)
    }

    /// Cosine expansion with `terms >= 1` parameters, amplitude decay
    /// `amp * m^-decay`.
    pub fn cosine(amp: f64, decay: f64, terms: usize) -> Result<Self, Error> {
        assert!(terms >= 1);
        let field = Self::CosineExpansion { amp, decay, terms };
        field.check_ellipticity()?;
        Ok(field)
    }

    /// Number of stochastic terms M (excluding the mean).
    pub fn truncation(&self) -> usize {
        match self {
            Self::AffineScalar { .. } => 1,
            Self::CosineExpansion { terms, .. } => *terms,
        }
    }

    /// Same family with the truncation extended to at least `terms`.
    pub fn with_truncation(&self, terms: usize) -> Result<Self, Error> {
        match self {
            Self::AffineScalar { .. } => Ok(self.clone()),
            Self::CosineExpansion { amp, decay, terms: old } => {
                Self::cosine(*amp, *decay, terms.max(*old))
            }
        }
    }

    /// Evaluate e_m at a point; m = 0 is the mean.
    pub fn evaluate(&self, m: usize, x: f64, y: f64) -> Result<f64, Error> {
        if m > self.truncation() {
            return Err(Error::CoefficientIndexOutOfRange {
                index: m,
                truncation: self.truncation(),
            });
        }
        Ok(self.eval_unchecked(m, x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, m: usize, x: f64, y: f64) -> f64 {
        match self {
            Self::AffineScalar { e0, e1 } => match m {
                0 => *e0,
                1 => *e1,
                _ => 0.0,
            },
            Self::CosineExpansion { amp, decay, .. } => {
                if m == 0 {
                    1.0
                } else {
                    let (b1, b2) = cosine_frequencies(m);
                    let tau = 2.0 * std::f64::consts::PI;
                    amp * (m as f64).powf(-decay)
                        * (tau * b1 as f64 * x).cos()
                        * (tau * b2 as f64 * y).cos()
                }
            }
        }
    }

    /// Checks `sum_k sup|e_k| < inf e_0` by sampling on a 129 x 129 grid
    /// (the grid contains the corners, where the cosine terms peak).
    fn check_ellipticity(&self) -> Result<(), Error> {
        let n = 128usize;
        let mut mean_min = f64::INFINITY;
        let mut perturbation = 0.0;
        for m in 0..=self.truncation() {
            let mut sup = 0.0f64;
            let mut inf = f64::INFINITY;
            for j in 0..=n {
                for i in 0..=n {
                    let v = self.eval_unchecked(m, i as f64 / n as f64, j as f64 / n as f64);
                    sup = sup.max(v.abs());
                    inf = inf.min(v);
                }
            }
            if m == 0 {
                mean_min = inf;
            } else {
                perturbation += sup;
            }
        }
        if !(perturbation < mean_min) || mean_min <= 0.0 {
            return Err(Error::CoefficientNotElliptic { perturbation, mean_min });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Enumerate the diagonal walk directly: diagonal k >= 1 lists pairs
    /// (0,k), (1,k-1), ..., (k,0) in order; (0,0) is the mean term.
    fn frequencies_oracle(m: usize) -> (u32, u32) {
        let mut count = 0usize;
        for k in 1u32.. {
            for b1 in 0..=k {
                count += 1;
                if count == m {
                    return (b1, k - b1);
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn frequency_map_matches_enumeration() {
        for m in 1..=200 {
            assert_eq!(cosine_frequencies(m), frequencies_oracle(m), "m = {m}");
        }
    }

    #[test]
    fn first_term_is_pure_cosine_in_y() {
        // b1(1) = 0, b2(1) = 1, so e_1(x) = amp * cos(2 pi x2)
        let f = CoefficientField::cosine(0.3, 2.0, 4).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.7, 0.9), (0.0, 0.0)] {
            let expect = 0.3 * (2.0 * std::f64::consts::PI * y).cos();
            assert!((f.evaluate(1, x, y).unwrap() - expect).abs() < 1e-15);
        }
        assert_eq!(f.evaluate(0, 0.4, 0.6).unwrap(), 1.0);
    }

    #[test]
    fn affine_scalar_values() {
        let f = CoefficientField::affine_scalar(1.0, 0.1).unwrap();
        assert_eq!(f.evaluate(1, 0.3, 0.9).unwrap(), 0.1);
        assert_eq!(f.evaluate(0, 0.3, 0.9).unwrap(), 1.0);
        assert!(f.evaluate(2, 0.0, 0.0).is_err());
    }

    #[test]
    fn ellipticity_enforced() {
        assert!(CoefficientField::affine_scalar(1.0, 1.0).is_err());
        assert!(CoefficientField::affine_scalar(1.0, 0.99).is_ok());
        // amp >= 1/zeta(2) with many terms approaches failure; a clearly
        // inadmissible amplitude must be rejected
        assert!(CoefficientField::cosine(0.8, 2.0, 20).is_err());
        assert!(CoefficientField::cosine(0.5, 2.0, 20).is_ok());
    }
}
