//! Exact rational arithmetic for averages that must agree bit-for-bit no
//! matter in which order they are summed.
//!
//! Every finite `f64` is a dyadic rational, so sums and averages of them are
//! exact in [`BigRational`]. Rounding happens once, at the end, with
//! round-half-to-even.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, ToPrimitive, Zero};

/// Exact value of a finite float.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

/// Nearest `f64` to an exact rational.
pub fn round(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    r.to_f64().unwrap_or(f64::NAN)
}

/// A vector of floats rescaled to integers sharing one power of two:
/// `values[t] = ints[t] * 2^exp` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledVector {
    pub ints: Vec<BigInt>,
    pub exp: i64,
}

impl ScaledVector {
    pub fn new(values: &[f64]) -> Self {
        let parts: Vec<(u64, i64, i8)> = values
            .iter()
            .map(|v| {
                assert!(v.is_finite(), "non-finite value {v}");
                let (m, e, s) = v.integer_decode();
                (m, e as i64, s)
            })
            .collect();
        let exp = parts
            .iter()
            .filter(|(m, _, _)| *m != 0)
            .map(|(_, e, _)| *e)
            .min()
            .unwrap_or(0);
        let ints = parts
            .iter()
            .map(|&(m, e, s)| {
                if m == 0 {
                    return BigInt::zero();
                }
                let v = BigInt::from(m) << ((e - exp) as usize);
                if s < 0 {
                    -v
                } else {
                    v
                }
            })
            .collect();
        ScaledVector { ints, exp }
    }

    pub fn len(&self) -> usize {
        self.ints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ints.is_empty()
    }

    /// `numer * 2^exp / denom` as an exact rational.
    pub fn ratio(&self, numer: BigInt, denom: BigInt) -> BigRational {
        let (n, d) = if self.exp >= 0 {
            (numer << (self.exp as usize), denom)
        } else {
            (numer, denom << ((-self.exp) as usize))
        };
        BigRational::new(n, d)
    }
}

/// Weights stored as integer numerators over one shared denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactWeights {
    pub numer: Vec<BigInt>,
    pub denom: BigInt,
}

impl ExactWeights {
    pub fn to_f64(&self) -> Vec<f64> {
        self.numer
            .iter()
            .map(|n| round(&BigRational::new(n.clone(), self.denom.clone())))
            .collect()
    }

    /// Exact `<w, y>`.
    pub fn dot(&self, y: &ScaledVector) -> BigRational {
        assert_eq!(self.numer.len(), y.len());
        let mut acc = BigInt::zero();
        for (w, v) in self.numer.iter().zip(&y.ints) {
            if !w.is_zero() && !v.is_zero() {
                acc += w * v;
            }
        }
        y.ratio(acc, self.denom.clone())
    }

    pub fn sum(&self) -> BigRational {
        let total: BigInt = self.numer.iter().sum();
        BigRational::new(total, self.denom.clone())
    }
}
